//! Validation index-set generation for six resampling schemes.
//!
//! A scheme splits the indices `{1, ..., n}` of a dataset into validation
//! sets. Fixed variants draw the sets once and share them across all `J`
//! candidate configurations; reshuffled variants redraw them independently
//! for every configuration. Indices are 0-based internally and 1-based in
//! every external format.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six resampling variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "holdout")]
    Holdout,
    #[serde(rename = "reshuffled-holdout")]
    ReshuffledHoldout,
    #[serde(rename = "mfold-cv")]
    MfoldCv,
    #[serde(rename = "reshuffled-mfold-cv")]
    ReshuffledMfoldCv,
    #[serde(rename = "mfold-holdout")]
    MfoldHoldout,
    #[serde(rename = "reshuffled-mfold-holdout")]
    ReshuffledMfoldHoldout,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Holdout,
        Variant::ReshuffledHoldout,
        Variant::MfoldCv,
        Variant::ReshuffledMfoldCv,
        Variant::MfoldHoldout,
        Variant::ReshuffledMfoldHoldout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Holdout => "holdout",
            Variant::ReshuffledHoldout => "reshuffled-holdout",
            Variant::MfoldCv => "mfold-cv",
            Variant::ReshuffledMfoldCv => "reshuffled-mfold-cv",
            Variant::MfoldHoldout => "mfold-holdout",
            Variant::ReshuffledMfoldHoldout => "reshuffled-mfold-holdout",
        }
    }

    /// Whether index sets are redrawn per configuration.
    pub fn is_reshuffled(self) -> bool {
        matches!(
            self,
            Variant::ReshuffledHoldout | Variant::ReshuffledMfoldCv | Variant::ReshuffledMfoldHoldout
        )
    }

    /// Whether folds partition the dataset (CV family).
    pub fn is_cv(self) -> bool {
        matches!(self, Variant::MfoldCv | Variant::ReshuffledMfoldCv)
    }

    /// Whether this is a single train-validation split (M = 1 family).
    pub fn is_single_holdout(self) -> bool {
        matches!(self, Variant::Holdout | Variant::ReshuffledHoldout)
    }

    /// The reshuffled counterpart (identity for reshuffled variants).
    pub fn reshuffled(self) -> Variant {
        match self {
            Variant::Holdout => Variant::ReshuffledHoldout,
            Variant::MfoldCv => Variant::ReshuffledMfoldCv,
            Variant::MfoldHoldout => Variant::ReshuffledMfoldHoldout,
            other => other,
        }
    }

    /// The fixed counterpart (identity for fixed variants).
    pub fn fixed(self) -> Variant {
        match self {
            Variant::ReshuffledHoldout => Variant::Holdout,
            Variant::ReshuffledMfoldCv => Variant::MfoldCv,
            Variant::ReshuffledMfoldHoldout => Variant::MfoldHoldout,
            other => other,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::config(format!(
                    "unknown scheme '{s}'; valid schemes: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Ceiling of `alpha * n`, robust to representation error in `alpha`
/// (e.g. `0.2 * 100` evaluating to `20.000000000000004`).
pub(crate) fn ceil_alpha_n(alpha: f64, n: usize) -> usize {
    let t = alpha * n as f64;
    let r = t.round();
    if (t - r).abs() < 1e-9 * (n as f64).max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

/// A resampling scheme: variant plus the sizes `n`, `alpha`, `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchemeSpec", into = "RawSchemeSpec")]
pub struct SchemeSpec {
    variant: Variant,
    n: usize,
    alpha: f64,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSchemeSpec {
    variant: Variant,
    n: usize,
    alpha: f64,
    #[serde(rename = "M")]
    m: usize,
}

impl TryFrom<RawSchemeSpec> for SchemeSpec {
    type Error = Error;

    fn try_from(raw: RawSchemeSpec) -> Result<Self> {
        SchemeSpec::new(raw.variant, raw.n, raw.alpha, raw.m)
    }
}

impl From<SchemeSpec> for RawSchemeSpec {
    fn from(spec: SchemeSpec) -> Self {
        RawSchemeSpec {
            variant: spec.variant,
            n: spec.n,
            alpha: spec.alpha,
            m: spec.m,
        }
    }
}

impl SchemeSpec {
    /// Validate and build a scheme. Holdout variants require `m == 1`;
    /// CV variants require `alpha == 1/m` (use [`SchemeSpec::cv`] to have
    /// it computed) and `n >= m`.
    pub fn new(variant: Variant, n: usize, alpha: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("M must be a positive integer"));
        }
        if variant.is_single_holdout() && m != 1 {
            return Err(Error::config(format!(
                "holdout variants require M = 1, got M = {m}"
            )));
        }
        if variant.is_cv() {
            if m < 2 {
                return Err(Error::config("cv variants require M >= 2"));
            }
            if (alpha * m as f64 - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "cv variants require alpha = 1/M, got alpha = {alpha} with M = {m}"
                )));
            }
            if n < m {
                return Err(Error::config(format!(
                    "cv variants require n >= M, got n = {n}, M = {m}"
                )));
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let k = ceil_alpha_n(alpha, n);
        if k < 1 {
            return Err(Error::config(format!(
                "ceil(alpha*n) must be >= 1, got {k} for alpha = {alpha}, n = {n}"
            )));
        }
        if k >= n {
            return Err(Error::config(format!(
                "ceil(alpha*n) must be < n, got {k} for alpha = {alpha}, n = {n}"
            )));
        }
        Ok(SchemeSpec { variant, n, alpha, m })
    }

    /// Build a CV scheme with `alpha = 1/m`.
    pub fn cv(variant: Variant, n: usize, m: usize) -> Result<Self> {
        if !variant.is_cv() {
            return Err(Error::config(format!(
                "SchemeSpec::cv requires a cv variant, got {variant}"
            )));
        }
        if m == 0 {
            return Err(Error::config("M must be a positive integer"));
        }
        SchemeSpec::new(variant, n, 1.0 / m as f64, m)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Fold count M.
    pub fn folds(&self) -> usize {
        self.m
    }

    /// Validation-set size `ceil(alpha * n)`. For CV variants this is the
    /// largest fold size.
    pub fn validation_size(&self) -> usize {
        ceil_alpha_n(self.alpha, self.n)
    }

    /// Per-fold validation sizes. CV folds differ by at most one and sum
    /// to `n`, with the remainder going to the first `n mod M` folds.
    pub fn fold_sizes(&self) -> Vec<usize> {
        if self.variant.is_cv() {
            let base = self.n / self.m;
            let rem = self.n % self.m;
            (0..self.m)
                .map(|m| if m < rem { base + 1 } else { base })
                .collect()
        } else {
            vec![self.validation_size(); self.m]
        }
    }

    /// The same scheme with the other reshuffling status.
    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        SchemeSpec::new(variant, self.n, self.alpha, self.m)
    }
}

/// Per-configuration, per-fold validation index sets (0-based, sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexAssignment {
    scheme: SchemeSpec,
    sets: Vec<Vec<Vec<usize>>>,
}

impl IndexAssignment {
    pub fn scheme(&self) -> &SchemeSpec {
        &self.scheme
    }

    /// Number of configurations J.
    pub fn configs(&self) -> usize {
        self.sets.len()
    }

    /// Validation set of fold `m` for configuration `j` (0-based indices).
    pub fn validation_set(&self, j: usize, m: usize) -> &[usize] {
        &self.sets[j][m]
    }

    pub fn folds_of(&self, j: usize) -> &[Vec<usize>] {
        &self.sets[j]
    }

    /// Check the type invariants: set sizes, CV partition property, and
    /// identical sets across configurations for fixed variants.
    pub fn validate(&self) -> Result<()> {
        let spec = &self.scheme;
        let sizes = spec.fold_sizes();
        for (j, folds) in self.sets.iter().enumerate() {
            if folds.len() != spec.folds() {
                return Err(Error::config(format!(
                    "configuration {j} has {} folds, expected {}",
                    folds.len(),
                    spec.folds()
                )));
            }
            if spec.variant().is_cv() {
                let mut seen = vec![false; spec.n()];
                let mut total = 0usize;
                for fold in folds {
                    for &s in fold {
                        if s >= spec.n() || seen[s] {
                            return Err(Error::config(format!(
                                "configuration {j} is not a partition of 1..={}",
                                spec.n()
                            )));
                        }
                        seen[s] = true;
                    }
                    total += fold.len();
                }
                if total != spec.n() {
                    return Err(Error::config(format!(
                        "configuration {j} covers {total} indices, expected {}",
                        spec.n()
                    )));
                }
                let mut lens: Vec<usize> = folds.iter().map(|f| f.len()).collect();
                lens.sort_unstable();
                let mut expect = sizes.clone();
                expect.sort_unstable();
                if lens != expect {
                    return Err(Error::config(format!(
                        "configuration {j} fold sizes {lens:?} differ from expected {expect:?}"
                    )));
                }
            } else {
                for (m, fold) in folds.iter().enumerate() {
                    if fold.len() != sizes[m] {
                        return Err(Error::config(format!(
                            "configuration {j} fold {m} has size {}, expected {}",
                            fold.len(),
                            sizes[m]
                        )));
                    }
                    if fold.iter().any(|&s| s >= spec.n()) {
                        return Err(Error::config(format!(
                            "configuration {j} fold {m} contains an index >= n"
                        )));
                    }
                }
            }
        }
        if !spec.variant().is_reshuffled() {
            for j in 1..self.sets.len() {
                if self.sets[j] != self.sets[0] {
                    return Err(Error::config(format!(
                        "fixed variant has differing sets at configuration {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Export `(j, m, s)` membership triples as CSV, 1-based.
    pub fn write_membership_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "j,m,s")?;
        for (j, folds) in self.sets.iter().enumerate() {
            for (m, fold) in folds.iter().enumerate() {
                for &s in fold {
                    writeln!(w, "{},{},{}", j + 1, m + 1, s + 1)?;
                }
            }
        }
        Ok(())
    }
}

/// Draw a uniform size-`k` subset of `{0, ..., n-1}`, sorted.
fn uniform_subset(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut set = rand::seq::index::sample(rng, n, k).into_vec();
    set.sort_unstable();
    set
}

/// Draw a uniform partition of `{0, ..., n-1}` into `m` folds whose sizes
/// differ by at most one; the remainder goes to the first `n mod m` folds.
fn uniform_partition(n: usize, m: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let base = n / m;
    let rem = n % m;
    let mut folds = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let size = if i < rem { base + 1 } else { base };
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    folds
}

/// Generate validation index sets for `configs` candidate configurations.
///
/// Fixed variants draw their sets once and share them across all
/// configurations; reshuffled variants draw independently per
/// configuration. Both draw from the same marginal distribution.
pub fn generate(spec: &SchemeSpec, configs: usize, rng: &mut impl Rng) -> Result<IndexAssignment> {
    if configs == 0 {
        return Err(Error::config("J must be >= 1"));
    }
    let n = spec.n();
    let k = spec.validation_size();
    let m = spec.folds();
    let sets = match spec.variant() {
        Variant::Holdout => {
            let shared = vec![uniform_subset(n, k, rng)];
            vec![shared; configs]
        }
        Variant::ReshuffledHoldout => (0..configs)
            .map(|_| vec![uniform_subset(n, k, rng)])
            .collect(),
        Variant::MfoldCv => {
            let shared = uniform_partition(n, m, rng);
            vec![shared; configs]
        }
        Variant::ReshuffledMfoldCv => (0..configs).map(|_| uniform_partition(n, m, rng)).collect(),
        Variant::MfoldHoldout => {
            let shared: Vec<Vec<usize>> = (0..m).map(|_| uniform_subset(n, k, rng)).collect();
            vec![shared; configs]
        }
        Variant::ReshuffledMfoldHoldout => (0..configs)
            .map(|_| (0..m).map(|_| uniform_subset(n, k, rng)).collect())
            .collect(),
    };
    Ok(IndexAssignment {
        scheme: *spec,
        sets,
    })
}

/// Dense 0/1 membership tensor indexed `(j, m, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipMatrix {
    configs: usize,
    folds: usize,
    n: usize,
    data: Vec<u8>,
}

impl MembershipMatrix {
    pub fn configs(&self) -> usize {
        self.configs
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry for configuration `j`, fold `m`, index `s` (all 0-based).
    pub fn contains(&self, j: usize, m: usize, s: usize) -> bool {
        self.data[(j * self.folds + m) * self.n + s] == 1
    }

    /// Row sum over `s` for one fold; equals the fold size.
    pub fn fold_sum(&self, j: usize, m: usize) -> usize {
        let start = (j * self.folds + m) * self.n;
        self.data[start..start + self.n]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }

    /// Sum over `(m, s)` for one configuration.
    pub fn config_sum(&self, j: usize) -> usize {
        (0..self.folds).map(|m| self.fold_sum(j, m)).sum()
    }
}

/// Expand an assignment into its dense membership tensor.
pub fn membership_matrix(assignment: &IndexAssignment) -> MembershipMatrix {
    let configs = assignment.configs();
    let folds = assignment.scheme().folds();
    let n = assignment.scheme().n();
    let mut data = vec![0u8; configs * folds * n];
    for j in 0..configs {
        for m in 0..folds {
            for &s in assignment.validation_set(j, m) {
                data[(j * folds + m) * n + s] = 1;
            }
        }
    }
    MembershipMatrix {
        configs,
        folds,
        n,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root;

    fn spec(variant: Variant, n: usize, alpha: f64, m: usize) -> SchemeSpec {
        SchemeSpec::new(variant, n, alpha, m).unwrap()
    }

    #[test]
    fn holdout_sets_are_identical_across_configs() {
        let spec = spec(Variant::Holdout, 10, 0.5, 1);
        let mut rng = root(1);
        let a = generate(&spec, 3, &mut rng).unwrap();
        a.validate().unwrap();
        assert_eq!(a.configs(), 3);
        for j in 0..3 {
            assert_eq!(a.validation_set(j, 0).len(), 5);
            assert_eq!(a.validation_set(j, 0), a.validation_set(0, 0));
        }
    }

    #[test]
    fn cv_folds_partition_and_repeat_across_configs() {
        let spec = SchemeSpec::cv(Variant::MfoldCv, 10, 5).unwrap();
        let mut rng = root(2);
        let a = generate(&spec, 2, &mut rng).unwrap();
        a.validate().unwrap();
        for j in 0..2 {
            let mut all: Vec<usize> = Vec::new();
            for m in 0..5 {
                assert_eq!(a.validation_set(j, m).len(), 2);
                all.extend_from_slice(a.validation_set(j, m));
            }
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(a.folds_of(0), a.folds_of(1));
    }

    #[test]
    fn reshuffled_holdout_pairwise_intersection_matches_alpha_squared() {
        // Pr(s in I_i ∩ I_j) = alpha^2 for i != j: the oracle is membership
        // probability k/n = alpha per draw, independent across configs.
        let spec = spec(Variant::ReshuffledHoldout, 10, 0.5, 1);
        let mut rng = root(3);
        let a = generate(&spec, 10_000, &mut rng).unwrap();
        let pairs = 5_000;
        let mut xs = Vec::with_capacity(pairs);
        for t in 0..pairs {
            let i = 2 * t;
            let j = 2 * t + 1;
            let si = a.validation_set(i, 0);
            let sj = a.validation_set(j, 0);
            let mut inter = 0usize;
            let (mut p, mut q) = (0usize, 0usize);
            while p < si.len() && q < sj.len() {
                match si[p].cmp(&sj[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        inter += 1;
                        p += 1;
                        q += 1;
                    }
                }
            }
            xs.push(inter as f64 / 10.0);
        }
        let mean: f64 = xs.iter().sum::<f64>() / pairs as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pairs as f64 - 1.0);
        let se = (var / pairs as f64).sqrt();
        assert!(
            (mean - 0.25).abs() <= 3.0 * se,
            "mean {mean} deviates from 0.25 by more than 3 se = {se}"
        );
    }

    #[test]
    fn membership_matrix_rows() {
        let spec = spec(Variant::Holdout, 4, 0.5, 1);
        let mut rng = root(4);
        let a = generate(&spec, 1, &mut rng).unwrap();
        let mm = membership_matrix(&a);
        assert_eq!(mm.fold_sum(0, 0), 2);
        let count = (0..4).filter(|&s| mm.contains(0, 0, s)).count();
        assert_eq!(count, 2);

        let cv = SchemeSpec::cv(Variant::MfoldCv, 4, 2).unwrap();
        let a = generate(&cv, 1, &mut rng).unwrap();
        let mm = membership_matrix(&a);
        assert_eq!(mm.fold_sum(0, 0), 2);
        assert_eq!(mm.fold_sum(0, 1), 2);
        assert_eq!(mm.config_sum(0), 4);
    }

    #[test]
    fn invalid_specs_name_the_constraint() {
        // ceil(alpha * n) >= 1 holds for any alpha > 0, so the binding
        // constraint is k < n: 0.999 of 2 gives k = n.
        let err = SchemeSpec::new(Variant::Holdout, 2, 0.999, 1).unwrap_err();
        assert!(err.to_string().contains("< n"), "{err}");
        let err = SchemeSpec::new(Variant::Holdout, 10, 0.0, 1).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
        let err = SchemeSpec::new(Variant::Holdout, 10, 1.0, 1).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
        let err = SchemeSpec::new(Variant::Holdout, 10, 0.5, 3).unwrap_err();
        assert!(err.to_string().contains("M = 1"), "{err}");
        let err = SchemeSpec::new(Variant::MfoldCv, 10, 0.3, 5).unwrap_err();
        assert!(err.to_string().contains("alpha = 1/M"), "{err}");
        let err = SchemeSpec::cv(Variant::MfoldCv, 3, 5).unwrap_err();
        assert!(err.to_string().contains("n >= M"), "{err}");
    }

    #[test]
    fn ceil_alpha_n_is_robust_to_float_error() {
        assert_eq!(ceil_alpha_n(0.2, 100), 20);
        assert_eq!(ceil_alpha_n(0.5, 10), 5);
        assert_eq!(ceil_alpha_n(0.3, 10), 3);
        assert_eq!(ceil_alpha_n(0.25, 10), 3); // 2.5 -> 3
        assert_eq!(ceil_alpha_n(0.1, 35), 4); // 3.5 -> 4
    }

    #[test]
    fn scheme_spec_json_round_trip() {
        let spec = spec(Variant::ReshuffledHoldout, 100, 0.2, 1);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"variant\":\"reshuffled-holdout\""));
        assert!(json.contains("\"M\":1"));
        let back: SchemeSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        // Deserialization re-validates.
        let bad = r#"{"variant":"holdout","n":10,"alpha":0.5,"M":3}"#;
        assert!(serde_json::from_str::<SchemeSpec>(bad).is_err());
    }

    #[test]
    fn membership_csv_is_one_based() {
        let spec = spec(Variant::Holdout, 4, 0.5, 1);
        let mut rng = root(5);
        let a = generate(&spec, 2, &mut rng).unwrap();
        let mut out = Vec::new();
        a.write_membership_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("j,m,s"));
        for line in lines {
            let parts: Vec<usize> = line.split(',').map(|p| p.parse().unwrap()).collect();
            assert!(parts[0] >= 1 && parts[0] <= 2);
            assert_eq!(parts[1], 1);
            assert!(parts[2] >= 1 && parts[2] <= 4);
        }
    }
}
