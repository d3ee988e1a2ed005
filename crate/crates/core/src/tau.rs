//! Limiting covariance parameters of the validation-loss surface.
//!
//! For each resampling scheme the scaled loss deviations converge to a
//! Gaussian vector whose covariance is `tau_{i,j,M} * K(lambda_i, lambda_j)`
//! with
//!
//! ```text
//! tau_{i,j,M} = (1 / (n M^2 alpha^2)) * sum_s sum_m sum_m' Pr(s in I_{m,i} ∩ I_{m',j})
//! ```
//!
//! and `tau_{i,j,M} = sigma^2` on the diagonal, `tau^2 sigma^2` off it.
//! This module evaluates the parameters three ways: closed form, exact
//! enumeration of the membership probabilities, and Monte Carlo over
//! regenerated index sets.
//!
//! As a documented special case, independent bootstraps per configuration
//! behave like reshuffled n-fold holdout with `alpha = 1/n`, giving
//! `sigma^2 ≈ 2` and `tau^2 ≈ 1/2`; no bootstrap generator is provided.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::splits::{generate, SchemeSpec, Variant};

const TAG_TAU: u64 = 0x7461;
const BATCH: usize = 4096;

/// Method-dependent parameters of the limiting covariance: diagonal
/// inflation `sigma2` and off-diagonal attenuation `tau2`.
///
/// Closed-form values always satisfy `sigma2 >= 1` and `0 < tau2 <= 1`;
/// Monte-Carlo estimates may undershoot `sigma2 = 1` by sampling noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceParams {
    pub sigma2: f64,
    pub tau2: f64,
}

/// Closed-form `(sigma^2, tau^2)` per scheme:
///
/// | scheme                   | sigma^2                | tau^2                      |
/// |--------------------------|------------------------|----------------------------|
/// | holdout                  | `1/alpha`              | `1`                        |
/// | reshuffled holdout       | `1/alpha`              | `alpha`                    |
/// | M-fold CV                | `1`                    | `1`                        |
/// | reshuffled M-fold CV     | `1`                    | `1`                        |
/// | M-fold holdout           | `1 + (1-alpha)/(M alpha)` | `1`                     |
/// | reshuffled M-fold holdout| `1 + (1-alpha)/(M alpha)` | `1 / sigma^2`           |
pub fn closed_form(spec: &SchemeSpec) -> CovarianceParams {
    let alpha = spec.alpha();
    let m = spec.folds() as f64;
    match spec.variant() {
        Variant::Holdout => CovarianceParams {
            sigma2: 1.0 / alpha,
            tau2: 1.0,
        },
        Variant::ReshuffledHoldout => CovarianceParams {
            sigma2: 1.0 / alpha,
            tau2: alpha,
        },
        Variant::MfoldCv | Variant::ReshuffledMfoldCv => CovarianceParams {
            sigma2: 1.0,
            tau2: 1.0,
        },
        Variant::MfoldHoldout => CovarianceParams {
            sigma2: 1.0 + (1.0 - alpha) / (m * alpha),
            tau2: 1.0,
        },
        Variant::ReshuffledMfoldHoldout => {
            let sigma2 = 1.0 + (1.0 - alpha) / (m * alpha);
            CovarianceParams {
                sigma2,
                tau2: 1.0 / sigma2,
            }
        }
    }
}

/// Which configuration pair a tau value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// `i = j` (diagonal entry).
    Same,
    /// `i != j` (off-diagonal entry).
    Distinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TauMethod {
    #[serde(rename = "closed-form")]
    ClosedForm,
    #[serde(rename = "exact-enumeration")]
    ExactEnumeration,
    #[serde(rename = "monte-carlo")]
    MonteCarlo,
}

/// Estimates of the diagonal and off-diagonal tau parameters.
///
/// `standard_error` refers to the pair requested from the estimator;
/// closed-form and exact values carry zero. A Monte-Carlo standard error
/// can also be zero when the counting statistic is deterministic (e.g.
/// the diagonal of any single-holdout scheme).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    pub diag: f64,
    pub offdiag: f64,
    pub standard_error: f64,
    pub method: TauMethod,
}

impl TauEstimate {
    pub fn value(&self, pair: PairKind) -> f64 {
        match pair {
            PairKind::Same => self.diag,
            PairKind::Distinct => self.offdiag,
        }
    }
}

/// Closed-form tau parameters repackaged as a [`TauEstimate`].
pub fn closed_form_estimate(spec: &SchemeSpec) -> TauEstimate {
    let params = closed_form(spec);
    TauEstimate {
        diag: params.sigma2,
        offdiag: params.sigma2 * params.tau2,
        standard_error: 0.0,
        method: TauMethod::ClosedForm,
    }
}

/// Exact finite-n evaluation of the tau sum from per-index membership
/// probabilities. Uses the actual set sizes (`k = ceil(alpha n)`, fold
/// sizes from the partition rule), so with non-integral `alpha * n` it
/// differs from the closed form by O(1/n).
pub fn exact_tau(spec: &SchemeSpec) -> TauEstimate {
    let n = spec.n() as f64;
    let alpha = spec.alpha();
    let m_count = spec.folds();
    let m = m_count as f64;
    let denom = m * m * alpha * alpha;
    let p = spec.validation_size() as f64 / n; // single-set membership prob
    let fold_probs: Vec<f64> = spec
        .fold_sizes()
        .iter()
        .map(|&k| k as f64 / n)
        .collect();

    // sum over (m, m') of Pr(s in I_{m,i} ∩ I_{m',j}), constant in s.
    let (sum_same, sum_distinct) = match spec.variant() {
        Variant::Holdout => (p, p),
        Variant::ReshuffledHoldout => (p, p * p),
        Variant::MfoldCv => {
            let s: f64 = fold_probs.iter().sum();
            (s, s)
        }
        Variant::ReshuffledMfoldCv => {
            let s: f64 = fold_probs.iter().sum();
            // Independent partitions: every (m, m') pair contributes
            // p_m * p_m', so the distinct-pair sum is (sum_m p_m)^2.
            (s, s * s)
        }
        Variant::MfoldHoldout => {
            let s = m * p + m * (m - 1.0) * p * p;
            (s, s)
        }
        Variant::ReshuffledMfoldHoldout => {
            let same = m * p + m * (m - 1.0) * p * p;
            let distinct = m * m * p * p;
            (same, distinct)
        }
    };
    TauEstimate {
        diag: sum_same / denom,
        offdiag: sum_distinct / denom,
        standard_error: 0.0,
        method: TauMethod::ExactEnumeration,
    }
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    sumsq: f64,
    count: u64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
        self.count += 1;
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.count += other.count;
        self
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

fn set_bits(words: &mut [u64], set: &[usize]) {
    for w in words.iter_mut() {
        *w = 0;
    }
    for &s in set {
        words[s / 64] |= 1u64 << (s % 64);
    }
}

fn intersection_count(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

fn mc_accumulate(spec: &SchemeSpec, draws: usize, seed: u64) -> Result<(Accumulator, Accumulator)> {
    if draws == 0 {
        return Err(Error::estimation("draws must be >= 1"));
    }
    let n = spec.n();
    let m_count = spec.folds();
    let denom = n as f64 * (m_count as f64 * spec.alpha()).powi(2);
    let words = n.div_ceil(64);
    let batches = draws.div_ceil(BATCH);

    let partials: Vec<(Accumulator, Accumulator)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[TAG_TAU, b as u64]);
            let batch_draws = BATCH.min(draws - b * BATCH);
            let mut bits_i = vec![0u64; m_count * words];
            let mut bits_j = vec![0u64; m_count * words];
            let mut acc_same = Accumulator::default();
            let mut acc_distinct = Accumulator::default();
            for _ in 0..batch_draws {
                let assignment =
                    generate(spec, 2, &mut rng).expect("validated spec generates");
                for m in 0..m_count {
                    set_bits(
                        &mut bits_i[m * words..(m + 1) * words],
                        assignment.validation_set(0, m),
                    );
                    set_bits(
                        &mut bits_j[m * words..(m + 1) * words],
                        assignment.validation_set(1, m),
                    );
                }
                let mut same = 0u64;
                let mut distinct = 0u64;
                for m in 0..m_count {
                    let a = &bits_i[m * words..(m + 1) * words];
                    for mp in 0..m_count {
                        let b_same = &bits_i[mp * words..(mp + 1) * words];
                        let b_dist = &bits_j[mp * words..(mp + 1) * words];
                        same += intersection_count(a, b_same) as u64;
                        distinct += intersection_count(a, b_dist) as u64;
                    }
                }
                acc_same.push(same as f64 / denom);
                acc_distinct.push(distinct as f64 / denom);
            }
            (acc_same, acc_distinct)
        })
        .collect();

    let folded = partials.into_iter().fold(
        (Accumulator::default(), Accumulator::default()),
        |(s, d), (ps, pd)| (s.merge(ps), d.merge(pd)),
    );
    Ok(folded)
}

/// Monte-Carlo estimate of the tau parameters over `draws` independent
/// regenerations of the index sets.
///
/// Each draw regenerates the sets of two configurations with the actual
/// generator (for fixed variants the shared sets are redrawn per draw, so
/// the probability is over the scheme's own randomness) and evaluates
///
/// ```text
/// X = (1 / (n M^2 alpha^2)) * sum_s sum_m sum_m' 1{s in I_{m,i} ∩ I_{m',j}}
/// ```
///
/// for the same pair `(i, i)` and the distinct pair `(i, j)`. Batches run
/// in parallel on per-batch substreams and are reduced in a fixed order,
/// so results are independent of thread count. `standard_error` is the
/// one of the pair selected by `pair`.
pub fn estimate_tau(
    spec: &SchemeSpec,
    pair: PairKind,
    draws: usize,
    seed: u64,
) -> Result<TauEstimate> {
    let (acc_same, acc_distinct) = mc_accumulate(spec, draws, seed)?;
    let standard_error = match pair {
        PairKind::Same => acc_same.stderr(),
        PairKind::Distinct => acc_distinct.stderr(),
    };
    Ok(TauEstimate {
        diag: acc_same.mean(),
        offdiag: acc_distinct.mean(),
        standard_error,
        method: TauMethod::MonteCarlo,
    })
}

/// `(sigma^2, tau^2)` recovered from estimated diagonal and off-diagonal
/// tau values plus a warning flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaTau {
    pub params: CovarianceParams,
    /// Raised when the raw ratio falls outside `(0, 1]` by more than
    /// three standard errors; the ratio is clamped either way.
    pub clamped_beyond_noise: bool,
}

/// Recover `(sigma^2, tau^2)` from tau estimates: `sigma^2 = diag`,
/// `tau^2 = offdiag / diag` clamped to `(0, 1]`. `ratio_stderr` is the
/// standard error of the ratio used for the warning flag.
pub fn sigma_tau_from_estimates(diag: f64, offdiag: f64, ratio_stderr: f64) -> Result<SigmaTau> {
    if !(diag > 0.0) {
        return Err(Error::estimation(format!(
            "diagonal tau estimate must be positive, got {diag}"
        )));
    }
    let raw = offdiag / diag;
    let clamped_beyond_noise =
        raw > 1.0 + 3.0 * ratio_stderr || raw < -3.0 * ratio_stderr;
    let tau2 = raw.clamp(f64::MIN_POSITIVE, 1.0);
    Ok(SigmaTau {
        params: CovarianceParams { sigma2: diag, tau2 },
        clamped_beyond_noise,
    })
}

/// CLI-facing result combining closed-form and Monte-Carlo values.
#[derive(Debug, Clone, Serialize)]
pub struct TauReport {
    pub scheme: String,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma2: f64,
    pub tau2: f64,
    pub sigma2_mc: f64,
    pub tau2_mc: f64,
    /// Delta-method standard error of `tau2_mc`.
    pub stderr: f64,
    pub draws: usize,
}

/// Run the Monte-Carlo estimator and package it against the closed form.
pub fn tau_report(spec: &SchemeSpec, draws: usize, seed: u64) -> Result<TauReport> {
    let closed = closed_form(spec);
    let (acc_same, acc_distinct) = mc_accumulate(spec, draws, seed)?;
    let (diag, se_diag) = (acc_same.mean(), acc_same.stderr());
    let (offdiag, se_off) = (acc_distinct.mean(), acc_distinct.stderr());
    let stderr = if diag > 0.0 {
        (se_off * se_off / (diag * diag)
            + offdiag * offdiag * se_diag * se_diag / diag.powi(4))
        .sqrt()
    } else {
        f64::NAN
    };
    let recovered = sigma_tau_from_estimates(diag, offdiag, stderr)?;
    Ok(TauReport {
        scheme: spec.variant().name().to_string(),
        n: spec.n(),
        alpha: spec.alpha(),
        m: spec.folds(),
        sigma2: closed.sigma2,
        tau2: closed.tau2,
        sigma2_mc: recovered.params.sigma2,
        tau2_mc: recovered.params.tau2,
        stderr,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variant: Variant, n: usize, alpha: f64, m: usize) -> SchemeSpec {
        SchemeSpec::new(variant, n, alpha, m).unwrap()
    }

    #[test]
    fn closed_form_matches_reference_rows() {
        let p = closed_form(&spec(Variant::Holdout, 100, 0.2, 1));
        assert_eq!(p.sigma2, 5.0);
        assert_eq!(p.tau2, 1.0);

        let p = closed_form(&spec(Variant::ReshuffledHoldout, 100, 0.2, 1));
        assert_eq!(p.sigma2, 5.0);
        assert_eq!(p.tau2, 0.2);

        let p = closed_form(&spec(Variant::ReshuffledMfoldHoldout, 100, 0.2, 5));
        assert!((p.sigma2 - 1.8).abs() < 1e-12);
        assert!((p.tau2 - 1.0 / 1.8).abs() < 1e-12);
        assert!((p.tau2 - 0.5556).abs() < 1e-4);
    }

    #[test]
    fn exact_enumeration_matches_closed_form_when_alpha_n_integral() {
        for variant in Variant::ALL {
            let (alpha, m) = if variant.is_cv() { (0.2, 5) } else { (0.2, if variant.is_single_holdout() { 1 } else { 5 }) };
            let s = spec(variant, 100, alpha, m);
            let exact = exact_tau(&s);
            let closed = closed_form_estimate(&s);
            assert!(
                (exact.diag - closed.diag).abs() < 1e-9,
                "{variant}: diag {} vs {}",
                exact.diag,
                closed.diag
            );
            assert!(
                (exact.offdiag - closed.offdiag).abs() < 1e-9,
                "{variant}: offdiag {} vs {}",
                exact.offdiag,
                closed.offdiag
            );
        }
    }

    #[test]
    fn reshuffled_holdout_mc_diag_is_exact() {
        // sum_s 1{s in I} = k deterministically, so the statistic equals
        // k/(n alpha^2) = 2.0 on every draw.
        let s = spec(Variant::ReshuffledHoldout, 10, 0.5, 1);
        let est = estimate_tau(&s, PairKind::Same, 2_000, 11).unwrap();
        assert!((est.diag - 2.0).abs() < 1e-12, "diag {}", est.diag);
        assert_eq!(est.standard_error, 0.0);
    }

    #[test]
    fn reshuffled_holdout_mc_offdiag_near_one() {
        let s = spec(Variant::ReshuffledHoldout, 10, 0.5, 1);
        let est = estimate_tau(&s, PairKind::Distinct, 20_000, 12).unwrap();
        assert!(est.standard_error > 0.0);
        assert!(
            (est.offdiag - 1.0).abs() <= 3.0 * est.standard_error,
            "offdiag {} se {}",
            est.offdiag,
            est.standard_error
        );
    }

    #[test]
    fn cv_distinct_pair_is_exactly_one() {
        // Only m = m' survives for a shared partition, each fold
        // contributing 1/M to the double sum.
        let s = SchemeSpec::cv(Variant::MfoldCv, 25, 5).unwrap();
        let est = estimate_tau(&s, PairKind::Distinct, 500, 13).unwrap();
        assert!((est.offdiag - 1.0).abs() < 1e-12);
        assert_eq!(est.standard_error, 0.0);
    }

    #[test]
    fn mfold_holdout_same_pair_has_positive_stderr() {
        let s = spec(Variant::MfoldHoldout, 20, 0.2, 5);
        let est = estimate_tau(&s, PairKind::Same, 5_000, 14).unwrap();
        assert!(est.standard_error > 0.0);
    }

    #[test]
    fn sigma_tau_recovery() {
        let r = sigma_tau_from_estimates(5.0, 1.0, 0.0).unwrap();
        assert_eq!(r.params.sigma2, 5.0);
        assert_eq!(r.params.tau2, 0.2);
        assert!(!r.clamped_beyond_noise);

        let r = sigma_tau_from_estimates(1.0, 1.0, 0.0).unwrap();
        assert_eq!(r.params.tau2, 1.0);

        let r = sigma_tau_from_estimates(1.8, 1.0, 0.0).unwrap();
        assert!((r.params.tau2 - 0.5556).abs() < 1e-4);

        // Slight overshoot within noise clamps silently.
        let r = sigma_tau_from_estimates(1.0, 1.001, 0.01).unwrap();
        assert_eq!(r.params.tau2, 1.0);
        assert!(!r.clamped_beyond_noise);

        // Overshoot beyond three standard errors raises the flag.
        let r = sigma_tau_from_estimates(1.0, 1.2, 0.01).unwrap();
        assert_eq!(r.params.tau2, 1.0);
        assert!(r.clamped_beyond_noise);

        assert!(sigma_tau_from_estimates(0.0, 1.0, 0.0).is_err());
        assert!(sigma_tau_from_estimates(-2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reshuffled_mfold_holdout_tau2_increases_to_one_in_m() {
        let mut last = 0.0;
        for m in 1..=50 {
            let s = if m == 1 {
                spec(Variant::ReshuffledHoldout, 1000, 0.2, 1)
            } else {
                spec(Variant::ReshuffledMfoldHoldout, 1000, 0.2, m)
            };
            let tau2 = closed_form(&s).tau2;
            assert!(tau2 > last, "tau2 not increasing at M = {m}");
            assert!(tau2 <= 1.0);
            last = tau2;
        }
        assert!(last > 0.9, "tau2 at M = 50 should approach 1, got {last}");
    }

    #[test]
    fn sigma2_identical_between_fixed_and_reshuffled() {
        for (fixed, resh, alpha, m) in [
            (Variant::Holdout, Variant::ReshuffledHoldout, 0.2, 1),
            (Variant::MfoldCv, Variant::ReshuffledMfoldCv, 0.2, 5),
            (Variant::MfoldHoldout, Variant::ReshuffledMfoldHoldout, 0.3, 4),
        ] {
            let a = closed_form(&spec(fixed, 100, alpha, m));
            let b = closed_form(&spec(resh, 100, alpha, m));
            assert_eq!(a.sigma2, b.sigma2);
        }
    }
}
