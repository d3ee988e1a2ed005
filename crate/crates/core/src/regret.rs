//! Regret bound for selection on the Gaussian loss-surface model, plus
//! empirical estimators for its ingredient constants.
//!
//! The expected regret of selecting the observed minimizer is bounded by
//! `sigma * sqrt(d) * (8 + B(tau) - A(tau))` with
//!
//! ```text
//! B(tau) = 48 [ sqrt(1 - tau^2) sqrt(log J) + tau sqrt(1 + log(3 kappa)_+) ]
//! A(tau) = sqrt(1 - tau^2) (sigma_lower / sigma) sqrt(log(sigma / (2 m eta^2))_+)
//! ```
//!
//! where `log(x)_+ = max(0, log x)`. `B` quantifies the chance of picking
//! a bad configuration by bad luck, `A` the chance of picking a good one
//! by luck; both decrease in `tau`. `B` is reported raw here, without the
//! `sqrt(log J)` cap that a sharper analysis of the proof yields.

use rand::Rng;
use serde::Serialize;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::rng::substream;

const TAG_ETA: u64 = 0x657461;

fn ln_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Inputs to the regret bound.
///
/// `sigma` here is the noise upper bound (square root of the supremum
/// variance), not the variance-inflation parameter of the covariance
/// table; the two uses share a symbol but not a meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretInputs {
    /// Noise upper bound (sqrt of sup variance).
    pub sigma: f64,
    /// Noise lower bound (sqrt of inf variance).
    pub sigma_lower: f64,
    /// Reshuffling factor in `[0, 1]`.
    pub tau: f64,
    /// Correlation constant of the noise process; larger means weaker
    /// correlation.
    pub kappa: f64,
    /// Curvature of the true loss at its minimum (`m`).
    pub curvature: f64,
    /// Grid density (`eta`): radius such that every eta-ball inside the
    /// unit ball contains a candidate.
    pub eta: f64,
    /// Dimension of the configuration space.
    pub dim: usize,
    /// Number of candidate configurations (`J`).
    pub grid_size: usize,
}

impl RegretInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config("sigma must be positive"));
        }
        if !(self.sigma_lower > 0.0) {
            return Err(Error::config("sigma_lower must be positive"));
        }
        if self.sigma_lower > self.sigma {
            return Err(Error::config("sigma_lower must not exceed sigma"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0, 1]"));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::config("kappa must be nonnegative"));
        }
        if !(self.curvature >= 0.0) {
            return Err(Error::config("curvature must be nonnegative"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::config("eta must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim must be >= 1"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("grid size J must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegretFlag {
    /// The curvature input was zero; `A` was set to 0 because the bound
    /// requires `m > 0`.
    #[serde(rename = "degenerate-curvature")]
    DegenerateCurvature,
}

/// The bound and its two ingredient terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretBreakdown {
    #[serde(rename = "A")]
    pub a_term: f64,
    #[serde(rename = "B")]
    pub b_term: f64,
    pub bound: f64,
    pub flags: Vec<RegretFlag>,
}

/// Evaluate the regret bound `sigma * sqrt(d) * (8 + B - A)`.
pub fn bound(inputs: &RegretInputs) -> Result<RegretBreakdown> {
    inputs.validate()?;
    let tau = inputs.tau;
    let ortho = (1.0 - tau * tau).max(0.0).sqrt();
    let b_term = 48.0
        * (ortho * (inputs.grid_size as f64).ln().sqrt()
            + tau * (1.0 + ln_plus(3.0 * inputs.kappa)).sqrt());
    let mut flags = Vec::new();
    let a_term = if inputs.curvature == 0.0 {
        flags.push(RegretFlag::DegenerateCurvature);
        0.0
    } else {
        ortho
            * (inputs.sigma_lower / inputs.sigma)
            * ln_plus(inputs.sigma / (2.0 * inputs.curvature * inputs.eta * inputs.eta)).sqrt()
    };
    let bound = inputs.sigma * (inputs.dim as f64).sqrt() * (8.0 + b_term - a_term);
    Ok(RegretBreakdown {
        a_term,
        b_term,
        bound,
        flags,
    })
}

/// Rows of a tau sweep in the fixed CSV schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauSweepRow {
    pub tau: f64,
    #[serde(rename = "A")]
    pub a_term: f64,
    #[serde(rename = "B")]
    pub b_term: f64,
    pub bound: f64,
}

/// Evaluate the bound over a grid of tau values, holding the other
/// inputs fixed.
pub fn tau_sweep(base: &RegretInputs, taus: &[f64]) -> Result<Vec<TauSweepRow>> {
    taus.iter()
        .map(|&tau| {
            let breakdown = bound(&RegretInputs { tau, ..*base })?;
            Ok(TauSweepRow {
                tau,
                a_term: breakdown.a_term,
                b_term: breakdown.b_term,
                bound: breakdown.bound,
            })
        })
        .collect()
}

pub fn write_tau_sweep_csv<W: Write>(rows: &[TauSweepRow], w: &mut W) -> io::Result<()> {
    writeln!(w, "tau,A,B,bound")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.tau, r.a_term, r.b_term, r.bound)?;
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Wrap scalar configurations as 1-dimensional points.
pub fn points_1d(xs: &[f64]) -> Vec<Vec<f64>> {
    xs.iter().map(|&x| vec![x]).collect()
}

/// Estimate the correlation constant `kappa` of a kernel over a finite
/// grid: the maximum of `|K(l,l) - K(l,l')| / (K(l,l) ||l - l'||^2)` over
/// grid pairs. A grid maximum is a lower bound of the supremum; refine
/// the grid to tighten it.
pub fn estimate_kappa<K>(kernel: K, points: &[Vec<f64>]) -> Result<f64>
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    if points.len() < 2 {
        return Err(Error::domain("kappa estimation needs at least 2 points"));
    }
    for p in points {
        if norm(p) > 1.0 + 1e-9 {
            return Err(Error::domain("points must lie in the unit ball"));
        }
    }
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        let diag = kernel(a, a);
        if !(diag > 0.0) {
            return Err(Error::domain("kernel must be positive on the diagonal"));
        }
        for (j, b) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let r2 = dist2(a, b);
            if r2 == 0.0 {
                return Err(Error::domain("duplicate grid points"));
            }
            let ratio = (diag - kernel(a, b)).abs() / (diag * r2);
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// Curvature estimate; `degenerate` marks an all-equal surface where the
/// bound's `m > 0` requirement fails and `A` must be zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Estimate the curvature constant `m` of a surface sampled on a grid:
/// the maximum of `|mu(l) - mu(l*)| / ||l - l*||^2` over grid points,
/// with `l*` the unique grid minimizer.
pub fn estimate_m(values: &[f64], points: &[Vec<f64>]) -> Result<CurvatureEstimate> {
    if values.len() != points.len() {
        return Err(Error::domain("values and points must have equal length"));
    }
    if values.len() < 2 {
        return Err(Error::domain("curvature estimation needs at least 2 points"));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(CurvatureEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let minimizers: Vec<usize> = (0..values.len()).filter(|&i| values[i] == min).collect();
    if minimizers.len() != 1 {
        return Err(Error::domain("surface minimizer is not unique on the grid"));
    }
    let star = minimizers[0];
    let mut best = 0.0f64;
    for i in 0..values.len() {
        if i == star {
            continue;
        }
        let r2 = dist2(&points[i], &points[star]);
        if r2 == 0.0 {
            return Err(Error::domain("duplicate grid points"));
        }
        best = best.max((values[i] - min).abs() / r2);
    }
    Ok(CurvatureEstimate {
        value: best,
        degenerate: false,
    })
}

fn sample_unit_ball(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    use rand_distr::StandardNormal;
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&dir);
        if len > 1e-12 {
            let radius = rng.random_range(0.0..1.0f64).powf(1.0 / dim as f64);
            return dir.iter().map(|x| x * radius / len).collect();
        }
    }
}

/// Monte-Carlo covering-radius estimate of the grid density `eta`: the
/// largest distance from a probe center drawn uniformly in the unit ball
/// to its nearest candidate, i.e. the smallest radius at which every
/// probed ball contains a point. A finite probe set underestimates the
/// supremum, so the estimate converges from below as `probes` grows.
pub fn estimate_eta(points: &[Vec<f64>], probes: usize, rng: &mut impl Rng) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::domain("eta estimation needs at least one point"));
    }
    if probes == 0 {
        return Err(Error::domain("probes must be >= 1"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::domain("points must share one dimension"));
    }
    // 1-d fast path: nearest-neighbor queries on sorted coordinates.
    let sorted_1d = if dim == 1 {
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(xs)
    } else {
        None
    };
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let c = sample_unit_ball(dim, rng);
        let nearest = if let Some(xs) = &sorted_1d {
            let x = c[0];
            let idx = xs.partition_point(|&v| v < x);
            let mut d = f64::INFINITY;
            if idx < xs.len() {
                d = d.min((xs[idx] - x).abs());
            }
            if idx > 0 {
                d = d.min((x - xs[idx - 1]).abs());
            }
            d
        } else {
            points
                .iter()
                .map(|p| dist2(p, &c).sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// One grid-density measurement for a random candidate grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaScalingRow {
    pub grid_size: usize,
    pub repetition: usize,
    pub eta: f64,
}

/// Density scaling of random grids: for each grid size, draw `reps`
/// uniform grids in the unit ball and estimate `eta`. The slope of
/// `log eta` against `log J` is returned; random grids should scale
/// roughly like `J^(-1/2d)` up to log factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaScaling {
    pub rows: Vec<EtaScalingRow>,
    pub slope: f64,
}

pub fn eta_scaling(
    grid_sizes: &[usize],
    reps: usize,
    probes: usize,
    dim: usize,
    seed: u64,
) -> Result<EtaScaling> {
    if grid_sizes.is_empty() || reps == 0 {
        return Err(Error::domain("grid sizes and reps must be nonempty"));
    }
    let mut rows = Vec::with_capacity(grid_sizes.len() * reps);
    for (gi, &grid_size) in grid_sizes.iter().enumerate() {
        if grid_size == 0 {
            return Err(Error::domain("grid sizes must be positive"));
        }
        for rep in 0..reps {
            let mut rng = substream(seed, &[TAG_ETA, gi as u64, rep as u64]);
            let points: Vec<Vec<f64>> =
                (0..grid_size).map(|_| sample_unit_ball(dim, &mut rng)).collect();
            let eta = estimate_eta(&points, probes, &mut rng)?;
            rows.push(EtaScalingRow {
                grid_size,
                repetition: rep,
                eta,
            });
        }
    }
    // Least-squares slope of log(eta) on log(J).
    let xs: Vec<f64> = rows.iter().map(|r| (r.grid_size as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.eta.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::domain(
            "eta scaling slope needs at least two distinct grid sizes",
        ));
    }
    Ok(EtaScaling {
        rows,
        slope: sxy / sxx,
    })
}

pub fn write_eta_csv<W: Write>(rows: &[EtaScalingRow], w: &mut W) -> io::Result<()> {
    writeln!(w, "j,rep,eta")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.grid_size, r.repetition, r.eta)?;
    }
    Ok(())
}
