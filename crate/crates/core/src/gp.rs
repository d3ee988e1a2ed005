//! Gaussian-process loss-surface simulator.
//!
//! The observed objective is `mu(lambda) + eps(lambda)` on a finite grid,
//! where `mu` is a quadratic true-loss surface and `eps` is zero-mean
//! Gaussian noise whose covariance carries the reshuffling factor:
//! `K(lambda, lambda)` on the diagonal and `tau^2 K(lambda, lambda')`
//! off it. Each replication samples the objective, selects the grid
//! minimizer, and records its true risk.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::substream;

const TAG_GP: u64 = 0x6770;

/// Covariance kernel over scalar configurations.
pub trait Kernel {
    fn eval(&self, a: f64, b: f64) -> f64;
}

/// `K(a, b) = sigma_k2 * exp(-kappa * (a - b)^2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponential {
    /// Amplitude `sigma_K^2`.
    #[serde(rename = "sigma_k2")]
    pub amplitude2: f64,
    /// Inverse length scale `kappa`; larger means weaker correlation.
    #[serde(rename = "kappa")]
    pub inverse_length: f64,
}

impl Kernel for SquaredExponential {
    fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.amplitude2 * (-self.inverse_length * d * d / 2.0).exp()
    }
}

/// Quadratic true-loss surface `mu(lambda) = m (lambda - minimizer)^2 / 2`
/// over a finite grid in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurfaceSpec", into = "RawSurfaceSpec")]
pub struct SurfaceSpec {
    curvature: f64,
    minimizer: f64,
    grid: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSurfaceSpec {
    #[serde(rename = "m")]
    curvature: f64,
    minimizer: f64,
    grid: Vec<f64>,
}

impl TryFrom<RawSurfaceSpec> for SurfaceSpec {
    type Error = Error;

    fn try_from(raw: RawSurfaceSpec) -> Result<Self> {
        SurfaceSpec::new(raw.curvature, raw.minimizer, raw.grid)
    }
}

impl From<SurfaceSpec> for RawSurfaceSpec {
    fn from(s: SurfaceSpec) -> Self {
        RawSurfaceSpec {
            curvature: s.curvature,
            minimizer: s.minimizer,
            grid: s.grid,
        }
    }
}

impl SurfaceSpec {
    pub fn new(curvature: f64, minimizer: f64, grid: Vec<f64>) -> Result<Self> {
        if !(curvature >= 0.0) {
            return Err(Error::config(format!(
                "curvature must be nonnegative, got {curvature}"
            )));
        }
        if grid.len() < 2 {
            return Err(Error::config("grid must contain at least 2 points"));
        }
        for w in grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::config(
                    "grid values must be strictly increasing",
                ));
            }
        }
        if grid[0] < 0.0 || *grid.last().unwrap() > 1.0 {
            return Err(Error::config("grid values must lie in [0, 1]"));
        }
        Ok(SurfaceSpec {
            curvature,
            minimizer,
            grid,
        })
    }

    /// Uniform grid of `points` values covering `[0, 1]` inclusive.
    pub fn uniform(curvature: f64, minimizer: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::config("grid must contain at least 2 points"));
        }
        let grid = (0..points)
            .map(|i| i as f64 / (points - 1) as f64)
            .collect();
        SurfaceSpec::new(curvature, minimizer, grid)
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn minimizer(&self) -> f64 {
        self.minimizer
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn points(&self) -> usize {
        self.grid.len()
    }

    /// True loss at a configuration value.
    pub fn mu(&self, lambda: f64) -> f64 {
        let d = lambda - self.minimizer;
        self.curvature * d * d / 2.0
    }

    /// True loss at grid index `i`.
    pub fn mu_at(&self, i: usize) -> f64 {
        self.mu(self.grid[i])
    }
}

/// Noise process: kernel plus reshuffling attenuation `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoiseModel", into = "RawNoiseModel")]
pub struct NoiseModel {
    kernel: SquaredExponential,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNoiseModel {
    kernel: SquaredExponential,
    tau: f64,
}

impl TryFrom<RawNoiseModel> for NoiseModel {
    type Error = Error;

    fn try_from(raw: RawNoiseModel) -> Result<Self> {
        NoiseModel::new(raw.kernel, raw.tau)
    }
}

impl From<NoiseModel> for RawNoiseModel {
    fn from(n: NoiseModel) -> Self {
        RawNoiseModel {
            kernel: n.kernel,
            tau: n.tau,
        }
    }
}

impl NoiseModel {
    pub fn new(kernel: SquaredExponential, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(format!("tau must lie in [0, 1], got {tau}")));
        }
        if !(kernel.amplitude2 >= 0.0) {
            return Err(Error::config("kernel amplitude must be nonnegative"));
        }
        if !(kernel.inverse_length >= 0.0) {
            return Err(Error::config("kernel inverse length must be nonnegative"));
        }
        Ok(NoiseModel { kernel, tau })
    }

    pub fn kernel(&self) -> &SquaredExponential {
        &self.kernel
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Full simulation configuration; serializes to/from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub surface: SurfaceSpec,
    pub noise: NoiseModel,
    pub replications: usize,
    pub seed: u64,
}

/// Mean true risk of the selected configuration over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub mean_true_risk: f64,
    pub standard_error: f64,
    pub replications: usize,
}

/// Covariance matrix with the jitter that made it factorizable.
#[derive(Debug, Clone)]
pub struct BuiltCovariance {
    pub matrix: Matrix,
    pub factor: Matrix,
    pub jitter: f64,
}

/// Build the noise covariance over the surface grid: `K(l, l)` on the
/// diagonal, `tau^2 K(l, l')` off it, plus an escalating diagonal jitter
/// (from `1e-10` up to `1e-6` times the largest diagonal entry) until the
/// Cholesky factorization succeeds.
pub fn build_covariance(surface: &SurfaceSpec, noise: &NoiseModel) -> Result<BuiltCovariance> {
    let grid = surface.grid();
    let j = grid.len();
    let tau2 = noise.tau() * noise.tau();
    let kernel = noise.kernel();
    let base = Matrix::from_fn(j, |a, b| {
        if a == b {
            kernel.eval(grid[a], grid[a])
        } else {
            tau2 * kernel.eval(grid[a], grid[b])
        }
    });
    let max_diag = base.max_diagonal();
    if max_diag == 0.0 {
        // Zero-amplitude kernel: the noise is identically zero.
        return Ok(BuiltCovariance {
            matrix: base,
            factor: Matrix::zeros(j),
            jitter: 0.0,
        });
    }
    let mut last_failure = None;
    for exponent in 0..=4 {
        let jitter = max_diag * 1e-10 * 10f64.powi(exponent);
        let mut jittered = base.clone();
        jittered.add_diagonal(jitter);
        match jittered.cholesky() {
            Ok(factor) => {
                return Ok(BuiltCovariance {
                    matrix: jittered,
                    factor,
                    jitter,
                })
            }
            Err(failure) => last_failure = Some(failure),
        }
    }
    let failure = last_failure.expect("at least one attempt");
    let cond = max_diag / failure.value.abs().max(f64::MIN_POSITIVE);
    Err(Error::numerical(format!(
        "covariance factorization failed at pivot {} even with jitter 1e-6 * max diagonal; \
         condition estimate >= {cond:.3e}",
        failure.index
    )))
}

/// A prepared sampler for one simulation configuration.
pub struct Simulator {
    mu: Vec<f64>,
    factor: Matrix,
    jitter: f64,
}

impl Simulator {
    pub fn new(surface: &SurfaceSpec, noise: &NoiseModel) -> Result<Self> {
        let built = build_covariance(surface, noise)?;
        let mu = (0..surface.points()).map(|i| surface.mu_at(i)).collect();
        Ok(Simulator {
            mu,
            factor: built.factor,
            jitter: built.jitter,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Draw one observed objective `mu + L z` with `z` standard normal.
    pub fn sample_observed(&self, rng: &mut impl Rng) -> Vec<f64> {
        let j = self.mu.len();
        let z: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
        let mut eps = vec![0.0; j];
        self.factor.lower_mul_vec(&z, &mut eps);
        eps.iter().zip(&self.mu).map(|(e, m)| e + m).collect()
    }

    /// Noise-only sample `L z`.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        let j = self.mu.len();
        let z: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
        let mut eps = vec![0.0; j];
        self.factor.lower_mul_vec(&z, &mut eps);
        eps
    }

    pub fn true_risk_at(&self, idx: usize) -> f64 {
        self.mu[idx]
    }
}

/// Index of the smallest value; ties break to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// One observed objective draw for the configured surface and noise.
pub fn sample_observed_loss(config: &SimulationConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let sim = Simulator::new(&config.surface, &config.noise)?;
    Ok(sim.sample_observed(rng))
}

fn summarize(risks: &[f64]) -> SimulationSummary {
    let r = risks.len();
    let mean = risks.iter().sum::<f64>() / r as f64;
    let standard_error = if r < 2 {
        0.0
    } else {
        let var = risks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0);
        (var / r as f64).sqrt()
    };
    SimulationSummary {
        mean_true_risk: mean,
        standard_error,
        replications: r,
    }
}

fn run_study_cell(config: &SimulationConfig, cell: u64) -> Result<(SimulationSummary, f64)> {
    if config.replications == 0 {
        return Err(Error::config("replications must be >= 1"));
    }
    let sim = Simulator::new(&config.surface, &config.noise)?;
    let risks: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.seed, &[TAG_GP, cell, rep as u64]);
            let observed = sim.sample_observed(&mut rng);
            sim.true_risk_at(argmin(&observed))
        })
        .collect();
    Ok((summarize(&risks), sim.jitter()))
}

/// Repeatedly sample the objective, select the grid minimizer, and
/// summarize its true risk. Replications run in parallel on
/// per-replication substreams; the aggregation order is fixed.
pub fn run_study(config: &SimulationConfig) -> Result<SimulationSummary> {
    run_study_cell(config, 0).map(|(summary, _)| summary)
}

/// Parameter sweep over curvature, correlation, and reshuffling grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Curvature values `m`.
    pub m_values: Vec<f64>,
    /// Kernel inverse-length values `kappa`.
    pub kappa_values: Vec<f64>,
    /// Reshuffling factors `tau`.
    pub tau_values: Vec<f64>,
    /// Kernel amplitude `sigma_K^2`.
    pub sigma_k2: f64,
    /// Number of uniform grid points `J`.
    pub grid_points: usize,
    pub minimizer: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            m_values: vec![0.5, 1.0, 2.0, 4.0],
            kappa_values: vec![0.1, 1.0, 10.0, 100.0],
            tau_values: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            sigma_k2: 1.0,
            grid_points: 51,
            minimizer: 0.5,
            replications: 10_000,
            seed: 0,
        }
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: f64,
    pub kappa: f64,
    pub tau: f64,
    pub sigma_k2: f64,
    pub grid_points: usize,
    pub replications: usize,
    pub mean_true_risk: f64,
    pub stderr: f64,
    pub jitter: f64,
    pub seed: u64,
}

/// Run every `(m, kappa, tau)` cell with a shared replication count and
/// per-cell substreams. Cells are enumerated m-major, then kappa, then
/// tau; a degenerate 1x1x1 sweep reproduces [`run_study`] exactly.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.m_values.is_empty() || spec.kappa_values.is_empty() || spec.tau_values.is_empty() {
        return Err(Error::config("sweep grids must be nonempty"));
    }
    if spec.replications == 0 {
        return Err(Error::config("replications must be >= 1"));
    }
    let mut rows = Vec::new();
    let mut cell: u64 = 0;
    for &m in &spec.m_values {
        for &kappa in &spec.kappa_values {
            for &tau in &spec.tau_values {
                let surface = SurfaceSpec::uniform(m, spec.minimizer, spec.grid_points)?;
                let noise = NoiseModel::new(
                    SquaredExponential {
                        amplitude2: spec.sigma_k2,
                        inverse_length: kappa,
                    },
                    tau,
                )?;
                let config = SimulationConfig {
                    surface,
                    noise,
                    replications: spec.replications,
                    seed: spec.seed,
                };
                let (summary, jitter) = run_study_cell(&config, cell).map_err(|e| {
                    Error::numerical(format!("cell (m={m}, kappa={kappa}, tau={tau}): {e}"))
                })?;
                rows.push(SweepRow {
                    m,
                    kappa,
                    tau,
                    sigma_k2: spec.sigma_k2,
                    grid_points: spec.grid_points,
                    replications: spec.replications,
                    mean_true_risk: summary.mean_true_risk,
                    stderr: summary.standard_error,
                    jitter,
                    seed: spec.seed,
                });
                cell += 1;
            }
        }
    }
    Ok(rows)
}

/// Write sweep rows in the fixed CSV schema.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> io::Result<()> {
    writeln!(
        w,
        "m,kappa,tau,sigmaK2,J,replications,mean_true_risk,stderr,jitter,seed"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.kappa,
            r.tau,
            r.sigma_k2,
            r.grid_points,
            r.replications,
            r.mean_true_risk,
            r.stderr,
            r.jitter,
            r.seed
        )?;
    }
    Ok(())
}
