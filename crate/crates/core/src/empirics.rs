//! Monte-Carlo verification of the limiting covariance structure with a
//! fully tractable learner, plus a synthetic random-search harness.
//!
//! The learner is a shrinkage-mean predictor: trained on data `T`, the
//! configuration `lambda` predicts `lambda * mean(Y over T)` and is
//! scored by squared error. Its large-sample true risk has the closed
//! form `s^2 + (1 - lambda)^2 theta^2`, which makes incumbent quality
//! measurable without retraining protocols.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::substream;
use crate::splits::{generate, IndexAssignment, SchemeSpec, Variant};
use crate::tau::closed_form;

const TAG_COV: u64 = 0x636f76;
const TAG_HPO: u64 = 0x68706f;

/// Scalar task with `Y ~ Normal(theta, noise_sd^2)` (features ignored)
/// and a shrinkage-mean learner over a fixed candidate grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TractableTask {
    /// Mean of the data distribution.
    pub theta: f64,
    /// Standard deviation `s` of the data distribution.
    pub noise_sd: f64,
    /// Candidate shrinkage factors `lambda`.
    pub grid: Vec<f64>,
}

impl TractableTask {
    pub fn new(theta: f64, noise_sd: f64, grid: Vec<f64>) -> Result<Self> {
        if !(noise_sd >= 0.0) {
            return Err(Error::config("noise_sd must be nonnegative"));
        }
        if grid.is_empty() {
            return Err(Error::config("candidate grid must be nonempty"));
        }
        if grid.iter().any(|l| !l.is_finite()) {
            return Err(Error::config("candidate grid must be finite"));
        }
        Ok(TractableTask {
            theta,
            noise_sd,
            grid,
        })
    }

    pub fn sample_dataset(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n)
            .map(|_| self.theta + self.noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Closed-form large-sample true risk of configuration `lambda`:
    /// `E[(Y - lambda * theta)^2] = s^2 + (1 - lambda)^2 theta^2`. The
    /// `O(1/n_train)` training-variance term is deliberately omitted, so
    /// the value is independent of any validation scheme.
    pub fn true_risk(&self, lambda: f64) -> f64 {
        let bias = (1.0 - lambda) * self.theta;
        self.noise_sd * self.noise_sd + bias * bias
    }

    /// Monte-Carlo risk of a *trained* model (prediction
    /// `lambda * trained_mean`) on fresh samples; the fallback oracle
    /// path for tasks without a closed form.
    pub fn mc_true_risk(
        &self,
        lambda: f64,
        trained_mean: f64,
        draws: usize,
        rng: &mut impl Rng,
    ) -> f64 {
        let prediction = lambda * trained_mean;
        let mut sum = 0.0;
        for _ in 0..draws {
            let y = self.theta + self.noise_sd * rng.sample::<f64, _>(StandardNormal);
            let d = y - prediction;
            sum += d * d;
        }
        sum / draws as f64
    }
}

/// The designated low-signal benchmark task: the true risk
/// `4 + (1 - lambda)^2` varies by only 0.04 across the 500-point grid on
/// `[0.8, 1.2]`, while the holdout validation noise at `n = 200`,
/// `alpha = 0.2` has scale ~0.9. Selection is then noise-dominated, the
/// regime where reshuffling matters.
pub fn low_signal_task() -> TractableTask {
    let grid = (0..500).map(|i| 0.8 + 0.4 * i as f64 / 499.0).collect();
    TractableTask::new(1.0, 2.0, grid).expect("static task is valid")
}

/// Fold-averaged validation loss of configuration value `lambda` under
/// the given folds: train on each fold's complement, score squared error
/// on the fold. The shrinkage-mean learner is fully determined by
/// `lambda` and the training data.
pub fn validation_loss_at(lambda: f64, folds: &[Vec<usize>], dataset: &[f64]) -> Result<f64> {
    let n = dataset.len();
    let total: f64 = dataset.iter().sum();
    let mut acc = 0.0;
    for fold in folds {
        if fold.len() >= n {
            return Err(Error::config(
                "training complement is empty: validation fold covers the dataset",
            ));
        }
        let sum_val: f64 = fold.iter().map(|&s| dataset[s]).sum();
        let train_mean = (total - sum_val) / (n - fold.len()) as f64;
        let prediction = lambda * train_mean;
        let mse: f64 = fold
            .iter()
            .map(|&s| {
                let d = dataset[s] - prediction;
                d * d
            })
            .sum::<f64>()
            / fold.len() as f64;
        acc += mse;
    }
    Ok(acc / folds.len() as f64)
}

/// Validation loss for configuration index `j` of an assignment; the
/// configuration value is `task.grid[j]`.
pub fn validation_loss(
    task: &TractableTask,
    assignment: &IndexAssignment,
    dataset: &[f64],
    j: usize,
) -> Result<f64> {
    if dataset.len() != assignment.scheme().n() {
        return Err(Error::config(format!(
            "dataset size {} differs from scheme n = {}",
            dataset.len(),
            assignment.scheme().n()
        )));
    }
    if j >= assignment.configs() || j >= task.grid.len() {
        return Err(Error::config(format!(
            "configuration index {j} out of range"
        )));
    }
    validation_loss_at(task.grid[j], assignment.folds_of(j), dataset)
}

/// Empirical covariance comparison between a fixed scheme and its
/// reshuffled counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovCheckResult {
    pub fixed_spec: SchemeSpec,
    pub reshuffled_spec: SchemeSpec,
    pub replications: usize,
    /// Empirical covariance of `sqrt(n) * (loss - mean)` per scheme.
    pub cov_fixed: Matrix,
    pub cov_reshuffled: Matrix,
    pub offdiag_corr_fixed: f64,
    pub offdiag_corr_reshuffled: f64,
    /// Mean off-diagonal correlation, reshuffled over fixed; the
    /// covariance table predicts `tau^2_reshuffled / tau^2_fixed`.
    pub offdiag_corr_ratio: f64,
    pub diag_var_fixed: f64,
    pub diag_var_reshuffled: f64,
    /// Mean diagonal variance, reshuffled over fixed; the table predicts 1.
    pub diag_var_ratio: f64,
    pub predicted_corr_ratio: f64,
}

fn covariance_of(rows: &[Vec<f64>], scale: f64) -> Matrix {
    let r = rows.len();
    let j = rows[0].len();
    let mut mean = vec![0.0; j];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= r as f64;
    }
    let mut cov = Matrix::zeros(j);
    for row in rows {
        for a in 0..j {
            let da = row[a] - mean[a];
            for b in a..j {
                let v = cov.get(a, b) + da * (row[b] - mean[b]);
                cov.set(a, b, v);
            }
        }
    }
    let denom = (r as f64 - 1.0).max(1.0);
    for a in 0..j {
        for b in a..j {
            let v = cov.get(a, b) * scale / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    cov
}

fn mean_offdiag_corr(cov: &Matrix) -> f64 {
    let j = cov.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..j {
        for b in (a + 1)..j {
            sum += cov.get(a, b) / (cov.get(a, a) * cov.get(b, b)).sqrt();
            count += 1;
        }
    }
    sum / count as f64
}

fn mean_diag(cov: &Matrix) -> f64 {
    let j = cov.dim();
    (0..j).map(|a| cov.get(a, a)).sum::<f64>() / j as f64
}

/// Estimate the loss-surface covariance of a fixed scheme and its
/// reshuffled counterpart over independent dataset replications (datasets
/// are shared between the two variants within a replication; split draws
/// are independent per variant) and report the structure ratios.
pub fn covariance_check(
    task: &TractableTask,
    fixed_spec: &SchemeSpec,
    replications: usize,
    seed: u64,
) -> Result<CovCheckResult> {
    if fixed_spec.variant().is_reshuffled() {
        return Err(Error::config(
            "covariance_check expects the fixed variant; the reshuffled one is derived",
        ));
    }
    if replications < 1_000 {
        return Err(Error::config("covariance_check needs >= 1000 replications"));
    }
    if task.grid.len() < 2 {
        return Err(Error::config(
            "covariance_check needs at least 2 configurations",
        ));
    }
    let reshuffled_spec = fixed_spec.with_variant(fixed_spec.variant().reshuffled())?;
    let j = task.grid.len();
    let n = fixed_spec.n();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut data_rng = substream(seed, &[TAG_COV, 0, rep as u64]);
            let dataset = task.sample_dataset(n, &mut data_rng);
            let eval = |spec: &SchemeSpec, which: u64| -> Vec<f64> {
                let mut split_rng = substream(seed, &[TAG_COV, 1, which, rep as u64]);
                let assignment = generate(spec, j, &mut split_rng).expect("valid spec");
                (0..j)
                    .map(|cfg| {
                        validation_loss(task, &assignment, &dataset, cfg).expect("sized dataset")
                    })
                    .collect()
            };
            (eval(fixed_spec, 0), eval(&reshuffled_spec, 1))
        })
        .collect();

    let (fixed_rows, resh_rows): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let cov_fixed = covariance_of(&fixed_rows, n as f64);
    let cov_reshuffled = covariance_of(&resh_rows, n as f64);

    let offdiag_corr_fixed = mean_offdiag_corr(&cov_fixed);
    let offdiag_corr_reshuffled = mean_offdiag_corr(&cov_reshuffled);
    let diag_var_fixed = mean_diag(&cov_fixed);
    let diag_var_reshuffled = mean_diag(&cov_reshuffled);
    let predicted_corr_ratio =
        closed_form(&reshuffled_spec).tau2 / closed_form(fixed_spec).tau2;

    Ok(CovCheckResult {
        fixed_spec: *fixed_spec,
        reshuffled_spec,
        replications,
        offdiag_corr_ratio: offdiag_corr_reshuffled / offdiag_corr_fixed,
        diag_var_ratio: diag_var_reshuffled / diag_var_fixed,
        cov_fixed,
        cov_reshuffled,
        offdiag_corr_fixed,
        offdiag_corr_reshuffled,
        diag_var_fixed,
        diag_var_reshuffled,
        predicted_corr_ratio,
    })
}

/// Write both empirical covariance matrices as
/// `scheme,i,j,cov,corr` rows (1-based indices).
pub fn write_covariance_csv<W: Write>(result: &CovCheckResult, w: &mut W) -> io::Result<()> {
    writeln!(w, "scheme,i,j,cov,corr")?;
    let mut emit = |name: &str, cov: &Matrix| -> io::Result<()> {
        let j = cov.dim();
        for a in 0..j {
            for b in 0..j {
                let corr = cov.get(a, b) / (cov.get(a, a) * cov.get(b, b)).sqrt();
                writeln!(w, "{},{},{},{},{}", name, a + 1, b + 1, cov.get(a, b), corr)?;
            }
        }
        Ok(())
    };
    emit(result.fixed_spec.variant().name(), &result.cov_fixed)?;
    emit(
        result.reshuffled_spec.variant().name(),
        &result.cov_reshuffled,
    )
}

/// Incumbent state after one search iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HpoStep {
    /// Index into the task grid.
    pub incumbent_index: usize,
    pub incumbent_validation_loss: f64,
    pub incumbent_true_risk: f64,
}

/// Incumbent trace of one search replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HpoTrajectory {
    pub replication: usize,
    pub steps: Vec<HpoStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub mean_true_risk: f64,
    pub stderr: f64,
}

/// All trajectories of a random-search run plus per-iteration summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HpoRun {
    pub scheme: SchemeSpec,
    pub seed: u64,
    pub iterations: usize,
    pub trajectories: Vec<HpoTrajectory>,
    pub summary: Vec<IterationSummary>,
}

fn variant_ordinal(v: Variant) -> u64 {
    Variant::ALL.iter().position(|&x| x == v).unwrap() as u64
}

/// Random search over the task grid under one scheme.
///
/// Per replication: draw a dataset, visit configurations in uniform
/// random order (without replacement when the grid is at least as large
/// as the iteration budget, with replacement otherwise), evaluate each
/// under the scheme — redrawing splits per configuration iff the variant
/// reshuffles — and track the incumbent by validation loss.
///
/// Dataset and visit-order substreams depend only on `(seed,
/// replication)`, so runs of different variants with the same seed are
/// paired: same datasets, same visit order.
pub fn run_random_search(
    task: &TractableTask,
    scheme: &SchemeSpec,
    iterations: usize,
    replications: usize,
    seed: u64,
) -> Result<HpoRun> {
    if iterations == 0 {
        return Err(Error::config("iterations must be >= 1"));
    }
    if replications == 0 {
        return Err(Error::config("replications must be >= 1"));
    }
    let grid_len = task.grid.len();
    let ordinal = variant_ordinal(scheme.variant());

    let trajectories: Vec<HpoTrajectory> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut data_rng = substream(seed, &[TAG_HPO, 0, rep as u64]);
            let dataset = task.sample_dataset(scheme.n(), &mut data_rng);

            let mut order_rng = substream(seed, &[TAG_HPO, 1, rep as u64]);
            let order: Vec<usize> = if grid_len >= iterations {
                rand::seq::index::sample(&mut order_rng, grid_len, iterations).into_vec()
            } else {
                (0..iterations)
                    .map(|_| order_rng.random_range(0..grid_len))
                    .collect()
            };

            let mut split_rng = substream(seed, &[TAG_HPO, 2, ordinal, rep as u64]);
            let fixed_assignment = if scheme.variant().is_reshuffled() {
                None
            } else {
                Some(generate(scheme, 1, &mut split_rng).expect("valid spec"))
            };

            let mut steps = Vec::with_capacity(iterations);
            let mut best_loss = f64::INFINITY;
            let mut best_index = 0usize;
            for &candidate in &order {
                let lambda = task.grid[candidate];
                let loss = match &fixed_assignment {
                    Some(assignment) => {
                        validation_loss_at(lambda, assignment.folds_of(0), &dataset)
                    }
                    None => {
                        let assignment =
                            generate(scheme, 1, &mut split_rng).expect("valid spec");
                        validation_loss_at(lambda, assignment.folds_of(0), &dataset)
                    }
                }
                .expect("dataset sized to scheme");
                if loss < best_loss {
                    best_loss = loss;
                    best_index = candidate;
                }
                steps.push(HpoStep {
                    incumbent_index: best_index,
                    incumbent_validation_loss: best_loss,
                    incumbent_true_risk: task.true_risk(task.grid[best_index]),
                });
            }
            HpoTrajectory {
                replication: rep,
                steps,
            }
        })
        .collect();

    let mut summary = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let risks: Vec<f64> = trajectories
            .iter()
            .map(|tr| tr.steps[t].incumbent_true_risk)
            .collect();
        let r = risks.len() as f64;
        let mean = risks.iter().sum::<f64>() / r;
        let stderr = if risks.len() < 2 {
            0.0
        } else {
            let var = risks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
            (var / r).sqrt()
        };
        summary.push(IterationSummary {
            iteration: t + 1,
            mean_true_risk: mean,
            stderr,
        });
    }

    Ok(HpoRun {
        scheme: *scheme,
        seed,
        iterations,
        trajectories,
        summary,
    })
}

/// Trajectory CSV with the fixed schema
/// `replication,iteration,scheme,incumbent_lambda,incumbent_validation_loss,incumbent_true_risk`.
pub fn write_trajectories_csv<W: Write>(
    task: &TractableTask,
    run: &HpoRun,
    w: &mut W,
) -> io::Result<()> {
    writeln!(
        w,
        "replication,iteration,scheme,incumbent_lambda,incumbent_validation_loss,incumbent_true_risk"
    )?;
    let name = run.scheme.variant().name();
    for tr in &run.trajectories {
        for (t, step) in tr.steps.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                tr.replication + 1,
                t + 1,
                name,
                task.grid[step.incumbent_index],
                step.incumbent_validation_loss,
                step.incumbent_true_risk
            )?;
        }
    }
    Ok(())
}
