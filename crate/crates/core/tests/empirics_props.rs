//! Distributional properties of the tractable-learner harness.

use reshuffle_core::empirics::{covariance_check, run_random_search, TractableTask};
use reshuffle_core::splits::{SchemeSpec, Variant};

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / na as f64;
        let fb = j as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Asymptotic Kolmogorov survival function `Q(t) = 2 sum (-1)^(k-1) exp(-2 k^2 t^2)`.
fn ks_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let t = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn marginal_equivalence_at_iteration_one() {
    // At a single iteration the fixed and reshuffled variants draw the
    // same number of splits from the same distribution, so the
    // first-iteration validation losses must agree in distribution.
    let grid: Vec<f64> = (0..40).map(|i| i as f64 / 20.0).collect();
    let task = TractableTask::new(1.0, 1.0, grid).unwrap();
    let reps = 10_000;
    let fixed = SchemeSpec::new(Variant::Holdout, 50, 0.2, 1).unwrap();
    let resh = SchemeSpec::new(Variant::ReshuffledHoldout, 50, 0.2, 1).unwrap();
    // Independent seeds so the two samples are independent.
    let run_a = run_random_search(&task, &fixed, 1, reps, 1001).unwrap();
    let run_b = run_random_search(&task, &resh, 1, reps, 2002).unwrap();
    let mut a: Vec<f64> = run_a
        .trajectories
        .iter()
        .map(|t| t.steps[0].incumbent_validation_loss)
        .collect();
    let mut b: Vec<f64> = run_b
        .trajectories
        .iter()
        .map(|t| t.steps[0].incumbent_validation_loss)
        .collect();
    let d = ks_statistic(&mut a, &mut b);
    let p = ks_pvalue(d, reps, reps);
    assert!(p > 0.01, "KS statistic {d} has p-value {p} <= 0.01");
}

#[test]
fn ks_detects_a_genuinely_different_distribution() {
    // Sanity check of the test statistic itself: shifted samples fail.
    let mut a: Vec<f64> = (0..5000).map(|i| i as f64 / 5000.0).collect();
    let mut b: Vec<f64> = (0..5000).map(|i| i as f64 / 5000.0 + 0.2).collect();
    let d = ks_statistic(&mut a, &mut b);
    let p = ks_pvalue(d, 5000, 5000);
    assert!(p < 1e-6, "expected rejection, got p = {p}");
}

#[test]
fn empirical_covariance_is_symmetric_and_psd() {
    let task = TractableTask::new(0.0, 1.0, vec![0.0, 0.5, 1.0]).unwrap();
    let fixed = SchemeSpec::new(Variant::Holdout, 60, 0.2, 1).unwrap();
    let result = covariance_check(&task, &fixed, 2_000, 5).unwrap();
    for cov in [&result.cov_fixed, &result.cov_reshuffled] {
        let j = cov.dim();
        let scale = cov.max_diagonal();
        for a in 0..j {
            for b in 0..j {
                assert!(
                    (cov.get(a, b) - cov.get(b, a)).abs() <= 1e-9 * scale,
                    "asymmetry at ({a},{b})"
                );
            }
        }
        // PSD up to 1e-9 relative tolerance: a jittered Cholesky passes.
        let mut shifted = cov.clone();
        shifted.add_diagonal(1e-9 * scale);
        assert!(shifted.cholesky().is_ok());
    }
}

#[test]
fn cv_pair_shows_no_reshuffling_effect() {
    // Both ratios approach 1 for the CV pair; generous tolerances at
    // 4000 replications.
    let task = TractableTask::new(0.0, 1.0, vec![0.0, 0.5, 1.0]).unwrap();
    let fixed = SchemeSpec::cv(Variant::MfoldCv, 100, 5).unwrap();
    let result = covariance_check(&task, &fixed, 4_000, 17).unwrap();
    assert_eq!(result.predicted_corr_ratio, 1.0);
    assert!(
        (result.offdiag_corr_ratio - 1.0).abs() < 0.1,
        "corr ratio {}",
        result.offdiag_corr_ratio
    );
    assert!(
        (result.diag_var_ratio - 1.0).abs() < 0.1,
        "var ratio {}",
        result.diag_var_ratio
    );
}
