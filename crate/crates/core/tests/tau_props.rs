//! Monte-Carlo tau estimates against the closed form over the test
//! lattice n in {20, 50, 100}, alpha in {0.1, 0.2, 0.5}, M in {1, 2, 5}.
//! The lattice keeps alpha * n integral, where the per-draw probabilities
//! are exactly n-free; non-integral alpha * n would add O(1/n) bias.

use reshuffle_core::splits::{SchemeSpec, Variant};
use reshuffle_core::tau::{closed_form_estimate, estimate_tau, exact_tau, PairKind};

const DRAWS: usize = 100_000;

fn check_cell(spec: &SchemeSpec, seed: u64) {
    let closed = closed_form_estimate(spec);
    let exact = exact_tau(spec);
    // With alpha * n integral the enumeration matches the closed form.
    assert!(
        (exact.diag - closed.diag).abs() < 1e-9
            && (exact.offdiag - closed.offdiag).abs() < 1e-9,
        "{spec:?}: exact enumeration drifted from closed form"
    );
    for pair in [PairKind::Same, PairKind::Distinct] {
        let est = estimate_tau(spec, pair, DRAWS, seed).unwrap();
        let got = est.value(pair);
        let want = closed.value(pair);
        // Allow one ulp-scale slop on top of the Monte-Carlo band for
        // statistics that are deterministic (standard error zero).
        let band = 3.0 * est.standard_error + 1e-12 * want.abs().max(1.0);
        assert!(
            (got - want).abs() <= band,
            "{:?} {:?}: {} vs {} (se {})",
            spec.variant(),
            pair,
            got,
            want,
            est.standard_error
        );
        assert!(
            (got - want).abs() <= 0.02 * want.abs(),
            "{:?} {:?}: {} vs {} beyond 2% relative",
            spec.variant(),
            pair,
            got,
            want
        );
    }
}

#[test]
fn holdout_family_lattice() {
    let mut seed = 100;
    for variant in [Variant::Holdout, Variant::ReshuffledHoldout] {
        for n in [20usize, 50, 100] {
            for alpha in [0.1, 0.2, 0.5] {
                let spec = SchemeSpec::new(variant, n, alpha, 1).unwrap();
                check_cell(&spec, seed);
                seed += 1;
            }
        }
    }
}

#[test]
fn cv_family_lattice() {
    let mut seed = 200;
    for variant in [Variant::MfoldCv, Variant::ReshuffledMfoldCv] {
        for n in [20usize, 50, 100] {
            for m in [2usize, 5] {
                let spec = SchemeSpec::cv(variant, n, m).unwrap();
                check_cell(&spec, seed);
                seed += 1;
            }
        }
    }
}

#[test]
fn mfold_holdout_family_lattice() {
    let mut seed = 300;
    for variant in [Variant::MfoldHoldout, Variant::ReshuffledMfoldHoldout] {
        for n in [20usize, 50, 100] {
            for alpha in [0.1, 0.2, 0.5] {
                for m in [1usize, 2, 5] {
                    let spec = SchemeSpec::new(variant, n, alpha, m).unwrap();
                    check_cell(&spec, seed);
                    seed += 1;
                }
            }
        }
    }
}
