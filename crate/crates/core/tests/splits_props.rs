//! Distributional and exactness properties of the split generators.

use reshuffle_core::rng::{root, substream};
use reshuffle_core::splits::{generate, SchemeSpec, Variant};

#[test]
fn cv_partition_property_over_full_lattice() {
    // Exact partition/disjointness for all n in [2, 200], M in [2, 10],
    // M <= n, both CV variants.
    for n in 2..=200usize {
        for m in 2..=10usize.min(n) {
            for variant in [Variant::MfoldCv, Variant::ReshuffledMfoldCv] {
                let spec = SchemeSpec::cv(variant, n, m).unwrap();
                let mut rng = substream(42, &[n as u64, m as u64]);
                let a = generate(&spec, 2, &mut rng).unwrap();
                a.validate().unwrap();
                for j in 0..2 {
                    let mut seen = vec![false; n];
                    for fold in a.folds_of(j) {
                        for &s in fold {
                            assert!(!seen[s], "index {s} duplicated (n={n}, M={m})");
                            seen[s] = true;
                        }
                    }
                    assert!(seen.iter().all(|&x| x), "not exhaustive (n={n}, M={m})");
                    let sizes: Vec<usize> = a.folds_of(j).iter().map(|f| f.len()).collect();
                    let max = sizes.iter().max().unwrap();
                    let min = sizes.iter().min().unwrap();
                    assert!(max - min <= 1, "unbalanced folds {sizes:?} (n={n}, M={m})");
                    assert_eq!(sizes.iter().sum::<usize>(), n);
                }
            }
        }
    }
}

#[test]
fn reshuffled_inclusion_frequency_matches_alpha() {
    // Each index lands in a validation set with frequency alpha within
    // 4 sqrt(alpha (1 - alpha) / R).
    let n = 20;
    let alpha = 0.25;
    let spec = SchemeSpec::new(Variant::ReshuffledHoldout, n, alpha, 1).unwrap();
    let reps = 40_000usize;
    let mut rng = root(7);
    let a = generate(&spec, reps, &mut rng).unwrap();
    let mut counts = vec![0usize; n];
    for j in 0..reps {
        for &s in a.validation_set(j, 0) {
            counts[s] += 1;
        }
    }
    let band = 4.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt();
    for (s, &c) in counts.iter().enumerate() {
        let freq = c as f64 / reps as f64;
        assert!(
            (freq - alpha).abs() <= band,
            "index {s}: frequency {freq} outside {alpha} ± {band}"
        );
    }
}

#[test]
fn fixed_and_reshuffled_share_the_marginal_distribution() {
    // Inclusion frequency of each index across independent draws is the
    // same for a fixed scheme (one configuration per draw) and its
    // reshuffled counterpart.
    let n = 12;
    let alpha = 0.25;
    let reps = 30_000usize;
    let band = 4.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt();

    for variant in [Variant::MfoldHoldout, Variant::ReshuffledMfoldHoldout] {
        let spec = SchemeSpec::new(variant, n, alpha, 3).unwrap();
        let mut counts = vec![0usize; n];
        let mut rng = root(11);
        for _ in 0..reps {
            let a = generate(&spec, 1, &mut rng).unwrap();
            // Count fold-0 membership only, one observation per draw.
            for &s in a.validation_set(0, 0) {
                counts[s] += 1;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            let freq = c as f64 / reps as f64;
            assert!(
                (freq - alpha).abs() <= band,
                "{variant}: index {s} frequency {freq} outside {alpha} ± {band}"
            );
        }
    }
}

#[test]
fn identical_seed_gives_identical_bytes() {
    for variant in Variant::ALL {
        let spec = if variant.is_cv() {
            SchemeSpec::cv(variant, 17, 4).unwrap()
        } else {
            SchemeSpec::new(variant, 17, 0.3, if variant.is_single_holdout() { 1 } else { 4 })
                .unwrap()
        };
        let render = |seed: u64| {
            let mut rng = root(seed);
            let a = generate(&spec, 5, &mut rng).unwrap();
            let mut out = Vec::new();
            a.write_membership_csv(&mut out).unwrap();
            out
        };
        assert_eq!(render(123), render(123), "{variant}: same seed differs");
        assert_ne!(render(123), render(124), "{variant}: seeds collide");
    }
}
