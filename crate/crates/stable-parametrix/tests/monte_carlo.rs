use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stable_parametrix::mc_oracle::{empirical_cf, empirical_density, ks_two_sample, sample_stable};

fn draws(alpha: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_stable(alpha, 1, t, &mut rng)[0]).collect()
}

#[test]
fn characteristic_function_matches() {
    let z = draws(1.2, 0.7, 200_000, 3);
    for xi in [0.2, 0.7, 1.5, 3.0] {
        let (m, se) = empirical_cf(&z, xi);
        let exact = (-0.7 * f64::powf(xi, 1.2)).exp();
        assert!((m - exact).abs() <= 4.0 * se, "xi={xi} {m} {exact} {se}");
    }
}

#[test]
fn same_law_passes_ks() {
    let a = draws(0.8, 1.0, 20_000, 1);
    let b = draws(0.8, 1.0, 20_000, 2);
    assert!(ks_two_sample(&a, &b) < 0.02);
    let c = draws(1.6, 1.0, 20_000, 2);
    assert!(ks_two_sample(&a, &c) > 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn histogram_integrates_to_one(seed in 0u64..1000, bins in 2usize..80, half in 0.5f64..20.0) {
        let z = draws(1.0, 1.0, 10_000, seed);
        let edges: Vec<f64> = (0..=bins).map(|k| -half + 2.0 * half * k as f64 / bins as f64).collect();
        let e = empirical_density(&z, &edges).unwrap();
        let total: f64 = e.heights.iter().zip(edges.windows(2)).map(|(h, w)| h * (w[1] - w[0])).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(e.counts.iter().sum::<u64>() as usize + e.n_outside, 10_000);
    }
}
