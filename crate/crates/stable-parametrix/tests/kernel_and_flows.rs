use proptest::prelude::*;
use stable_parametrix::bounds_kernels::{eval_H, eval_Q, KernelSpec};
use stable_parametrix::drift_flows::{solve_flow, upsilon, Direction, DriftSpec, MollifiedDrift};
use stable_parametrix::stable_kernel::{build_radial_table, StableParams};

#[test]
fn cauchy_table_matches_closed_form() {
    let table = build_radial_table(StableParams::new(1.0, 1).unwrap(), 200.0, 2048).unwrap();
    for r in [0.0, 0.3, 1.0, 4.5, 50.0, 150.0, 400.0] {
        let exact = 1.0 / (std::f64::consts::PI * (1.0 + r * r));
        assert!((table.g(r) / exact - 1.0).abs() < 1e-6, "r={r}");
    }
    // two-sided mass beyond 10 is (2/π) arctan-complement
    let exact_tail = 1.0 - 2.0 / std::f64::consts::PI * 10f64.atan();
    assert!((table.tail_mass(10.0) / exact_tail - 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn profile_is_positive_and_decreasing(alpha in 0.4f64..1.9) {
        let table = build_radial_table(StableParams::new(alpha, 1).unwrap(), 100.0, 512).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let r = 0.05 * (k as f64).powf(1.6);
            let g = table.g(r);
            prop_assert!(g > 0.0 && g <= prev * (1.0 + 1e-9));
            prev = g;
        }
    }

    #[test]
    fn flow_inverse_identity(t in 0.01f64..1.0, frac in 0.0f64..1.0, y in -3.0f64..3.0) {
        let m = MollifiedDrift::new(DriftSpec::ttw(0.5, 10.0, 1).unwrap(), 0.7).unwrap();
        let s = frac * t;
        let back = solve_flow(&m, Direction::Backward, s, &[y], t, 1e-10).unwrap();
        let fwd = upsilon(&m, t - s, back.end(), t - s).unwrap()[0];
        prop_assert!((fwd - back.at(s)[0]).abs() < 1e-8);
    }

    #[test]
    fn q_kernel_below_h_kernel(t in 0.01f64..1.0, x in -3.0f64..3.0, y in -3.0f64..3.0, lambda in 0.0f64..0.3) {
        let m = MollifiedDrift::new(DriftSpec::ttw(0.5, 10.0, 1).unwrap(), 0.7).unwrap();
        let spec = KernelSpec::new(lambda, 0.7, 1, Some(m.into())).unwrap();
        let q = eval_Q(&spec, t, &[x], &[y]).unwrap();
        let h = eval_H(&spec, t, &[x], &[y]).unwrap();
        prop_assert!(q > 0.0 && q <= h * (1.0 + 1e-12));
    }
}
