use std::f64::consts::PI;

use stable_parametrix::drift_flows::DriftSpec;
use stable_parametrix::engine::{compute_density, compute_dt_density, space_convolve, ACoeff, GridSpec, Model, ModelSpec};

fn cauchy(shift: f64) -> Model {
    let spec = ModelSpec::new(1.0, DriftSpec::constant(vec![shift]).unwrap(), ACoeff::Constant(1.0), 1.0, 0.3).unwrap();
    Model::build(spec).unwrap()
}

fn cauchy_p(t: f64, u: f64) -> f64 {
    t / (PI * (t * t + u * u))
}

#[test]
fn shifted_cauchy_density_is_exact() {
    let m = cauchy(0.4);
    let f = compute_density(&m, &GridSpec::default(), 0.5, 0.3).unwrap();
    for (y, p) in f.y.iter().zip(&f.p) {
        if (y - 0.5).abs() <= 10.0 {
            assert!((p / cauchy_p(0.5, y - 0.5) - 1.0).abs() < 1e-6, "y={y}");
        }
    }
    let (mass, _) = f.mass();
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
}

#[test]
fn cauchy_time_derivative_is_exact() {
    let m = cauchy(0.0);
    let t = 0.3;
    let (_, d) = compute_dt_density(&m, &GridSpec::default(), t, 0.0, 0.5).unwrap();
    for (y, dp) in d.y.iter().zip(&d.dp) {
        if y.abs() <= 10.0 {
            let exact = (y * y - t * t) / (PI * (t * t + y * y).powi(2));
            assert!((dp - exact).abs() < 1e-6 * cauchy_p(t, *y) / t, "y={y}");
        }
    }
}

#[test]
fn cauchy_semigroup_by_space_convolution() {
    let m = cauchy(0.0);
    let f = compute_density(&m, &GridSpec::default(), 0.2, 0.0).unwrap();
    let grid = stable_parametrix::engine::engine_grid(&m, &GridSpec::default(), 0.0, 0.2).unwrap();
    let out = space_convolve(&grid, &f.p, |z, y| cauchy_p(0.3, y - z)).unwrap();
    for (y, v) in grid.z.iter().zip(&out) {
        if y.abs() <= 3.0 {
            assert!((v / cauchy_p(0.5, *y) - 1.0).abs() < 1e-2, "y={y}");
        }
    }
}
