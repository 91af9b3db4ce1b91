//! Majorant kernels `G^(λ)`, `H^(λ)`, `Q^(λ)` and empirical certification of
//! their sub-convolution and comparison properties.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::drift_flows::{solve_flow, Direction, DriftError, MollifiedDrift};
use crate::stable_kernel::{RadialTable, StableParams};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("invalid kernel specification: {0}")]
    Spec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition e^(-v)|x| - v <= |y| <= e^v|x| + v violated: |x| = {x}, |y| = {y}, v = {v}")]
    Comparison { x: f64, y: f64, v: f64 },
    #[error(transparent)]
    Drift(#[from] DriftError),
}

/// Solver tolerance used for `κ_t` inside the kernels.
const KAPPA_TOL: f64 = 1e-9;

/// Parameters of `H^(λ)` / `Q^(λ)`. Without a drift `κ_t` is the identity.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub lambda: f64,
    pub alpha: f64,
    pub dim: usize,
    pub drift: Option<Arc<MollifiedDrift>>,
}

impl KernelSpec {
    pub fn new(lambda: f64, alpha: f64, dim: usize, drift: Option<Arc<MollifiedDrift>>) -> Result<Self, BoundsError> {
        StableParams::new(alpha, dim).map_err(|e| BoundsError::Spec(e.to_string()))?;
        if !(0.0..alpha).contains(&lambda) {
            return Err(BoundsError::Spec(format!("lambda = {lambda} must lie in [0, alpha = {alpha})")));
        }
        if let Some(m) = &drift {
            if m.dim() != dim || (m.alpha - alpha).abs() > 0.0 {
                return Err(BoundsError::Spec("drift dimension or alpha does not match the kernel".into()));
            }
        }
        Ok(Self { lambda, alpha, dim, drift })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, BoundsError> {
        Self::new(lambda, self.alpha, self.dim, self.drift.clone())
    }

    /// `κ_t(y)`.
    pub fn kappa(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, BoundsError> {
        match &self.drift {
            None => Ok(y.to_vec()),
            Some(m) => Ok(solve_flow(m, Direction::Backward, 0.0, y, t, KAPPA_TOL)?.end().to_vec()),
        }
    }
}

/// `G^(λ)(x) = (|x| ∨ 1)^{-d-λ}`.
pub fn eval_g_majorant(lambda: f64, x: &[f64]) -> f64 {
    let r = norm(x);
    r.max(1.0).powf(-(x.len() as f64) - lambda)
}

/// Alias of [`eval_g_majorant`] under its conventional name.
#[allow(non_snake_case)]
pub fn eval_G(lambda: f64, x: &[f64]) -> f64 {
    eval_g_majorant(lambda, x)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Radial form of the `H`/`Q` kernels given `ρ = |κ_t(y) − x|`.
pub fn h_radial(lambda: f64, alpha: f64, dim: usize, t: f64, rho: f64, plateau: bool) -> f64 {
    let u = rho / t.powf(1.0 / alpha);
    let cap = t.powf(-lambda / alpha);
    let p = if lambda == 0.0 { 1.0 } else { u.powf(lambda) };
    let factor = if plateau { p.max(1.0).min(cap) } else { p.min(cap) };
    let d = dim as f64;
    factor * t.powf(-d / alpha) * u.max(1.0).powf(-d - alpha)
}

fn check_t(t: f64) -> Result<(), BoundsError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Domain(format!("time t = {t} must be positive")))
    }
}

/// `H_t^(λ)(x, y)`.
#[allow(non_snake_case)]
pub fn eval_H(spec: &KernelSpec, t: f64, x: &[f64], y: &[f64]) -> Result<f64, BoundsError> {
    check_t(t)?;
    let k = spec.kappa(t, y)?;
    let rho = norm(&k.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(h_radial(spec.lambda, spec.alpha, spec.dim, t, rho, true))
}

/// `Q_t^(λ)(x, y)`.
#[allow(non_snake_case)]
pub fn eval_Q(spec: &KernelSpec, t: f64, x: &[f64], y: &[f64]) -> Result<f64, BoundsError> {
    check_t(t)?;
    let k = spec.kappa(t, y)?;
    let rho = norm(&k.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(h_radial(spec.lambda, spec.alpha, spec.dim, t, rho, false))
}

/// Uniform trapezoidal grid for the `d = 1` space convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvQuad {
    pub n_points: usize,
    /// Half-width in units of `t^{1/α}`, added to `|x − y|` and the drift range.
    pub width_scale: f64,
}

impl Default for ConvQuad {
    fn default() -> Self {
        Self { n_points: 1024, width_scale: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SubconvReport {
    pub convolution: f64,
    pub h_t: f64,
    pub ratio: f64,
    /// Analytic tail share of the convolution.
    pub tail_fraction: f64,
    /// Set when the tail share exceeds 1%.
    pub warning: Option<String>,
}

/// `(H_{t−s} ∗ H_s)(x, y) / H_t(x, y)` in `d = 1`.
pub fn check_subconvolution(
    spec: &KernelSpec,
    t: f64,
    s: f64,
    x: f64,
    y: f64,
    quad: ConvQuad,
) -> Result<SubconvReport, BoundsError> {
    if spec.dim != 1 {
        return Err(BoundsError::Spec("sub-convolution check is implemented for d = 1".into()));
    }
    if !(0.0 < s && s < t) {
        return Err(BoundsError::Domain(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    if quad.n_points < 16 {
        return Err(BoundsError::Spec("convolution grid needs at least 16 points".into()));
    }
    let (l, a, d) = (spec.lambda, spec.alpha, spec.dim);
    let ky_s = spec.kappa(s, &[y])?[0];
    let ky_t = spec.kappa(t, &[y])?[0];
    let drift_range = spec.drift.as_ref().map_or(0.0, |m| m.base.bound * t);
    let half = quad.width_scale * t.powf(1.0 / a) + (x - y).abs() + drift_range;
    let (lo, hi) = (x.min(ky_s) - half, x.max(ky_s) + half);
    let n = quad.n_points;
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z = lo + i as f64 * h;
            let kz = spec.kappa(t - s, &[z])?[0];
            Ok(h_radial(l, a, d, t - s, (kz - x).abs(), true) * h_radial(l, a, d, s, (ky_s - z).abs(), true))
        })
        .collect::<Result<_, BoundsError>>()?;
    let mut body = 0.5 * (vals[0] + vals[n - 1]);
    body += vals[1..n - 1].iter().sum::<f64>();
    body *= h;
    // power tails: each far factor decays like |z|^{-1-α} (times at most |z|^λ)
    let p = 2.0 + 2.0 * a - 2.0 * l;
    let tail_left = vals[0] * (x.min(ky_s) - lo) / (p - 1.0);
    let tail_right = vals[n - 1] * (hi - x.max(ky_s)) / (p - 1.0);
    let tail = tail_left + tail_right;
    let conv = body + tail;
    let h_t = h_radial(l, a, d, t, (ky_t - x).abs(), true);
    let tail_fraction = tail / conv;
    let warning = (tail_fraction > 0.01)
        .then(|| format!("tail correction carries {:.2}% of the convolution", 100.0 * tail_fraction));
    Ok(SubconvReport { convolution: conv, h_t, ratio: conv / h_t, tail_fraction, warning })
}

/// One sub-convolution sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertRow {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub ratio: f64,
}

/// Sub-convolution ratios over a sweep with per-λ maxima.
#[derive(Debug, Clone)]
pub struct Certification {
    pub rows: Vec<CertRow>,
    /// `(λ, max ratio)`.
    pub max_ratio: Vec<(f64, f64)>,
    /// Number of samples whose tail correction exceeded 1%.
    pub tail_warnings: usize,
}

impl Certification {
    pub fn max_for(&self, lambda: f64) -> Option<f64> {
        self.max_ratio.iter().find(|(l, _)| *l == lambda).map(|(_, r)| *r)
    }

    /// `t,s,x,y,lambda,ratio` rows followed by a `# key=value` footer.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, meta: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "t,s,x,y,lambda,ratio")?;
        for r in &self.rows {
            writeln!(w, "{:e},{:e},{:e},{:e},{:e},{:e}", r.t, r.s, r.x, r.y, r.lambda, r.ratio)?;
        }
        for (l, m) in &self.max_ratio {
            writeln!(w, "# max_ratio[lambda={l}]={m:e}")?;
        }
        writeln!(w, "# samples={}", self.rows.len())?;
        writeln!(w, "# tail_warnings={}", self.tail_warnings)
    }
}

/// Ratios at `s = f·t` for `f` in `s_fracs` and `y = x + o·t^{1/α}` for `o` in `offsets`.
pub fn certify_subconvolution(
    base: &KernelSpec,
    lambdas: &[f64],
    ts: &[f64],
    s_fracs: &[f64],
    offsets: &[f64],
    x: f64,
    quad: ConvQuad,
) -> Result<Certification, BoundsError> {
    let mut rows = Vec::new();
    let mut max_ratio = Vec::new();
    let mut tail_warnings = 0;
    for &lambda in lambdas {
        let spec = base.with_lambda(lambda)?;
        let mut best = 0.0f64;
        for &t in ts {
            for &f in s_fracs {
                for &o in offsets {
                    let (s, y) = (f * t, x + o * t.powf(1.0 / base.alpha));
                    let rep = check_subconvolution(&spec, t, s, x, y, quad)?;
                    if !rep.ratio.is_finite() {
                        return Err(BoundsError::Domain(format!("non-finite ratio at t = {t}, s = {s}, y = {y}")));
                    }
                    tail_warnings += rep.warning.is_some() as usize;
                    best = best.max(rep.ratio);
                    rows.push(CertRow { t, s, x, y, lambda, ratio: rep.ratio });
                }
            }
        }
        max_ratio.push((lambda, best));
    }
    Ok(Certification { rows, max_ratio, tail_warnings })
}

/// Prefactor `C₁C₂^k t^{-1+(k−1)ζ} max(t^{δ₁}, t^{δ₂}) / Γ(kζ)` of the k-th
/// convolution power bound.
pub fn series_majorant(k: usize, t: f64, c1: f64, c2: f64, zeta: f64, delta1: f64, delta2: f64) -> f64 {
    assert!(k >= 1 && zeta > 0.0);
    let kf = k as f64;
    let lg = ln_gamma(kf * zeta);
    c1 * c2.powi(k as i32) * t.powf(-1.0 + (kf - 1.0) * zeta) * t.powf(delta1).max(t.powf(delta2)) * (-lg).exp()
}

/// Smallest `K` whose majorant falls below `tol`, capped at `k_max`.
pub fn truncation_order(t: f64, c1: f64, c2: f64, zeta: f64, delta: f64, tol: f64, k_max: usize) -> usize {
    (1..=k_max)
        .find(|&k| series_majorant(k, t, c1, c2, zeta, delta, delta) < tol)
        .unwrap_or(k_max)
}

fn ln_gamma(x: f64) -> f64 {
    puruspe::ln_gamma(x)
}

#[derive(Debug, Clone)]
pub struct GComparison {
    pub g_x: f64,
    pub g_y: f64,
    /// Smallest `C` with `e^{-Cv} g(x) ≤ g(y) ≤ e^{Cv} g(x)`.
    pub c_min: f64,
}

/// Fit the constant of the stable-density comparison under a `v`-perturbation.
pub fn check_g_comparison(table: &RadialTable, v: f64, x: &[f64], y: &[f64]) -> Result<GComparison, BoundsError> {
    if !(v > 0.0) {
        return Err(BoundsError::Domain(format!("v = {v} must be positive")));
    }
    let (nx, ny) = (norm(x), norm(y));
    let slack = 1e-12 * (1.0 + nx);
    if ny < (-v).exp() * nx - v - slack || ny > v.exp() * nx + v + slack {
        return Err(BoundsError::Comparison { x: nx, y: ny, v });
    }
    let g_x = table.g(nx);
    let g_y = table.g(ny);
    Ok(GComparison { g_x, g_y, c_min: (g_y / g_x).ln().abs() / v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift_flows::DriftSpec;
    use crate::stable_kernel::build_radial_table;
    use proptest::prelude::*;

    #[test]
    fn g_values() {
        assert_eq!(eval_G(0.5, &[0.7]), 1.0);
        assert!((eval_G(0.5, &[-2.0]) - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((eval_G(0.5, &[1.2, 1.6]) - 2f64.powf(-2.5)).abs() < 1e-15);
    }

    #[test]
    fn h_and_q_zero_drift() {
        let s = KernelSpec::new(0.3, 0.7, 1, None).unwrap();
        let (t, x, y) = (0.1f64, 0.0, 1.0);
        let u = 1.0 / t.powf(1.0 / 0.7);
        let hand = u.powf(0.3).max(1.0).min(t.powf(-0.3 / 0.7)) * t.powf(-1.0 / 0.7) * u.powf(-1.7);
        assert!((eval_H(&s, t, &[x], &[y]).unwrap() - hand).abs() < 1e-12 * hand);
        assert_eq!(eval_Q(&s, t, &[0.2], &[0.2]).unwrap(), 0.0);
        assert!((eval_H(&s, t, &[0.2], &[0.2]).unwrap() - t.powf(-1.0 / 0.7)).abs() < 1e-9);
        let s0 = s.with_lambda(0.0).unwrap();
        assert_eq!(eval_Q(&s0, t, &[0.2], &[0.9]).unwrap(), eval_H(&s0, t, &[0.2], &[0.9]).unwrap());
        assert!(eval_H(&s, 0.0, &[0.0], &[0.0]).is_err());
        assert!(KernelSpec::new(0.7, 0.7, 1, None).is_err());
    }

    #[test]
    fn q_below_h_with_drift() {
        let m = Arc::new(MollifiedDrift::new(DriftSpec::ttw(0.5, 10.0, 1).unwrap(), 0.7).unwrap());
        let s = KernelSpec::new(0.3, 0.7, 1, Some(m)).unwrap();
        for i in 0..20 {
            let (t, x, y) = (0.02 + 0.02 * i as f64, -1.0 + 0.1 * i as f64, 1.5 - 0.13 * i as f64);
            assert!(eval_Q(&s, t, &[x], &[y]).unwrap() <= eval_H(&s, t, &[x], &[y]).unwrap());
        }
    }

    #[test]
    fn cauchy_subconvolution_ratio() {
        // for α = 1 and λ = 0 the H-kernel is a fixed multiple of the Cauchy
        // kernel away from the plateau; the ratio must stay bounded
        let s = KernelSpec::new(0.0, 1.0, 1, None).unwrap();
        let r1 = check_subconvolution(&s, 0.5, 0.25, 0.0, 1.3, ConvQuad::default()).unwrap();
        let r2 = check_subconvolution(&s, 0.5, 0.25, 1.3, 0.0, ConvQuad::default()).unwrap();
        assert!((r1.ratio - r2.ratio).abs() < 1e-9 * r1.ratio);
        assert!(r1.ratio.is_finite() && r1.ratio > 0.0);
        let fine = check_subconvolution(&s, 0.5, 0.25, 0.0, 1.3, ConvQuad { n_points: 4096, ..Default::default() })
            .unwrap();
        assert!((fine.ratio / r1.ratio - 1.0).abs() < 0.01);
    }

    #[test]
    fn majorant_decays() {
        let z = 2.0 / 7.0;
        let m: Vec<f64> = (1..=120).map(|k| series_majorant(k, 0.2, 1.0, 3.0, z, z, 0.3)).collect();
        let q: Vec<f64> = m.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(q[100] < q[50] && q[50] < 1.0 && q[118] < 0.75);
        let k1 = series_majorant(1, 0.2, 2.0, 3.0, z, z, z);
        assert!((k1 - 2.0 * 3.0 * 0.2f64.powf(-1.0 + z) / puruspe::gamma(z)).abs() < 1e-9 * k1);
        assert!(truncation_order(0.2, 1.0, 3.0, z, z, 1e-8, 12) <= 12);
    }

    #[test]
    fn cauchy_g_comparison() {
        let table = build_radial_table(StableParams::new(1.0, 1).unwrap(), 200.0, 256).unwrap();
        let v = 0.3f64;
        let x = 1.5;
        let y = v.exp() * x;
        let c = check_g_comparison(&table, v, &[x], &[y]).unwrap();
        let exact = ((1.0 + y * y) / (1.0 + x * x)).ln() / v;
        assert!((c.c_min - exact).abs() < 1e-6);
        assert_eq!(check_g_comparison(&table, v, &[x], &[x]).unwrap().c_min, 0.0);
        assert!(check_g_comparison(&table, v, &[x], &[5.0]).is_err());
    }

    proptest! {
        #[test]
        fn g_monotone_in_lambda(x in -50.0f64..50.0, l1 in 0.0f64..2.0, l2 in 0.0f64..2.0) {
            let (hi, lo) = if l1 > l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(eval_G(hi, &[x]) <= eval_G(lo, &[x]));
        }

        #[test]
        fn g_power_shift(x in 0.01f64..1e4, lambda in 0.1f64..1.9) {
            let eps = 0.5 * lambda;
            prop_assert!(x.powf(eps) * eval_G(lambda, &[x]) <= eval_G(lambda - eps, &[x]) * (1.0 + 1e-12));
        }

        #[test]
        fn q_below_h(t in 0.01f64..1.0, rho in 0.0f64..100.0, lambda in 0.0f64..0.69) {
            prop_assert!(h_radial(lambda, 0.7, 1, t, rho, false) <= h_radial(lambda, 0.7, 1, t, rho, true));
        }
    }
}
