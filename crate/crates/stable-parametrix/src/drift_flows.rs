//! Hölder drifts, their Gaussian mollification `b(t, x)` at bandwidth
//! `t^{1/α}`, the approximate flows `υ_t^s`, `θ_t^s` and Picard iterates.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quad::{gauss_hermite, gauss_legendre, Rule};

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("invalid drift specification: {0}")]
    Spec(String),
    #[error("tabulated drift queried at x = {x} outside its hull [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("flow solver stalled at r = {r:e} with step {h:e} after {steps} steps")]
    SolverStall { r: f64, h: f64, steps: usize },
}

/// Linearly interpolated drift samples in `d = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub xs: Vec<f64>,
    pub bs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    /// `min(|x|^γ, cap) x/|x|`.
    Ttw { gamma: f64, cap: f64 },
    Constant(Vec<f64>),
    /// `sin(x_i)` componentwise.
    LipschitzDemo,
    Tabulated(Tabulated),
}

/// A bounded γ-Hölder drift on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub dim: usize,
    pub gamma: f64,
    pub bound: f64,
    pub holder_const: f64,
}

impl DriftSpec {
    pub fn ttw(gamma: f64, cap: f64, dim: usize) -> Result<Self, DriftError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(DriftError::Spec(format!("gamma = {gamma} must lie in (0, 1]")));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(DriftError::Spec(format!("cap = {cap} must be positive and finite")));
        }
        Ok(Self {
            kind: DriftKind::Ttw { gamma, cap },
            dim: check_dim(dim)?,
            gamma,
            bound: cap,
            holder_const: 2f64.powf(1.0 - gamma),
        })
    }

    pub fn constant(c: Vec<f64>) -> Result<Self, DriftError> {
        let dim = check_dim(c.len())?;
        let bound = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { kind: DriftKind::Constant(c), dim, gamma: 1.0, bound, holder_const: 0.0 })
    }

    pub fn lipschitz_demo(dim: usize) -> Result<Self, DriftError> {
        let dim = check_dim(dim)?;
        Ok(Self {
            kind: DriftKind::LipschitzDemo,
            dim,
            gamma: 1.0,
            bound: (dim as f64).sqrt(),
            holder_const: 1.0,
        })
    }

    /// Tabulated drift with a user-declared Hölder exponent; the Hölder
    /// constant is the largest two-point quotient over the knots.
    pub fn tabulated(xs: Vec<f64>, bs: Vec<f64>, gamma: f64) -> Result<Self, DriftError> {
        if xs.len() != bs.len() || xs.len() < 2 {
            return Err(DriftError::Spec("tabulated drift needs at least two (x, b) pairs".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DriftError::Spec("tabulated x values must be strictly increasing".into()));
        }
        if bs.iter().chain(&xs).any(|v| !v.is_finite()) {
            return Err(DriftError::Spec("tabulated values must be finite".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(DriftError::Spec(format!("gamma = {gamma} must lie in (0, 1]")));
        }
        let bound = bs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut holder_const = 0.0f64;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                holder_const = holder_const.max((bs[j] - bs[i]).abs() / (xs[j] - xs[i]).powf(gamma));
            }
        }
        Ok(Self { kind: DriftKind::Tabulated(Tabulated { xs, bs }), dim: 1, gamma, bound, holder_const })
    }

    /// Two-point Hölder estimate for tabulated drifts: `log2` of the ratio of
    /// oscillations at twice and once the finest knot spacing.
    pub fn effective_gamma(&self) -> Option<f64> {
        let DriftKind::Tabulated(tab) = &self.kind else { return None };
        let h = tab.xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let osc = |step: f64| {
            let mut m = 0.0f64;
            let mut x = tab.xs[0];
            while x + step <= *tab.xs.last().unwrap() {
                m = m.max((interp(tab, x + step) - interp(tab, x)).abs());
                x += 0.5 * h;
            }
            m
        };
        let (o1, o2) = (osc(h), osc(2.0 * h));
        (o1 > 0.0 && o2 > 0.0).then(|| (o2 / o1).log2())
    }

    /// Points where the drift fails to be smooth (d = 1 only).
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            DriftKind::Ttw { gamma, cap } => {
                let c = cap.powf(1.0 / gamma);
                vec![-c, 0.0, c]
            }
            DriftKind::Tabulated(t) => t.xs.clone(),
            _ => Vec::new(),
        }
    }

    /// Points where the drift is not locally Lipschitz (d = 1 only).
    pub fn cusps(&self) -> Vec<f64> {
        match &self.kind {
            DriftKind::Ttw { gamma, .. } if *gamma < 1.0 => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Scalar evaluation for `d = 1`.
    #[inline]
    pub fn eval_scalar(&self, x: f64) -> Result<f64, DriftError> {
        Ok(match &self.kind {
            DriftKind::Ttw { gamma, cap } => {
                let m = x.abs().powf(*gamma).min(*cap);
                if x > 0.0 {
                    m
                } else if x < 0.0 {
                    -m
                } else {
                    0.0
                }
            }
            DriftKind::Constant(c) => c[0],
            DriftKind::LipschitzDemo => x.sin(),
            DriftKind::Tabulated(t) => {
                let (lo, hi) = (t.xs[0], *t.xs.last().unwrap());
                if !(x >= lo && x <= hi) {
                    return Err(DriftError::Extrapolation { x, lo, hi });
                }
                interp(t, x)
            }
        })
    }

    /// Evaluate into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), DriftError> {
        if x.len() != self.dim || out.len() != self.dim {
            return Err(DriftError::Domain(format!("point has dimension {}, drift has {}", x.len(), self.dim)));
        }
        match &self.kind {
            DriftKind::Ttw { gamma, cap } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let f = if r > 0.0 { r.powf(*gamma).min(*cap) / r } else { 0.0 };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = f * v;
                }
            }
            DriftKind::Constant(c) => out.copy_from_slice(c),
            DriftKind::LipschitzDemo => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v.sin();
                }
            }
            DriftKind::Tabulated(_) => out[0] = self.eval_scalar(x[0])?,
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<usize, DriftError> {
    if (1..=3).contains(&dim) {
        Ok(dim)
    } else {
        Err(DriftError::Spec(format!("dimension {dim} must be 1, 2 or 3")))
    }
}

fn interp(t: &Tabulated, x: f64) -> f64 {
    let i = t.xs.partition_point(|v| *v <= x).clamp(1, t.xs.len() - 1);
    let (x0, x1) = (t.xs[i - 1], t.xs[i]);
    let w = (x - x0) / (x1 - x0);
    t.bs[i - 1] * (1.0 - w) + t.bs[i] * w
}

/// `b(x)`.
pub fn eval_drift(spec: &DriftSpec, x: &[f64]) -> Result<Vec<f64>, DriftError> {
    let mut out = vec![0.0; spec.dim];
    spec.eval_into(x, &mut out)?;
    Ok(out)
}

/// Mollified value, spatial gradient `∂_j b_i` and time derivative at one point.
#[derive(Debug, Clone)]
pub struct MollifiedValue {
    pub value: Vec<f64>,
    pub grad: DMatrix<f64>,
    pub dt: Vec<f64>,
}

/// Gaussian-mollified family `b(t, x) = E b(x + t^{1/α} N)`.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    pub base: DriftSpec,
    pub alpha: f64,
    rules: Arc<Rules>,
}

#[derive(Debug)]
struct Rules {
    gh: Rule,
    gl: Rule,
    kinks: Vec<f64>,
}

/// Gauss–Hermite nodes per dimension for `d = 1, 2, 3`.
const GH_NODES: [usize; 3] = [64, 24, 12];
/// Half-width, in standard deviations, of the truncated Gaussian integral.
const GAUSS_CUT: f64 = 12.0;

impl MollifiedDrift {
    pub fn new(base: DriftSpec, alpha: f64) -> Result<Self, DriftError> {
        Self::with_nodes(base, alpha, GH_NODES[0])
    }

    /// Override the Gauss–Hermite node count used in `d = 1`.
    pub fn with_nodes(base: DriftSpec, alpha: f64, n1: usize) -> Result<Self, DriftError> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(DriftError::Spec(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        let n = if base.dim == 1 { n1 } else { GH_NODES[base.dim - 1] };
        let kinks = if base.dim == 1 { base.kinks() } else { Vec::new() };
        let rules = Rules { gh: gauss_hermite(n), gl: gauss_legendre(10), kinks };
        Ok(Self { base, alpha, rules: Arc::new(rules) })
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// Bandwidth `t^{1/α}`.
    pub fn bandwidth(&self, t: f64) -> f64 {
        t.powf(1.0 / self.alpha)
    }

    /// `δ = 1 − 1/α + γ/α`.
    pub fn delta(&self) -> f64 {
        1.0 - 1.0 / self.alpha + self.base.gamma / self.alpha
    }

    /// `b(t, x)`; `t = 0` returns `b(x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DriftError> {
        if !(t >= 0.0) {
            return Err(DriftError::Domain(format!("time t = {t} must be nonnegative")));
        }
        if t == 0.0 {
            return eval_drift(&self.base, x);
        }
        Ok(self.moments(t, x, false)?.value)
    }

    /// Scalar `b(t, x)` in `d = 1`.
    pub fn eval_scalar(&self, t: f64, x: f64) -> Result<f64, DriftError> {
        if t <= 0.0 {
            return self.base.eval_scalar(x);
        }
        let w = self.bandwidth(t);
        let mut acc = 0.0;
        self.gauss_1d(x, w, |n, wt| {
            acc += wt * self.base.eval_scalar(x + w * n)?;
            Ok(())
        })?;
        Ok(acc)
    }

    /// Value, gradient and time derivative in one pass; requires `t > 0`.
    pub fn eval_all(&self, t: f64, x: &[f64]) -> Result<MollifiedValue, DriftError> {
        if !(t > 0.0) {
            return Err(DriftError::Domain(format!("gradient needs t > 0, got {t}")));
        }
        self.moments(t, x, true)
    }

    /// `∇b(t, x)` as the matrix `∂_j b_i`.
    pub fn grad(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, DriftError> {
        Ok(self.eval_all(t, x)?.grad)
    }

    /// `∂_t b(t, x)`.
    pub fn dt(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DriftError> {
        Ok(self.eval_all(t, x)?.dt)
    }

    /// Visit the nodes and weights of the standard normal integral on `R`.
    /// Gauss–Hermite unless a kink lies within the cut, in which case a
    /// Gauss–Legendre rule split and graded at the kinks is used.
    fn gauss_1d(
        &self,
        x: f64,
        w: f64,
        mut f: impl FnMut(f64, f64) -> Result<(), DriftError>,
    ) -> Result<(), DriftError> {
        let inside: Vec<f64> = self
            .rules
            .kinks
            .iter()
            .map(|k| (k - x) / w)
            .filter(|n| n.abs() < GAUSS_CUT)
            .collect();
        if inside.is_empty() {
            let s = std::f64::consts::SQRT_2;
            let c = 1.0 / std::f64::consts::PI.sqrt();
            for (z, wt) in self.rules.gh.nodes.iter().zip(&self.rules.gh.weights) {
                f(s * z, c * wt)?;
            }
            return Ok(());
        }
        let mut br = vec![-GAUSS_CUT];
        br.extend(inside.iter().copied());
        br.push(GAUSS_CUT);
        br.sort_by(|a, b| a.total_cmp(b));
        br.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let is_kink = |v: f64| inside.iter().any(|k| (k - v).abs() < 1e-14);
        let phi = |n: f64| (-0.5 * n * n).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let gl = &self.rules.gl;
        let visit = |a: f64, b: f64, f: &mut dyn FnMut(f64, f64) -> Result<(), DriftError>| {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (z, wt) in gl.nodes.iter().zip(&gl.weights) {
                let n = mid + half * z;
                f(n, half * wt * phi(n))?;
            }
            Ok::<(), DriftError>(())
        };
        for seg in br.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let pieces = ((b - a).ceil() as usize).max(1);
            let h = (b - a) / pieces as f64;
            for p in 0..pieces {
                let (pa, pb) = (a + p as f64 * h, a + (p + 1) as f64 * h);
                let left = p == 0 && is_kink(a);
                let right = p + 1 == pieces && is_kink(b);
                match (left, right) {
                    (false, false) => visit(pa, pb, &mut f)?,
                    _ => {
                        // geometric grading towards the kink end(s)
                        let m = if left && right { 0.5 * (pa + pb) } else if left { pb } else { pa };
                        if left {
                            let mut hi = m;
                            for _ in 0..40 {
                                let lo = pa + 0.5 * (hi - pa);
                                visit(lo, hi, &mut f)?;
                                hi = lo;
                            }
                        }
                        if right {
                            let mut lo = m;
                            for _ in 0..40 {
                                let hi = pb - 0.5 * (pb - lo);
                                visit(lo, hi, &mut f)?;
                                lo = hi;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn moments(&self, t: f64, x: &[f64], derivs: bool) -> Result<MollifiedValue, DriftError> {
        let d = self.base.dim;
        if x.len() != d {
            return Err(DriftError::Domain(format!("point has dimension {}, drift has {d}", x.len())));
        }
        let w = self.bandwidth(t);
        let mut value = vec![0.0; d];
        let mut grad = DMatrix::zeros(d, d);
        let mut dt = vec![0.0; d];
        let bx = if derivs { eval_drift(&self.base, x)? } else { vec![0.0; d] };
        if d == 1 {
            let (mut v, mut g, mut s) = (0.0, 0.0, 0.0);
            self.gauss_1d(x[0], w, |n, wt| {
                let b = self.base.eval_scalar(x[0] + w * n)?;
                v += wt * b;
                if derivs {
                    g += wt * (b - bx[0]) * n;
                    s += wt * (b - bx[0]) * (n * n - 1.0);
                }
                Ok(())
            })?;
            value[0] = v;
            grad[(0, 0)] = g / w;
            dt[0] = s / w * (w / (self.alpha * t));
        } else {
            let gh = &self.rules.gh;
            let m = gh.len();
            let s2 = std::f64::consts::SQRT_2;
            let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
            let mut idx = vec![0usize; d];
            let mut z = vec![0.0; d];
            let mut b = vec![0.0; d];
            loop {
                let mut wt = norm;
                let mut n2 = 0.0;
                for k in 0..d {
                    let n = s2 * gh.nodes[idx[k]];
                    wt *= gh.weights[idx[k]];
                    z[k] = x[k] + w * n;
                    n2 += n * n;
                }
                self.base.eval_into(&z, &mut b)?;
                for i in 0..d {
                    value[i] += wt * b[i];
                    if derivs {
                        for j in 0..d {
                            grad[(i, j)] += wt * (b[i] - bx[i]) * (z[j] - x[j]) / (w * w);
                        }
                        dt[i] += wt * (b[i] - bx[i]) * (n2 - d as f64) / w;
                    }
                }
                let mut k = 0;
                loop {
                    idx[k] += 1;
                    if idx[k] < m {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                    if k == d {
                        break;
                    }
                }
                if k == d {
                    break;
                }
            }
            let wd = w / (self.alpha * t);
            for v in dt.iter_mut() {
                *v *= wd;
            }
        }
        Ok(MollifiedValue { value, grad, dt })
    }
}

/// `b(t, x)` for `t ≥ 0`.
pub fn eval_mollified(m: &MollifiedDrift, t: f64, x: &[f64]) -> Result<Vec<f64>, DriftError> {
    m.eval(t, x)
}

/// `∇b(t, x)` for `t > 0`.
pub fn eval_mollified_grad(m: &MollifiedDrift, t: f64, x: &[f64]) -> Result<DMatrix<f64>, DriftError> {
    m.grad(t, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `dυ/dr = b(|r − s|, υ)`.
    Forward,
    /// `dθ/dr = −b(|r − s|, θ)`.
    Backward,
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest accepted normalised local error estimate.
    pub max_err: f64,
}

/// Accepted states of an adaptive flow solve with cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    pub s_anchor: f64,
    pub direction: Direction,
    pub stats: SolverStats,
}

impl FlowResult {
    /// Final state.
    pub fn end(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// State at `r` in `[0, t_end]` by Hermite interpolation.
    pub fn at(&self, r: f64) -> Vec<f64> {
        let n = self.times.len();
        if r <= self.times[0] {
            return self.values[0].clone();
        }
        if r >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let i = self.times.partition_point(|v| *v <= r).clamp(1, n - 1) - 1;
        let h = self.times[i + 1] - self.times[i];
        let t = (r - self.times[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (0..self.values[i].len())
            .map(|k| {
                h00 * self.values[i][k]
                    + h10 * h * self.derivs[i][k]
                    + h01 * self.values[i + 1][k]
                    + h11 * h * self.derivs[i + 1][k]
            })
            .collect()
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Solve `υ_·^s(x)` (forward) or `θ_·^s(y)` (backward) on `[0, t_end]`.
///
/// Steps are clamped to half the distance to the anchor `s` where the
/// Lipschitz constant of `b(|r − s|, ·)` blows up; within `tol / bound` of
/// the anchor the remaining interval is taken in one step.
pub fn solve_flow(
    m: &MollifiedDrift,
    direction: Direction,
    s_anchor: f64,
    start: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<FlowResult, DriftError> {
    if !(t_end >= 0.0) || !(tol > 0.0) {
        return Err(DriftError::Domain(format!("need t_end ≥ 0 and tol > 0, got {t_end}, {tol}")));
    }
    let d = m.dim();
    if start.len() != d {
        return Err(DriftError::Domain(format!("start has dimension {}, drift has {d}", start.len())));
    }
    let sign = if direction == Direction::Forward { 1.0 } else { -1.0 };
    let mut stats = SolverStats::default();
    let rhs = |r: f64, v: &[f64], stats: &mut SolverStats| -> Result<Vec<f64>, DriftError> {
        stats.rhs_evals += 1;
        let mut b = m.eval(((r - s_anchor).abs()).max(0.0), v)?;
        for x in b.iter_mut() {
            *x *= sign;
        }
        Ok(b)
    };
    let mut times = vec![0.0];
    let mut values = vec![start.to_vec()];
    let mut k0 = rhs(0.0, start, &mut stats)?;
    let mut derivs = vec![k0.clone()];
    if t_end == 0.0 {
        return Ok(FlowResult { times, values, derivs, s_anchor, direction, stats });
    }
    let h_cap = tol.powf(0.25).min(t_end);
    let snap = tol / m.base.bound.max(1.0);
    let mut r = 0.0;
    let mut y = start.to_vec();
    let mut h = (1e-3 * t_end).min(h_cap);
    let mut k = vec![vec![0.0; d]; 7];
    while r < t_end {
        let dist = (s_anchor - r).abs();
        let mut hh = h.min(h_cap).min(t_end - r);
        let approaching = s_anchor > r;
        if dist > 0.0 && approaching && s_anchor <= t_end {
            if dist <= snap {
                hh = dist;
            } else {
                hh = hh.min(0.5 * dist);
            }
        }
        if r >= s_anchor || !approaching {
            // leaving the anchor: keep steps below the distance already travelled
            let since = r - s_anchor;
            if since >= 0.0 {
                hh = hh.min((since).max(1e-3 * tol.sqrt() * t_end));
            }
        }
        if t_end - r <= 1e-13 * t_end.max(1.0) {
            break;
        }
        k[0] = k0.clone();
        let mut tmp = vec![0.0; d];
        for st in 1..7 {
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..st {
                    acc += A[st][j] * k[j][i];
                }
                tmp[i] = y[i] + hh * acc;
            }
            k[st] = rhs(r + C[st] * hh, &tmp, &mut stats)?;
        }
        let y5 = tmp.clone();
        let mut err = 0.0f64;
        for i in 0..d {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err = err.max((hh * e).abs() / sc);
        }
        if err <= 1.0 {
            let dist = s_anchor - r;
            r = if t_end - (r + hh) < 1e-13 * t_end {
                t_end
            } else if dist > 0.0 && (dist - hh).abs() <= 1e-15 * s_anchor.abs().max(1.0) {
                s_anchor
            } else {
                r + hh
            };
            y = y5;
            k0 = k[6].clone();
            times.push(r);
            values.push(y.clone());
            derivs.push(k0.clone());
            stats.steps += 1;
            stats.max_err = stats.max_err.max(err);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = hh * fac;
        } else {
            stats.rejected += 1;
            h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 * t_end.max(1.0) {
                return Err(DriftError::SolverStall { r, h, steps: stats.steps });
            }
        }
        if stats.steps + stats.rejected > 200_000 {
            return Err(DriftError::SolverStall { r, h, steps: stats.steps });
        }
    }
    Ok(FlowResult { times, values, derivs, s_anchor, direction, stats })
}

/// Default solver tolerance of the flow helpers.
pub const FLOW_TOL: f64 = 1e-10;

/// `κ_t(y) = θ_t^0(y)`.
pub fn kappa(m: &MollifiedDrift, y: &[f64], t: f64) -> Result<Vec<f64>, DriftError> {
    Ok(solve_flow(m, Direction::Backward, 0.0, y, t, FLOW_TOL)?.end().to_vec())
}

/// `υ_t^s(x)`.
pub fn upsilon(m: &MollifiedDrift, s: f64, x: &[f64], t: f64) -> Result<Vec<f64>, DriftError> {
    Ok(solve_flow(m, Direction::Forward, s, x, t, FLOW_TOL)?.end().to_vec())
}

/// Picard iterate `υ_{k,t}(x)`, trapezoidal on 4096 uniform intervals.
pub fn picard_iterate(spec: &DriftSpec, k: usize, x: &[f64], t: f64) -> Result<Vec<f64>, DriftError> {
    if !(t >= 0.0) {
        return Err(DriftError::Domain(format!("time t = {t} must be nonnegative")));
    }
    let d = spec.dim;
    if x.len() != d {
        return Err(DriftError::Domain(format!("point has dimension {}, drift has {d}", x.len())));
    }
    if k == 0 || t == 0.0 {
        return Ok(x.to_vec());
    }
    const N: usize = 4096;
    let h = t / N as f64;
    let mut path = vec![x.to_vec(); N + 1];
    let mut b = vec![vec![0.0; d]; N + 1];
    for _ in 0..k {
        for j in 0..=N {
            spec.eval_into(&path[j], &mut b[j])?;
        }
        let mut next = vec![x.to_vec(); N + 1];
        for j in 1..=N {
            for i in 0..d {
                next[j][i] = next[j - 1][i] + 0.5 * h * (b[j - 1][i] + b[j][i]);
            }
        }
        path = next;
    }
    Ok(path[N].clone())
}

/// Both sides and middle term of the flow comparison inequality with the
/// smallest feasible constant.
#[derive(Debug, Clone)]
pub struct FlowComparison {
    /// `|x − θ_t^0(y)|`.
    pub base: f64,
    /// `|υ_{t−s}^{t−s}(x) − θ_s^0(y)|`.
    pub middle: f64,
    pub lower: f64,
    pub upper: f64,
    pub c_min: f64,
}

pub fn check_flow_comparison(
    m: &MollifiedDrift,
    x: &[f64],
    y: &[f64],
    t: f64,
    s: f64,
) -> Result<FlowComparison, DriftError> {
    if !(0.0 <= s && s <= t) {
        return Err(DriftError::Domain(format!("need 0 ≤ s ≤ t, got s = {s}, t = {t}")));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let back = solve_flow(m, Direction::Backward, 0.0, y, t, FLOW_TOL)?;
    let base = dist(x, back.end());
    let fwd = upsilon(m, t - s, x, t - s)?;
    let middle = dist(&fwd, &back.at(s));
    let td = t.powf(m.delta());
    let tr = t.powf(1.0 / m.alpha + m.delta());
    let up = |c: f64| (c * td).exp() * base + c * tr;
    let lo = |c: f64| (-c * td).exp() * base - c * tr;
    let solve = |f: &dyn Fn(f64) -> bool| {
        if f(0.0) {
            return 0.0;
        }
        let mut hi = 1.0;
        while !f(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let c_up = solve(&|c| up(c) >= middle);
    let c_lo = solve(&|c| lo(c) <= middle);
    let c_min = c_up.max(c_lo);
    Ok(FlowComparison { base, middle, lower: lo(c_min), upper: up(c_min), c_min })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ttw() -> MollifiedDrift {
        MollifiedDrift::new(DriftSpec::ttw(0.5, 10.0, 1).unwrap(), 0.7).unwrap()
    }

    #[test]
    fn drift_values() {
        let s = DriftSpec::ttw(0.5, 10.0, 1).unwrap();
        assert_eq!(eval_drift(&s, &[4.0]).unwrap(), vec![2.0]);
        assert_eq!(eval_drift(&s, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(eval_drift(&s, &[1e6]).unwrap(), vec![10.0]);
        let c = DriftSpec::constant(vec![0.3, -1.0]).unwrap();
        assert_eq!(eval_drift(&c, &[5.0, 7.0]).unwrap(), vec![0.3, -1.0]);
    }

    #[test]
    fn tabulated_extrapolation_is_an_error() {
        let s = DriftSpec::tabulated(vec![-1.0, 0.0, 2.0], vec![1.0, 0.0, -2.0], 1.0).unwrap();
        assert!((s.eval_scalar(1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(s.eval_scalar(2.5), Err(DriftError::Extrapolation { .. })));
        assert!((s.effective_gamma().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollified_constant_and_odd() {
        let c = MollifiedDrift::new(DriftSpec::constant(vec![0.7]).unwrap(), 0.7).unwrap();
        assert!((c.eval(0.3, &[2.0]).unwrap()[0] - 0.7).abs() < 1e-14);
        assert!(c.grad(0.3, &[2.0]).unwrap()[(0, 0)].abs() < 1e-14);
        assert_eq!(ttw().eval(0.1, &[0.0]).unwrap()[0].abs() < 1e-15, true);
    }

    #[test]
    fn mollified_matches_dense_hermite() {
        let dense = MollifiedDrift::with_nodes(DriftSpec::ttw(0.5, 10.0, 1).unwrap(), 0.7, 256).unwrap();
        let a = ttw().eval(0.1, &[1.0]).unwrap()[0];
        let b = dense.eval(0.1, &[1.0]).unwrap()[0];
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn split_rule_near_kink() {
        // E sign(N)|N|^{1/2} shifted: compare against a brute-force midpoint sum
        let m = ttw();
        let t = 0.05;
        let w = m.bandwidth(t);
        let x = 0.3 * w;
        let n = 2_000_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let z = lo + (i as f64 + 0.5) * h;
            let b = m.base.eval_scalar(x + w * z).unwrap();
            acc += h * b * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        }
        let v = m.eval(t, &[x]).unwrap()[0];
        assert!((v - acc).abs() < 1e-7, "{v} {acc}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = ttw();
        for &(t, x) in &[(0.1, 1.0), (0.05, 0.01), (0.2, -0.4)] {
            let g = m.grad(t, &[x]).unwrap()[(0, 0)];
            let e = 1e-5;
            let fd = (m.eval(t, &[x + e]).unwrap()[0] - m.eval(t, &[x - e]).unwrap()[0]) / (2.0 * e);
            assert!(((g - fd) / fd).abs() < 1e-4, "t={t} x={x} {g} {fd}");
            let dt = m.dt(t, &[x]).unwrap()[0];
            let et = 1e-6;
            let fdt = (m.eval(t + et, &[x]).unwrap()[0] - m.eval(t - et, &[x]).unwrap()[0]) / (2.0 * et);
            assert!((dt - fdt).abs() < 1e-4 * fdt.abs().max(1e-3), "t={t} x={x} {dt} {fdt}");
        }
    }

    #[test]
    fn constant_flow_is_a_translation() {
        let c = MollifiedDrift::new(DriftSpec::constant(vec![0.5]).unwrap(), 1.2).unwrap();
        let f = solve_flow(&c, Direction::Forward, 0.3, &[1.0], 0.8, 1e-10).unwrap();
        assert!((f.end()[0] - 1.4).abs() < 1e-12);
        assert!((kappa(&c, &[1.0], 0.8).unwrap()[0] - 0.6).abs() < 1e-12);
        assert!((f.at(0.4)[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn ttw_flow_from_zero_stays() {
        let m = ttw();
        for t in [0.2, 0.1] {
            let v = upsilon(&m, t, &[0.0], t).unwrap()[0];
            assert!(v.abs() < 1e-12);
            // distance to the maximal branch is t^2/4, below C t^{1+γ/α}
            assert!(0.25 * t * t <= t.powf(1.0 + 0.5 / 0.7));
        }
    }

    #[test]
    fn inverse_flow_identity() {
        let m = ttw();
        let (t, s, y) = (0.3, 0.12, 0.37);
        let th = solve_flow(&m, Direction::Backward, s, &[y], t, 1e-11).unwrap();
        let lhs = upsilon(&m, t - s, th.end(), t - s).unwrap()[0];
        let rhs = th.at(s)[0];
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} {rhs}");
    }

    #[test]
    fn picard_examples() {
        let s = DriftSpec::ttw(0.5, 10.0, 1).unwrap();
        assert_eq!(picard_iterate(&s, 0, &[0.4], 0.3).unwrap(), vec![0.4]);
        assert_eq!(picard_iterate(&s, 3, &[0.0], 0.3).unwrap(), vec![0.0]);
        assert!((picard_iterate(&s, 1, &[1.0], 0.1).unwrap()[0] - 1.1).abs() < 1e-12);
        let exact2 = 1.0 + 2.0 / 3.0 * (1.1f64.powf(1.5) - 1.0);
        assert!((picard_iterate(&s, 2, &[1.0], 0.1).unwrap()[0] - exact2).abs() < 1e-9);
    }

    #[test]
    fn comparison_constant_drift_needs_no_constant() {
        let c = MollifiedDrift::new(DriftSpec::constant(vec![0.5]).unwrap(), 0.9).unwrap();
        let r = check_flow_comparison(&c, &[0.2], &[1.0], 0.4, 0.1).unwrap();
        assert!((r.middle - r.base).abs() < 1e-10);
        assert!(r.c_min < 1e-6);
    }
}
