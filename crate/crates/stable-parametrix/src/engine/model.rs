//! Model parameters and the pointwise kernels `p⁰`, `p̃`, `Φ` and their time
//! derivatives.

use std::sync::Arc;

use crate::drift_flows::{picard_iterate, solve_flow, Direction, DriftSpec, MollifiedDrift, FLOW_TOL};
use crate::engine::EngineError;
use crate::stable_kernel::{build_radial_table, RadialTable, StableParams};

/// Jump intensity `a(x) = |σ(x)|^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ACoeff {
    Constant(f64),
    /// `base + amp / (1 + |x|²)`.
    Bump { base: f64, amp: f64 },
}

impl ACoeff {
    #[inline]
    pub fn eval_scalar(&self, x: f64) -> f64 {
        match *self {
            ACoeff::Constant(c) => c,
            ACoeff::Bump { base, amp } => base + amp / (1.0 + x * x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ACoeff::Constant(c) => c,
            ACoeff::Bump { base, amp } => base + amp / (1.0 + x.iter().map(|v| v * v).sum::<f64>()),
        }
    }

    /// `(inf a, sup a)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ACoeff::Constant(c) => (c, c),
            ACoeff::Bump { base, amp } => (base.min(base + amp), base.max(base + amp)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            ACoeff::Constant(_) => true,
            ACoeff::Bump { amp, .. } => amp == 0.0,
        }
    }
}

/// Validated model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub alpha: f64,
    pub dim: usize,
    pub drift: DriftSpec,
    pub a: ACoeff,
    /// Hölder exponent of `a`.
    pub eta: f64,
    pub chi: f64,
}

impl ModelSpec {
    pub fn new(alpha: f64, drift: DriftSpec, a: ACoeff, eta: f64, chi: f64) -> Result<Self, EngineError> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(EngineError::Config(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        let gamma = drift.gamma;
        if !(alpha + gamma > 1.0) {
            return Err(EngineError::Balance { alpha, gamma });
        }
        let (lo, hi) = a.bounds();
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(EngineError::Config(format!(
                "jump intensity must satisfy 0 < c <= a(x) <= C < inf, got range [{lo}, {hi}]"
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(EngineError::Config(format!("eta = {eta} must lie in (0, 1]")));
        }
        if !(chi > 0.0 && chi < alpha.min(eta)) {
            return Err(EngineError::Config(format!(
                "chi = {chi} violates 0 < chi < min(alpha, eta) = {}",
                alpha.min(eta)
            )));
        }
        Ok(Self { alpha, dim: drift.dim, drift, a, eta, chi })
    }

    /// `δ = 1 − 1/α + γ/α`.
    pub fn delta(&self) -> f64 {
        1.0 - 1.0 / self.alpha + self.drift.gamma / self.alpha
    }

    /// `ζ = min(δ, χ, χ/α)`.
    pub fn zeta(&self) -> f64 {
        self.delta().min(self.chi).min(self.chi / self.alpha)
    }

    /// `α′ = min(1, α)`.
    pub fn alpha_prime(&self) -> f64 {
        self.alpha.min(1.0)
    }

    /// `ρ_k = 1 + γ + … + γ^k − 1/α`.
    pub fn picard_rho(&self, k: usize) -> f64 {
        (0..=k).map(|j| self.drift.gamma.powi(j as i32)).sum::<f64>() - 1.0 / self.alpha
    }

    /// True when `Φ ≡ 0`: constant drift and constant intensity.
    pub fn is_trivial(&self) -> bool {
        matches!(self.drift.kind, crate::drift_flows::DriftKind::Constant(_)) && self.a.is_constant()
    }
}

/// Centre used by the principal part `p̃`.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowChoice {
    /// `υ_t^t(x)`.
    ApproxAnchorT,
    Picard(usize),
    User(Vec<f64>),
}

/// A model together with its kernel table and mollified drift.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub table: Arc<RadialTable>,
    pub drift: Arc<MollifiedDrift>,
}

/// Default kernel table resolution.
pub const TABLE_R_MAX: f64 = 200.0;
pub const TABLE_POINTS: usize = 2048;

impl Model {
    pub fn new(spec: ModelSpec, table: Arc<RadialTable>) -> Result<Self, EngineError> {
        let p = table.params();
        if (p.alpha - spec.alpha).abs() > 0.0 || p.dim != spec.dim {
            return Err(EngineError::Config(format!(
                "kernel table (alpha = {}, d = {}) does not match the model (alpha = {}, d = {})",
                p.alpha, p.dim, spec.alpha, spec.dim
            )));
        }
        let drift = Arc::new(MollifiedDrift::new(spec.drift.clone(), spec.alpha)?);
        Ok(Self { spec, table, drift })
    }

    /// Build the default kernel table and wrap.
    pub fn build(spec: ModelSpec) -> Result<Self, EngineError> {
        let table = build_radial_table(StableParams::new(spec.alpha, spec.dim)?, TABLE_R_MAX, TABLE_POINTS)?;
        Self::new(spec, Arc::new(table))
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn a(&self, x: f64) -> f64 {
        self.spec.a.eval_scalar(x)
    }

    /// `κ_t(y)`.
    pub fn kappa(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, EngineError> {
        if t == 0.0 {
            return Ok(y.to_vec());
        }
        Ok(solve_flow(&self.drift, Direction::Backward, 0.0, y, t, FLOW_TOL)?.end().to_vec())
    }

    /// `υ_t^t(x)`.
    pub fn upsilon(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        if t == 0.0 {
            return Ok(x.to_vec());
        }
        Ok(solve_flow(&self.drift, Direction::Forward, t, x, t, FLOW_TOL)?.end().to_vec())
    }

    /// Centre of `p̃_t(x, ·)` for the given flow choice.
    pub fn tilde_center(&self, t: f64, x: &[f64], choice: &FlowChoice) -> Result<Vec<f64>, EngineError> {
        match choice {
            FlowChoice::ApproxAnchorT => self.upsilon(t, x),
            FlowChoice::Picard(k) => {
                let rho = self.spec.picard_rho(*k);
                if !(rho > 0.0) {
                    return Err(EngineError::Picard { k: *k, rho });
                }
                Ok(picard_iterate(&self.spec.drift, *k, x, t)?)
            }
            FlowChoice::User(c) => {
                if c.len() != x.len() {
                    return Err(EngineError::Config("user flow point has the wrong dimension".into()));
                }
                Ok(c.clone())
            }
        }
    }
}

fn check_t(t: f64) -> Result<(), EngineError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(EngineError::Domain(format!("time t = {t} must be positive")))
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `p⁰_t(x, y) = (t a(y))^{-d/α} g((κ_t(y) − x)/(t a(y))^{1/α})`.
pub fn eval_p0(model: &Model, t: f64, x: &[f64], y: &[f64]) -> Result<f64, EngineError> {
    check_t(t)?;
    let k = model.kappa(t, y)?;
    Ok(p0_given_kappa(model, t, x, y, &k))
}

fn p0_given_kappa(model: &Model, t: f64, x: &[f64], y: &[f64], k: &[f64]) -> f64 {
    let alpha = model.alpha();
    let d = model.spec.dim as f64;
    let ta = t * model.spec.a.eval(y);
    let s = ta.powf(1.0 / alpha);
    let r = dot(&diff(k, x), &diff(k, x)).sqrt() / s;
    ta.powf(-d / alpha) * model.table.g(r)
}

/// `p̃_t(x, y) = (t a(x))^{-d/α} g((y − υ)/(t a(x))^{1/α})`.
pub fn eval_p_tilde(model: &Model, t: f64, x: &[f64], y: &[f64], choice: &FlowChoice) -> Result<f64, EngineError> {
    check_t(t)?;
    let c = model.tilde_center(t, x, choice)?;
    Ok(p_tilde_given_center(model, t, x, y, &c))
}

pub(crate) fn p_tilde_given_center(model: &Model, t: f64, x: &[f64], y: &[f64], c: &[f64]) -> f64 {
    let alpha = model.alpha();
    let d = model.spec.dim as f64;
    let ta = t * model.spec.a.eval(x);
    let s = ta.powf(1.0 / alpha);
    let r = dot(&diff(y, c), &diff(y, c)).sqrt() / s;
    ta.powf(-d / alpha) * model.table.g(r)
}

/// Quantities of a `y`-column shared by `Φ_s(·, y)` and `∂_sΦ_s(·, y)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ColumnData {
    pub s: f64,
    pub a_y: f64,
    pub kappa: f64,
    /// `b(s, κ_s(y))`.
    pub beta: f64,
    /// `d/ds b(s, κ_s(y))`.
    pub dbeta: f64,
}

impl ColumnData {
    pub fn new(model: &Model, s: f64, y: f64, kappa: f64, derivs: bool) -> Result<Self, EngineError> {
        let a_y = model.a(y);
        let (beta, dbeta) = if derivs {
            let m = model.drift.eval_all(s, &[kappa])?;
            let beta = m.value[0];
            (beta, m.dt[0] - m.grad[(0, 0)] * beta)
        } else {
            (model.drift.eval_scalar(s, kappa)?, 0.0)
        };
        Ok(Self { s, a_y, kappa, beta, dbeta })
    }
}

/// `Φ_s(z, y)` in `d = 1` given the column data of `y`.
#[inline]
pub(crate) fn phi_1d(model: &Model, c: &ColumnData, z: f64, b_z: f64, a_z: f64) -> f64 {
    let alpha = model.alpha();
    let sa = c.s * c.a_y;
    let scale = sa.powf(1.0 / alpha);
    let xi = (c.kappa - z) / scale;
    let r = xi.abs();
    let sg = if xi < 0.0 { -1.0 } else { 1.0 };
    let inv = 1.0 / scale;
    let mut v = 0.0;
    if a_z != c.a_y {
        v += (a_z - c.a_y) * inv / sa * model.table.lg(r);
    }
    v + inv * inv * (c.beta - b_z) * sg * model.table.dg(r)
}

/// `∂_sΦ_s(z, y)` in `d = 1`.
#[inline]
pub(crate) fn dphi_1d(model: &Model, c: &ColumnData, z: f64, b_z: f64, a_z: f64) -> f64 {
    let alpha = model.alpha();
    let s = c.s;
    let sa = s * c.a_y;
    let scale = sa.powf(1.0 / alpha);
    let xi = (c.kappa - z) / scale;
    let r = xi.abs();
    let sg = if xi < 0.0 { -1.0 } else { 1.0 };
    let dxi = -c.beta / scale - xi / (alpha * s);
    let a_pre = 1.0 / (scale * sa);
    let b_pre = 1.0 / (scale * scale);
    let mut v = 0.0;
    if a_z != c.a_y {
        let da = -(1.0 + 1.0 / alpha) * a_pre / s;
        v += (a_z - c.a_y) * (da * model.table.lg(r) + a_pre * sg * model.table.dlg(r) * dxi);
    }
    let db = -(2.0 / alpha) * b_pre / s;
    let g1 = sg * model.table.dg(r);
    v + db * (c.beta - b_z) * g1 + b_pre * c.dbeta * g1 + b_pre * (c.beta - b_z) * model.table.d2g(r) * dxi
}

/// `Φ_t(x, y) = (L_x − ∂_t) p⁰_t(x, y)`.
pub fn eval_phi(model: &Model, t: f64, x: &[f64], y: &[f64]) -> Result<f64, EngineError> {
    check_t(t)?;
    let k = model.kappa(t, y)?;
    if model.spec.dim == 1 {
        let c = ColumnData::new(model, t, y[0], k[0], false)?;
        let bz = model.spec.drift.eval_scalar(x[0])?;
        return Ok(phi_1d(model, &c, x[0], bz, model.a(x[0])));
    }
    let alpha = model.alpha();
    let d = model.spec.dim as f64;
    let a_y = model.spec.a.eval(y);
    let a_x = model.spec.a.eval(x);
    let ta = t * a_y;
    let scale = ta.powf(1.0 / alpha);
    let xi: Vec<f64> = diff(&k, x).iter().map(|v| v / scale).collect();
    let lg = crate::stable_kernel::eval_frac_lap_g(&model.table, &xi)?;
    let grad = crate::stable_kernel::eval_grad_g(&model.table, &xi)?;
    let beta = model.drift.eval(t, &k)?;
    let bx = crate::drift_flows::eval_drift(&model.spec.drift, x)?;
    Ok((a_x - a_y) * ta.powf(-d / alpha - 1.0) * lg + ta.powf(-(d + 1.0) / alpha) * dot(&grad, &diff(&beta, &bx)))
}

/// `∂_t p⁰_t(x, y)` in `d = 1`.
pub fn eval_dt_p0(model: &Model, t: f64, x: &[f64], y: &[f64]) -> Result<f64, EngineError> {
    check_t(t)?;
    if model.spec.dim != 1 {
        return Err(EngineError::Config("time derivatives are implemented for d = 1".into()));
    }
    let k = model.kappa(t, y)?[0];
    let beta = model.drift.eval_scalar(t, k)?;
    Ok(dt_p0_1d(model, t, x[0], model.a(y[0]), k, beta))
}

#[inline]
pub(crate) fn dt_p0_1d(model: &Model, t: f64, x: f64, a_y: f64, kappa: f64, beta: f64) -> f64 {
    let alpha = model.alpha();
    let ta = t * a_y;
    let scale = ta.powf(1.0 / alpha);
    let xi = (kappa - x) / scale;
    let sg = if xi < 0.0 { -1.0 } else { 1.0 };
    a_y / (scale * ta) * model.table.lg(xi.abs()) - beta / (scale * scale) * sg * model.table.dg(xi.abs())
}

/// `∂_tΦ_t(x, y)` in `d = 1`.
pub fn eval_dt_phi(model: &Model, t: f64, x: &[f64], y: &[f64]) -> Result<f64, EngineError> {
    check_t(t)?;
    if model.spec.dim != 1 {
        return Err(EngineError::Config("time derivatives are implemented for d = 1".into()));
    }
    let k = model.kappa(t, y)?[0];
    let c = ColumnData::new(model, t, y[0], k, true)?;
    let bz = model.spec.drift.eval_scalar(x[0])?;
    Ok(dphi_1d(model, &c, x[0], bz, model.a(x[0])))
}
