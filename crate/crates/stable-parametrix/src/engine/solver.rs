//! Kernel matrices, the row-form Volterra series and the density fields.

use rayon::prelude::*;

use crate::drift_flows::{solve_flow, Direction, FlowResult};
use crate::engine::grid::{ColumnQuad, ColumnShape, GridSpec, SpaceGrid, TimeMesh};
use crate::engine::model::{dphi_1d, dt_p0_1d, p_tilde_given_center, phi_1d, ColumnData, FlowChoice, Model};
use crate::engine::EngineError;
use crate::quad::gauss_legendre;

/// Solver tolerance of the backward flows `κ_·(y)`.
const KAPPA_TOL: f64 = 1e-10;
/// Panels integrated with 4-point Gauss–Legendre before switching to Simpson.
const GL_PANELS: usize = 4;

/// Dense square matrix acting on row vectors: `(vᵀM)_i = Σ_j v_j M_{ji}`.
#[derive(Debug, Clone)]
pub(crate) struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.len();
        let mut m = Self::zeros(n);
        for (i, c) in cols.iter().enumerate() {
            for (j, v) in c.iter().enumerate() {
                m.data[j * n + i] = *v;
            }
        }
        m
    }

    fn axpy(&mut self, c: f64, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// `out += c · vᵀM`.
    #[inline]
    pub fn vecmul_add(&self, v: &[f64], c: f64, out: &mut [f64]) {
        let n = self.n;
        for (j, vj) in v.iter().enumerate() {
            let s = c * vj;
            if s == 0.0 {
                continue;
            }
            let row = &self.data[j * n..(j + 1) * n];
            for (o, r) in out.iter_mut().zip(row) {
                *o += s * r;
            }
        }
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.n + i]
    }
}

/// Kernel matrix at one time node together with the pointwise column
/// `Φ_s(x, ·)` at the start point.
struct NodeMats {
    phi: Mat,
    dphi: Option<Mat>,
    delta: Vec<f64>,
    ddelta: Option<Vec<f64>>,
}

/// Panel moments `∫ (1−θ) K_s ds` and `∫ θ K_s ds`.
struct Moments {
    left: Mat,
    right: Mat,
    dleft: Vec<f64>,
    dright: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self { left: Mat::zeros(n), right: Mat::zeros(n), dleft: vec![0.0; n], dright: vec![0.0; n] }
    }

    fn add(&mut self, wl: f64, wr: f64, m: &Mat, delta: &[f64]) {
        self.left.axpy(wl, m);
        self.right.axpy(wr, m);
        for k in 0..delta.len() {
            self.dleft[k] += wl * delta[k];
            self.dright[k] += wr * delta[k];
        }
    }
}

/// How the previous series term behaves on the top time panel `σ ∈ [0, Δ]`.
#[derive(Debug, Clone, Copy)]
enum Start {
    /// `v(σ) → δ_x`.
    Delta,
    /// `v(σ) ~ σ^β`.
    Regular(f64),
    /// `v(σ) ~ σ^{β−1}`.
    Singular(f64),
}

/// Per-term diagnostics of the series.
#[derive(Debug, Clone, Default)]
pub struct SeriesDiagnostics {
    /// `sup_y |v_k(t, y)|` for `k = 0, 1, …`.
    pub norms: Vec<f64>,
    /// True when the last term was still above the tolerance.
    pub truncated: bool,
    /// Most negative density value relative to `sup p`, if any.
    pub negative_min: f64,
}

/// Precomputed kernel matrices for one start point and horizon.
pub struct Engine {
    pub model: Model,
    pub spec: GridSpec,
    pub x: f64,
    pub grid: SpaceGrid,
    pub mesh: TimeMesh,
    flows: Vec<FlowResult>,
    trivial: bool,
    moments: Vec<Moments>,
    dmoments: Vec<Moments>,
    /// Node matrices `K_n`, `n = 1..=m` (index `n − 1`).
    nodes: Vec<NodeMats>,
    /// `v_0 = p⁰_{τ_i}(x, ·)` and `∂_t p⁰`, index `i = 1..=m` (index 0 unused).
    p0: Vec<Vec<f64>>,
    dp0: Vec<Vec<f64>>,
    kinks: Vec<f64>,
    quad: ColumnQuad,
}

/// Space grid used by the engine for a run from `x` to time `t`.
pub fn engine_grid(model: &Model, spec: &GridSpec, x: f64, t: f64) -> Result<SpaceGrid, EngineError> {
    let (a_min, _) = model.spec.a.bounds();
    let anchors = path_anchors(model, x, t, 0.5 * t / spec.time_nodes as f64, a_min)?;
    let cusps = if model.spec.is_trivial() { Vec::new() } else { model.spec.drift.cusps() };
    SpaceGrid::build(spec, x, &anchors, &cusps)
}

/// Centres `υ_τ(x)` and widths `(τ a_min)^{1/α}` at `τ = t, t/2, …, τ_min`.
fn path_anchors(model: &Model, x: f64, t: f64, tau_min: f64, a_min: f64) -> Result<Vec<(f64, f64)>, EngineError> {
    let mut taus = vec![t];
    while taus[taus.len() - 1] * 0.5 > tau_min {
        let next = taus[taus.len() - 1] * 0.5;
        taus.push(next);
    }
    taus.push(tau_min);
    taus.iter()
        .map(|&tau| Ok((model.upsilon(tau, &[x])?[0], (tau * a_min).powf(1.0 / model.alpha()))))
        .collect()
}

/// Sum of the series at all mesh times.
#[derive(Debug, Clone)]
pub struct Series {
    /// `p` at `τ_i`, `i = 0..=m` (index 0 empty).
    pub p: Vec<Vec<f64>>,
    pub diagnostics: SeriesDiagnostics,
}

impl Engine {
    /// Assemble all kernel matrices for `p_·(x, ·)` on `(0, t]`.
    pub fn new(model: &Model, spec: &GridSpec, x: f64, t: f64, derivative: bool) -> Result<Self, EngineError> {
        spec.validate()?;
        if model.spec.dim != 1 {
            return Err(EngineError::Config("the series engine is implemented for d = 1".into()));
        }
        if !(t > 0.0 && t.is_finite()) || !x.is_finite() {
            return Err(EngineError::Domain(format!("need t > 0 and finite x, got t = {t}, x = {x}")));
        }
        let grid = engine_grid(model, spec, x, t)?;
        Self::on_grid(model, spec, x, t, grid, derivative)
    }

    /// As [`Engine::new`] on a given space grid, e.g. one built for a nearby time.
    pub fn on_grid(
        model: &Model,
        spec: &GridSpec,
        x: f64,
        t: f64,
        grid: SpaceGrid,
        derivative: bool,
    ) -> Result<Self, EngineError> {
        spec.validate()?;
        if model.spec.dim != 1 {
            return Err(EngineError::Config("the series engine is implemented for d = 1".into()));
        }
        if !(t > 0.0 && t.is_finite()) || !(x > grid.z[0] && x < grid.z[grid.len() - 1]) {
            return Err(EngineError::Domain(format!("need t > 0 and x inside the grid, got t = {t}, x = {x}")));
        }
        let mesh = TimeMesh::new(t, spec.time_nodes, model.spec.zeta(), spec.panel0_nodes);
        let flows: Vec<FlowResult> = grid
            .z
            .par_iter()
            .map(|&y| solve_flow(&model.drift, Direction::Backward, 0.0, &[y], t, KAPPA_TOL))
            .collect::<Result<_, _>>()?;
        let mut eng = Self {
            model: model.clone(),
            spec: *spec,
            x,
            grid,
            mesh,
            flows,
            trivial: model.spec.is_trivial(),
            moments: Vec::new(),
            dmoments: Vec::new(),
            nodes: Vec::new(),
            p0: Vec::new(),
            dp0: Vec::new(),
            kinks: model.spec.drift.kinks(),
            quad: ColumnQuad::new(spec.window),
        };
        eng.fill_p0(derivative)?;
        if !eng.trivial {
            eng.assemble(derivative)?;
        }
        Ok(eng)
    }

    pub fn t(&self) -> f64 {
        self.mesh.t
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    fn kappa(&self, j: usize, s: f64) -> f64 {
        self.flows[j].at(s)[0]
    }

    /// `κ_s(y_j)` for grid node `j`.
    pub fn kappa_at(&self, j: usize, s: f64) -> f64 {
        self.kappa(j, s)
    }

    fn fill_p0(&mut self, derivative: bool) -> Result<(), EngineError> {
        let m = self.mesh.m;
        let alpha = self.model.alpha();
        let mut p0 = vec![Vec::new(); m + 1];
        let mut dp0 = vec![Vec::new(); m + 1];
        for i in 1..=m {
            let tau = self.mesh.time(i);
            let rows: Vec<(f64, f64)> = (0..self.n())
                .into_par_iter()
                .map(|j| {
                    let y = self.grid.z[j];
                    let k = self.kappa(j, tau);
                    let a_y = self.model.a(y);
                    let ta = tau * a_y;
                    let sc = ta.powf(1.0 / alpha);
                    let p = self.model.table.g(((k - self.x) / sc).abs()) / sc;
                    let d = if derivative {
                        let beta = self.model.drift.eval_scalar(tau, k)?;
                        dt_p0_1d(&self.model, tau, self.x, a_y, k, beta)
                    } else {
                        0.0
                    };
                    Ok((p, d))
                })
                .collect::<Result<_, EngineError>>()?;
            p0[i] = rows.iter().map(|r| r.0).collect();
            if derivative {
                dp0[i] = rows.iter().map(|r| r.1).collect();
            }
        }
        self.p0 = p0;
        self.dp0 = dp0;
        Ok(())
    }

    /// Kernel matrix `Φ_s` (and `∂_sΦ_s`) on the grid.
    fn node(&self, s: f64, derivative: bool) -> Result<NodeMats, EngineError> {
        let model = &self.model;
        let alpha = model.alpha();
        let drift = &model.spec.drift;
        let n = self.n();
        let bx = drift.eval_scalar(self.x)?;
        let ax = model.a(self.x);
        let cols: Vec<(Vec<f64>, Option<Vec<f64>>, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let y = self.grid.z[i];
                let c = ColumnData::new(model, s, y, self.kappa(i, s), derivative)?;
                let shape = ColumnShape { center: c.kappa, width: (s * c.a_y).powf(1.0 / alpha), kinks: &self.kinks };
                let mut col = vec![0.0; n];
                let bz = |z: f64| drift.eval_scalar(z).unwrap_or(f64::NAN);
                self.quad.weights(&self.grid, &shape, |z| phi_1d(model, &c, z, bz(z), model.a(z)), &mut col);
                let delta = phi_1d(model, &c, self.x, bx, ax);
                let (dcol, ddelta) = if derivative {
                    let mut d = vec![0.0; n];
                    self.quad.weights(&self.grid, &shape, |z| dphi_1d(model, &c, z, bz(z), model.a(z)), &mut d);
                    (Some(d), dphi_1d(model, &c, self.x, bx, ax))
                } else {
                    (None, 0.0)
                };
                Ok((col, dcol, delta, ddelta))
            })
            .collect::<Result<_, EngineError>>()?;
        if cols.iter().any(|c| c.0.iter().any(|v| !v.is_finite())) {
            return Err(EngineError::Precision(format!("non-finite kernel weights at s = {s:e}")));
        }
        let phi = Mat::from_columns(&cols.iter().map(|c| c.0.clone()).collect::<Vec<_>>());
        let dphi = derivative.then(|| Mat::from_columns(&cols.iter().map(|c| c.1.clone().unwrap()).collect::<Vec<_>>()));
        Ok(NodeMats {
            phi,
            dphi,
            delta: cols.iter().map(|c| c.2).collect(),
            ddelta: derivative.then(|| cols.iter().map(|c| c.3).collect()),
        })
    }

    fn assemble(&mut self, derivative: bool) -> Result<(), EngineError> {
        let m = self.mesh.m;
        let dt = self.mesh.dt;
        let n = self.n();
        let mut nodes = Vec::with_capacity(m);
        for k in 1..=m {
            nodes.push(self.node(self.mesh.time(k), derivative)?);
        }
        let gl4 = gauss_legendre(4);
        let mut moments = Vec::with_capacity(m);
        let mut dmoments = Vec::new();
        for p in 0..m {
            let mut mo = Moments::zeros(n);
            let mut dmo = if derivative && p > 0 { Some(Moments::zeros(n)) } else { None };
            let lo = p as f64 * dt;
            let sub: Vec<(f64, f64)> = if p == 0 {
                self.mesh.panel0.clone()
            } else if p < GL_PANELS {
                gl4.nodes.iter().zip(&gl4.weights).map(|(u, w)| (lo + 0.5 * dt * (u + 1.0), 0.5 * dt * w)).collect()
            } else {
                Vec::new()
            };
            if sub.is_empty() {
                // Simpson with the node matrices at both ends
                let mid = self.node(lo + 0.5 * dt, derivative)?;
                let (k0, k1) = (&nodes[p - 1], &nodes[p]);
                mo.add(dt / 6.0, 0.0, &k0.phi, &k0.delta);
                mo.add(dt / 3.0, dt / 3.0, &mid.phi, &mid.delta);
                mo.add(0.0, dt / 6.0, &k1.phi, &k1.delta);
                if let Some(d) = dmo.as_mut() {
                    d.add(dt / 6.0, 0.0, k0.dphi.as_ref().unwrap(), k0.ddelta.as_ref().unwrap());
                    d.add(dt / 3.0, dt / 3.0, mid.dphi.as_ref().unwrap(), mid.ddelta.as_ref().unwrap());
                    d.add(0.0, dt / 6.0, k1.dphi.as_ref().unwrap(), k1.ddelta.as_ref().unwrap());
                }
            } else {
                for (s, w) in sub {
                    let th = (s - lo) / dt;
                    let nm = self.node(s, derivative && p > 0)?;
                    mo.add(w * (1.0 - th), w * th, &nm.phi, &nm.delta);
                    if let Some(d) = dmo.as_mut() {
                        d.add(w * (1.0 - th), w * th, nm.dphi.as_ref().unwrap(), nm.ddelta.as_ref().unwrap());
                    }
                }
            }
            moments.push(mo);
            if let Some(d) = dmo {
                dmoments.push(d);
            } else if derivative {
                dmoments.push(Moments::zeros(0));
            }
        }
        self.nodes = nodes;
        self.moments = moments;
        self.dmoments = dmoments;
        Ok(())
    }

    /// Next series term from `prev` (values at `τ_1..τ_m`, index 0 unused).
    fn step(&self, prev: &[Vec<f64>], start: Start) -> Vec<Vec<f64>> {
        let m = self.mesh.m;
        let dt = self.mesh.dt;
        let n = self.n();
        let mut out: Vec<Vec<f64>> = (1..=m)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; n];
                for p in 0..i.saturating_sub(1) {
                    self.moments[p].left.vecmul_add(&prev[i - p], 1.0, &mut acc);
                    self.moments[p].right.vecmul_add(&prev[i - p - 1], 1.0, &mut acc);
                }
                let top = i - 1;
                match start {
                    Start::Delta => {
                        self.moments[top].left.vecmul_add(&prev[1], 1.0, &mut acc);
                        for (a, d) in acc.iter_mut().zip(&self.moments[top].dright) {
                            *a += d;
                        }
                    }
                    Start::Regular(b) | Start::Singular(b) if i == 1 => {
                        let f = if matches!(start, Start::Singular(_)) { 2.0 / b } else { 1.0 };
                        self.moments[0].left.vecmul_add(&prev[1], f, &mut acc);
                    }
                    Start::Regular(b) => {
                        self.nodes[top - 1].phi.vecmul_add(&prev[1], dt / (b + 2.0), &mut acc);
                        self.nodes[top].phi.vecmul_add(&prev[1], dt / ((b + 1.0) * (b + 2.0)), &mut acc);
                    }
                    Start::Singular(b) => {
                        self.nodes[top - 1].phi.vecmul_add(&prev[1], dt / (b + 1.0), &mut acc);
                        self.nodes[top].phi.vecmul_add(&prev[1], dt / (b * (b + 1.0)), &mut acc);
                    }
                }
                acc
            })
            .collect();
        out.insert(0, Vec::new());
        out
    }

    /// Sum the series `p = Σ_k v_k` at every mesh time.
    pub fn solve(&self) -> Result<Series, EngineError> {
        let m = self.mesh.m;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut p = self.p0.clone();
        let mut diag = SeriesDiagnostics { norms: vec![sup(&self.p0[m])], ..Default::default() };
        if !self.trivial {
            let zeta = self.model.spec.zeta();
            let mut prev = self.p0.clone();
            for k in 1..=self.spec.k_max {
                let start = if k == 1 { Start::Delta } else { Start::Regular((k - 1) as f64 * zeta) };
                let next = self.step(&prev, start);
                for i in 1..=m {
                    for (a, b) in p[i].iter_mut().zip(&next[i]) {
                        *a += b;
                    }
                }
                let norm = sup(&next[m]);
                diag.norms.push(norm);
                prev = next;
                if norm <= self.spec.series_tol * diag.norms[0] {
                    break;
                }
                if k == self.spec.k_max {
                    diag.truncated = true;
                    if diag.norms[k] >= diag.norms[1] {
                        return Err(EngineError::Convergence { norms: diag.norms });
                    }
                }
            }
        }
        let top = sup(&p[m]);
        diag.negative_min = p[m].iter().fold(0.0f64, |a, b| a.min(*b)) / top;
        Ok(Series { p, diagnostics: diag })
    }

    /// `v_0` at mesh time `i`.
    pub fn p0_at(&self, i: usize) -> &[f64] {
        &self.p0[i]
    }

    pub(crate) fn dp0_at(&self, i: usize) -> &[f64] {
        &self.dp0[i]
    }

    pub(crate) fn node_phi(&self, k: usize) -> &Mat {
        &self.nodes[k - 1].phi
    }

    pub(crate) fn moments_lr(&self, p: usize) -> (&Mat, &Mat) {
        (&self.moments[p].left, &self.moments[p].right)
    }

    pub(crate) fn dmoments_lr(&self, p: usize) -> (&Mat, &Mat, &[f64]) {
        let d = &self.dmoments[p];
        (&d.left, &d.right, &d.dright)
    }

    pub(crate) fn has_derivative(&self) -> bool {
        self.trivial || !self.dmoments.is_empty()
    }

    pub(crate) fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// Field at mesh time `i` from a solved series.
    pub fn field(&self, series: &Series, i: usize) -> DensityField {
        let p = series.p[i].clone();
        let p0 = self.p0[i].clone();
        let residue = p.iter().zip(&p0).map(|(a, b)| a - b).collect();
        DensityField {
            t: self.mesh.time(i),
            x: self.x,
            alpha: self.model.alpha(),
            y: self.grid.z.clone(),
            weights: self.grid.weights(),
            p,
            p0,
            residue,
            p_tilde: None,
            r_tilde: None,
            center: None,
            diagnostics: series.diagnostics.clone(),
        }
    }

    /// Rows `Ψ_{τ_i}(x, ·) = Σ_k Φ^{⋆k}_{τ_i}(x, ·)` and the residual of
    /// `Ψ = Φ + Ψ ⋆ Φ` at `t`.
    pub fn psi(&self) -> Result<PsiField, EngineError> {
        let m = self.mesh.m;
        let n = self.n();
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if self.trivial {
            return Ok(PsiField {
                y: self.grid.z.clone(),
                psi: vec![0.0; n],
                phi: vec![0.0; n],
                norms: vec![0.0],
                residual: 0.0,
            });
        }
        let zeta = self.model.spec.zeta();
        let mut term: Vec<Vec<f64>> = std::iter::once(Vec::new())
            .chain((1..=m).map(|i| self.nodes[i - 1].delta.clone()))
            .collect();
        let mut psi = term.clone();
        let mut norms = vec![sup(&term[m])];
        for k in 1..self.spec.k_max {
            let next = self.step(&term, Start::Singular(k as f64 * zeta));
            for i in 1..=m {
                for (a, b) in psi[i].iter_mut().zip(&next[i]) {
                    *a += b;
                }
            }
            norms.push(sup(&next[m]));
            term = next;
            if norms[k] <= self.spec.series_tol * norms[0] {
                break;
            }
        }
        let conv = self.step(&psi, Start::Singular(zeta));
        let phi = self.nodes[m - 1].delta.clone();
        let res = (0..n).map(|j| (psi[m][j] - phi[j] - conv[m][j]).abs()).fold(0.0, f64::max);
        Ok(PsiField { y: self.grid.z.clone(), psi: psi[m].clone(), phi, norms, residual: res / sup(&psi[m]) })
    }
}

/// `p_t(x, ·)` and its components on the engine grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub t: f64,
    pub x: f64,
    pub alpha: f64,
    pub y: Vec<f64>,
    /// Quadrature weights of the grid.
    pub weights: Vec<f64>,
    pub p: Vec<f64>,
    pub p0: Vec<f64>,
    /// `r = p − p⁰`.
    pub residue: Vec<f64>,
    pub p_tilde: Option<Vec<f64>>,
    pub r_tilde: Option<Vec<f64>>,
    /// Centre of `p̃`.
    pub center: Option<f64>,
    pub diagnostics: SeriesDiagnostics,
}

impl DensityField {
    /// `∫ p dy` with power-tail correction; returns `(total, tail part)`.
    pub fn mass(&self) -> (f64, f64) {
        let body: f64 = self.weights.iter().zip(&self.p).map(|(w, v)| w * v).sum();
        let n = self.y.len();
        let c = self.center.unwrap_or(self.x);
        let tail = self.p[0] * (c - self.y[0]).abs() / self.alpha + self.p[n - 1] * (self.y[n - 1] - c).abs() / self.alpha;
        (body + tail, tail)
    }

    /// Cubic interpolation of a component at `v`.
    pub fn interp(&self, f: &[f64], v: f64) -> f64 {
        let n = self.y.len();
        let m = self.y.partition_point(|z| *z <= v).clamp(1, n - 1) - 1;
        let j0 = m.saturating_sub(1).min(n - 4);
        let zs = &self.y[j0..j0 + 4];
        let mut s = 0.0;
        for k in 0..4 {
            let mut c = 1.0;
            for l in 0..4 {
                if l != k {
                    c *= (v - zs[l]) / (zs[k] - zs[l]);
                }
            }
            s += c * f[j0 + k];
        }
        s
    }
}

/// Row `Ψ_t(x, ·)` with series diagnostics.
#[derive(Debug, Clone)]
pub struct PsiField {
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub norms: Vec<f64>,
    /// `sup |Ψ − Φ − Ψ⋆Φ| / sup |Ψ|` at `t`.
    pub residual: f64,
}

/// `∂_t p_t(x, ·)` on the engine grid.
#[derive(Debug, Clone)]
pub struct DerivativeField {
    pub t: f64,
    pub x: f64,
    pub y: Vec<f64>,
    pub dp: Vec<f64>,
    pub dp0: Vec<f64>,
    pub theta: f64,
}

/// `p_t(x, ·)` for `d = 1`.
pub fn compute_density(model: &Model, spec: &GridSpec, t: f64, x: f64) -> Result<DensityField, EngineError> {
    let eng = Engine::new(model, spec, x, t, false)?;
    let s = eng.solve()?;
    Ok(eng.field(&s, eng.mesh.m))
}

/// `p_t(x, ·)` on a given space grid.
pub fn compute_density_on(model: &Model, spec: &GridSpec, grid: SpaceGrid, t: f64, x: f64) -> Result<DensityField, EngineError> {
    let eng = Engine::on_grid(model, spec, x, t, grid, false)?;
    let s = eng.solve()?;
    Ok(eng.field(&s, eng.mesh.m))
}

/// `Ψ_t(x, ·)` with diagnostics.
pub fn compute_psi(model: &Model, spec: &GridSpec, t: f64, x: f64) -> Result<PsiField, EngineError> {
    Engine::new(model, spec, x, t, false)?.psi()
}

/// Fill `p̃` and `r̃ = p − p̃`.
pub fn decompose_tilde(model: &Model, field: &mut DensityField, choice: &FlowChoice) -> Result<(), EngineError> {
    let c = model.tilde_center(field.t, &[field.x], choice)?[0];
    let pt: Vec<f64> =
        field.y.iter().map(|&y| p_tilde_given_center(model, field.t, &[field.x], &[y], &[c])).collect();
    field.r_tilde = Some(field.p.iter().zip(&pt).map(|(a, b)| a - b).collect());
    field.p_tilde = Some(pt);
    field.center = Some(c);
    Ok(())
}

/// `∂_t p_t(x, ·)` by the split at `θ t`.
pub fn compute_dt_density(
    model: &Model,
    spec: &GridSpec,
    t: f64,
    x: f64,
    theta: f64,
) -> Result<(DensityField, DerivativeField), EngineError> {
    let eng = Engine::new(model, spec, x, t, true)?;
    let s = eng.solve()?;
    let d = eng.derivative(&s, theta)?;
    Ok((eng.field(&s, eng.mesh.m), d))
}

/// `(f ∗ g)(y) = ∫ f(z) g(z, y) dz` on a grid, with `g` given column-wise.
pub fn space_convolve(grid: &SpaceGrid, f: &[f64], g: impl Fn(f64, f64) -> f64 + Sync) -> Result<Vec<f64>, EngineError> {
    if f.len() != grid.len() {
        return Err(EngineError::Config(format!("field has {} values, grid has {} nodes", f.len(), grid.len())));
    }
    let w = grid.weights();
    Ok(grid
        .z
        .par_iter()
        .map(|&y| grid.z.iter().zip(&w).zip(f).map(|((&z, wz), fz)| wz * fz * g(z, y)).sum())
        .collect())
}

/// `∫_0^t f(t − s) g(s) ds` for `g(s) ~ s^{-1+δ'}` at 0, using the
/// substitution `s = t u^{1/δ'}` and Gauss–Legendre in `u`.
pub fn time_space_convolve(
    t: f64,
    singularity: f64,
    nodes: usize,
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
) -> Result<f64, EngineError> {
    if !(singularity > 0.0 && singularity <= 1.0) || !(t > 0.0) {
        return Err(EngineError::Config("need 0 < singularity <= 1 and t > 0".into()));
    }
    let gl = gauss_legendre(nodes);
    let p = 1.0 / singularity;
    let mut acc = 0.0;
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        let u = 0.5 * (x + 1.0);
        let s = t * u.powf(p);
        acc += 0.5 * w * t * p * u.powf(p - 1.0) * f(t - s) * g(s);
    }
    Ok(acc)
}
