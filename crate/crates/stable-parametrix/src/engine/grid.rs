//! Space and time discretisation of the convolution engine (`d = 1`).
//!
//! The space grid follows the path of the kernel centre from the start
//! point: the spacing is a fixed fraction of the local kernel width along
//! the path and grows geometrically away from it, out to `±extent`.

use crate::engine::EngineError;
use crate::quad::{gauss_legendre, Rule};

/// Discretisation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Spacing as a fraction of the local kernel width `(s·a)^{1/α}`.
    pub h: f64,
    /// Geometric growth rate of the spacing away from the path.
    pub growth: f64,
    /// Half-width of the space grid around the path.
    pub extent: f64,
    /// Number of uniform time panels on `[0, t]`.
    pub time_nodes: usize,
    /// Maximal number of series terms.
    pub k_max: usize,
    /// Relative size below which a series term stops the iteration.
    pub series_tol: f64,
    /// Gauss–Legendre nodes in the graded first time panel.
    pub panel0_nodes: usize,
    /// Half-width, in nodes, of the exact-quadrature windows.
    pub window: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            h: 0.25,
            growth: 0.08,
            extent: 1e4,
            time_nodes: 24,
            k_max: 12,
            series_tol: 1e-8,
            panel0_nodes: 12,
            window: 8,
        }
    }
}

impl GridSpec {
    /// A cheaper setting for repeated runs.
    pub fn coarse() -> Self {
        Self { h: 0.35, growth: 0.12, extent: 2e3, time_nodes: 24, panel0_nodes: 10, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if !(self.h > 0.0 && self.h <= 1.0) {
            return bad("grid.h must lie in (0, 1]");
        }
        if !(self.growth > 0.0 && self.growth <= 0.5) {
            return bad("grid.growth must lie in (0, 0.5]");
        }
        if !(self.extent > 0.0) {
            return bad("grid.extent must be positive");
        }
        if self.time_nodes < 4 || self.time_nodes % 2 != 0 {
            return bad("grid.time_nodes must be an even number >= 4");
        }
        if self.k_max < 1 {
            return bad("series.K must be at least 1");
        }
        if !(self.series_tol > 0.0) {
            return bad("series.tol must be positive");
        }
        if self.panel0_nodes < 2 || self.window < 3 {
            return bad("panel0 nodes >= 2 and window >= 3 required");
        }
        Ok(())
    }
}

/// Nodes `z_j` of a smooth map `z(u)` sampled at integer `u`, with
/// `dz/du` at the nodes as trapezoid weights.
#[derive(Debug, Clone)]
pub struct SpaceGrid {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Index of the start point.
    pub origin: usize,
}

/// Local spacing: a smooth minimum over attractors `(c, res)`, each giving
/// spacing `sqrt((growth·(z − c))² + res²)`.
struct Spacing {
    points: Vec<(f64, f64)>,
    growth: f64,
}

impl Spacing {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        let mut inv = 0.0;
        for (c, res) in &self.points {
            let d = self.growth * (z - c);
            inv += (d * d + res * res).powi(-4);
        }
        inv.powf(-0.125)
    }
}

impl SpaceGrid {
    /// Grid through `x` refined around `anchors = (centre, kernel width)`
    /// and around the `cusps` of the drift.
    pub fn build(spec: &GridSpec, x: f64, anchors: &[(f64, f64)], cusps: &[f64]) -> Result<Self, EngineError> {
        if anchors.is_empty() || anchors.iter().any(|(c, w)| !c.is_finite() || !(*w > 0.0)) {
            return Err(EngineError::Config("grid anchors need finite centres and positive widths".into()));
        }
        let wmax = anchors.iter().fold(0.0f64, |m, a| m.max(a.1));
        let mut points: Vec<(f64, f64)> = anchors.iter().map(|(c, w)| (*c, spec.h * w)).collect();
        points.extend(cusps.iter().map(|c| (*c, spec.h * wmax)));
        let lo = anchors.iter().fold(x, |m, a| m.min(a.0));
        let hi = anchors.iter().fold(x, |m, a| m.max(a.0));
        let sp = Spacing { points, growth: spec.growth };
        let step = |z: f64, dir: f64| {
            // RK4 in u with four substeps per node
            let mut z = z;
            let hs = 0.25 * dir;
            for _ in 0..4 {
                let k1 = sp.eval(z);
                let k2 = sp.eval(z + 0.5 * hs * k1);
                let k3 = sp.eval(z + 0.5 * hs * k2);
                let k4 = sp.eval(z + hs * k3);
                z += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            z
        };
        let (lo_lim, hi_lim) = (lo - spec.extent, hi + spec.extent);
        let mut right = vec![x];
        while *right.last().unwrap() < hi_lim {
            right.push(step(*right.last().unwrap(), 1.0));
            if right.len() > 200_000 {
                return Err(EngineError::Config("space grid too large; increase grid.h or grid.growth".into()));
            }
        }
        let mut left = vec![];
        let mut z = x;
        while z > lo_lim {
            z = step(z, -1.0);
            left.push(z);
            if left.len() > 200_000 {
                return Err(EngineError::Config("space grid too large; increase grid.h or grid.growth".into()));
            }
        }
        left.reverse();
        let origin = left.len();
        let mut zs = left;
        zs.extend(right);
        let w = zs.iter().map(|&z| sp.eval(z)).collect();
        Ok(Self { z: zs, w, origin })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Index `j` with `z_j ≤ v < z_{j+1}`, clamped to the grid.
    #[inline]
    pub fn locate(&self, v: f64) -> usize {
        self.z.partition_point(|z| *z <= v).clamp(1, self.z.len() - 1) - 1
    }

    /// Trapezoid weights with third-order Gregory end corrections over the
    /// whole grid.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        add_gregory(&mut out, 0, self.len() - 1, |j| self.w[j]);
        out
    }

    /// Cubic Lagrange interpolation of nodal values at `v`.
    pub fn interp(&self, f: &[f64], v: f64) -> f64 {
        let (j0, c) = self.lagrange(v);
        (0..4).map(|k| c[k] * f[j0 + k]).sum()
    }

    /// First node and weights of the four-point Lagrange stencil at `v`.
    #[inline]
    pub fn lagrange(&self, v: f64) -> (usize, [f64; 4]) {
        let n = self.len();
        let m = self.locate(v);
        let j0 = m.saturating_sub(1).min(n - 4);
        let zs = &self.z[j0..j0 + 4];
        let mut c = [1.0; 4];
        for k in 0..4 {
            for l in 0..4 {
                if l != k {
                    c[k] *= (v - zs[l]) / (zs[k] - zs[l]);
                }
            }
        }
        (j0, c)
    }

    /// Integral of nodal values with a power-law tail correction of
    /// exponent `1 + alpha` beyond both ends, measured from `center`.
    pub fn integrate_with_tails(&self, f: &[f64], center: f64, alpha: f64) -> (f64, f64) {
        let body: f64 = self.weights().iter().zip(f).map(|(w, v)| w * v).sum();
        let n = self.len();
        let tail = f[0] * (center - self.z[0]).abs() / alpha + f[n - 1] * (self.z[n - 1] - center).abs() / alpha;
        (body + tail, tail)
    }
}

/// Add trapezoid/Gregory weights `scale(j)·c_j` for the node run `[a, b]`.
fn add_gregory(out: &mut [f64], a: usize, b: usize, scale: impl Fn(usize) -> f64) {
    if b <= a {
        return;
    }
    let n = b - a + 1;
    if n < 6 {
        for j in a..=b {
            let c = if j == a || j == b { 0.5 } else { 1.0 };
            out[j] += c * scale(j);
        }
        return;
    }
    const G: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for j in a..=b {
        let c = if j - a < 3 {
            G[j - a]
        } else if b - j < 3 {
            G[b - j]
        } else {
            1.0
        };
        out[j] += c * scale(j);
    }
}

/// Reusable quadrature pieces for kernel columns.
#[derive(Debug, Clone)]
pub struct ColumnQuad {
    gl: Rule,
    window: usize,
}

/// Description of one kernel column `z ↦ K(z)` for [`ColumnQuad::weights`].
pub struct ColumnShape<'a> {
    /// Centre and width of the kernel core.
    pub center: f64,
    pub width: f64,
    /// Points where the kernel is not smooth.
    pub kinks: &'a [f64],
}

impl ColumnQuad {
    pub fn new(window: usize) -> Self {
        Self { gl: gauss_legendre(8), window }
    }

    /// Weights `W_j` with `∫ f(z) K(z) dz ≈ Σ_j f(z_j) W_j` for smooth `f`.
    ///
    /// Nodes far from the core and the kinks use Gregory-corrected
    /// trapezoid weights; windows of `±window` nodes around an unresolved
    /// core or a kink are integrated with graded Gauss–Legendre panels
    /// against the cubic interpolant of `f`.
    pub fn weights(&self, grid: &SpaceGrid, shape: &ColumnShape, kernel: impl Fn(f64) -> f64, out: &mut [f64]) {
        let n = grid.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut wins: Vec<(usize, usize)> = Vec::new();
        let win = self.window;
        let jc = grid.locate(shape.center);
        let inside = shape.center > grid.z[0] && shape.center < grid.z[n - 1];
        if inside && shape.width < 3.0 * grid.w[jc] {
            wins.push((jc.saturating_sub(win), (jc + 1 + win).min(n - 1)));
        }
        let kv: Vec<f64> = grid.z.iter().map(|&z| kernel(z)).collect();
        let mass: f64 = kv.iter().zip(&grid.w).map(|(k, w)| (k * w).abs()).sum();
        for &k in shape.kinks {
            if !(k > grid.z[0] && k < grid.z[n - 1]) {
                continue;
            }
            let jk = grid.locate(k);
            let local = kv[jk].abs().max(kv[jk + 1].abs()) * grid.w[jk];
            if local <= 1e-13 * mass {
                continue;
            }
            wins.push((jk.saturating_sub(win), (jk + 1 + win).min(n - 1)));
        }
        wins.sort();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for w in wins {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }
        let mut prev = 0usize;
        for &(a, b) in &merged {
            add_gregory(out, prev, a, |j| grid.w[j] * kv[j]);
            self.window_weights(grid, shape, &kernel, a, b, out);
            prev = b;
        }
        add_gregory(out, prev, n - 1, |j| grid.w[j] * kv[j]);
    }

    fn window_weights(
        &self,
        grid: &SpaceGrid,
        shape: &ColumnShape,
        kernel: &impl Fn(f64) -> f64,
        a: usize,
        b: usize,
        out: &mut [f64],
    ) {
        let (za, zb) = (grid.z[a], grid.z[b]);
        let mut br: Vec<f64> = (a..=b).map(|j| grid.z[j]).collect();
        let c = shape.center;
        if c > za && c < zb {
            br.push(c);
            let mut h = 0.25 * shape.width;
            while h < zb - za {
                br.push(c - h);
                br.push(c + h);
                h *= 2.0;
            }
        }
        for &k in shape.kinks {
            if k > za && k < zb {
                br.push(k);
                let mut h = grid.w[grid.locate(k)];
                for _ in 0..24 {
                    br.push(k - h);
                    br.push(k + h);
                    h *= 0.5;
                }
            }
        }
        br.retain(|v| *v >= za && *v <= zb);
        br.sort_by(|p, q| p.total_cmp(q));
        br.dedup_by(|p, q| (*p - *q).abs() <= 1e-15 * (1.0 + p.abs()));
        for seg in br.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (lo + hi);
            for (u, wq) in self.gl.nodes.iter().zip(&self.gl.weights) {
                let v = mid + half * u;
                let kv = kernel(v) * wq * half;
                let (j0, l) = grid.lagrange(v);
                for q in 0..4 {
                    out[j0 + q] += kv * l[q];
                }
            }
        }
    }
}

/// Time mesh and first-panel quadrature.
#[derive(Debug, Clone)]
pub struct TimeMesh {
    pub t: f64,
    pub dt: f64,
    pub m: usize,
    /// Nodes and weights on `(0, Δ]` graded like `s = Δ u^{1/ζ}`.
    pub panel0: Vec<(f64, f64)>,
}

impl TimeMesh {
    pub fn new(t: f64, m: usize, zeta: f64, n0: usize) -> Self {
        let dt = t / m as f64;
        let gl = gauss_legendre(n0);
        let p = 1.0 / zeta;
        let panel0 = gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(x, w)| {
                let u = 0.5 * (x + 1.0);
                (dt * u.powf(p), 0.5 * w * dt * p * u.powf(p - 1.0))
            })
            .collect();
        Self { t, dt, m, panel0 }
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.m {
            self.t
        } else {
            i as f64 * self.dt
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_monotone_and_refined_on_the_path() {
        let g = SpaceGrid::build(&GridSpec::default(), 1.0, &[(1.0, 1e-3), (1.2, 0.05), (1.4, 0.1)], &[0.0]).unwrap();
        assert!(g.z.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.z[g.origin], 1.0);
        assert!(g.z[0] < -1e4 + 1.0 && *g.z.last().unwrap() > 1e4);
        let j = g.locate(1.4);
        assert!(g.z[j + 1] - g.z[j] < 0.3 * 0.1);
        // weights over a block integrate the constant across that block
        for j in [10, g.origin - 20, g.len() - 60] {
            let span = g.z[j + 40] - g.z[j];
            let sum: f64 = g.w[j..=j + 40].iter().sum::<f64>() - 0.5 * (g.w[j] + g.w[j + 40]);
            assert!((sum / span - 1.0).abs() < 1e-3, "j={j} {}", sum / span - 1.0);
        }
    }

    #[test]
    fn gregory_integrates_smooth_functions() {
        let g = SpaceGrid::build(&GridSpec::default(), 0.0, &[(0.0, 0.1)], &[]).unwrap();
        let f: Vec<f64> = g.z.iter().map(|z| 0.1 / (std::f64::consts::PI * (z * z + 0.01))).collect();
        let (v, _) = g.integrate_with_tails(&f, 0.0, 1.0);
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn column_weights_resolve_narrow_kernels_and_kinks() {
        let g = SpaceGrid::build(&GridSpec::default(), 0.0, &[(0.0, 0.1)], &[]).unwrap();
        let q = ColumnQuad::new(8);
        let mut w = vec![0.0; g.len()];
        // narrow Gaussian at 0.37: weights reproduce f(0.37) for smooth f
        let s = 1e-5;
        let k = |z: f64| (-(z - 0.37f64).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        q.weights(&g, &ColumnShape { center: 0.37, width: s, kinks: &[] }, k, &mut w);
        let f: Vec<f64> = g.z.iter().map(|z| z.cos()).collect();
        let v: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((v - 0.37f64.cos()).abs() < 1e-6, "{v}");
        // kernel with a square-root cusp
        let k2 = |z: f64| z.abs().sqrt() * (-z * z).exp();
        q.weights(&g, &ColumnShape { center: 0.0, width: 1.0, kinks: &[0.0] }, k2, &mut w);
        let v: f64 = w.iter().sum();
        let exact = 1.225416702465178; // Γ(3/4)
        assert!((v - exact).abs() < 1e-6, "{v}");
    }
}
