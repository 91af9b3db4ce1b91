//! Chapman–Kolmogorov consistency `p_t(x, y) = ∫ p_s(x, z) p_{t−s}(z, y) dz`.

use rayon::prelude::*;

use crate::engine::grid::GridSpec;
use crate::engine::model::Model;
use crate::engine::solver::{DensityField, Engine};
use crate::engine::EngineError;

/// Result of a Chapman–Kolmogorov check.
#[derive(Debug, Clone)]
pub struct CkReport {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    /// `sup_y |∫ p_s p_{t−s} dz − p_t|`.
    pub sup_err: f64,
    pub sup_p: f64,
    /// `sup_err / sup_p`.
    pub normalized: f64,
    /// Intermediate points solved with the full series.
    pub starts: usize,
}

/// Compare `p_t(x, ·)` with the composition through time `s`.
///
/// `s` must be a mesh time of the outer grid. `p_{t−s}(z, ·)` is `p⁰` plus a
/// residue; the residue is solved on `inner` at `starts` quantiles of
/// `p_s(x, ·)` (and at non-Lipschitz drift points inside their range) and
/// interpolated linearly in `z` at fixed offset `y − z`. Outside the
/// node range the residue is dropped.
pub fn chapman_kolmogorov_check(
    model: &Model,
    outer: &GridSpec,
    inner: &GridSpec,
    t: f64,
    s: f64,
    x: f64,
    starts: usize,
) -> Result<CkReport, EngineError> {
    if !(s > 0.0 && s < t) {
        return Err(EngineError::Config(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    let m = outer.time_nodes;
    let k = (s / t * m as f64).round() as usize;
    if k == 0 || ((k as f64) * t / m as f64 - s).abs() > 1e-12 * t {
        return Err(EngineError::Config(format!("s = {s} is not a mesh time of t = {t} with {m} steps")));
    }
    let eng = Engine::new(model, outer, x, t, false)?;
    let series = eng.solve()?;
    let ps = &series.p[k];
    let pt = &series.p[m];
    let u = t - s;
    let alpha = model.alpha();
    let n = eng.n();
    let y = &eng.grid.z;
    let w = eng.grid.weights();
    let a_y: Vec<f64> = y.iter().map(|&v| model.a(v)).collect();
    let kap: Vec<f64> = (0..n).map(|j| eng.kappa_at(j, u)).collect();

    let nodes = if model.spec.is_trivial() || starts < 2 { Vec::new() } else { quantile_nodes(y, &w, ps, starts, model) };
    let fields: Vec<DensityField> = nodes
        .par_iter()
        .map(|&z| {
            let e = Engine::new(model, inner, z, u, false)?;
            Ok(e.field(&e.solve()?, inner.time_nodes))
        })
        .collect::<Result<_, EngineError>>()?;
    let residue = |f: &DensityField, off: f64| {
        let v = f.x + off;
        if v > f.y[0] && v < f.y[f.y.len() - 1] {
            f.interp(&f.residue, v)
        } else {
            0.0
        }
    };

    let comp: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for (jz, &z) in y.iter().enumerate() {
                let wz = w[jz] * ps[jz];
                if wz == 0.0 {
                    continue;
                }
                let mut q = p0(model, u, z, a_y[j], kap[j], alpha);
                if nodes.len() >= 2 && z >= nodes[0] && z <= nodes[nodes.len() - 1] {
                    let l = nodes.partition_point(|v| *v <= z).clamp(1, nodes.len() - 1) - 1;
                    let th = (z - nodes[l]) / (nodes[l + 1] - nodes[l]);
                    let off = y[j] - z;
                    q += (1.0 - th) * residue(&fields[l], off) + th * residue(&fields[l + 1], off);
                }
                acc += wz * q;
            }
            acc
        })
        .collect();
    let sup_p = pt.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let sup_err = comp.iter().zip(pt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CkReport { t, s, x, sup_err, sup_p, normalized: sup_err / sup_p, starts: nodes.len() })
}

/// Equally spaced quantiles of `p` between levels 0.5% and 99.5%, plus
/// non-Lipschitz drift points inside that range.
fn quantile_nodes(y: &[f64], w: &[f64], p: &[f64], count: usize, model: &Model) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    for (wj, pj) in w.iter().zip(p) {
        acc += wj * pj.max(0.0);
        cdf.push(acc);
    }
    let total = acc;
    let mut nodes: Vec<f64> = (0..count)
        .map(|i| {
            let q = total * (0.005 + 0.99 * i as f64 / (count - 1) as f64);
            let j = cdf.partition_point(|c| *c < q).min(y.len() - 1);
            y[j]
        })
        .collect();
    let (lo, hi) = (nodes[0], nodes[count - 1]);
    nodes.extend(model.spec.drift.cusps().into_iter().filter(|c| *c > lo && *c < hi));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn p0(model: &Model, u: f64, z: f64, a_y: f64, kappa: f64, alpha: f64) -> f64 {
    let sc = (u * a_y).powf(1.0 / alpha);
    model.table.g(((kappa - z) / sc).abs()) / sc
}
