//! `∂_t p` by splitting the time integral at a fraction `θ` of the horizon.
//!
//! With `D(τ) = ∂_τ p_τ(x, ·)` the row identity reads
//! `D(τ) = ∂p⁰_τ + v_{τ−σ₀} ⋆ Φ_{σ₀} + ∫_0^{σ₀} D(τ−s) ⋆ Φ_s ds + ∫_{σ₀}^τ v_{τ−s} ⋆ ∂Φ_s ds`,
//! so the singular part of `∂Φ` never meets the start of the kernel.

use nalgebra::DMatrix;

use crate::engine::solver::{DerivativeField, Engine, Series};
use crate::engine::EngineError;

impl Engine {
    /// `∂_t p` at the final time.
    pub fn derivative(&self, series: &Series, theta: f64) -> Result<DerivativeField, EngineError> {
        let m = self.mesh.m;
        let rows = self.derivative_rows(series, theta)?;
        Ok(DerivativeField {
            t: self.t(),
            x: self.x,
            y: self.grid.z.clone(),
            dp: rows[m].clone(),
            dp0: self.dp0_at(m).to_vec(),
            theta,
        })
    }

    /// March `D(τ_i)` over the mesh with split point `σ₀ ≈ θ τ_i`; index 0 is empty.
    pub fn derivative_rows(&self, series: &Series, theta: f64) -> Result<Vec<Vec<f64>>, EngineError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(EngineError::Config(format!("split fraction must lie in (0, 1), got {theta}")));
        }
        if !self.has_derivative() {
            return Err(EngineError::Config("engine was built without derivative matrices".into()));
        }
        let m = self.mesh.m;
        let n = self.n();
        if self.is_trivial() {
            return Ok((0..=m).map(|i| if i == 0 { Vec::new() } else { self.dp0_at(i).to_vec() }).collect());
        }
        let zeta = self.model.spec.zeta();
        let v = &series.p;
        // (I − E_0^Lᵀ) acting on the unknown row
        let (e0l, e0r) = self.moments_lr(0);
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - e0l.get(j, i));
        let lu = a.lu();
        let mut d: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
        let tau1 = self.mesh.time(1);
        d[1] = (0..n).map(|j| self.dp0_at(1)[j] + zeta * (v[1][j] - self.p0_at(1)[j]) / tau1).collect();
        for i in 2..=m {
            let split = ((theta * i as f64).round() as usize).clamp(1, i - 1);
            let mut rhs = self.dp0_at(i).to_vec();
            self.node_phi(split).vecmul_add(&v[i - split], 1.0, &mut rhs);
            e0r.vecmul_add(&d[i - 1], 1.0, &mut rhs);
            for p in 1..split {
                let (l, r) = self.moments_lr(p);
                l.vecmul_add(&d[i - p], 1.0, &mut rhs);
                r.vecmul_add(&d[i - p - 1], 1.0, &mut rhs);
            }
            for p in split..i {
                let (l, r, dr) = self.dmoments_lr(p);
                l.vecmul_add(&v[i - p], 1.0, &mut rhs);
                if i - p - 1 == 0 {
                    for (o, q) in rhs.iter_mut().zip(dr) {
                        *o += q;
                    }
                } else {
                    r.vecmul_add(&v[i - p - 1], 1.0, &mut rhs);
                }
            }
            let b = nalgebra::DVector::from_vec(rhs);
            let sol = lu.solve(&b).ok_or_else(|| EngineError::Precision("singular first-panel system".into()))?;
            d[i] = sol.iter().copied().collect();
        }
        Ok(d)
    }
}
