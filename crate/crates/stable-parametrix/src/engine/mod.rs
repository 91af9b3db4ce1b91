//! Parametrix construction of the transition density: `p⁰`, `Φ`, the
//! convolution series, the principal-part decomposition and `∂_t p`.
//!
//! The series is evaluated in row form for a fixed start point `x`:
//! `p = Σ_k v_k` with `v_0 = p⁰_·(x, ·)` and `v_{k+1} = v_k ⋆ Φ`, which
//! equals `p⁰ + p⁰ ⋆ Ψ`.

mod ck;
mod derivative;
pub mod grid;
pub mod model;
mod solver;

use thiserror::Error;

use crate::drift_flows::DriftError;
use crate::stable_kernel::KernelError;

pub use ck::{chapman_kolmogorov_check, CkReport};
pub use grid::{GridSpec, SpaceGrid, TimeMesh};
pub use model::{
    eval_dt_p0, eval_dt_phi, eval_p0, eval_p_tilde, eval_phi, ACoeff, FlowChoice, Model, ModelSpec,
};
pub use solver::{
    compute_density, compute_density_on, compute_dt_density, compute_psi, decompose_tilde, engine_grid, space_convolve, time_space_convolve,
    DensityField, DerivativeField, Engine, PsiField, SeriesDiagnostics,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "balance condition alpha + gamma > 1 violated: alpha + gamma = {alpha} + {gamma} = {} <= 1",
        ((alpha + gamma) * 1e12).round() / 1e12
    )]
    Balance { alpha: f64, gamma: f64 },
    #[error("Picard centre of order {k} needs rho_k = 1 + gamma + ... + gamma^k - 1/alpha > 0, got {rho}")]
    Picard { k: usize, rho: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("series shows no decay after {} terms; term norms {norms:?}", norms.len())]
    Convergence { norms: Vec<f64> },
    #[error("precision error: {0}")]
    Precision(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Drift(#[from] DriftError),
}
