//! Transition densities of `dX = b(X)dt + σ(X−)dZ` driven by a rotationally
//! invariant α-stable process, built by the parametrix series with a
//! mollified Hölder drift.

pub mod quad;
pub mod stable_kernel;
pub mod drift_flows;
pub mod bounds_kernels;
pub mod engine;
pub mod mc_oracle;
