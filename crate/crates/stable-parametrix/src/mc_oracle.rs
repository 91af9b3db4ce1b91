//! Monte-Carlo reference: stable increments by subordination, the Euler
//! scheme, the frozen one-shot sampler and histogram comparison.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::drift_flows::{eval_drift, DriftError};
use crate::engine::{DensityField, EngineError, Model, ModelSpec};
use crate::quad::{gauss_legendre, Rule};

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte-Carlo configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    PrincipalPart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub t_end: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl MCConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(McError::Config("n_paths and n_steps must be at least 1".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(McError::Config(format!("t_end = {} must be positive", self.t_end)));
        }
        Ok(())
    }
}

/// Positive `β`-stable variable with Laplace transform `exp(−λ^β)`, `β ∈ (0, 1)`
/// (Kanter's form of the Chambers–Mallows–Stuck construction).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.gen::<f64>();
    let w: f64 = Exp1.sample(rng);
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    let b = (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
    a * b
}

/// Draw `Z_t` with `E exp(i ξ·Z_t) = exp(−t|ξ|^α)`.
pub fn sample_stable<R: Rng + ?Sized>(alpha: f64, dim: usize, t: f64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    sample_stable_into(alpha, t, rng, &mut out);
    out
}

#[inline]
fn sample_stable_into<R: Rng + ?Sized>(alpha: f64, t: f64, rng: &mut R, out: &mut [f64]) {
    let s = sample_positive_stable(0.5 * alpha, rng);
    let sd = (2.0 * s).sqrt() * t.powf(1.0 / alpha);
    for o in out.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *o = sd * n;
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// One Euler path `X_{k+1} = X_k + b(X_k)Δ + a(X_k)^{1/α} ΔZ`.
pub fn euler_path<R: Rng + ?Sized>(spec: &ModelSpec, x0: &[f64], cfg: &MCConfig, rng: &mut R) -> Result<Vec<f64>, McError> {
    let alpha = spec.alpha;
    let dt = cfg.t_end / cfg.n_steps as f64;
    if spec.dim == 1 {
        let mut x = x0[0];
        let mut z = [0.0];
        // ΔZ = Δ^{1/α} Z_1
        for _ in 0..cfg.n_steps {
            sample_stable_into(alpha, dt, rng, &mut z);
            x += spec.drift.eval_scalar(x)? * dt + spec.a.eval_scalar(x).powf(1.0 / alpha) * z[0];
        }
        return Ok(vec![x]);
    }
    let mut x = x0.to_vec();
    let mut z = vec![0.0; spec.dim];
    for _ in 0..cfg.n_steps {
        sample_stable_into(alpha, dt, rng, &mut z);
        let b = eval_drift(&spec.drift, &x)?;
        let sig = spec.a.eval(&x).powf(1.0 / alpha);
        for k in 0..x.len() {
            x[k] += b[k] * dt + sig * z[k];
        }
    }
    Ok(x)
}

/// `υ_t(x) + a(x)^{1/α} Z_t`, whose density is `p̃_t(x, ·)`.
pub fn principal_part_path<R: Rng + ?Sized>(center: &[f64], sigma: f64, alpha: f64, t: f64, rng: &mut R) -> Vec<f64> {
    let mut z = sample_stable(alpha, center.len(), t, rng);
    for (zi, c) in z.iter_mut().zip(center) {
        *zi = c + sigma * *zi;
    }
    z
}

/// Endpoints of `cfg.n_paths` paths from `x0`, flattened with stride `dim`.
/// Path `i` uses the stream `i` of the seeded generator.
pub fn simulate(model: &Model, x0: &[f64], cfg: &MCConfig) -> Result<Vec<f64>, McError> {
    cfg.validate()?;
    let spec = &model.spec;
    if x0.len() != spec.dim {
        return Err(McError::Config(format!("start point has dimension {}, model has {}", x0.len(), spec.dim)));
    }
    let rows: Vec<Vec<f64>> = match cfg.scheme {
        Scheme::Euler => (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| euler_path(spec, x0, cfg, &mut path_rng(cfg.seed, i)))
            .collect::<Result<_, _>>()?,
        Scheme::PrincipalPart => {
            let center = model.upsilon(cfg.t_end, x0)?;
            let sigma = spec.a.eval(x0).powf(1.0 / spec.alpha);
            (0..cfg.n_paths)
                .into_par_iter()
                .map(|i| principal_part_path(&center, sigma, spec.alpha, cfg.t_end, &mut path_rng(cfg.seed, i)))
                .collect()
        }
    };
    Ok(rows.concat())
}

/// `(mean cos(ξ Z), standard error)` for scalar samples.
pub fn empirical_cf(samples: &[f64], xi: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let (s, s2) = samples.iter().fold((0.0, 0.0), |(a, b), z| {
        let c = (xi * z).cos();
        (a + c, b + c * c)
    });
    let mean = s / n;
    (mean, ((s2 / n - mean * mean).max(0.0) / n).sqrt())
}

/// Histogram normalised over its own range.
#[derive(Debug, Clone)]
pub struct EmpiricalDensity {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub heights: Vec<f64>,
    pub n_samples: usize,
    /// Samples outside `[edges[0], edges[last]]`.
    pub n_outside: usize,
    pub bandwidth: Option<f64>,
}

impl EmpiricalDensity {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn empirical_density(samples: &[f64], edges: &[f64]) -> Result<EmpiricalDensity, McError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(McError::Config("bin edges must be strictly increasing with at least two entries".into()));
    }
    if samples.len() < 10_000 {
        return Err(McError::Config(format!("need at least 10^4 samples, got {}", samples.len())));
    }
    let nb = edges.len() - 1;
    let mut counts = vec![0u64; nb];
    let mut outside = 0;
    for &s in samples {
        if !(s >= edges[0] && s < edges[nb]) {
            outside += 1;
            continue;
        }
        let k = edges.partition_point(|e| *e <= s) - 1;
        counts[k.min(nb - 1)] += 1;
    }
    let inside = (samples.len() - outside) as f64;
    if inside == 0.0 {
        return Err(McError::Config("no samples fall inside the bins".into()));
    }
    let heights = counts.iter().zip(edges.windows(2)).map(|(c, w)| *c as f64 / (inside * (w[1] - w[0]))).collect();
    Ok(EmpiricalDensity { edges: edges.to_vec(), counts, heights, n_samples: samples.len(), n_outside: outside, bandwidth: None })
}

/// Mass of the field in `[a, b]` by Gauss–Legendre on cubic interpolation.
fn field_mass(field: &DensityField, gl: &Rule, a: f64, b: f64) -> f64 {
    let (j0, j1) = (field.y.partition_point(|v| *v <= a), field.y.partition_point(|v| *v < b));
    let mut knots = vec![a];
    knots.extend_from_slice(&field.y[j0..j1]);
    knots.push(b);
    let mut s = 0.0;
    for w in knots.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        s += gl.integrate(l, r, |v| field.interp(&field.p, v).max(0.0));
    }
    s
}

/// Bin edges at the quantiles `q_lo, …, q_hi` (`n_bins` equal-mass bins) of the field.
pub fn quantile_edges(field: &DensityField, n_bins: usize, q_lo: f64, q_hi: f64) -> Result<Vec<f64>, McError> {
    if n_bins == 0 || !(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0) {
        return Err(McError::Config("need n_bins >= 1 and 0 < q_lo < q_hi < 1".into()));
    }
    let gl = gauss_legendre(8);
    let total = field.mass().0;
    let n = field.y.len();
    // cumulative mass at the nodes, left tail included
    let left_tail = field.p[0] * (field.center.unwrap_or(field.x) - field.y[0]).abs() / field.alpha;
    let mut cdf = vec![left_tail; n];
    for j in 1..n {
        cdf[j] = cdf[j - 1] + field_mass(field, &gl, field.y[j - 1], field.y[j]);
    }
    let inv = |q: f64| {
        let target = q * total;
        let j = cdf.partition_point(|c| *c < target).clamp(1, n - 1);
        // bisection inside the cell
        let (mut l, mut r) = (field.y[j - 1], field.y[j]);
        let base = cdf[j - 1];
        for _ in 0..60 {
            let m = 0.5 * (l + r);
            if base + field_mass(field, &gl, field.y[j - 1], m) < target {
                l = m;
            } else {
                r = m;
            }
        }
        0.5 * (l + r)
    };
    let edges: Vec<f64> = (0..=n_bins).map(|k| inv(q_lo + (q_hi - q_lo) * k as f64 / n_bins as f64)).collect();
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(McError::Config("quantile edges are not increasing; refine the field".into()));
    }
    Ok(edges)
}

/// Histogram versus density metrics.
#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Max relative height error over bins with expected count ≥ 1000.
    pub sup_rel_bulk: f64,
    pub l1: f64,
    pub ks: f64,
    pub bulk_bins: usize,
    /// Fraction of samples outside the bins and its analytic value.
    pub tail_emp: f64,
    pub tail_analytic: f64,
    /// `(tail_emp − tail_analytic) / binomial σ`.
    pub tail_z: f64,
}

/// Compare a histogram with the field, both conditioned on the binned range.
pub fn compare_density(emp: &EmpiricalDensity, field: &DensityField) -> Result<CompareReport, McError> {
    let (lo, hi) = (emp.edges[0], emp.edges[emp.edges.len() - 1]);
    if hi <= field.y[0] || lo >= field.y[field.y.len() - 1] {
        return Err(McError::Config("histogram range does not overlap the density grid".into()));
    }
    let gl = gauss_legendre(8);
    let masses: Vec<f64> = emp.edges.windows(2).map(|w| field_mass(field, &gl, w[0], w[1])).collect();
    let inside: f64 = masses.iter().sum();
    let total = field.mass().0;
    let n = emp.n_samples as f64;
    let n_in = n - emp.n_outside as f64;
    let (mut sup, mut l1, mut ks, mut bulk) = (0.0f64, 0.0, 0.0f64, 0);
    let (mut fe, mut fa) = (0.0, 0.0);
    for (k, w) in emp.edges.windows(2).enumerate() {
        let width = w[1] - w[0];
        let ha = masses[k] / (inside * width);
        let he = emp.heights[k];
        if n * masses[k] / total >= 1000.0 {
            bulk += 1;
            sup = sup.max((he - ha).abs() / ha);
        }
        l1 += (he - ha).abs() * width;
        fe += emp.counts[k] as f64 / n_in;
        fa += masses[k] / inside;
        ks = ks.max((fe - fa).abs());
    }
    let tail_analytic = (1.0 - inside / total).max(0.0);
    let tail_emp = emp.n_outside as f64 / n;
    let sd = (tail_analytic * (1.0 - tail_analytic) / n).sqrt().max(1.0 / n);
    Ok(CompareReport { sup_rel_bulk: sup, l1, ks, bulk_bins: bulk, tail_emp, tail_analytic, tail_z: (tail_emp - tail_analytic) / sd })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
