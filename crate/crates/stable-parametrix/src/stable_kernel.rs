//! Rotationally invariant α-stable density `g` in dimension `d`, its radial
//! derivatives and its fractional-Laplacian image, tabulated once by radial
//! Fourier inversion and interpolated afterwards.
//!
//! Every profile is a radial integral
//! `c_d ∫₀^∞ m(ρ) e^{-ρ^α} ρ^{d-1} Ω_d(rρ) dρ` with
//! `Ω_d(s) = Γ(d/2) (2/s)^{(d-2)/2} J_{(d-2)/2}(s)` and `c_d = |S^{d-1}| / (2π)^d`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::quad::{gauss_legendre, Rule};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid stable parameters: {0}")]
    Params(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("oscillatory quadrature did not converge at r = {radius:e} (estimate {estimate:e}, value {value:e})")]
    Quadrature { radius: f64, estimate: f64, value: f64 },
    #[error("profile `{0}` is missing from the table")]
    MissingProfile(&'static str),
    #[error("malformed kernel table: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stability index and dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub dim: usize,
}

impl StableParams {
    pub fn new(alpha: f64, dim: usize) -> Result<Self, KernelError> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(KernelError::Params(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        if !(1..=3).contains(&dim) {
            return Err(KernelError::Params(format!("dim = {dim} must be 1, 2 or 3")));
        }
        Ok(Self { alpha, dim })
    }
}

/// Radial profiles stored in a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    G,
    Grad,
    Hess,
    FracLap,
    GradFracLap,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::G => "g",
            Profile::Grad => "grad",
            Profile::Hess => "hess",
            Profile::FracLap => "fraclap",
            Profile::GradFracLap => "gradfraclap",
        }
    }
}

/// Area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / puruspe::gamma(h)
}

/// Cubic Hermite data on the uniform `u = ln(1 + r)` grid.
#[derive(Debug, Clone)]
struct Hermite {
    v: Vec<f64>,
    s: Vec<f64>,
}

impl Hermite {
    fn with_slopes(v: Vec<f64>, s: Vec<f64>) -> Self {
        Self { v, s }
    }

    /// Slopes by centred differences, one-sided second order at the ends.
    fn with_fd_slopes(v: Vec<f64>, du: f64) -> Self {
        let n = v.len();
        let mut s = vec![0.0; n];
        for i in 1..n - 1 {
            s[i] = (v[i + 1] - v[i - 1]) / (2.0 * du);
        }
        s[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * du);
        s[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * du);
        Self { v, s }
    }

    #[inline]
    fn eval(&self, i: usize, t: f64, du: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.v[i] + h10 * du * self.s[i] + h01 * self.v[i + 1] + h11 * du * self.s[i + 1]
    }
}

/// Tabulated radial profiles of `g^(α)`.
#[derive(Debug, Clone)]
pub struct RadialTable {
    params: StableParams,
    r_max: f64,
    du: f64,
    radii: Vec<f64>,
    g: Vec<f64>,
    raw: [Option<Vec<f64>>; 4],
    log_g: Hermite,
    grad: Option<Hermite>,
    hess: Option<Hermite>,
    frac: Option<Hermite>,
    grad_frac: Option<Hermite>,
    tail: [f64; TAIL_TERMS],
}

const QUAD_REL_TOL: f64 = 1e-6;
/// Number of terms in the fitted tail series.
pub const TAIL_TERMS: usize = 5;

/// Ω_d(s) = ₀F₁(; d/2; -s²/4).
fn omega(d: usize, s: f64) -> f64 {
    if s < 3.0 {
        let q = -0.25 * s * s;
        let h = d as f64 / 2.0;
        let mut term: f64 = 1.0;
        let mut sum: f64 = 1.0;
        let mut k = 0.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            term *= q / ((k + 1.0) * (k + h));
            sum += term;
            k += 1.0;
            if k > 60.0 {
                break;
            }
        }
        return sum;
    }
    let (sn, cs) = s.sin_cos();
    match d {
        1 => cs,
        2 => puruspe::Jn(0, s),
        3 => sn / s,
        4 => 2.0 * puruspe::Jn(1, s) / s,
        5 => 3.0 * (sn - s * cs) / (s * s * s),
        6 => 8.0 * puruspe::Jn(2, s) / (s * s),
        7 => {
            let j2 = (3.0 / (s * s * s) - 1.0 / s) * sn - 3.0 * cs / (s * s);
            15.0 * j2 / (s * s)
        }
        _ => unreachable!("Ω_d only needed for d ≤ 7"),
    }
}

/// The five raw integrands at one node (without c_d), returned in the order
/// g, g', g'', Lg, (Lg)'.
#[inline]
fn integrands(alpha: f64, d: usize, r: f64, rho: f64) -> [f64; 5] {
    let pa = rho.powf(alpha);
    let e = (-pa).exp();
    let s = r * rho;
    let (v0, v1, v2) = if d == 1 {
        let (sn, cs) = s.sin_cos();
        (e * cs, -e * rho * sn, -e * rho * rho * cs)
    } else {
        let df = d as f64;
        let o0 = omega(d, s);
        let o2 = omega(d + 2, s);
        let o4 = omega(d + 4, s);
        let pd1 = rho.powi(d as i32 - 1);
        let d1 = -(s / df) * o2;
        let d2 = -o2 / df + s * s / (df * (df + 2.0)) * o4;
        (e * pd1 * o0, e * pd1 * rho * d1, e * pd1 * rho * rho * d2)
    };
    [v0, v1, v2, -pa * v0, -pa * v1]
}

/// Upper integration limit: `e^{-ρ^α} ρ^{d+3}` below 1e-22.
fn rho_max(alpha: f64, d: usize) -> f64 {
    let f = |rho: f64| rho.powf(alpha) - (d as f64 + 3.0) * rho.ln() - 50.7;
    let (mut lo, mut hi) = (2.0_f64, 4.0_f64);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Radial profiles at one radius by panel quadrature; panels are graded
/// geometrically towards ρ = 0 and never wider than one oscillation period.
fn profiles_at(
    p: StableParams,
    r: f64,
    rho_hi: f64,
    fine: &Rule,
    coarse: &Rule,
) -> Result<[f64; 5], KernelError> {
    let d = p.dim;
    let c_d = sphere_area(d) / (2.0 * PI).powi(d as i32);
    let period = if r > 0.0 { 2.0 * PI / r } else { f64::INFINITY };
    let rho_c = if r > 0.0 { (0.5 * period).min(1.0) } else { 1.0 };
    let mut acc = [0.0; 5];
    let mut err = 0.0;
    let mut scale = 0.0;
    let mut panel = |a: f64, b: f64, acc: &mut [f64; 5]| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut loc = [0.0; 5];
        for (x, w) in fine.nodes.iter().zip(&fine.weights) {
            let v = integrands(p.alpha, d, r, mid + half * x);
            for k in 0..5 {
                loc[k] += w * v[k];
            }
        }
        let mut chk = 0.0;
        for (x, w) in coarse.nodes.iter().zip(&coarse.weights) {
            chk += w * integrands(p.alpha, d, r, mid + half * x)[0];
        }
        for k in 0..5 {
            acc[k] += loc[k] * half;
        }
        err += ((loc[0] - chk) * half).abs();
        scale += (loc[0] * half).abs();
    };
    let mut hi = rho_c;
    for _ in 0..64 {
        let lo = 0.5 * hi;
        panel(lo, hi, &mut acc);
        hi = lo;
    }
    let mut a = rho_c;
    while a < rho_hi {
        let w = (0.5 * a).min(period);
        let b = (a + w).min(rho_hi);
        panel(a, b, &mut acc);
        a = b;
    }
    for v in acc.iter_mut() {
        *v *= c_d;
    }
    let value = acc[0];
    // the estimate is the coarse-rule discrepancy, which bounds the fine-rule error
    let estimate = c_d * err;
    if !(estimate <= QUAD_REL_TOL * value.abs() + 1e-12 * c_d * scale) || !value.is_finite() {
        return Err(KernelError::Quadrature { radius: r, estimate, value });
    }
    Ok(acc)
}

/// High-resolution single-radius evaluation of the five profiles; used as an
/// independent check of the interpolated table.
pub fn direct_profiles(params: StableParams, r: f64) -> Result<[f64; 5], KernelError> {
    profiles_at(params, r, rho_max(params.alpha, params.dim), &gauss_legendre(20), &gauss_legendre(14))
}

/// Build the table on `n_points` radii uniform in `ln(1 + r)` over `[0, r_max]`.
pub fn build_radial_table(
    params: StableParams,
    r_max: f64,
    n_points: usize,
) -> Result<RadialTable, KernelError> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(KernelError::Domain(format!("r_max = {r_max} must be positive")));
    }
    if n_points < 64 {
        return Err(KernelError::Domain(format!("n_points = {n_points} must be at least 64")));
    }
    let du = r_max.ln_1p() / (n_points - 1) as f64;
    let radii: Vec<f64> = (0..n_points).map(|i| (i as f64 * du).exp_m1()).collect();
    let fine = gauss_legendre(12);
    let coarse = gauss_legendre(10);
    let hi = rho_max(params.alpha, params.dim);
    let rows: Vec<[f64; 5]> = radii
        .par_iter()
        .map(|&r| profiles_at(params, r, hi, &fine, &coarse))
        .collect::<Result<_, _>>()?;
    let col = |k: usize| rows.iter().map(|v| v[k]).collect::<Vec<f64>>();
    let mut g1 = col(1);
    let mut lg1 = col(4);
    g1[0] = 0.0;
    lg1[0] = 0.0;
    RadialTable::assemble(
        params,
        r_max,
        radii,
        col(0),
        [Some(g1), Some(col(2)), Some(col(3)), Some(lg1)],
    )
}

impl RadialTable {
    fn assemble(
        params: StableParams,
        r_max: f64,
        radii: Vec<f64>,
        g: Vec<f64>,
        raw: [Option<Vec<f64>>; 4],
    ) -> Result<Self, KernelError> {
        let n = radii.len();
        let du = r_max.ln_1p() / (n - 1) as f64;
        if let Some(i) = g.iter().position(|v| !(*v > 0.0)) {
            return Err(KernelError::Format(format!("g is not positive at r = {:e}", radii[i])));
        }
        let log_v: Vec<f64> = g.iter().map(|v| v.ln()).collect();
        let log_g = match &raw[0] {
            Some(g1) => {
                let s = (0..n).map(|i| (1.0 + radii[i]) * g1[i] / g[i]).collect();
                Hermite::with_slopes(log_v, s)
            }
            None => Hermite::with_fd_slopes(log_v, du),
        };
        let deriv_pair = |v: &Option<Vec<f64>>, dv: &Option<Vec<f64>>| match (v, dv) {
            (Some(v), Some(dv)) => Some(Hermite::with_slopes(
                v.clone(),
                (0..n).map(|i| (1.0 + radii[i]) * dv[i]).collect(),
            )),
            (Some(v), None) => Some(Hermite::with_fd_slopes(v.clone(), du)),
            _ => None,
        };
        let grad = deriv_pair(&raw[0], &raw[1]);
        let hess = deriv_pair(&raw[1], &None);
        let frac = deriv_pair(&raw[2], &raw[3]);
        let grad_frac = deriv_pair(&raw[3], &None);
        let tail = fit_tail(params, &radii, &g, r_max)?;
        Ok(Self { params, r_max, du, radii, g, raw, log_g, grad, hess, frac, grad_frac, tail })
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn n_points(&self) -> usize {
        self.radii.len()
    }

    /// Leading tail coefficient: `g(r) ≈ tail_coeff · r^{-d-α}`.
    pub fn tail_coeff(&self) -> f64 {
        self.tail[0]
    }

    /// Fitted tail coefficients of `Σ c_k r^{-d-kα}`.
    pub fn tail_series(&self) -> [f64; TAIL_TERMS] {
        self.tail
    }

    pub fn has(&self, p: Profile) -> bool {
        match p {
            Profile::G => true,
            Profile::Grad => self.grad.is_some(),
            Profile::Hess => self.hess.is_some(),
            Profile::FracLap => self.frac.is_some(),
            Profile::GradFracLap => self.grad_frac.is_some(),
        }
    }

    fn require(&self, p: Profile) -> Result<(), KernelError> {
        if self.has(p) {
            Ok(())
        } else {
            Err(KernelError::MissingProfile(p.name()))
        }
    }

    #[inline]
    fn locate(&self, r: f64) -> (usize, f64) {
        let u = r.ln_1p() / self.du;
        let i = (u as usize).min(self.radii.len() - 2);
        (i, u - i as f64)
    }

    #[inline]
    fn tail_sum(&self, r: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let d = self.params.dim as f64;
        let a = self.params.alpha;
        let mut s = 0.0;
        for (k, c) in self.tail.iter().enumerate() {
            let e = d + (k + 1) as f64 * a;
            s += c * f((k + 1) as f64, e) * r.powf(-e);
        }
        s
    }

    /// Radial profile of `g`.
    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        if r > self.r_max {
            return self.tail_sum(r, |_, _| 1.0);
        }
        let (i, t) = self.locate(r);
        self.log_g.eval(i, t, self.du).exp()
    }

    /// Radial derivative `g'(r)`.
    #[inline]
    pub fn dg(&self, r: f64) -> f64 {
        if r > self.r_max {
            return self.tail_sum(r, |_, e| -e) / r;
        }
        let (i, t) = self.locate(r);
        self.grad.as_ref().map_or(f64::NAN, |h| h.eval(i, t, self.du))
    }

    /// Second radial derivative `g''(r)`.
    #[inline]
    pub fn d2g(&self, r: f64) -> f64 {
        if r > self.r_max {
            return self.tail_sum(r, |_, e| e * (e + 1.0)) / (r * r);
        }
        let (i, t) = self.locate(r);
        self.hess.as_ref().map_or(f64::NAN, |h| h.eval(i, t, self.du))
    }

    /// `g'(r)/r`, continuous at the origin.
    #[inline]
    pub fn dg_over_r(&self, r: f64) -> f64 {
        if r < 1e-3 * self.radii[1] {
            self.d2g(r)
        } else {
            self.dg(r) / r
        }
    }

    /// Radial profile of `L^(α) g`.
    #[inline]
    pub fn lg(&self, r: f64) -> f64 {
        if r > self.r_max {
            return self.tail_sum(r, |k, _| k);
        }
        let (i, t) = self.locate(r);
        self.frac.as_ref().map_or(f64::NAN, |h| h.eval(i, t, self.du))
    }

    /// Radial derivative of `L^(α) g`.
    #[inline]
    pub fn dlg(&self, r: f64) -> f64 {
        if r > self.r_max {
            return self.tail_sum(r, |k, e| -k * e) / r;
        }
        let (i, t) = self.locate(r);
        self.grad_frac.as_ref().map_or(f64::NAN, |h| h.eval(i, t, self.du))
    }

    /// Mass of `g` outside the ball of radius `r0` from the tail series;
    /// meaningful for `r0` at least a tenth of `r_max`.
    pub fn tail_mass(&self, r0: f64) -> f64 {
        let a = self.params.alpha;
        let area = sphere_area(self.params.dim);
        let mut s = 0.0;
        for (k, c) in self.tail.iter().enumerate() {
            let ka = (k + 1) as f64 * a;
            s += c * r0.powf(-ka) / ka;
        }
        area * s
    }

    /// Write the table as CSV. `meta` lines are emitted as `# key=value`.
    pub fn write_csv<W: Write>(&self, mut w: W, meta: &[(String, String)]) -> Result<(), KernelError> {
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "alpha,dim,r_max,n_points,tail_coeff")?;
        writeln!(
            w,
            "{:e},{},{:e},{},{:e}",
            self.params.alpha,
            self.params.dim,
            self.r_max,
            self.radii.len(),
            self.tail_coeff()
        )?;
        writeln!(w, "r,g,grad,hess,fraclap,gradfraclap")?;
        let cell = |c: &Option<Vec<f64>>, i: usize| c.as_ref().map_or(String::new(), |v| format!("{:e}", v[i]));
        for i in 0..self.radii.len() {
            writeln!(
                w,
                "{:e},{:e},{},{},{},{}",
                self.radii[i],
                self.g[i],
                cell(&self.raw[0], i),
                cell(&self.raw[1], i),
                cell(&self.raw[2], i),
                cell(&self.raw[3], i)
            )?;
        }
        Ok(())
    }

    /// Read a table written by [`RadialTable::write_csv`]. Empty columns mark
    /// missing profiles.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, KernelError> {
        let mut lines = r
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim_start().starts_with('#') && !s.trim().is_empty()));
        let mut next = || -> Result<String, KernelError> {
            lines.next().ok_or_else(|| KernelError::Format("unexpected end of file".into()))?.map_err(Into::into)
        };
        let bad = |m: &str| KernelError::Format(m.to_string());
        if next()?.trim() != "alpha,dim,r_max,n_points,tail_coeff" {
            return Err(bad("missing table header"));
        }
        let head: Vec<String> = next()?.split(',').map(|s| s.trim().to_string()).collect();
        if head.len() != 5 {
            return Err(bad("table header needs five fields"));
        }
        let pf = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        let alpha = pf(&head[0])?;
        let dim: usize = head[1].parse().map_err(|_| bad("bad dim"))?;
        let r_max = pf(&head[2])?;
        let n: usize = head[3].parse().map_err(|_| bad("bad n_points"))?;
        let params = StableParams::new(alpha, dim)?;
        if next()?.trim() != "r,g,grad,hess,fraclap,gradfraclap" {
            return Err(bad("missing column header"));
        }
        let mut radii = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut cols: [Vec<Option<f64>>; 4] = Default::default();
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad("row needs six fields"));
            }
            radii.push(pf(f[0])?);
            g.push(pf(f[1])?);
            for k in 0..4 {
                cols[k].push(if f[k + 2].is_empty() { None } else { Some(pf(f[k + 2])?) });
            }
        }
        if radii.len() != n || n < 64 {
            return Err(bad("row count does not match n_points"));
        }
        let du = r_max.ln_1p() / (n - 1) as f64;
        for (i, r) in radii.iter().enumerate() {
            let want = (i as f64 * du).exp_m1();
            if (r - want).abs() > 1e-9 * (1.0 + want) {
                return Err(bad("radii are not uniform in ln(1 + r)"));
            }
        }
        let raw = cols.map(|c| {
            if c.iter().all(Option::is_some) {
                Some(c.into_iter().map(Option::unwrap).collect())
            } else {
                None
            }
        });
        Self::assemble(params, r_max, radii, g, raw)
    }
}

/// Least-squares fit of `g r^{d+α} = Σ_k c_k (r/r_max)^{-(k-1)α}` on the last
/// decade of radii, returned as coefficients of `r^{-d-kα}`.
fn fit_tail(p: StableParams, radii: &[f64], g: &[f64], r_max: f64) -> Result<[f64; TAIL_TERMS], KernelError> {
    let d = p.dim as f64;
    let a = p.alpha;
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(g)
        .filter(|(r, _)| **r >= 0.1 * r_max)
        .map(|(r, v)| (*r, *v))
        .collect();
    let m = DMatrix::from_fn(pts.len(), TAIL_TERMS, |i, k| (pts[i].0 / r_max).powf(-(k as f64) * a));
    let b = DVector::from_fn(pts.len(), |i, _| pts[i].1 * pts[i].0.powf(d + a));
    let c = m
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| KernelError::Format(format!("tail fit failed: {e}")))?;
    let mut out = [0.0; TAIL_TERMS];
    for k in 0..TAIL_TERMS {
        out[k] = c[k] * r_max.powf(k as f64 * a);
    }
    if !(out[0] > 0.0) {
        return Err(KernelError::Format(format!("fitted tail coefficient {} is not positive", out[0])));
    }
    Ok(out)
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dim(table: &RadialTable, x: &[f64]) -> Result<(), KernelError> {
    if x.len() != table.params.dim {
        return Err(KernelError::Domain(format!(
            "point has dimension {}, table has {}",
            x.len(),
            table.params.dim
        )));
    }
    Ok(())
}

/// `g(x)`; interpolated inside `r_max`, tail series beyond.
pub fn eval_g(table: &RadialTable, x: &[f64]) -> f64 {
    table.g(norm(x))
}

/// `∇g(x) = g'(|x|) x/|x|`.
pub fn eval_grad_g(table: &RadialTable, x: &[f64]) -> Result<Vec<f64>, KernelError> {
    check_dim(table, x)?;
    table.require(Profile::Grad)?;
    let r = norm(x);
    if r == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let f = table.dg(r) / r;
    Ok(x.iter().map(|v| f * v).collect())
}

/// `∇²g(x) = g'' x̂x̂ᵀ + (g'/r)(I − x̂x̂ᵀ)`.
pub fn eval_hess_g(table: &RadialTable, x: &[f64]) -> Result<DMatrix<f64>, KernelError> {
    check_dim(table, x)?;
    table.require(Profile::Grad)?;
    table.require(Profile::Hess)?;
    let d = x.len();
    let r = norm(x);
    let g2 = table.d2g(r);
    let q = table.dg_over_r(r);
    let mut h = DMatrix::<f64>::identity(d, d) * q;
    if r > 0.0 {
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] += (g2 - q) * x[i] * x[j] / (r * r);
            }
        }
    }
    Ok(h)
}

/// `L^(α) g (x)`.
pub fn eval_frac_lap_g(table: &RadialTable, x: &[f64]) -> Result<f64, KernelError> {
    check_dim(table, x)?;
    table.require(Profile::FracLap)?;
    Ok(table.lg(norm(x)))
}

/// `∇ L^(α) g (x)`.
pub fn eval_grad_frac_lap_g(table: &RadialTable, x: &[f64]) -> Result<Vec<f64>, KernelError> {
    check_dim(table, x)?;
    table.require(Profile::GradFracLap)?;
    let r = norm(x);
    if r == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let f = table.dlg(r) / r;
    Ok(x.iter().map(|v| f * v).collect())
}

/// `(t a)^{-d/α} g((y − center) / (t a)^{1/α})`.
pub fn heat_kernel(
    table: &RadialTable,
    t: f64,
    center: &[f64],
    y: &[f64],
    a_scale: f64,
) -> Result<f64, KernelError> {
    if !(t > 0.0) {
        return Err(KernelError::Domain(format!("time t = {t} must be positive")));
    }
    if !(a_scale > 0.0) {
        return Err(KernelError::Domain(format!("scale a = {a_scale} must be positive")));
    }
    check_dim(table, y)?;
    check_dim(table, center)?;
    let p = table.params;
    let s = (t * a_scale).powf(1.0 / p.alpha);
    let r = center.iter().zip(y).map(|(c, v)| (v - c) * (v - c)).sum::<f64>().sqrt() / s;
    Ok(table.g(r) / s.powi(p.dim as i32))
}
