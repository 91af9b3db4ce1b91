//! Subcommand implementations. Each writes CSV files into an output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stable_parametrix::bounds_kernels::{certify_subconvolution, ConvQuad, KernelSpec};
use stable_parametrix::drift_flows::{solve_flow, Direction, FLOW_TOL};
use stable_parametrix::engine::{
    chapman_kolmogorov_check, decompose_tilde, DensityField, Engine, GridSpec, Model,
};
use stable_parametrix::mc_oracle::{compare_density, empirical_density, quantile_edges, simulate, MCConfig, Scheme};
use stable_parametrix::stable_kernel::{build_radial_table, StableParams};

use crate::config::RunConfig;

/// Outcome of a command; `ok == false` maps to a nonzero exit status.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub ok: bool,
}

struct Csv {
    w: BufWriter<File>,
}

impl Csv {
    fn create(path: &Path, command: &str, cfg: &RunConfig, extra: &[(String, String)]) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "# parametrix {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# command={command}")?;
        for (k, v) in cfg.echo().iter().chain(extra) {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(Self { w })
    }

    fn row(&mut self, cols: &[String]) -> Result<()> {
        writeln!(self.w, "{}", cols.join(","))?;
        Ok(())
    }

    fn nums(&mut self, vals: &[f64]) -> Result<()> {
        self.row(&vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn derived(cfg: &RunConfig) -> Vec<(String, String)> {
    let m = &cfg.model;
    vec![
        ("delta".into(), format!("{:e}", m.delta())),
        ("zeta".into(), format!("{:e}", m.zeta())),
        ("alpha_prime".into(), format!("{:e}", m.alpha_prime())),
    ]
}

fn t_dir(out: &Path, t: f64) -> Result<PathBuf> {
    let d = out.join(format!("t={t}"));
    fs::create_dir_all(&d)?;
    Ok(d)
}

/// Least-squares slope of `log v` against `log t`.
pub fn loglog_slope(ts: &[f64], vs: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = vs.iter().map(|v| v.abs().ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn kernel_table(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let params = StableParams::new(cfg.model.alpha, cfg.model.dim)?;
    let table = build_radial_table(params, cfg.table_r_max, cfg.table_points)?;
    let path = out.join("kernel_table.csv");
    let mut meta = vec![
        ("parametrix".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("command".to_string(), "kernel-table".to_string()),
    ];
    meta.extend(cfg.echo());
    table.write_csv(BufWriter::new(File::create(&path)?), &meta)?;
    Ok(Outcome { files: vec![path], ok: true })
}

/// Density with `p̃` filled in, plus per-term norms.
pub fn density_field(model: &Model, cfg: &RunConfig, t: f64) -> Result<DensityField> {
    let eng = Engine::new(model, &cfg.grid, cfg.x, t, false)?;
    let series = eng.solve()?;
    let mut f = eng.field(&series, eng.mesh.m);
    decompose_tilde(model, &mut f, &cfg.flow)?;
    Ok(f)
}

/// `(min, max)` of `p/p̃` over the grid and the value at the centre of `p̃`.
pub fn tilde_ratios(f: &DensityField) -> (f64, f64, f64) {
    let pt = f.p_tilde.as_ref().expect("p_tilde");
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (a, b) in f.p.iter().zip(pt) {
        lo = lo.min(a / b);
        hi = hi.max(a / b);
    }
    let c = f.center.expect("center");
    (lo, hi, f.interp(&f.p, c) / f.interp(pt, c))
}

pub fn density(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let model = Model::build(cfg.model.clone())?;
    let mut files = Vec::new();
    let diag_path = out.join("diagnostics.csv");
    let mut diag = Csv::create(&diag_path, "density", cfg, &derived(cfg))?;
    diag.row(&header(&["t", "quantity", "value"]))?;
    let mut rc = Vec::new();
    for &t in &cfg.t_list {
        let f = density_field(&model, cfg, t)?;
        let path = t_dir(out, t)?.join("density.csv");
        let mut w = Csv::create(&path, "density", cfg, &[("t".into(), format!("{t}"))])?;
        w.row(&header(&["y", "p", "p0", "residue", "p_tilde", "r_tilde"]))?;
        let (pt, rt) = (f.p_tilde.as_ref().unwrap(), f.r_tilde.as_ref().unwrap());
        for j in 0..f.y.len() {
            w.nums(&[f.y[j], f.p[j], f.p0[j], f.residue[j], pt[j], rt[j]])?;
        }
        w.finish()?;
        files.push(path);
        let (mass, tail) = f.mass();
        let (lo, hi, at_c) = tilde_ratios(&f);
        let c = f.center.unwrap();
        rc.push((at_c - 1.0).abs());
        let mut put = |q: &str, v: f64| diag.row(&[format!("{t}"), q.to_string(), format!("{v:e}")]);
        for (k, n) in f.diagnostics.norms.iter().enumerate() {
            put(&format!("norm_{k}"), *n)?;
        }
        put("mass", mass)?;
        put("tail_mass", tail)?;
        put("center", c)?;
        put("ratio_min", lo)?;
        put("ratio_max", hi)?;
        put("ratio_center", at_c)?;
        put("negative_min", f.diagnostics.negative_min)?;
        put("truncated", f.diagnostics.truncated as u8 as f64)?;
    }
    if cfg.t_list.len() > 1 {
        let s = loglog_slope(&cfg.t_list, &rc);
        diag.row(&["all".into(), "residue_slope".into(), format!("{s:e}")])?;
    }
    diag.finish()?;
    files.push(diag_path);
    Ok(Outcome { files, ok: true })
}

pub fn derivative(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let model = Model::build(cfg.model.clone())?;
    let mut files = Vec::new();
    let diag_path = out.join("diagnostics.csv");
    let mut diag = Csv::create(&diag_path, "derivative", cfg, &derived(cfg))?;
    diag.row(&header(&["t", "quantity", "value"]))?;
    let mut sups = Vec::new();
    for &t in &cfg.t_list {
        let eng = Engine::new(&model, &cfg.grid, cfg.x, t, true)?;
        let series = eng.solve()?;
        let d = eng.derivative(&series, cfg.theta)?;
        let mut f = eng.field(&series, eng.mesh.m);
        decompose_tilde(&model, &mut f, &cfg.flow)?;
        let pt = f.p_tilde.as_ref().unwrap();
        let path = t_dir(out, t)?.join("dtdensity.csv");
        let mut w = Csv::create(&path, "derivative", cfg, &[("t".into(), format!("{t}"))])?;
        w.row(&header(&["y", "dtp", "dtp0", "p", "p_tilde"]))?;
        for j in 0..d.y.len() {
            w.nums(&[d.y[j], d.dp[j], d.dp0[j], f.p[j], pt[j]])?;
        }
        w.finish()?;
        files.push(path);
        let sup = d.dp.iter().zip(pt).map(|(a, b)| a.abs() / b).fold(0.0, f64::max);
        sups.push(sup);
        diag.row(&[format!("{t}"), "sup_dtp_over_ptilde".into(), format!("{sup:e}")])?;
    }
    if cfg.t_list.len() > 1 {
        let s = loglog_slope(&cfg.t_list, &sups);
        diag.row(&["all".into(), "derivative_exponent".into(), format!("{s:e}")])?;
    }
    diag.finish()?;
    files.push(diag_path);
    Ok(Outcome { files, ok: true })
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let model = Model::build(cfg.model.clone())?;
    let mc = &cfg.mc;
    let mcc = MCConfig { n_paths: mc.n_paths, n_steps: mc.n_steps, t_end: mc.t, seed: mc.seed, scheme: mc.scheme };
    let x0 = vec![cfg.x; cfg.model.dim];
    let samples = simulate(&model, &x0, &mcc)?;
    let dim = cfg.model.dim;
    let mut files = Vec::new();
    let path = out.join("samples.csv");
    let mut w = Csv::create(&path, "simulate", cfg, &[("t".into(), format!("{}", mc.t))])?;
    w.row(&(0..dim).map(|k| format!("x{k}")).collect::<Vec<_>>())?;
    for row in samples.chunks(dim) {
        w.nums(row)?;
    }
    w.finish()?;
    files.push(path);
    if dim == 1 {
        let mut f = density_field(&model, cfg, mc.t)?;
        if mc.scheme == Scheme::PrincipalPart {
            f.p = f.p_tilde.clone().unwrap();
        }
        let edges = quantile_edges(&f, mc.bins, 0.005, 0.995)?;
        let emp = empirical_density(&samples, &edges)?;
        let rep = compare_density(&emp, &f)?;
        let path = out.join("empirical.csv");
        let mut w = Csv::create(&path, "simulate", cfg, &[("t".into(), format!("{}", mc.t))])?;
        w.row(&header(&["bin_center", "height"]))?;
        for (c, h) in emp.centers().iter().zip(&emp.heights) {
            w.nums(&[*c, *h])?;
        }
        w.finish()?;
        files.push(path);
        let path = out.join("mc_report.csv");
        let mut w = Csv::create(&path, "simulate", cfg, &[])?;
        w.row(&header(&["t", "x", "sup_rel_bulk", "l1", "ks", "bulk_bins", "tail_emp", "tail_analytic", "tail_z"]))?;
        w.nums(&[mc.t, cfg.x, rep.sup_rel_bulk, rep.l1, rep.ks, rep.bulk_bins as f64, rep.tail_emp, rep.tail_analytic, rep.tail_z])?;
        w.finish()?;
        files.push(path);
    }
    Ok(Outcome { files, ok: true })
}

/// Settings for the intermediate engines of the Chapman–Kolmogorov check.
pub fn ck_inner(outer: &GridSpec) -> GridSpec {
    GridSpec { k_max: outer.k_max, series_tol: outer.series_tol, ..GridSpec::coarse() }
}

pub fn ck_test(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let model = Model::build(cfg.model.clone())?;
    let ck = &cfg.ck;
    let rep = chapman_kolmogorov_check(&model, &cfg.grid, &ck_inner(&cfg.grid), ck.t, ck.s, cfg.x, ck.starts)?;
    let ok = rep.normalized <= ck.tol;
    let path = out.join("ck.csv");
    let mut w = Csv::create(&path, "ck-test", cfg, &[])?;
    w.row(&header(&["t", "s", "x", "sup_err", "sup_p", "normalized", "starts", "tol", "pass"]))?;
    w.row(&[
        format!("{:e}", rep.t),
        format!("{:e}", rep.s),
        format!("{:e}", rep.x),
        format!("{:e}", rep.sup_err),
        format!("{:e}", rep.sup_p),
        format!("{:e}", rep.normalized),
        rep.starts.to_string(),
        format!("{:e}", ck.tol),
        ok.to_string(),
    ])?;
    w.finish()?;
    Ok(Outcome { files: vec![path], ok })
}

/// One line of the validation report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

fn check(name: impl Into<String>, value: f64, bound: impl Into<String>, pass: bool) -> Check {
    Check { name: name.into(), value, bound: bound.into(), pass }
}

/// Run the invariant suite for the configured model.
pub fn validation_checks(cfg: &RunConfig, seed: u64) -> Result<Vec<Check>> {
    let model = Model::build(cfg.model.clone())?;
    let m = &cfg.model;
    let mut out = vec![check("delta_positive", m.delta(), "> 0", m.delta() > 0.0)];
    for &t in &cfg.t_list {
        let f = density_field(&model, cfg, t)?;
        let mass = f.mass().0;
        out.push(check(format!("mass[t={t}]"), mass, "[0.999, 1.001]", (mass - 1.0).abs() <= 1e-3));
        let (lo, hi, _) = tilde_ratios(&f);
        out.push(check(format!("ratio_min[t={t}]"), lo, "> 0.1", lo > 0.1));
        out.push(check(format!("ratio_max[t={t}]"), hi, "< 10", hi < 10.0));
        let neg = f.diagnostics.negative_min;
        out.push(check(format!("negativity[t={t}]"), neg, ">= -1e-6", neg >= -1e-6));
        let n = &f.diagnostics.norms;
        let decay = if n.len() > 1 { n[n.len() - 1] / n[0] } else { 0.0 };
        out.push(check(format!("series_decay[t={t}]"), decay, "<= 1e-4", decay <= 1e-4));
    }
    if m.dim == 1 && !model.spec.is_trivial() {
        let t = cfg.t_list[0];
        let psi = Engine::new(&model, &cfg.grid, cfg.x, t, false)?.psi()?;
        out.push(check(format!("psi_residual[t={t}]"), psi.residual, "<= 1e-4", psi.residual <= 1e-4));
    }
    // inverse flow identity on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.gen_range(0.01..1.0);
        let s = rng.gen_range(0.0..t);
        let y: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let back = solve_flow(&model.drift, Direction::Backward, s, &y, t, FLOW_TOL)?;
        let theta_t = back.end().to_vec();
        let theta_s = back.at(s);
        let fwd = solve_flow(&model.drift, Direction::Forward, t - s, &theta_t, t - s, FLOW_TOL)?;
        let err = fwd.end().iter().zip(&theta_s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    out.push(check("inverse_flow", worst, "<= 1e-9", worst <= 10.0 * FLOW_TOL));
    if m.dim == 1 {
        let base = KernelSpec::new(0.0, m.alpha, 1, Some(model.drift.clone()))?;
        let cert =
            certify_subconvolution(&base, &[0.0, m.chi], &[0.1, 0.5], &[0.25, 0.5, 0.75], &[0.0, 1.0, 5.0], cfg.x, ConvQuad::default())?;
        for (l, r) in &cert.max_ratio {
            out.push(check(format!("subconvolution_max[lambda={l}]"), *r, "finite", r.is_finite()));
        }
    }
    Ok(out)
}

pub fn validate(cfg: &RunConfig, out: &Path, seed: u64) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let checks = validation_checks(cfg, seed)?;
    let path = out.join("validate.csv");
    let mut w = Csv::create(&path, "validate", cfg, &derived(cfg))?;
    w.row(&header(&["check", "value", "bound", "pass"]))?;
    for c in &checks {
        w.row(&[c.name.clone(), format!("{:e}", c.value), c.bound.clone(), c.pass.to_string()])?;
    }
    w.finish()?;
    Ok(Outcome { files: vec![path], ok: checks.iter().all(|c| c.pass) })
}
