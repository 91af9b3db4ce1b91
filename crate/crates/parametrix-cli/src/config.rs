//! Line-oriented `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use stable_parametrix::drift_flows::DriftSpec;
use stable_parametrix::engine::{ACoeff, FlowChoice, GridSpec, ModelSpec};
use stable_parametrix::mc_oracle::Scheme;

const KEYS: &[&str] = &[
    "model.alpha",
    "model.gamma",
    "model.eta",
    "model.chi",
    "model.dim",
    "drift.kind",
    "drift.gamma",
    "drift.cap",
    "drift.c",
    "drift.file",
    "a.kind",
    "a.value",
    "a.base",
    "a.amp",
    "grid.h",
    "grid.growth",
    "grid.extent",
    "grid.time_nodes",
    "grid.panel0_nodes",
    "series.K",
    "series.tol",
    "run.t_list",
    "run.x",
    "run.theta",
    "run.flow",
    "table.r_max",
    "table.points",
    "mc.n_paths",
    "mc.n_steps",
    "mc.t",
    "mc.seed",
    "mc.scheme",
    "mc.bins",
    "ck.t",
    "ck.s",
    "ck.starts",
    "ck.tol",
];

/// Raw key/value pairs, sorted by key.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", no + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key `{k}`", no + 1);
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", no + 1);
            }
        }
        Ok(Self { entries })
    }

    fn get(&self, k: &str) -> Option<&str> {
        self.entries.get(k).map(String::as_str)
    }

    fn f64_or(&self, k: &str, default: Option<f64>) -> Result<f64> {
        match self.get(k) {
            Some(v) => v.parse().with_context(|| format!("`{k}` must be a number, got `{v}`")),
            None => default.ok_or_else(|| anyhow!("missing required key `{k}`")),
        }
    }

    fn usize_or(&self, k: &str, default: usize) -> Result<usize> {
        match self.get(k) {
            Some(v) => v.parse().with_context(|| format!("`{k}` must be a non-negative integer, got `{v}`")),
            None => Ok(default),
        }
    }

    fn list(&self, k: &str) -> Result<Option<Vec<f64>>> {
        self.get(k)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().with_context(|| format!("`{k}`: bad number `{s}`")))
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone)]
pub struct McSettings {
    pub n_paths: usize,
    pub n_steps: usize,
    pub t: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub bins: usize,
}

#[derive(Debug, Clone)]
pub struct CkSettings {
    pub t: f64,
    pub s: f64,
    pub starts: usize,
    pub tol: f64,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub t_list: Vec<f64>,
    pub x: f64,
    pub theta: f64,
    pub flow: FlowChoice,
    pub table_r_max: f64,
    pub table_points: usize,
    pub mc: McSettings,
    pub ck: CkSettings,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_str_in(&text, dir)
    }

    /// Parse `text`; relative file paths resolve against `dir`.
    pub fn from_str_in(text: &str, dir: &Path) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let alpha = raw.f64_or("model.alpha", None)?;
        let dim = raw.usize_or("model.dim", 1)?;
        let kind = raw.get("drift.kind").unwrap_or("ttw");
        let model_gamma = raw.get("model.gamma").map(|_| raw.f64_or("model.gamma", None)).transpose()?;
        let drift = match kind {
            "ttw" => {
                let g = raw.f64_or("drift.gamma", model_gamma)?;
                DriftSpec::ttw(g, raw.f64_or("drift.cap", Some(10.0))?, dim)?
            }
            "constant" => {
                let c = raw.list("drift.c")?.unwrap_or_else(|| vec![0.0; dim]);
                if c.len() != dim {
                    bail!("`drift.c` has {} entries, model.dim is {dim}", c.len());
                }
                DriftSpec::constant(c)?
            }
            "lipschitz_demo" => DriftSpec::lipschitz_demo(dim)?,
            "tabulated" => {
                let file = raw.get("drift.file").ok_or_else(|| anyhow!("`drift.kind = tabulated` needs `drift.file`"))?;
                let (xs, bs) = read_table(&dir.join(file))?;
                DriftSpec::tabulated(xs, bs, raw.f64_or("drift.gamma", model_gamma)?)?
            }
            other => bail!("unknown drift.kind `{other}` (expected ttw, constant, lipschitz_demo or tabulated)"),
        };
        let drift = declare_gamma(drift, model_gamma)?;
        let a = match raw.get("a.kind").unwrap_or("constant") {
            "constant" => ACoeff::Constant(raw.f64_or("a.value", Some(1.0))?),
            "bump" => ACoeff::Bump { base: raw.f64_or("a.base", Some(1.0))?, amp: raw.f64_or("a.amp", Some(0.2))? },
            other => bail!("unknown a.kind `{other}` (expected constant or bump)"),
        };
        let eta = raw.f64_or("model.eta", Some(1.0))?;
        let chi = raw.f64_or("model.chi", Some(0.5 * alpha.min(eta)))?;
        let model = ModelSpec::new(alpha, drift, a, eta, chi)?;

        let d = GridSpec::default();
        let grid = GridSpec {
            h: raw.f64_or("grid.h", Some(d.h))?,
            growth: raw.f64_or("grid.growth", Some(d.growth))?,
            extent: raw.f64_or("grid.extent", Some(d.extent))?,
            time_nodes: raw.usize_or("grid.time_nodes", d.time_nodes)?,
            panel0_nodes: raw.usize_or("grid.panel0_nodes", d.panel0_nodes)?,
            k_max: raw.usize_or("series.K", d.k_max)?,
            series_tol: raw.f64_or("series.tol", Some(d.series_tol))?,
            window: d.window,
        };
        grid.validate()?;

        let t_list = raw.list("run.t_list")?.unwrap_or_else(|| vec![1.0]);
        if t_list.is_empty() || t_list.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            bail!("`run.t_list` must hold positive times");
        }
        let x = raw.f64_or("run.x", Some(0.0))?;
        let theta = raw.f64_or("run.theta", Some(0.5))?;
        if !(theta > 0.0 && theta < 1.0) {
            bail!("`run.theta` = {theta} must lie in (0, 1)");
        }
        let flow = match raw.get("run.flow").unwrap_or("anchor") {
            "anchor" => FlowChoice::ApproxAnchorT,
            s if s.starts_with("picard:") => {
                let k: usize = s[7..].parse().with_context(|| format!("bad Picard order in `{s}`"))?;
                let rho = model.picard_rho(k);
                if !(rho > 0.0) {
                    bail!("Picard order {k} needs rho_k = 1 + gamma + ... + gamma^k - 1/alpha > 0, got {rho}");
                }
                FlowChoice::Picard(k)
            }
            other => bail!("unknown run.flow `{other}` (expected anchor or picard:<k>)"),
        };
        let scheme = match raw.get("mc.scheme").unwrap_or("euler") {
            "euler" => Scheme::Euler,
            "principal_part" => Scheme::PrincipalPart,
            other => bail!("unknown mc.scheme `{other}`"),
        };
        let mc = McSettings {
            n_paths: raw.usize_or("mc.n_paths", 100_000)?,
            n_steps: raw.usize_or("mc.n_steps", 512)?,
            t: raw.f64_or("mc.t", Some(t_list[0]))?,
            seed: raw.get("mc.seed").map(|v| v.parse()).transpose().context("`mc.seed` must be a u64")?.unwrap_or(1),
            scheme,
            bins: raw.usize_or("mc.bins", 60)?,
        };
        let ck_t = raw.f64_or("ck.t", Some(t_list[0]))?;
        let ck = CkSettings {
            t: ck_t,
            s: raw.f64_or("ck.s", Some(0.5 * ck_t))?,
            starts: raw.usize_or("ck.starts", 12)?,
            tol: raw.f64_or("ck.tol", Some(1e-2))?,
        };
        let table_r_max = raw.f64_or("table.r_max", Some(200.0))?;
        let table_points = raw.usize_or("table.points", 2048)?;
        Ok(Self {
            raw,
            model,
            grid,
            t_list,
            x,
            theta,
            flow,
            table_r_max,
            table_points,
            mc,
            ck,
        })
    }

    /// Config echo for CSV headers.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.raw.entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// A model-level exponent may be smaller than the drift's own one.
fn declare_gamma(mut drift: DriftSpec, model_gamma: Option<f64>) -> Result<DriftSpec> {
    let Some(g) = model_gamma else { return Ok(drift) };
    if !(g > 0.0 && g <= 1.0) {
        bail!("`model.gamma` = {g} must lie in (0, 1]");
    }
    if g > drift.gamma + 1e-12 {
        bail!("`model.gamma` = {g} exceeds the Hölder exponent {} of the drift", drift.gamma);
    }
    drift.gamma = g;
    Ok(drift)
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut xs, mut bs) = (Vec::new(), Vec::new());
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| anyhow!("{}: expected `x,b` rows", path.display()))?;
        xs.push(a.trim().parse()?);
        bs.push(b.trim().parse()?);
    }
    Ok((xs, bs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_str_in(text, Path::new("."))
    }

    #[test]
    fn defaults_and_comments() {
        let c = parse("# benchmark\nmodel.alpha = 0.7   # stable index\nmodel.gamma = 0.5\n").unwrap();
        assert_eq!(c.t_list, vec![1.0]);
        assert_eq!(c.x, 0.0);
        assert!((c.model.chi - 0.35).abs() < 1e-15);
        assert!((c.model.delta() - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(c.ck.s, 0.5);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let e = parse("model.alpha = 1\nmodel.alfa = 1\n").unwrap_err().to_string();
        assert!(e.contains("unknown key `model.alfa`"), "{e}");
        let e = parse("model.alpha = 1\nmodel.alpha = 1.2\n").unwrap_err().to_string();
        assert!(e.contains("duplicate"), "{e}");
        assert!(parse("model.gamma = 0.5\n").is_err());
    }

    #[test]
    fn balance_violation_names_the_inequality() {
        let e = format!("{:#}", parse("model.alpha = 0.5\nmodel.gamma = 0.4\n").unwrap_err());
        assert!(e.contains("alpha + gamma = 0.5 + 0.4 = 0.9 <= 1"), "{e}");
    }

    #[test]
    fn chi_range_is_checked() {
        assert!(parse("model.alpha = 0.7\nmodel.gamma = 0.5\nmodel.chi = 0.9\n").is_err());
    }

    #[test]
    fn picard_order_needs_positive_rho() {
        // 1 + 0.35 − 1/0.7 < 0, 1 + 0.35 + 0.35² − 1/0.7 > 0
        let e = parse("model.alpha = 0.7\nmodel.gamma = 0.35\nrun.flow = picard:1\n").unwrap_err().to_string();
        assert!(e.contains("rho_k"), "{e}");
        let c = parse("model.alpha = 0.7\nmodel.gamma = 0.35\nrun.flow = picard:2\n").unwrap();
        assert_eq!(c.flow, FlowChoice::Picard(2));
    }

    #[test]
    fn model_gamma_may_only_lower_the_drift_exponent() {
        let c = parse("model.alpha = 1.2\nmodel.gamma = 0.3\ndrift.gamma = 0.6\n").unwrap();
        assert_eq!(c.model.drift.gamma, 0.3);
        assert!(parse("model.alpha = 1.2\nmodel.gamma = 0.8\ndrift.gamma = 0.6\n").is_err());
    }
}
