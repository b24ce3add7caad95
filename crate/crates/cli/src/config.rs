//! TOML run configuration and its validation.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use reflectvol::optim::OptimizerConfig;
use reflectvol::{
    make_constant_vol, make_exponential_vol, make_reflected_bm_drift, make_reflected_ou, BarrierKind, ModelSpec,
    OptionKind, OptionSpec, Statistic, TimeGrid, VolDynamics,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub option: Option<OptionSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    ReflectedOu,
    ReflectedBmDrift,
    ConstantVol,
    ExponentialVol,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: FamilyName,
    pub q: Option<f64>,
    pub m: Option<f64>,
    pub xi: Option<f64>,
    pub mu: Option<f64>,
    pub a: Option<f64>,
    pub sigma0: Option<f64>,
    pub k: Option<f64>,
    /// Volatility dynamics under `exponential_vol`.
    pub dynamics: Option<FamilyName>,
    pub y0: f64,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub eps: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub statistic: Option<Statistic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRate {
    Qtilde,
    J,
}

/// Exactly one target is set: `x`, `path` (CSV file), `barrier_kind` with
/// `barrier`, or `l1 = true`. The remaining keys override [`OptimizerConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub x: Option<f64>,
    pub path: Option<PathBuf>,
    pub path_rate: Option<PathRate>,
    pub barrier_kind: Option<BarrierKind>,
    pub barrier: Option<f64>,
    #[serde(default)]
    pub l1: bool,
    pub n_starts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub finite_difference_step: Option<f64>,
    pub start_scale: Option<f64>,
    pub constraint_penalty_schedule: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSection {
    pub kind: OptionKind,
    pub strike: f64,
    #[serde(default = "one")]
    pub cash: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_dir(), formats: default_formats() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Rate,
    Price,
    LdpCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateTarget {
    Terminal(f64),
    Path(PathBuf, PathRate),
    Barrier(BarrierKind, f64),
    L1,
}

/// Everything a subcommand needs, checked up front.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub mc: Option<McSection>,
    pub optimizer: OptimizerConfig,
    pub target: Option<RateTarget>,
    pub option: Option<OptionSpec>,
    pub csv: bool,
    pub json: bool,
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.message().trim().to_string())
}

pub fn load(path: &FsPath) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl RunConfig {
    /// `--seed` replaces both the Monte Carlo and the optimizer seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(mc) = &mut self.mc {
            mc.seed = seed;
        }
        if let Some(rate) = &mut self.rate {
            rate.seed = Some(seed);
        }
    }

    pub fn resolve(&self, cmd: Subcommand) -> Result<Resolved, String> {
        let spec = self.model.build()?;
        if let Some(t) = self.grid.horizon {
            if t != self.model.horizon {
                return Err(format!("grid.T = {t} differs from model.T = {}", self.model.horizon));
            }
        }
        let grid = TimeGrid::new(self.model.horizon, self.grid.n_steps).map_err(|e| e.to_string())?;
        if let Some(mc) = &self.mc {
            check_mc(mc, cmd)?;
        }
        let optimizer = self.optimizer()?;
        let target = match (&self.rate, cmd) {
            (Some(r), _) => r.target()?,
            (None, Subcommand::Rate) => return Err("missing [rate] section".into()),
            (None, _) => None,
        };
        let option = match &self.option {
            Some(o) => {
                let opt = OptionSpec::new(o.kind, o.strike, o.cash).map_err(|e| e.to_string())?;
                opt.validate(&spec).map_err(|e| e.to_string())?;
                Some(opt)
            }
            None => None,
        };
        match cmd {
            Subcommand::Simulate | Subcommand::Price | Subcommand::LdpCheck if self.mc.is_none() => {
                return Err("missing [mc] section".into());
            }
            Subcommand::Rate if target.is_none() => {
                return Err("rate: set exactly one of x, path, barrier_kind/barrier, l1".into());
            }
            Subcommand::Price | Subcommand::LdpCheck if option.is_none() => {
                return Err("missing [option] section".into());
            }
            _ => {}
        }
        if matches!(cmd, Subcommand::Price | Subcommand::LdpCheck) {
            let needs_rn = cmd == Subcommand::Price || option.is_some_and(|o| o.kind != OptionKind::DigitalCall);
            if needs_rn && !spec.is_risk_neutral() {
                return Err("pricing needs an asset drift equal to r".into());
            }
        }
        if self.output.formats.is_empty() {
            return Err("output.formats is empty".into());
        }
        Ok(Resolved {
            spec,
            grid,
            mc: self.mc.clone(),
            optimizer,
            target,
            option,
            csv: self.output.formats.contains(&Format::Csv),
            json: self.output.formats.contains(&Format::Json),
        })
    }

    fn optimizer(&self) -> Result<OptimizerConfig, String> {
        let mut cfg = OptimizerConfig::default();
        if let Some(mc) = &self.mc {
            cfg.seed = mc.seed;
        }
        if let Some(r) = &self.rate {
            macro_rules! set {
                ($($f:ident),*) => { $( if let Some(v) = r.$f.clone() { cfg.$f = v; } )* };
            }
            set!(n_starts, max_iterations, gradient_tolerance, finite_difference_step, start_scale,
                 constraint_penalty_schedule, seed);
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn check_mc(mc: &McSection, cmd: Subcommand) -> Result<(), String> {
    if mc.eps.is_empty() {
        return Err("mc.eps is empty".into());
    }
    if let Some(e) = mc.eps.iter().find(|e| !(e.is_finite() && **e > 0.0 && **e <= 1.0)) {
        return Err(format!("mc.eps entries must lie in (0, 1], got {e}"));
    }
    if cmd == Subcommand::LdpCheck && mc.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err("mc.eps must be strictly decreasing for ldp-check".into());
    }
    if mc.replicas < 2 {
        return Err("mc.replicas must be at least 2".into());
    }
    if cmd == Subcommand::Simulate && mc.statistic.is_none() {
        return Err("simulate needs mc.statistic".into());
    }
    Ok(())
}

impl RateSection {
    fn target(&self) -> Result<Option<RateTarget>, String> {
        let mut found = Vec::new();
        if let Some(x) = self.x {
            if !x.is_finite() {
                return Err(format!("rate.x must be finite, got {x}"));
            }
            found.push(RateTarget::Terminal(x));
        }
        if let Some(p) = &self.path {
            found.push(RateTarget::Path(p.clone(), self.path_rate.unwrap_or(PathRate::Qtilde)));
        } else if self.path_rate.is_some() {
            return Err("rate.path_rate needs rate.path".into());
        }
        match (self.barrier_kind, self.barrier) {
            (Some(k), Some(b)) => found.push(RateTarget::Barrier(k, b)),
            (None, None) => {}
            _ => return Err("rate.barrier_kind and rate.barrier go together".into()),
        }
        if self.l1 {
            found.push(RateTarget::L1);
        }
        match found.len() {
            0 => Ok(None),
            1 => Ok(found.pop()),
            _ => Err("rate: set exactly one of x, path, barrier_kind/barrier, l1".into()),
        }
    }
}

impl ModelSection {
    fn build(&self) -> Result<ModelSpec, String> {
        use FamilyName::*;
        let allowed: &[&str] = match (self.family, self.dynamics) {
            (ReflectedOu, _) => &["q", "m", "xi", "mu"],
            (ReflectedBmDrift, _) => &["a", "xi", "mu"],
            (ConstantVol, _) => &["sigma0"],
            (ExponentialVol, Some(ReflectedOu)) => &["k", "mu", "dynamics", "q", "m", "xi"],
            (ExponentialVol, Some(ReflectedBmDrift)) => &["k", "mu", "dynamics", "a", "xi"],
            (ExponentialVol, _) => {
                return Err("exponential_vol needs model.dynamics = \"reflected_ou\" or \"reflected_bm_drift\"".into())
            }
        };
        let present = [
            ("q", self.q.is_some()),
            ("m", self.m.is_some()),
            ("xi", self.xi.is_some()),
            ("mu", self.mu.is_some()),
            ("a", self.a.is_some()),
            ("sigma0", self.sigma0.is_some()),
            ("k", self.k.is_some()),
            ("dynamics", self.dynamics.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(format!("model.{key} does not apply to this family"));
            }
        }
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| format!("missing model.{key}"));
        // the asset drift defaults to the rate so that pricing configs stay short
        let mu = self.mu.unwrap_or(self.r);
        let cs = match self.family {
            ReflectedOu => make_reflected_ou(need(self.q, "q")?, need(self.m, "m")?, need(self.xi, "xi")?, mu),
            ReflectedBmDrift => make_reflected_bm_drift(need(self.a, "a")?, need(self.xi, "xi")?, mu),
            ConstantVol => make_constant_vol(need(self.sigma0, "sigma0")?, self.r),
            ExponentialVol => {
                let k = need(self.k, "k")?;
                let dynamics = if self.dynamics == Some(ReflectedOu) {
                    VolDynamics::reflected_ou(need(self.q, "q")?, need(self.m, "m")?, need(self.xi, "xi")?)
                } else {
                    VolDynamics::reflected_bm_drift(need(self.a, "a")?, need(self.xi, "xi")?)
                };
                dynamics.and_then(|d| make_exponential_vol(k, mu, d))
            }
        }
        .map_err(|e| e.to_string())?;
        ModelSpec::new(cs, self.y0, self.s0, self.rho, self.r, self.horizon).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
family = "constant_vol"
sigma0 = 0.3
y0 = 0.0
rho = 0.5
T = 1.0

[grid]
n_steps = 50

[rate]
x = 0.09
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = parse(BASE).unwrap();
        let r = cfg.resolve(Subcommand::Rate).unwrap();
        assert_eq!(r.target, Some(RateTarget::Terminal(0.09)));
        assert_eq!(r.grid.n_steps(), 50);
        assert!(r.csv && r.json);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(&BASE.replace("sigma0 = 0.3", "sigma0 = 0.3\nsigma = 1.0")).unwrap_err();
        assert!(err.contains("sigma"), "{err}");
        let err = parse(&format!("{BASE}\n[extra]\nx = 1\n")).unwrap_err();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn family_keys_are_checked() {
        let cfg = parse(&BASE.replace("sigma0 = 0.3", "sigma0 = 0.3\nq = 1.0")).unwrap();
        assert!(cfg.resolve(Subcommand::Rate).unwrap_err().contains("model.q"));
        let cfg = parse(&BASE.replace("family = \"constant_vol\"\nsigma0 = 0.3", "family = \"reflected_ou\"\nq = 1.0\nxi = 0.2")).unwrap();
        assert!(cfg.resolve(Subcommand::Rate).unwrap_err().contains("model.m"));
    }

    #[test]
    fn exponential_needs_dynamics_and_k() {
        let body = BASE.replace("family = \"constant_vol\"\nsigma0 = 0.3", "family = \"exponential_vol\"\na = 0.0\nxi = 1.0");
        assert!(parse(&body).unwrap().resolve(Subcommand::Rate).unwrap_err().contains("dynamics"));
        let body = body.replace("a = 0.0", "dynamics = \"reflected_bm_drift\"\na = 0.0");
        assert!(parse(&body).unwrap().resolve(Subcommand::Rate).unwrap_err().contains("model.k"));
        let body = body.replace("a = 0.0", "a = 0.0\nk = 0.0");
        assert!(parse(&body).unwrap().resolve(Subcommand::Rate).is_ok());
    }

    #[test]
    fn target_must_be_unique() {
        let cfg = parse(&BASE.replace("x = 0.09", "x = 0.09\nl1 = true")).unwrap();
        assert!(cfg.resolve(Subcommand::Rate).is_err());
        let cfg = parse(&BASE.replace("x = 0.09", "barrier = 2.0")).unwrap();
        assert!(cfg.resolve(Subcommand::Rate).is_err());
    }

    #[test]
    fn mc_is_validated() {
        let text = format!("{BASE}\n[mc]\neps = [0.2, 0.3]\nreplicas = 10\nseed = 1\n\n[option]\nkind = \"binary_up_in\"\nstrike = 2.0\n");
        let cfg = parse(&text).unwrap();
        assert!(cfg.resolve(Subcommand::LdpCheck).unwrap_err().contains("decreasing"));
        assert!(cfg.resolve(Subcommand::Price).is_ok());
        assert!(cfg.resolve(Subcommand::Simulate).unwrap_err().contains("statistic"));
    }

    #[test]
    fn seed_override_reaches_the_optimizer() {
        let mut cfg = parse(&format!("{BASE}\n[mc]\neps = [0.2]\nreplicas = 10\nseed = 1\n")).unwrap();
        cfg.override_seed(77);
        let r = cfg.resolve(Subcommand::Rate).unwrap();
        assert_eq!(r.optimizer.seed, 77);
        assert_eq!(r.mc.unwrap().seed, 77);
    }

    #[test]
    fn grid_horizon_must_agree() {
        let cfg = parse(&BASE.replace("n_steps = 50", "n_steps = 50\nT = 2.0")).unwrap();
        assert!(cfg.resolve(Subcommand::Rate).unwrap_err().contains("grid.T"));
    }
}
