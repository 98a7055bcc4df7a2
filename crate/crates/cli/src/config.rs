//! Experiment configuration: flat `key = value` lines grouped under
//! `[oracle]`, `[lqg]` and `[coverage]` section headers. Top-level keys
//! come before the first header. `#` starts a comment.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    OracleValidate,
    LqgBounds,
    CoverageSweep,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::OracleValidate => "oracle-validate",
            Kind::LqgBounds => "lqg-bounds",
            Kind::CoverageSweep => "coverage-sweep",
        })
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle-validate" => Ok(Kind::OracleValidate),
            "lqg-bounds" => Ok(Kind::LqgBounds),
            "coverage-sweep" => Ok(Kind::CoverageSweep),
            _ => Err(format!("unknown experiment `{s}`")),
        }
    }
}

/// Size presets for the knobs that dominate runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Ci,
    Desk,
    Paper,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Ci => "ci",
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ci" => Ok(Scale::Ci),
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale `{s}`")),
        }
    }
}

/// How the stepwise-error labels of the LQG experiment are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMode {
    Closed,
    Sampled,
}

/// Which stepwise-error functions the LQG bound is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    /// Quadratics fitted to `δ_k` and `Q*_0` labels.
    Surrogate,
    /// The scheme's own `δ_k`, in closed form.
    Scheme,
}

macro_rules! keyword_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok(Self::$v),)+
                    _ => Err(format!("unknown value `{s}`")),
                }
            }
        }
    };
}

keyword_enum!(DeltaMode, Closed => "closed", Sampled => "sampled");
keyword_enum!(BoundSource, Surrogate => "surrogate", Scheme => "scheme");

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub instances: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
    pub noise_scales: Vec<f64>,
    pub n_rollouts: usize,
    /// Validate this instance file instead of random instances.
    pub mdp_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqgConfig {
    pub mass: f64,
    pub step: f64,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
    pub diag_q: Vec<f64>,
    pub diag_r: Vec<f64>,
    pub diag_qf: Vec<f64>,
    pub diag_sigma: Vec<f64>,
    pub n_traj: usize,
    pub init_spread: f64,
    pub action_jitter: f64,
    pub n_rollouts: usize,
    pub n_test_states: usize,
    pub multistart: usize,
    pub ridge: f64,
    pub margin: f64,
    pub delta_labels: DeltaMode,
    pub delta_draws: usize,
    pub bound_source: BoundSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub lambda0: Vec<f64>,
    pub zeta: Vec<f64>,
    pub time_step: f64,
    pub stride: usize,
    /// Random feasible subset size; `0` keeps the (strided) lattice.
    pub feasible_points: usize,
    /// Enumeration budget for the optimum; `0` skips it.
    pub brute_force_budget: u64,
    /// Density grid file; quadrant densities are drawn when absent.
    pub grid_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: u64,
    pub out: PathBuf,
    pub scale: Scale,
    pub oracle: OracleConfig,
    pub lqg: LqgConfig,
    pub coverage: CoverageConfig,
}

impl ExperimentConfig {
    pub fn for_scale(scale: Scale) -> Self {
        let (instances, n_traj, n_rollouts, n_test, starts) = match scale {
            Scale::Ci => (20, 2_000, 200, 20, 16),
            Scale::Desk => (100, 10_000, 500, 100, 32),
            Scale::Paper => (100, 1_000_000, 500, 100, 32),
        };
        let (stride, lambda0) = match scale {
            Scale::Ci => (5, vec![0.1, 0.8, 1.5]),
            _ => (1, (1..=15).map(|i| i as f64 / 10.0).collect()),
        };
        Self {
            kind: None,
            seed: 0,
            out: PathBuf::from("results"),
            scale,
            oracle: OracleConfig {
                instances,
                max_states: 6,
                max_actions: 4,
                max_horizon: 5,
                noise_scales: vec![0.05, 0.2, 1.0],
                n_rollouts: 100,
                mdp_file: None,
            },
            lqg: LqgConfig {
                mass: 1.0,
                step: 0.1,
                horizon: 10,
                x0: vec![0.0; 4],
                xf: vec![100.0, 0.0, 100.0, 0.0],
                diag_q: vec![10.0, 1.0, 10.0, 1.0],
                diag_r: vec![0.5, 0.5],
                diag_qf: vec![500.0, 1000.0, 500.0, 1000.0],
                diag_sigma: vec![5.0, 2.0, 5.0, 2.0],
                n_traj,
                init_spread: 1.0,
                action_jitter: 1.0,
                n_rollouts,
                n_test_states: n_test,
                multistart: starts,
                ridge: 1e-6,
                margin: 1.25,
                delta_labels: DeltaMode::Closed,
                delta_draws: 1000,
                bound_source: BoundSource::Surrogate,
            },
            coverage: CoverageConfig {
                width: 50,
                height: 40,
                horizon: 5,
                lambda0,
                zeta: vec![0.0, 0.1],
                time_step: 0.1,
                stride,
                feasible_points: 0,
                brute_force_budget: 0,
                grid_file: None,
            },
        }
    }

    /// Parses `text` over the defaults of its `scale` key, or of `scale`
    /// when given, which takes precedence.
    pub fn parse(text: &str, scale: Option<Scale>) -> Result<Self, ConfigError> {
        let entries = tokenize(text)?;
        let file_scale = entries
            .iter()
            .find(|e| e.section.is_empty() && e.key == "scale")
            .map(|e| e.value.parse::<Scale>().map_err(|m| e.error(m)))
            .transpose()?;
        let mut cfg = Self::for_scale(scale.or(file_scale).unwrap_or(Scale::Desk));
        for e in &entries {
            cfg.set(&e.section, &e.key, &e.value).map_err(|m| e.error(m))?;
        }
        cfg.validate().map_err(|(key, message)| {
            let line = entries
                .iter()
                .rev()
                .find(|e| e.key == key)
                .map_or(0, |e| e.line);
            ConfigError { line, message }
        })?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        match (section, key) {
            ("", "kind") => self.kind = Some(v.parse()?),
            ("", "seed") => self.seed = num(v)?,
            ("", "out") => self.out = PathBuf::from(v),
            ("", "scale") => self.scale = v.parse()?,
            ("oracle", "instances") => self.oracle.instances = num(v)?,
            ("oracle", "max_states") => self.oracle.max_states = num(v)?,
            ("oracle", "max_actions") => self.oracle.max_actions = num(v)?,
            ("oracle", "max_horizon") => self.oracle.max_horizon = num(v)?,
            ("oracle", "noise_scales") => self.oracle.noise_scales = list(v)?,
            ("oracle", "n_rollouts") => self.oracle.n_rollouts = num(v)?,
            ("oracle", "mdp_file") => self.oracle.mdp_file = Some(PathBuf::from(v)),
            ("lqg", "m") => self.lqg.mass = num(v)?,
            ("lqg", "T") => self.lqg.step = num(v)?,
            ("lqg", "H") => self.lqg.horizon = num(v)?,
            ("lqg", "x0") => self.lqg.x0 = list(v)?,
            ("lqg", "xf") => self.lqg.xf = list(v)?,
            ("lqg", "diagQ") => self.lqg.diag_q = list(v)?,
            ("lqg", "diagR") => self.lqg.diag_r = list(v)?,
            ("lqg", "diagQf") => self.lqg.diag_qf = list(v)?,
            ("lqg", "diagSigma") => self.lqg.diag_sigma = list(v)?,
            ("lqg", "n_traj") => self.lqg.n_traj = num(v)?,
            ("lqg", "init_spread") => self.lqg.init_spread = num(v)?,
            ("lqg", "action_jitter") => self.lqg.action_jitter = num(v)?,
            ("lqg", "n_rollouts") => self.lqg.n_rollouts = num(v)?,
            ("lqg", "n_test_states") => self.lqg.n_test_states = num(v)?,
            ("lqg", "multistart") => self.lqg.multistart = num(v)?,
            ("lqg", "ridge") => self.lqg.ridge = num(v)?,
            ("lqg", "margin") => self.lqg.margin = num(v)?,
            ("lqg", "delta_labels") => self.lqg.delta_labels = v.parse()?,
            ("lqg", "delta_draws") => self.lqg.delta_draws = num(v)?,
            ("lqg", "bound_source") => self.lqg.bound_source = v.parse()?,
            ("coverage", "width") => self.coverage.width = num(v)?,
            ("coverage", "height") => self.coverage.height = num(v)?,
            ("coverage", "H") => self.coverage.horizon = num(v)?,
            ("coverage", "lambda0") => self.coverage.lambda0 = list(v)?,
            ("coverage", "zeta") => self.coverage.zeta = list(v)?,
            ("coverage", "time_step") => self.coverage.time_step = num(v)?,
            ("coverage", "stride") => self.coverage.stride = num(v)?,
            ("coverage", "feasible_points") => self.coverage.feasible_points = num(v)?,
            ("coverage", "brute_force_budget") => self.coverage.brute_force_budget = num(v)?,
            ("coverage", "grid_file") => self.coverage.grid_file = Some(PathBuf::from(v)),
            _ if section.is_empty() => return Err(format!("unknown key `{key}`")),
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }

    /// Checks numeric ranges; errors name the offending key.
    fn validate(&self) -> Result<(), (&'static str, String)> {
        let o = &self.oracle;
        let l = &self.lqg;
        let c = &self.coverage;
        let rules: [(&'static str, bool, &str); 28] = [
            ("instances", o.instances >= 1, "must be at least 1"),
            ("max_states", o.max_states >= 2, "must be at least 2"),
            ("max_actions", o.max_actions >= 2, "must be at least 2"),
            ("max_horizon", o.max_horizon >= 2, "must be at least 2"),
            ("noise_scales", o.noise_scales.iter().all(|s| *s >= 0.0 && s.is_finite()), "must be non-negative"),
            ("n_rollouts", o.n_rollouts >= 2 && l.n_rollouts >= 2, "must be at least 2"),
            ("m", l.mass > 0.0 && l.mass.is_finite(), "must be positive"),
            ("T", l.step > 0.0 && l.step.is_finite(), "must be positive"),
            ("H", l.horizon >= 2 && c.horizon >= 1, "is too small"),
            ("x0", l.x0.len() == 4, "needs 4 entries"),
            ("xf", l.xf.len() == 4, "needs 4 entries"),
            ("diagQ", l.diag_q.len() == 4 && l.diag_q.iter().all(|v| *v >= 0.0), "needs 4 non-negative entries"),
            ("diagR", l.diag_r.len() == 2 && l.diag_r.iter().all(|v| *v > 0.0), "needs 2 positive entries"),
            ("diagQf", l.diag_qf.len() == 4 && l.diag_qf.iter().all(|v| *v >= 0.0), "needs 4 non-negative entries"),
            ("diagSigma", l.diag_sigma.len() == 4 && l.diag_sigma.iter().all(|v| *v >= 0.0), "needs 4 non-negative entries"),
            ("n_traj", l.n_traj >= 2, "must be at least 2"),
            ("init_spread", l.init_spread >= 0.0 && l.init_spread.is_finite(), "must be non-negative"),
            ("action_jitter", l.action_jitter >= 0.0 && l.action_jitter.is_finite(), "must be non-negative"),
            ("n_test_states", l.n_test_states >= 1, "must be at least 1"),
            ("multistart", l.multistart >= 1, "must be at least 1"),
            ("ridge", l.ridge >= 0.0 && l.ridge.is_finite(), "must be non-negative"),
            ("margin", l.margin >= 1.0 && l.margin.is_finite(), "must be at least 1"),
            ("delta_draws", l.delta_draws >= 2, "must be at least 2"),
            ("width", c.width >= 1 && c.height >= 1, "lattice must be non-empty"),
            ("lambda0", !c.lambda0.is_empty() && c.lambda0.iter().all(|v| *v > 0.0 && v.is_finite()), "needs positive entries"),
            ("zeta", !c.zeta.is_empty() && c.zeta.iter().all(|v| *v >= 0.0 && v.is_finite()), "needs non-negative entries"),
            ("time_step", c.time_step >= 0.0 && c.time_step.is_finite(), "must be non-negative"),
            ("stride", c.stride >= 1, "must be at least 1"),
        ];
        for (key, ok, message) in rules {
            if !ok {
                return Err((key, format!("`{key}` {message}")));
            }
        }
        Ok(())
    }

    /// Every key, so that parsing the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(kind) = self.kind {
            kv("kind", kind.to_string());
        }
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("scale", self.scale.to_string());
        let o = &self.oracle;
        out.push_str("\n[oracle]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("instances", o.instances.to_string());
        kv("max_states", o.max_states.to_string());
        kv("max_actions", o.max_actions.to_string());
        kv("max_horizon", o.max_horizon.to_string());
        kv("noise_scales", join(&o.noise_scales));
        kv("n_rollouts", o.n_rollouts.to_string());
        if let Some(p) = &o.mdp_file {
            kv("mdp_file", p.display().to_string());
        }
        let l = &self.lqg;
        out.push_str("\n[lqg]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("m", l.mass.to_string());
        kv("T", l.step.to_string());
        kv("H", l.horizon.to_string());
        kv("x0", join(&l.x0));
        kv("xf", join(&l.xf));
        kv("diagQ", join(&l.diag_q));
        kv("diagR", join(&l.diag_r));
        kv("diagQf", join(&l.diag_qf));
        kv("diagSigma", join(&l.diag_sigma));
        kv("n_traj", l.n_traj.to_string());
        kv("init_spread", l.init_spread.to_string());
        kv("action_jitter", l.action_jitter.to_string());
        kv("n_rollouts", l.n_rollouts.to_string());
        kv("n_test_states", l.n_test_states.to_string());
        kv("multistart", l.multistart.to_string());
        kv("ridge", l.ridge.to_string());
        kv("margin", l.margin.to_string());
        kv("delta_labels", l.delta_labels.to_string());
        kv("delta_draws", l.delta_draws.to_string());
        kv("bound_source", l.bound_source.to_string());
        let c = &self.coverage;
        out.push_str("\n[coverage]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("width", c.width.to_string());
        kv("height", c.height.to_string());
        kv("H", c.horizon.to_string());
        kv("lambda0", join(&c.lambda0));
        kv("zeta", join(&c.zeta));
        kv("time_step", c.time_step.to_string());
        kv("stride", c.stride.to_string());
        kv("feasible_points", c.feasible_points.to_string());
        kv("brute_force_budget", c.brute_force_budget.to_string());
        if let Some(p) = &c.grid_file {
            kv("grid_file", p.display().to_string());
        }
        out
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

impl Entry {
    fn error(&self, message: String) -> ConfigError {
        ConfigError {
            line: self.line,
            message,
        }
    }
}

const SECTIONS: [&str; 3] = ["oracle", "lqg", "coverage"];

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError {
                line,
                message: "empty key or value".into(),
            });
        }
        entries.push(Entry {
            line,
            section: section.clone(),
            key: key.into(),
            value: value.into(),
        });
    }
    Ok(entries)
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad number `{v}`"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    v.split_whitespace().map(num).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}
