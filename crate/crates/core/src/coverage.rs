//! Multi-sensor coverage of a lattice mission space.
//!
//! A sensor placed at stage `k` on lattice point `s` detects an event at `x`
//! with probability `exp(-λ_k |x - s|)`, where `λ_k = λ₀ + ζ t_k` and
//! `t_k = k · time_step`. The objective is the density-weighted detection
//! probability summed over the lattice.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed;
use crate::submod::{
    bound_classic, bound_greedy_curvature, bound_top_h, brute_force_opt, greedy, top_h_value, Mode,
    SubmodError, SubmodObjective,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Submod(#[from] SubmodError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionScenario {
    pub width: usize,
    pub height: usize,
    /// Row-major `R(x)`, index `y * width + x`.
    pub density: Vec<f64>,
    /// Lattice indices where sensors may be placed.
    pub feasible: Vec<usize>,
    pub horizon: usize,
    pub lambda0: f64,
    pub zeta: f64,
    pub time_step: f64,
}

impl MissionScenario {
    pub fn new(width: usize, height: usize, density: Vec<f64>, horizon: usize, lambda0: f64, zeta: f64) -> Result<Self, CoverageError> {
        let s = Self {
            width,
            height,
            feasible: (0..width * height).collect(),
            density,
            horizon,
            lambda0,
            zeta,
            time_step: 0.1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CoverageError> {
        let bad = |m: &str| Err(CoverageError::Invalid(m.into()));
        if self.width == 0 || self.height == 0 {
            return bad("lattice must be non-empty");
        }
        if self.density.len() != self.width * self.height {
            return bad("density size does not match the lattice");
        }
        if self.density.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("densities must be finite and non-negative");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be positive");
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite() && self.time_step >= 0.0) {
            return bad("zeta and the time step must be non-negative");
        }
        if self.feasible.is_empty() || self.feasible.iter().any(|p| *p >= self.density.len()) {
            return bad("feasible set must be a non-empty set of lattice points");
        }
        if self.mode() == Mode::Set && self.feasible.len() < self.horizon {
            return bad("fewer feasible points than sensors");
        }
        Ok(())
    }

    /// Constant decay rates give a set function; growing rates a string one.
    pub fn mode(&self) -> Mode {
        if self.zeta == 0.0 {
            Mode::Set
        } else {
            Mode::String
        }
    }

    pub fn lambda(&self, stage: usize) -> f64 {
        self.lambda0 + self.zeta * self.time_step * stage as f64
    }

    pub fn point(&self, index: usize) -> [f64; 2] {
        [(index % self.width) as f64, (index / self.width) as f64]
    }

    pub fn with_lambda0(&self, lambda0: f64) -> Result<Self, CoverageError> {
        let s = Self { lambda0, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    pub fn with_zeta(&self, zeta: f64) -> Result<Self, CoverageError> {
        let s = Self { zeta, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    /// Keeps only feasible points whose coordinates are multiples of `stride`.
    pub fn with_stride(&self, stride: usize) -> Result<Self, CoverageError> {
        if stride == 0 {
            return Err(CoverageError::Invalid("stride must be positive".into()));
        }
        let feasible = self
            .feasible
            .iter()
            .copied()
            .filter(|p| (p % self.width).is_multiple_of(stride) && (p / self.width).is_multiple_of(stride))
            .collect();
        let s = Self { feasible, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    pub fn with_feasible(&self, feasible: Vec<usize>) -> Result<Self, CoverageError> {
        let s = Self { feasible, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    /// `P(x, S) = 1 - Π_k (1 - exp(-λ_k |x - s_k|))` for placements given
    /// as `(point, stage)`.
    pub fn detection_prob(&self, x: [f64; 2], placements: &[([f64; 2], usize)]) -> f64 {
        let miss: f64 = placements
            .iter()
            .map(|(s, k)| 1.0 - (-self.lambda(*k) * distance(x, *s)).exp())
            .product();
        1.0 - miss
    }

    /// Plain-text grid: a `width height H lambda0 zeta` header, then one
    /// line of densities per lattice row.
    pub fn to_grid_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {} {} {}", self.width, self.height, self.horizon, self.lambda0, self.zeta);
        for row in self.density.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    pub fn from_grid_text(text: &str) -> Result<Self, CoverageError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line, message: String| CoverageError::Parse { line, message };
        let (n, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let words: Vec<&str> = header.split_whitespace().collect();
        if words.len() != 5 {
            return Err(parse_err(n, "header must be `width height H lambda0 zeta`".into()));
        }
        let int = |w: &str| w.parse::<usize>().map_err(|_| parse_err(n, format!("bad integer `{w}`")));
        let real = |w: &str| w.parse::<f64>().map_err(|_| parse_err(n, format!("bad number `{w}`")));
        let (width, height, horizon) = (int(words[0])?, int(words[1])?, int(words[2])?);
        let (lambda0, zeta) = (real(words[3])?, real(words[4])?);
        let mut density = Vec::with_capacity(width * height);
        for _ in 0..height {
            let (n, row) = lines.next().ok_or_else(|| parse_err(n + 1, "missing density row".into()))?;
            let values = row
                .split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|_| parse_err(n, format!("bad number `{w}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != width {
                return Err(parse_err(n, format!("expected {width} densities, got {}", values.len())));
            }
            density.extend(values);
        }
        if let Some((n, _)) = lines.next() {
            return Err(parse_err(n, "trailing content".into()));
        }
        Self::new(width, height, density, horizon, lambda0, zeta)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Quadrant densities: `Unif(0.5, 0.8)` on the top-right and bottom-left
/// quadrants, `Unif(0.1, 0.3)` on the other two; drawn in row-major order.
pub fn quadrant_density(width: usize, height: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let (cx, cy) = (width / 2, height / 2);
    (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let high = (x >= cx) == (y >= cy);
            if high {
                rng.gen_range(0.5..0.8)
            } else {
                rng.gen_range(0.1..0.3)
            }
        })
        .collect()
}

/// The 50 × 40 mission space with five sensors and the quadrant density.
pub fn build_full_scenario(seed: u64, lambda0: f64, zeta: f64) -> Result<MissionScenario, CoverageError> {
    MissionScenario::new(50, 40, quadrant_density(50, 40, seed), 5, lambda0, zeta)
}

/// A 10 × 8 quadrant scenario with `n_feasible` random placement points
/// and `horizon` sensors.
pub fn build_reduced_scenario(
    seed: u64,
    n_feasible: usize,
    horizon: usize,
    lambda0: f64,
    zeta: f64,
) -> Result<MissionScenario, CoverageError> {
    let (w, h) = (10, 8);
    if n_feasible > w * h {
        return Err(CoverageError::Invalid("too many feasible points".into()));
    }
    let base = MissionScenario::new(w, h, quadrant_density(w, h, seed), horizon, lambda0, zeta)?;
    let mut rng = seed::child_rng(seed, 1);
    let mut feasible = index::sample(&mut rng, w * h, n_feasible).into_vec();
    feasible.sort_unstable();
    base.with_feasible(feasible)
}

/// `λ₀ ∈ {0.1, 0.2, ..., 1.5}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=15).map(|i| i as f64 / 10.0).collect()
}

/// The coverage objective over a scenario's feasible points.
#[derive(Debug, Clone)]
pub struct CoverageObjective {
    scenario: MissionScenario,
    /// `|x - s|` for candidate `s` (outer) and lattice point `x` (inner).
    distances: Vec<Vec<f64>>,
}

impl CoverageObjective {
    pub fn new(scenario: MissionScenario) -> Result<Self, CoverageError> {
        scenario.validate()?;
        let n = scenario.density.len();
        let distances = scenario
            .feasible
            .par_iter()
            .map(|s| {
                let sp = scenario.point(*s);
                (0..n).map(|x| distance(scenario.point(x), sp)).collect()
            })
            .collect();
        Ok(Self { scenario, distances })
    }

    pub fn scenario(&self) -> &MissionScenario {
        &self.scenario
    }

    fn unique_prefix<'a>(&self, seq: &'a [usize]) -> std::borrow::Cow<'a, [usize]> {
        if self.scenario.mode() == Mode::Set {
            let mut seen = Vec::with_capacity(seq.len());
            for s in seq {
                if !seen.contains(s) {
                    seen.push(*s);
                }
            }
            seen.into()
        } else {
            seq.into()
        }
    }

    /// Per lattice point `Π_k (1 - p_k)` for the sequence.
    fn miss(&self, seq: &[usize]) -> Vec<f64> {
        let mut miss = vec![1.0; self.scenario.density.len()];
        for (k, s) in seq.iter().enumerate() {
            let lambda = self.scenario.lambda(k);
            for (m, d) in miss.iter_mut().zip(&self.distances[*s]) {
                *m *= 1.0 - (-lambda * d).exp();
            }
        }
        miss
    }
}

impl SubmodObjective for CoverageObjective {
    fn mode(&self) -> Mode {
        self.scenario.mode()
    }
    fn ground_size(&self) -> usize {
        self.scenario.feasible.len()
    }
    fn horizon(&self) -> usize {
        self.scenario.horizon
    }
    fn evaluate(&self, seq: &[usize]) -> f64 {
        let seq = self.unique_prefix(seq);
        let miss = self.miss(&seq);
        self.scenario.density.iter().zip(&miss).map(|(r, m)| r * (1.0 - m)).sum()
    }
    fn marginals(&self, prefix: &[usize], candidates: &[usize]) -> Vec<f64> {
        let prefix = self.unique_prefix(prefix);
        let miss = self.miss(&prefix);
        let lambda = self.scenario.lambda(prefix.len());
        candidates
            .par_iter()
            .map(|s| {
                if self.mode() == Mode::Set && prefix.contains(s) {
                    return 0.0;
                }
                self.scenario
                    .density
                    .iter()
                    .zip(&miss)
                    .zip(&self.distances[*s])
                    .map(|((r, m), d)| r * m * (-lambda * d).exp())
                    .sum()
            })
            .collect()
    }
}

/// One grid point of a bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: Mode,
    pub lambda0: f64,
    pub zeta: f64,
    pub horizon: usize,
    pub f_greedy: f64,
    pub v_bar: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub f_opt: Option<f64>,
}

impl SweepRow {
    pub const HEADER: [&'static str; 10] =
        ["mode", "lambda0", "zeta", "H", "f_greedy", "v_bar", "beta0", "beta1", "beta2", "f_opt"];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.mode.to_string(),
            self.lambda0.to_string(),
            self.zeta.to_string(),
            self.horizon.to_string(),
            self.f_greedy.to_string(),
            self.v_bar.to_string(),
            self.beta0.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.f_opt.map_or_else(String::new, |v| v.to_string()),
        ]
    }
}

/// Greedy and the three bounds at each `λ₀`; the optimum is added when
/// `brute_force_budget` allows it.
pub fn sweep_bounds(
    template: &MissionScenario,
    lambda0_grid: &[f64],
    brute_force_budget: Option<u64>,
) -> Result<Vec<SweepRow>, CoverageError> {
    if lambda0_grid.is_empty() {
        return Err(CoverageError::Invalid("empty lambda0 grid".into()));
    }
    lambda0_grid
        .iter()
        .map(|&lambda0| {
            let obj = CoverageObjective::new(template.with_lambda0(lambda0)?)?;
            let run = greedy(&obj)?;
            let f_opt = match brute_force_budget {
                Some(budget) => Some(brute_force_opt(&obj, budget)?.1),
                None => None,
            };
            Ok(SweepRow {
                mode: obj.mode(),
                lambda0,
                zeta: template.zeta,
                horizon: template.horizon,
                f_greedy: run.value(),
                v_bar: top_h_value(&run)?,
                beta0: bound_classic(),
                beta1: bound_greedy_curvature(&run)?,
                beta2: bound_top_h(&run)?,
                f_opt,
            })
        })
        .collect()
}
