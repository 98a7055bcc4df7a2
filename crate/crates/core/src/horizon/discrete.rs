//! Tabular finite MDPs and the exact backward-induction solver.
//!
//! Text format (blank lines and `#` comments ignored):
//!
//! ```text
//! discrete-mdp
//! states 2
//! actions 2
//! horizon 1
//! direction maximize
//! initial 0
//! kernel
//! <H*|X|*|U| rows of |X| probabilities, ordered by stage, state, action>
//! rewards
//! <H*|X| rows of |U| rewards, ordered by stage, state>
//! terminal
//! <one row of |X| terminal rewards>
//! feasible
//! <H*|X| rows of |U| flags (0 or 1), ordered by stage, state>
//! ```

use std::fmt::Write as _;

use rand::Rng as _;

use super::{Direction, FiniteProblem, HorizonError, HorizonProblem};
use crate::seed;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdpDims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

/// Raw tables, flattened in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpTables {
    /// `[stage][state][action][next]`
    pub kernel: Vec<f64>,
    /// `[stage][state][action]`
    pub rewards: Vec<f64>,
    /// `[state]`
    pub terminal: Vec<f64>,
    /// `[stage][state][action]`
    pub feasible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMdp {
    dims: MdpDims,
    direction: Direction,
    initial: usize,
    tables: MdpTables,
}

/// Parameters of [`DiscreteMdp::random`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMdpSpec {
    pub dims: MdpDims,
    pub direction: Direction,
    /// Draw a random non-empty action subset per stage, shared by all states.
    pub restrict_actions: bool,
}

impl DiscreteMdp {
    pub fn new(
        dims: MdpDims,
        direction: Direction,
        initial: usize,
        tables: MdpTables,
    ) -> Result<Self, HorizonError> {
        let MdpDims {
            states: n,
            actions: m,
            horizon: h,
        } = dims;
        if h == 0 {
            return Err(HorizonError::ZeroHorizon);
        }
        if n == 0 || m == 0 {
            return Err(HorizonError::Invalid("empty state or action set".into()));
        }
        if initial >= n {
            return Err(HorizonError::Invalid(format!(
                "initial state {initial} out of range"
            )));
        }
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(HorizonError::Invalid(format!(
                    "{name} table has {got} entries, expected {want}"
                )))
            }
        };
        expect("kernel", tables.kernel.len(), h * n * m * n)?;
        expect("rewards", tables.rewards.len(), h * n * m)?;
        expect("terminal", tables.terminal.len(), n)?;
        expect("feasible", tables.feasible.len(), h * n * m)?;

        for (row_idx, row) in tables.kernel.chunks(n).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(HorizonError::Invalid(format!(
                    "kernel row {row_idx} has a probability outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(HorizonError::Invalid(format!(
                    "kernel row {row_idx} sums to {sum}"
                )));
            }
        }
        let finite = tables.rewards.iter().chain(&tables.terminal).all(|r| r.is_finite());
        if !finite {
            return Err(HorizonError::Invalid("non-finite reward".into()));
        }
        if direction == Direction::Maximize {
            let negative_stage = tables
                .rewards
                .iter()
                .zip(&tables.feasible)
                .any(|(r, &f)| f && *r < 0.0);
            if negative_stage || tables.terminal.iter().any(|r| *r < 0.0) {
                return Err(HorizonError::Invalid(
                    "rewards of a maximisation problem must be non-negative".into(),
                ));
            }
        }
        for k in 0..h {
            for x in 0..n {
                let base = (k * n + x) * m;
                if !tables.feasible[base..base + m].iter().any(|&f| f) {
                    return Err(HorizonError::NoFeasibleAction {
                        stage: k,
                        state: x.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            dims,
            direction,
            initial,
            tables,
        })
    }

    /// Random instance: rewards `Uniform(0, 1)`, kernel rows from normalised
    /// `Uniform(0, 1)` draws, initial state 0.
    pub fn random(spec: RandomMdpSpec, seed: u64) -> Result<Self, HorizonError> {
        let MdpDims {
            states: n,
            actions: m,
            horizon: h,
        } = spec.dims;
        let mut rng = seed::rng(seed);
        let mut kernel = Vec::with_capacity(h * n * m * n);
        for _ in 0..h * n * m {
            let row: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            kernel.extend(row.iter().map(|p| p / sum));
        }
        let rewards = (0..h * n * m).map(|_| rng.gen::<f64>()).collect();
        let terminal = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut feasible = vec![true; h * n * m];
        if spec.restrict_actions {
            for k in 0..h {
                let mut allowed: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.6)).collect();
                if !allowed.iter().any(|&a| a) {
                    allowed[rng.gen_range(0..m)] = true;
                }
                for x in 0..n {
                    let base = (k * n + x) * m;
                    feasible[base..base + m].copy_from_slice(&allowed);
                }
            }
        }
        // Rows were normalised in floating point; renormalise the last entry
        // so every row sums to one within the validation tolerance.
        for row in kernel.chunks_mut(n) {
            let head: f64 = row[..n - 1].iter().sum();
            row[n - 1] = (1.0 - head).max(0.0);
        }
        Self::new(
            spec.dims,
            spec.direction,
            0,
            MdpTables {
                kernel,
                rewards,
                terminal,
                feasible,
            },
        )
    }

    pub fn dims(&self) -> MdpDims {
        self.dims
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn tables(&self) -> &MdpTables {
        &self.tables
    }

    pub fn kernel_row(&self, stage: usize, state: usize, action: usize) -> &[f64] {
        let n = self.dims.states;
        let start = ((stage * n + state) * self.dims.actions + action) * n;
        &self.tables.kernel[start..start + n]
    }

    pub fn reward(&self, stage: usize, state: usize, action: usize) -> f64 {
        self.tables.rewards[(stage * self.dims.states + state) * self.dims.actions + action]
    }

    pub fn terminal(&self, state: usize) -> f64 {
        self.tables.terminal[state]
    }

    pub fn feasible(&self, stage: usize, state: usize, action: usize) -> bool {
        self.tables.feasible[(stage * self.dims.states + state) * self.dims.actions + action]
    }

    pub fn actions_at(&self, stage: usize, state: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dims.actions).filter(move |&u| self.feasible(stage, state, u))
    }

    /// Same instance with every reward negated and the direction flipped.
    pub fn negated(&self) -> Self {
        let mut tables = self.tables.clone();
        tables.rewards.iter_mut().for_each(|r| *r = -*r);
        tables.terminal.iter_mut().for_each(|r| *r = -*r);
        Self {
            dims: self.dims,
            direction: self.direction.flipped(),
            initial: self.initial,
            tables,
        }
    }

    /// Same instance with `c` added to every stage and terminal reward.
    pub fn shifted(&self, c: f64) -> Result<Self, HorizonError> {
        let mut tables = self.tables.clone();
        tables.rewards.iter_mut().for_each(|r| *r += c);
        tables.terminal.iter_mut().for_each(|r| *r += c);
        Self::new(self.dims, self.direction, self.initial, tables)
    }

    /// Expected terminal reward after `(state, action)` at stage `H-1`.
    pub fn terminal_expectation(&self, state: usize, action: usize) -> f64 {
        let h = self.dims.horizon;
        self.kernel_row(h - 1, state, action)
            .iter()
            .enumerate()
            .map(|(next, p)| p * self.terminal(next))
            .sum()
    }

    /// Backward induction over `k = H-1..0`.
    pub fn solve_exact(&self) -> ExactSolution {
        let MdpDims {
            states: n,
            actions: m,
            horizon: h,
        } = self.dims;
        let mut v = vec![vec![0.0; n]; h + 1];
        let mut q = vec![vec![0.0; n * m]; h];
        let mut w = vec![vec![0.0; n * m]; h];
        let mut policy = vec![vec![0usize; n]; h];
        v[h].copy_from_slice(&self.tables.terminal);
        for k in (0..h).rev() {
            for x in 0..n {
                for u in 0..m {
                    let evtg: f64 = self
                        .kernel_row(k, x, u)
                        .iter()
                        .zip(&v[k + 1])
                        .map(|(p, vn)| p * vn)
                        .sum();
                    w[k][x * m + u] = evtg;
                    q[k][x * m + u] = self.reward(k, x, u) + evtg;
                }
                let (best, value) = self
                    .actions_at(k, x)
                    .map(|u| (u, q[k][x * m + u]))
                    .fold(None, |acc: Option<(usize, f64)>, (u, val)| match acc {
                        Some((_, b)) if !self.direction.improves(val, b) => acc,
                        _ => Some((u, val)),
                    })
                    .expect("validated: every stage has a feasible action");
                policy[k][x] = best;
                v[k][x] = value;
            }
        }
        ExactSolution {
            actions: m,
            value: v[0][self.initial],
            v,
            q,
            w,
            policy,
        }
    }

    pub fn to_text(&self) -> String {
        let MdpDims {
            states: n,
            actions: m,
            horizon: h,
        } = self.dims;
        let mut out = String::new();
        let _ = writeln!(out, "discrete-mdp");
        let _ = writeln!(out, "states {n}");
        let _ = writeln!(out, "actions {m}");
        let _ = writeln!(out, "horizon {h}");
        let _ = writeln!(out, "direction {}", self.direction);
        let _ = writeln!(out, "initial {}", self.initial);
        let row = |out: &mut String, vals: &[f64]| {
            let strs: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", strs.join(" "));
        };
        let _ = writeln!(out, "kernel");
        for chunk in self.tables.kernel.chunks(n) {
            row(&mut out, chunk);
        }
        let _ = writeln!(out, "rewards");
        for chunk in self.tables.rewards.chunks(m) {
            row(&mut out, chunk);
        }
        let _ = writeln!(out, "terminal");
        row(&mut out, &self.tables.terminal);
        let _ = writeln!(out, "feasible");
        for chunk in self.tables.feasible.chunks(m) {
            let strs: Vec<&str> = chunk.iter().map(|&f| if f { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", strs.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HorizonError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, message: String| HorizonError::Parse { line, message };
        let mut next_line = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of input, expected {what}")))
        };

        let (line, magic) = next_line("header")?;
        if magic != "discrete-mdp" {
            return Err(err(line, format!("expected `discrete-mdp`, found `{magic}`")));
        }
        let mut header = |key: &str| -> Result<String, HorizonError> {
            let (line, l) = next_line(key)?;
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
                _ => Err(err(line, format!("expected `{key} <value>`"))),
            }
        };
        let count = |s: String, key: &str| {
            s.parse::<usize>()
                .map_err(|_| err(0, format!("`{key}` must be a non-negative integer")))
        };
        let n = count(header("states")?, "states")?;
        let m = count(header("actions")?, "actions")?;
        let h = count(header("horizon")?, "horizon")?;
        let direction: Direction = header("direction")?
            .parse()
            .map_err(|e: String| err(0, e))?;
        let initial = count(header("initial")?, "initial")?;

        let mut section = |name: &str, rows: usize, width: usize| -> Result<Vec<String>, HorizonError> {
            let (line, l) = next_line(name)?;
            if l != name {
                return Err(err(line, format!("expected section `{name}`")));
            }
            let mut out = Vec::with_capacity(rows * width);
            for _ in 0..rows {
                let (line, l) = next_line(&format!("{name} row"))?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != width {
                    return Err(err(
                        line,
                        format!("{name} row has {} values, expected {width}", toks.len()),
                    ));
                }
                out.extend(toks.iter().map(|t| format!("{line}:{t}")));
            }
            Ok(out)
        };
        let floats = |toks: Vec<String>| -> Result<Vec<f64>, HorizonError> {
            toks.iter()
                .map(|t| {
                    let (line, v) = t.split_once(':').expect("tagged token");
                    v.parse::<f64>()
                        .map_err(|_| err(line.parse().unwrap_or(0), format!("bad number `{v}`")))
                })
                .collect()
        };
        let kernel = floats(section("kernel", h * n * m, n)?)?;
        let rewards = floats(section("rewards", h * n, m)?)?;
        let terminal = floats(section("terminal", 1, n)?)?;
        let feasible = section("feasible", h * n, m)?
            .iter()
            .map(|t| {
                let (line, v) = t.split_once(':').expect("tagged token");
                match v {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    _ => Err(err(line.parse().unwrap_or(0), format!("bad flag `{v}`"))),
                }
            })
            .collect::<Result<Vec<bool>, _>>()?;
        if let Some((line, _)) = lines.next() {
            return Err(err(line, "trailing content".into()));
        }
        Self::new(
            MdpDims {
                states: n,
                actions: m,
                horizon: h,
            },
            direction,
            initial,
            MdpTables {
                kernel,
                rewards,
                terminal,
                feasible,
            },
        )
    }
}

impl HorizonProblem for DiscreteMdp {
    type State = usize;
    type Action = usize;
    type Noise = f64;

    fn horizon(&self) -> usize {
        self.dims.horizon
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn initial_state(&self) -> usize {
        self.initial
    }

    fn sample_noise(&self, _stage: usize, rng: &mut seed::Rng) -> f64 {
        rng.gen()
    }

    fn transition(&self, stage: usize, state: &usize, action: &usize, noise: &f64) -> usize {
        let row = self.kernel_row(stage, *state, *action);
        let mut acc = 0.0;
        let mut last = 0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last = next;
                acc += p;
                if *noise < acc {
                    return next;
                }
            }
        }
        last
    }

    fn stage_reward(&self, stage: usize, state: &usize, action: &usize) -> f64 {
        self.reward(stage, *state, *action)
    }

    fn terminal_reward(&self, state: &usize) -> f64 {
        self.terminal(*state)
    }

    fn is_feasible(&self, stage: usize, state: &usize, action: &usize) -> bool {
        *action < self.dims.actions && self.feasible(stage, *state, *action)
    }
}

impl FiniteProblem for DiscreteMdp {
    fn states_at(&self, _stage: usize) -> Vec<usize> {
        (0..self.dims.states).collect()
    }

    fn feasible_actions(&self, stage: usize, state: &usize) -> Vec<usize> {
        self.actions_at(stage, *state).collect()
    }

    fn successors(&self, stage: usize, state: &usize, action: &usize) -> Vec<(f64, usize)> {
        self.kernel_row(stage, *state, *action)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(next, &p)| (p, next))
            .collect()
    }
}

/// Exact value, Q and expected-value-to-go tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    actions: usize,
    /// `V*_k(x)` for `k = 0..=H`.
    v: Vec<Vec<f64>>,
    /// `Q*_k(x, u)` for `k = 0..H`.
    q: Vec<Vec<f64>>,
    /// `W*_{k+1}(x, u)` stored at index `k`.
    w: Vec<Vec<f64>>,
    policy: Vec<Vec<usize>>,
    value: f64,
}

impl ExactSolution {
    /// `V* = V*_0(x_0)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn v(&self, stage: usize, state: usize) -> f64 {
        self.v[stage][state]
    }

    pub fn q(&self, stage: usize, state: usize, action: usize) -> f64 {
        self.q[stage][state * self.actions + action]
    }

    /// `W*_k(x_{k-1}, u_{k-1})` for `k = 1..=H`.
    pub fn w(&self, k: usize, state: usize, action: usize) -> f64 {
        self.w[k - 1][state * self.actions + action]
    }

    pub fn action(&self, stage: usize, state: usize) -> usize {
        self.policy[stage][state]
    }

    pub fn horizon(&self) -> usize {
        self.policy.len()
    }
}

impl super::Policy<DiscreteMdp> for ExactSolution {
    fn act(&self, _problem: &DiscreteMdp, stage: usize, state: &usize) -> usize {
        self.action(stage, *state)
    }
}
