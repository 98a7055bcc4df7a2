//! Computable bounds on the optimal value of a finite-horizon problem.
//!
//! Given an approximate expected-value-to-go family `Ŵ_{k+1}` (an
//! [`AdpScheme`]), the optimum satisfies
//!
//! ```text
//! V* <= Q̂_0(x_0, û_0) + Σ_{k=1}^{H-1} ε_k          (maximisation)
//! ε_k  = max_{x, u} δ_k(x, u)
//! δ_k(x, u) = E[ max_{u'} Q̂_k(x', u') | x, u ] - Ŵ_k(x, u)
//! ```
//!
//! with every `max` replaced by `min` (and `<=` by `>=`) for cost
//! minimisation. The bound is valid when the optimal actions stay feasible
//! along the ADP path and `Ŵ_H` is the exact one-step terminal expectation.
//! [`epsilon_exhaustive`] evaluates `ε_k` exactly on enumerable problems;
//! [`epsilon_continuous`] searches a compact box.

mod search;
mod tabular;

pub use search::{
    epsilon_continuous, optimize_in_box, SearchBox, SearchSettings, StageFunction,
    StepwiseErrorModel,
};
pub use tabular::TabularScheme;

use std::fmt::Write as _;

use thiserror::Error;

use crate::horizon::{
    estimate_value, Direction, FiniteProblem, HorizonError, HorizonProblem, Policy, Trajectory,
    ValueEstimate,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("stage {stage} outside 1..={max}")]
    StageOutOfRange { stage: usize, max: usize },
    #[error("expected {expected} stepwise errors, got {got}")]
    EpsilonCount { expected: usize, got: usize },
    #[error("search box is degenerate in coordinate {0}")]
    DegenerateBox(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("stepwise error is not finite at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("at least one start point is required")]
    NoStarts,
    #[error("scheme action infeasible at stage {stage}")]
    InfeasibleAction { stage: usize },
    #[error(transparent)]
    Horizon(#[from] HorizonError),
}

/// An approximate expected-value-to-go family and its induced policy.
pub trait AdpScheme<P: HorizonProblem + ?Sized>: Sync {
    /// `Ŵ_k(x_{k-1}, u_{k-1})` for `k = 1..=H`.
    fn w_hat(&self, problem: &P, k: usize, state: &P::State, action: &P::Action) -> f64;

    /// `Q̂_k(x, u) = r_k(x, u) + Ŵ_{k+1}(x, u)`.
    fn q_hat(&self, problem: &P, stage: usize, state: &P::State, action: &P::Action) -> f64 {
        problem.stage_reward(stage, state, action) + self.w_hat(problem, stage + 1, state, action)
    }

    /// The feasible action optimising `Q̂_k(state, ·)`.
    fn act(&self, problem: &P, stage: usize, state: &P::State) -> P::Action;
}

/// Runs a scheme as a policy.
pub struct SchemePolicy<'a, S: ?Sized>(pub &'a S);

impl<P, S> Policy<P> for SchemePolicy<'_, S>
where
    P: HorizonProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    fn act(&self, problem: &P, stage: usize, state: &P::State) -> P::Action {
        self.0.act(problem, stage, state)
    }
}

/// Optimises `Q̂_k(state, ·)` by enumeration; ties go to the first action.
pub fn enumerate_opt<P, S>(problem: &P, scheme: &S, stage: usize, state: &P::State) -> (P::Action, f64)
where
    P: FiniteProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    let actions = problem.feasible_actions(stage, state);
    let values = actions.iter().map(|u| scheme.q_hat(problem, stage, state, u));
    let (i, v) = problem
        .direction()
        .arg_opt(values)
        .expect("feasible action sets are non-empty");
    (actions[i].clone(), v)
}

/// `δ_k(x, u)` with the inner expectation taken over the exact successor law.
pub fn delta_exhaustive<P, S>(
    problem: &P,
    scheme: &S,
    k: usize,
    state: &P::State,
    action: &P::Action,
) -> f64
where
    P: FiniteProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    let inner: f64 = problem
        .successors(k - 1, state, action)
        .iter()
        .map(|(p, next)| p * enumerate_opt(problem, scheme, k, next).1)
        .sum();
    inner - scheme.w_hat(problem, k, state, action)
}

/// Exact `ε_k` for `1 <= k <= H-1`: the optimum of `δ_k` over every state
/// that can occur at stage `k-1` and every action feasible there.
pub fn epsilon_exhaustive<P, S>(problem: &P, scheme: &S, k: usize) -> Result<f64, BoundError>
where
    P: FiniteProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    let h = problem.horizon();
    if k == 0 || k + 1 > h {
        return Err(BoundError::StageOutOfRange {
            stage: k,
            max: h.saturating_sub(1),
        });
    }
    let direction = problem.direction();
    let mut best = direction.worst();
    for x in problem.states_at(k - 1) {
        for u in problem.feasible_actions(k - 1, &x) {
            best = direction.opt(best, delta_exhaustive(problem, scheme, k, &x, &u));
        }
    }
    Ok(best)
}

/// Exact `ε_1..ε_{H-1}`.
pub fn epsilons_exhaustive<P, S>(problem: &P, scheme: &S) -> Result<Vec<f64>, BoundError>
where
    P: FiniteProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    (1..problem.horizon())
        .map(|k| epsilon_exhaustive(problem, scheme, k))
        .collect()
}

/// The value of an ADP scheme together with its certified bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub direction: Direction,
    /// Monte Carlo estimate of the scheme's value `V̂`.
    pub v_hat: ValueEstimate,
    /// `Q̂_0(x_0, û_0)`
    pub q_hat_0: f64,
    /// `ε_1..ε_{H-1}`
    pub epsilons: Vec<f64>,
    /// `V̄` when maximising, `V̲` when minimising.
    pub bound: f64,
    /// `V̂ / bound`.
    pub beta: f64,
    /// Free-form key/value annotations (search box margin and the like).
    pub metadata: Vec<(String, String)>,
}

impl BoundReport {
    pub fn new(direction: Direction, v_hat: ValueEstimate, q_hat_0: f64, epsilons: Vec<f64>) -> Self {
        let bound = epsilons.iter().fold(q_hat_0, |acc, e| acc + e);
        Self {
            direction,
            v_hat,
            q_hat_0,
            beta: v_hat.mean / bound,
            bound,
            epsilons,
            metadata: Vec::new(),
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    /// Whether `v_star` lies on the certified side of the bound, allowing
    /// `tol` relative slack for floating-point round-off.
    pub fn certifies(&self, v_star: f64, tol: f64) -> bool {
        let slack = tol * v_star.abs().max(1.0);
        match self.direction {
            Direction::Maximize => v_star <= self.bound + slack,
            Direction::Minimize => v_star >= self.bound - slack,
        }
    }

    /// CSV header for a horizon of `h` stages.
    pub fn csv_header(h: usize) -> Vec<String> {
        let mut cols = vec!["v_hat".to_string(), "v_hat_stderr".into(), "q_hat_0".into()];
        cols.extend((1..h).map(|k| format!("eps_{k}")));
        cols.push("bound".into());
        cols.push("beta".into());
        cols
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.v_hat.mean.to_string(),
            self.v_hat.std_error.to_string(),
            self.q_hat_0.to_string(),
        ];
        row.extend(self.epsilons.iter().map(f64::to_string));
        row.push(self.bound.to_string());
        row.push(self.beta.to_string());
        row
    }

    pub fn to_text(&self) -> String {
        let side = match self.direction {
            Direction::Maximize => "upper bound V_bar",
            Direction::Minimize => "lower bound V_under",
        };
        let mut out = String::new();
        let _ = writeln!(out, "direction      {}", self.direction);
        let _ = writeln!(
            out,
            "V_hat          {} (stderr {}, n = {})",
            self.v_hat.mean, self.v_hat.std_error, self.v_hat.n
        );
        let _ = writeln!(out, "Q_hat_0        {}", self.q_hat_0);
        for (i, e) in self.epsilons.iter().enumerate() {
            let _ = writeln!(out, "eps_{:<10} {}", i + 1, e);
        }
        let _ = writeln!(out, "{side:<14} {}", self.bound);
        let _ = writeln!(out, "ratio          {}", self.beta);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "{k:<14} {v}");
        }
        out
    }
}

/// Evaluates the scheme from the problem's initial state and combines its
/// `Q̂_0` with the supplied stepwise errors.
pub fn assemble_bound<P, S>(
    problem: &P,
    scheme: &S,
    epsilons: Vec<f64>,
    n_rollouts: usize,
    seed: u64,
) -> Result<BoundReport, BoundError>
where
    P: HorizonProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    let h = problem.horizon();
    if epsilons.len() + 1 != h {
        return Err(BoundError::EpsilonCount {
            expected: h.saturating_sub(1),
            got: epsilons.len(),
        });
    }
    let x0 = problem.initial_state();
    let u0 = scheme.act(problem, 0, &x0);
    if !problem.is_feasible(0, &x0, &u0) {
        return Err(BoundError::InfeasibleAction { stage: 0 });
    }
    let q_hat_0 = scheme.q_hat(problem, 0, &x0, &u0);
    let v_hat = estimate_value(problem, &SchemePolicy(scheme), n_rollouts, seed)?;
    Ok(BoundReport::new(problem.direction(), v_hat, q_hat_0, epsilons))
}

/// Residual of the telescoping identity along one trajectory:
/// `|Σ_k [r_k + Ŵ_{k+1}(x_k, u_k) - Ŵ_k(x_{k-1}, u_{k-1})] - total|`
/// with `Ŵ_0 ≡ 0`. Zero (up to round-off) on a noise-free path whenever
/// `Ŵ_H` is the exact terminal expectation.
pub fn telescoping_check<P, S>(
    problem: &P,
    scheme: &S,
    trajectory: &Trajectory<P::State, P::Action>,
) -> f64
where
    P: HorizonProblem + ?Sized,
    S: AdpScheme<P> + ?Sized,
{
    let mut sum = 0.0;
    for (k, (x, u)) in trajectory.states.iter().zip(&trajectory.actions).enumerate() {
        let previous = if k == 0 {
            0.0
        } else {
            scheme.w_hat(
                problem,
                k,
                &trajectory.states[k - 1],
                &trajectory.actions[k - 1],
            )
        };
        sum += trajectory.stage_rewards[k] + scheme.w_hat(problem, k + 1, x, u) - previous;
    }
    (sum - trajectory.total).abs()
}
