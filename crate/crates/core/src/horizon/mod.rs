//! Finite-horizon stochastic optimal control.
//!
//! A [`HorizonProblem`] fixes the horizon, the optimisation direction, the
//! transition law and the rewards. Policies are deterministic stage-indexed
//! rules; [`rollout`] realises one state path and [`estimate_value`] averages
//! many of them.

mod discrete;

pub use discrete::{DiscreteMdp, ExactSolution, MdpDims, MdpTables, RandomMdpSpec};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HorizonError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("no feasible action at stage {stage}, state {state}")]
    NoFeasibleAction { stage: usize, state: String },
    #[error("policy chose infeasible action {action} at stage {stage}, state {state}")]
    InfeasibleAction {
        stage: usize,
        state: String,
        action: String,
    },
    #[error("at least 2 rollouts are needed for a standard error, got {0}")]
    TooFewRollouts(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Whether the objective is a reward to maximise or a cost to minimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// `true` when `candidate` is strictly better than `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }

    /// Identity element of [`Direction::opt`].
    pub fn worst(self) -> f64 {
        match self {
            Direction::Maximize => f64::NEG_INFINITY,
            Direction::Minimize => f64::INFINITY,
        }
    }

    pub fn opt(self, a: f64, b: f64) -> f64 {
        if self.improves(b, a) {
            b
        } else {
            a
        }
    }

    /// Position and value of the optimum of `values`; ties go to the first.
    pub fn arg_opt<I>(self, values: I) -> Option<(usize, f64)>
    where
        I: IntoIterator<Item = f64>,
    {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in values.into_iter().enumerate() {
            match best {
                Some((_, b)) if !self.improves(v, b) => {}
                _ => best = Some((i, v)),
            }
        }
        best
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Maximize => Direction::Minimize,
            Direction::Minimize => Direction::Maximize,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maximize" | "max" => Ok(Direction::Maximize),
            "minimize" | "min" => Ok(Direction::Minimize),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// A finite-horizon problem `x_{k+1} = h_k(x_k, u_k, w_k)` with stage
/// rewards `r_k(x_k, u_k)` for `k = 0..H-1` and terminal reward `r_H(x_H)`.
///
/// Field functions are only ever called with `stage < horizon()`.
pub trait HorizonProblem: Sync {
    type State: Clone + fmt::Debug + Send + Sync;
    type Action: Clone + fmt::Debug + Send + Sync;
    type Noise;

    fn horizon(&self) -> usize;
    fn direction(&self) -> Direction;
    fn initial_state(&self) -> Self::State;
    fn sample_noise(&self, stage: usize, rng: &mut seed::Rng) -> Self::Noise;
    fn transition(
        &self,
        stage: usize,
        state: &Self::State,
        action: &Self::Action,
        noise: &Self::Noise,
    ) -> Self::State;
    fn stage_reward(&self, stage: usize, state: &Self::State, action: &Self::Action) -> f64;
    fn terminal_reward(&self, state: &Self::State) -> f64;
    fn is_feasible(&self, stage: usize, state: &Self::State, action: &Self::Action) -> bool;
}

/// A problem small enough to enumerate: the states that can occur at each
/// stage, the feasible actions, and the full successor distribution.
pub trait FiniteProblem: HorizonProblem {
    /// States that may be occupied at `stage` (`0..=H`).
    fn states_at(&self, stage: usize) -> Vec<Self::State>;
    fn feasible_actions(&self, stage: usize, state: &Self::State) -> Vec<Self::Action>;
    /// `(probability, next state)` pairs; probabilities sum to one.
    fn successors(
        &self,
        stage: usize,
        state: &Self::State,
        action: &Self::Action,
    ) -> Vec<(f64, Self::State)>;
}

/// A deterministic, stage-indexed decision rule.
pub trait Policy<P: HorizonProblem + ?Sized>: Sync {
    fn act(&self, problem: &P, stage: usize, state: &P::State) -> P::Action;
}

/// Adapts a closure `(stage, state) -> action` into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<P, F> Policy<P> for FnPolicy<F>
where
    P: HorizonProblem + ?Sized,
    F: Fn(usize, &P::State) -> P::Action + Sync,
{
    fn act(&self, _problem: &P, stage: usize, state: &P::State) -> P::Action {
        (self.0)(stage, state)
    }
}

/// One realised state path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    /// `x_0..x_H`
    pub states: Vec<S>,
    /// `u_0..u_{H-1}`
    pub actions: Vec<A>,
    pub stage_rewards: Vec<f64>,
    pub terminal_reward: f64,
    pub total: f64,
}

/// Runs `policy` on `problem` from its initial state.
pub fn rollout<P, Pi>(
    problem: &P,
    policy: &Pi,
    seed: u64,
) -> Result<Trajectory<P::State, P::Action>, HorizonError>
where
    P: HorizonProblem + ?Sized,
    Pi: Policy<P> + ?Sized,
{
    let horizon = problem.horizon();
    if horizon == 0 {
        return Err(HorizonError::ZeroHorizon);
    }
    let mut rng = seed::rng(seed);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut stage_rewards = Vec::with_capacity(horizon);
    let mut state = problem.initial_state();
    for stage in 0..horizon {
        let action = policy.act(problem, stage, &state);
        if !problem.is_feasible(stage, &state, &action) {
            return Err(HorizonError::InfeasibleAction {
                stage,
                state: format!("{state:?}"),
                action: format!("{action:?}"),
            });
        }
        stage_rewards.push(problem.stage_reward(stage, &state, &action));
        let noise = problem.sample_noise(stage, &mut rng);
        let next = problem.transition(stage, &state, &action, &noise);
        states.push(state);
        actions.push(action);
        state = next;
    }
    let terminal_reward = problem.terminal_reward(&state);
    states.push(state);
    let total = stage_rewards.iter().sum::<f64>() + terminal_reward;
    Ok(Trajectory {
        states,
        actions,
        stage_rewards,
        terminal_reward,
        total,
    })
}

/// Monte Carlo estimate of a policy's objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl ValueEstimate {
    /// Mean and standard error of `samples`.
    ///
    /// Deviations are taken from the first sample, so identical samples give
    /// exactly that sample as the mean and a zero standard error.
    pub fn from_samples(samples: &[f64]) -> Result<Self, HorizonError> {
        let n = samples.len();
        if n < 2 {
            return Err(HorizonError::TooFewRollouts(n));
        }
        let pivot = samples[0];
        let (sum, sum_sq) = samples.iter().fold((0.0, 0.0), |(s, s2), &t| {
            let d = t - pivot;
            (s + d, s2 + d * d)
        });
        let nf = n as f64;
        let mean = pivot + sum / nf;
        let var = ((sum_sq - sum * sum / nf) / (nf - 1.0)).max(0.0);
        Ok(Self {
            mean,
            std_error: (var / nf).sqrt(),
            n,
        })
    }
}

/// Averages `n_rollouts` independent rollouts. Rollout `i` is seeded with
/// `seed::derive(seed, i)`, so the result does not depend on thread count.
pub fn estimate_value<P, Pi>(
    problem: &P,
    policy: &Pi,
    n_rollouts: usize,
    seed: u64,
) -> Result<ValueEstimate, HorizonError>
where
    P: HorizonProblem + ?Sized,
    Pi: Policy<P> + ?Sized,
{
    if n_rollouts < 2 {
        return Err(HorizonError::TooFewRollouts(n_rollouts));
    }
    let totals = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| rollout(problem, policy, seed::derive(seed, i)).map(|t| t.total))
        .collect::<Result<Vec<f64>, _>>()?;
    ValueEstimate::from_samples(&totals)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic counter: state is an integer, reward equals the action.
    struct Counter {
        horizon: usize,
    }

    impl HorizonProblem for Counter {
        type State = i64;
        type Action = i64;
        type Noise = ();

        fn horizon(&self) -> usize {
            self.horizon
        }
        fn direction(&self) -> Direction {
            Direction::Maximize
        }
        fn initial_state(&self) -> i64 {
            0
        }
        fn sample_noise(&self, _: usize, _: &mut seed::Rng) {}
        fn transition(&self, _: usize, x: &i64, u: &i64, _: &()) -> i64 {
            x + u
        }
        fn stage_reward(&self, _: usize, _: &i64, u: &i64) -> f64 {
            *u as f64
        }
        fn terminal_reward(&self, x: &i64) -> f64 {
            0.5 * *x as f64
        }
        fn is_feasible(&self, _: usize, _: &i64, u: &i64) -> bool {
            (0..=2).contains(u)
        }
    }

    #[test]
    fn deterministic_rollout_total() {
        let p = Counter { horizon: 3 };
        let t = rollout(&p, &FnPolicy(|k: usize, _: &i64| k as i64), 1).unwrap();
        assert_eq!(t.states, vec![0, 0, 1, 3]);
        assert_eq!(t.stage_rewards, vec![0.0, 1.0, 2.0]);
        assert_eq!(t.terminal_reward, 1.5);
        assert_eq!(t.total, 4.5);
    }

    #[test]
    fn zero_noise_estimate_has_zero_error() {
        let p = Counter { horizon: 4 };
        let est = estimate_value(&p, &FnPolicy(|_: usize, _: &i64| 1), 10, 5).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.mean, 6.0);
    }

    #[test]
    fn infeasible_action_is_reported() {
        let p = Counter { horizon: 2 };
        let err = rollout(&p, &FnPolicy(|k: usize, _: &i64| 3 * k as i64), 0).unwrap_err();
        assert!(matches!(err, HorizonError::InfeasibleAction { stage: 1, .. }));
    }

    #[test]
    fn zero_horizon_rejected() {
        let p = Counter { horizon: 0 };
        assert_eq!(
            rollout(&p, &FnPolicy(|_: usize, _: &i64| 0), 0).unwrap_err(),
            HorizonError::ZeroHorizon
        );
    }

    #[test]
    fn one_rollout_rejected() {
        let p = Counter { horizon: 1 };
        assert_eq!(
            estimate_value(&p, &FnPolicy(|_: usize, _: &i64| 0), 1, 0).unwrap_err(),
            HorizonError::TooFewRollouts(1)
        );
    }

    #[test]
    fn arg_opt_breaks_ties_low() {
        let v = [1.0, 3.0, 3.0, 0.0];
        assert_eq!(Direction::Maximize.arg_opt(v), Some((1, 3.0)));
        assert_eq!(Direction::Minimize.arg_opt([2.0, 0.0, 0.0]), Some((1, 0.0)));
        assert_eq!(Direction::Maximize.arg_opt(std::iter::empty()), None);
    }

    #[test]
    fn direction_parses() {
        assert_eq!("Maximize".parse::<Direction>().unwrap(), Direction::Maximize);
        assert_eq!("min".parse::<Direction>().unwrap(), Direction::Minimize);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
