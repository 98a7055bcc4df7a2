//! A submodular objective as a deterministic finite-horizon problem: the
//! state is the chosen prefix, the action the next element and the stage
//! reward its marginal gain.

use super::{enumerate_ordered, feasible_extensions, SubmodObjective};
use crate::bound::{enumerate_opt, AdpScheme};
use crate::horizon::{Direction, FiniteProblem, HorizonProblem};
use crate::seed;

pub struct SubmodMdp<'a, O: ?Sized>(pub &'a O);

impl<O: SubmodObjective + ?Sized> HorizonProblem for SubmodMdp<'_, O> {
    type State = Vec<usize>;
    type Action = usize;
    type Noise = ();

    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn direction(&self) -> Direction {
        Direction::Maximize
    }
    fn initial_state(&self) -> Vec<usize> {
        Vec::new()
    }
    fn sample_noise(&self, _stage: usize, _rng: &mut seed::Rng) {}
    fn transition(&self, _stage: usize, state: &Vec<usize>, action: &usize, _noise: &()) -> Vec<usize> {
        let mut next = state.clone();
        next.push(*action);
        next
    }
    fn stage_reward(&self, stage: usize, state: &Vec<usize>, action: &usize) -> f64 {
        let next = self.transition(stage, state, action, &());
        self.0.evaluate(&next) - self.0.evaluate(state)
    }
    fn terminal_reward(&self, _state: &Vec<usize>) -> f64 {
        0.0
    }
    fn is_feasible(&self, _stage: usize, state: &Vec<usize>, action: &usize) -> bool {
        feasible_extensions(self.0.mode(), self.0.ground_size(), state).contains(action)
    }
}

impl<O: SubmodObjective + ?Sized> FiniteProblem for SubmodMdp<'_, O> {
    fn states_at(&self, stage: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        enumerate_ordered(self.0.mode(), self.0.ground_size(), stage, &mut Vec::new(), &mut out);
        out
    }
    fn feasible_actions(&self, _stage: usize, state: &Vec<usize>) -> Vec<usize> {
        feasible_extensions(self.0.mode(), self.0.ground_size(), state)
    }
    fn successors(&self, stage: usize, state: &Vec<usize>, action: &usize) -> Vec<(f64, Vec<usize>)> {
        vec![(1.0, self.transition(stage, state, action, &()))]
    }
}

/// `Ŵ ≡ 0`: acting greedily on the marginal gain.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyScheme;

impl<O: SubmodObjective + ?Sized> AdpScheme<SubmodMdp<'_, O>> for GreedyScheme {
    fn w_hat(&self, _problem: &SubmodMdp<'_, O>, _k: usize, _state: &Vec<usize>, _action: &usize) -> f64 {
        0.0
    }
    fn act(&self, problem: &SubmodMdp<'_, O>, stage: usize, state: &Vec<usize>) -> usize {
        enumerate_opt(problem, self, stage, state).0
    }
}
