use rand_distr::{Distribution, StandardNormal};

use super::{enumerate_opt, AdpScheme, BoundError};
use crate::horizon::{DiscreteMdp, ExactSolution, HorizonProblem};
use crate::seed;

/// Tabulated `Ŵ_k(x, u)` for a [`DiscreteMdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularScheme {
    actions: usize,
    /// `Ŵ_k` stored at index `k - 1`, each `[state][action]`.
    w: Vec<Vec<f64>>,
}

impl TabularScheme {
    pub fn new(mdp: &DiscreteMdp, w: Vec<Vec<f64>>) -> Result<Self, BoundError> {
        let dims = mdp.dims();
        if w.len() != dims.horizon {
            return Err(BoundError::Dimension {
                expected: dims.horizon,
                got: w.len(),
            });
        }
        for table in &w {
            if table.len() != dims.states * dims.actions {
                return Err(BoundError::Dimension {
                    expected: dims.states * dims.actions,
                    got: table.len(),
                });
            }
        }
        Ok(Self {
            actions: dims.actions,
            w,
        })
    }

    fn from_fn(mdp: &DiscreteMdp, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let dims = mdp.dims();
        let w = (1..=dims.horizon)
            .map(|k| {
                (0..dims.states)
                    .flat_map(|x| (0..dims.actions).map(move |u| (x, u)))
                    .map(|(x, u)| f(k, x, u))
                    .collect()
            })
            .collect();
        Self {
            actions: dims.actions,
            w,
        }
    }

    /// `Ŵ = W*`.
    pub fn exact(mdp: &DiscreteMdp, solution: &ExactSolution) -> Self {
        Self::from_fn(mdp, |k, x, u| solution.w(k, x, u))
    }

    /// The myopic scheme: `Ŵ_k ≡ 0` before the last stage, exact terminal
    /// expectation at `k = H`.
    pub fn greedy(mdp: &DiscreteMdp) -> Self {
        let h = mdp.horizon();
        Self::from_fn(mdp, |k, x, u| {
            if k == h {
                mdp.terminal_expectation(x, u)
            } else {
                0.0
            }
        })
    }

    /// `W*` plus independent `Normal(0, sigma²)` errors before the last stage.
    pub fn noisy(mdp: &DiscreteMdp, solution: &ExactSolution, sigma: f64, seed: u64) -> Self {
        let h = mdp.horizon();
        let mut rng = seed::rng(seed);
        let mut scheme = Self::exact(mdp, solution);
        for table in &mut scheme.w[..h - 1] {
            for entry in table.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *entry += sigma * z;
            }
        }
        scheme
    }

    /// Adds `offsets[k - 1]` to every entry of `Ŵ_k`.
    pub fn shifted(&self, offsets: &[f64]) -> Self {
        let mut out = self.clone();
        for (table, c) in out.w.iter_mut().zip(offsets) {
            table.iter_mut().for_each(|v| *v += c);
        }
        out
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.w[k - 1]
    }
}

impl AdpScheme<DiscreteMdp> for TabularScheme {
    fn w_hat(&self, _problem: &DiscreteMdp, k: usize, state: &usize, action: &usize) -> f64 {
        self.w[k - 1][state * self.actions + action]
    }

    fn act(&self, problem: &DiscreteMdp, stage: usize, state: &usize) -> usize {
        enumerate_opt(problem, self, stage, state).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::{delta_exhaustive, epsilon_exhaustive, epsilons_exhaustive};
    use crate::horizon::{Direction, MdpDims, RandomMdpSpec};

    fn instance(seed: u64, direction: Direction) -> DiscreteMdp {
        let spec = RandomMdpSpec {
            dims: MdpDims {
                states: 4,
                actions: 3,
                horizon: 4,
            },
            direction,
            restrict_actions: false,
        };
        DiscreteMdp::random(spec, seed).unwrap()
    }

    #[test]
    fn exact_scheme_has_zero_stepwise_error() {
        for direction in [Direction::Maximize, Direction::Minimize] {
            let mdp = instance(3, direction);
            let sol = mdp.solve_exact();
            let scheme = TabularScheme::exact(&mdp, &sol);
            for k in 1..4 {
                for x in 0..4 {
                    for u in 0..3 {
                        assert!(delta_exhaustive(&mdp, &scheme, k, &x, &u).abs() < 1e-10);
                    }
                }
            }
            let eps = epsilons_exhaustive(&mdp, &scheme).unwrap();
            assert!(eps.iter().all(|e| e.abs() < 1e-10));
        }
    }

    #[test]
    fn uniform_shift_cancels() {
        let mdp = instance(5, Direction::Maximize);
        let sol = mdp.solve_exact();
        let scheme = TabularScheme::exact(&mdp, &sol).shifted(&[2.5; 4]);
        let eps = epsilons_exhaustive(&mdp, &scheme).unwrap();
        assert!(eps.iter().all(|e| e.abs() < 1e-10), "{eps:?}");
    }

    #[test]
    fn q_minus_w_is_reward() {
        let mdp = instance(8, Direction::Maximize);
        let scheme = TabularScheme::noisy(&mdp, &mdp.solve_exact(), 0.3, 1);
        for k in 0..4 {
            for x in 0..4 {
                for u in 0..3 {
                    let diff = scheme.q_hat(&mdp, k, &x, &u) - scheme.w_hat(&mdp, k + 1, &x, &u);
                    assert!((diff - mdp.reward(k, x, u)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn stage_range_checked() {
        let mdp = instance(1, Direction::Maximize);
        let scheme = TabularScheme::greedy(&mdp);
        assert!(matches!(
            epsilon_exhaustive(&mdp, &scheme, 0),
            Err(BoundError::StageOutOfRange { .. })
        ));
        assert!(matches!(
            epsilon_exhaustive(&mdp, &scheme, 4),
            Err(BoundError::StageOutOfRange { .. })
        ));
    }
}
