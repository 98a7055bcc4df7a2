use adp_core::bound::{assemble_bound, epsilons_exhaustive, telescoping_check, SchemePolicy, TabularScheme};
use adp_core::horizon::{rollout, DiscreteMdp, MdpDims, MdpTables, RandomMdpSpec};
use adp_core::learn::QuadraticScheme;
use adp_core::lqg::{riccati_solve, LqgProblem, Mat, RobotModel};
use adp_core::{AdpScheme, Direction, HorizonProblem};
use proptest::prelude::*;
use rand::Rng;

fn instance(dims: MdpDims, direction: Direction, restrict: bool, seed: u64) -> DiscreteMdp {
    DiscreteMdp::random(
        RandomMdpSpec {
            dims,
            direction,
            restrict_actions: restrict,
        },
        seed,
    )
    .unwrap()
}

/// Arbitrary `Ŵ_1..Ŵ_{H-1}` in `[-2, 3)` with the exact terminal expectation
/// as `Ŵ_H`.
fn random_tables(mdp: &DiscreteMdp, seed: u64) -> Vec<Vec<f64>> {
    let d = mdp.dims();
    let mut rng = adp_core::seed::rng(seed);
    let mut w: Vec<Vec<f64>> = (1..d.horizon)
        .map(|_| (0..d.states * d.actions).map(|_| rng.gen_range(-2.0..3.0)).collect())
        .collect();
    w.push(
        (0..d.states)
            .flat_map(|x| (0..d.actions).map(move |u| (x, u)))
            .map(|(x, u)| mdp.terminal_expectation(x, u))
            .collect(),
    );
    w
}

/// `ε_k` straight from the tables: `opt_{x,u} Σ_y p(y|x,u) opt_v [r_k(y,v) + Ŵ_{k+1}(y,v)] - Ŵ_k(x,u)`.
fn epsilon_by_hand(mdp: &DiscreteMdp, w: &[Vec<f64>], k: usize) -> f64 {
    let d = mdp.dims();
    let dir = mdp.direction();
    let q = |y: usize, v: usize| mdp.reward(k, y, v) + w[k][y * d.actions + v];
    let mut eps = dir.worst();
    for x in 0..d.states {
        for u in mdp.actions_at(k - 1, x) {
            let next: f64 = mdp
                .kernel_row(k - 1, x, u)
                .iter()
                .enumerate()
                .map(|(y, p)| p * mdp.actions_at(k, y).map(|v| q(y, v)).fold(dir.worst(), |a, b| dir.opt(a, b)))
                .sum();
            eps = dir.opt(eps, next - w[k - 1][x * d.actions + u]);
        }
    }
    eps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_schemes_are_certified(
        states in 1usize..6, actions in 1usize..4, horizon in 1usize..5,
        seed in any::<u64>(), max in any::<bool>(), restrict in any::<bool>(),
    ) {
        let dir = if max { Direction::Maximize } else { Direction::Minimize };
        let mdp = instance(MdpDims { states, actions, horizon }, dir, restrict, seed);
        let scheme = TabularScheme::new(&mdp, random_tables(&mdp, seed ^ 1)).unwrap();
        let eps = epsilons_exhaustive(&mdp, &scheme).unwrap();
        let report = assemble_bound(&mdp, &scheme, eps, 16, seed).unwrap();
        let v_star = mdp.solve_exact().value();
        prop_assert!(report.certifies(v_star, 1e-12), "{} vs {}", report.bound, v_star);
    }

    #[test]
    fn exhaustive_epsilon_matches_direct_formula(seed in any::<u64>(), max in any::<bool>()) {
        let dir = if max { Direction::Maximize } else { Direction::Minimize };
        let mdp = instance(MdpDims { states: 4, actions: 3, horizon: 4 }, dir, true, seed);
        let w = random_tables(&mdp, seed.wrapping_add(3));
        let scheme = TabularScheme::new(&mdp, w.clone()).unwrap();
        let eps = epsilons_exhaustive(&mdp, &scheme).unwrap();
        for (i, e) in eps.iter().enumerate() {
            let want = epsilon_by_hand(&mdp, &w, i + 1);
            prop_assert!((e - want).abs() < 1e-12, "stage {}: {} vs {}", i + 1, e, want);
        }
    }

    #[test]
    fn telescoping_holds_on_deterministic_paths(seed in any::<u64>()) {
        let base = instance(MdpDims { states: 5, actions: 3, horizon: 4 }, Direction::Maximize, false, seed);
        let d = base.dims();
        let mut rng = adp_core::seed::rng(seed ^ 7);
        let mut tables: MdpTables = base.tables().clone();
        for row in tables.kernel.chunks_mut(d.states) {
            row.iter_mut().for_each(|p| *p = 0.0);
            row[rng.gen_range(0..d.states)] = 1.0;
        }
        let mdp = DiscreteMdp::new(d, Direction::Maximize, 0, tables).unwrap();
        let scheme = TabularScheme::new(&mdp, random_tables(&mdp, seed)).unwrap();
        let path = rollout(&mdp, &SchemePolicy(&scheme), seed).unwrap();
        prop_assert!(telescoping_check(&mdp, &scheme, &path) < 1e-12);
    }
}

#[test]
fn stochastic_paths_break_telescoping_only_in_the_terminal_term() {
    let mdp = instance(MdpDims { states: 4, actions: 2, horizon: 3 }, Direction::Maximize, false, 4);
    let scheme = TabularScheme::greedy(&mdp);
    for seed in 0..20 {
        let path = rollout(&mdp, &SchemePolicy(&scheme), seed).unwrap();
        let h = mdp.dims().horizon;
        let (x, u) = (path.states[h - 1], path.actions[h - 1]);
        let gap = (mdp.terminal_expectation(x, u) - mdp.terminal(path.states[h])).abs();
        assert!((telescoping_check(&mdp, &scheme, &path) - gap).abs() < 1e-12);
    }
}

#[test]
fn noiseless_lqg_telescopes() {
    let model = RobotModel::reference().with_noise(Mat::<4, 4>::zeros()).unwrap();
    let sol = riccati_solve(&model).unwrap();
    let problem = LqgProblem::new(model.clone());
    for sigma in [0.0, 0.05, 0.3] {
        let scheme = QuadraticScheme::exact(&sol).perturbed(&model, sigma, 11);
        let path = rollout(&problem, &SchemePolicy(&scheme), 0).unwrap();
        let scale = path.total.abs();
        assert!(telescoping_check(&problem, &scheme, &path) <= 1e-9 * scale, "sigma {sigma}");
        assert_eq!(problem.direction(), Direction::Minimize);
        let q0 = scheme.q_hat(&problem, 0, &problem.initial_state(), &path.actions[0]);
        if sigma == 0.0 {
            assert!((q0 - path.total).abs() <= 1e-9 * scale);
        }
    }
}
