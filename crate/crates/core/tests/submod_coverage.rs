use adp_core::bound::{assemble_bound, epsilons_exhaustive};
use adp_core::coverage::{build_reduced_scenario, sweep_bounds, CoverageObjective};
use adp_core::seed;
use adp_core::submod::{
    bound_classic, bound_greedy_curvature, bound_top_h, brute_force_opt, greedy, telescoping_residual, top_h_value,
    verify_submodular, GreedyScheme, Mode, ProbabilisticCoverage, SubmodMdp, SubmodObjective,
};
use rand::Rng;

const TOL: f64 = 1e-12;

/// Best value over all feasible length-`H` sequences by plain recursion.
fn exhaustive_best<O: SubmodObjective>(obj: &O, seq: &mut Vec<usize>) -> f64 {
    if seq.len() == obj.horizon() {
        return obj.evaluate(seq);
    }
    let mut best = f64::NEG_INFINITY;
    for s in 0..obj.ground_size() {
        let allowed = match obj.mode() {
            Mode::Set => seq.last().is_none_or(|&l| s > l),
            Mode::String => true,
        };
        if allowed {
            seq.push(s);
            best = best.max(exhaustive_best(obj, seq));
            seq.pop();
        }
    }
    best
}

fn random_toy(seed: u64, mode: Mode, null_element: bool) -> ProbabilisticCoverage {
    random_toy_with(seed, mode, null_element, mode == Mode::String)
}

fn random_toy_with(seed: u64, mode: Mode, null_element: bool, decaying: bool) -> ProbabilisticCoverage {
    let mut rng = seed::rng(seed);
    let ground = rng.gen_range(4..=7);
    let items = rng.gen_range(3..=8);
    let horizon = 3;
    let mut detect: Vec<Vec<f64>> = (0..ground)
        .map(|_| (0..items).map(|_| if rng.gen_bool(0.4) { rng.gen::<f64>() } else { 0.0 }).collect())
        .collect();
    if null_element {
        detect.push(vec![0.0; items]);
    }
    let weights = (0..items).map(|_| rng.gen_range(0.1..2.0)).collect();
    let decay = match decaying {
        false => vec![1.0; horizon],
        true => {
            let mut d: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.3..1.0)).collect();
            d.sort_by(|a, b| b.total_cmp(a));
            d
        }
    };
    ProbabilisticCoverage::new(detect, weights, decay, mode).unwrap()
}

fn check_bounds<O: SubmodObjective>(obj: &O, label: &str) {
    assert!(verify_submodular(obj, 500, 1).passed(), "{label}: not submodular");
    let run = greedy(obj).unwrap();
    let (opt_seq, opt) = brute_force_opt(obj, 1_000_000).unwrap();
    assert!((opt - exhaustive_best(obj, &mut Vec::new())).abs() <= TOL, "{label}");
    let ratio = run.value() / opt;
    let b1 = bound_greedy_curvature(&run).unwrap();
    let b2 = bound_top_h(&run).unwrap();
    if obj.mode() == Mode::Set {
        assert!(bound_classic() <= ratio + TOL, "{label}: classic bound {ratio}");
    }
    assert!(b1 <= ratio + TOL, "{label}: b1 {b1} > {ratio}");
    assert!(b2 <= ratio + TOL, "{label}: b2 {b2} > {ratio}");
    assert!(b2 >= b1 - TOL, "{label}: b2 {b2} < b1 {b1}");
    assert!(top_h_value(&run).unwrap() >= opt - TOL);
    assert!(telescoping_residual(obj, &run.sequence) <= TOL);
    assert!(telescoping_residual(obj, &opt_seq) <= TOL);
}

#[test]
fn reduced_scenarios_respect_every_bound() {
    for seed in 0..20u64 {
        let zeta = if seed % 2 == 0 { 0.0 } else { 0.1 };
        let lambda0 = 0.1 + 0.07 * seed as f64;
        let scenario = build_reduced_scenario(seed, 12, 3, lambda0, zeta).unwrap();
        let obj = CoverageObjective::new(scenario).unwrap();
        check_bounds(&obj, &format!("scenario {seed}"));
    }
}

#[test]
fn synthetic_toys_respect_every_bound() {
    for seed in 0..20u64 {
        let mode = if seed % 2 == 0 { Mode::Set } else { Mode::String };
        check_bounds(&random_toy(seed, mode, false), &format!("toy {seed}"));
    }
}

#[test]
fn greedy_as_adp_reproduces_top_h() {
    for seed in 0..10u64 {
        let obj = random_toy_with(500 + seed, Mode::String, true, false);
        let problem = SubmodMdp(&obj);
        let eps = epsilons_exhaustive(&problem, &GreedyScheme).unwrap();
        let report = assemble_bound(&problem, &GreedyScheme, eps, 2, seed).unwrap();
        let run = greedy(&obj).unwrap();
        let v_bar = top_h_value(&run).unwrap();
        assert!((report.bound - v_bar).abs() <= TOL, "seed {seed}: {} vs {v_bar}", report.bound);
        assert!((report.v_hat.mean - run.value()).abs() <= TOL);
    }
}

#[test]
fn sweep_reports_the_optimum_on_small_scenarios() {
    let template = build_reduced_scenario(4, 10, 3, 0.5, 0.1).unwrap();
    let rows = sweep_bounds(&template, &[0.2, 0.9], Some(10_000)).unwrap();
    for row in rows {
        let opt = row.f_opt.unwrap();
        assert!(row.f_greedy <= opt + TOL && opt <= row.v_bar + TOL);
        assert_eq!(row.mode, Mode::String);
    }
    assert!(sweep_bounds(&template, &[0.2], Some(10)).is_err());
}

#[test]
fn greedy_as_adp_is_tighter_under_decay() {
    for seed in 0..10u64 {
        let obj = random_toy_with(700 + seed, Mode::String, true, true);
        let problem = SubmodMdp(&obj);
        let eps = epsilons_exhaustive(&problem, &GreedyScheme).unwrap();
        let report = assemble_bound(&problem, &GreedyScheme, eps, 2, seed).unwrap();
        let opt = brute_force_opt(&obj, 1_000_000).unwrap().1;
        let v_bar = top_h_value(&greedy(&obj).unwrap()).unwrap();
        assert!(opt <= report.bound + TOL && report.bound <= v_bar + TOL, "seed {seed}");
    }
}
