//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use adp_cli::config::{DeltaMode, ExperimentConfig, Kind, Scale};
use adp_cli::coverage::coverage_rows;
use adp_cli::lqg::lqg_experiment;
use adp_core::bound::{assemble_bound, epsilons_exhaustive};
use adp_core::coverage::{build_reduced_scenario, CoverageObjective};
use adp_core::horizon::{estimate_value, rollout, ValueEstimate};
use adp_core::learn::{delta_label_closed, delta_label_sampled, generate_demos, DeltaLabels, DemoConfig, LabelKind};
use adp_core::lqg::{riccati_solve, LinearPolicy, LqgProblem, RobotModel, Vector};
use adp_core::seed;
use adp_core::submod::{
    bound_classic, bound_greedy_curvature, bound_top_h, brute_force_opt, greedy, telescoping_residual, top_h_value,
    GreedyScheme, Mode, ProbabilisticCoverage, SubmodMdp, SubmodObjective,
};
use anyhow::{ensure, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = fn() -> Result<String>;

fn gauss(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn desk() -> ExperimentConfig {
    ExperimentConfig::for_scale(Scale::Desk)
}

fn oracle_validation() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let cfg = desk();
    ensure!(cfg.oracle.instances == 100 && cfg.oracle.noise_scales.len() == 3);
    let outcome = adp_cli::run(Kind::OracleValidate, &cfg, dir.path())?;
    let csv = std::fs::read_to_string(&outcome.files[0])?;
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    ensure!(rows.len() == 500, "expected 500 scheme runs, got {}", rows.len());
    let valid = rows.iter().filter(|r| r[13] == "true").count();
    let minimize = rows.iter().filter(|r| r[1] == "minimize").count();
    let mut worst_exact: f64 = 0.0;
    for r in rows.iter().filter(|r| r[5] == "exact") {
        let (v_star, bound): (f64, f64) = (r[6].parse()?, r[9].parse()?);
        worst_exact = worst_exact.max((bound - v_star).abs() / v_star.abs().max(1.0));
    }
    ensure!(valid == 500, "{valid}/500 valid");
    ensure!(minimize > 0, "no minimisation instances");
    ensure!(worst_exact <= 1e-9, "exact scheme off by {worst_exact}");
    ensure!(outcome.passed);
    Ok(format!("{valid}/500 valid ({minimize} minimising), exact scheme max rel error {worst_exact:.1e}"))
}

fn riccati_correctness() -> Result<String> {
    let model = RobotModel::reference();
    let sol = riccati_solve(&model)?;
    let problem = LqgProblem::new(model.clone());
    let z0 = model.z_initial();
    let traces: f64 = (1..=model.horizon).map(|i| (model.noise_cov * sol.p[i]).trace()).sum();
    let v_star = (z0.transpose() * sol.p[0] * z0)[0] + traces;
    ensure!((v_star - sol.value_to_go(0, &z0)?).abs() <= 1e-9 * v_star);
    let est = estimate_value(&problem, &sol.policy(), 10_000, 2024)?;
    let z = (est.mean - v_star) / est.std_error;
    ensure!(z.abs() <= 3.0, "optimal cost {} vs V* {v_star} ({z:.2} se)", est.mean);

    let mut rng = seed::child_rng(2024, 1);
    let mut worst = f64::INFINITY;
    for trial in 0..20 {
        let mut gains = sol.policy().gains;
        let k = rng.gen_range(0..model.horizon);
        let scale = 0.05 * gains[k].amax();
        gains[k] += gain_perturbation(&mut rng, scale);
        let perturbed = LinearPolicy { gains };
        let est = estimate_value(&problem, &perturbed, 10_000, seed::derive(2024, 100 + trial))?;
        let margin = (est.mean - v_star) / est.std_error;
        worst = worst.min(margin);
        ensure!(margin >= -3.0, "perturbation {trial} at stage {k} beats the optimum by {margin:.2} se");
    }
    Ok(format!(
        "MC {:.1} vs V* {v_star:.1} ({z:+.2} se); 20 perturbations, worst {worst:+.2} se",
        est.mean
    ))
}

fn gain_perturbation(rng: &mut seed::Rng, scale: f64) -> adp_core::lqg::Mat<2, 4> {
    adp_core::lqg::Mat::<2, 4>::from_fn(|_, _| scale * gauss(rng))
}

fn lqg_bounds() -> Result<String> {
    let cfg = desk();
    ensure!(cfg.lqg.n_traj == 10_000 && cfg.lqg.n_test_states == 100);
    let res = lqg_experiment(&cfg)?;
    let below = res.rows.iter().filter(|r| r.v_lower <= r.v_star + adp_cli::lqg::ORDER_TOL * r.v_star).count();
    let above = res.rows.iter().filter(|r| r.v_star <= r.v_hat + 3.0 * r.v_hat_stderr).count();
    ensure!(below == 100, "(a) v_lower <= v_star on {below}/100");
    ensure!(above == 100, "(b) v_star <= v_hat + 3 se on {above}/100");
    ensure!(res.mean_est_ratio <= 1.10, "(c) mean est ratio {}", res.mean_est_ratio);
    ensure!(res.mean_true_ratio <= 1.05, "(c) mean true ratio {}", res.mean_true_ratio);

    let mut exact = cfg.clone();
    exact.lqg.delta_labels = DeltaMode::Closed;
    exact.lqg.ridge = 0.0;
    let ex = lqg_experiment(&exact)?;
    ensure!(ex.mean_est_ratio <= 1.001, "(d) exact-mode mean est ratio {}", ex.mean_est_ratio);
    Ok(format!(
        "ordering 100/100; est ratio {:.4}, true ratio {:.4}; exact mode est ratio {:.6}",
        res.mean_est_ratio, res.mean_true_ratio, ex.mean_est_ratio
    ))
}

fn closed_form_cross_checks() -> Result<String> {
    let sol = riccati_solve(&RobotModel::reference())?;
    let model = sol.model();
    let mut rng = seed::child_rng(4, 0);
    let mut worst_evtg: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.gen_range(1..=model.horizon);
        let z = model.z_initial() + Vector::<4>::from_fn(|_, _| 10.0 * gauss(&mut rng));
        let u = Vector::<2>::from_fn(|_, _| 50.0 * gauss(&mut rng));
        let mean = model.mean_next(&z, &u);
        let samples = (0..100_000)
            .map(|_| sol.value_to_go(k, &(mean + model.sample_noise(&mut rng))))
            .collect::<Result<Vec<_>, _>>()?;
        let est = ValueEstimate::from_samples(&samples)?;
        let dev = (est.mean - sol.evtg_exact(k, &z, &u)?).abs() / est.std_error;
        worst_evtg = worst_evtg.max(dev);
        ensure!(dev <= 3.0, "evtg at stage {k} off by {dev:.2} se");
    }
    let demos = DemoConfig {
        n_traj: 12,
        seed: 4,
        ..DemoConfig::default()
    };
    let data = generate_demos(&sol, LabelKind::Delta(DeltaLabels::ClosedForm), demos)?;
    let records: Vec<_> = data.clusters.iter().flatten().take(100).collect();
    ensure!(records.len() == 100);
    let mut worst_delta: f64 = 0.0;
    for r in records {
        let z = Vector::<4>::from_column_slice(&r.z);
        let u = Vector::<2>::from_column_slice(&r.mu);
        let closed = delta_label_closed(&sol, r.stage, &z, &u)?;
        ensure!((closed - r.label).abs() <= 1e-12 * closed.abs().max(1.0));
        let (sampled, se) = delta_label_sampled(&sol, r.stage, &z, &u, 1000, &mut rng)?;
        let dev = (sampled - closed).abs() / se;
        worst_delta = worst_delta.max(dev);
        ensure!(dev <= 4.0, "delta label at stage {} off by {dev:.2} se", r.stage);
    }
    Ok(format!("evtg worst {worst_evtg:.2} se over 20 points; delta worst {worst_delta:.2} se over 100 records"))
}

fn coverage_sweep() -> Result<String> {
    let cfg = desk();
    let c = &cfg.coverage;
    ensure!((c.width, c.height, c.horizon, c.lambda0.len(), c.stride) == (50, 40, 5, 15, 1));
    ensure!(c.lambda0.first() == Some(&0.1) && c.lambda0.last() == Some(&1.5));
    let rows = coverage_rows(&cfg)?;
    ensure!(rows.len() == 30);
    for r in &rows {
        ensure!(r.beta2 >= r.beta1, "beta2 {} < beta1 {} at zeta {} lambda0 {}", r.beta2, r.beta1, r.zeta, r.lambda0);
        ensure!(r.beta2 > 0.0 && r.beta2 <= 1.0, "beta2 {} outside (0, 1]", r.beta2);
    }
    let set = rows.iter().filter(|r| r.mode == Mode::Set).count();
    let gap = rows.iter().map(|r| r.beta2 - r.beta1).fold(f64::INFINITY, f64::min);
    Ok(format!("30/30 rows ({set} set, {} string), min beta2 - beta1 = {gap:.4}", 30 - set))
}

fn random_coverage_toy(seed: u64, mode: Mode, null_element: bool, decaying: bool) -> ProbabilisticCoverage {
    let mut rng = seed::rng(seed);
    let ground = rng.gen_range(4..=8);
    let items = rng.gen_range(3..=10);
    let mut detect: Vec<Vec<f64>> = (0..ground)
        .map(|_| (0..items).map(|_| if rng.gen_bool(0.4) { rng.gen::<f64>() } else { 0.0 }).collect())
        .collect();
    if null_element {
        detect.push(vec![0.0; items]);
    }
    let weights = (0..items).map(|_| rng.gen_range(0.1..2.0)).collect();
    let decay = if decaying {
        let mut d: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..1.0)).collect();
        d.sort_by(|a, b| b.total_cmp(a));
        d
    } else {
        vec![1.0; 3]
    };
    ProbabilisticCoverage::new(detect, weights, decay, mode).expect("valid toy")
}

fn check_instance<O: SubmodObjective>(obj: &O) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let run = greedy(obj)?;
    let (opt_seq, opt) = brute_force_opt(obj, 1_000_000)?;
    let ratio = run.value() / opt;
    let (b1, b2) = (bound_greedy_curvature(&run)?, bound_top_h(&run)?);
    let classic = obj.mode() == Mode::String || bound_classic() <= ratio + TOL;
    let telescoping = telescoping_residual(obj, &run.sequence) <= TOL && telescoping_residual(obj, &opt_seq) <= TOL;
    Ok(classic && b1 <= ratio + TOL && b2 <= ratio + TOL && b2 >= b1 - TOL && telescoping)
}

fn submodular_bounds() -> Result<String> {
    let mut passed = 0;
    for s in 0..20u64 {
        let zeta = if s % 2 == 0 { 0.0 } else { 0.1 };
        let scenario = build_reduced_scenario(1000 + s, 12, 3, 0.1 + 0.07 * s as f64, zeta)?;
        ensure!(scenario.feasible.len() <= 12 && scenario.horizon == 3);
        let ok = check_instance(&CoverageObjective::new(scenario)?)?;
        ensure!(ok, "reduced scenario {s} violates a bound");
        passed += 1;
    }
    for s in 0..20u64 {
        let mode = if s % 2 == 0 { Mode::Set } else { Mode::String };
        let ok = check_instance(&random_coverage_toy(2000 + s, mode, false, mode == Mode::String))?;
        ensure!(ok, "toy {s} violates a bound");
        passed += 1;
    }
    Ok(format!("{passed}/40 instances"))
}

fn greedy_as_adp() -> Result<String> {
    let mut worst: f64 = 0.0;
    for s in 0..10u64 {
        let obj = random_coverage_toy(3000 + s, Mode::String, true, false);
        let problem = SubmodMdp(&obj);
        let eps = epsilons_exhaustive(&problem, &GreedyScheme)?;
        let report = assemble_bound(&problem, &GreedyScheme, eps, 2, s)?;
        let v_bar = top_h_value(&greedy(&obj)?)?;
        let gap = (report.bound - v_bar).abs();
        worst = worst.max(gap);
        ensure!(gap <= 1e-12, "instance {s}: bound {} vs top-H {v_bar}", report.bound);
    }
    Ok(format!("10/10 instances, max |bound - V_bar| = {worst:.1e}"))
}

fn determinism() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut compared = 0;
    for kind in [Kind::OracleValidate, Kind::LqgBounds, Kind::CoverageSweep] {
        let cfg = desk();
        let a = adp_cli::run(kind, &cfg, &dir.path().join(format!("{kind}-1")))?;
        let b = adp_cli::run(kind, &cfg, &dir.path().join(format!("{kind}-2")))?;
        for (fa, fb) in a.files.iter().zip(&b.files) {
            ensure!(std::fs::read(fa)? == std::fs::read(fb)?, "{} differs between runs", fa.display());
            compared += 1;
        }
    }
    let problem = LqgProblem::new(RobotModel::reference());
    let sol = riccati_solve(problem.model())?;
    ensure!(rollout(&problem, &sol.policy(), 9)? == rollout(&problem, &sol.policy(), 9)?);
    Ok(format!("{compared} output files byte-identical across reruns"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, u64); 8] = [
        ("1 bound validity on random finite MDPs", oracle_validation, 60),
        ("2 Riccati correctness", riccati_correctness, 60),
        ("3 LQG bound reproduction", lqg_bounds, 600),
        ("4 closed-form cross-checks", closed_form_cross_checks, 120),
        ("5 coverage bound sweep", coverage_sweep, 600),
        ("6 submodular bound validity", submodular_bounds, 180),
        ("7 greedy as ADP", greedy_as_adp, 60),
        ("8 determinism", determinism, u64::MAX),
    ];
    let mut failures = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(limit);
        match result {
            Ok(detail) if !over => println!("PASS criterion {name}: {detail} [{:.1}s]", elapsed.as_secs_f64()),
            Ok(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail}, but took {:.1}s (limit {limit}s)", elapsed.as_secs_f64());
            }
            Err(e) => {
                failures += 1;
                println!("FAIL criterion {name}: {e:#} [{:.1}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
