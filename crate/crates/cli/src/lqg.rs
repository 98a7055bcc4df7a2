use std::fmt::Write as _;
use std::path::Path;

use adp_core::bound::{epsilon_continuous, SchemePolicy, SearchSettings};
use adp_core::horizon::estimate_value;
use adp_core::learn::{
    build_error_model, fit_quadratic, generate_demos, scheme_delta, DeltaLabels, DemoConfig, LabelKind,
    QuadraticModel, QuadraticScheme,
};
use adp_core::lqg::{riccati_solve, LqgProblem, RobotModel, RobotParams, Vector};
use adp_core::{seed, AdpScheme};
use anyhow::{anyhow, Context, Result};
use rand_distr::{Distribution, StandardNormal};

use crate::config::{BoundSource, DeltaMode, ExperimentConfig, LqgConfig};
use crate::{write_csv, Outcome};

pub const ORDER_TOL: f64 = 1e-9;

const TEST_STREAM: u64 = 0x7465_7374;
const ROLLOUT_STREAM: u64 = 0x726f_6c6c;
const SEARCH_STREAM: u64 = 0x7365_6172;

pub fn robot_model(l: &LqgConfig) -> Result<RobotModel> {
    let arr4 = |v: &[f64]| -> [f64; 4] { [v[0], v[1], v[2], v[3]] };
    let params = RobotParams {
        mass: l.mass,
        step: l.step,
        horizon: l.horizon,
        x_initial: arr4(&l.x0),
        x_target: arr4(&l.xf),
        diag_q: arr4(&l.diag_q),
        diag_r: [l.diag_r[0], l.diag_r[1]],
        diag_q_final: arr4(&l.diag_qf),
        diag_sigma: arr4(&l.diag_sigma),
    };
    Ok(RobotModel::double_integrator(&params)?)
}

/// One test state of the LQG experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgRow {
    pub test_id: usize,
    pub v_star: f64,
    pub v_hat: f64,
    pub v_hat_stderr: f64,
    pub v_lower: f64,
    pub true_ratio: f64,
    pub est_ratio: f64,
}

impl LqgRow {
    pub const HEADER: [&'static str; 7] =
        ["test_id", "v_star", "v_hat", "v_hat_stderr", "v_lower", "true_ratio", "est_ratio"];

    fn record(&self) -> Vec<String> {
        vec![
            self.test_id.to_string(),
            self.v_star.to_string(),
            self.v_hat.to_string(),
            self.v_hat_stderr.to_string(),
            self.v_lower.to_string(),
            self.true_ratio.to_string(),
            self.est_ratio.to_string(),
        ]
    }

    /// `V̲ <= V* <= V̂ + 3·stderr`, the first up to a relative rounding
    /// tolerance since exact labels make `V̲` equal to `V*` in exact arithmetic.
    pub fn ordered(&self) -> bool {
        self.v_lower <= self.v_star + ORDER_TOL * self.v_star.abs()
            && self.v_star <= self.v_hat + 3.0 * self.v_hat_stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqgResult {
    pub rows: Vec<LqgRow>,
    pub epsilons: Vec<f64>,
    pub mean_true_ratio: f64,
    pub mean_est_ratio: f64,
    /// Largest `|label|` of the `Q*_0` and `δ_k` training sets.
    pub q0_label_scale: f64,
    pub delta_label_scale: f64,
    pub fit_mse: Vec<f64>,
    pub fallback_stages: Vec<usize>,
}

pub fn lqg_experiment(cfg: &ExperimentConfig) -> Result<LqgResult> {
    let l = &cfg.lqg;
    let model = robot_model(l).context("model")?;
    let sol = riccati_solve(&model).context("riccati")?;
    let demo = DemoConfig {
        n_traj: l.n_traj,
        init_spread: l.init_spread,
        action_jitter: l.action_jitter,
        seed: cfg.seed,
    };
    let delta_kind = LabelKind::Delta(match l.delta_labels {
        DeltaMode::Closed => DeltaLabels::ClosedForm,
        DeltaMode::Sampled => DeltaLabels::Sampled { draws: l.delta_draws },
    });
    let evtg = generate_demos(&sol, LabelKind::Evtg, demo).context("demos")?;
    let (scheme, fit_mse) = QuadraticScheme::fit(&model, &evtg, l.ridge).context("scheme fit")?;
    drop(evtg);
    let q0_data = generate_demos(&sol, LabelKind::QZero, demo).context("demos")?;
    let delta_data = generate_demos(&sol, delta_kind, demo).context("demos")?;
    let scale = |v: Vec<f64>| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let q0_label_scale = scale(q0_data.labels(0));
    let delta_label_scale = (0..delta_data.clusters.len())
        .map(|c| scale(delta_data.labels(c)))
        .fold(0.0, f64::max);

    let h = model.horizon;
    let (deltas, q0): (Vec<QuadraticModel>, Option<QuadraticModel>) = match l.bound_source {
        BoundSource::Surrogate => {
            let deltas = (0..h - 1)
                .map(|c| fit_quadratic(&delta_data.inputs(c), &delta_data.labels(c), l.ridge).map(|f| f.model))
                .collect::<Result<Vec<_>, _>>()
                .context("delta fit")?;
            let q0 = fit_quadratic(&q0_data.inputs(0), &q0_data.labels(0), l.ridge).context("q0 fit")?;
            (deltas, Some(q0.model))
        }
        BoundSource::Scheme => {
            let deltas = (1..h)
                .map(|k| scheme_delta(&scheme, &model, k))
                .collect::<Result<Vec<_>, _>>()
                .context("scheme delta")?;
            (deltas, None)
        }
    };
    let errors = build_error_model(deltas, &delta_data, l.margin).context("error model")?;
    let epsilons = (1..h)
        .map(|k| {
            let settings = SearchSettings {
                starts: l.multistart,
                seed: seed::derive(seed::derive(cfg.seed, SEARCH_STREAM), k as u64),
                ..Default::default()
            };
            epsilon_continuous(&errors, k, settings)
        })
        .collect::<Result<Vec<_>, _>>()
        .context("epsilon search")?;
    let eps_sum: f64 = epsilons.iter().sum();

    let problem = LqgProblem::new(model.clone());
    let mut rng = seed::child_rng(cfg.seed, TEST_STREAM);
    let tests: Vec<Vector<4>> = (0..l.n_test_states)
        .map(|_| model.z_initial() + Vector::<4>::from_fn(|_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let rows = tests
        .iter()
        .enumerate()
        .map(|(i, z)| -> Result<LqgRow> {
            let v_star = sol.value_to_go(0, z)?;
            let p = problem.with_initial(*z);
            let rollout_seed = seed::derive(seed::derive(cfg.seed, ROLLOUT_STREAM), i as u64);
            let est = estimate_value(&p, &SchemePolicy(&scheme), l.n_rollouts, rollout_seed)?;
            let q_hat_0 = match &q0 {
                Some(q0) => q0
                    .min_over_tail(z.as_slice())
                    .ok_or_else(|| anyhow!("fitted Q_0 is not convex in the action"))?
                    .1,
                None => scheme.q_hat(&p, 0, z, &scheme.act(&p, 0, z)),
            };
            let v_lower = q_hat_0 + eps_sum;
            Ok(LqgRow {
                test_id: i,
                v_star,
                v_hat: est.mean,
                v_hat_stderr: est.std_error,
                v_lower,
                true_ratio: est.mean / v_star,
                est_ratio: est.mean / v_lower,
            })
        })
        .collect::<Result<Vec<_>>>()
        .context("test states")?;
    let n = rows.len() as f64;
    Ok(LqgResult {
        mean_true_ratio: rows.iter().map(|r| r.true_ratio).sum::<f64>() / n,
        mean_est_ratio: rows.iter().map(|r| r.est_ratio).sum::<f64>() / n,
        rows,
        epsilons,
        q0_label_scale,
        delta_label_scale,
        fit_mse,
        fallback_stages: scheme.fallback_stages().to_vec(),
    })
}

pub fn run_lqg_bounds(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let result = lqg_experiment(cfg)?;
    let csv_path = out.join("lqg_bounds.csv");
    write_csv(&csv_path, &LqgRow::HEADER, result.rows.iter().map(LqgRow::record))?;
    let ordered = result.rows.iter().filter(|r| r.ordered()).count();
    let mut summary = String::new();
    let l = &cfg.lqg;
    let _ = writeln!(summary, "test states        {}", result.rows.len());
    let _ = writeln!(summary, "trajectories       {}", l.n_traj);
    let _ = writeln!(summary, "bound source       {}", l.bound_source);
    let _ = writeln!(summary, "delta labels       {}", l.delta_labels);
    let _ = writeln!(summary, "ridge              {}", l.ridge);
    let _ = writeln!(summary, "search margin      {}", l.margin);
    let _ = writeln!(summary, "ordered rows       {ordered}/{}", result.rows.len());
    let _ = writeln!(summary, "mean true ratio    {}", result.mean_true_ratio);
    let _ = writeln!(summary, "mean est ratio     {}", result.mean_est_ratio);
    let _ = writeln!(summary, "sum eps            {}", result.epsilons.iter().sum::<f64>());
    for (k, e) in result.epsilons.iter().enumerate() {
        let _ = writeln!(summary, "eps_{:<14} {e}", k + 1);
    }
    let _ = writeln!(summary, "max |Q0 label|     {}", result.q0_label_scale);
    let _ = writeln!(summary, "max |delta label|  {}", result.delta_label_scale);
    if !result.fallback_stages.is_empty() {
        let _ = writeln!(summary, "search fallback    {:?}", result.fallback_stages);
    }
    let summary_path = out.join("lqg_summary.txt");
    std::fs::write(&summary_path, &summary)?;
    Ok(Outcome {
        passed: ordered == result.rows.len(),
        summary,
        files: vec![csv_path, summary_path],
    })
}
