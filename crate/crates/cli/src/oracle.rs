use std::path::Path;

use adp_core::bound::{assemble_bound, epsilons_exhaustive, TabularScheme};
use adp_core::horizon::{DiscreteMdp, MdpDims, RandomMdpSpec};
use adp_core::{seed, AdpScheme, Direction};
use anyhow::{Context, Result};
use rand::Rng as _;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::{write_csv, Outcome};

/// One scheme on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub instance: usize,
    pub direction: Direction,
    pub dims: MdpDims,
    pub scheme: String,
    pub v_star: f64,
    pub q_hat_0: f64,
    pub eps_sum: f64,
    pub bound: f64,
    pub v_hat: f64,
    pub v_hat_stderr: f64,
    /// Distance of the bound from `V*` on its certified side.
    pub slack: f64,
    pub valid: bool,
}

impl OracleRow {
    pub const HEADER: [&'static str; 14] = [
        "instance", "direction", "states", "actions", "horizon", "scheme", "v_star", "q_hat_0",
        "eps_sum", "bound", "v_hat", "v_hat_stderr", "slack", "valid",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.instance.to_string(),
            self.direction.to_string(),
            self.dims.states.to_string(),
            self.dims.actions.to_string(),
            self.dims.horizon.to_string(),
            self.scheme.clone(),
            self.v_star.to_string(),
            self.q_hat_0.to_string(),
            self.eps_sum.to_string(),
            self.bound.to_string(),
            self.v_hat.to_string(),
            self.v_hat_stderr.to_string(),
            self.slack.to_string(),
            self.valid.to_string(),
        ]
    }
}

/// Relative tolerance for bound validity and exactness checks.
pub const ORACLE_TOL: f64 = 1e-9;

/// A random instance; odd instances are minimisation problems built by
/// negating the rewards of a maximisation instance.
pub fn random_instance(cfg: &ExperimentConfig, i: usize) -> Result<DiscreteMdp> {
    let o = &cfg.oracle;
    let instance_seed = seed::derive(cfg.seed, i as u64);
    let mut rng = seed::rng(instance_seed);
    let spec = RandomMdpSpec {
        dims: MdpDims {
            states: rng.gen_range(2..=o.max_states),
            actions: rng.gen_range(2..=o.max_actions),
            horizon: rng.gen_range(2..=o.max_horizon),
        },
        direction: Direction::Maximize,
        restrict_actions: rng.gen_bool(0.5),
    };
    let mdp = DiscreteMdp::random(spec, seed::derive(instance_seed, 1))?;
    Ok(if i % 2 == 1 { mdp.negated() } else { mdp })
}

fn check_scheme<S: AdpScheme<DiscreteMdp>>(
    mdp: &DiscreteMdp,
    scheme: &S,
    name: String,
    instance: usize,
    v_star: f64,
    n_rollouts: usize,
    rollout_seed: u64,
) -> Result<OracleRow> {
    let eps = epsilons_exhaustive(mdp, scheme)?;
    let report = assemble_bound(mdp, scheme, eps, n_rollouts, rollout_seed)?;
    let slack = match report.direction {
        Direction::Maximize => report.bound - v_star,
        Direction::Minimize => v_star - report.bound,
    };
    let mut valid = report.certifies(v_star, ORACLE_TOL);
    if name == "exact" {
        valid &= (report.bound - v_star).abs() <= ORACLE_TOL * v_star.abs().max(1.0);
    }
    Ok(OracleRow {
        instance,
        direction: report.direction,
        dims: mdp.dims(),
        scheme: name,
        v_star,
        q_hat_0: report.q_hat_0,
        eps_sum: report.epsilons.iter().sum(),
        bound: report.bound,
        v_hat: report.v_hat.mean,
        v_hat_stderr: report.v_hat.std_error,
        slack,
        valid,
    })
}

/// Exact, greedy and noisy schemes on one instance.
pub fn validate_instance(cfg: &ExperimentConfig, mdp: &DiscreteMdp, instance: usize) -> Result<Vec<OracleRow>> {
    let sol = mdp.solve_exact();
    let v_star = sol.value();
    let n = cfg.oracle.n_rollouts;
    let base = seed::derive(seed::derive(cfg.seed, instance as u64), 2);
    let mut rows = vec![
        check_scheme(mdp, &TabularScheme::exact(mdp, &sol), "exact".into(), instance, v_star, n, base)?,
        check_scheme(mdp, &TabularScheme::greedy(mdp), "greedy".into(), instance, v_star, n, base)?,
    ];
    for (j, sigma) in cfg.oracle.noise_scales.iter().enumerate() {
        let scheme = TabularScheme::noisy(mdp, &sol, *sigma, seed::derive(base, j as u64 + 1));
        rows.push(check_scheme(mdp, &scheme, format!("noisy-{sigma}"), instance, v_star, n, base)?);
    }
    Ok(rows)
}

pub fn run_oracle_validate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let instances: Vec<DiscreteMdp> = match &cfg.oracle.mdp_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            vec![DiscreteMdp::from_text(&text).with_context(|| format!("parsing {}", path.display()))?]
        }
        None => (0..cfg.oracle.instances)
            .map(|i| random_instance(cfg, i))
            .collect::<Result<_>>()?,
    };
    let rows: Vec<OracleRow> = instances
        .par_iter()
        .enumerate()
        .map(|(i, mdp)| validate_instance(cfg, mdp, i))
        .collect::<Result<Vec<_>>>()
        .context("oracle validation")?
        .into_iter()
        .flatten()
        .collect();

    let passes = rows.iter().filter(|r| r.valid).count();
    let worst = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let exact_err = rows
        .iter()
        .filter(|r| r.scheme == "exact")
        .map(|r| (r.bound - r.v_star).abs())
        .fold(0.0, f64::max);
    let csv_path = out.join("oracle_validate.csv");
    write_csv(&csv_path, &OracleRow::HEADER, rows.iter().map(OracleRow::record))?;
    let summary = format!(
        "instances          {}\nscheme runs        {}\nbound valid        {passes}/{}\nworst slack        {worst}\nexact max |V̄-V*|   {exact_err}\n",
        instances.len(),
        rows.len(),
        rows.len(),
    );
    std::fs::write(out.join("oracle_summary.txt"), &summary)?;
    Ok(Outcome {
        passed: passes == rows.len(),
        summary,
        files: vec![csv_path, out.join("oracle_summary.txt")],
    })
}
