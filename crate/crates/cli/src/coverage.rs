use std::fmt::Write as _;
use std::path::Path;

use adp_core::coverage::{quadrant_density, sweep_bounds, MissionScenario, SweepRow};
use adp_core::seed;
use anyhow::{bail, Context, Result};
use rand::seq::index;

use crate::config::{CoverageConfig, ExperimentConfig};
use crate::{write_csv, Outcome};

const FEASIBLE_STREAM: u64 = 0x6665_6173;

/// The sweep template: density grid, time step, horizon and the feasible
/// set. `λ₀` and `ζ` are overwritten per grid point.
pub fn scenario_template(c: &CoverageConfig, master_seed: u64) -> Result<MissionScenario> {
    let mut s = match &c.grid_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut s = MissionScenario::from_grid_text(&text).context("grid file")?;
            s.horizon = c.horizon;
            s
        }
        None => MissionScenario::new(
            c.width,
            c.height,
            quadrant_density(c.width, c.height, master_seed),
            c.horizon,
            c.lambda0[0],
            0.0,
        )
        .context("scenario")?,
    };
    s.time_step = c.time_step;
    s.validate().context("scenario")?;
    if c.stride > 1 {
        s = s.with_stride(c.stride).context("stride")?;
    }
    if c.feasible_points > 0 {
        let n = s.feasible.len();
        if c.feasible_points > n {
            bail!("feasible_points = {} exceeds the {n} available points", c.feasible_points);
        }
        let mut rng = seed::child_rng(master_seed, FEASIBLE_STREAM);
        let mut picked: Vec<usize> = index::sample(&mut rng, n, c.feasible_points)
            .into_iter()
            .map(|i| s.feasible[i])
            .collect();
        picked.sort_unstable();
        s = s.with_feasible(picked).context("feasible subset")?;
    }
    Ok(s)
}

/// Both panels, `ζ` outermost.
pub fn coverage_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let c = &cfg.coverage;
    let template = scenario_template(c, cfg.seed)?;
    let budget = (c.brute_force_budget > 0).then_some(c.brute_force_budget);
    let mut rows = Vec::new();
    for &zeta in &c.zeta {
        let t = template.with_zeta(zeta).context("scenario")?;
        rows.extend(sweep_bounds(&t, &c.lambda0, budget).context("sweep")?);
    }
    Ok(rows)
}

/// `β₂ ≥ β₁`, `β₂ ∈ (0, 1]`, and both below the true ratio when known.
pub fn row_holds(r: &SweepRow) -> bool {
    const TOL: f64 = 1e-12;
    let mut ok = r.beta2 >= r.beta1 - TOL && r.beta2 > 0.0 && r.beta2 <= 1.0 + TOL;
    if let Some(opt) = r.f_opt {
        let ratio = r.f_greedy / opt;
        ok &= r.beta1 <= ratio + TOL && r.beta2 <= ratio + TOL;
    }
    ok
}

pub fn run_coverage_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let rows = coverage_rows(cfg)?;
    let csv_path = out.join("coverage_sweep.csv");
    write_csv(&csv_path, &SweepRow::HEADER, rows.iter().map(SweepRow::record))?;
    let holding = rows.iter().filter(|r| row_holds(r)).count();
    let mut summary = String::new();
    let _ = writeln!(summary, "rows               {}", rows.len());
    let _ = writeln!(summary, "bound checks held  {holding}/{}", rows.len());
    for zeta in &cfg.coverage.zeta {
        let panel: Vec<&SweepRow> = rows.iter().filter(|r| r.zeta == *zeta).collect();
        if let Some(first) = panel.first() {
            let min = |f: fn(&SweepRow) -> f64| panel.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
            let max = |f: fn(&SweepRow) -> f64| panel.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                summary,
                "zeta {zeta} ({}): beta1 in [{}, {}], beta2 in [{}, {}]",
                first.mode,
                min(|r| r.beta1),
                max(|r| r.beta1),
                min(|r| r.beta2),
                max(|r| r.beta2)
            );
        }
    }
    for r in rows.iter().filter(|r| !row_holds(r)) {
        let _ = writeln!(summary, "violated: zeta {} lambda0 {} beta1 {} beta2 {}", r.zeta, r.lambda0, r.beta1, r.beta2);
    }
    let summary_path = out.join("coverage_summary.txt");
    std::fs::write(&summary_path, &summary)?;
    Ok(Outcome {
        passed: holding == rows.len(),
        summary,
        files: vec![csv_path, summary_path],
    })
}
