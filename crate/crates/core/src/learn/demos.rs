use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::LearnError;
use crate::lqg::{RiccatiSolution, Vector};
use crate::seed;

/// How stepwise-error labels are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaLabels {
    /// Gaussian expectation of the quadratic `Q*_k(z', -K_k z')`.
    ClosedForm,
    /// Sample mean over `draws` successor states.
    Sampled { draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// `W*_{k+1}(z_k, u_k)` for stages `k = 0..H-1`.
    Evtg,
    /// `Q*_0(z_0, u_0)`.
    QZero,
    /// `δ_k(z_{k-1}, u_{k-1})` for `k = 1..H-1`.
    Delta(DeltaLabels),
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Evtg => f.write_str("evtg"),
            LabelKind::QZero => f.write_str("q0"),
            LabelKind::Delta(DeltaLabels::ClosedForm) => f.write_str("delta"),
            LabelKind::Delta(DeltaLabels::Sampled { draws }) => write!(f, "delta-sampled-{draws}"),
        }
    }
}

impl FromStr for LabelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "evtg" => Ok(LabelKind::Evtg),
            "q0" => Ok(LabelKind::QZero),
            "delta" => Ok(LabelKind::Delta(DeltaLabels::ClosedForm)),
            _ => s
                .strip_prefix("delta-sampled-")
                .and_then(|d| d.parse().ok())
                .map(|draws| LabelKind::Delta(DeltaLabels::Sampled { draws }))
                .ok_or_else(|| format!("unknown label kind `{s}`")),
        }
    }
}

/// Demonstration generation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub n_traj: usize,
    /// Standard deviation of the isotropic Gaussian around `x_0` from which
    /// initial states are drawn.
    pub init_spread: f64,
    /// Standard deviation of Gaussian noise added to the *recorded* action.
    /// Trajectories always follow the optimal action; with zero jitter every
    /// record satisfies `u = -K_k z`.
    pub action_jitter: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_traj: 10_000,
            init_spread: 1.0,
            action_jitter: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRecord {
    /// `k` for `Ŵ_{k+1}` and `δ_k` records, `0` for `Q*_0` records.
    pub stage: usize,
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub label: f64,
}

impl DemoRecord {
    /// The stacked regression input `(z, u)`.
    pub fn input(&self) -> Vec<f64> {
        self.z.iter().chain(&self.mu).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub kind: LabelKind,
    /// One cluster per fitted function, in stage order.
    pub clusters: Vec<Vec<DemoRecord>>,
    pub config: DemoConfig,
}

impl DemoDataset {
    pub fn inputs(&self, cluster: usize) -> Vec<Vec<f64>> {
        self.clusters[cluster].iter().map(DemoRecord::input).collect()
    }

    pub fn labels(&self, cluster: usize) -> Vec<f64> {
        self.clusters[cluster].iter().map(|r| r.label).collect()
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `stage, z1..zN, mu1..muM, label, label_kind` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LearnError> {
        let csv_err = |e: csv::Error| LearnError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let (n, m) = self
            .clusters
            .iter()
            .flatten()
            .next()
            .map_or((0, 0), |r| (r.z.len(), r.mu.len()));
        let mut header = vec!["stage".to_string()];
        header.extend((1..=n).map(|i| format!("z{i}")));
        header.extend((1..=m).map(|i| format!("mu{i}")));
        header.push("label".into());
        header.push("label_kind".into());
        w.write_record(&header).map_err(csv_err)?;
        let kind = self.kind.to_string();
        for r in self.clusters.iter().flatten() {
            let mut row = vec![r.stage.to_string()];
            row.extend(r.z.iter().chain(&r.mu).map(f64::to_string));
            row.push(r.label.to_string());
            row.push(kind.clone());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| LearnError::Csv(e.to_string()))
    }

    /// Reads a dataset written by [`DemoDataset::write_csv`]. Records are
    /// grouped into clusters by their stage column. The generation settings
    /// are not stored and come back as defaults.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, LearnError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| LearnError::Csv(e.to_string()))?.clone();
        let n = header.iter().filter(|h| h.starts_with('z')).count();
        let m = header.iter().filter(|h| h.starts_with("mu")).count();
        if header.len() != n + m + 3 {
            return Err(LearnError::Parse {
                line: 1,
                message: "unexpected header".into(),
            });
        }
        let mut kind = None;
        let mut records: Vec<DemoRecord> = Vec::new();
        for (i, row) in r.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| LearnError::Csv(e.to_string()))?;
            let bad = |message: String| LearnError::Parse { line, message };
            let num = |j: usize| -> Result<f64, LearnError> {
                row[j].parse().map_err(|_| bad(format!("bad number `{}`", &row[j])))
            };
            let stage: usize = row[0].parse().map_err(|_| bad("bad stage".into()))?;
            let z = (1..=n).map(num).collect::<Result<Vec<_>, _>>()?;
            let mu = (n + 1..=n + m).map(num).collect::<Result<Vec<_>, _>>()?;
            let label = num(n + m + 1)?;
            let k: LabelKind = row[n + m + 2].parse().map_err(bad)?;
            if kind.is_some_and(|prev| prev != k) {
                return Err(bad("mixed label kinds".into()));
            }
            kind = Some(k);
            records.push(DemoRecord { stage, z, mu, label });
        }
        let kind = kind.ok_or(LearnError::Empty)?;
        let mut stages: Vec<usize> = records.iter().map(|r| r.stage).collect();
        stages.sort_unstable();
        stages.dedup();
        let clusters = stages
            .iter()
            .map(|s| records.iter().filter(|r| r.stage == *s).cloned().collect())
            .collect();
        Ok(Self {
            kind,
            clusters,
            config: DemoConfig::default(),
        })
    }
}

/// Closed-form `E[Q*_k(z', -K_k z') | z, u] - W*_k(z, u)` for `1 <= k <= H-1`.
pub fn delta_label_closed<const N: usize, const M: usize>(
    sol: &RiccatiSolution<N, M>,
    k: usize,
    z: &Vector<N>,
    mu: &Vector<M>,
) -> Result<f64, LearnError> {
    let h = sol.horizon();
    if k == 0 || k >= h {
        return Err(crate::lqg::LqgError::StageOutOfRange {
            stage: k,
            min: 1,
            max: h - 1,
        }
        .into());
    }
    let model = sol.model();
    let gain = &sol.k[k];
    let closed = model.a - model.b * gain;
    let p_next = &sol.p[k + 1];
    let quad = model.q + gain.transpose() * model.r * gain + closed.transpose() * p_next * closed;
    let offset = (p_next * model.noise_cov).trace() + sol.c[k + 1];
    let mean = model.mean_next(z, mu);
    let expected = (mean.transpose() * quad * mean)[0] + (quad * model.noise_cov).trace() + offset;
    Ok(expected - sol.evtg_exact(k, z, mu)?)
}

/// Sample-mean estimate of the same label over `draws` successor states,
/// with its standard error.
pub fn delta_label_sampled<const N: usize, const M: usize>(
    sol: &RiccatiSolution<N, M>,
    k: usize,
    z: &Vector<N>,
    mu: &Vector<M>,
    draws: usize,
    rng: &mut seed::Rng,
) -> Result<(f64, f64), LearnError> {
    if draws < 2 {
        return Err(LearnError::Invalid("at least two draws are needed".into()));
    }
    let model = sol.model();
    let mean = model.mean_next(z, mu);
    let samples = (0..draws)
        .map(|_| {
            let next = mean + model.sample_noise(rng);
            sol.q_exact(k, &next, &sol.action(k, &next))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let est = crate::horizon::ValueEstimate::from_samples(&samples)
        .map_err(|e| LearnError::Invalid(e.to_string()))?;
    Ok((est.mean - sol.evtg_exact(k, z, mu)?, est.std_error))
}

const LABEL_STREAM: u64 = 0x6c61_6265_6c73;

/// Rolls out `n_traj` optimal trajectories and labels the visited
/// state-action pairs.
pub fn generate_demos<const N: usize, const M: usize>(
    sol: &RiccatiSolution<N, M>,
    kind: LabelKind,
    config: DemoConfig,
) -> Result<DemoDataset, LearnError> {
    if config.n_traj == 0 {
        return Err(LearnError::Invalid("n_traj must be positive".into()));
    }
    for (name, v) in [("init_spread", config.init_spread), ("action_jitter", config.action_jitter)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(LearnError::Invalid(format!("{name} must be non-negative, got {v}")));
        }
    }
    if let LabelKind::Delta(DeltaLabels::Sampled { draws }) = kind {
        if draws < 2 {
            return Err(LearnError::Invalid("at least two draws are needed".into()));
        }
    }
    let model = sol.model();
    let h = sol.horizon();
    let clusters_len = match kind {
        LabelKind::Evtg => h,
        LabelKind::QZero => 1,
        LabelKind::Delta(_) => h - 1,
    };
    let label_seed = seed::derive(config.seed, LABEL_STREAM);

    let per_traj = (0..config.n_traj)
        .into_par_iter()
        .map(|i| -> Result<Vec<DemoRecord>, LearnError> {
            let mut rng = seed::child_rng(config.seed, i as u64);
            let mut label_rng = seed::child_rng(label_seed, i as u64);
            let gauss = |rng: &mut seed::Rng| -> f64 { StandardNormal.sample(rng) };
            let mut z = model.z_initial();
            for j in 0..N {
                z[j] += config.init_spread * gauss(&mut rng);
            }
            let mut out = Vec::with_capacity(clusters_len);
            let mut previous: Option<(Vector<N>, Vector<M>)> = None;
            for k in 0..h {
                let optimal = sol.action(k, &z);
                let mut recorded = optimal;
                for j in 0..M {
                    recorded[j] += config.action_jitter * gauss(&mut rng);
                }
                let record = |stage: usize, z: &Vector<N>, mu: &Vector<M>, label: f64| DemoRecord {
                    stage,
                    z: z.as_slice().to_vec(),
                    mu: mu.as_slice().to_vec(),
                    label,
                };
                match kind {
                    LabelKind::Evtg => {
                        out.push(record(k, &z, &recorded, sol.evtg_exact(k + 1, &z, &recorded)?));
                    }
                    LabelKind::QZero if k == 0 => {
                        out.push(record(0, &z, &recorded, sol.q_exact(0, &z, &recorded)?));
                    }
                    LabelKind::QZero => {}
                    LabelKind::Delta(mode) => {
                        if let Some((zp, up)) = &previous {
                            let label = match mode {
                                DeltaLabels::ClosedForm => delta_label_closed(sol, k, zp, up)?,
                                DeltaLabels::Sampled { draws } => {
                                    delta_label_sampled(sol, k, zp, up, draws, &mut label_rng)?.0
                                }
                            };
                            out.push(record(k, zp, up, label));
                        }
                        previous = Some((z, recorded));
                    }
                }
                if kind == LabelKind::QZero {
                    break;
                }
                let w = model.sample_noise(&mut rng);
                z = model.mean_next(&z, &optimal) + w;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut clusters: Vec<Vec<DemoRecord>> = (0..clusters_len)
        .map(|_| Vec::with_capacity(config.n_traj))
        .collect();
    for records in per_traj {
        for (c, r) in records.into_iter().enumerate() {
            clusters[c].push(r);
        }
    }
    Ok(DemoDataset {
        kind,
        clusters,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg::{riccati_solve, Mat, RobotModel};

    fn config(n: usize) -> DemoConfig {
        DemoConfig {
            n_traj: n,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn cluster_shapes() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        let evtg = generate_demos(&sol, LabelKind::Evtg, config(50)).unwrap();
        assert_eq!(evtg.clusters.len(), 10);
        assert!(evtg.clusters.iter().all(|c| c.len() == 50));
        let q0 = generate_demos(&sol, LabelKind::QZero, config(50)).unwrap();
        assert_eq!(q0.clusters.len(), 1);
        let delta = generate_demos(&sol, LabelKind::Delta(DeltaLabels::ClosedForm), config(50)).unwrap();
        assert_eq!(delta.clusters.len(), 9);
        assert_eq!(delta.clusters[0][0].stage, 1);
        // The same trajectories underlie every label kind.
        assert_eq!(evtg.clusters[0][3].z, q0.clusters[0][3].z);
        assert_eq!(evtg.clusters[4][7].z, delta.clusters[4][7].z);
        assert_eq!(evtg.clusters[4][7].mu, delta.clusters[4][7].mu);
    }

    #[test]
    fn labels_are_exact() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        let data = generate_demos(&sol, LabelKind::Evtg, config(20)).unwrap();
        for r in data.clusters.iter().flatten() {
            let z = Vector::<4>::from_column_slice(&r.z);
            let mu = Vector::<2>::from_column_slice(&r.mu);
            assert_eq!(r.label, sol.evtg_exact(r.stage + 1, &z, &mu).unwrap());
        }
    }

    #[test]
    fn unjittered_actions_follow_the_gain() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        let cfg = DemoConfig {
            action_jitter: 0.0,
            ..config(20)
        };
        let data = generate_demos(&sol, LabelKind::Evtg, cfg).unwrap();
        for r in data.clusters.iter().flatten() {
            let z = Vector::<4>::from_column_slice(&r.z);
            let u = sol.action(r.stage, &z);
            for j in 0..2 {
                assert!((r.mu[j] - u[j]).abs() <= 1e-9 * u[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn noise_free_demos_coincide() {
        let model = RobotModel::reference().with_noise(Mat::zeros()).unwrap();
        let sol = riccati_solve(&model).unwrap();
        let cfg = DemoConfig {
            init_spread: 0.0,
            action_jitter: 0.0,
            ..config(5)
        };
        let data = generate_demos(&sol, LabelKind::Evtg, cfg).unwrap();
        for cluster in &data.clusters {
            assert!(cluster.iter().all(|r| r == &cluster[0]));
        }
    }

    #[test]
    fn closed_form_delta_vanishes() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        let data = generate_demos(&sol, LabelKind::Delta(DeltaLabels::ClosedForm), config(20)).unwrap();
        let q0 = generate_demos(&sol, LabelKind::QZero, config(20)).unwrap();
        let scale = q0.labels(0).iter().fold(0.0f64, |a, l| a.max(l.abs()));
        for r in data.clusters.iter().flatten() {
            assert!(r.label.abs() < 1e-9 * scale, "{}", r.label);
        }
    }

    #[test]
    fn deterministic_and_csv_round_trip() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        let kind = LabelKind::Delta(DeltaLabels::Sampled { draws: 20 });
        let a = generate_demos(&sol, kind, config(30)).unwrap();
        let b = generate_demos(&sol, kind, config(30)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("stage,z1,z2,z3,z4,mu1,mu2,label,label_kind\n"));
        let back = DemoDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.kind, a.kind);
        assert_eq!(back.clusters, a.clusters);
    }

    #[test]
    fn invalid_settings() {
        let sol = riccati_solve(&RobotModel::reference()).unwrap();
        assert!(generate_demos(&sol, LabelKind::Evtg, config(0)).is_err());
        let cfg = DemoConfig {
            init_spread: -1.0,
            ..config(3)
        };
        assert!(generate_demos(&sol, LabelKind::Evtg, cfg).is_err());
        let z = Vector::<4>::zeros();
        let u = Vector::<2>::zeros();
        assert!(delta_label_closed(&sol, 0, &z, &u).is_err());
        assert!(delta_label_closed(&sol, 10, &z, &u).is_err());
    }
}
