//! Small objectives for tests and validation runs.

use super::{Mode, SubmodError, SubmodObjective};

/// `f(S) = Σ_{s ∈ S} w_s`; in string mode repeats count again.
#[derive(Debug, Clone, PartialEq)]
pub struct Modular {
    weights: Vec<f64>,
    horizon: usize,
    mode: Mode,
}

impl Modular {
    pub fn new(weights: Vec<f64>, horizon: usize, mode: Mode) -> Result<Self, SubmodError> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SubmodError::Invalid("weights must be finite and non-negative".into()));
        }
        Ok(Self { weights, horizon, mode })
    }
}

impl SubmodObjective for Modular {
    fn mode(&self) -> Mode {
        self.mode
    }
    fn ground_size(&self) -> usize {
        self.weights.len()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn evaluate(&self, seq: &[usize]) -> f64 {
        match self.mode {
            Mode::String => seq.iter().map(|s| self.weights[*s]).sum(),
            Mode::Set => {
                let mut seen = vec![false; self.weights.len()];
                let mut total = 0.0;
                for s in seq {
                    if !seen[*s] {
                        seen[*s] = true;
                        total += self.weights[*s];
                    }
                }
                total
            }
        }
    }
}

/// `f(S) = |S|²`, monotone but supermodular.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareCardinality {
    ground: usize,
    horizon: usize,
    mode: Mode,
}

impl SquareCardinality {
    pub fn new(ground: usize, horizon: usize, mode: Mode) -> Self {
        Self { ground, horizon, mode }
    }
}

impl SubmodObjective for SquareCardinality {
    fn mode(&self) -> Mode {
        self.mode
    }
    fn ground_size(&self) -> usize {
        self.ground
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn evaluate(&self, seq: &[usize]) -> f64 {
        let mut distinct = seq.to_vec();
        if self.mode == Mode::Set {
            distinct.sort_unstable();
            distinct.dedup();
        }
        (distinct.len() as f64).powi(2)
    }
}

/// Weighted probabilistic coverage:
/// `f(S) = Σ_i w_i [1 - Π_k (1 - decay_k · p(s_k, i))]`.
///
/// With `decay` non-increasing in `[0, 1]` this is monotone string
/// submodular; with constant decay it is a set function.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticCoverage {
    detect: Vec<Vec<f64>>,
    weights: Vec<f64>,
    decay: Vec<f64>,
    mode: Mode,
}

impl ProbabilisticCoverage {
    pub fn new(
        detect: Vec<Vec<f64>>,
        weights: Vec<f64>,
        decay: Vec<f64>,
        mode: Mode,
    ) -> Result<Self, SubmodError> {
        let items = weights.len();
        if detect.iter().any(|row| row.len() != items) {
            return Err(SubmodError::Invalid("detection rows must cover every item".into()));
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !detect.iter().flatten().all(unit) || !decay.iter().all(unit) {
            return Err(SubmodError::Invalid("probabilities must lie in [0, 1]".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SubmodError::Invalid("weights must be finite and non-negative".into()));
        }
        if decay.windows(2).any(|w| w[1] > w[0]) {
            return Err(SubmodError::Invalid("decay must be non-increasing".into()));
        }
        if mode == Mode::Set && decay.windows(2).any(|w| w[1] != w[0]) {
            return Err(SubmodError::Invalid("set mode needs a constant decay".into()));
        }
        Ok(Self {
            detect,
            weights,
            decay,
            mode,
        })
    }

    /// Deterministic weighted set cover: element `e` covers the items in
    /// `sets[e]`. An empty set is a null element.
    pub fn sets(sets: &[Vec<usize>], weights: Vec<f64>, horizon: usize, mode: Mode) -> Result<Self, SubmodError> {
        let detect = sets
            .iter()
            .map(|s| (0..weights.len()).map(|i| if s.contains(&i) { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(detect, weights, vec![1.0; horizon], mode)
    }
}

impl SubmodObjective for ProbabilisticCoverage {
    fn mode(&self) -> Mode {
        self.mode
    }
    fn ground_size(&self) -> usize {
        self.detect.len()
    }
    fn horizon(&self) -> usize {
        self.decay.len()
    }
    fn evaluate(&self, seq: &[usize]) -> f64 {
        let mut seq = seq.to_vec();
        if self.mode == Mode::Set {
            seq.sort_unstable();
            seq.dedup();
        }
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let miss: f64 = seq
                    .iter()
                    .enumerate()
                    .map(|(k, s)| 1.0 - self.decay[k] * self.detect[*s][i])
                    .product();
                w * (1.0 - miss)
            })
            .sum()
    }
}
