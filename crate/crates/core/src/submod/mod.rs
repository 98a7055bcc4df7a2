//! Greedy maximisation of monotone set and string submodular functions and
//! three lower bounds on the greedy-to-optimal ratio.
//!
//! Elements of the ground set are indices `0..ground_size()`. A sequence is
//! a `&[usize]`; in set mode it is read as the set of its entries.

mod embedding;
mod toys;

pub use embedding::{GreedyScheme, SubmodMdp};
pub use toys::{Modular, ProbabilisticCoverage, SquareCardinality};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubmodError {
    #[error("ground set is empty")]
    EmptyGround,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("set mode needs at least {horizon} elements, ground set has {ground}")]
    TooFewElements { ground: usize, horizon: usize },
    #[error("enumeration needs {count} evaluations, budget is {budget}")]
    BudgetExceeded { count: f64, budget: u64 },
    #[error("every singleton value is zero")]
    Degenerate,
    #[error("no greedy step after the first has an element with positive marginal gain")]
    NoPositiveMarginal,
    #[error("invalid objective: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Order-free selection of distinct elements.
    Set,
    /// Order-sensitive selection; elements may repeat.
    String,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Set => "set",
            Mode::String => "string",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "set" => Ok(Mode::Set),
            "string" => Ok(Mode::String),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

/// A normalised monotone objective over sequences of length at most `H`.
pub trait SubmodObjective: Sync {
    fn mode(&self) -> Mode;
    fn ground_size(&self) -> usize;
    fn horizon(&self) -> usize;
    /// `f(seq)`, with `f(()) = 0`.
    fn evaluate(&self, seq: &[usize]) -> f64;

    /// `f(prefix ⊕ s) - f(prefix)` for each candidate `s`.
    fn marginals(&self, prefix: &[usize], candidates: &[usize]) -> Vec<f64> {
        let base = self.evaluate(prefix);
        candidates
            .par_iter()
            .map(|s| {
                let mut seq = prefix.to_vec();
                seq.push(*s);
                self.evaluate(&seq) - base
            })
            .collect()
    }
}

fn check<O: SubmodObjective + ?Sized>(obj: &O) -> Result<(), SubmodError> {
    let n = obj.ground_size();
    let h = obj.horizon();
    if n == 0 {
        return Err(SubmodError::EmptyGround);
    }
    if h == 0 {
        return Err(SubmodError::ZeroHorizon);
    }
    if obj.mode() == Mode::Set && n < h {
        return Err(SubmodError::TooFewElements { ground: n, horizon: h });
    }
    Ok(())
}

/// Elements that may extend `prefix`.
pub fn feasible_extensions(mode: Mode, ground: usize, prefix: &[usize]) -> Vec<usize> {
    match mode {
        Mode::String => (0..ground).collect(),
        Mode::Set => (0..ground).filter(|s| !prefix.contains(s)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    pub mode: Mode,
    /// `g_0..g_{H-1}`
    pub sequence: Vec<usize>,
    /// `f(G_0)..f(G_{H-1})`
    pub values: Vec<f64>,
    /// Marginal gain of each greedy choice.
    pub marginals: Vec<f64>,
    /// `f(s)` for every element.
    pub singleton_values: Vec<f64>,
    /// Every candidate and its marginal gain, per step.
    pub steps: Vec<Vec<(usize, f64)>>,
}

impl GreedyRun {
    pub fn value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// The greedy algorithm; ties go to the lowest element index.
pub fn greedy<O: SubmodObjective + ?Sized>(obj: &O) -> Result<GreedyRun, SubmodError> {
    check(obj)?;
    let n = obj.ground_size();
    let mode = obj.mode();
    let mut sequence = Vec::with_capacity(obj.horizon());
    let mut values = Vec::new();
    let mut marginals = Vec::new();
    let mut steps = Vec::new();
    let mut singleton_values = Vec::new();
    let mut current = 0.0;
    for step in 0..obj.horizon() {
        let candidates = feasible_extensions(mode, n, &sequence);
        let gains = obj.marginals(&sequence, &candidates);
        if step == 0 {
            singleton_values = gains.clone();
        }
        let mut best = 0;
        for i in 1..gains.len() {
            if gains[i] > gains[best] {
                best = i;
            }
        }
        sequence.push(candidates[best]);
        let value = obj.evaluate(&sequence);
        marginals.push(value - current);
        values.push(value);
        current = value;
        steps.push(candidates.into_iter().zip(gains).collect());
    }
    Ok(GreedyRun {
        mode,
        sequence,
        values,
        marginals,
        singleton_values,
        steps,
    })
}

/// `β₀ = 1 - 1/e`.
pub fn bound_classic() -> f64 {
    1.0 - (-1.0f64).exp()
}

/// `γ_G = max_{k>=1} max_{s: Δ > 0} f(s) / Δ(G_{k-1} ⊕ s)` over the greedy
/// run. Steps without a positive marginal are skipped.
pub fn greedy_curvature(run: &GreedyRun) -> Result<f64, SubmodError> {
    let mut gamma: Option<f64> = None;
    for step in run.steps.iter().skip(1) {
        for (s, gain) in step {
            if *gain > 0.0 {
                let ratio = run.singleton_values[*s] / gain;
                gamma = Some(gamma.map_or(ratio, |g| g.max(ratio)));
            }
        }
    }
    gamma.ok_or(SubmodError::NoPositiveMarginal)
}

/// `β₁ = 1/H + (1/γ_G)(H-1)/H`.
pub fn bound_greedy_curvature(run: &GreedyRun) -> Result<f64, SubmodError> {
    let h = run.sequence.len() as f64;
    if run.sequence.len() <= 1 {
        return Ok(1.0);
    }
    let gamma = greedy_curvature(run)?;
    Ok(1.0 / h + (h - 1.0) / (h * gamma))
}

/// `V̄`: the sum of the `H` largest singleton values in set mode, `H` times
/// the largest in string mode.
pub fn top_h_value(run: &GreedyRun) -> Result<f64, SubmodError> {
    let h = run.sequence.len();
    let v_bar = match run.mode {
        Mode::String => {
            h as f64 * run.singleton_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
        Mode::Set => {
            let mut sorted = run.singleton_values.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.iter().take(h).sum()
        }
    };
    if v_bar.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(SubmodError::Degenerate);
    }
    Ok(v_bar)
}

/// `β₂ = f(G) / V̄`.
pub fn bound_top_h(run: &GreedyRun) -> Result<f64, SubmodError> {
    Ok(run.value() / top_h_value(run)?)
}

/// Number of sequences [`brute_force_opt`] would evaluate.
pub fn enumeration_count(mode: Mode, ground: usize, horizon: usize) -> f64 {
    match mode {
        Mode::String => (ground as f64).powi(horizon as i32),
        Mode::Set => (0..horizon).fold(1.0, |acc, i| acc * (ground - i) as f64 / (i + 1) as f64),
    }
}

/// The exact optimum over all sequences of length `H` (set mode: all
/// `H`-subsets, listed in increasing order). Ties go to the
/// lexicographically smallest sequence.
pub fn brute_force_opt<O: SubmodObjective + ?Sized>(
    obj: &O,
    budget: u64,
) -> Result<(Vec<usize>, f64), SubmodError> {
    check(obj)?;
    let (n, h, mode) = (obj.ground_size(), obj.horizon(), obj.mode());
    let count = enumeration_count(mode, n, h);
    if count > budget as f64 {
        return Err(SubmodError::BudgetExceeded { count, budget });
    }
    let mut all: Vec<Vec<usize>> = Vec::with_capacity(count as usize);
    let mut seq = Vec::with_capacity(h);
    enumerate(mode, n, h, &mut seq, &mut all);
    let values: Vec<f64> = all.par_iter().map(|s| obj.evaluate(s)).collect();
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    Ok((all.swap_remove(best), values[best]))
}

fn enumerate(mode: Mode, n: usize, h: usize, seq: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if seq.len() == h {
        out.push(seq.clone());
        return;
    }
    let start = match mode {
        Mode::Set => seq.last().map_or(0, |l| l + 1),
        Mode::String => 0,
    };
    for s in start..n {
        seq.push(s);
        enumerate(mode, n, h, seq, out);
        seq.pop();
    }
}

/// Outcome of [`verify_submodular`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodReport {
    pub checked: usize,
    pub exhaustive: bool,
    pub counterexample: Option<Counterexample>,
}

impl SubmodReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// `x ≼ y` and an element `s` violating monotonicity or diminishing returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub element: usize,
    pub property: &'static str,
    pub gain_x: f64,
    pub gain_y: f64,
}

fn check_triple<O: SubmodObjective + ?Sized>(
    obj: &O,
    x: &[usize],
    y: &[usize],
    s: usize,
) -> Option<Counterexample> {
    let fx = obj.evaluate(x);
    let fy = obj.evaluate(y);
    let mut xs = x.to_vec();
    xs.push(s);
    let mut ys = y.to_vec();
    ys.push(s);
    let gx = obj.evaluate(&xs) - fx;
    let gy = obj.evaluate(&ys) - fy;
    let tol = 1e-12 * fy.abs().max(1.0);
    let fail = |property| {
        Some(Counterexample {
            x: x.to_vec(),
            y: y.to_vec(),
            element: s,
            property,
            gain_x: gx,
            gain_y: gy,
        })
    };
    if fy < fx - tol || gy < -tol || gx < -tol {
        return fail("monotonicity");
    }
    if gx < gy - tol {
        return fail("diminishing returns");
    }
    None
}

/// Checks `f(Y) >= f(X)`, non-negative gains and
/// `f(X ⊕ s) - f(X) >= f(Y ⊕ s) - f(Y)` on chains `X ≼ Y` with
/// `|Y| < H`. Exhaustive when `|U| <= 8` and `H <= 3`, otherwise on
/// `n_samples` random triples.
pub fn verify_submodular<O: SubmodObjective + ?Sized>(obj: &O, n_samples: usize, seed: u64) -> SubmodReport {
    let (n, h, mode) = (obj.ground_size(), obj.horizon(), obj.mode());
    if n <= 8 && h <= 3 {
        let mut ys = Vec::new();
        for len in 0..h {
            let mut seq = Vec::new();
            enumerate_ordered(mode, n, len, &mut seq, &mut ys);
        }
        let mut checked = 0;
        for y in &ys {
            for cut in 0..=y.len() {
                let x = &y[..cut];
                for s in feasible_extensions(mode, n, y) {
                    checked += 1;
                    if let Some(c) = check_triple(obj, x, y, s) {
                        return SubmodReport {
                            checked,
                            exhaustive: true,
                            counterexample: Some(c),
                        };
                    }
                }
            }
        }
        return SubmodReport {
            checked,
            exhaustive: true,
            counterexample: None,
        };
    }
    let counterexample = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::child_rng(seed, i as u64);
            let len = rng.gen_range(0..h);
            let y: Vec<usize> = match mode {
                Mode::Set => {
                    let mut all: Vec<usize> = (0..n).collect();
                    all.shuffle(&mut rng);
                    all.truncate(len);
                    all
                }
                Mode::String => (0..len).map(|_| rng.gen_range(0..n)).collect(),
            };
            let cut = rng.gen_range(0..=len);
            let options = feasible_extensions(mode, n, &y);
            let s = options[rng.gen_range(0..options.len())];
            check_triple(obj, &y[..cut], &y, s)
        })
        .find_first(Option::is_some)
        .flatten();
    SubmodReport {
        checked: n_samples,
        exhaustive: false,
        counterexample,
    }
}

/// All feasible sequences of length `len` in lexicographic order; set mode
/// lists every ordering of distinct elements.
pub(crate) fn enumerate_ordered(mode: Mode, n: usize, len: usize, seq: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if seq.len() == len {
        out.push(seq.clone());
        return;
    }
    for s in feasible_extensions(mode, n, seq) {
        seq.push(s);
        enumerate_ordered(mode, n, len, seq, out);
        seq.pop();
    }
}

/// `|f(seq) - Σ_i Δ(seq_i)|` where `Δ(seq_i) = f(seq[..=i]) - f(seq[..i])`,
/// with each marginal evaluated independently of the running total.
pub fn telescoping_residual<O: SubmodObjective + ?Sized>(obj: &O, seq: &[usize]) -> f64 {
    let sum: f64 = (0..seq.len())
        .map(|i| obj.evaluate(&seq[..=i]) - obj.evaluate(&seq[..i]))
        .sum();
    (sum - obj.evaluate(seq)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cover_toy() -> ProbabilisticCoverage {
        // A: {1, 2}, B: {2, 3}, C: {3}
        ProbabilisticCoverage::sets(&[vec![1, 2], vec![2, 3], vec![3]], vec![0.0, 1.0, 1.0, 1.0], 2, Mode::Set)
            .unwrap()
    }

    #[test]
    fn modular_greedy_and_bounds() {
        let f = Modular::new(vec![3.0, 2.0, 1.0], 2, Mode::Set).unwrap();
        let run = greedy(&f).unwrap();
        assert_eq!(run.sequence, vec![0, 1]);
        assert_eq!(run.value(), 5.0);
        assert_eq!(greedy_curvature(&run).unwrap(), 1.0);
        assert_eq!(bound_greedy_curvature(&run).unwrap(), 1.0);
        assert_eq!(top_h_value(&run).unwrap(), 5.0);
        assert_eq!(bound_top_h(&run).unwrap(), 1.0);
        assert_eq!(brute_force_opt(&f, 100).unwrap().1, 5.0);
    }

    #[test]
    fn modular_string_mode() {
        let f = Modular::new(vec![3.0, 2.0, 1.0], 2, Mode::String).unwrap();
        let run = greedy(&f).unwrap();
        assert_eq!(run.sequence, vec![0, 0]);
        assert_eq!(top_h_value(&run).unwrap(), 6.0);
        assert_eq!(bound_top_h(&run).unwrap(), 1.0);
        let (seq, v) = brute_force_opt(&f, 100).unwrap();
        assert_eq!((seq, v), (vec![0, 0], 6.0));
    }

    #[test]
    fn max_cover_toy() {
        let f = cover_toy();
        let run = greedy(&f).unwrap();
        assert_eq!(run.sequence, vec![0, 1]);
        assert_eq!(run.value(), 3.0);
        // Hand evaluation: after A, gains are B: 1, C: 1; singletons 2, 2, 1.
        assert_eq!(greedy_curvature(&run).unwrap(), 2.0);
        assert_eq!(bound_greedy_curvature(&run).unwrap(), 0.5 + 0.25);
        assert_eq!(top_h_value(&run).unwrap(), 4.0);
        assert_eq!(bound_top_h(&run).unwrap(), 0.75);
        assert_eq!(brute_force_opt(&f, 100).unwrap(), (vec![0, 1], 3.0));
        assert!(verify_submodular(&f, 0, 0).passed());
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // X = {0, 1} and Y = {2, 3} are optimal together (4). Z = {0, 2, 4}
        // is worth 2.5 alone, so greedy takes it first and ends at 3.5.
        let f = ProbabilisticCoverage::sets(
            &[vec![0, 1], vec![2, 3], vec![0, 2, 4]],
            vec![1.0, 1.0, 1.0, 1.0, 0.5],
            2,
            Mode::Set,
        )
        .unwrap();
        let run = greedy(&f).unwrap();
        let (_, opt) = brute_force_opt(&f, 100).unwrap();
        assert_eq!(run.sequence[0], 2);
        assert_eq!((run.value(), opt), (3.5, 4.0));
        let ratio = run.value() / opt;
        assert!(ratio >= bound_classic());
        assert!(bound_greedy_curvature(&run).unwrap() <= ratio + 1e-12);
        assert!(bound_top_h(&run).unwrap() <= ratio + 1e-12);
    }

    #[test]
    fn decaying_string_by_enumeration() {
        // Three elements with base gains 3, 2, 1, a second copy of the same
        // element is worth nothing, and the second position is discounted
        // by one half. Best string: (0, 1) = 3 + 1 = 4.
        let f = ProbabilisticCoverage::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![3.0, 2.0, 1.0],
            vec![1.0, 0.5],
            Mode::String,
        )
        .unwrap();
        let mut best = (vec![], f64::NEG_INFINITY);
        for a in 0..3 {
            for b in 0..3 {
                let v = f.evaluate(&[a, b]);
                if v > best.1 {
                    best = (vec![a, b], v);
                }
            }
        }
        assert_eq!(best, (vec![0, 1], 4.0));
        assert_eq!(brute_force_opt(&f, 9).unwrap(), best);
        assert!(matches!(brute_force_opt(&f, 8), Err(SubmodError::BudgetExceeded { .. })));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumeration_count(Mode::Set, 12, 3), 220.0);
        assert_eq!(enumeration_count(Mode::String, 3, 2), 9.0);
    }

    #[test]
    fn supermodular_toy_is_rejected() {
        let f = SquareCardinality::new(4, 3, Mode::Set);
        let report = verify_submodular(&f, 100, 1);
        let c = report.counterexample.expect("violation");
        assert_eq!(c.property, "diminishing returns");
        assert!(c.gain_x < c.gain_y);
        let big = SquareCardinality::new(20, 5, Mode::Set);
        assert!(!verify_submodular(&big, 1000, 1).passed());
    }

    #[test]
    fn modular_passes_exhaustively() {
        let f = Modular::new(vec![3.0, 2.0, 1.0, 0.5], 3, Mode::Set).unwrap();
        let report = verify_submodular(&f, 0, 0);
        assert!(report.exhaustive && report.passed());
    }

    #[test]
    fn precondition_errors() {
        let f = Modular::new(vec![1.0], 2, Mode::Set).unwrap();
        assert!(matches!(greedy(&f), Err(SubmodError::TooFewElements { .. })));
        let z = Modular::new(vec![0.0, 0.0], 2, Mode::Set).unwrap();
        let run = greedy(&z).unwrap();
        assert_eq!(top_h_value(&run), Err(SubmodError::Degenerate));
        assert_eq!(bound_greedy_curvature(&run), Err(SubmodError::NoPositiveMarginal));
    }

    #[test]
    fn telescoping() {
        let f = cover_toy();
        assert!(telescoping_residual(&f, &[2, 0]) < 1e-12);
    }
}
