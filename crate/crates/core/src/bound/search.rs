//! Box-constrained search for the worst-case stepwise error on continuous
//! state-action spaces.

use rand::Rng as _;
use rayon::prelude::*;

use super::BoundError;
use crate::horizon::Direction;
use crate::seed;

/// A real function of a stacked state-action vector.
pub trait StageFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, v: &[f64]) -> f64;
    /// Analytic gradient, when available.
    fn gradient(&self, _v: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> StageFunction for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, v: &[f64]) -> f64 {
        (self.1)(v)
    }
}

/// Axis-aligned box with `lower < upper` in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, BoundError> {
        if lower.len() != upper.len() {
            return Err(BoundError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(BoundError::DegenerateBox(i));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Coordinate-wise hull of `points`, scaled about its centre by `margin`.
    pub fn around<'a, I>(points: I, margin: f64) -> Result<Self, BoundError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut lower: Vec<f64> = Vec::new();
        let mut upper: Vec<f64> = Vec::new();
        for p in points {
            if lower.is_empty() {
                lower = p.to_vec();
                upper = p.to_vec();
                continue;
            }
            if p.len() != lower.len() {
                return Err(BoundError::Dimension {
                    expected: lower.len(),
                    got: p.len(),
                });
            }
            for i in 0..p.len() {
                lower[i] = lower[i].min(p[i]);
                upper[i] = upper[i].max(p[i]);
            }
        }
        if lower.is_empty() {
            return Err(BoundError::DegenerateBox(0));
        }
        let (lo, hi) = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let half = 0.5 * (u - l) * margin;
                (c - half, c + half)
            })
            .unzip();
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Box scaled about its centre by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, BoundError> {
        let (lo, hi) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let half = 0.5 * (u - l) * factor;
                (c - half, c + half)
            })
            .unzip();
        Self::new(lo, hi)
    }

    fn point(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| if *t >= 1.0 { *u } else { l + t * (u - l) })
            .collect()
    }
}

/// Per-stage stepwise error surrogates `δ_k` and their search boxes, for
/// `k = 1..H-1` (stored at index `k - 1`).
#[derive(Debug, Clone)]
pub struct StepwiseErrorModel<F> {
    direction: Direction,
    stages: Vec<(F, SearchBox)>,
}

impl<F: StageFunction> StepwiseErrorModel<F> {
    pub fn new(direction: Direction, stages: Vec<(F, SearchBox)>) -> Result<Self, BoundError> {
        for (f, b) in &stages {
            if f.dim() != b.dim() {
                return Err(BoundError::Dimension {
                    expected: b.dim(),
                    got: f.dim(),
                });
            }
        }
        Ok(Self { direction, stages })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of stepwise terms (`H - 1`).
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn delta(&self, k: usize) -> Result<&F, BoundError> {
        self.stage(k).map(|(f, _)| f)
    }

    pub fn search_box(&self, k: usize) -> Result<&SearchBox, BoundError> {
        self.stage(k).map(|(_, b)| b)
    }

    fn stage(&self, k: usize) -> Result<&(F, SearchBox), BoundError> {
        if k == 0 || k > self.stages.len() {
            return Err(BoundError::StageOutOfRange {
                stage: k,
                max: self.stages.len(),
            });
        }
        Ok(&self.stages[k - 1])
    }
}

/// Multi-start settings for [`optimize_in_box`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            max_iters: 5_000,
        }
    }
}

/// `ε_k`: the optimum (in the model's direction) of `δ_k` over its box.
pub fn epsilon_continuous<F: StageFunction>(
    model: &StepwiseErrorModel<F>,
    k: usize,
    settings: SearchSettings,
) -> Result<f64, BoundError> {
    let (f, b) = model.stage(k)?;
    optimize_in_box(f, b, model.direction, settings).map(|(_, v)| v)
}

/// Multi-start local search for the optimum of `f` over `bounds`.
///
/// Start 0 is the box centre; the rest are uniform draws. Each start runs
/// projected gradient steps in unit-box coordinates when `f` has a gradient,
/// then a compass search down to a step of `1e-12` of the box width.
/// Starts are reduced in index order, so the result is deterministic.
pub fn optimize_in_box<F: StageFunction + ?Sized>(
    f: &F,
    bounds: &SearchBox,
    direction: Direction,
    settings: SearchSettings,
) -> Result<(Vec<f64>, f64), BoundError> {
    if settings.starts == 0 {
        return Err(BoundError::NoStarts);
    }
    if f.dim() != bounds.dim() {
        return Err(BoundError::Dimension {
            expected: bounds.dim(),
            got: f.dim(),
        });
    }
    let d = bounds.dim();
    let starts: Vec<Vec<f64>> = (0..settings.starts)
        .map(|i| {
            if i == 0 {
                vec![0.5; d]
            } else {
                let mut rng = seed::child_rng(settings.seed, i as u64);
                (0..d).map(|_| rng.gen::<f64>()).collect()
            }
        })
        .collect();
    let results = starts
        .into_par_iter()
        .map(|t| local_search(f, bounds, direction, t, settings.max_iters))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (v, val) in results {
        match &best {
            Some((_, b)) if !direction.improves(val, *b) => {}
            _ => best = Some((v, val)),
        }
    }
    Ok(best.expect("at least one start"))
}

fn local_search<F: StageFunction + ?Sized>(
    f: &F,
    bounds: &SearchBox,
    direction: Direction,
    mut t: Vec<f64>,
    max_iters: usize,
) -> Result<(Vec<f64>, f64), BoundError> {
    // Internally always maximise `sign * f`.
    let sign = match direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };
    let widths: Vec<f64> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(l, u)| u - l)
        .collect();
    let eval = |t: &[f64]| -> Result<f64, BoundError> {
        let v = bounds.point(t);
        let y = f.value(&v);
        if y.is_finite() {
            Ok(sign * y)
        } else {
            Err(BoundError::NonFinite(v))
        }
    };
    let project = |t: &mut [f64]| t.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));

    let mut current = eval(&t)?;

    if f.gradient(&bounds.point(&t)).is_some() {
        let mut step = 1.0;
        for _ in 0..max_iters {
            let v = bounds.point(&t);
            let g: Vec<f64> = f
                .gradient(&v)
                .expect("gradient availability does not change")
                .iter()
                .zip(&widths)
                .map(|(g, w)| sign * g * w)
                .collect();
            let mut accepted = false;
            while step > 1e-16 {
                let mut cand: Vec<f64> = t.iter().zip(&g).map(|(x, g)| x + step * g).collect();
                project(&mut cand);
                let ascent: f64 = cand.iter().zip(&t).zip(&g).map(|((a, b), g)| (a - b) * g).sum();
                if ascent <= 0.0 {
                    break;
                }
                let val = eval(&cand)?;
                if val >= current + 1e-4 * ascent {
                    let shift = cand.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    t = cand;
                    current = val;
                    step = (step * 2.0).min(1e12);
                    accepted = shift > 1e-14;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let mut h = 0.125;
    while h > 1e-12 {
        let mut improved = false;
        for i in 0..t.len() {
            for dir in [1.0, -1.0] {
                let old = t[i];
                let cand = (old + dir * h).clamp(0.0, 1.0);
                if cand == old {
                    continue;
                }
                t[i] = cand;
                let val = eval(&t)?;
                if val > current {
                    current = val;
                    improved = true;
                } else {
                    t[i] = old;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok((bounds.point(&t), sign * current))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Concave {
        center: Vec<f64>,
    }

    impl StageFunction for Concave {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value(&self, v: &[f64]) -> f64 {
            3.0 - v
                .iter()
                .zip(&self.center)
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>()
        }
        fn gradient(&self, v: &[f64]) -> Option<Vec<f64>> {
            Some(v.iter().zip(&self.center).map(|(x, c)| -2.0 * (x - c)).collect())
        }
    }

    #[test]
    fn concave_interior_maximum() {
        let f = Concave {
            center: vec![0.3, -1.2, 2.0],
        };
        let b = SearchBox::new(vec![-5.0; 3], vec![5.0; 3]).unwrap();
        let (x, v) = optimize_in_box(&f, &b, Direction::Maximize, SearchSettings::default()).unwrap();
        assert!((v - 3.0).abs() < 1e-6);
        for (a, c) in x.iter().zip(&f.center) {
            assert!((a - c).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_optimum_at_vertex() {
        let w = [1.5, -2.0, 0.5];
        let f = (3usize, move |v: &[f64]| v.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>());
        let b = SearchBox::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 4.0]).unwrap();
        let mut best_max = f64::NEG_INFINITY;
        let mut best_min = f64::INFINITY;
        for mask in 0..8u32 {
            let v: Vec<f64> = (0..3)
                .map(|i| if mask >> i & 1 == 1 { b.upper()[i] } else { b.lower()[i] })
                .collect();
            best_max = best_max.max(f.value(&v));
            best_min = best_min.min(f.value(&v));
        }
        let s = SearchSettings::default();
        let (_, vmax) = optimize_in_box(&f, &b, Direction::Maximize, s).unwrap();
        let (_, vmin) = optimize_in_box(&f, &b, Direction::Minimize, s).unwrap();
        assert!((vmax - best_max).abs() < 1e-9);
        assert!((vmin - best_min).abs() < 1e-9);
    }

    #[test]
    fn enlarging_the_box_never_hurts() {
        let f = (2usize, |v: &[f64]| (v[0] * 1.3).sin() + (v[1] - 0.4).powi(2));
        let b = SearchBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let s = SearchSettings::default();
        let small = optimize_in_box(&f, &b, Direction::Maximize, s).unwrap().1;
        let large = optimize_in_box(&f, &b.scaled(2.0).unwrap(), Direction::Maximize, s)
            .unwrap()
            .1;
        assert!(large >= small - 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let f = (2usize, |v: &[f64]| (3.0 * v[0]).cos() * (2.0 * v[1]).sin());
        let b = SearchBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let s = SearchSettings {
            seed: 9,
            ..Default::default()
        };
        let a = optimize_in_box(&f, &b, Direction::Minimize, s).unwrap();
        let c = optimize_in_box(&f, &b, Direction::Minimize, s).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn box_validation() {
        assert!(matches!(
            SearchBox::new(vec![0.0, 1.0], vec![1.0, 1.0]),
            Err(BoundError::DegenerateBox(1))
        ));
        let pts = [vec![0.0, 1.0], vec![0.0, 2.0]];
        assert!(SearchBox::around(pts.iter().map(|p| p.as_slice()), 1.25).is_err());
        let pts = [vec![0.0, 1.0], vec![2.0, 3.0]];
        let b = SearchBox::around(pts.iter().map(|p| p.as_slice()), 1.5).unwrap();
        assert_eq!(b.lower(), &[-0.5, 0.5]);
        assert_eq!(b.upper(), &[2.5, 3.5]);
    }

    #[test]
    fn stage_lookup() {
        let f = (1usize, |v: &[f64]| v[0]);
        let b = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let model = StepwiseErrorModel::new(Direction::Maximize, vec![(f, b)]).unwrap();
        assert!((epsilon_continuous(&model, 1, SearchSettings::default()).unwrap() - 1.0).abs() < 1e-12);
        assert!(epsilon_continuous(&model, 2, SearchSettings::default()).is_err());
        assert!(epsilon_continuous(&model, 0, SearchSettings::default()).is_err());
    }
}
