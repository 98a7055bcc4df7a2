//! Supervised approximation of expected-value-to-go functions from optimal
//! demonstrations.
//!
//! The regressor is a full quadratic in the stacked input `v = (z, u)`,
//! fitted by ridge-regularised least squares. For the LQG problem every
//! quantity of interest is exactly quadratic, so this class is exact.

mod demos;
mod scheme;

pub use demos::{
    delta_label_closed, delta_label_sampled, generate_demos, DeltaLabels, DemoConfig, DemoDataset,
    DemoRecord, LabelKind,
};
pub use scheme::{build_error_model, exact_evtg_models, scheme_delta, QuadraticScheme};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bound::StageFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("need at least {needed} samples to fit {needed} coefficients, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("design matrix is rank deficient (rank {rank} of {cols}); use a positive ridge")]
    RankDeficient { rank: usize, cols: usize },
    #[error("inputs have inconsistent dimensions")]
    Dimension,
    #[error("non-finite sample or label")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("expected {expected} stage models, got {got}")]
    StageCount { expected: usize, got: usize },
    #[error("action block of stage {stage} is not positive definite")]
    NotConvex { stage: usize },
    #[error("dataset has no records")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Lqg(#[from] crate::lqg::LqgError),
    #[error(transparent)]
    Bound(#[from] crate::bound::BoundError),
    #[error("csv: {0}")]
    Csv(String),
}

/// `f(v) = vᵀ A v + bᵀ v + c` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl QuadraticModel {
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, constant: f64) -> Result<Self, LearnError> {
        let d = lin.len();
        if quad.nrows() != d || quad.ncols() != d {
            return Err(LearnError::Dimension);
        }
        if (&quad - quad.transpose()).amax() > 1e-12 * quad.amax().max(1.0) {
            return Err(LearnError::Invalid("quadratic part is not symmetric".into()));
        }
        Ok(Self {
            quad,
            lin,
            constant,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            quad: DMatrix::zeros(dim, dim),
            lin: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        let mut total = self.constant;
        for i in 0..d {
            let row: f64 = v.iter().enumerate().map(|(j, x)| self.quad[(i, j)] * x).sum();
            total += v[i] * (row + self.lin[i]);
        }
        total
    }

    pub fn grad(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        (2.0 * &self.quad * x + &self.lin).as_slice().to_vec()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            quad: &self.quad - &other.quad,
            lin: &self.lin - &other.lin,
            constant: self.constant - other.constant,
        }
    }

    /// Minimises over the trailing coordinates with the leading ones fixed
    /// to `head`. Returns the minimiser and the minimum, or `None` when the
    /// trailing block is not positive definite.
    pub fn min_over_tail(&self, head: &[f64]) -> Option<(Vec<f64>, f64)> {
        let d = self.dim();
        let h = head.len();
        let t = d - h;
        let a_tt = self.quad.view((h, h), (t, t)).into_owned();
        let a_th = self.quad.view((h, 0), (t, h));
        let x = DVector::from_column_slice(head);
        let rhs = 2.0 * a_th * &x + self.lin.rows(h, t);
        let chol = a_tt.cholesky()?;
        let u = -0.5 * chol.solve(&rhs);
        let mut v = head.to_vec();
        v.extend_from_slice(u.as_slice());
        let value = self.eval(&v);
        Some((u.as_slice().to_vec(), value))
    }

    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        let _ = writeln!(out, "quadratic {d}");
        let _ = writeln!(out, "constant {:e}", self.constant);
        let lin: Vec<String> = self.lin.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "linear {}", lin.join(" "));
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| format!("{:e}", self.quad[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LearnError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, message: &str| LearnError::Parse {
            line,
            message: message.into(),
        };
        let mut next = |key: &str| -> Result<(usize, Vec<f64>), LearnError> {
            let (n, line) = lines.next().ok_or_else(|| err(0, "unexpected end of input"))?;
            let mut words = line.split_whitespace();
            if !key.is_empty() && words.next() != Some(key) {
                return Err(err(n, &format!("expected `{key}`")));
            }
            let values = words
                .map(|w| w.parse::<f64>().map_err(|_| err(n, &format!("bad number `{w}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((n, values))
        };
        let (n, dim) = next("quadratic")?;
        let d = match dim.as_slice() {
            [d] if *d >= 1.0 && d.fract() == 0.0 => *d as usize,
            _ => return Err(err(n, "expected a positive dimension")),
        };
        let (n, c) = next("constant")?;
        let [constant] = c[..] else {
            return Err(err(n, "expected one constant"));
        };
        let (n, lin) = next("linear")?;
        if lin.len() != d {
            return Err(err(n, "wrong number of linear coefficients"));
        }
        let mut quad = DMatrix::zeros(d, d);
        for i in 0..d {
            let (n, row) = next("")?;
            if row.len() != d {
                return Err(err(n, "wrong row length"));
            }
            for (j, v) in row.into_iter().enumerate() {
                quad[(i, j)] = v;
            }
        }
        Self::new(quad, DVector::from_vec(lin), constant)
    }
}

impl StageFunction for QuadraticModel {
    fn dim(&self) -> usize {
        self.lin.len()
    }
    fn value(&self, v: &[f64]) -> f64 {
        self.eval(v)
    }
    fn gradient(&self, v: &[f64]) -> Option<Vec<f64>> {
        Some(self.grad(v))
    }
}

/// A fitted model and its training mean-squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: QuadraticModel,
    pub mse: f64,
}

/// Number of coefficients of a full quadratic in `dim` variables.
pub fn coefficient_count(dim: usize) -> usize {
    dim * (dim + 1) / 2 + dim + 1
}

/// Least-squares fit of a full quadratic with ridge penalty `ridge` on the
/// non-constant coefficients.
///
/// Inputs are standardised per coordinate and feature columns are centred
/// before solving by SVD; the coefficients are mapped back to the original
/// coordinates.
pub fn fit_quadratic(inputs: &[Vec<f64>], labels: &[f64], ridge: f64) -> Result<Fit, LearnError> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LearnError::Invalid(format!("ridge must be non-negative, got {ridge}")));
    }
    if inputs.len() != labels.len() {
        return Err(LearnError::Dimension);
    }
    let n = inputs.len();
    let d = inputs.first().map_or(0, Vec::len);
    if d == 0 || inputs.iter().any(|v| v.len() != d) {
        return Err(if n == 0 { LearnError::Empty } else { LearnError::Dimension });
    }
    let p = coefficient_count(d);
    if n < p {
        return Err(LearnError::TooFewSamples { needed: p, got: n });
    }
    if inputs.iter().flatten().chain(labels).any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }

    let mean: Vec<f64> = (0..d).map(|j| inputs.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = inputs.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let q = p - 1;
    let mut x = DMatrix::<f64>::zeros(n, q);
    for (r, v) in inputs.iter().enumerate() {
        let s: Vec<f64> = (0..d).map(|j| (v[j] - mean[j]) / scale[j]).collect();
        for (c, (i, j)) in pairs.iter().enumerate() {
            x[(r, c)] = s[*i] * s[*j];
        }
        for j in 0..d {
            x[(r, pairs.len() + j)] = s[j];
        }
    }
    let col_mean: Vec<f64> = (0..q).map(|c| x.column(c).sum() / n as f64).collect();
    for (c, m) in col_mean.iter().enumerate() {
        x.column_mut(c).iter_mut().for_each(|e| *e -= m);
    }
    let y_mean = labels.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, labels.iter().map(|l| l - y_mean));

    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * 1e-10;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if ridge == 0.0 && rank < q {
        return Err(LearnError::RankDeficient { rank, cols: p });
    }
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let uty = u.transpose() * &y;
    let scaled = DVector::from_iterator(
        q,
        svd.singular_values.iter().zip(uty.iter()).map(|(s, c)| {
            if ridge == 0.0 {
                c / s
            } else {
                s * c / (s * s + ridge)
            }
        }),
    );
    let beta = v_t.transpose() * scaled;
    let intercept = y_mean - beta.iter().zip(&col_mean).map(|(b, m)| b * m).sum::<f64>();

    // Coefficients in standardised coordinates s = D (v - m).
    let mut a_s = DMatrix::<f64>::zeros(d, d);
    for (c, (i, j)) in pairs.iter().enumerate() {
        if i == j {
            a_s[(*i, *j)] = beta[c];
        } else {
            a_s[(*i, *j)] = 0.5 * beta[c];
            a_s[(*j, *i)] = 0.5 * beta[c];
        }
    }
    let b_s = DVector::from_iterator(d, (0..d).map(|j| beta[pairs.len() + j]));
    let dinv = DVector::from_iterator(d, scale.iter().map(|s| 1.0 / s));
    let m = DVector::from_column_slice(&mean);
    let quad = DMatrix::from_fn(d, d, |i, j| a_s[(i, j)] * dinv[i] * dinv[j]);
    let b_d = b_s.component_mul(&dinv);
    let qm = &quad * &m;
    let lin = &b_d - 2.0 * &qm;
    let constant = intercept - b_d.dot(&m) + m.dot(&qm);
    let model = QuadraticModel {
        quad: 0.5 * (&quad + quad.transpose()),
        lin,
        constant,
    };
    let mse = inputs
        .iter()
        .zip(labels)
        .map(|(v, l)| (model.eval(v) - l).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(Fit { model, mse })
}
