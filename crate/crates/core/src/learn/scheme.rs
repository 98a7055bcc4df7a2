use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{fit_quadratic, DemoDataset, LabelKind, LearnError, QuadraticModel};
use crate::bound::{
    optimize_in_box, AdpScheme, SearchBox, SearchSettings, StepwiseErrorModel,
};
use crate::horizon::Direction;
use crate::lqg::{LqgModel, LqgProblem, RiccatiSolution, Vector};
use crate::seed;

/// `[A B]` and `d` as dynamic matrices, so that `z' = G v + d + w`.
fn stacked<const N: usize, const M: usize>(model: &LqgModel<N, M>) -> (DMatrix<f64>, DVector<f64>) {
    let mut g = DMatrix::zeros(N, N + M);
    for i in 0..N {
        for j in 0..N {
            g[(i, j)] = model.a[(i, j)];
        }
        for j in 0..M {
            g[(i, N + j)] = model.b[(i, j)];
        }
    }
    (g, DVector::from_column_slice(model.drift().as_slice()))
}

fn dynamic<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// A quadratic in `v = (z, u)` whose value is `E[yᵀ S y + nᵀ y + e]` for
/// `y ~ N(G v + d, Σ)`.
fn gaussian_pushforward(
    s: &DMatrix<f64>,
    n: &DVector<f64>,
    e: f64,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> QuadraticModel {
    let quad = g.transpose() * s * g;
    let sd = s * d;
    let lin = 2.0 * g.transpose() * &sd + g.transpose() * n;
    let constant = d.dot(&sd) + (s * sigma).trace() + n.dot(d) + e;
    QuadraticModel {
        quad: 0.5 * (&quad + quad.transpose()),
        lin,
        constant,
    }
}

/// Coefficients of `W*_k` for `k = 1..=H`.
pub fn exact_evtg_models<const N: usize, const M: usize>(sol: &RiccatiSolution<N, M>) -> Vec<QuadraticModel> {
    let model = sol.model();
    let (g, d) = stacked(model);
    let sigma = dynamic(&model.noise_cov);
    (1..=sol.horizon())
        .map(|k| {
            let p = dynamic(&sol.p[k]);
            gaussian_pushforward(&p, &DVector::zeros(N), sol.c[k], &g, &d, &sigma)
        })
        .collect()
}

/// An ADP scheme whose `Ŵ_{k+1}` are quadratics in `(z, u)`.
#[derive(Debug, Clone)]
pub struct QuadraticScheme<const N: usize, const M: usize> {
    w: Vec<QuadraticModel>,
    q: Vec<QuadraticModel>,
    fallback: Vec<usize>,
    fallback_radius: f64,
}

impl<const N: usize, const M: usize> QuadraticScheme<N, M> {
    /// `w_models[k - 1]` is `Ŵ_k` for `k = 1..=H`.
    pub fn new(model: &LqgModel<N, M>, w_models: Vec<QuadraticModel>) -> Result<Self, LearnError> {
        let h = model.horizon;
        if w_models.len() != h {
            return Err(LearnError::StageCount {
                expected: h,
                got: w_models.len(),
            });
        }
        if w_models.iter().any(|m| m.dim() != N + M) {
            return Err(LearnError::Dimension);
        }
        let mut cost = DMatrix::zeros(N + M, N + M);
        cost.view_mut((0, 0), (N, N)).copy_from(&dynamic(&model.q));
        cost.view_mut((N, N), (M, M)).copy_from(&dynamic(&model.r));
        let q: Vec<QuadraticModel> = w_models
            .iter()
            .map(|w| QuadraticModel {
                quad: &w.quad + &cost,
                lin: w.lin.clone(),
                constant: w.constant,
            })
            .collect();
        let fallback = q
            .iter()
            .enumerate()
            .filter(|(_, m)| m.min_over_tail(&[0.0; N]).is_none())
            .map(|(k, _)| k)
            .collect();
        Ok(Self {
            w: w_models,
            q,
            fallback,
            fallback_radius: 1e3,
        })
    }

    /// `Ŵ = W*`.
    pub fn exact(sol: &RiccatiSolution<N, M>) -> Self {
        Self::new(sol.model(), exact_evtg_models(sol)).expect("exact models have the right shape")
    }

    /// `Ŵ ≡ 0`, the myopic scheme.
    pub fn zero(model: &LqgModel<N, M>) -> Self {
        Self::new(model, vec![QuadraticModel::zero(N + M); model.horizon]).expect("shape")
    }

    /// Fits `Ŵ_{k+1}` to each stage cluster of an EVTG dataset. Returns the
    /// scheme and the per-stage training errors.
    pub fn fit(
        model: &LqgModel<N, M>,
        data: &DemoDataset,
        ridge: f64,
    ) -> Result<(Self, Vec<f64>), LearnError> {
        if data.kind != LabelKind::Evtg {
            return Err(LearnError::Invalid(format!("expected evtg labels, got {}", data.kind)));
        }
        let fits = (0..data.clusters.len())
            .map(|c| fit_quadratic(&data.inputs(c), &data.labels(c), ridge))
            .collect::<Result<Vec<_>, _>>()?;
        let mse = fits.iter().map(|f| f.mse).collect();
        let scheme = Self::new(model, fits.into_iter().map(|f| f.model).collect())?;
        Ok((scheme, mse))
    }

    /// Multiplies every coefficient of `Ŵ_1..Ŵ_{H-1}` by an independent
    /// `1 + sigma * ξ`, `ξ ~ N(0, 1)`. `Ŵ_H` is left untouched.
    pub fn perturbed(&self, model: &LqgModel<N, M>, sigma: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let h = self.w.len();
        let mut gauss = move || -> f64 {
            let xi: f64 = StandardNormal.sample(&mut rng);
            sigma * xi
        };
        let w = self
            .w
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if i + 1 == h {
                    return m.clone();
                }
                let mut out = m.clone();
                let d = m.dim();
                for r in 0..d {
                    for c in r..d {
                        let v = m.quad[(r, c)] * (1.0 + gauss());
                        out.quad[(r, c)] = v;
                        out.quad[(c, r)] = v;
                    }
                }
                out.lin.iter_mut().for_each(|l| *l *= 1.0 + gauss());
                out.constant *= 1.0 + gauss();
                out
            })
            .collect();
        Self::new(model, w).expect("shape preserved")
    }

    /// Radius of the action box searched at stages whose `Q̂_k` is not
    /// convex in the action.
    pub fn with_fallback_radius(mut self, radius: f64) -> Self {
        self.fallback_radius = radius;
        self
    }

    /// `Ŵ_k`, `k = 1..=H`.
    pub fn w_model(&self, k: usize) -> &QuadraticModel {
        &self.w[k - 1]
    }

    /// `Q̂_k` as a quadratic in `(z, u)`, `k = 0..H-1`.
    pub fn q_model(&self, k: usize) -> &QuadraticModel {
        &self.q[k]
    }

    /// Stages whose action is found by box search instead of a linear solve.
    pub fn fallback_stages(&self) -> &[usize] {
        &self.fallback
    }

    fn stack(z: &Vector<N>, u: &Vector<M>) -> Vec<f64> {
        z.iter().chain(u.iter()).copied().collect()
    }
}

impl<const N: usize, const M: usize> AdpScheme<LqgProblem<N, M>> for QuadraticScheme<N, M> {
    fn w_hat(&self, _problem: &LqgProblem<N, M>, k: usize, z: &Vector<N>, u: &Vector<M>) -> f64 {
        self.w[k - 1].eval(&Self::stack(z, u))
    }

    fn q_hat(&self, _problem: &LqgProblem<N, M>, stage: usize, z: &Vector<N>, u: &Vector<M>) -> f64 {
        self.q[stage].eval(&Self::stack(z, u))
    }

    fn act(&self, _problem: &LqgProblem<N, M>, stage: usize, z: &Vector<N>) -> Vector<M> {
        let q = &self.q[stage];
        if let Some((u, _)) = q.min_over_tail(z.as_slice()) {
            return Vector::<M>::from_column_slice(&u);
        }
        let r = self.fallback_radius;
        let bounds = SearchBox::new(vec![-r; M], vec![r; M]).expect("positive radius");
        let f = (M, |u: &[f64]| {
            let v: Vec<f64> = z.iter().chain(u).copied().collect();
            q.eval(&v)
        });
        let settings = SearchSettings {
            starts: 4,
            seed: stage as u64,
            max_iters: 200,
        };
        let (u, _) = optimize_in_box(&f, &bounds, Direction::Minimize, settings)
            .expect("finite quadratic on a valid box");
        Vector::<M>::from_column_slice(&u)
    }
}

/// The scheme's own stepwise error
/// `δ_k(z, u) = E[min_{u'} Q̂_k(z', u') | z, u] - Ŵ_k(z, u)` in closed form,
/// for `1 <= k <= H-1`.
pub fn scheme_delta<const N: usize, const M: usize>(
    scheme: &QuadraticScheme<N, M>,
    model: &LqgModel<N, M>,
    k: usize,
) -> Result<QuadraticModel, LearnError> {
    let h = scheme.w.len();
    if k == 0 || k >= h {
        return Err(crate::bound::BoundError::StageOutOfRange {
            stage: k,
            max: h - 1,
        }
        .into());
    }
    let q = &scheme.q[k];
    let a_zz = q.quad.view((0, 0), (N, N));
    let a_zu = q.quad.view((0, N), (N, M));
    let a_uu = q.quad.view((N, N), (M, M)).into_owned();
    let b_z = q.lin.rows(0, N);
    let b_u = q.lin.rows(N, M).into_owned();
    let chol = a_uu.cholesky().ok_or(LearnError::NotConvex { stage: k })?;
    let inv_uz = chol.solve(&a_zu.transpose());
    let inv_bu = chol.solve(&b_u);
    let s = a_zz - a_zu * &inv_uz;
    let s = 0.5 * (&s + s.transpose());
    let n = b_z - a_zu * &inv_bu;
    let e = q.constant - 0.25 * b_u.dot(&inv_bu);
    let (g, d) = stacked(model);
    let expected = gaussian_pushforward(&s, &n, e, &g, &d, &dynamic(&model.noise_cov));
    Ok(expected.sub(&scheme.w[k - 1]))
}

/// Packages stepwise-error surrogates with search boxes spanning the
/// stage clusters of `data`, inflated about their centre by `margin`.
/// `deltas[k - 1]` is `δ_k`; cluster `k - 1` of `data` supplies its box.
pub fn build_error_model(
    deltas: Vec<QuadraticModel>,
    data: &DemoDataset,
    margin: f64,
) -> Result<StepwiseErrorModel<QuadraticModel>, LearnError> {
    if data.is_empty() {
        return Err(LearnError::Empty);
    }
    if deltas.len() != data.clusters.len() {
        return Err(LearnError::StageCount {
            expected: data.clusters.len(),
            got: deltas.len(),
        });
    }
    let stages = deltas
        .into_iter()
        .enumerate()
        .map(|(c, f)| {
            let inputs = data.inputs(c);
            let b = SearchBox::around(inputs.iter().map(Vec::as_slice), margin)?;
            Ok((f, b))
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    Ok(StepwiseErrorModel::new(Direction::Minimize, stages)?)
}
