//! Discrete-time linear-quadratic-Gaussian control of a point mass.
//!
//! States are error coordinates `z = x - x_f`. Dynamics
//! `z' = A z + B u + d + w` with `w ~ N(0, Σ)`, stage cost
//! `zᵀQz + uᵀRu` and terminal cost `zᵀQ_f z`.

use nalgebra::{DMatrix, SMatrix, SVector};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::horizon::{Direction, HorizonProblem, Policy};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqgError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("input weight S_{stage} is singular or badly conditioned")]
    Singular { stage: usize },
    #[error("stage {stage} outside {min}..={max}")]
    StageOutOfRange { stage: usize, min: usize, max: usize },
    #[error("target is not a rest point of the dynamics (drift norm {0})")]
    NonzeroDrift(f64),
}

pub type Mat<const R: usize, const C: usize> = SMatrix<f64, R, C>;
pub type Vector<const N: usize> = SVector<f64, N>;

/// The planar double integrator: state `(x, vx, y, vy)`, input `(ax, ay)`.
pub type RobotModel = LqgModel<4, 2>;

#[derive(Debug, Clone, PartialEq)]
pub struct LqgModel<const N: usize, const M: usize> {
    pub a: Mat<N, N>,
    pub b: Mat<N, M>,
    pub q: Mat<N, N>,
    pub r: Mat<M, M>,
    pub q_final: Mat<N, N>,
    pub noise_cov: Mat<N, N>,
    pub x_initial: Vector<N>,
    pub x_target: Vector<N>,
    pub horizon: usize,
    noise_factor: Mat<N, N>,
}

/// Parameters of [`RobotModel::double_integrator`].
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    pub mass: f64,
    pub step: f64,
    pub horizon: usize,
    pub x_initial: [f64; 4],
    pub x_target: [f64; 4],
    pub diag_q: [f64; 4],
    pub diag_r: [f64; 2],
    pub diag_q_final: [f64; 4],
    pub diag_sigma: [f64; 4],
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            step: 0.1,
            horizon: 10,
            x_initial: [0.0; 4],
            x_target: [100.0, 0.0, 100.0, 0.0],
            diag_q: [10.0, 1.0, 10.0, 1.0],
            diag_r: [0.5, 0.5],
            diag_q_final: [500.0, 1000.0, 500.0, 1000.0],
            diag_sigma: [5.0, 2.0, 5.0, 2.0],
        }
    }
}

fn is_symmetric<const N: usize>(m: &Mat<N, N>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

fn dynamic<const N: usize>(m: &Mat<N, N>) -> DMatrix<f64> {
    DMatrix::from_column_slice(N, N, m.as_slice())
}

fn min_eigenvalue<const N: usize>(m: &Mat<N, N>) -> f64 {
    dynamic(m).symmetric_eigenvalues().min()
}

impl<const N: usize, const M: usize> LqgModel<N, M> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat<N, N>,
        b: Mat<N, M>,
        q: Mat<N, N>,
        r: Mat<M, M>,
        q_final: Mat<N, N>,
        noise_cov: Mat<N, N>,
        x_initial: Vector<N>,
        x_target: Vector<N>,
        horizon: usize,
    ) -> Result<Self, LqgError> {
        if horizon == 0 {
            return Err(LqgError::Invalid("horizon must be at least 1".into()));
        }
        let finite = a.iter().chain(b.iter()).chain(q.iter()).chain(r.iter())
            .chain(q_final.iter()).chain(noise_cov.iter())
            .chain(x_initial.iter()).chain(x_target.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(LqgError::Invalid("non-finite entry".into()));
        }
        for (name, m) in [("Q", &q), ("Q_f", &q_final), ("Sigma", &noise_cov)] {
            if !is_symmetric(m) {
                return Err(LqgError::Invalid(format!("{name} is not symmetric")));
            }
            if min_eigenvalue(m) < -1e-12 * m.amax().max(1.0) {
                return Err(LqgError::Invalid(format!("{name} is not positive semidefinite")));
            }
        }
        if !is_symmetric(&r) || min_eigenvalue(&r) <= 0.0 {
            return Err(LqgError::Invalid("R is not positive definite".into()));
        }
        let noise_factor = psd_sqrt(&noise_cov);
        Ok(Self {
            a,
            b,
            q,
            r,
            q_final,
            noise_cov,
            x_initial,
            x_target,
            horizon,
            noise_factor,
        })
    }

    /// `d = A x_f - x_f`.
    pub fn drift(&self) -> Vector<N> {
        self.a * self.x_target - self.x_target
    }

    /// Initial error state `z_0 = x_0 - x_f`.
    pub fn z_initial(&self) -> Vector<N> {
        self.x_initial - self.x_target
    }

    /// A factor `L` with `L Lᵀ = Σ`.
    pub fn noise_factor(&self) -> &Mat<N, N> {
        &self.noise_factor
    }

    pub fn sample_noise(&self, rng: &mut seed::Rng) -> Vector<N> {
        let xi = Vector::<N>::from_fn(|_, _| StandardNormal.sample(rng));
        self.noise_factor * xi
    }

    /// `A z + B u + d`, the conditional mean of the next state.
    pub fn mean_next(&self, z: &Vector<N>, u: &Vector<M>) -> Vector<N> {
        self.a * z + self.b * u + self.drift()
    }

    pub fn stage_cost(&self, z: &Vector<N>, u: &Vector<M>) -> f64 {
        (z.transpose() * self.q * z)[0] + (u.transpose() * self.r * u)[0]
    }

    pub fn terminal_cost(&self, z: &Vector<N>) -> f64 {
        (z.transpose() * self.q_final * z)[0]
    }

    pub fn with_noise(&self, noise_cov: Mat<N, N>) -> Result<Self, LqgError> {
        Self::new(
            self.a, self.b, self.q, self.r, self.q_final, noise_cov,
            self.x_initial, self.x_target, self.horizon,
        )
    }
}

impl RobotModel {
    pub fn double_integrator(p: &RobotParams) -> Result<Self, LqgError> {
        if !(p.mass > 0.0 && p.step > 0.0) {
            return Err(LqgError::Invalid("mass and step must be positive".into()));
        }
        if p.diag_q.iter().chain(&p.diag_q_final).chain(&p.diag_sigma).any(|v| *v < 0.0) {
            return Err(LqgError::Invalid("negative diagonal weight".into()));
        }
        let t = p.step;
        let m = p.mass;
        #[rustfmt::skip]
        let a = Mat::<4, 4>::new(
            1.0, t, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, t,
            0.0, 0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let b = Mat::<4, 2>::new(
            t * t / (2.0 * m), 0.0,
            t / m, 0.0,
            0.0, t * t / (2.0 * m),
            0.0, t / m,
        );
        Self::new(
            a,
            b,
            Mat::from_diagonal(&Vector::from(p.diag_q)),
            Mat::from_diagonal(&Vector::from(p.diag_r)),
            Mat::from_diagonal(&Vector::from(p.diag_q_final)),
            Mat::from_diagonal(&Vector::from(p.diag_sigma)),
            Vector::from(p.x_initial),
            Vector::from(p.x_target),
            p.horizon,
        )
    }

    pub fn reference() -> Self {
        Self::double_integrator(&RobotParams::default()).expect("default parameters are valid")
    }
}

fn psd_sqrt<const N: usize>(m: &Mat<N, N>) -> Mat<N, N> {
    if let Some(ch) = m.cholesky() {
        return ch.l();
    }
    let eig = dynamic(m).symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    Mat::from_column_slice(factor.as_slice())
}

/// Backward Riccati recursion for an [`LqgModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<const N: usize, const M: usize> {
    model: LqgModel<N, M>,
    /// `P_0..P_H`
    pub p: Vec<Mat<N, N>>,
    /// `K_0..K_{H-1}`
    pub k: Vec<Mat<M, N>>,
    /// `c_0..c_H`
    pub c: Vec<f64>,
    /// `S_1..S_H` stored at index `k - 1`.
    pub s: Vec<Mat<M, M>>,
}

pub fn riccati_solve<const N: usize, const M: usize>(
    model: &LqgModel<N, M>,
) -> Result<RiccatiSolution<N, M>, LqgError> {
    let drift = model.drift().amax();
    if drift > 1e-9 * model.x_target.amax().max(1.0) {
        return Err(LqgError::NonzeroDrift(drift));
    }
    let h = model.horizon;
    let (a, b) = (&model.a, &model.b);
    let mut p = vec![Mat::<N, N>::zeros(); h + 1];
    let mut k = vec![Mat::<M, N>::zeros(); h];
    let mut c = vec![0.0; h + 1];
    let mut s = vec![Mat::<M, M>::zeros(); h];
    p[h] = model.q_final;
    for stage in (0..h).rev() {
        let next = &p[stage + 1];
        let s_next = model.r + b.transpose() * next * b;
        let eig = dynamic(&s_next).symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0 && hi / lo < 1e12) {
            return Err(LqgError::Singular { stage: stage + 1 });
        }
        let chol = s_next.cholesky().ok_or(LqgError::Singular { stage: stage + 1 })?;
        let bpa = b.transpose() * next * a;
        let gain = chol.solve(&bpa);
        let mut pk = model.q + a.transpose() * next * a - bpa.transpose() * gain;
        pk = 0.5 * (pk + pk.transpose());
        c[stage] = c[stage + 1] + (model.noise_cov * next).trace();
        p[stage] = pk;
        k[stage] = gain;
        s[stage] = s_next;
    }
    Ok(RiccatiSolution {
        model: model.clone(),
        p,
        k,
        c,
        s,
    })
}

impl<const N: usize, const M: usize> RiccatiSolution<N, M> {
    pub fn model(&self) -> &LqgModel<N, M> {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn check(&self, stage: usize, min: usize, max: usize) -> Result<(), LqgError> {
        if stage < min || stage > max {
            Err(LqgError::StageOutOfRange { stage, min, max })
        } else {
            Ok(())
        }
    }

    /// `μ*_k = -K_k z`.
    pub fn action(&self, stage: usize, z: &Vector<N>) -> Vector<M> {
        -(self.k[stage] * z)
    }

    /// `V*_k(z) = zᵀP_k z + c_k` for `0 <= k <= H`.
    pub fn value_to_go(&self, stage: usize, z: &Vector<N>) -> Result<f64, LqgError> {
        self.check(stage, 0, self.horizon())?;
        Ok((z.transpose() * self.p[stage] * z)[0] + self.c[stage])
    }

    /// `W*_k(z, u) = Tr(P_k Σ) + mᵀP_k m + c_k` with `m = A z + B u + d`,
    /// for `1 <= k <= H`.
    pub fn evtg_exact(&self, k: usize, z: &Vector<N>, u: &Vector<M>) -> Result<f64, LqgError> {
        self.check(k, 1, self.horizon())?;
        let m = self.model.mean_next(z, u);
        let pk = &self.p[k];
        Ok((pk * self.model.noise_cov).trace() + (m.transpose() * pk * m)[0] + self.c[k])
    }

    /// `Q*_k(z, u) = zᵀQz + uᵀRu + W*_{k+1}(z, u)` for `0 <= k <= H-1`.
    pub fn q_exact(&self, stage: usize, z: &Vector<N>, u: &Vector<M>) -> Result<f64, LqgError> {
        self.check(stage, 0, self.horizon() - 1)?;
        Ok(self.model.stage_cost(z, u) + self.evtg_exact(stage + 1, z, u)?)
    }

    /// The optimal feedback policy.
    pub fn policy(&self) -> LinearPolicy<N, M> {
        LinearPolicy {
            gains: self.k.clone(),
        }
    }
}

/// `u_k = -K_k z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy<const N: usize, const M: usize> {
    pub gains: Vec<Mat<M, N>>,
}

impl<const N: usize, const M: usize> Policy<LqgProblem<N, M>> for LinearPolicy<N, M> {
    fn act(&self, _problem: &LqgProblem<N, M>, stage: usize, state: &Vector<N>) -> Vector<M> {
        -(self.gains[stage] * state)
    }
}

/// An [`LqgModel`] as a cost-minimising [`HorizonProblem`] over error states.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgProblem<const N: usize, const M: usize> {
    model: LqgModel<N, M>,
    initial: Vector<N>,
}

impl<const N: usize, const M: usize> LqgProblem<N, M> {
    pub fn new(model: LqgModel<N, M>) -> Self {
        let initial = model.z_initial();
        Self { model, initial }
    }

    /// The same problem started from error state `z0`.
    pub fn with_initial(&self, z0: Vector<N>) -> Self {
        Self {
            model: self.model.clone(),
            initial: z0,
        }
    }

    pub fn model(&self) -> &LqgModel<N, M> {
        &self.model
    }
}

impl<const N: usize, const M: usize> HorizonProblem for LqgProblem<N, M> {
    type State = Vector<N>;
    type Action = Vector<M>;
    type Noise = Vector<N>;

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn direction(&self) -> Direction {
        Direction::Minimize
    }

    fn initial_state(&self) -> Vector<N> {
        self.initial
    }

    fn sample_noise(&self, _stage: usize, rng: &mut seed::Rng) -> Vector<N> {
        self.model.sample_noise(rng)
    }

    fn transition(&self, _stage: usize, z: &Vector<N>, u: &Vector<M>, w: &Vector<N>) -> Vector<N> {
        self.model.mean_next(z, u) + w
    }

    fn stage_reward(&self, _stage: usize, z: &Vector<N>, u: &Vector<M>) -> f64 {
        self.model.stage_cost(z, u)
    }

    fn terminal_reward(&self, z: &Vector<N>) -> f64 {
        self.model.terminal_cost(z)
    }

    fn is_feasible(&self, _stage: usize, _z: &Vector<N>, u: &Vector<M>) -> bool {
        u.iter().all(|v| v.is_finite())
    }
}
