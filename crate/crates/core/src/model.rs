//! State-space model descriptions.
//!
//! A linear model is
//!
//! ```text
//! x_t = F_t x_{t-1} + v_t,   v_t ~ N(0, Q_t)
//! y_t = Z_t x_t + e_t,       e_t ~ N(0, V_t)
//! x_0 ~ N(a0, Q0)
//! ```
//!
//! with time index `t = 1, 2, ...`. Nonlinear models replace the two maps by
//! `f_t(x, u_t, v)` and `z_t(x, w_t, e)` plus their Jacobians. Both kinds
//! implement [`StateSpace`], which is all the filters and simulators need.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{check_psd, Matrix, Vector};

pub type MatrixFn = Arc<dyn Fn(usize) -> Matrix + Send + Sync>;

/// A matrix indexed by the (1-based) time step.
#[derive(Clone)]
pub enum MatrixSeq {
    Constant(Matrix),
    /// Entry `k` is the matrix for step `t = k + 1`.
    PerStep(Vec<Matrix>),
    Function {
        rows: usize,
        cols: usize,
        f: MatrixFn,
    },
}

impl fmt::Debug for MatrixSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSeq::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            MatrixSeq::PerStep(v) => write!(f, "PerStep({} steps)", v.len()),
            MatrixSeq::Function { rows, cols, .. } => write!(f, "Function({rows}x{cols})"),
        }
    }
}

impl From<Matrix> for MatrixSeq {
    fn from(m: Matrix) -> Self {
        MatrixSeq::Constant(m)
    }
}

impl MatrixSeq {
    pub fn at(&self, t: usize) -> Result<Matrix> {
        match self {
            MatrixSeq::Constant(m) => Ok(m.clone()),
            MatrixSeq::PerStep(v) => t
                .checked_sub(1)
                .and_then(|k| v.get(k))
                .cloned()
                .ok_or_else(|| Error::InvalidModel(format!("no matrix for step {t}"))),
            MatrixSeq::Function { rows, cols, f } => {
                let m = f(t);
                dim_check(m.shape() == (*rows, *cols), || {
                    format!("matrix function returned {:?} at t={t}", m.shape())
                })?;
                Ok(m)
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixSeq::Constant(m) => m.shape(),
            MatrixSeq::PerStep(v) => v.first().map(|m| m.shape()).unwrap_or((0, 0)),
            MatrixSeq::Function { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixSeq::Constant(_))
    }

    fn validate(&self, shape: (usize, usize), psd: bool, what: &str) -> Result<()> {
        let check = |m: &Matrix| -> Result<()> {
            dim_check(m.shape() == shape, || {
                format!("{what} is {:?}, expected {:?}", m.shape(), shape)
            })?;
            if psd {
                check_psd(m, what)?;
            } else if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        match self {
            MatrixSeq::Constant(m) => check(m),
            MatrixSeq::PerStep(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidModel(format!("{what} has no steps")));
                }
                v.iter().try_for_each(check)
            }
            MatrixSeq::Function { rows, cols, .. } => {
                dim_check((*rows, *cols) == shape, || format!("{what} has wrong declared shape"))
            }
        }
    }
}

/// First-order expansion of a model map around a point.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// Map evaluated at the point with the noise at its mean.
    pub mean: Vector,
    /// Jacobian with respect to the state.
    pub state_jac: Matrix,
    /// Jacobian with respect to the noise; `None` means the identity.
    pub noise_jac: Option<Matrix>,
}

/// Everything the simulators and filters need to know about a model.
pub trait StateSpace: Send + Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn innovation_dim(&self) -> usize {
        self.state_dim()
    }
    fn error_dim(&self) -> usize {
        self.obs_dim()
    }
    fn initial_mean(&self) -> &Vector;
    fn initial_cov(&self) -> &Matrix;
    fn innovation_cov(&self, t: usize) -> Result<Matrix>;
    fn error_cov(&self, t: usize) -> Result<Matrix>;
    fn innovation_mean(&self, _t: usize) -> Vector {
        Vector::zeros(self.innovation_dim())
    }
    fn error_mean(&self, _t: usize) -> Vector {
        Vector::zeros(self.error_dim())
    }
    /// Whether `Q_t` and `V_t` are the same for every step.
    fn constant_noise(&self) -> bool {
        false
    }
    /// Apply the state map with an explicit innovation draw.
    fn transition(&self, t: usize, x: &Vector, v: &Vector) -> Result<Vector>;
    /// Apply the observation map with an explicit error draw.
    fn observe(&self, t: usize, x: &Vector, e: &Vector) -> Result<Vector>;
    fn linearize_transition(&self, t: usize, x: &Vector) -> Result<Linearization>;
    fn linearize_observation(&self, t: usize, x: &Vector) -> Result<Linearization>;
    fn as_linear(&self) -> Option<&LinearSsm> {
        None
    }
}

/// Linear, possibly time-varying, Gaussian state-space model.
#[derive(Debug, Clone)]
pub struct LinearSsm {
    pub transition: MatrixSeq,
    pub observation: MatrixSeq,
    pub innovation_cov: MatrixSeq,
    pub error_cov: MatrixSeq,
    pub a0: Vector,
    pub q0: Matrix,
}

impl LinearSsm {
    pub fn new(
        transition: impl Into<MatrixSeq>,
        observation: impl Into<MatrixSeq>,
        innovation_cov: impl Into<MatrixSeq>,
        error_cov: impl Into<MatrixSeq>,
        a0: Vector,
        q0: Matrix,
    ) -> Result<Self> {
        let model = Self {
            transition: transition.into(),
            observation: observation.into(),
            innovation_cov: innovation_cov.into(),
            error_cov: error_cov.into(),
            a0,
            q0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.a0.len();
        if p == 0 {
            return Err(Error::InvalidModel("state dimension must be positive".into()));
        }
        let q = self.observation.shape().0;
        if q == 0 {
            return Err(Error::InvalidModel("observation dimension must be positive".into()));
        }
        self.transition.validate((p, p), false, "F")?;
        self.observation.validate((q, p), false, "Z")?;
        self.innovation_cov.validate((p, p), true, "Q")?;
        self.error_cov.validate((q, q), true, "V")?;
        dim_check(self.q0.shape() == (p, p), || format!("Q0 is {:?}", self.q0.shape()))?;
        check_psd(&self.q0, "Q0")?;
        if self.a0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("a0 has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn f(&self, t: usize) -> Result<Matrix> {
        self.transition.at(t)
    }
    pub fn z(&self, t: usize) -> Result<Matrix> {
        self.observation.at(t)
    }
    pub fn q(&self, t: usize) -> Result<Matrix> {
        self.innovation_cov.at(t)
    }
    pub fn v(&self, t: usize) -> Result<Matrix> {
        self.error_cov.at(t)
    }
}

impl StateSpace for LinearSsm {
    fn state_dim(&self) -> usize {
        self.a0.len()
    }
    fn obs_dim(&self) -> usize {
        self.observation.shape().0
    }
    fn initial_mean(&self) -> &Vector {
        &self.a0
    }
    fn initial_cov(&self) -> &Matrix {
        &self.q0
    }
    fn innovation_cov(&self, t: usize) -> Result<Matrix> {
        self.q(t)
    }
    fn error_cov(&self, t: usize) -> Result<Matrix> {
        self.v(t)
    }
    fn constant_noise(&self) -> bool {
        self.innovation_cov.is_constant() && self.error_cov.is_constant()
    }
    fn transition(&self, t: usize, x: &Vector, v: &Vector) -> Result<Vector> {
        Ok(self.f(t)? * x + v)
    }
    fn observe(&self, t: usize, x: &Vector, e: &Vector) -> Result<Vector> {
        Ok(self.z(t)? * x + e)
    }
    fn linearize_transition(&self, t: usize, x: &Vector) -> Result<Linearization> {
        let f = self.f(t)?;
        Ok(Linearization {
            mean: &f * x,
            state_jac: f,
            noise_jac: None,
        })
    }
    fn linearize_observation(&self, t: usize, x: &Vector) -> Result<Linearization> {
        let z = self.z(t)?;
        Ok(Linearization {
            mean: &z * x,
            state_jac: z,
            noise_jac: None,
        })
    }
    fn as_linear(&self) -> Option<&LinearSsm> {
        Some(self)
    }
}

/// `(t, x, control, noise) -> vector`
pub type ModelFn = Arc<dyn Fn(usize, &Vector, &Vector, &Vector) -> Vector + Send + Sync>;
/// `(t, x, control, noise) -> Jacobian`
pub type JacobianFn = Arc<dyn Fn(usize, &Vector, &Vector, &Vector) -> Matrix + Send + Sync>;

/// Nonlinear state-space model
///
/// `x_t = f_t(x_{t-1}, u_t, v_t)`, `y_t = z_t(x_t, w_t, e_t)`.
///
/// Jacobians left as `None` are approximated by central differences.
#[derive(Clone)]
pub struct NonlinearSsm {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub innovation_dim: usize,
    pub error_dim: usize,
    pub f: ModelFn,
    pub z: ModelFn,
    pub jac_f_x: Option<JacobianFn>,
    pub jac_f_v: Option<JacobianFn>,
    pub jac_z_x: Option<JacobianFn>,
    pub jac_z_e: Option<JacobianFn>,
    pub innovation_mean: Vector,
    pub error_mean: Vector,
    pub innovation_cov: MatrixSeq,
    pub error_cov: MatrixSeq,
    pub a0: Vector,
    pub q0: Matrix,
    /// Controls `u_t` (entry `t - 1`); empty means no control.
    pub u: Vec<Vector>,
    /// Controls `w_t` (entry `t - 1`); empty means no control.
    pub w: Vec<Vector>,
}

impl fmt::Debug for NonlinearSsm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSsm")
            .field("state_dim", &self.state_dim)
            .field("obs_dim", &self.obs_dim)
            .field("innovation_cov", &self.innovation_cov)
            .field("error_cov", &self.error_cov)
            .field("a0", &self.a0)
            .finish_non_exhaustive()
    }
}

/// Central-difference Jacobian of `g` at `at`.
pub fn finite_difference_jacobian(g: impl Fn(&Vector) -> Vector, at: &Vector) -> Matrix {
    let h = 1e-6 * (1.0 + at.norm());
    let base = g(at);
    let mut jac = Matrix::zeros(base.len(), at.len());
    for j in 0..at.len() {
        let mut plus = at.clone();
        let mut minus = at.clone();
        plus[j] += h;
        minus[j] -= h;
        let col = (g(&plus) - g(&minus)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

impl NonlinearSsm {
    /// View a linear model through the nonlinear interface, with exact Jacobians.
    pub fn from_linear(model: &LinearSsm) -> Self {
        let p = model.state_dim();
        let q = model.obs_dim();
        let fm = model.transition.clone();
        let zm = model.observation.clone();
        let (fm2, zm2) = (fm.clone(), zm.clone());
        NonlinearSsm {
            state_dim: p,
            obs_dim: q,
            innovation_dim: p,
            error_dim: q,
            f: Arc::new(move |t, x, _u, v| fm.at(t).expect("F defined for t") * x + v),
            z: Arc::new(move |t, x, _w, e| zm.at(t).expect("Z defined for t") * x + e),
            jac_f_x: Some(Arc::new(move |t, _x, _u, _v| fm2.at(t).expect("F defined for t"))),
            jac_f_v: Some(Arc::new(move |_t, _x, _u, _v| Matrix::identity(p, p))),
            jac_z_x: Some(Arc::new(move |t, _x, _w, _e| zm2.at(t).expect("Z defined for t"))),
            jac_z_e: Some(Arc::new(move |_t, _x, _w, _e| Matrix::identity(q, q))),
            innovation_mean: Vector::zeros(p),
            error_mean: Vector::zeros(q),
            innovation_cov: model.innovation_cov.clone(),
            error_cov: model.error_cov.clone(),
            a0: model.a0.clone(),
            q0: model.q0.clone(),
            u: Vec::new(),
            w: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.state_dim, self.obs_dim);
        if p == 0 || q == 0 {
            return Err(Error::InvalidModel("dimensions must be positive".into()));
        }
        dim_check(self.a0.len() == p, || "a0 length".into())?;
        dim_check(self.q0.shape() == (p, p), || "Q0 shape".into())?;
        check_psd(&self.q0, "Q0")?;
        dim_check(self.innovation_mean.len() == self.innovation_dim, || {
            "innovation mean length".into()
        })?;
        dim_check(self.error_mean.len() == self.error_dim, || "error mean length".into())?;
        self.innovation_cov
            .validate((self.innovation_dim, self.innovation_dim), true, "Q")?;
        self.error_cov.validate((self.error_dim, self.error_dim), true, "V")?;
        Ok(())
    }

    fn control(seq: &[Vector], t: usize) -> Vector {
        if seq.is_empty() {
            Vector::zeros(0)
        } else {
            seq[(t.max(1) - 1).min(seq.len() - 1)].clone()
        }
    }

    pub fn u_at(&self, t: usize) -> Vector {
        Self::control(&self.u, t)
    }

    pub fn w_at(&self, t: usize) -> Vector {
        Self::control(&self.w, t)
    }

    pub fn jacobian_f_x(&self, t: usize, x: &Vector) -> Matrix {
        let (u, v) = (self.u_at(t), self.innovation_mean.clone());
        match &self.jac_f_x {
            Some(j) => j(t, x, &u, &v),
            None => finite_difference_jacobian(|xx| (self.f)(t, xx, &u, &v), x),
        }
    }

    pub fn jacobian_f_v(&self, t: usize, x: &Vector) -> Matrix {
        let (u, v) = (self.u_at(t), self.innovation_mean.clone());
        match &self.jac_f_v {
            Some(j) => j(t, x, &u, &v),
            None => finite_difference_jacobian(|vv| (self.f)(t, x, &u, vv), &v),
        }
    }

    pub fn jacobian_z_x(&self, t: usize, x: &Vector) -> Matrix {
        let (w, e) = (self.w_at(t), self.error_mean.clone());
        match &self.jac_z_x {
            Some(j) => j(t, x, &w, &e),
            None => finite_difference_jacobian(|xx| (self.z)(t, xx, &w, &e), x),
        }
    }

    pub fn jacobian_z_e(&self, t: usize, x: &Vector) -> Matrix {
        let (w, e) = (self.w_at(t), self.error_mean.clone());
        match &self.jac_z_e {
            Some(j) => j(t, x, &w, &e),
            None => finite_difference_jacobian(|ee| (self.z)(t, x, &w, ee), &e),
        }
    }
}

fn check_jacobian(m: &Matrix, shape: (usize, usize), what: &str) -> Result<()> {
    dim_check(m.shape() == shape, || {
        format!("{what} Jacobian is {:?}, expected {:?}", m.shape(), shape)
    })?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} Jacobian has non-finite entries")));
    }
    Ok(())
}

impl StateSpace for NonlinearSsm {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }
    fn innovation_dim(&self) -> usize {
        self.innovation_dim
    }
    fn error_dim(&self) -> usize {
        self.error_dim
    }
    fn initial_mean(&self) -> &Vector {
        &self.a0
    }
    fn initial_cov(&self) -> &Matrix {
        &self.q0
    }
    fn innovation_cov(&self, t: usize) -> Result<Matrix> {
        self.innovation_cov.at(t)
    }
    fn error_cov(&self, t: usize) -> Result<Matrix> {
        self.error_cov.at(t)
    }
    fn innovation_mean(&self, _t: usize) -> Vector {
        self.innovation_mean.clone()
    }
    fn error_mean(&self, _t: usize) -> Vector {
        self.error_mean.clone()
    }
    fn constant_noise(&self) -> bool {
        self.innovation_cov.is_constant() && self.error_cov.is_constant()
    }
    fn transition(&self, t: usize, x: &Vector, v: &Vector) -> Result<Vector> {
        let out = (self.f)(t, x, &self.u_at(t), v);
        dim_check(out.len() == self.state_dim, || "f returned wrong length".into())?;
        Ok(out)
    }
    fn observe(&self, t: usize, x: &Vector, e: &Vector) -> Result<Vector> {
        let out = (self.z)(t, x, &self.w_at(t), e);
        dim_check(out.len() == self.obs_dim, || "z returned wrong length".into())?;
        Ok(out)
    }
    fn linearize_transition(&self, t: usize, x: &Vector) -> Result<Linearization> {
        let mean = self.transition(t, x, &self.innovation_mean)?;
        let state_jac = self.jacobian_f_x(t, x);
        let noise_jac = self.jacobian_f_v(t, x);
        check_jacobian(&state_jac, (self.state_dim, self.state_dim), "df/dx")?;
        check_jacobian(&noise_jac, (self.state_dim, self.innovation_dim), "df/dv")?;
        Ok(Linearization {
            mean,
            state_jac,
            noise_jac: Some(noise_jac),
        })
    }
    fn linearize_observation(&self, t: usize, x: &Vector) -> Result<Linearization> {
        let mean = self.observe(t, x, &self.error_mean)?;
        let state_jac = self.jacobian_z_x(t, x);
        let noise_jac = self.jacobian_z_e(t, x);
        check_jacobian(&state_jac, (self.obs_dim, self.state_dim), "dz/dx")?;
        check_jacobian(&noise_jac, (self.obs_dim, self.error_dim), "dz/de")?;
        Ok(Linearization {
            mean,
            state_jac,
            noise_jac: Some(noise_jac),
        })
    }
}

/// Either kind of model.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearSsm),
    Nonlinear(NonlinearSsm),
}

impl From<LinearSsm> for Model {
    fn from(m: LinearSsm) -> Self {
        Model::Linear(m)
    }
}

impl From<NonlinearSsm> for Model {
    fn from(m: NonlinearSsm) -> Self {
        Model::Nonlinear(m)
    }
}

impl Model {
    fn inner(&self) -> &dyn StateSpace {
        match self {
            Model::Linear(m) => m,
            Model::Nonlinear(m) => m,
        }
    }

    pub fn as_nonlinear(&self) -> Option<&NonlinearSsm> {
        match self {
            Model::Nonlinear(m) => Some(m),
            Model::Linear(_) => None,
        }
    }
}

impl StateSpace for Model {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn obs_dim(&self) -> usize {
        self.inner().obs_dim()
    }
    fn innovation_dim(&self) -> usize {
        self.inner().innovation_dim()
    }
    fn error_dim(&self) -> usize {
        self.inner().error_dim()
    }
    fn initial_mean(&self) -> &Vector {
        self.inner().initial_mean()
    }
    fn initial_cov(&self) -> &Matrix {
        self.inner().initial_cov()
    }
    fn innovation_cov(&self, t: usize) -> Result<Matrix> {
        self.inner().innovation_cov(t)
    }
    fn error_cov(&self, t: usize) -> Result<Matrix> {
        self.inner().error_cov(t)
    }
    fn innovation_mean(&self, t: usize) -> Vector {
        self.inner().innovation_mean(t)
    }
    fn error_mean(&self, t: usize) -> Vector {
        self.inner().error_mean(t)
    }
    fn constant_noise(&self) -> bool {
        self.inner().constant_noise()
    }
    fn transition(&self, t: usize, x: &Vector, v: &Vector) -> Result<Vector> {
        self.inner().transition(t, x, v)
    }
    fn observe(&self, t: usize, x: &Vector, e: &Vector) -> Result<Vector> {
        self.inner().observe(t, x, e)
    }
    fn linearize_transition(&self, t: usize, x: &Vector) -> Result<Linearization> {
        self.inner().linearize_transition(t, x)
    }
    fn linearize_observation(&self, t: usize, x: &Vector) -> Result<Linearization> {
        self.inner().linearize_observation(t, x)
    }
    fn as_linear(&self) -> Option<&LinearSsm> {
        self.inner().as_linear()
    }
}

/// Outcome of comparing a nonlinear model's Jacobians with central differences.
#[derive(Debug, Clone)]
pub struct JacobianReport {
    /// `(name, max relative deviation)` for each of the four Jacobians.
    pub deviations: Vec<(&'static str, f64)>,
    pub tolerance: f64,
}

impl JacobianReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() < self.tolerance
    }
}

fn relative_deviation(analytic: &Matrix, numeric: &Matrix) -> f64 {
    if analytic.shape() != numeric.shape() {
        return f64::INFINITY;
    }
    (analytic - numeric).amax() / numeric.amax().max(1.0)
}

/// Compare the model's Jacobians at `(t, x)` against central differences.
pub fn jacobian_check(model: &NonlinearSsm, t: usize, x: &Vector, tol: f64) -> JacobianReport {
    let (u, w) = (model.u_at(t), model.w_at(t));
    let (vbar, ebar) = (model.innovation_mean.clone(), model.error_mean.clone());
    let fd_fx = finite_difference_jacobian(|xx| (model.f)(t, xx, &u, &vbar), x);
    let fd_fv = finite_difference_jacobian(|vv| (model.f)(t, x, &u, vv), &vbar);
    let fd_zx = finite_difference_jacobian(|xx| (model.z)(t, xx, &w, &ebar), x);
    let fd_ze = finite_difference_jacobian(|ee| (model.z)(t, x, &w, ee), &ebar);
    JacobianReport {
        deviations: vec![
            ("df/dx", relative_deviation(&model.jacobian_f_x(t, x), &fd_fx)),
            ("df/dv", relative_deviation(&model.jacobian_f_v(t, x), &fd_fv)),
            ("dz/dx", relative_deviation(&model.jacobian_z_x(t, x), &fd_zx)),
            ("dz/de", relative_deviation(&model.jacobian_z_e(t, x), &fd_ze)),
        ],
        tolerance: tol,
    }
}

/// Built-in models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    /// Scalar steady-state model, `F = Z = Q = V = 1`.
    SimA,
    /// Three-dimensional model whose second state coordinate is invisible to `Z`.
    SimB,
    /// Two-dimensional random walk plus white noise observed through a 2x2 `Z`.
    #[serde(rename = "rw2d")]
    RandomWalk2D,
    /// AR(2) state observed with noise.
    Ar2,
    /// Linear time-invariant altitude model.
    M1,
    /// Linear time-varying altitude/pitch model driven by vehicle speed.
    M2,
    /// Quadratic altitude/speed/pitch model (nonlinear).
    M3,
}

impl ModelPreset {
    pub const ALL: [ModelPreset; 7] = [
        ModelPreset::SimA,
        ModelPreset::SimB,
        ModelPreset::RandomWalk2D,
        ModelPreset::Ar2,
        ModelPreset::M1,
        ModelPreset::M2,
        ModelPreset::M3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelPreset::SimA => "sima",
            ModelPreset::SimB => "simb",
            ModelPreset::RandomWalk2D => "rw2d",
            ModelPreset::Ar2 => "ar2",
            ModelPreset::M1 => "m1",
            ModelPreset::M2 => "m2",
            ModelPreset::M3 => "m3",
        }
    }

    pub fn default_horizon(&self) -> usize {
        match self {
            ModelPreset::SimA | ModelPreset::SimB => 50,
            ModelPreset::RandomWalk2D | ModelPreset::Ar2 => 100,
            ModelPreset::M1 | ModelPreset::M2 | ModelPreset::M3 => 500,
        }
    }

    pub fn build(&self) -> Model {
        build_preset(*self)
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelPreset::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_row_slice(d))
}

fn vec_of(d: &[f64]) -> Vector {
    Vector::from_row_slice(d)
}

/// Synthetic stand-in for the vehicle measurement channels the application
/// models were built for: a smooth speed profile and a starting altitude.
#[derive(Debug, Clone, Copy)]
pub struct VehicleDriver {
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Altitude at the first step in meters.
    pub h1: f64,
    /// Mean speed in m/s.
    pub base_speed: f64,
    /// Amplitude of the periodic speed variation in m/s.
    pub speed_swing: f64,
    /// Period of the speed variation in steps.
    pub period: f64,
}

impl Default for VehicleDriver {
    fn default() -> Self {
        Self {
            dt: 0.1,
            h1: 250.0,
            base_speed: 15.0,
            speed_swing: 5.0,
            period: 300.0,
        }
    }
}

impl VehicleDriver {
    pub fn speed(&self, t: usize) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / self.period;
        self.base_speed + self.speed_swing * phase.sin()
    }

    /// `F_t` of the time-varying altitude model.
    pub fn m2_transition(&self, t: usize) -> Matrix {
        // F_0 is not used by the recursion; step 0 borrows the first speed.
        let sp = self.speed(t.max(1));
        mat(3, 3, &[1.0, sp * self.dt, 0.0, 0.0, 1.0, self.dt, 0.0, 0.0, 0.0])
    }
}

/// `A` and `B` of the quadratic model, with `A = (A^1 | ... | A^5)`.
pub fn m3_matrices(dt: f64) -> (Matrix, Matrix) {
    let mut a = Matrix::zeros(5, 25);
    // A^2 (columns 5..10) carries the speed-times-pitch altitude term.
    a[(0, 5 + 3)] = dt;
    let b = mat(
        5,
        5,
        &[
            1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, dt, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, dt, //
            0.0, 0.0, 0.0, 0.0, 0.0,
        ],
    );
    (a, b)
}

/// `A (x ⊗ x) + B x`.
pub fn quadratic_map(a: &Matrix, b: &Matrix, x: &Vector) -> Vector {
    a * x.kronecker(x) + b * x
}

/// `B + Σ_l (A^l x e_lᵀ + x_l A^l)`.
pub fn quadratic_map_jacobian(a: &Matrix, b: &Matrix, x: &Vector) -> Matrix {
    let p = x.len();
    let mut jac = b.clone();
    for l in 0..p {
        let al = a.columns(l * p, p);
        let alx = &al * x;
        for i in 0..p {
            jac[(i, l)] += alx[i];
        }
        jac += al * x[l];
    }
    jac
}

/// Build one of the built-in models.
pub fn build_preset(name: ModelPreset) -> Model {
    let lin = |f: Matrix, z: Matrix, q: Matrix, v: Matrix, a0: Vector, q0: Matrix| {
        Model::Linear(LinearSsm::new(f, z, q, v, a0, q0).expect("preset parameters are valid"))
    };
    let driver = VehicleDriver::default();
    match name {
        ModelPreset::SimA => lin(
            mat(1, 1, &[1.0]),
            mat(1, 1, &[1.0]),
            mat(1, 1, &[1.0]),
            mat(1, 1, &[1.0]),
            vec_of(&[1.0]),
            mat(1, 1, &[1.0]),
        ),
        ModelPreset::SimB => lin(
            mat(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            diag(&[0.0, 0.0, 0.001]),
            diag(&[0.1, 0.001]),
            vec_of(&[0.0, 0.0, 0.0]),
            diag(&[1.0, 0.1, 0.001]),
        ),
        ModelPreset::RandomWalk2D => lin(
            mat(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            mat(2, 2, &[0.3, 1.0, -0.3, 1.0]),
            diag(&[0.0, 9.0]),
            diag(&[9.0, 9.0]),
            vec_of(&[20.0, 0.0]),
            Matrix::zeros(2, 2),
        ),
        ModelPreset::Ar2 => lin(
            mat(2, 2, &[1.0, -0.9, 1.0, 0.0]),
            mat(1, 2, &[1.0, 0.0]),
            diag(&[1.0, 0.0]),
            diag(&[1.0]),
            vec_of(&[0.0, 0.0]),
            Matrix::zeros(2, 2),
        ),
        ModelPreset::M1 => lin(
            mat(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            diag(&[0.0, 0.0, 0.01]),
            diag(&[5.0, 0.01]),
            vec_of(&[driver.h1, 0.0, 0.0]),
            diag(&[5.0, 1.0, 0.01]),
        ),
        ModelPreset::M2 => {
            let f = MatrixSeq::Function {
                rows: 3,
                cols: 3,
                f: Arc::new(move |t| driver.m2_transition(t)),
            };
            Model::Linear(
                LinearSsm::new(
                    f,
                    mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
                    diag(&[0.0, 0.0, 0.05]),
                    diag(&[5.0, 0.005]),
                    vec_of(&[driver.h1, 0.0, 0.0]),
                    diag(&[5.0, 0.005, 0.005]),
                )
                .expect("preset parameters are valid"),
            )
        }
        ModelPreset::M3 => Model::Nonlinear(m3_model(driver)),
    }
}

fn m3_model(driver: VehicleDriver) -> NonlinearSsm {
    let (a, b) = m3_matrices(driver.dt);
    let (a1, b1, a2, b2) = (a.clone(), b.clone(), a, b);
    let z = mat(
        4,
        5,
        &[
            1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0,
        ],
    );
    let (z1, z2) = (z.clone(), z);
    NonlinearSsm {
        state_dim: 5,
        obs_dim: 4,
        innovation_dim: 5,
        error_dim: 4,
        f: Arc::new(move |_t, x, _u, v| quadratic_map(&a1, &b1, x) + v),
        z: Arc::new(move |_t, x, _w, e| &z1 * x + e),
        jac_f_x: Some(Arc::new(move |_t, x, _u, _v| quadratic_map_jacobian(&a2, &b2, x))),
        jac_f_v: Some(Arc::new(|_t, _x, _u, _v| Matrix::identity(5, 5))),
        jac_z_x: Some(Arc::new(move |_t, _x, _w, _e| z2.clone())),
        jac_z_e: Some(Arc::new(|_t, _x, _w, _e| Matrix::identity(4, 4))),
        innovation_mean: Vector::zeros(5),
        error_mean: Vector::zeros(4),
        innovation_cov: diag(&[0.0, 0.0, 2.0, 0.0, 0.005]).into(),
        error_cov: diag(&[5.0, 2.0, 2.0, 0.005]).into(),
        a0: vec_of(&[driver.h1, driver.speed(1), 0.0, 0.0, 0.0]),
        q0: diag(&[5.0, 2.0, 2.0, 0.005, 0.005]),
        u: Vec::new(),
        w: Vec::new(),
    }
}

/// Simulate an uncontaminated trajectory (`x_real == x_ideal`).
pub fn simulate_ideal(
    model: &dyn StateSpace,
    horizon: usize,
    seed: u64,
) -> Result<crate::contamination::Trajectory> {
    crate::contamination::simulate_contaminated(
        model,
        horizon,
        &crate::contamination::ContaminationSpec::none(),
        seed,
    )
}
