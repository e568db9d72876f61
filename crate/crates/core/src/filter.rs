//! Kalman-type filters: classical, rLS.AO and rLS.IO, each usable on linear
//! models and (through linearization) on nonlinear ones.
//!
//! All three share initialization, prediction and the covariance recursion.
//! They differ only in how the innovation `ΔY_t = y_t - ŷ_t` enters the state:
//!
//! ```text
//! classical:  x_{t|t} = x_{t|t-1} + K ΔY
//! rLS.AO:     x_{t|t} = x_{t|t-1} + H_b(K ΔY)
//! rLS.IO:     x_{t|t} = x_{t|t-1} + Z^Σ (ΔY - H_b((I - Z K) ΔY))
//! ```
//!
//! where `H_b` is Huber clipping at height `b` and `Z^Σ = Σ Zᵀ (Z Σ Zᵀ)⁻`.
//! Gains use pseudoinverses throughout, so singular `C_t` is fine.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::error::{dim_check, Error, Result};
use crate::linalg::{
    compress_factor_with_basis, factor_product, huber_clip_flagged, huber_weight, pinv, pinv_with_projector, psd_factor,
    symmetrize, ClipNorm, Matrix, SemiNorm, Vector,
};
use crate::model::{LinearSsm, StateSpace};

/// Where a robust filter takes its clipping height from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipHeight {
    Infinite,
    Fixed(f64),
    Table(CalibrationTable),
}

impl ClipHeight {
    pub fn at(&self, t: usize) -> Result<f64> {
        match self {
            ClipHeight::Infinite => Ok(f64::INFINITY),
            ClipHeight::Fixed(b) => Ok(*b),
            ClipHeight::Table(table) => table.height_at(t),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ClipHeight::Fixed(b) if b.is_nan() || *b <= 0.0 => Err(Error::InvalidParameter(
                format!("clipping height must be positive, got {b}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Norm used to measure the clipped quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Euclidean,
    /// Mahalanobis norm w.r.t. the ideal-model covariance of the clipped quantity.
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    #[serde(rename = "classical")]
    Classical,
    #[serde(rename = "rls-ao")]
    RlsAo,
    #[serde(rename = "rls-io")]
    RlsIo,
}

impl VariantKind {
    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::Classical => "classical",
            VariantKind::RlsAo => "rls-ao",
            VariantKind::RlsIo => "rls-io",
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '.'], "-").as_str() {
            "classical" | "kalman" => Ok(VariantKind::Classical),
            "rls-ao" => Ok(VariantKind::RlsAo),
            "rls-io" => Ok(VariantKind::RlsIo),
            other => Err(Error::Config(format!("unknown filter variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterVariant {
    Classical,
    RlsAo { b: ClipHeight, norm: NormKind },
    RlsIo { b: ClipHeight, norm: NormKind },
}

impl FilterVariant {
    pub fn rls_ao(b: ClipHeight) -> Self {
        FilterVariant::RlsAo {
            b,
            norm: NormKind::Euclidean,
        }
    }

    pub fn rls_io(b: ClipHeight) -> Self {
        FilterVariant::RlsIo {
            b,
            norm: NormKind::Euclidean,
        }
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            FilterVariant::Classical => VariantKind::Classical,
            FilterVariant::RlsAo { .. } => VariantKind::RlsAo,
            FilterVariant::RlsIo { .. } => VariantKind::RlsIo,
        }
    }

    fn height(&self, t: usize) -> Result<f64> {
        match self {
            FilterVariant::Classical => Ok(f64::INFINITY),
            FilterVariant::RlsAo { b, .. } | FilterVariant::RlsIo { b, .. } => b.at(t),
        }
    }

    fn norm(&self) -> NormKind {
        match self {
            FilterVariant::Classical => NormKind::Euclidean,
            FilterVariant::RlsAo { norm, .. } | FilterVariant::RlsIo { norm, .. } => *norm,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FilterVariant::Classical => Ok(()),
            FilterVariant::RlsAo { b, .. } | FilterVariant::RlsIo { b, .. } => b.validate(),
        }
    }
}

/// Output of the prediction step.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub t: usize,
    pub x_pred: Vector,
    pub sigma_pred: Matrix,
    /// Transition matrix (or its Jacobian) that produced this prediction.
    pub transition: Matrix,
    /// State noise covariance added in the prediction.
    pub state_noise: Matrix,
    /// Square-root factor of `sigma_pred`.
    pub sqrt_pred: Matrix,
    /// `Q` with `sqrt_pred = [F L_filt | M] Q`, `M Mᵀ` the state noise.
    pub pred_basis: Matrix,
}

/// One filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: usize,
    pub x_pred: Vector,
    pub sigma_pred: Matrix,
    pub x_filt: Vector,
    pub sigma_filt: Matrix,
    pub gain: Matrix,
    pub innov_cov: Matrix,
    pub residual: Vector,
    /// Coefficients `c` of the correction, `x_filt = x_pred + sqrt_pred c`.
    pub correction_coeffs: Vector,
    /// Transition matrix (or Jacobian) used to predict into this step.
    pub transition: Matrix,
    pub state_noise: Matrix,
    /// Observation matrix (or Jacobian) of the correction; rows of missing
    /// components are zero.
    pub observation: Matrix,
    /// Square-root factors `L` with `L Lᵀ = Σ` of the two covariances. The
    /// recursions run on these, so tiny variances keep their precision.
    pub sqrt_pred: Matrix,
    pub sqrt_filt: Matrix,
    /// See [`Prediction::pred_basis`].
    pub pred_basis: Matrix,
    /// `sqrt_filt = sqrt_pred · filt_basis`.
    pub filt_basis: Matrix,
    /// Clipping height in force at this step (`inf` for the classical filter).
    pub clip_height: f64,
    pub clipped: bool,
    /// False when the whole observation was missing and no correction ran.
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub variant: VariantKind,
    pub x0: Vector,
    pub sigma0: Matrix,
    pub sqrt0: Matrix,
    pub steps: Vec<FilterState>,
}

impl FilterResult {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn x_filt(&self, t: usize) -> &Vector {
        &self.steps[t - 1].x_filt
    }

    /// Write `t, x_pred_*, x_filt_*, sigma_filt_diag_*, resid_norm, clipped`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.x0.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=p).map(|i| format!("x_pred_{i}")));
        header.extend((1..=p).map(|i| format!("x_filt_{i}")));
        header.extend((1..=p).map(|i| format!("sigma_filt_{i}{i}")));
        header.push("resid_norm".into());
        header.push("clipped".into());
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.t.to_string()];
            row.extend(s.x_pred.iter().map(|v| v.to_string()));
            row.extend(s.x_filt.iter().map(|v| v.to_string()));
            row.extend(s.sigma_filt.diagonal().iter().map(|v| v.to_string()));
            row.push(if s.observed {
                s.residual.norm().to_string()
            } else {
                String::new()
            });
            row.push((s.clipped as u8).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Prediction step: `x = f(x_filt)`, `Σ = F Σ_filt Fᵀ + B Q Bᵀ`.
pub fn predict(
    model: &dyn StateSpace,
    t: usize,
    x_filt: &Vector,
    sigma_filt: &Matrix,
) -> Result<Prediction> {
    let p = model.state_dim();
    dim_check(sigma_filt.shape() == (p, p), || {
        format!("covariance {:?} for p={p}", sigma_filt.shape())
    })?;
    predict_sqrt(model, t, x_filt, &psd_factor(sigma_filt)?)
}

/// [`predict`] from a square-root factor of `Σ_filt`.
pub fn predict_sqrt(
    model: &dyn StateSpace,
    t: usize,
    x_filt: &Vector,
    sqrt_filt: &Matrix,
) -> Result<Prediction> {
    let p = model.state_dim();
    dim_check(x_filt.len() == p && sqrt_filt.nrows() == p, || {
        format!("state of length {} / factor {:?} for p={p}", x_filt.len(), sqrt_filt.shape())
    })?;
    let lin = model.linearize_transition(t, x_filt)?;
    let q = model.innovation_cov(t)?;
    let noise = match &lin.noise_jac {
        Some(b) => symmetrize(&(b * q * b.transpose())),
        None => q,
    };
    let (sqrt_pred, pred_basis) = predicted_factor(&lin.state_jac, sqrt_filt, &noise)?;
    Ok(Prediction {
        t,
        x_pred: lin.mean,
        sigma_pred: factor_product(&sqrt_pred),
        transition: lin.state_jac,
        state_noise: noise,
        sqrt_pred,
        pred_basis,
    })
}

/// `[F L | M]` with `M Mᵀ = N`.
pub(crate) fn prediction_stack(f: &Matrix, sqrt_filt: &Matrix, noise: &Matrix) -> Result<Matrix> {
    let p = f.nrows();
    let fl = f * sqrt_filt;
    let mut a = Matrix::zeros(p, fl.ncols() + p);
    a.columns_mut(0, fl.ncols()).copy_from(&fl);
    a.columns_mut(fl.ncols(), p).copy_from(&psd_factor(noise)?);
    Ok(a)
}

/// Factor of `F L Lᵀ Fᵀ + N` and its basis.
fn predicted_factor(f: &Matrix, sqrt_filt: &Matrix, noise: &Matrix) -> Result<(Matrix, Matrix)> {
    compress_factor_with_basis(&prediction_stack(f, sqrt_filt, noise)?, 0.0)
}

/// Matrices the correction step needs at one time point.
struct StepGeometry {
    z: Matrix,
    gain: Matrix,
    /// `(B⁺)₁`, so `K = L gain_coeff`.
    gain_coeff: Matrix,
    innov_cov: Matrix,
    sigma_filt: Matrix,
    sqrt_filt: Matrix,
    filt_basis: Matrix,
    /// `(Z L)⁺`, so `Z^Σ = L zsigma_coeff`.
    zsigma_coeff: Option<Matrix>,
}

/// Correction in square-root form. With `L Lᵀ = Σ_{t|t-1}`, `N Nᵀ = V` and
/// `B = [Z L | N]`:
///
/// ```text
/// C = B Bᵀ,   K = L (B⁺)₁,   Σ_{t|t} = (L Π₁)(L Π₁)ᵀ,   Z^Σ = L (Z L)⁺
/// ```
///
/// where `(·)₁` takes the first `p` rows and `Π = I - B⁺B`. Corrections are
/// carried as coefficients on `L`, which the smoother relies on.
fn observation_geometry(
    sqrt_pred: &Matrix,
    z: &Matrix,
    noise_cov: &Matrix,
    want_zsigma: bool,
) -> Result<StepGeometry> {
    let (p, q) = (sqrt_pred.nrows(), z.nrows());
    let k = sqrt_pred.ncols();
    let zl = z * sqrt_pred;
    let mut b = Matrix::zeros(q, k + q);
    b.columns_mut(0, k).copy_from(&zl);
    b.columns_mut(k, q).copy_from(&psd_factor(noise_cov)?);
    let innov_cov = factor_product(&b);
    let (b_pinv, row_proj) = pinv_with_projector(&b)?;
    let gain_coeff = b_pinv.rows(0, k).into_owned();
    let gain = sqrt_pred * &gain_coeff;
    let mut proj = -row_proj;
    for d in 0..k + q {
        proj[(d, d)] += 1.0;
    }
    let kept = proj.rows(0, k);
    let (sqrt_filt, basis) = compress_factor_with_basis(&(sqrt_pred * kept), 0.0)?;
    debug_assert_eq!(sqrt_filt.nrows(), p);
    let zsigma_coeff = if want_zsigma { Some(pinv(&zl)?) } else { None };
    Ok(StepGeometry {
        z: z.clone(),
        gain,
        gain_coeff,
        innov_cov,
        sigma_filt: factor_product(&sqrt_filt),
        sqrt_filt,
        filt_basis: kept * basis,
        zsigma_coeff,
    })
}

/// Ideal-model covariance of the quantity each robust variant clips.
fn clipped_covariance(kind: VariantKind, geo: &StepGeometry) -> Matrix {
    match kind {
        VariantKind::Classical | VariantKind::RlsAo => {
            symmetrize(&(&geo.gain * &geo.innov_cov * geo.gain.transpose()))
        }
        VariantKind::RlsIo => {
            let q = geo.z.nrows();
            let r = Matrix::identity(q, q) - &geo.z * &geo.gain;
            symmetrize(&(&r * &geo.innov_cov * r.transpose()))
        }
    }
}

/// Coefficients of the correction on the prediction factor and whether
/// clipping was active.
fn correction(
    kind: VariantKind,
    b: f64,
    norm: Option<&SemiNorm>,
    residual: &Vector,
    geo: &StepGeometry,
) -> Result<(Vector, bool)> {
    let clip_norm = match norm {
        Some(sn) => ClipNorm::Mahalanobis(sn),
        None => ClipNorm::Euclidean,
    };
    match kind {
        VariantKind::Classical => Ok((&geo.gain_coeff * residual, false)),
        VariantKind::RlsAo => {
            let (w, clipped) = huber_weight(&(&geo.gain * residual), b, clip_norm)?;
            Ok((&geo.gain_coeff * residual * w, clipped))
        }
        VariantKind::RlsIo => {
            let zsigma_coeff = geo.zsigma_coeff.as_ref().expect("Z^Σ computed for rLS.IO");
            let err_est = residual - &geo.z * (&geo.gain * residual);
            let (clipped_err, clipped) = huber_clip_flagged(&err_est, b, clip_norm)?;
            Ok((zsigma_coeff * (residual - clipped_err), clipped))
        }
    }
}

fn correct_with(
    kind: VariantKind,
    b: f64,
    norm: NormKind,
    pred: &Prediction,
    y: &Vector,
    model: &dyn StateSpace,
) -> Result<FilterState> {
    if b.is_nan() || b <= 0.0 {
        return Err(Error::InvalidParameter(format!("clipping height must be positive, got {b}")));
    }
    let t = pred.t;
    let q = model.obs_dim();
    dim_check(y.len() == q, || format!("observation of length {} for q={q}", y.len()))?;
    let lin = model.linearize_observation(t, &pred.x_pred)?;
    let v = model.error_cov(t)?;
    let noise_cov = match &lin.noise_jac {
        Some(d) => d * v * d.transpose(),
        None => v,
    };

    let observed: Vec<usize> = (0..q).filter(|&i| !y[i].is_nan()).collect();
    let full_innov_cov =
        symmetrize(&(&lin.state_jac * &pred.sigma_pred * lin.state_jac.transpose() + &noise_cov));
    dim_check(pred.sqrt_pred.nrows() == model.state_dim(), || {
        format!("prediction factor {:?} for p={}", pred.sqrt_pred.shape(), model.state_dim())
    })?;
    let p = model.state_dim();
    if observed.is_empty() {
        return Ok(FilterState {
            t,
            x_pred: pred.x_pred.clone(),
            sigma_pred: pred.sigma_pred.clone(),
            x_filt: pred.x_pred.clone(),
            sigma_filt: pred.sigma_pred.clone(),
            gain: Matrix::zeros(p, q),
            innov_cov: full_innov_cov,
            residual: Vector::zeros(q),
            correction_coeffs: Vector::zeros(p),
            transition: pred.transition.clone(),
            state_noise: pred.state_noise.clone(),
            observation: Matrix::zeros(q, p),
            sqrt_pred: pred.sqrt_pred.clone(),
            sqrt_filt: pred.sqrt_pred.clone(),
            pred_basis: pred.pred_basis.clone(),
            filt_basis: Matrix::identity(p, p),
            clip_height: b,
            clipped: false,
            observed: false,
        });
    }

    let full = observed.len() == q;
    let (z, noise, resid) = if full {
        (lin.state_jac.clone(), noise_cov.clone(), y - &lin.mean)
    } else {
        let z = lin.state_jac.select_rows(observed.iter());
        let n = noise_cov.select_rows(observed.iter()).select_columns(observed.iter());
        let r = Vector::from_iterator(observed.len(), observed.iter().map(|&i| y[i] - lin.mean[i]));
        (z, n, r)
    };
    let geo = observation_geometry(&pred.sqrt_pred, &z, &noise, kind == VariantKind::RlsIo)?;
    let sn = match norm {
        NormKind::Mahalanobis if kind != VariantKind::Classical => {
            Some(SemiNorm::new(clipped_covariance(kind, &geo))?)
        }
        _ => None,
    };
    let (coeffs, clipped) = correction(kind, b, sn.as_ref(), &resid, &geo)?;
    let x_filt = &pred.x_pred + &pred.sqrt_pred * &coeffs;

    let (gain, observation, residual) = if full {
        (geo.gain, geo.z, resid)
    } else {
        let mut g = Matrix::zeros(p, q);
        let mut o = Matrix::zeros(q, p);
        let mut r = Vector::zeros(q);
        for (k, &i) in observed.iter().enumerate() {
            g.set_column(i, &geo.gain.column(k));
            o.set_row(i, &geo.z.row(k));
            r[i] = resid[k];
        }
        (g, o, r)
    };
    Ok(FilterState {
        t,
        x_pred: pred.x_pred.clone(),
        sigma_pred: pred.sigma_pred.clone(),
        x_filt,
        sigma_filt: geo.sigma_filt,
        gain,
        innov_cov: full_innov_cov,
        residual,
        correction_coeffs: coeffs,
        transition: pred.transition.clone(),
        state_noise: pred.state_noise.clone(),
        observation,
        sqrt_pred: pred.sqrt_pred.clone(),
        sqrt_filt: geo.sqrt_filt,
        pred_basis: pred.pred_basis.clone(),
        filt_basis: geo.filt_basis,
        clip_height: b,
        clipped,
        observed: true,
    })
}

/// Classical correction `x_{t|t} = x_{t|t-1} + K ΔY`. Entries of `y` that are
/// NaN are treated as missing.
pub fn correct_classical(pred: &Prediction, y: &Vector, model: &dyn StateSpace) -> Result<FilterState> {
    correct_with(VariantKind::Classical, f64::INFINITY, NormKind::Euclidean, pred, y, model)
}

/// rLS.AO correction `x_{t|t} = x_{t|t-1} + H_b(K ΔY)`.
pub fn correct_rls_ao(
    pred: &Prediction,
    y: &Vector,
    b: f64,
    norm: NormKind,
    model: &dyn StateSpace,
) -> Result<FilterState> {
    correct_with(VariantKind::RlsAo, b, norm, pred, y, model)
}

/// rLS.IO correction `x_{t|t} = x_{t|t-1} + Z^Σ (ΔY - H_b((I - Z K) ΔY))`.
pub fn correct_rls_io(
    pred: &Prediction,
    y: &Vector,
    b: f64,
    norm: NormKind,
    model: &dyn StateSpace,
) -> Result<FilterState> {
    correct_with(VariantKind::RlsIo, b, norm, pred, y, model)
}

/// Run a filter over `observations` (entry `t - 1` is `y_t`).
///
/// Linear models without missing data go through a [`GainSchedule`]; every
/// other case runs the step-by-step (extended) recursion.
pub fn run_filter(
    model: &dyn StateSpace,
    observations: &[Vector],
    variant: &FilterVariant,
) -> Result<FilterResult> {
    variant.validate()?;
    if let Some(lin) = model.as_linear() {
        if observations.iter().all(|y| y.iter().all(|v| !v.is_nan())) {
            let schedule = GainSchedule::new(lin, observations.len())?;
            return schedule.run(observations, variant);
        }
    }
    run_filter_stepwise(model, observations, variant)
}

/// The step-by-step recursion, valid for any [`StateSpace`].
pub fn run_filter_stepwise(
    model: &dyn StateSpace,
    observations: &[Vector],
    variant: &FilterVariant,
) -> Result<FilterResult> {
    variant.validate()?;
    let kind = variant.kind();
    let mut x = model.initial_mean().clone();
    let sigma0 = symmetrize(model.initial_cov());
    let sqrt0 = psd_factor(&sigma0)?;
    let mut l = sqrt0.clone();
    let mut steps = Vec::with_capacity(observations.len());
    for (k, y) in observations.iter().enumerate() {
        let t = k + 1;
        let pred = predict_sqrt(model, t, &x, &l)?;
        let b = variant.height(t)?;
        let state = correct_with(kind, b, variant.norm(), &pred, y, model)?;
        if state.x_filt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("filter state became non-finite at t={t}")));
        }
        x = state.x_filt.clone();
        l = state.sqrt_filt.clone();
        steps.push(state);
    }
    Ok(FilterResult {
        variant: kind,
        x0: model.initial_mean().clone(),
        sigma0,
        sqrt0,
        steps,
    })
}

/// Precomputed covariance recursion of a linear model.
///
/// For linear models `Σ_{t|t-1}`, `Σ_{t|t}`, `K_t` and `C_t` do not depend on
/// the data, so they are computed once and shared by every filter variant and
/// every replication.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub x0: Vector,
    pub sigma0: Matrix,
    pub sqrt0: Matrix,
    pub steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone)]
pub struct ScheduleStep {
    pub transition: Matrix,
    pub state_noise: Matrix,
    pub observation: Matrix,
    pub sigma_pred: Matrix,
    pub sigma_filt: Matrix,
    pub sqrt_pred: Matrix,
    pub sqrt_filt: Matrix,
    pub pred_basis: Matrix,
    pub filt_basis: Matrix,
    pub gain: Matrix,
    gain_coeff: Matrix,
    pub innov_cov: Matrix,
    pub error_cov: Matrix,
    pub zsigma: Matrix,
    zsigma_coeff: Matrix,
    ao_norm: Option<SemiNorm>,
    io_norm: Option<SemiNorm>,
}

impl ScheduleStep {
    fn geometry(&self) -> StepGeometry {
        StepGeometry {
            z: self.observation.clone(),
            gain: self.gain.clone(),
            gain_coeff: self.gain_coeff.clone(),
            sqrt_filt: self.sqrt_filt.clone(),
            filt_basis: self.filt_basis.clone(),
            innov_cov: self.innov_cov.clone(),
            sigma_filt: self.sigma_filt.clone(),
            zsigma_coeff: Some(self.zsigma_coeff.clone()),
        }
    }

    /// Ideal-model covariance of `K ΔY` (AO) or `(I - Z K) ΔY` (IO).
    pub fn clipped_covariance(&self, kind: VariantKind) -> Matrix {
        clipped_covariance(kind, &self.geometry())
    }

    fn norm(&self, kind: VariantKind, norm: NormKind) -> Result<Option<&SemiNorm>> {
        if norm == NormKind::Euclidean || kind == VariantKind::Classical {
            return Ok(None);
        }
        let sn = match kind {
            VariantKind::RlsIo => self.io_norm.as_ref(),
            _ => self.ao_norm.as_ref(),
        };
        sn.map(Some)
            .ok_or_else(|| Error::Numerical("Mahalanobis norm unavailable".into()))
    }
}

impl GainSchedule {
    pub fn new(model: &LinearSsm, horizon: usize) -> Result<Self> {
        let p = model.state_dim();
        let sigma0 = symmetrize(&model.q0);
        let sqrt0 = psd_factor(&sigma0)?;
        let mut l = sqrt0.clone();
        let mut steps = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let f = model.f(t)?;
            let z = model.z(t)?;
            let v = model.v(t)?;
            let q = model.q(t)?;
            let (sqrt_pred, pred_basis) = predicted_factor(&f, &l, &q)?;
            let geo = observation_geometry(&sqrt_pred, &z, &v, true)?;
            let ao_norm = SemiNorm::new(clipped_covariance(VariantKind::RlsAo, &geo)).ok();
            let io_norm = SemiNorm::new(clipped_covariance(VariantKind::RlsIo, &geo)).ok();
            l = geo.sqrt_filt.clone();
            debug_assert_eq!(l.nrows(), p);
            let zsigma_coeff = geo.zsigma_coeff.clone().expect("requested");
            steps.push(ScheduleStep {
                transition: f,
                state_noise: q,
                observation: z,
                sigma_pred: factor_product(&sqrt_pred),
                sqrt_filt: geo.sqrt_filt,
                pred_basis,
                filt_basis: geo.filt_basis,
                sigma_filt: geo.sigma_filt,
                gain: geo.gain,
                gain_coeff: geo.gain_coeff,
                innov_cov: geo.innov_cov,
                error_cov: v,
                zsigma: &sqrt_pred * &zsigma_coeff,
                zsigma_coeff,
                sqrt_pred,
                ao_norm,
                io_norm,
            });
        }
        Ok(Self {
            x0: model.a0.clone(),
            sigma0,
            sqrt0,
            steps,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, t: usize) -> &ScheduleStep {
        &self.steps[t - 1]
    }

    /// Filter `observations` (no missing entries) with the precomputed gains.
    pub fn run(&self, observations: &[Vector], variant: &FilterVariant) -> Result<FilterResult> {
        variant.validate()?;
        if observations.len() > self.steps.len() {
            return Err(Error::InvalidInput(format!(
                "{} observations for a schedule of horizon {}",
                observations.len(),
                self.steps.len()
            )));
        }
        let kind = variant.kind();
        let mut x = self.x0.clone();
        let mut out = Vec::with_capacity(observations.len());
        for (k, y) in observations.iter().enumerate() {
            let t = k + 1;
            let st = &self.steps[k];
            dim_check(y.len() == st.observation.nrows(), || {
                format!("observation of length {} at t={t}", y.len())
            })?;
            let x_pred = &st.transition * &x;
            let residual = y - &st.observation * &x_pred;
            let b = variant.height(t)?;
            if b.is_nan() || b <= 0.0 {
                return Err(Error::InvalidParameter(format!("clipping height {b} at t={t}")));
            }
            let geo = st.geometry();
            let norm = st.norm(kind, variant.norm())?;
            let (coeffs, clipped) = correction(kind, b, norm, &residual, &geo)?;
            let x_filt = &x_pred + &st.sqrt_pred * &coeffs;
            if x_filt.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("filter state became non-finite at t={t}")));
            }
            x = x_filt.clone();
            out.push(FilterState {
                t,
                x_pred,
                sigma_pred: st.sigma_pred.clone(),
                x_filt,
                sigma_filt: st.sigma_filt.clone(),
                gain: st.gain.clone(),
                innov_cov: st.innov_cov.clone(),
                residual,
                correction_coeffs: coeffs,
                transition: st.transition.clone(),
                state_noise: st.state_noise.clone(),
                observation: st.observation.clone(),
                sqrt_pred: st.sqrt_pred.clone(),
                sqrt_filt: st.sqrt_filt.clone(),
                pred_basis: st.pred_basis.clone(),
                filt_basis: st.filt_basis.clone(),
                clip_height: b,
                clipped,
                observed: true,
            });
        }
        Ok(FilterResult {
            variant: kind,
            x0: self.x0.clone(),
            sigma0: self.sigma0.clone(),
            sqrt0: self.sqrt0.clone(),
            steps: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_preset, ModelPreset, NonlinearSsm};
    use approx::assert_abs_diff_eq;

    fn scalar(a0: f64, q0: f64, f: f64, q: f64, z: f64, v: f64) -> LinearSsm {
        let m = |x: f64| Matrix::from_element(1, 1, x);
        LinearSsm::new(m(f), m(z), m(q), m(v), Vector::from_element(1, a0), m(q0)).unwrap()
    }

    fn y1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn predict_scalar_examples() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let p = predict(&m, 1, &y1(0.0), &Matrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(p.x_pred[0], 0.0);
        assert_abs_diff_eq!(p.sigma_pred[(0, 0)], 2.0, epsilon = 1e-15);

        let m0 = scalar(0.0, 1.0, 0.0, 0.7, 1.0, 1.0);
        let p = predict(&m0, 1, &y1(3.0), &Matrix::from_element(1, 1, 5.0)).unwrap();
        assert_eq!(p.x_pred[0], 0.0);
        assert_abs_diff_eq!(p.sigma_pred[(0, 0)], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn steady_state_prediction_variance_is_golden_ratio() {
        // oracle: iterate Σ ← Σ/(Σ+1) + 1 independently of the filter code
        let mut s = 1.0f64;
        for _ in 0..200 {
            s = s / (s + 1.0) + 1.0;
        }
        assert_abs_diff_eq!(s, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-14);
        let m = build_preset(ModelPreset::SimA);
        let sched = GainSchedule::new(m.as_linear().unwrap(), 60).unwrap();
        assert_abs_diff_eq!(sched.step(60).sigma_pred[(0, 0)], s, epsilon = 1e-12);
    }

    #[test]
    fn correct_classical_hand_example() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        let s = correct_classical(&pred, &y1(2.0), &m).unwrap();
        assert_abs_diff_eq!(s.sigma_pred[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.innov_cov[(0, 0)], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.gain[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.x_filt[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sigma_filt[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn uninformative_observation_leaves_prediction() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1e12);
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        let s = correct_classical(&pred, &y1(2.0), &m).unwrap();
        assert!(s.gain[(0, 0)].abs() < 1e-11);
        assert!((s.x_filt[0] - s.x_pred[0]).abs() < 1e-10);
    }

    #[test]
    fn singular_innovation_covariance_stays_finite() {
        // second observation row is identically zero with zero noise
        let m = LinearSsm::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Matrix::identity(2, 2),
            Matrix::zeros(2, 2),
            Vector::zeros(2),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        let s = correct_classical(&pred, &Vector::from_vec(vec![1.0, 0.0]), &m).unwrap();
        assert!(s.x_filt.iter().all(|v| v.is_finite()));
        // noiseless observation of the first coordinate pins it down
        assert_abs_diff_eq!(s.x_filt[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma_filt[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rls_ao_hand_example() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        let s = correct_rls_ao(&pred, &y1(2.0), 0.5, NormKind::Euclidean, &m).unwrap();
        assert_abs_diff_eq!(s.x_filt[0], 0.5, epsilon = 1e-15);
        assert!(s.clipped);
        let inf = correct_rls_ao(&pred, &y1(2.0), f64::INFINITY, NormKind::Euclidean, &m).unwrap();
        assert_eq!(inf, correct_classical(&pred, &y1(2.0), &m).unwrap().clone_with_height(f64::INFINITY));
        let zero = correct_rls_ao(&pred, &y1(0.0), 0.1, NormKind::Euclidean, &m).unwrap();
        assert_eq!(zero.x_filt, pred.x_pred);
        assert!(correct_rls_ao(&pred, &y1(1.0), 0.0, NormKind::Euclidean, &m).is_err());
    }

    impl FilterState {
        fn clone_with_height(&self, b: f64) -> Self {
            FilterState {
                clip_height: b,
                ..self.clone()
            }
        }
    }

    #[test]
    fn rls_io_hand_example() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        // (1 - ZK)ΔY = 2/3 → clipped to 0.5, Z^Σ = 1 → x = 2 - 0.5
        let s = correct_rls_io(&pred, &y1(2.0), 0.5, NormKind::Euclidean, &m).unwrap();
        assert_abs_diff_eq!(s.x_filt[0], 1.5, epsilon = 1e-14);
        let inf = correct_rls_io(&pred, &y1(2.0), f64::INFINITY, NormKind::Euclidean, &m).unwrap();
        assert_abs_diff_eq!(inf.x_filt[0], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rls_io_with_zero_observation_matrix() {
        let m = LinearSsm::new(
            Matrix::identity(2, 2),
            Matrix::zeros(1, 2),
            Matrix::identity(2, 2),
            Matrix::identity(1, 1),
            Vector::from_vec(vec![1.0, 2.0]),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let pred = predict(&m, 1, &m.a0, &m.q0).unwrap();
        let s = correct_rls_io(&pred, &y1(50.0), 1.0, NormKind::Euclidean, &m).unwrap();
        assert_eq!(s.x_filt, pred.x_pred);
    }

    #[test]
    fn covariances_identical_across_variants() {
        let m = build_preset(ModelPreset::SimB);
        let tr = crate::contamination::simulate_contaminated(
            &m,
            30,
            &crate::contamination::ContaminationSpec::none(),
            5,
        )
        .unwrap();
        let variants = [
            FilterVariant::Classical,
            FilterVariant::rls_ao(ClipHeight::Fixed(0.1)),
            FilterVariant::rls_io(ClipHeight::Fixed(0.1)),
        ];
        let results: Vec<_> = variants
            .iter()
            .map(|v| run_filter_stepwise(&m, &tr.y_real, v).unwrap())
            .collect();
        for t in 0..30 {
            for r in &results[1..] {
                assert_eq!(r.steps[t].sigma_pred, results[0].steps[t].sigma_pred);
                assert_eq!(r.steps[t].sigma_filt, results[0].steps[t].sigma_filt);
                assert_eq!(r.steps[t].gain, results[0].steps[t].gain);
            }
        }
    }

    #[test]
    fn schedule_matches_stepwise() {
        let m = build_preset(ModelPreset::SimB);
        let tr = crate::contamination::simulate_contaminated(
            &m,
            40,
            &crate::contamination::ContaminationSpec::ao(
                0.2,
                crate::contamination::ContaminatingDist::Cauchy {
                    location: 0.0,
                    scale: 1.0,
                },
            ),
            8,
        )
        .unwrap();
        for v in [
            FilterVariant::Classical,
            FilterVariant::rls_ao(ClipHeight::Fixed(0.05)),
            FilterVariant::rls_io(ClipHeight::Fixed(0.05)),
            FilterVariant::RlsAo {
                b: ClipHeight::Fixed(1.0),
                norm: NormKind::Mahalanobis,
            },
        ] {
            let a = run_filter(&m, &tr.y_real, &v).unwrap();
            let b = run_filter_stepwise(&m, &tr.y_real, &v).unwrap();
            for (sa, sb) in a.steps.iter().zip(&b.steps) {
                assert!((&sa.x_filt - &sb.x_filt).amax() < 1e-12);
                assert!((&sa.sigma_filt - &sb.sigma_filt).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn ekf_on_wrapped_linear_model_matches_kalman() {
        let m = build_preset(ModelPreset::SimB);
        let n = NonlinearSsm::from_linear(m.as_linear().unwrap());
        let tr = crate::contamination::simulate_contaminated(
            &m,
            50,
            &crate::contamination::ContaminationSpec::none(),
            1,
        )
        .unwrap();
        let kf = run_filter(&m, &tr.y_real, &FilterVariant::Classical).unwrap();
        let ekf = run_filter(&n, &tr.y_real, &FilterVariant::Classical).unwrap();
        for (a, b) in kf.steps.iter().zip(&ekf.steps) {
            assert!((&a.x_filt - &b.x_filt).amax() < 1e-12);
        }
    }

    #[test]
    fn missing_observation_skips_correction() {
        let m = build_preset(ModelPreset::SimA);
        let ys = vec![y1(1.0), y1(f64::NAN), y1(0.5)];
        let r = run_filter(&m, &ys, &FilterVariant::Classical).unwrap();
        let s = &r.steps[1];
        assert!(!s.observed);
        assert_eq!(s.x_filt, s.x_pred);
        assert_eq!(s.sigma_filt, s.sigma_pred);
    }

    #[test]
    fn partially_missing_observation_uses_available_rows() {
        let m = build_preset(ModelPreset::SimB);
        let ys = vec![Vector::from_vec(vec![0.3, f64::NAN])];
        let r = run_filter(&m, &ys, &FilterVariant::Classical).unwrap();
        let s = &r.steps[0];
        assert!(s.observed);
        assert_eq!(s.gain.column(1).amax(), 0.0);
        assert!(s.x_filt[0] != 0.0);
    }

    #[test]
    fn table_without_enough_steps_is_an_error() {
        let m = build_preset(ModelPreset::SimA);
        let table = CalibrationTable::fixed(vec![1.0, 1.0], None);
        let ys = vec![y1(1.0); 3];
        let err = run_filter(&m, &ys, &FilterVariant::rls_ao(ClipHeight::Table(table))).unwrap_err();
        assert!(matches!(err, Error::MissingCalibration(_)));
    }

    #[test]
    fn csv_export_shape() {
        let m = build_preset(ModelPreset::SimB);
        let ys = vec![Vector::from_vec(vec![0.1, 0.0]); 4];
        let r = run_filter(&m, &ys, &FilterVariant::Classical).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(
            lines[0],
            "t,x_pred_1,x_pred_2,x_pred_3,x_filt_1,x_filt_2,x_filt_3,sigma_filt_11,sigma_filt_22,sigma_filt_33,resid_norm,clipped"
        );
    }
}
