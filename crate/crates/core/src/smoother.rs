//! Fixed-interval (Rauch–Tung–Striebel) smoothing on top of any filter run.
//!
//! ```text
//! J_t     = Σ_{t|t} F_{t+1}ᵀ Σ_{t+1|t}⁻
//! x_{t|T} = x_{t|t} + J_t (x_{t+1|T} - x_{t+1|t})
//! Σ_{t|T} = Σ_{t|t} + J_t (Σ_{t+1|T} - Σ_{t+1|t}) J_tᵀ
//! ```
//!
//! Both recursions run in square-root form on coefficients relative to the
//! filter's covariance factors; see `backward_step`.
//!
//! `F_{t+1}` is the matrix that carried `x_{t|t}` to `x_{t+1|t}`, i.e. the one
//! stored with filter step `t + 1`. The backward pass is not robustified: the
//! robust smoothers are this recursion run on robust filter output.

use std::io::Write;

use crate::error::{Error, Result};
use crate::filter::{prediction_stack, FilterResult, GainSchedule};
use crate::linalg::{compress_factor_with_basis, factor_product, pinv_with_projector_scaled, Matrix, Vector};
use crate::model::StateSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    /// `x_smooth[t - 1] = x_{t|T}` for `t = 1..=T`.
    pub x_smooth: Vec<Vector>,
    pub sigma_smooth: Vec<Matrix>,
    /// `gains[t] = J_t` for `t = 0..T`.
    pub gains: Vec<Matrix>,
    pub x0_smooth: Vector,
    pub sigma0_smooth: Matrix,
}

impl SmootherResult {
    pub fn horizon(&self) -> usize {
        self.x_smooth.len()
    }

    /// `x_{t|T}`, including `t = 0`.
    pub fn state(&self, t: usize) -> &Vector {
        if t == 0 {
            &self.x0_smooth
        } else {
            &self.x_smooth[t - 1]
        }
    }

    /// `Σ_{t|T}`, including `t = 0`.
    pub fn sigma_at(&self, t: usize) -> &Matrix {
        if t == 0 {
            &self.sigma0_smooth
        } else {
            &self.sigma_smooth[t - 1]
        }
    }

    /// Write `t, x_smooth_*, sigma_smooth_*` for `t = 0..=T`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.x0_smooth.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=p).map(|i| format!("x_smooth_{i}")));
        header.extend((1..=p).map(|i| format!("sigma_smooth_{i}{i}")));
        w.write_record(&header)?;
        let rows = std::iter::once((&self.x0_smooth, &self.sigma0_smooth))
            .chain(self.x_smooth.iter().zip(&self.sigma_smooth));
        for (t, (x, s)) in rows.enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.extend(s.diagonal().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One backward step in square-root form. With `S Sᵀ = Σ_{t|t}`,
/// `A = [F S | M]` and `P = A Q` the filter's prediction factor:
///
/// ```text
/// J = S (A⁺)₁,   J P = S ((A⁺A) Q)₁,   Σ_{t|t} - J Σ_{t+1|t} Jᵀ = (S Π₁)(S Π₁)ᵀ
/// ```
///
/// with `Π = I - A⁺A`. Quantities ahead are carried as coefficients on `P`,
/// so nothing is divided by a small singular value of `A`.
struct BackwardStep {
    gain: Matrix,
    /// `((A⁺A) Q)₁`.
    carry: Matrix,
    /// `Π₁`.
    kept: Matrix,
}

/// `prior` is the size of the prediction factor `S` was obtained from;
/// directions of `S` at roundoff relative to it count as zero.
fn backward_step(sqrt_filt: &Matrix, prior: f64, ahead: &FilterStepView<'_>) -> Result<BackwardStep> {
    let k = sqrt_filt.ncols();
    let a = prediction_stack(ahead.transition, sqrt_filt, ahead.state_noise)?;
    let (a_pinv, proj) = pinv_with_projector_scaled(&a, ahead.transition.norm() * prior)?;
    let carry = (&proj * ahead.pred_basis).rows(0, k).into_owned();
    let mut kept = -proj.rows(0, k);
    for d in 0..k {
        kept[(d, d)] += 1.0;
    }
    Ok(BackwardStep {
        gain: sqrt_filt * a_pinv.rows(0, k),
        carry,
        kept,
    })
}

struct FilterStepView<'a> {
    transition: &'a Matrix,
    state_noise: &'a Matrix,
    pred_basis: &'a Matrix,
}

/// Smooth a complete filter run.
pub fn smooth(filter: &FilterResult, model: &dyn StateSpace) -> Result<SmootherResult> {
    let n = filter.steps.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot smooth an empty filter result".into()));
    }
    let p = model.state_dim();
    if filter.x0.len() != p || filter.steps.iter().enumerate().any(|(k, s)| s.t != k + 1) {
        return Err(Error::InvalidInput("filter result is incomplete or does not match the model".into()));
    }

    let last = &filter.steps[n - 1];
    let mut x_smooth = vec![last.x_filt.clone(); n];
    let mut sigma_smooth = vec![last.sigma_filt.clone(); n];
    let mut gains = vec![Matrix::zeros(p, p); n];
    // Coefficients on the prediction factor P_{t+1} of x_{t+1|T} - x_{t+1|t}
    // and of a factor of Σ_{t+1|T}.
    let mut nu = last.correction_coeffs.clone();
    let mut psi = last.filt_basis.clone();
    let mut x0_smooth = filter.x0.clone();
    let mut sigma0_smooth = filter.sigma0.clone();

    for t in (0..n).rev() {
        let (x_tt, s_tt, prior) = if t == 0 {
            (&filter.x0, &filter.sqrt0, filter.sqrt0.norm())
        } else {
            let here = &filter.steps[t - 1];
            (&here.x_filt, &here.sqrt_filt, here.sqrt_pred.norm())
        };
        let ahead = &filter.steps[t];
        let step = backward_step(
            s_tt,
            prior,
            &FilterStepView {
                transition: &ahead.transition,
                state_noise: &ahead.state_noise,
                pred_basis: &ahead.pred_basis,
            },
        )?;
        let gamma = &step.carry * &nu;
        let x = x_tt + s_tt * &gamma;
        let carried = &step.carry * &psi;
        let mut g = Matrix::zeros(step.kept.nrows(), step.kept.ncols() + carried.ncols());
        g.columns_mut(0, step.kept.ncols()).copy_from(&step.kept);
        g.columns_mut(step.kept.ncols(), carried.ncols()).copy_from(&carried);
        // `g gᵀ ≤ I`, so roundoff is relative to one.
        let (g, _) = compress_factor_with_basis(&g, 1.0)?;
        let sigma = factor_product(&(s_tt * &g));
        if x.iter().any(|v| !v.is_finite()) || sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("smoother became non-finite at t={t}")));
        }
        gains[t] = step.gain;
        if t == 0 {
            x0_smooth = x;
            sigma0_smooth = sigma;
        } else {
            x_smooth[t - 1] = x;
            sigma_smooth[t - 1] = sigma;
            let here = &filter.steps[t - 1];
            nu = &here.filt_basis * &gamma + &here.correction_coeffs;
            psi = &here.filt_basis * g;
        }
    }
    Ok(SmootherResult {
        x_smooth,
        sigma_smooth,
        gains,
        x0_smooth,
        sigma0_smooth,
    })
}

/// Backward recursion of a linear model's smoother. Like the filter
/// covariances it does not depend on the data, so one set serves every
/// replication.
#[derive(Debug, Clone)]
pub struct SmootherGains {
    /// `((A⁺A) Q)₁` per step.
    carry: Vec<Matrix>,
    /// `S_t ((A⁺A) Q)₁`.
    lift: Vec<Matrix>,
    /// Filter basis of step `t` for `t = 1..T`.
    basis: Vec<Matrix>,
}

impl SmootherGains {
    pub fn new(schedule: &GainSchedule) -> Result<Self> {
        let n = schedule.horizon();
        let mut carry = Vec::with_capacity(n);
        let mut lift = Vec::with_capacity(n);
        for t in 0..n {
            let (s_tt, prior) = if t == 0 {
                (&schedule.sqrt0, schedule.sqrt0.norm())
            } else {
                let here = &schedule.steps[t - 1];
                (&here.sqrt_filt, here.sqrt_pred.norm())
            };
            let ahead = &schedule.steps[t];
            let step = backward_step(
                s_tt,
                prior,
                &FilterStepView {
                    transition: &ahead.transition,
                    state_noise: &ahead.state_noise,
                    pred_basis: &ahead.pred_basis,
                },
            )?;
            lift.push(s_tt * &step.carry);
            carry.push(step.carry);
        }
        let basis = schedule.steps.iter().map(|s| s.filt_basis.clone()).collect();
        Ok(Self { carry, lift, basis })
    }

    /// Smoothed means `x_{t|T}` for `t = 0..=T` (states only).
    pub fn smooth_states(&self, filter: &FilterResult) -> Result<Vec<Vector>> {
        let n = filter.steps.len();
        if n == 0 || n > self.carry.len() {
            return Err(Error::InvalidInput(format!(
                "filter result of length {n} for a smoother of horizon {}",
                self.carry.len()
            )));
        }
        let mut out = vec![filter.steps[n - 1].x_filt.clone(); n + 1];
        let mut nu = filter.steps[n - 1].correction_coeffs.clone();
        for t in (0..n).rev() {
            let x_tt = if t == 0 { &filter.x0 } else { &filter.steps[t - 1].x_filt };
            out[t] = x_tt + &self.lift[t] * &nu;
            if t > 0 {
                let here = &filter.steps[t - 1];
                nu = &self.basis[t - 1] * (&self.carry[t] * &nu) + &here.correction_coeffs;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contamination::{simulate_contaminated, ContaminationSpec};
    use crate::filter::{run_filter, ClipHeight, FilterVariant};
    use crate::model::{build_preset, simulate_ideal, LinearSsm, ModelPreset};

    #[test]
    fn single_step_returns_filtered_state() {
        let m = build_preset(ModelPreset::SimA);
        let ys = vec![Vector::from_element(1, 2.0)];
        let f = run_filter(&m, &ys, &FilterVariant::Classical).unwrap();
        let s = smooth(&f, &m).unwrap();
        assert_eq!(s.x_smooth[0], f.steps[0].x_filt);
        assert_eq!(s.sigma_smooth[0], f.steps[0].sigma_filt);
    }

    #[test]
    fn endpoint_is_filter_output() {
        let m = build_preset(ModelPreset::SimB);
        let tr = simulate_ideal(&m, 30, 3).unwrap();
        for v in [FilterVariant::Classical, FilterVariant::rls_io(ClipHeight::Fixed(0.1))] {
            let f = run_filter(&m, &tr.y_real, &v).unwrap();
            let s = smooth(&f, &m).unwrap();
            assert_eq!(s.x_smooth[29], f.steps[29].x_filt);
        }
    }

    #[test]
    fn noiseless_dynamics_propagate_backwards() {
        let f = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let m = LinearSsm::new(
            f.clone(),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::zeros(2, 2),
            Matrix::identity(1, 1),
            Vector::zeros(2),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let tr = simulate_ideal(&m, 8, 1).unwrap();
        let fr = run_filter(&m, &tr.y_real, &FilterVariant::Classical).unwrap();
        let s = smooth(&fr, &m).unwrap();
        let finv = f.try_inverse().unwrap();
        for t in 0..8 {
            let back = &finv * s.state(t + 1);
            assert!((&back - s.state(t)).amax() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn smoothed_covariance_below_filtered() {
        let m = build_preset(ModelPreset::SimB);
        let tr = simulate_contaminated(&m, 40, &ContaminationSpec::none(), 2).unwrap();
        let f = run_filter(&m, &tr.y_real, &FilterVariant::Classical).unwrap();
        let s = smooth(&f, &m).unwrap();
        for t in 0..40 {
            let d = &f.steps[t].sigma_filt - &s.sigma_smooth[t];
            let min = d.symmetric_eigen().eigenvalues.min();
            assert!(min > -1e-9, "t={} min eig {min}", t + 1);
        }
    }

    #[test]
    fn precomputed_gains_match_full_smoother() {
        let m = build_preset(ModelPreset::SimB);
        let tr = simulate_ideal(&m, 25, 4).unwrap();
        let sched = GainSchedule::new(m.as_linear().unwrap(), 50).unwrap();
        let gains = SmootherGains::new(&sched).unwrap();
        let f = run_filter(&m, &tr.y_real, &FilterVariant::rls_ao(ClipHeight::Fixed(0.2))).unwrap();
        let full = smooth(&f, &m).unwrap();
        let fast = gains.smooth_states(&f).unwrap();
        for t in 0..=25 {
            assert!((full.state(t) - &fast[t]).amax() < 1e-12);
        }
    }

    #[test]
    fn empty_filter_result_is_rejected() {
        let m = build_preset(ModelPreset::SimA);
        let f = run_filter(&m, &[], &FilterVariant::Classical).unwrap();
        assert!(smooth(&f, &m).is_err());
    }

    #[test]
    fn csv_has_row_per_time_point() {
        let m = build_preset(ModelPreset::SimA);
        let tr = simulate_ideal(&m, 5, 1).unwrap();
        let f = run_filter(&m, &tr.y_real, &FilterVariant::Classical).unwrap();
        let mut buf = Vec::new();
        smooth(&f, &m).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("t,x_smooth_1,sigma_smooth_11\n0,"));
    }
}
