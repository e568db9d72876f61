//! Clipping-height calibration.
//!
//! Two criteria, both evaluated by Monte Carlo under the ideal model:
//!
//! * radius `r`: `(1 - r) E(|X| - b)_+ = r b`, with `X` the quantity being
//!   clipped (`KΔY` for rLS.AO, `(I - ZK)ΔY` for rLS.IO);
//! * efficiency loss `δ`: `E|ΔX - est_b|² = (1 + δ) E|ΔX - KΔY|²`.
//!
//! Calibration only looks at model covariances, never at data. Once the
//! prediction covariance stops moving the height is frozen.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{GainSchedule, NormKind, ScheduleStep, VariantKind};
use crate::linalg::{Matrix, SemiNorm, Vector};
use crate::model::{LinearSsm, StateSpace};
use crate::sampling::{stream_rng, Gaussian, Stream};

/// Frobenius distance between consecutive `Σ_{t|t-1}` below which the
/// recursion counts as stationary.
pub const STEADY_STATE_TOL: f64 = 1e-9;
pub const MIN_MC_SIZE: usize = 10_000;
const BRACKET: (f64, f64) = (1e-8, 1e8);
const REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Criterion {
    Radius { r: f64 },
    Efficiency { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipTarget {
    Ao,
    Io,
}

impl ClipTarget {
    pub fn variant_kind(self) -> VariantKind {
        match self {
            ClipTarget::Ao => VariantKind::RlsAo,
            ClipTarget::Io => VariantKind::RlsIo,
        }
    }
}

impl TryFrom<VariantKind> for ClipTarget {
    type Error = Error;
    fn try_from(kind: VariantKind) -> Result<Self> {
        match kind {
            VariantKind::RlsAo => Ok(ClipTarget::Ao),
            VariantKind::RlsIo => Ok(ClipTarget::Io),
            VariantKind::Classical => Err(Error::InvalidParameter(
                "the classical filter has no clipping height".into(),
            )),
        }
    }
}

mod heights {
    //! `+inf` has no JSON representation; it is written as `null`.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = b.iter().map(|&x| x.is_finite().then_some(x)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    /// `b[t - 1]` is the height at time `t`.
    #[serde(with = "heights")]
    pub b: Vec<f64>,
    /// `None` for hand-specified tables.
    pub criterion: Option<Criterion>,
    pub target: Option<ClipTarget>,
    #[serde(default)]
    pub norm: NormKind,
    pub mc_size: usize,
    pub seed: u64,
    /// First step whose height was copied from its predecessor.
    pub steady_state_index: Option<usize>,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CalibrationTable {
    /// A hand-specified table.
    pub fn fixed(b: Vec<f64>, steady_state_index: Option<usize>) -> Self {
        Self {
            b,
            criterion: None,
            target: None,
            norm: NormKind::Euclidean,
            mc_size: 0,
            seed: 0,
            steady_state_index,
            degenerate: false,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Height at time `t`. Past the end of the table the last value is used
    /// if the table reached steady state.
    pub fn height_at(&self, t: usize) -> Result<f64> {
        if t >= 1 && t <= self.b.len() {
            return Ok(self.b[t - 1]);
        }
        match (self.steady_state_index, self.b.last()) {
            (Some(_), Some(&last)) if t > self.b.len() => Ok(last),
            _ => Err(Error::MissingCalibration(format!(
                "no clipping height for t={t} (table covers 1..={})",
                self.b.len()
            ))),
        }
    }

    /// Height after the recursion has settled (the last entry).
    pub fn steady_height(&self) -> Option<f64> {
        self.b.last().copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(s)?;
        if table.b.iter().any(|b| b.is_nan() || *b <= 0.0) {
            return Err(Error::Config("clipping heights must be positive".into()));
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub target: ClipTarget,
    pub norm: NormKind,
    pub mc_size: usize,
    pub seed: u64,
    pub horizon: usize,
}

impl CalibrationOptions {
    pub fn new(target: ClipTarget, horizon: usize) -> Self {
        Self {
            target,
            norm: NormKind::Euclidean,
            mc_size: 100_000,
            seed: 0,
            horizon,
        }
    }

    pub fn mc_size(mut self, n: usize) -> Self {
        self.mc_size = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.mc_size < MIN_MC_SIZE {
            return Err(Error::InvalidParameter(format!(
                "mc_size must be at least {MIN_MC_SIZE}, got {}",
                self.mc_size
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(())
    }
}

fn linear_model(model: &dyn StateSpace) -> Result<&LinearSsm> {
    model.as_linear().ok_or_else(|| {
        Error::InvalidModel("calibration needs a linear model; use a fixed height for the EKF".into())
    })
}

/// First `t` whose prediction covariance equals the previous one.
pub fn steady_state_index(schedule: &GainSchedule) -> Option<usize> {
    (2..=schedule.horizon()).find(|&t| {
        (&schedule.step(t).sigma_pred - &schedule.step(t - 1).sigma_pred).norm() < STEADY_STATE_TOL
    })
}

/// Calibrate per-step heights by the radius criterion.
pub fn calibrate_radius(
    model: &dyn StateSpace,
    r: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationTable> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("radius must lie in [0, 1], got {r}")));
    }
    opts.validate()?;
    let schedule = GainSchedule::new(linear_model(model)?, opts.horizon)?;
    let criterion = Criterion::Radius { r };
    if r == 0.0 {
        return Ok(infinite_table(criterion, opts));
    }
    let kind = opts.target.variant_kind();
    build_table(&schedule, criterion, opts, |t, step| {
        let cov = step.clipped_covariance(kind);
        let norms = sample_norms(&cov, opts.norm, opts.mc_size, opts.seed, t as u64)?;
        Ok(solve_radius(norms, r))
    })
}

/// Calibrate per-step heights by the efficiency-loss criterion.
pub fn calibrate_efficiency(
    model: &dyn StateSpace,
    delta: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationTable> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidParameter(format!("efficiency loss must be positive, got {delta}")));
    }
    opts.validate()?;
    let schedule = GainSchedule::new(linear_model(model)?, opts.horizon)?;
    let criterion = Criterion::Efficiency { delta };
    if delta == 0.0 {
        return Ok(infinite_table(criterion, opts));
    }
    build_table(&schedule, criterion, opts, |t, step| {
        let draws = EfficiencyDraws::new(step, opts.target, opts.norm, opts.mc_size, opts.seed, t as u64)?;
        Ok(draws.solve(delta))
    })
}

fn infinite_table(criterion: Criterion, opts: &CalibrationOptions) -> CalibrationTable {
    CalibrationTable {
        b: vec![f64::INFINITY; opts.horizon],
        criterion: Some(criterion),
        target: Some(opts.target),
        norm: opts.norm,
        mc_size: opts.mc_size,
        seed: opts.seed,
        steady_state_index: None,
        degenerate: false,
        warnings: Vec::new(),
    }
}

/// Outcome of one per-step solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solved {
    pub b: f64,
    pub degenerate: bool,
    pub infeasible: bool,
}

fn build_table(
    schedule: &GainSchedule,
    criterion: Criterion,
    opts: &CalibrationOptions,
    solve: impl Fn(usize, &ScheduleStep) -> Result<Solved> + Sync,
) -> Result<CalibrationTable> {
    let steady = steady_state_index(schedule);
    let last_solved = steady.map_or(schedule.horizon(), |s| s - 1);
    let solved: Vec<Solved> = (1..=last_solved)
        .into_par_iter()
        .map(|t| solve(t, schedule.step(t)))
        .collect::<Result<_>>()?;
    let mut b: Vec<f64> = solved.iter().map(|s| s.b).collect();
    let fill = *b.last().expect("at least one solved step");
    b.resize(schedule.horizon(), fill);

    let mut warnings = Vec::new();
    let infeasible: Vec<usize> = (1..=last_solved).filter(|&t| solved[t - 1].infeasible).collect();
    if !infeasible.is_empty() {
        let msg = format!(
            "criterion unreachable at {} step(s) (first t={}); using the lower bracket endpoint",
            infeasible.len(),
            infeasible[0]
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let degenerate = solved.iter().any(|s| s.degenerate);
    if degenerate {
        warnings.push("degenerate calibration: clipping height driven to zero".into());
    }
    Ok(CalibrationTable {
        b,
        criterion: Some(criterion),
        target: Some(opts.target),
        norm: opts.norm,
        mc_size: opts.mc_size,
        seed: opts.seed,
        steady_state_index: steady,
        degenerate,
        warnings,
    })
}

/// Norms of `n` draws from `N(0, cov)`; stream `stream` of the calibration RNG.
pub fn sample_norms(cov: &Matrix, norm: NormKind, n: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let g = Gaussian::centered(cov)?;
    let sn = match norm {
        NormKind::Mahalanobis => Some(SemiNorm::new(cov.clone())?),
        NormKind::Euclidean => None,
    };
    let mut rng = stream_rng(seed, stream, Stream::Calibration);
    (0..n)
        .map(|_| {
            let s = g.sample(&mut rng);
            match &sn {
                Some(sn) => Ok(sn.norm_sq(&s)?.sqrt()),
                None => Ok(s.norm()),
            }
        })
        .collect()
}

/// Solve `(1 - r) mean((n_i - b)_+) = r b` on a sample of norms.
///
/// The left side is piecewise linear between order statistics, so the root
/// is found exactly on the sorted sample.
pub fn solve_radius(mut norms: Vec<f64>, r: f64) -> Solved {
    let n = norms.len();
    if r == 0.0 {
        return Solved { b: f64::INFINITY, degenerate: false, infeasible: false };
    }
    norms.sort_by(f64::total_cmp);
    let scale = (norms.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if scale == 0.0 {
        return Solved { b: f64::INFINITY, degenerate: false, infeasible: false };
    }
    let floor = BRACKET.0 * scale;
    if r >= 1.0 {
        return Solved { b: floor, degenerate: true, infeasible: false };
    }
    let nf = n as f64;
    let mut suffix: f64 = norms.iter().sum();
    let mut lower = 0.0;
    for k in 0..n {
        // b in [lower, norms[k]]: the top n - k samples exceed b
        let m = (n - k) as f64;
        let b = (1.0 - r) * suffix / (nf * r + (1.0 - r) * m);
        if b >= lower && b <= norms[k] {
            return Solved { b: b.max(floor), degenerate: false, infeasible: false };
        }
        lower = norms[k];
        suffix -= norms[k];
    }
    // all samples below b: the criterion would force b = 0
    Solved { b: floor, degenerate: true, infeasible: false }
}

/// Radius criterion residual `(1 - r) mean((|X| - b)_+) - r b` and its
/// Monte-Carlo standard error.
pub fn radius_residual(norms: &[f64], r: f64, b: f64) -> (f64, f64) {
    let terms: Vec<f64> = norms.iter().map(|&x| (1.0 - r) * (x - b).max(0.0) - r * b).collect();
    mean_and_se(&terms)
}

fn mean_and_se(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Joint draws `(ΔX, ΔY)` reduced to the scalars the efficiency criterion needs.
///
/// For both variants the error of the clipped estimator is
/// `base + c(b) u` with `c = 1 - w` (AO) or `c = w` (IO), `w = min(1, b/|arg|)`.
pub struct EfficiencyDraws {
    base_sq: Vec<f64>,
    cross: Vec<f64>,
    u_sq: Vec<f64>,
    arg_norm: Vec<f64>,
    classical_sq: Vec<f64>,
    target: ClipTarget,
    scale: f64,
}

impl EfficiencyDraws {
    pub fn new(
        step: &ScheduleStep,
        target: ClipTarget,
        norm: NormKind,
        n: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let p = step.sigma_pred.nrows();
        let q = step.observation.nrows();
        let gx = Gaussian::centered(&step.sigma_pred)?;
        let ge = Gaussian::centered(&step.error_cov)?;
        let arg_cov = step.clipped_covariance(target.variant_kind());
        let sn = match norm {
            NormKind::Mahalanobis => Some(SemiNorm::new(arg_cov.clone())?),
            NormKind::Euclidean => None,
        };
        let mut rng = stream_rng(seed, stream, Stream::Calibration);
        let mut out = Self {
            base_sq: Vec::with_capacity(n),
            cross: Vec::with_capacity(n),
            u_sq: Vec::with_capacity(n),
            arg_norm: Vec::with_capacity(n),
            classical_sq: Vec::with_capacity(n),
            target,
            scale: arg_cov.trace().max(0.0).sqrt(),
        };
        let zk = &step.observation * &step.gain;
        let io_res = Matrix::identity(q, q) - &zk;
        for _ in 0..n {
            let dx = gx.sample(&mut rng);
            let dy: Vector = &step.observation * &dx + ge.sample(&mut rng);
            let kdy = &step.gain * &dy;
            let classical = &dx - &kdy;
            let (base, u, arg) = match target {
                ClipTarget::Ao => (classical.clone(), kdy.clone(), kdy),
                ClipTarget::Io => {
                    let arg = &io_res * &dy;
                    let base = &dx - &step.zsigma * &dy;
                    (base, &step.zsigma * &arg, arg)
                }
            };
            debug_assert_eq!(base.len(), p);
            let an = match &sn {
                Some(sn) => sn.norm_sq(&arg)?.sqrt(),
                None => arg.norm(),
            };
            out.base_sq.push(base.norm_squared());
            out.cross.push(base.dot(&u));
            out.u_sq.push(u.norm_squared());
            out.arg_norm.push(an);
            out.classical_sq.push(classical.norm_squared());
        }
        Ok(out)
    }

    fn clipped_sq(&self, i: usize, b: f64) -> f64 {
        let a = self.arg_norm[i];
        let w = if a <= b { 1.0 } else { b / a };
        let c = match self.target {
            ClipTarget::Ao => 1.0 - w,
            ClipTarget::Io => w,
        };
        (self.base_sq[i] + 2.0 * c * self.cross[i] + c * c * self.u_sq[i]).max(0.0)
    }

    /// `E|ΔX - est_b|²`.
    pub fn clipped_mse(&self, b: f64) -> f64 {
        (0..self.base_sq.len()).map(|i| self.clipped_sq(i, b)).sum::<f64>() / self.base_sq.len() as f64
    }

    /// `E|ΔX - KΔY|²`.
    pub fn classical_mse(&self) -> f64 {
        self.classical_sq.iter().sum::<f64>() / self.classical_sq.len() as f64
    }

    /// Residual `LHS(b) - (1 + δ) RHS` with its standard error.
    pub fn residual(&self, delta: f64, b: f64) -> (f64, f64) {
        let terms: Vec<f64> = (0..self.base_sq.len())
            .map(|i| self.clipped_sq(i, b) - (1.0 + delta) * self.classical_sq[i])
            .collect();
        mean_and_se(&terms)
    }

    /// Bisection in `log b` on `[1e-8, 1e8]·scale`.
    pub fn solve(&self, delta: f64) -> Solved {
        if delta == 0.0 || self.scale == 0.0 {
            return Solved { b: f64::INFINITY, degenerate: false, infeasible: false };
        }
        let target = (1.0 + delta) * self.classical_mse();
        let f = |b: f64| self.clipped_mse(b) - target;
        let mut lo = BRACKET.0 * self.scale;
        let mut hi = BRACKET.1 * self.scale;
        if f(lo) <= 0.0 {
            return Solved { b: lo, degenerate: true, infeasible: true };
        }
        if f(hi) > 0.0 {
            return Solved { b: hi, degenerate: false, infeasible: true };
        }
        while hi / lo - 1.0 > REL_TOL {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Solved { b: (lo * hi).sqrt(), degenerate: false, infeasible: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_preset, ModelPreset};
    use statrs::distribution::{ContinuousCDF, Continuous, Normal};

    /// `E(|N| - b)_+ = 2φ(b) - 2b(1 - Φ(b))`.
    fn closed_form_excess(b: f64) -> f64 {
        let n = Normal::new(0.0, 1.0).unwrap();
        2.0 * n.pdf(b) - 2.0 * b * (1.0 - n.cdf(b))
    }

    fn closed_form_radius_b(r: f64) -> f64 {
        let g = |b: f64| (1.0 - r) * closed_form_excess(b) - r * b;
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn radius_solver_matches_closed_form() {
        let cov = Matrix::identity(1, 1);
        for r in [0.1, 0.5] {
            let norms = sample_norms(&cov, NormKind::Euclidean, 400_000, 3, 0).unwrap();
            let b = solve_radius(norms, r).b;
            let oracle = closed_form_radius_b(r);
            assert!((b - oracle).abs() < 5e-3, "r={r}: {b} vs {oracle}");
        }
    }

    #[test]
    fn radius_solution_zeroes_sample_criterion() {
        let norms = sample_norms(&Matrix::identity(2, 2), NormKind::Euclidean, 20_000, 1, 0).unwrap();
        let b = solve_radius(norms.clone(), 0.2).b;
        let lhs = 0.8 * norms.iter().map(|x| (x - b).max(0.0)).sum::<f64>() / norms.len() as f64;
        assert!((lhs - 0.2 * b).abs() < 1e-12);
    }

    #[test]
    fn radius_edge_cases() {
        let norms = vec![1.0; 100];
        assert!(solve_radius(norms.clone(), 0.0).b.is_infinite());
        let s = solve_radius(norms, 1.0);
        assert!(s.degenerate && s.b > 0.0);
        assert!(solve_radius(vec![0.0; 10], 0.3).b.is_infinite());
    }

    #[test]
    fn radius_monotone_on_sima() {
        let m = build_preset(ModelPreset::SimA);
        let opts = CalibrationOptions::new(ClipTarget::Ao, 50).mc_size(50_000).seed(9);
        let b: Vec<f64> = [0.05, 0.1, 0.5]
            .iter()
            .map(|&r| calibrate_radius(&m, r, &opts).unwrap().steady_height().unwrap())
            .collect();
        assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
    }

    #[test]
    fn radius_zero_gives_infinite_table() {
        let m = build_preset(ModelPreset::SimA);
        let opts = CalibrationOptions::new(ClipTarget::Io, 10);
        let t = calibrate_radius(&m, 0.0, &opts).unwrap();
        assert!(t.b.iter().all(|b| b.is_infinite()));
        assert!(calibrate_radius(&m, 1.5, &opts).is_err());
        assert!(calibrate_radius(&m, -0.1, &opts).is_err());
    }

    #[test]
    fn steady_state_freeze_on_sima() {
        let m = build_preset(ModelPreset::SimA);
        let opts = CalibrationOptions::new(ClipTarget::Ao, 50).mc_size(20_000);
        let t = calibrate_radius(&m, 0.1, &opts).unwrap();
        let s = t.steady_state_index.expect("SimA settles");
        assert!(s < 30);
        assert!(t.b[s - 1..].iter().all(|&b| b == t.b[s - 2]));
        assert_eq!(t.height_at(500).unwrap(), t.b[49]);
    }

    #[test]
    fn efficiency_edge_cases() {
        let m = build_preset(ModelPreset::SimA);
        let opts = CalibrationOptions::new(ClipTarget::Ao, 20).mc_size(20_000);
        assert!(calibrate_efficiency(&m, 0.0, &opts).unwrap().b.iter().all(|b| b.is_infinite()));
        assert!(calibrate_efficiency(&m, -0.5, &opts).is_err());
        let huge = calibrate_efficiency(&m, 1e9, &opts).unwrap();
        assert!(!huge.warnings.is_empty());
        assert!(huge.degenerate);
    }

    #[test]
    fn efficiency_monotone_and_self_consistent() {
        let m = build_preset(ModelPreset::SimA);
        let opts = CalibrationOptions::new(ClipTarget::Ao, 40).mc_size(50_000).seed(4);
        let b05 = calibrate_efficiency(&m, 0.05, &opts).unwrap().steady_height().unwrap();
        let b10 = calibrate_efficiency(&m, 0.1, &opts).unwrap().steady_height().unwrap();
        assert!(b05 > b10);
        let sched = GainSchedule::new(m.as_linear().unwrap(), 40).unwrap();
        let fresh = EfficiencyDraws::new(sched.step(40), ClipTarget::Ao, NormKind::Euclidean, 200_000, 77, 0).unwrap();
        let (res, se) = fresh.residual(0.1, b10);
        assert!(res.abs() < 3.0 * se, "residual {res} se {se}");
    }

    #[test]
    fn io_efficiency_at_infinity_is_classical() {
        let m = build_preset(ModelPreset::SimB);
        let sched = GainSchedule::new(m.as_linear().unwrap(), 5).unwrap();
        let d = EfficiencyDraws::new(sched.step(5), ClipTarget::Io, NormKind::Euclidean, 10_000, 1, 0).unwrap();
        assert!((d.clipped_mse(f64::INFINITY) - d.classical_mse()).abs() < 1e-10);
    }

    #[test]
    fn table_json_round_trip_keeps_infinity() {
        let mut t = CalibrationTable::fixed(vec![1.5, f64::INFINITY], Some(2));
        t.criterion = Some(Criterion::Radius { r: 0.1 });
        let back = CalibrationTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(CalibrationTable::from_json(r#"{"b":[-1.0],"criterion":null,"target":null,"mc_size":0,"seed":0,"steady_state_index":null}"#).is_err());
    }

    #[test]
    fn calibration_rejects_nonlinear_models() {
        let m = build_preset(ModelPreset::M3);
        let opts = CalibrationOptions::new(ClipTarget::Ao, 10);
        assert!(matches!(calibrate_radius(&m, 0.1, &opts), Err(Error::InvalidModel(_))));
    }
}
