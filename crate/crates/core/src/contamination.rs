//! Outlier generators.
//!
//! Two substitutive mechanisms are supported and can be combined:
//!
//! * **IO** (propagating): with probability `r_io` the freshly propagated state
//!   `x̃_t = f(x_{t-1}, v_t)` is replaced by a contaminating draw `X^di_t`. The
//!   observation at such a step carries no observation error, and the
//!   replaced state feeds into all later steps.
//! * **AO** (non-propagating): with probability `r_ao` the observation is
//!   replaced wholesale by a contaminating draw `Y^di_t`.
//!
//! Every trajectory carries an ideal twin built from the very same innovation
//! and observation-error draws, so the difference between the two isolates
//! the effect of the contamination.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::StateSpace;
use crate::sampling::{stream_rng, Gaussian, Stream};

/// Realized and ideal paths of one simulation run. States and observations
/// are stored for `t = 1..=T` (index `t - 1`); `x0` is kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: Vector,
    pub x_ideal: Vec<Vector>,
    pub y_ideal: Vec<Vector>,
    pub x_real: Vec<Vector>,
    pub y_real: Vec<Vector>,
    pub io_hits: Vec<bool>,
    pub ao_hits: Vec<bool>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.x_real.len()
    }

    pub fn io_count(&self) -> usize {
        self.io_hits.iter().filter(|h| **h).count()
    }

    pub fn ao_count(&self) -> usize {
        self.ao_hits.iter().filter(|h| **h).count()
    }
}

/// Law of a contaminating draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContaminatingDist {
    /// Fixed value; a single entry is broadcast to every coordinate.
    PointMass { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Independent Cauchy coordinates.
    Cauchy { location: f64, scale: f64 },
    /// `center + G / |N|` with `G ~ N(0, shape)` and an independent standard
    /// normal `N`; the shape matrix may be singular.
    MultivariateCauchy { center: Vec<f64>, shape: Vec<Vec<f64>> },
    /// Piecewise-constant signal with geometric segment lengths and Gaussian
    /// levels. Contamination hits whole segments at a time.
    BlockSignal { mean_duration: f64, amplitude_scale: f64 },
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn broadcast(value: &[f64], dim: usize, what: &str) -> Result<Vector> {
    match value.len() {
        1 => Ok(Vector::from_element(dim, value[0])),
        n if n == dim => Ok(Vector::from_row_slice(value)),
        n => Err(Error::InvalidParameter(format!(
            "{what} has {n} entries, expected 1 or {dim}"
        ))),
    }
}

impl ContaminatingDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            ContaminatingDist::PointMass { value } => {
                if value.is_empty() || value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("point mass needs finite values".into()));
                }
            }
            ContaminatingDist::Gaussian { mean, cov } => {
                Gaussian::new(Vector::from_row_slice(mean), &rows_to_matrix(cov)?)?;
            }
            ContaminatingDist::Cauchy { location, scale } => {
                if !(location.is_finite() && *scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Cauchy needs finite location and positive scale, got ({location}, {scale})"
                    )));
                }
            }
            ContaminatingDist::MultivariateCauchy { center, shape } => {
                Gaussian::new(Vector::from_row_slice(center), &rows_to_matrix(shape)?)?;
            }
            ContaminatingDist::BlockSignal {
                mean_duration,
                amplitude_scale,
            } => {
                if !(*mean_duration >= 1.0) || !(*amplitude_scale >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "block signal needs mean_duration >= 1 and amplitude_scale >= 0, got ({mean_duration}, {amplitude_scale})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sampler(&self, dim: usize) -> Result<DistSampler> {
        self.validate()?;
        Ok(match self {
            ContaminatingDist::PointMass { value } => {
                DistSampler::Point(broadcast(value, dim, "point mass")?)
            }
            ContaminatingDist::Gaussian { mean, cov } => {
                let g = Gaussian::new(Vector::from_row_slice(mean), &rows_to_matrix(cov)?)?;
                dim_check(g.dim() == dim, || format!("Gaussian of dim {} for {dim}", g.dim()))?;
                DistSampler::Gaussian(g)
            }
            ContaminatingDist::Cauchy { location, scale } => DistSampler::Cauchy(
                Cauchy::new(*location, *scale).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                dim,
            ),
            ContaminatingDist::MultivariateCauchy { center, shape } => {
                let g = Gaussian::new(Vector::from_row_slice(center), &rows_to_matrix(shape)?)?;
                dim_check(g.dim() == dim, || {
                    format!("multivariate Cauchy of dim {} for {dim}", g.dim())
                })?;
                DistSampler::MultiCauchy(g)
            }
            ContaminatingDist::BlockSignal { .. } => DistSampler::Block(dim),
        })
    }
}

enum DistSampler {
    Point(Vector),
    Gaussian(Gaussian),
    Cauchy(Cauchy<f64>, usize),
    MultiCauchy(Gaussian),
    Block(usize),
}

impl DistSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, block_level: f64) -> Vector {
        match self {
            DistSampler::Point(v) => v.clone(),
            DistSampler::Gaussian(g) => g.sample(rng),
            DistSampler::Cauchy(c, dim) => Vector::from_iterator(*dim, (0..*dim).map(|_| c.sample(rng))),
            DistSampler::MultiCauchy(g) => {
                let centered = g.sample(rng);
                let chi: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                let center = g.mean();
                center + (centered - center) / chi
            }
            DistSampler::Block(dim) => Vector::from_element(*dim, block_level),
        }
    }
}

/// Radii and contaminating laws for the AO and IO mechanisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub r_ao: f64,
    pub r_io: f64,
    pub dist_ao: ContaminatingDist,
    pub dist_io: ContaminatingDist,
}

impl ContaminationSpec {
    /// No contamination at all.
    pub fn none() -> Self {
        Self {
            r_ao: 0.0,
            r_io: 0.0,
            dist_ao: ContaminatingDist::PointMass { value: vec![0.0] },
            dist_io: ContaminatingDist::PointMass { value: vec![0.0] },
        }
    }

    pub fn ao(r: f64, dist: ContaminatingDist) -> Self {
        Self {
            r_ao: r,
            dist_ao: dist,
            ..Self::none()
        }
    }

    pub fn io(r: f64, dist: ContaminatingDist) -> Self {
        Self {
            r_io: r,
            dist_io: dist,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r_ao", self.r_ao), ("r_io", self.r_io)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter(format!("{name} = {r} is outside [0, 1]")));
            }
        }
        self.dist_ao.validate()?;
        self.dist_io.validate()
    }
}

/// A piecewise-constant signal and where its segments start.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSignal {
    pub values: Vec<f64>,
    pub segment_starts: Vec<usize>,
}

impl BlockSignal {
    pub fn segment_count(&self) -> usize {
        self.segment_starts.len()
    }

    fn segment_of(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut seg = 0;
        for t in 0..self.values.len() {
            if seg + 1 < self.segment_starts.len() && self.segment_starts[seg + 1] == t {
                seg += 1;
            }
            out.push(seg);
        }
        out
    }
}

fn block_signal_with<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: usize,
    mean_duration: f64,
    amplitude_scale: f64,
) -> Result<BlockSignal> {
    if !(mean_duration >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mean_duration must be >= 1, got {mean_duration}"
        )));
    }
    let geo = Geometric::new(1.0 / mean_duration).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut values = Vec::with_capacity(horizon);
    let mut segment_starts = Vec::new();
    while values.len() < horizon {
        let len = 1 + geo.sample(rng) as usize;
        let level = amplitude_scale * rng.sample::<f64, _>(StandardNormal);
        segment_starts.push(values.len());
        let end = (values.len() + len).min(horizon);
        values.resize(end, level);
    }
    Ok(BlockSignal {
        values,
        segment_starts,
    })
}

/// Piecewise-constant signal of length `horizon`: segment lengths are
/// geometric with mean `mean_duration`, levels i.i.d. `N(0, amplitude_scale²)`.
pub fn block_signal(
    horizon: usize,
    mean_duration: f64,
    amplitude_scale: f64,
    seed: u64,
) -> Result<BlockSignal> {
    let mut rng = stream_rng(seed, 0, Stream::Auxiliary);
    block_signal_with(&mut rng, horizon, mean_duration, amplitude_scale)
}

/// `n` draws from `(1 - r) N(0, R) + r N(mu_c, R_c)`.
pub fn draw_contaminated_normal(
    r: f64,
    cov: &Matrix,
    mu_c: &Vector,
    cov_c: &Matrix,
    n: usize,
    seed: u64,
) -> Result<Vec<Vector>> {
    let mix = NormalMixture::new(r, cov, mu_c, cov_c)?;
    let mut rng = stream_rng(seed, 0, Stream::Auxiliary);
    Ok((0..n).map(|_| mix.sample(&mut rng).0).collect())
}

/// Contaminated normal `(1 - r) N(0, R) + r N(mu_c, R_c)`.
#[derive(Debug, Clone)]
pub struct NormalMixture {
    r: f64,
    ideal: Gaussian,
    contaminating: Gaussian,
}

impl NormalMixture {
    pub fn new(r: f64, cov: &Matrix, mu_c: &Vector, cov_c: &Matrix) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("r = {r} is outside [0, 1]")));
        }
        let ideal = Gaussian::centered(cov)?;
        let contaminating = Gaussian::new(mu_c.clone(), cov_c)?;
        dim_check(ideal.dim() == contaminating.dim(), || "mixture components differ in dimension".into())?;
        Ok(Self {
            r,
            ideal,
            contaminating,
        })
    }

    /// Returns the draw, its ideal-component counterpart (same stream
    /// position) and whether the contaminating component was chosen.
    fn sample_twin<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, Vector, bool) {
        let ideal = self.ideal.sample(rng);
        let hit = rng.random::<f64>() < self.r;
        let di = self.contaminating.sample(rng);
        if hit {
            (di, ideal, true)
        } else {
            (ideal.clone(), ideal, false)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, bool) {
        let (draw, _, hit) = self.sample_twin(rng);
        (draw, hit)
    }
}

/// Precomputed innovation/error samplers; constant models get a single root.
struct NoiseSamplers {
    innov: Vec<Gaussian>,
    err: Vec<Gaussian>,
}

impl NoiseSamplers {
    fn new(model: &dyn StateSpace, horizon: usize) -> Result<Self> {
        let steps = if model.constant_noise() { 1 } else { horizon };
        let mut innov = Vec::with_capacity(steps);
        let mut err = Vec::with_capacity(steps);
        for t in 1..=steps.max(1) {
            innov.push(Gaussian::new(model.innovation_mean(t), &model.innovation_cov(t)?)?);
            err.push(Gaussian::new(model.error_mean(t), &model.error_cov(t)?)?);
        }
        Ok(Self { innov, err })
    }

    fn at(&self, t: usize) -> (&Gaussian, &Gaussian) {
        let k = (t - 1).min(self.innov.len() - 1);
        (&self.innov[k], &self.err[k])
    }
}

struct BlockPlan {
    levels: Vec<f64>,
    hits: Vec<bool>,
}

fn block_plan<R: Rng + ?Sized>(
    rng: &mut R,
    dist: &ContaminatingDist,
    r: f64,
    horizon: usize,
) -> Result<Option<BlockPlan>> {
    let ContaminatingDist::BlockSignal {
        mean_duration,
        amplitude_scale,
    } = dist
    else {
        return Ok(None);
    };
    let signal = block_signal_with(rng, horizon, *mean_duration, *amplitude_scale)?;
    let seg_hits: Vec<bool> = (0..signal.segment_count()).map(|_| rng.random::<f64>() < r).collect();
    let hits = signal.segment_of().into_iter().map(|s| seg_hits[s]).collect();
    Ok(Some(BlockPlan {
        levels: signal.values,
        hits,
    }))
}

/// Simulate a contaminated trajectory and its ideal twin.
pub fn simulate_contaminated(
    model: &dyn StateSpace,
    horizon: usize,
    spec: &ContaminationSpec,
    seed: u64,
) -> Result<Trajectory> {
    simulate_replication(model, horizon, spec, seed, 0)
}

/// As [`simulate_contaminated`], for replication `rep` of a Monte-Carlo study.
pub fn simulate_replication(
    model: &dyn StateSpace,
    horizon: usize,
    spec: &ContaminationSpec,
    seed: u64,
    rep: u64,
) -> Result<Trajectory> {
    let samplers = NoiseSamplers::new(model, horizon)?;
    simulate_with_samplers(model, &samplers, horizon, spec, seed, rep)
}

/// Simulate many replications sharing the precomputed noise samplers.
pub fn simulate_many(
    model: &dyn StateSpace,
    horizon: usize,
    spec: &ContaminationSpec,
    seed: u64,
    reps: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    let samplers = NoiseSamplers::new(model, horizon)?;
    reps.map(|rep| simulate_with_samplers(model, &samplers, horizon, spec, seed, rep))
        .collect()
}

/// Reusable simulator: the noise laws are factorized once and shared by all
/// replications.
pub struct Simulator<'a> {
    model: &'a dyn StateSpace,
    samplers: NoiseSamplers,
    horizon: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a dyn StateSpace, horizon: usize) -> Result<Self> {
        Ok(Self {
            model,
            samplers: NoiseSamplers::new(model, horizon)?,
            horizon,
        })
    }

    pub fn run(&self, spec: &ContaminationSpec, seed: u64, rep: u64) -> Result<Trajectory> {
        simulate_with_samplers(self.model, &self.samplers, self.horizon, spec, seed, rep)
    }
}

fn simulate_with_samplers(
    model: &dyn StateSpace,
    samplers: &NoiseSamplers,
    horizon: usize,
    spec: &ContaminationSpec,
    seed: u64,
    rep: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    spec.validate()?;
    let (p, q) = (model.state_dim(), model.obs_dim());
    let io_sampler = spec.dist_io.sampler(p)?;
    let ao_sampler = spec.dist_ao.sampler(q)?;

    let mut noise_rng = stream_rng(seed, rep, Stream::Noise);
    let mut init_rng = stream_rng(seed, rep, Stream::InitialState);
    let mut cont_rng = stream_rng(seed, rep, Stream::Contamination);

    let io_blocks = block_plan(&mut cont_rng, &spec.dist_io, spec.r_io, horizon)?;
    let ao_blocks = block_plan(&mut cont_rng, &spec.dist_ao, spec.r_ao, horizon)?;

    let x0 = Gaussian::new(model.initial_mean().clone(), model.initial_cov())?.sample(&mut init_rng);
    let mut traj = Trajectory {
        x0: x0.clone(),
        x_ideal: Vec::with_capacity(horizon),
        y_ideal: Vec::with_capacity(horizon),
        x_real: Vec::with_capacity(horizon),
        y_real: Vec::with_capacity(horizon),
        io_hits: Vec::with_capacity(horizon),
        ao_hits: Vec::with_capacity(horizon),
    };
    let mut x_id = x0.clone();
    let mut x_re = x0;
    let zero_err = Vector::zeros(model.error_dim());

    for t in 1..=horizon {
        let (innov, err) = samplers.at(t);
        let v = innov.sample(&mut noise_rng);
        let e = err.sample(&mut noise_rng);

        x_id = model.transition(t, &x_id, &v)?;
        let y_id = model.observe(t, &x_id, &e)?;

        let x_tilde = model.transition(t, &x_re, &v)?;
        let (io_hit, io_level) = match &io_blocks {
            Some(plan) => (plan.hits[t - 1], plan.levels[t - 1]),
            None => (cont_rng.random::<f64>() < spec.r_io, 0.0),
        };
        let y_base = if io_hit {
            x_re = io_sampler.sample(&mut cont_rng, io_level);
            model.observe(t, &x_re, &zero_err)?
        } else {
            x_re = x_tilde;
            model.observe(t, &x_re, &e)?
        };

        let (ao_hit, ao_level) = match &ao_blocks {
            Some(plan) => (plan.hits[t - 1], plan.levels[t - 1]),
            None => (cont_rng.random::<f64>() < spec.r_ao, 0.0),
        };
        let y_re = if ao_hit {
            ao_sampler.sample(&mut cont_rng, ao_level)
        } else {
            y_base
        };

        traj.x_ideal.push(x_id.clone());
        traj.y_ideal.push(y_id);
        traj.x_real.push(x_re.clone());
        traj.y_real.push(y_re);
        traj.io_hits.push(io_hit);
        traj.ao_hits.push(ao_hit);
    }
    Ok(traj)
}

/// Simulate with contaminated-normal innovations and/or observation errors.
///
/// Innovation contamination propagates (recorded in `io_hits`); error
/// contamination does not (recorded in `ao_hits`). The ideal twin uses the
/// ideal-component draws from the same stream positions.
pub fn simulate_mixture_noise(
    model: &dyn StateSpace,
    horizon: usize,
    innovation_mix: Option<&NormalMixture>,
    error_mix: Option<&NormalMixture>,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let samplers = NoiseSamplers::new(model, horizon)?;
    let mut noise_rng = stream_rng(seed, 0, Stream::Noise);
    let mut init_rng = stream_rng(seed, 0, Stream::InitialState);
    let x0 = Gaussian::new(model.initial_mean().clone(), model.initial_cov())?.sample(&mut init_rng);
    let mut traj = Trajectory {
        x0: x0.clone(),
        x_ideal: Vec::new(),
        y_ideal: Vec::new(),
        x_real: Vec::new(),
        y_real: Vec::new(),
        io_hits: Vec::new(),
        ao_hits: Vec::new(),
    };
    let (mut x_id, mut x_re) = (x0.clone(), x0);
    for t in 1..=horizon {
        let (innov, err) = samplers.at(t);
        let (v_re, v_id, io_hit) = match innovation_mix {
            Some(m) => m.sample_twin(&mut noise_rng),
            None => {
                let v = innov.sample(&mut noise_rng);
                (v.clone(), v, false)
            }
        };
        let (e_re, e_id, ao_hit) = match error_mix {
            Some(m) => m.sample_twin(&mut noise_rng),
            None => {
                let e = err.sample(&mut noise_rng);
                (e.clone(), e, false)
            }
        };
        x_id = model.transition(t, &x_id, &v_id)?;
        x_re = model.transition(t, &x_re, &v_re)?;
        traj.y_ideal.push(model.observe(t, &x_id, &e_id)?);
        traj.y_real.push(model.observe(t, &x_re, &e_re)?);
        traj.x_ideal.push(x_id.clone());
        traj.x_real.push(x_re.clone());
        traj.io_hits.push(io_hit);
        traj.ao_hits.push(ao_hit);
    }
    Ok(traj)
}
