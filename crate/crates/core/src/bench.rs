//! Monte-Carlo study runner.
//!
//! A [`Scenario`] names a model preset, the contamination regimes to run and
//! the filter variants to compare. [`run_study`] simulates `n_runs`
//! replications per regime, runs every variant's filter and smoother and
//! scores the reconstruction error at the score time `t*` against the
//! realized state.
//!
//! Replication `k` always uses the random streams `(seed, k)`, so results do
//! not depend on how replications are scheduled across threads, and all
//! regimes share the same ideal noise draws.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_efficiency, calibrate_radius, CalibrationOptions, CalibrationTable, ClipTarget, Criterion};
use crate::contamination::{ContaminatingDist, ContaminationSpec, Simulator};
use crate::contamination::matrix_to_rows;
use crate::error::{Error, Result};
use crate::filter::{run_filter_stepwise, ClipHeight, FilterVariant, GainSchedule, NormKind, VariantKind};
use crate::linalg::{gen_inverse_bundle, SemiNorm, Vector, DEFAULT_PINV_TOL};
use crate::model::{Model, ModelPreset, StateSpace};
use crate::smoother::{smooth, SmootherGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Ideal,
    Ao,
    Io,
    BlockSignal,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Ideal => "ideal",
            Regime::Ao => "ao",
            Regime::Io => "io",
            Regime::BlockSignal => "block_signal",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" | "id" => Ok(Regime::Ideal),
            "ao" => Ok(Regime::Ao),
            "io" => Ok(Regime::Io),
            "block_signal" | "block-signal" | "block" => Ok(Regime::BlockSignal),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Smoother,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Smoother => "smoother",
        }
    }
}

/// How the robust variants get their clipping heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeightChoice {
    /// Per-step calibration under the ideal model (linear models only).
    Calibrated {
        criterion: Criterion,
        #[serde(default)]
        norm: NormKind,
        #[serde(default = "default_mc_size")]
        mc_size: usize,
    },
    /// The same height for every step and both robust variants.
    Fixed {
        b: f64,
        #[serde(default)]
        norm: NormKind,
    },
}

fn default_mc_size() -> usize {
    100_000
}

impl Default for HeightChoice {
    fn default() -> Self {
        HeightChoice::Calibrated {
            criterion: Criterion::Radius { r: 0.1 },
            norm: NormKind::Euclidean,
            mc_size: default_mc_size(),
        }
    }
}

fn default_variants() -> Vec<VariantKind> {
    vec![VariantKind::Classical, VariantKind::RlsIo, VariantKind::RlsAo]
}

fn default_regimes() -> Vec<Regime> {
    vec![Regime::Ideal, Regime::Ao, Regime::Io]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub preset: ModelPreset,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    pub n_runs: usize,
    pub horizon: usize,
    /// Time point `t*` at which errors are scored.
    pub score_time: usize,
    pub seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<VariantKind>,
    #[serde(default)]
    pub heights: HeightChoice,
    /// Per-regime overrides of the default contamination.
    #[serde(default)]
    pub contamination: BTreeMap<Regime, ContaminationSpec>,
    #[serde(default = "default_true")]
    pub smoother: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Scenario {
    /// Defaults for a preset: `T` from the preset, `t* = 0.7 T`, 1000 runs.
    pub fn for_preset(preset: ModelPreset) -> Self {
        let horizon = preset.default_horizon();
        Self {
            name: preset.name().to_string(),
            preset,
            regimes: default_regimes(),
            n_runs: 1000,
            horizon,
            score_time: (horizon * 7) / 10,
            seed: 0,
            variants: default_variants(),
            heights: if matches!(preset, ModelPreset::M3) {
                HeightChoice::Fixed { b: 5.0, norm: NormKind::Euclidean }
            } else {
                HeightChoice::default()
            },
            contamination: BTreeMap::new(),
            smoother: true,
            threads: None,
        }
    }

    pub fn runs(mut self, n: usize) -> Self {
        self.n_runs = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn regimes(mut self, regimes: Vec<Regime>) -> Self {
        self.regimes = regimes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.score_time == 0 || self.score_time > self.horizon {
            return Err(Error::Config(format!(
                "score time {} must lie in 1..={}",
                self.score_time, self.horizon
            )));
        }
        if self.variants.is_empty() || self.regimes.is_empty() {
            return Err(Error::Config("scenario needs at least one variant and one regime".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        for spec in self.contamination.values() {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn contamination_for(&self, model: &dyn StateSpace, regime: Regime) -> Result<ContaminationSpec> {
        match self.contamination.get(&regime) {
            Some(spec) => Ok(spec.clone()),
            None => default_contamination(self.preset, model, regime),
        }
    }
}

/// Contamination used when a scenario does not override it.
///
/// SimA: AO draws `Cauchy(5, 1)`, IO draws `Cauchy(-10, 1)`. SimB: AO draws
/// `Cauchy(0, 1/1000)`, IO draws a multivariate Cauchy with shape `Q`.
/// Elsewhere: AO `Cauchy(0, 10)` and IO multivariate Cauchy with shape `Q_1`.
/// All radii are 0.1.
pub fn default_contamination(
    preset: ModelPreset,
    model: &dyn StateSpace,
    regime: Regime,
) -> Result<ContaminationSpec> {
    let p = model.state_dim();
    let mv_cauchy = || -> Result<ContaminatingDist> {
        Ok(ContaminatingDist::MultivariateCauchy {
            center: vec![0.0; p],
            shape: matrix_to_rows(&model.innovation_cov(1)?),
        })
    };
    Ok(match (regime, preset) {
        (Regime::Ideal, _) => ContaminationSpec::none(),
        (Regime::Ao, ModelPreset::SimA) => ContaminationSpec::ao(0.1, ContaminatingDist::Cauchy { location: 5.0, scale: 1.0 }),
        (Regime::Io, ModelPreset::SimA) => ContaminationSpec::io(0.1, ContaminatingDist::Cauchy { location: -10.0, scale: 1.0 }),
        (Regime::Ao, ModelPreset::SimB) => ContaminationSpec::ao(0.1, ContaminatingDist::Cauchy { location: 0.0, scale: 1e-3 }),
        (Regime::Ao, _) => ContaminationSpec::ao(0.1, ContaminatingDist::Cauchy { location: 0.0, scale: 10.0 }),
        (Regime::Io, _) => ContaminationSpec::io(0.1, mv_cauchy()?),
        (Regime::BlockSignal, _) => ContaminationSpec::io(
            0.3,
            ContaminatingDist::BlockSignal { mean_duration: 10.0, amplitude_scale: 10.0 },
        ),
    })
}

/// Summary of one `(regime, variant, stage)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub regime: Regime,
    pub variant: VariantKind,
    pub stage: Stage,
    /// Mean of `|Δx|²` over runs.
    pub mse: f64,
    pub mse_se: f64,
    /// Mean of the D-semi-norm of `Δx` (linear models only).
    pub d_mse: Option<f64>,
    pub coord_mse: Vec<f64>,
    /// Per coordinate: quantiles of the signed error at [`QUANTILE_LEVELS`].
    pub coord_quantiles: Vec<Vec<f64>>,
    /// Per run: `|Δx|²`.
    pub sq_errors: Vec<f64>,
    /// Per run: D-semi-norm of `Δx`.
    pub d_sq_errors: Vec<f64>,
    /// Per run: signed error vector.
    pub errors: Vec<Vec<f64>>,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub preset: ModelPreset,
    pub n_runs: usize,
    pub horizon: usize,
    pub score_time: usize,
    pub seed: u64,
    /// Clipping height in force at `t*` for each robust variant.
    pub heights: BTreeMap<VariantKind, f64>,
    /// `2 tr(B⁻(V + b² I))` at `t*`, per robust variant (linear models only).
    pub d_bounds: BTreeMap<VariantKind, f64>,
    pub cells: Vec<Cell>,
}

impl StudyReport {
    pub fn cell(&self, regime: Regime, variant: VariantKind, stage: Stage) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.regime == regime && c.variant == variant && c.stage == stage)
    }

    pub fn mse(&self, regime: Regime, variant: VariantKind, stage: Stage) -> Option<f64> {
        self.cell(regime, variant, stage).map(|c| c.mse)
    }

    /// Text table in the layout `regime | filters | smoothers`.
    pub fn summary_table(&self) -> String {
        let variants: Vec<VariantKind> = {
            let mut v: Vec<_> = self.cells.iter().map(|c| c.variant).collect();
            v.dedup();
            let mut seen = Vec::new();
            for x in v {
                if !seen.contains(&x) {
                    seen.push(x);
                }
            }
            seen
        };
        let mut regimes: Vec<Regime> = Vec::new();
        for c in &self.cells {
            if !regimes.contains(&c.regime) {
                regimes.push(c.regime);
            }
        }
        let stages: Vec<Stage> = [Stage::Filter, Stage::Smoother]
            .into_iter()
            .filter(|s| self.cells.iter().any(|c| c.stage == *s))
            .collect();
        let mut out = format!("{:<14}", "regime");
        for s in &stages {
            for v in &variants {
                out.push_str(&format!("{:>14}", format!("{}/{}", &s.name()[..1], v.name())));
            }
        }
        out.push('\n');
        for r in regimes {
            out.push_str(&format!("{:<14}", r.name()));
            for s in &stages {
                for v in &variants {
                    match self.mse(r, *v, *s) {
                        Some(m) => out.push_str(&format!("{m:>14.3}")),
                        None => out.push_str(&format!("{:>14}", "-")),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Neumaier-compensated sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = neumaier_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The filter variants of a scenario with their clipping heights resolved.
pub fn resolve_variants(scenario: &Scenario, model: &dyn StateSpace) -> Result<Vec<FilterVariant>> {
    let mut tables: BTreeMap<VariantKind, CalibrationTable> = BTreeMap::new();
    scenario
        .variants
        .iter()
        .map(|&kind| {
            if kind == VariantKind::Classical {
                return Ok(FilterVariant::Classical);
            }
            let (b, norm) = match &scenario.heights {
                HeightChoice::Fixed { b, norm } => (ClipHeight::Fixed(*b), *norm),
                HeightChoice::Calibrated { criterion, norm, mc_size } => {
                    let table = match tables.get(&kind) {
                        Some(t) => t.clone(),
                        None => {
                            let opts = CalibrationOptions::new(ClipTarget::try_from(kind)?, scenario.horizon)
                                .mc_size(*mc_size)
                                .seed(scenario.seed)
                                .norm(*norm);
                            let t = match criterion {
                                Criterion::Radius { r } => calibrate_radius(model, *r, &opts)?,
                                Criterion::Efficiency { delta } => calibrate_efficiency(model, *delta, &opts)?,
                            };
                            tables.insert(kind, t.clone());
                            t
                        }
                    };
                    (ClipHeight::Table(table), *norm)
                }
            };
            Ok(match kind {
                VariantKind::RlsAo => FilterVariant::RlsAo { b, norm },
                _ => FilterVariant::RlsIo { b, norm },
            })
        })
        .collect()
}

/// Errors of one replication: `[variant][stage] -> Δx at t*`.
type RunErrors = Vec<Vec<Vector>>;

/// Run a scenario on its preset model.
pub fn run_study(scenario: &Scenario) -> Result<StudyReport> {
    let model = scenario.preset.build();
    run_study_with_model(scenario, &model)
}

/// Run a scenario on an explicitly given model.
pub fn run_study_with_model(scenario: &Scenario, model: &Model) -> Result<StudyReport> {
    scenario.validate()?;
    match scenario.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| study(scenario, model))
        }
        None => study(scenario, model),
    }
}

fn study(scenario: &Scenario, model: &Model) -> Result<StudyReport> {
    let variants = resolve_variants(scenario, model)?;
    let t_star = scenario.score_time;
    let stages: Vec<Stage> = if scenario.smoother {
        vec![Stage::Filter, Stage::Smoother]
    } else {
        vec![Stage::Filter]
    };

    let linear = match model.as_linear() {
        Some(lin) => {
            let sched = GainSchedule::new(lin, scenario.horizon)?;
            let gains = SmootherGains::new(&sched)?;
            Some((sched, gains))
        }
        None => None,
    };

    let mut heights = BTreeMap::new();
    let mut d_bounds = BTreeMap::new();
    let mut d_norm: Option<SemiNorm> = None;
    if let Some((sched, _)) = &linear {
        let st = sched.step(t_star);
        let bundle = gen_inverse_bundle(&st.observation, &st.sigma_pred, DEFAULT_PINV_TOL)?;
        d_norm = Some(bundle.observable_semi_norm(&st.observation, &st.sigma_pred)?);
        for v in &variants {
            if let FilterVariant::RlsAo { b, .. } | FilterVariant::RlsIo { b, .. } = v {
                let b = b.at(t_star)?;
                heights.insert(v.kind(), b);
                let q = st.observation.nrows();
                let inner = &st.error_cov + crate::linalg::Matrix::identity(q, q) * (b * b);
                d_bounds.insert(v.kind(), 2.0 * (&bundle.b_minus * inner).trace());
            }
        }
    } else {
        for v in &variants {
            if let FilterVariant::RlsAo { b, .. } | FilterVariant::RlsIo { b, .. } = v {
                heights.insert(v.kind(), b.at(t_star)?);
            }
        }
    }

    let simulator = Simulator::new(model, scenario.horizon)?;
    let mut cells = Vec::new();
    for &regime in &scenario.regimes {
        let spec = scenario.contamination_for(model, regime)?;
        let runs: Vec<RunErrors> = (0..scenario.n_runs as u64)
            .into_par_iter()
            .map(|rep| {
                let tr = simulator.run(&spec, scenario.seed, rep)?;
                let truth = &tr.x_real[t_star - 1];
                variants
                    .iter()
                    .map(|v| {
                        let (f, xs) = match &linear {
                            Some((sched, gains)) => {
                                let f = sched.run(&tr.y_real, v)?;
                                let xs = if scenario.smoother {
                                    Some(gains.smooth_states(&f)?[t_star].clone())
                                } else {
                                    None
                                };
                                (f, xs)
                            }
                            None => {
                                let f = run_filter_stepwise(model, &tr.y_real, v)?;
                                let xs = if scenario.smoother {
                                    Some(smooth(&f, model)?.state(t_star).clone())
                                } else {
                                    None
                                };
                                (f, xs)
                            }
                        };
                        let mut errs = vec![&f.steps[t_star - 1].x_filt - truth];
                        if let Some(xs) = xs {
                            errs.push(xs - truth);
                        }
                        Ok(errs)
                    })
                    .collect::<Result<RunErrors>>()
            })
            .collect::<Result<_>>()?;

        for (vi, v) in variants.iter().enumerate() {
            for (si, &stage) in stages.iter().enumerate() {
                let errors: Vec<&Vector> = runs.iter().map(|r| &r[vi][si]).collect();
                cells.push(summarize(regime, v.kind(), stage, &errors, d_norm.as_ref())?);
            }
        }
    }

    Ok(StudyReport {
        scenario: scenario.name.clone(),
        preset: scenario.preset,
        n_runs: scenario.n_runs,
        horizon: scenario.horizon,
        score_time: t_star,
        seed: scenario.seed,
        heights,
        d_bounds,
        cells,
    })
}

fn summarize(
    regime: Regime,
    variant: VariantKind,
    stage: Stage,
    errors: &[&Vector],
    d_norm: Option<&SemiNorm>,
) -> Result<Cell> {
    let p = errors.first().map_or(0, |e| e.len());
    let sq: Vec<f64> = errors.iter().map(|e| e.norm_squared()).collect();
    let (mse, mse_se) = mean_se(&sq);
    let d_sq: Vec<f64> = match d_norm {
        Some(sn) => errors.iter().map(|e| sn.norm_sq(e)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let d_mse = (!d_sq.is_empty()).then(|| mean_se(&d_sq).0);
    let mut coord_mse = Vec::with_capacity(p);
    let mut coord_quantiles = Vec::with_capacity(p);
    for i in 0..p {
        let mut col: Vec<f64> = errors.iter().map(|e| e[i]).collect();
        coord_mse.push(neumaier_sum(col.iter().map(|v| v * v)) / col.len() as f64);
        col.sort_by(f64::total_cmp);
        coord_quantiles.push(QUANTILE_LEVELS.iter().map(|&l| quantile(&col, l)).collect());
    }
    Ok(Cell {
        regime,
        variant,
        stage,
        mse,
        mse_se,
        d_mse,
        coord_mse,
        coord_quantiles,
        sq_errors: sq,
        d_sq_errors: d_sq,
        errors: errors.iter().map(|e| e.iter().copied().collect()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Guess from a file extension; CSV unless it ends in `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

pub const SUMMARY_HEADER: [&str; 7] = ["scenario", "regime", "variant", "stage", "coordinate", "statistic", "value"];
pub const RAW_HEADER: [&str; 6] = ["scenario", "regime", "variant", "stage", "run", "coordinate"];

/// Summary rows: `scenario, regime, variant, stage, coordinate, statistic, value`.
pub fn write_summary_csv<W: Write>(report: &StudyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for c in &report.cells {
        let mut row = |coord: &str, stat: &str, value: f64| {
            w.write_record([
                report.scenario.as_str(),
                c.regime.name(),
                c.variant.name(),
                c.stage.name(),
                coord,
                stat,
                &value.to_string(),
            ])
        };
        row("all", "mse", c.mse)?;
        row("all", "mse_se", c.mse_se)?;
        if let Some(d) = c.d_mse {
            row("all", "d_mse", d)?;
        }
        for (i, m) in c.coord_mse.iter().enumerate() {
            let coord = (i + 1).to_string();
            row(&coord, "mse", *m)?;
            for (l, q) in QUANTILE_LEVELS.iter().zip(&c.coord_quantiles[i]) {
                row(&coord, &format!("q{:02}", (l * 100.0).round() as u32), *q)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw per-run errors: `scenario, regime, variant, stage, run, sq_error,
/// d_sq_error, err_1..err_p`.
pub fn write_raw_csv<W: Write>(report: &StudyReport, out: W) -> Result<()> {
    let p = report.cells.first().map_or(0, |c| c.coord_mse.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["scenario", "regime", "variant", "stage", "run", "sq_error", "d_sq_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=p).map(|i| format!("err_{i}")));
    w.write_record(&header)?;
    for c in &report.cells {
        for (k, sq) in c.sq_errors.iter().enumerate() {
            let mut row = vec![
                report.scenario.clone(),
                c.regime.name().to_string(),
                c.variant.name().to_string(),
                c.stage.name().to_string(),
                (k + 1).to_string(),
                sq.to_string(),
                c.d_sq_errors.get(k).map_or(String::new(), |v| v.to_string()),
            ];
            row.extend(c.errors[k].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Path of the raw companion file: `report.csv` → `report.raw.csv`.
pub fn raw_companion_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}.raw.csv"))
}

/// Write a report. CSV output also writes the raw companion file.
pub fn export_report(report: &StudyReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let f = std::io::BufWriter::new(std::fs::File::create(path)?);
            serde_json::to_writer_pretty(f, report)?;
        }
        ReportFormat::Csv => {
            write_summary_csv(report, std::io::BufWriter::new(std::fs::File::create(path)?))?;
            let raw = raw_companion_path(path);
            write_raw_csv(report, std::io::BufWriter::new(std::fs::File::create(raw)?))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(preset: ModelPreset) -> Scenario {
        Scenario::for_preset(preset).runs(200).seed(5)
    }

    #[test]
    fn neumaier_beats_naive_sum() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(v), 2.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert_eq!(quantile(&s, 0.25), 1.0);
        assert_eq!(quantile(&s, 0.1), 0.4);
    }

    #[test]
    fn report_shape_and_mse_definition() {
        let r = run_study(&small(ModelPreset::SimA)).unwrap();
        assert_eq!(r.cells.len(), 3 * 3 * 2);
        for c in &r.cells {
            assert_eq!(c.sq_errors.len(), 200);
            let m = c.sq_errors.iter().sum::<f64>() / 200.0;
            assert!((m - c.mse).abs() < 1e-12 * m.max(1.0));
        }
        assert!(r.heights.contains_key(&VariantKind::RlsAo));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut s = small(ModelPreset::SimB);
        s.threads = Some(1);
        let a = run_study(&s).unwrap();
        s.threads = Some(4);
        let b = run_study(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_summary_cardinality() {
        let r = run_study(&small(ModelPreset::SimA)).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let n = text.lines().filter(|l| l.contains(",all,mse,")).count();
        assert_eq!(n, 18);
        assert!(text.starts_with("scenario,regime,variant,stage,coordinate,statistic,value"));
    }

    #[test]
    fn empty_report_gives_header_only() {
        let r = StudyReport {
            scenario: "x".into(),
            preset: ModelPreset::SimA,
            n_runs: 0,
            horizon: 1,
            score_time: 1,
            seed: 0,
            heights: BTreeMap::new(),
            d_bounds: BTreeMap::new(),
            cells: vec![],
        };
        let mut buf = Vec::new();
        write_summary_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn json_round_trip() {
        let r = run_study(&small(ModelPreset::SimA).runs(20)).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: StudyReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = small(ModelPreset::SimA);
        s.score_time = 51;
        assert!(run_study(&s).is_err());
        let s = small(ModelPreset::SimA).runs(0);
        assert!(run_study(&s).is_err());
    }

    #[test]
    fn nonlinear_preset_runs_with_fixed_height() {
        let mut s = small(ModelPreset::M3).runs(4);
        s.horizon = 60;
        s.score_time = 40;
        let r = run_study(&s).unwrap();
        assert!(r.cells.iter().all(|c| c.mse.is_finite() && c.d_mse.is_none()));
    }

    #[test]
    fn raw_companion_path_naming() {
        assert_eq!(raw_companion_path(Path::new("/tmp/report.csv")), Path::new("/tmp/report.raw.csv"));
    }
}
