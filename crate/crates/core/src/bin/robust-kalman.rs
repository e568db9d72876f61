use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use robust_kalman::bench::{export_report, run_study_with_model, write_summary_csv, HeightChoice, Regime, ReportFormat, Scenario};
use robust_kalman::calibration::{calibrate_efficiency, calibrate_radius, CalibrationOptions, ClipTarget, Criterion};
use robust_kalman::config::Config;
use robust_kalman::contamination::Simulator;
use robust_kalman::filter::{run_filter, ClipHeight, FilterVariant, NormKind, VariantKind};
use robust_kalman::io::{read_observations, write_observations, write_trajectory};
use robust_kalman::{smooth, CalibrationTable, Error, Model, ModelPreset, Result};

#[derive(Parser)]
#[command(name = "robust-kalman", version, about = "Classical and robust Kalman filtering, smoothing and Monte-Carlo benchmarks")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a (possibly contaminated) trajectory.
    Simulate(SimulateArgs),
    /// Filter observations from a CSV file.
    Filter(FilterArgs),
    /// Filter, then run the fixed-interval smoother.
    Smooth(FilterArgs),
    /// Compute a clipping-height table.
    Calibrate(CalibrateArgs),
    /// Run a Monte-Carlo study.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Built-in model: sima, simb, m1, m2, m3, ar2, rw2d.
    #[arg(long, conflicts_with = "config")]
    preset: Option<ModelPreset>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Radius,
    Efficiency,
}

#[derive(Args, Clone)]
struct HeightArgs {
    /// Fixed clipping height (skips calibration).
    #[arg(long)]
    b: Option<f64>,
    /// Contamination radius for the radius criterion.
    #[arg(long)]
    r: Option<f64>,
    /// Efficiency loss for the efficiency criterion.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long, default_value_t = 100_000)]
    mc_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Euclidean,
    Mahalanobis,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Euclidean => NormKind::Euclidean,
            NormArg::Mahalanobis => NormKind::Mahalanobis,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Contamination regime; defaults to the config's contamination or none.
    #[arg(long)]
    regime: Option<Regime>,
    /// Trajectory CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the realized observations in filter-input format.
    #[arg(long)]
    obs: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    heights: HeightArgs,
    /// classical, rls-ao or rls-io.
    #[arg(long)]
    variant: Option<VariantKind>,
    /// Calibration table JSON to use instead of calibrating.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Observation CSV (`t,y_1,..`; blank = missing).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    heights: HeightArgs,
    #[arg(long, default_value = "rls-ao")]
    variant: VariantKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    heights: HeightArgs,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    score_time: Option<usize>,
    /// Comma-separated regimes (ideal, ao, io, block_signal).
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<Regime>>,
    /// Report file; `.json` selects JSON, anything else CSV plus a raw companion.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Loaded {
    config: Config,
    preset: ModelPreset,
    model: Model,
    seed: u64,
    horizon: usize,
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let config = match (&args.config, args.preset) {
        (Some(path), _) => Config::from_path(path)?,
        (None, preset) => Config::for_preset(preset.unwrap_or(ModelPreset::SimA)),
    };
    let preset = match (&config.model, &config.scenario) {
        (robust_kalman::config::ModelConfig::Preset { preset }, _) => *preset,
        (_, Some(s)) => s.preset,
        _ => ModelPreset::SimA,
    };
    let model = config.model.build()?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let horizon = args.horizon.unwrap_or_else(|| config.horizon_or_default());
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    Ok(Loaded { config, preset, model, seed, horizon })
}

/// Heights requested on the command line, if any.
fn height_choice(h: &HeightArgs) -> Result<Option<HeightChoice>> {
    let norm = h.norm.map(NormKind::from).unwrap_or_default();
    if let Some(b) = h.b {
        if h.r.is_some() || h.delta.is_some() {
            return Err(Error::Config("--b cannot be combined with --r or --delta".into()));
        }
        if b.is_nan() || b <= 0.0 {
            return Err(Error::Config(format!("--b must be positive, got {b}")));
        }
        return Ok(Some(HeightChoice::Fixed { b, norm }));
    }
    let criterion = match (h.criterion, h.r, h.delta) {
        (None, None, None) => {
            return Ok(h.norm.map(|_| HeightChoice::Calibrated {
                criterion: Criterion::Radius { r: 0.1 },
                norm,
                mc_size: h.mc_size,
            }))
        }
        (Some(CriterionArg::Efficiency), _, d) | (None, None, d @ Some(_)) => {
            Criterion::Efficiency { delta: d.unwrap_or(0.1) }
        }
        (Some(CriterionArg::Radius), r, None) | (None, r @ Some(_), None) => Criterion::Radius { r: r.unwrap_or(0.1) },
        _ => return Err(Error::Config("give either --r or --delta, not both".into())),
    };
    match criterion {
        Criterion::Radius { r } if !(0.0..=1.0).contains(&r) => {
            return Err(Error::Config(format!("--r must lie in [0, 1], got {r}")))
        }
        Criterion::Efficiency { delta } if delta.is_nan() || delta < 0.0 => {
            return Err(Error::Config(format!("--delta must be non-negative, got {delta}")))
        }
        _ => {}
    }
    Ok(Some(HeightChoice::Calibrated { criterion, norm, mc_size: h.mc_size }))
}

fn calibrate(model: &Model, kind: VariantKind, choice: &Criterion, norm: NormKind, mc_size: usize, seed: u64, horizon: usize) -> Result<CalibrationTable> {
    let opts = CalibrationOptions::new(ClipTarget::try_from(kind)?, horizon)
        .mc_size(mc_size)
        .seed(seed)
        .norm(norm);
    match choice {
        Criterion::Radius { r } => calibrate_radius(model, *r, &opts),
        Criterion::Efficiency { delta } => calibrate_efficiency(model, *delta, &opts),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let l = load(&args.model)?;
    let spec = match (args.regime, &l.config.contamination) {
        (Some(regime), _) => {
            let s = Scenario::for_preset(l.preset);
            s.contamination_for(&l.model, regime)?
        }
        (None, Some(spec)) => spec.clone(),
        (None, None) => robust_kalman::ContaminationSpec::none(),
    };
    let traj = Simulator::new(&l.model, l.horizon)?.run(&spec, l.seed, 0)?;
    info!("simulated {} steps: {} IO / {} AO hits", l.horizon, traj.io_count(), traj.ao_count());
    write_trajectory(&traj, output(&args.out)?)?;
    if let Some(p) = &args.obs {
        write_observations(&traj.y_real, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn filter_variant(args: &FilterArgs, l: &Loaded, horizon: usize) -> Result<FilterVariant> {
    let cfg = l.config.filter.as_ref();
    let kind = args
        .variant
        .or(cfg.map(|f| f.variant))
        .unwrap_or(VariantKind::Classical);
    if kind == VariantKind::Classical {
        return Ok(FilterVariant::Classical);
    }
    let (b, norm) = if let Some(path) = &args.table {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let table = CalibrationTable::from_json(&text)?;
        let norm = table.norm;
        (ClipHeight::Table(table), norm)
    } else {
        let choice = match height_choice(&args.heights)? {
            Some(c) => c,
            None => cfg.map(|f| f.heights.clone()).unwrap_or_default(),
        };
        match choice {
            HeightChoice::Fixed { b, norm } => (ClipHeight::Fixed(b), norm),
            HeightChoice::Calibrated { criterion, norm, mc_size } => {
                if l.model.as_nonlinear().is_some() {
                    return Err(Error::Config("calibration needs a linear model; pass --b".into()));
                }
                let table = calibrate(&l.model, kind, &criterion, norm, mc_size, l.seed, horizon)?;
                (ClipHeight::Table(table), norm)
            }
        }
    };
    Ok(match kind {
        VariantKind::RlsAo => FilterVariant::RlsAo { b, norm },
        _ => FilterVariant::RlsIo { b, norm },
    })
}

fn cmd_filter(args: &FilterArgs, smoothing: bool) -> Result<()> {
    let l = load(&args.model)?;
    let ys = read_observations(File::open(&args.input).map_err(|e| Error::Config(format!("{}: {e}", args.input.display())))?)?;
    if ys.is_empty() {
        return Err(Error::InvalidInput("observation file has no rows".into()));
    }
    let variant = filter_variant(args, &l, ys.len())?;
    let result = run_filter(&l.model, &ys, &variant)?;
    info!("{} filter: {} steps, {} clipped", variant.kind(), result.horizon(), result.steps.iter().filter(|s| s.clipped).count());
    if smoothing {
        smooth(&result, &l.model)?.write_csv(output(&args.out)?)
    } else {
        result.write_csv(output(&args.out)?)
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let l = load(&args.model)?;
    let choice = height_choice(&args.heights)?.unwrap_or_default();
    let table = match choice {
        HeightChoice::Calibrated { criterion, norm, mc_size } => {
            calibrate(&l.model, args.variant, &criterion, norm, mc_size, l.seed, l.horizon)?
        }
        HeightChoice::Fixed { .. } => return Err(Error::Config("calibrate needs --r or --delta, not --b".into())),
    };
    for w in &table.warnings {
        log::warn!("{w}");
    }
    let mut out = output(&args.out)?;
    writeln!(out, "{}", table.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let l = load(&args.model)?;
    let mut s = l.config.scenario.clone().unwrap_or_else(|| Scenario::for_preset(l.preset));
    s.seed = args.model.seed.unwrap_or(s.seed);
    if let Some(h) = args.model.horizon {
        s.horizon = h;
        s.score_time = s.score_time.min(h);
    }
    if let Some(t) = args.score_time {
        s.score_time = t;
    }
    if let Some(n) = args.runs {
        s.n_runs = n;
    }
    if let Some(n) = args.threads {
        s.threads = Some(n);
    }
    if let Some(r) = &args.regimes {
        s.regimes = r.clone();
    }
    if let Some(h) = height_choice(&args.heights)? {
        s.heights = h;
    }
    s.validate()?;
    let report = run_study_with_model(&s, &l.model)?;
    eprint!("{}", report.summary_table());
    match &args.out {
        Some(p) => export_report(&report, ReportFormat::from_path(p), p)?,
        None => write_summary_csv(&report, BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Filter(a) => cmd_filter(a, false),
        Command::Smooth(a) => cmd_filter(a, true),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
