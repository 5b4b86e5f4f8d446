use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixed_adc::estimation::CrossCorrelation;
use mixed_adc::experiments::{
    optimize_power_split, parse_grid, read_meta, run_figure, scheme_se, EvalOptions, FigureId, FigureSpec, Scheme,
};
use mixed_adc::spectral_efficiency::Detector;
use mixed_adc::sysmodel::SystemConfig;
use mixed_adc::{Error, Result};

#[derive(Parser)]
#[command(name = "mixed-adc", version, about = "Mixed-ADC massive MIMO uplink experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute a figure and write <figure>.csv and <figure>.meta.json.
    Run(RunArgs),
    /// Re-run a figure from its JSON sidecar.
    Rerun {
        meta: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Optimize the training/data power split of one scheme and print it as JSON.
    Optimize(PointArgs),
    /// Evaluate one scheme at fixed powers and print the SE report as JSON.
    Evaluate(PointArgs),
    /// List the figure ids.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Figure id, e.g. F8_MRC_SNR or F8.
    #[arg(long)]
    figure: String,
    /// SNR grid `a:b:step` in dB (per-curve SNRs for the T and N sweeps).
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Comma-separated T or N values for the sweep figures.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<u64>,
    /// Trials per candidate split during power optimization.
    #[arg(long)]
    opt_trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base system config (TOML or JSON); sets M, K, eta and the noise level.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-draw arcsine-law distortion covariance for one-bit rows.
    #[arg(long)]
    exact_cqd: bool,
    /// Cross-sub-interval correlation normalized by the noisy powers.
    #[arg(long, conflicts_with = "ignore_rho")]
    exact_rho: bool,
    /// Drop the cross-sub-interval correlation.
    #[arg(long)]
    ignore_rho: bool,
    /// Use p_t = p_d = P instead of optimizing the split.
    #[arg(long)]
    no_power_opt: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Mrc,
    Zf,
}

#[derive(Args)]
struct PointArgs {
    /// joint-as, joint-subarray-as, joint, not-joint, one-bit, non-round-robin, multi-bit-<b>, full-res
    #[arg(long)]
    scheme: String,
    #[arg(long, value_enum, default_value = "mrc")]
    detector: DetectorArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    highres: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    coherence: Option<usize>,
    /// Average SNR in dB; overrides the config's power.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    exact_cqd: bool,
    #[arg(long)]
    exact_rho: bool,
    /// Simulate MRC global selection instead of the closed-form bound.
    #[arg(long)]
    mc_selection: bool,
}

fn cross(exact: bool, ignore: bool) -> CrossCorrelation {
    match (exact, ignore) {
        (true, _) => CrossCorrelation::Exact,
        (_, true) => CrossCorrelation::Ignored,
        _ => CrossCorrelation::Noiseless,
    }
}

fn run(args: RunArgs) -> Result<()> {
    let figure: FigureId = args.figure.parse()?;
    let mut spec = FigureSpec::new(figure);
    if let Some(path) = &args.config {
        spec.base = SystemConfig::from_file(path)?;
    }
    if let Some(s) = &args.snr {
        spec.snr_db = parse_grid(s)?;
    }
    if let Some(v) = args.sweep {
        spec.sweep = v;
    }
    spec.trials = args.trials.unwrap_or(spec.trials);
    spec.opt_trials = args.opt_trials.unwrap_or(spec.opt_trials);
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.workers = args.workers;
    spec.exact_cqd = args.exact_cqd;
    spec.cross = cross(args.exact_rho, args.ignore_rho);
    spec.power_opt = !args.no_power_opt;
    let out = run_figure(&spec, &args.out)?;
    println!("{} rows -> {}", out.rows.len(), out.csv_path.display());
    println!("sidecar -> {}", out.meta_path.display());
    Ok(())
}

fn point(args: &PointArgs) -> Result<(SystemConfig, Scheme, Detector, EvalOptions)> {
    let mut cfg = match &args.config {
        Some(p) => SystemConfig::from_file(p)?,
        None => SystemConfig::builder().build()?,
    };
    cfg.antennas = args.antennas.unwrap_or(cfg.antennas);
    cfg.highres = args.highres.unwrap_or(cfg.highres);
    cfg.users = args.users.unwrap_or(cfg.users);
    cfg.coherence = args.coherence.unwrap_or(cfg.coherence);
    if args.users.is_some() {
        cfg.pilot_len = cfg.users;
        cfg.beta = vec![1.0; cfg.users];
        cfg.tx_powers = None;
    }
    if let Some(db) = args.snr {
        let p = 10f64.powf(db / 10.0) * cfg.sigma_n2;
        cfg.p = p;
        cfg.p_t = p;
        cfg.p_d = p;
    }
    cfg.validate()?;
    let detector = match args.detector {
        DetectorArg::Mrc => Detector::Mrc,
        DetectorArg::Zf => Detector::Zf,
    };
    let opts = EvalOptions {
        trials: args.trials,
        seed: args.seed,
        workers: None,
        exact_cqd: args.exact_cqd,
        cross: cross(args.exact_rho, false),
        mc_selection: args.mc_selection,
    };
    Ok((cfg, args.scheme.parse()?, detector, opts))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run(args) => run(args),
        Cmd::Rerun { meta, out } => {
            let spec = read_meta(&meta)?.spec;
            let res = run_figure(&spec, &out)?;
            println!("{} rows -> {}", res.rows.len(), res.csv_path.display());
            Ok(())
        }
        Cmd::Optimize(args) => {
            let (cfg, scheme, det, opts) = point(&args)?;
            print_json(&optimize_power_split(&cfg, cfg.p, scheme, det, &opts)?)
        }
        Cmd::Evaluate(args) => {
            let (cfg, scheme, det, opts) = point(&args)?;
            print_json(&scheme_se(&cfg, scheme, det, &opts)?)
        }
        Cmd::List => {
            for id in FigureId::ALL {
                println!("{:<14} {}", id.name(), id.description());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
