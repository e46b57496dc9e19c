use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crackmetry::mask::{MaskParams, QualityThresholds};
use crackmetry_cli::config::{MlsParams, SorParams};
use crackmetry_cli::tools::{self, Preset, SynthConfig};
use crackmetry_cli::{run, CliError, Plan, Stage};

#[derive(Parser)]
#[command(name = "crackmetry", version, about = "Crack width measurement from LiDAR and camera data")]
struct Cli {
    /// More log output (repeat for trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory with ground truth.
    Synth {
        /// Scene settings file (TOML); flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        /// Point noise standard deviation, meters.
        #[arg(long)]
        noise: Option<f64>,
        /// Cloud sample spacing, meters.
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Refine the LiDAR→camera extrinsic by minimizing mean NID.
    Calibrate(ConfigArgs),
    /// Refine one crack mask with prompt-driven crops and the quality gate.
    RefineMask {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// identity, dilate[:r], flood, holes:<n> or external:<command>.
        #[arg(long, default_value = "identity")]
        refiner: String,
        #[arg(long, default_value_t = QualityThresholds::default().max_size_ratio)]
        max_size_ratio: f64,
        #[arg(long, default_value_t = QualityThresholds::default().max_holes)]
        max_holes: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Remove outliers and smooth a point cloud.
    Denoise {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = SorParams::default().k)]
        k: usize,
        #[arg(long, default_value_t = SorParams::default().n_sigma)]
        n_sigma: f64,
        #[arg(long)]
        no_sor: bool,
        #[arg(long)]
        no_mls: bool,
        /// MLS radius in meters; 0 picks five times the median spacing.
        #[arg(long, default_value_t = 0.0)]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Color and label the cloud from the configured frames.
    Fuse(ConfigArgs),
    /// Measure crack widths at the configured seeds.
    Measure(ConfigArgs),
    /// Score masks (mIoU) and clouds (density, roughness).
    Eval {
        /// Predicted mask, or a directory of masks.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Ground-truth mask, or a directory matched by file name.
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        #[arg(long)]
        cloud: Vec<PathBuf>,
        /// Neighborhood radius for cloud metrics, meters.
        #[arg(long, default_value_t = crackmetry::metrics::DEFAULT_METRIC_RADIUS)]
        radius: f64,
        /// Report file; the report is always printed to stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run every enabled stage.
    Run(ConfigArgs),
    /// Answer one external-refiner request on stdin (for testing).
    #[command(hide = true)]
    MockRefiner {
        #[arg(long)]
        mode: String,
    },
}

fn tool<T>(stage: Stage, r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Stage {
        stage,
        message: format!("{e:#}"),
    })
}

fn run_config(args: &ConfigArgs, plan: Option<Plan>) -> Result<(), CliError> {
    let summary = run(&args.config, args.out.as_deref(), plan)?;
    for line in summary.metrics.to_text().lines().skip(1) {
        log::info!("{line}");
    }
    log::info!("outputs in {}", summary.output_dir.display());
    Ok(())
}

fn only(f: impl FnOnce(&mut Plan)) -> Option<Plan> {
    let mut p = Plan::none();
    f(&mut p);
    Some(p)
}

fn synth_config(path: Option<&Path>, preset: Option<Preset>) -> Result<SynthConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let mut cfg: SynthConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(preset) = preset {
                cfg.preset = preset;
            }
            Ok(cfg)
        }
        None => Ok(SynthConfig {
            preset: preset.unwrap_or(Preset::Plane),
            seed: 7,
            noise: None,
            spacing: None,
        }),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            config,
            preset,
            seed,
            noise,
            spacing,
            out,
        } => {
            let mut cfg = synth_config(config.as_deref(), preset)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.noise = noise.or(cfg.noise);
            cfg.spacing = spacing.or(cfg.spacing);
            tool(Stage::Write, tools::synthesize(&cfg, &out)).map(|_| ())
        }
        Command::Calibrate(args) => run_config(&args, only(|p| p.calibrate = true)),
        Command::Fuse(args) => run_config(&args, only(|p| p.fuse = true)),
        Command::Measure(args) => run_config(&args, only(|p| p.measure = true)),
        Command::Run(args) => run_config(&args, None),
        Command::RefineMask {
            image,
            mask,
            refiner,
            max_size_ratio,
            max_holes,
            out,
        } => {
            let params = MaskParams {
                quality: QualityThresholds {
                    max_size_ratio,
                    max_holes,
                },
                ..MaskParams::default()
            };
            let refined = tool(Stage::RefineMasks, tools::refine_mask_file(&image, &mask, &refiner, &params, &out))?;
            log::info!("{} crops, {} foreground pixels", refined.crops.len(), refined.mask.count());
            Ok(())
        }
        Command::Denoise {
            input,
            out,
            k,
            n_sigma,
            no_sor,
            no_mls,
            radius,
            degree,
        } => {
            let sor = SorParams {
                enabled: !no_sor,
                k,
                n_sigma,
            };
            let mls = MlsParams {
                enabled: !no_mls,
                search_radius: radius,
                degree,
            };
            tool(Stage::Denoise, tools::denoise_file(&input, &out, &sor, &mls)).map(|_| ())
        }
        Command::Eval {
            pred,
            gt,
            cloud,
            radius,
            out,
        } => {
            let pairs = match (pred, gt) {
                (Some(p), Some(g)) => tool(Stage::Eval, tools::pair_masks(&p, &g))?,
                _ => Vec::new(),
            };
            if pairs.is_empty() && cloud.is_empty() {
                return Err(CliError::Config("eval needs --pred/--gt or --cloud".into()));
            }
            let report = tool(Stage::Eval, tools::evaluate(&pairs, &cloud, radius))?;
            let text = report.to_text();
            print!("{text}");
            if let Some(path) = out {
                tool(Stage::Write, std::fs::write(&path, &text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::MockRefiner { mode } => {
            let mut request = Vec::new();
            let io = std::io::stdin().read_to_end(&mut request).map_err(anyhow::Error::from);
            tool(Stage::RefineMasks, io)?;
            let response = tool(Stage::RefineMasks, tools::mock_refine(&mode, &request))?;
            let written = std::io::stdout().write_all(&response).map_err(anyhow::Error::from);
            tool(Stage::Write, written)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
