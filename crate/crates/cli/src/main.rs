use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latent_rom::config::RomConfig;
use latent_rom::data::{make_dataset, read_snapshots, write_snapshots, SnapshotSet};
use latent_rom::reduction::{fit_reducer, grid_search, Reducer, ReducerModel};
use latent_rom::rom::{delay_sweep, load_bundle, offline, save_bundle, sweep_csv};
use latent_rom::RomError;

#[derive(Parser)]
#[command(name = "latent-rom", version, about = "Parametric reduced-order models with latent HODMD")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path, overriding the config path for the command's artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Burgers,
    Synthetic2d,
}

#[derive(Subcommand)]
enum Command {
    /// Write a full default configuration.
    Init {
        #[arg(long, value_enum, default_value = "burgers")]
        preset: Preset,
    },
    /// Generate train, validation and test snapshot files.
    GenerateData,
    /// Fit the configured reducer on the training snapshots.
    Train,
    /// Train one autoencoder per grid point and keep the best.
    GridSearch,
    /// Encode the training snapshots and fit one HODMD model per parameter.
    BuildRom,
    /// Predict the full-order field at one time and parameter.
    Predict {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        time: f64,
        /// Parameter components, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        param: Vec<f64>,
        /// Also write the field as `index,value` rows.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Errors of the ROM on the test snapshots for each delay count.
    Evaluate {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Delay counts, comma separated; defaults to the config sweep.
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<usize>>,
        /// Per-sample errors at the configured delay count.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Io(m) => m,
        }
    }
}

impl From<RomError> for Failure {
    fn from(e: RomError) -> Self {
        let msg = e.to_string();
        match e {
            RomError::Io(_) | RomError::Format(_) => Failure::Io(msg),
            RomError::Shape(_) | RomError::InvalidInput(_) | RomError::Extrapolation { .. } | RomError::Json(_) => {
                Failure::Config(msg)
            }
            RomError::NonFinite(_) | RomError::NoConvergence { .. } | RomError::Singular(_) | RomError::Diverged { .. } => {
                Failure::Numeric(msg)
            }
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_config(common: &Common) -> Result<RomConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RomConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RomConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn read_split(cfg: &RomConfig, name: &str) -> Result<SnapshotSet, Failure> {
    Ok(read_snapshots(cfg.paths.split(name))?)
}

fn configure_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without the parallel feature; --threads {n} has no effect");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads(cli.common.threads)?;
    let common = &cli.common;
    match cli.command {
        Command::Init { preset } => {
            let mut cfg = match preset {
                Preset::Burgers => RomConfig::default(),
                Preset::Synthetic2d => RomConfig::synthetic2d(),
            };
            if let Some(seed) = common.seed {
                cfg.set_seed(seed);
            }
            match &common.out {
                Some(path) => write_text(path, &cfg.to_json())?,
                None => println!("{}", cfg.to_json()),
            }
        }
        Command::GenerateData => {
            let mut cfg = load_config(common)?;
            if let Some(dir) = &common.out {
                cfg.paths.data_dir = dir.clone();
            }
            let splits = make_dataset(&cfg.dataset)?;
            std::fs::create_dir_all(&cfg.paths.data_dir).map_err(|e| io_err(&cfg.paths.data_dir, e))?;
            for (name, set) in [("train", &splits.train), ("validation", &splits.validation), ("test", &splits.test)] {
                let path = cfg.paths.split(name);
                write_snapshots(set, &path)?;
                println!("{name}: {} snapshots of {} -> {}", set.len(), set.shape, path.display());
            }
        }
        Command::Train => {
            let cfg = load_config(common)?;
            let (train, val) = (read_split(&cfg, "train")?, read_split(&cfg, "validation")?);
            let (reducer, log) = fit_reducer(&cfg.reducer, &train, &val, &cfg.training)?;
            let out = common.out.clone().unwrap_or(cfg.paths.reducer.clone());
            reducer.save(&out)?;
            if let Some(log) = log {
                write_text(&cfg.paths.training_log, &serde_json::to_string_pretty(&log).map_err(RomError::from)?)?;
                println!(
                    "trained {} epochs, best epoch {} with validation {:.16e}",
                    log.records.len(),
                    log.best_epoch,
                    log.best_validation
                );
            }
            println!("{} reducer with n_latent = {} -> {}", reducer.kind(), reducer.n_latent(), out.display());
        }
        Command::GridSearch => {
            let cfg = load_config(common)?;
            let (train, val) = (read_split(&cfg, "train")?, read_split(&cfg, "validation")?);
            let result = grid_search(&cfg.grid, &cfg.reducer.arch(), &train, &val, &cfg.training)?;
            for r in &result.report {
                let p = &r.point;
                let outcome = match (&r.validation_error, &r.failure) {
                    (Some(e), _) => format!("{e:.16e}"),
                    (None, Some(f)) => format!("failed: {f}"),
                    (None, None) => "failed".into(),
                };
                println!(
                    "point {:>2} weight_decay {:e} conv_layers {} n_latent {:>2} seed {}: {outcome}",
                    p.index, p.weight_decay, p.conv_layers, p.n_latent, r.seed
                );
            }
            let out = common.out.clone().unwrap_or(cfg.paths.reducer.clone());
            ReducerModel::Cae(result.best).save(&out)?;
            write_text(&cfg.paths.training_log, &serde_json::to_string_pretty(&result.best_log).map_err(RomError::from)?)?;
            let report = out.with_extension("grid.json");
            write_text(&report, &serde_json::to_string_pretty(&result.report).map_err(RomError::from)?)?;
            println!("best point {} -> {}", result.best_index, out.display());
        }
        Command::BuildRom => {
            let cfg = load_config(common)?;
            let train = read_split(&cfg, "train")?;
            let reducer = ReducerModel::load(&cfg.paths.reducer)?;
            let rom = offline(&train, reducer, &cfg.hodmd, cfg.interpolator)?;
            let out = common.out.clone().unwrap_or(cfg.paths.bundle.clone());
            save_bundle(&rom, &out)?;
            println!(
                "{} HODMD models with n_delay = {}, n_latent = {} -> {}",
                rom.models.len(),
                cfg.hodmd.n_delay,
                rom.n_latent(),
                out.display()
            );
        }
        Command::Predict { bundle, time, param, csv } => {
            let cfg = load_config(common)?;
            let rom = load_bundle(bundle.unwrap_or(cfg.paths.bundle.clone()))?;
            let field = rom.online(time, &param)?;
            let shape = rom.reducer.field_shape();
            if let Some(path) = csv {
                let mut text = String::from("index,value\n");
                for (i, v) in field.iter().enumerate() {
                    text.push_str(&format!("{i},{v:.16e}\n"));
                }
                write_text(&path, &text)?;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("prediction.roms"));
            let set = SnapshotSet::new(vec![param.clone()], vec![time], shape, field.clone())?;
            write_snapshots(&set, &out)?;
            let norm = field.iter().map(|v| v * v).sum::<f64>().sqrt();
            println!("field {} at t = {time:.16e}, norm {norm:.16e} -> {}", shape, out.display());
        }
        Command::Evaluate { bundle, test, delays, samples } => {
            let cfg = load_config(common)?;
            let rom = load_bundle(bundle.unwrap_or(cfg.paths.bundle.clone()))?;
            let test = read_snapshots(test.unwrap_or(cfg.paths.split("test")))?;
            if test.shape.len() != rom.reducer.field_shape().len() {
                return Err(Failure::Config(format!("test fields {} do not match the ROM", test.shape)));
            }
            let delays = delays.unwrap_or(cfg.delay_sweep.clone());
            let sweep = delay_sweep(&rom, &test, &delays)?;
            for (n, r) in &sweep {
                println!(
                    "n_delay {n}: E_cae {:.16e} E_latent {:.16e} E_cae_phodmd {:.16e}",
                    r.e_cae, r.e_latent, r.e_cae_phodmd
                );
            }
            let out = common.out.clone().unwrap_or(cfg.paths.report.clone());
            write_text(&out, &sweep_csv(&sweep))?;
            if let Some(path) = samples {
                let report = latent_rom::rom::evaluate(&rom, &test)?;
                write_text(&path, &report.to_csv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

