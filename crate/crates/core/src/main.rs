use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use spaceprofiler::config::PipelineConfig;
use spaceprofiler::pipeline::{resolve_out_dir, run_pipeline, AUDIT_DIR, AUDIT_FILES};
use spaceprofiler::plots::emit_plots;
use spaceprofiler::profiling::DayType;
use spaceprofiler::synth::{default_config, synth_generate, READINGS_FILE, STATIC_FILE, CALENDAR_FILE};
use spaceprofiler::{Error, Result};

#[derive(Parser)]
#[command(name = "spaceprofiler", version, about = "Public-space utilization profiling from PoI sensor counts")]
struct Cli {
    /// Only report errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 47-sensor fixture with planted archetypes.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, env = "SPACEPROFILER_OUT")]
        out: PathBuf,
    },
    /// Run the full pipeline and write the report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long, env = "SPACEPROFILER_OUT")]
        out: Option<PathBuf>,
        #[arg(long)]
        min_valid_fraction: Option<f64>,
        /// Overrides the k-means seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-render the figures of an existing bundle.
    Plot {
        #[arg(long, env = "SPACEPROFILER_OUT")]
        out: PathBuf,
    },
    /// Print an intermediate matrix or vector from a bundle's audit files.
    Inspect {
        #[arg(long, env = "SPACEPROFILER_OUT")]
        out: PathBuf,
        /// weekday, weekend or school_holiday.
        #[arg(long)]
        day_type: DayType,
        /// Artifact name such as affinity, laplacian or similarity_f2.
        artifact: String,
    },
}

fn write_synth(seed: u64, out: &Path) -> Result<()> {
    let cfg = default_config(seed);
    let data = synth_generate(&cfg)?;
    data.write_to(out, &cfg.calendar)?;
    let mut run_cfg = PipelineConfig::new(READINGS_FILE, STATIC_FILE);
    run_cfg.input.calendar = Some(CALENDAR_FILE.into());
    run_cfg.kmeans.seed = seed;
    let path = out.join("config.toml");
    std::fs::write(&path, run_cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    info!("wrote {} sensors to {}", data.series.len(), out.display());
    Ok(())
}

fn inspect(out: &Path, day: DayType, artifact: &str) -> Result<()> {
    let dir = out.join(AUDIT_DIR).join(day.as_str());
    let file = AUDIT_FILES
        .iter()
        .find(|f| f.split('.').next() == Some(artifact) || **f == artifact)
        .ok_or_else(|| {
            let names: Vec<&str> = AUDIT_FILES.iter().filter_map(|f| f.split('.').next()).collect();
            Error::Config(format!("unknown artifact '{artifact}'; available: {}", names.join(", ")))
        })?;
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { seed, out } => write_synth(seed, &out),
        Command::Run { config, out, min_valid_fraction, seed } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(f) = min_valid_fraction {
                cfg.min_valid_fraction = f;
            }
            if let Some(s) = seed {
                cfg.kmeans.seed = s;
            }
            let out = resolve_out_dir(out, &cfg)?;
            let run = run_pipeline(&cfg, &out)?;
            for (day, r) in &run.report.day_types {
                info!("{day}: k = {}", r.k);
            }
            Ok(())
        }
        Command::Plot { out } => emit_plots(&out).map(|files| {
            for f in files {
                info!("wrote {}", f.display());
            }
        }),
        Command::Inspect { out, day_type, artifact } => inspect(&out, day_type, &artifact),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
