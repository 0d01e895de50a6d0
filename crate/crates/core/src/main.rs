use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dampe::config::RunConfig;
use dampe::pipeline::{exit_code, inspect_schedule, run_bench, run_until, Stage};
use dampe::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "dampe", version, about = "Multi-modal protein embedding pipeline")]
struct Cli {
    /// Configuration file (`key = value` lines, optional `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; stage directories are created beneath it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a configuration key, e.g. `--set pretrain.steps=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate (or import) the dataset.
    GenData,
    /// Align structure embeddings to the sequence space.
    Align,
    /// Pre-train the encoder with the graph denoising objective.
    Pretrain,
    /// Fine-tune the encoder and classifier on training proteins.
    Finetune,
    /// Score the fine-tuned model on test proteins.
    Evaluate,
    /// Run every stage end to end.
    Pipeline,
    /// Print the noise schedule as CSV.
    InspectSchedule,
    /// Time the encoder forward pass.
    Bench,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string())?;
    }
    Ok(config)
}

fn stage_of(command: &Command) -> Option<Stage> {
    match command {
        Command::GenData => Some(Stage::Data),
        Command::Align => Some(Stage::Align),
        Command::Pretrain => Some(Stage::Pretrain),
        Command::Finetune => Some(Stage::Finetune),
        Command::Evaluate | Command::Pipeline => Some(Stage::Evaluate),
        Command::InspectSchedule | Command::Bench => None,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    let out: &Path = &cli.out;
    if let Some(stage) = stage_of(&cli.command) {
        let summary = run_until(&config, out, stage)?;
        for (s, dir) in &summary.dirs {
            println!("{}\t{}", s.name(), dir.display());
        }
        if let Some(m) = summary.metrics {
            println!("fmax\t{:.6}\nfmax_threshold\t{:.2}\naupr\t{:.6}", m.fmax, m.threshold, m.aupr);
        }
        return Ok(());
    }
    match cli.command {
        Command::InspectSchedule => {
            let csv = inspect_schedule(config.usize("diffusion.steps")?, config.f64("diffusion.shift")?)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let path = out.join("schedule.csv");
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
            print!("{csv}");
        }
        Command::Bench => {
            let report = run_bench(&config, out)?;
            print!("{}", report.to_csv());
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(buf, "{} {} {}", buf.timestamp_millis(), record.level(), record.args())
        })
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
