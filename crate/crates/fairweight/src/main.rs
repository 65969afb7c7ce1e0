use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairweight::cli::{
    apply_overrides, cmd_audit, cmd_compare_grid, cmd_gen_synth, cmd_sweep, cmd_train, CliError,
};
use fairweight::config::RunConfig;

/// Train binary classifiers under declarative group-fairness constraints.
#[derive(Parser)]
#[command(name = "fairweight", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for split, learner, and generator.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train unconstrained and report every fairness metric per group.
    Audit(Common),
    /// Tune the configured constraints and persist model + report.
    Train(Common),
    /// Re-tune across disparity allowances and emit tradeoff.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated disparity allowances.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
    },
    /// Run hill-climbing against the grid-search baseline.
    CompareGrid(Common),
    /// Write the configured planted-bias synthetic dataset.
    GenSynth(Common),
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::from_file(&common.config)?;
    apply_overrides(&mut config, common.out.clone(), common.seed);
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Audit(common) => {
            let config = load(&common)?;
            let report = cmd_audit(&config)?;
            println!(
                "audit: ap(validation)={:.4} report={}",
                report
                    .baseline
                    .as_ref()
                    .map(|b| b.validation.ap)
                    .unwrap_or(f64::NAN),
                config.output_dir.join("report.json").display()
            );
        }
        Command::Train(common) => {
            let config = load(&common)?;
            let report = cmd_train(&config)?;
            let tuned = report.tuned.as_ref().expect("train always reports tuned");
            println!(
                "train: satisfied={} ap(validation)={:.4} fits={} report={}",
                tuned.satisfied,
                tuned.validation.ap,
                report.fits_performed,
                config.output_dir.join("report.json").display()
            );
        }
        Command::Sweep { common, epsilons } => {
            let config = load(&common)?;
            let report = cmd_sweep(&config, &epsilons)?;
            println!(
                "sweep: {} rows fits={} tradeoff={}",
                epsilons.len(),
                report.fits_performed,
                config.output_dir.join("tradeoff.csv").display()
            );
        }
        Command::CompareGrid(common) => {
            let config = load(&common)?;
            let report = cmd_compare_grid(&config)?;
            for note in &report.notes {
                println!("compare-grid: {note}");
            }
        }
        Command::GenSynth(common) => {
            let config = load(&common)?;
            let path = cmd_gen_synth(&config)?;
            println!("gen-synth: wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.kind(), "message": e.to_string() })
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
