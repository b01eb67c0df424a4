use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tridep::experiment::{self, ExperimentConfig};
use tridep::synth::{self, SynthSpec};
use tridep::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "tridep", version, about = "Trimodal EEG/speech/text depression-detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory (for `synth` without a config: the cohort directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the number of cross-validation folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Strong,
    Moderate,
    Null,
}

#[derive(Subcommand)]
enum Command {
    /// Write the subject-level fold plan.
    Split,
    /// Generate a synthetic cohort (from the config's synth section, or a preset).
    Synth {
        #[arg(long, value_enum, default_value = "strong")]
        preset: Preset,
        #[arg(long, default_value_t = 38)]
        subjects: usize,
    },
    /// Run signal preprocessing and record segment counts.
    Preprocess,
    /// Derive handcrafted EEG and speech features.
    Features,
    /// Train one encoder per modality and fold; write test-fold posteriors.
    Train,
    /// Apply the configured fusion strategies.
    Fuse,
    /// Score posteriors and fused decisions; print the results table.
    Report,
    /// All stages in order.
    Run,
    /// Print the default trimodal config.
    DefaultConfig {
        #[arg(long, default_value = "data")]
        dataset_root: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config(vec!["--config is required".into()]))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(k) = cli.folds {
        cfg.k = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Synth { preset, subjects } if cli.config.is_none() => {
            let out = cli.out.clone().ok_or_else(|| Error::Config(vec!["synth needs --config or --out".into()]))?;
            let seed = cli.seed.unwrap_or(0);
            let spec = match preset {
                Preset::Strong => SynthSpec::strong(*subjects, seed),
                Preset::Moderate => SynthSpec::moderate(*subjects, seed),
                Preset::Null => SynthSpec::null(*subjects, seed),
            };
            let manifests = synth::generate(&spec, &out)?;
            println!("wrote {} subjects to {}", manifests.len(), out.display());
        }
        Command::Synth { .. } => {
            let cfg = load_config(cli)?;
            let manifests = experiment::synthesize(&cfg)?;
            println!("wrote {} subjects to {}", manifests.len(), cfg.dataset_root.display());
        }
        Command::Split => {
            let plan = experiment::split(&load_config(cli)?)?;
            let sizes: Vec<String> = plan.folds.iter().map(|f| f.len().to_string()).collect();
            println!("{} folds of sizes {}", plan.k, sizes.join(", "));
        }
        Command::Preprocess => {
            let s = experiment::preprocess(&load_config(cli)?)?;
            println!("preprocessed {} subjects", s.len());
        }
        Command::Features => {
            let s = experiment::features(&load_config(cli)?)?;
            println!("derived features for {} subjects", s.len());
        }
        Command::Train => {
            for t in experiment::train(&load_config(cli)?)? {
                println!("{} fold {}: {} epochs, final loss {:.4}", t.modality, t.fold, t.epochs, t.final_loss);
            }
        }
        Command::Fuse => {
            let runs = experiment::fuse(&load_config(cli)?)?;
            println!("fused {} experiments", runs.len());
        }
        Command::Report => print!("{}", experiment::report(&load_config(cli)?)?.to_text()),
        Command::Run => print!("{}", experiment::run(&load_config(cli)?)?.to_text()),
        Command::DefaultConfig { dataset_root } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let mut cfg = ExperimentConfig::default_trimodal(dataset_root, out);
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(k) = cli.folds {
                cfg.k = k;
            }
            print!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
