use std::path::PathBuf;
use std::process::ExitCode;

use cg3d::{cmd_ablate, cmd_eval, cmd_gen_corpus, cmd_generate, cmd_train, CliError, Context, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Critic-guided 3D generation experiments.
#[derive(Parser)]
#[command(name = "cg3d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labelled shape corpus.
    GenCorpus(Common),
    /// Train the 2D or 3D diffusion prior (`train.target`).
    Train(Common),
    /// Generate one asset by distillation, guided or plain sampling
    /// (`generate.mode`).
    Generate(Common),
    /// Judge assets pairwise and fit anchored Elo ratings.
    Eval(Common),
    /// Run the critic ablation modes over a seed set.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides of the form `--section.key=value`.
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, num_args = 0..)]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (Command::GenCorpus(c) | Command::Train(c) | Command::Generate(c) | Command::Eval(c) | Command::Ablate(c)) =
        &cli.command;
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let cfg = RunConfig::parse_with(&text, &c.overrides)?;
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        cg3d_core::par::set_jobs(j);
    }
    let env_out = std::env::var("CG3D_OUT").ok().filter(|s| !s.is_empty());
    let ctx = Context::new(cfg, env_out.as_deref());
    match cli.command {
        Command::GenCorpus(_) => cmd_gen_corpus(&ctx),
        Command::Train(_) => cmd_train(&ctx),
        Command::Generate(_) => cmd_generate(&ctx),
        Command::Eval(_) => cmd_eval(&ctx),
        Command::Ablate(_) => cmd_ablate(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cg3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
