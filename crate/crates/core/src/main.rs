use std::path::PathBuf;

use clap::{Parser, Subcommand};

use airdp::expcli::{self, Command};

#[derive(Parser)]
#[command(name = "airdp", version, about = "Privacy and convergence experiments for over-the-air federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration, overlaid on the preset if both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV file (a directory for `train`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Built-in configuration: fig2, fig3_k20, fig3_k200, table2, table3.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Central epsilon against the number of users.
    PrivacySweep(Common),
    /// Total privacy over training rounds.
    Compose(Common),
    /// Per-user local epsilon for uniform and channel-aware sampling.
    LocalDpTable(Common),
    /// Convergence bounds against the number of rounds.
    Bounds(Common),
    /// Monte-Carlo training runs with privacy accounting.
    Train(Common),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { expcli::EXIT_CONFIG } else { expcli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let (command, args) = match cli.command {
        Sub::PrivacySweep(a) => (Command::PrivacySweep, a),
        Sub::Compose(a) => (Command::Compose, a),
        Sub::LocalDpTable(a) => (Command::LocalDpTable, a),
        Sub::Bounds(a) => (Command::Bounds, a),
        Sub::Train(a) => (Command::Train, a),
    };
    let code = expcli::run(
        command,
        args.config.as_deref(),
        args.preset.as_deref(),
        args.seed,
        args.out.as_deref(),
    );
    std::process::exit(code);
}
