use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use erdr::data::Linkage;
use erdr::synth::SynthConfig;
use erdr_cli::{
    cmd_coverage, cmd_match, cmd_pipeline, cmd_retrofit, cmd_synth, cmd_train, cmd_tune_lsh, exit_code, load_config,
};

#[derive(Parser)]
#[command(name = "erdr", version, about = "Entity resolution with embedding-based tuple representations and LSH blocking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report how many table tokens the embedding file covers.
    Coverage(RunArgs),
    /// Extend and retrofit the embeddings over the tables' co-occurrence graph.
    Retrofit(RunArgs),
    /// Sample negatives, cross-validate and train the matcher.
    Train(RunArgs),
    /// Choose LSH K and L for a target collision profile.
    TuneLsh(RunArgs),
    /// Block with LSH and classify candidate pairs with a trained model.
    Match(RunArgs),
    /// Run every stage in sequence into one output directory.
    Pipeline(RunArgs),
    /// Generate a synthetic benchmark with planted duplicates.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tier {
    Easy,
    Noisy,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    entities: usize,
    #[arg(long, default_value_t = 150)]
    duplicates: usize,
    /// Unrelated right-side records (linkage only).
    #[arg(long, default_value_t = 50)]
    distractors: usize,
    #[arg(long, value_enum, default_value_t = Tier::Easy)]
    tier: Tier,
    /// One table with duplicates inside it instead of two tables.
    #[arg(long)]
    dedup: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => {
            let base = match a.tier {
                Tier::Easy => SynthConfig::easy(a.entities, a.duplicates, a.seed),
                Tier::Noisy => SynthConfig::noisy(a.entities, a.duplicates, a.seed),
            };
            let cfg = SynthConfig {
                distractors: if a.dedup { 0 } else { a.distractors },
                linkage: if a.dedup { Linkage::Dedup } else { Linkage::Link },
                ..base
            };
            cmd_synth(&cfg, &a.out)
        }
        Command::Coverage(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_coverage(&c)),
        Command::Retrofit(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_retrofit(&c)),
        Command::Train(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_train(&c)),
        Command::TuneLsh(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_tune_lsh(&c)),
        Command::Match(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_match(&c)),
        Command::Pipeline(a) => load_config(&a.config, a.seed, a.out).and_then(|c| cmd_pipeline(&c)),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("erdr: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
