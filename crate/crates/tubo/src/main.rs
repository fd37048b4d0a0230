use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tubo::Error;
use tubo::commands::{self, Context, InputFormat};
use tubo::config::{NormChoice, Overrides};
use tubo_core::te::Objective;

#[derive(Parser)]
#[command(name = "tubo", version, about = "Burst-aware demand-matrix forecasting and TE simulation")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the pool trained without burst clipping as the primary pool.
    #[arg(long, global = true)]
    no_clip: bool,
    #[arg(long, global = true, value_enum)]
    norm: Option<Norm>,
    #[arg(long, global = true, value_enum)]
    objective: Option<Obj>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    passes: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Glob,
    Indv,
    Roll,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Obj {
    P1,
    P2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    DmCsv,
    Long,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series and its ground-truth sidecar.
    Gen {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a dataset and write it as dm-csv.
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "dm-csv")]
        format: Format,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, default_value_t = 5)]
        granularity: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the clipped and unclipped pools.
    Train,
    /// Run the online pipeline over the test split and score it.
    Evaluate,
    /// Throughput degradation of each strategy.
    TeSim,
    /// Burst statistics of the configured series.
    Stats,
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        no_clip: cli.no_clip,
        norm: cli.norm.map(|n| match n {
            Norm::Glob => NormChoice::Glob,
            Norm::Indv => NormChoice::Indv,
            Norm::Roll => NormChoice::Roll,
            Norm::All => NormChoice::All,
        }),
        objective: cli.objective.map(|o| match o {
            Obj::P1 => Objective::P1,
            Obj::P2 => Objective::P2,
        }),
        k: cli.k,
        passes: cli.passes,
    }
}

fn print<T: serde::Serialize>(v: &T) {
    let text = serde_json::to_string_pretty(v).expect("summary serializes");
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn run(cli: &Cli) -> tubo::Result<()> {
    let ctx = || Context::load(cli.config.as_deref(), &overrides(cli));
    match &cli.command {
        Command::Gen { spec, out } => print(&commands::gen_data(spec, out, cli.seed)?),
        Command::Ingest { input, format, nodes, granularity, out } => {
            let format = match format {
                Format::DmCsv => InputFormat::DmCsv,
                Format::Long => InputFormat::Long,
            };
            print(&commands::ingest(input, format, *nodes, *granularity, out)?);
        }
        Command::Train => {
            let body = commands::train(&ctx()?)?;
            println!("training hash {}", body.training_hash);
            println!("manifest hash {}", body.manifest_hash);
        }
        Command::Evaluate => {
            let body = commands::evaluate_cmd(&ctx()?)?;
            println!("mae {:?} regret {:?}", body.metrics.mae, body.regret);
            for r in &body.metrics.selection_ratios {
                println!("  {:<20} {:.4}", r.model_id, r.ratio);
            }
        }
        Command::TeSim => {
            for body in commands::te_sim(&ctx()?)? {
                println!("{} ordering_holds={}", body.objective, body.ordering_holds);
                for s in &body.summary {
                    println!("  {:<10} median {:.6} p5 {:.6} p95 {:.6}", s.strategy, s.median, s.p5, s.p95);
                }
            }
        }
        Command::Stats => print(&commands::stats(&ctx()?)?.stats),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::SelfCheck(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
