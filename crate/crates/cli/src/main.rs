use std::path::PathBuf;
use std::process::ExitCode;

use avatar_cli::commands;
use avatar_cli::config::{AdvisorMode, JudgeMode};
use avatar_cli::{CliError, Overrides, RunConfig};
use avatar_core::eval::Ablation;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avatar", version, about = "Category-wise asset retrieval and avatar assembly")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// none | suppression | router | scaffold
    #[arg(long, global = true)]
    ablate: Option<Ablation>,
    /// scripted | scripted:<path> | http:<url>
    #[arg(long, global = true)]
    judge: Option<JudgeMode>,
    /// none | scripted:<path> | http:<url>
    #[arg(long, global = true)]
    advisor: Option<AdvisorMode>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    #[arg(long, global = true)]
    evidence: Option<PathBuf>,
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the catalog against the taxonomy and report statistics.
    Ingest,
    /// Build per-category snapshots and subspaces.
    BuildIndex,
    /// Route the evidence prompt to target categories.
    Route,
    /// Build candidate pools for the routed categories.
    Retrieve,
    /// Filter, select, refine and pick the final look.
    Assemble,
    /// Write a planted scenario and a run.toml for it.
    Synth {
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run seeded scenarios for the baseline and ablations.
    Eval {
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(Overrides {
        seed: cli.seed,
        ablation: cli.ablate,
        judge: cli.judge,
        advisor: cli.advisor,
        output_dir: cli.out,
        catalog: cli.catalog,
        taxonomy: cli.taxonomy,
        evidence: cli.evidence,
        index_dir: cli.index_dir,
    });
    if let Command::Synth { lambda: Some(l) } | Command::Eval { lambda: Some(l), .. } = cli.command {
        cfg.eval.lambda = l;
    }
    if let Command::Eval { cases: Some(n), .. } = cli.command {
        cfg.eval.cases = n;
    }
    cfg.validate()?;

    let out = &cfg.paths.output_dir;
    match cli.command {
        Command::Ingest => {
            let doc = commands::cmd_ingest(&cfg)?;
            let s = &doc.data.stats;
            println!("ingested {} assets, rejected {}", s.total_assets, s.rejected_records);
        }
        Command::BuildIndex => {
            let doc = commands::cmd_build_index(&cfg)?;
            println!(
                "indexed {} categories into {}",
                doc.data.indices.len(),
                cfg.paths.index_dir.display()
            );
        }
        Command::Route => {
            let doc = commands::cmd_route(&cfg)?;
            let cats: Vec<&str> = doc.data.plan.target_categories.iter().map(String::as_str).collect();
            println!("routed to {}", cats.join(", "));
        }
        Command::Retrieve => {
            let doc = commands::cmd_retrieve(&cfg)?;
            for (cat, pool) in &doc.data.pools {
                println!("{cat}: {} candidates", pool.candidates.len());
            }
        }
        Command::Assemble => {
            let doc = commands::cmd_assemble(&cfg)?;
            let w = &doc.data.winner;
            println!("look {} ({:?}) written to {}", w.look_id, w.status, out.join(avatar_cli::docs::LOOK).display());
        }
        Command::Synth { .. } => {
            let path = commands::cmd_synth(&cfg)?;
            println!("scenario written; run config at {}", path.display());
        }
        Command::Eval { .. } => {
            let ablations: Vec<Ablation> = match cli.ablate {
                Some(a) => vec![a],
                None => Ablation::ALL.to_vec(),
            };
            let doc = commands::cmd_eval(&cfg, &ablations)?;
            print!("{}", doc.data.table);
            for o in &doc.data.orderings {
                println!(
                    "{}: {} none={:.3} ablated={:.3} {}",
                    o.ablation,
                    o.metric,
                    o.baseline,
                    o.ablated,
                    if o.holds { "ok" } else { "VIOLATED" }
                );
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
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.document()).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
