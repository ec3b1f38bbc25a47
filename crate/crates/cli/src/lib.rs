//! Command-line front end. [`run_cli`] is the whole program minus logger
//! setup, so it can be driven from tests.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use newsbridge::data::{Domain, Split};
use newsbridge::pipeline::{self, IngestFormat, RunConfig, CHECKPOINT_FILE, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(name = "newsbridge", version, about = "Few-shot cross-lingual news recommendation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "few-shot-users", global = true)]
    few_shot_users: Option<usize>,
    /// Worker threads (0: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert MIND or Adressa files into a canonical dataset directory.
    Ingest(IngestArgs),
    /// Generate the synthetic bilingual corpus.
    Synth,
    /// Build the augmented-set cache.
    Augment,
    Train,
    Eval(CheckpointArgs),
    /// Write every news vector with its domain tag.
    DumpEmbeddings(CheckpointArgs),
    /// Train and evaluate every ablation variant.
    Ablate,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: FormatArg,
    /// MIND news.tsv.
    #[arg(long)]
    news: Option<PathBuf>,
    /// MIND behaviors.tsv, or the Adressa event jsonl.
    #[arg(long)]
    behaviors: PathBuf,
    #[arg(long, value_enum)]
    domain: DomainArg,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct CheckpointArgs {
    /// Defaults to the checkpoint in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Mind,
    Adressa,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DomainArg {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

fn resolve_config(g: &GlobalArgs) -> newsbridge::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.few_shot_users {
        cfg.few_shot_users = n;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    Ok(cfg.resolved())
}

fn execute(cli: Cli) -> newsbridge::Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let checkpoint = |a: &CheckpointArgs| a.checkpoint.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    newsbridge::parallel::with_jobs(cfg.jobs, || match &cli.command {
        Command::Ingest(a) => {
            cfg.write_echo(&cfg.out)?;
            let format = match a.format {
                FormatArg::Mind => IngestFormat::Mind,
                FormatArg::Adressa => IngestFormat::Adressa,
            };
            let domain = match a.domain {
                DomainArg::Source => Domain::Source,
                DomainArg::Target => Domain::Target,
            };
            let split = match a.split {
                SplitArg::Train => Split::Train,
                SplitArg::Valid => Split::Valid,
                SplitArg::Test => Split::Test,
            };
            let d = pipeline::run_ingest(format, a.news.as_deref(), &a.behaviors, domain, split, &cfg.out, cfg.seed)?;
            println!(
                "ingested {} news, {} users, {} impressions into {}",
                d.news.len(),
                d.users.len(),
                d.impressions.len(),
                cfg.out.display()
            );
            Ok(())
        }
        Command::Synth => {
            let c = pipeline::run_synth(&cfg)?;
            println!(
                "wrote {} news, {} users, {} impressions and a {}-entry lexicon to {}",
                c.dataset.news.len(),
                c.dataset.users.len(),
                c.dataset.impressions.len(),
                c.lexicon.len(),
                cfg.out.display()
            );
            Ok(())
        }
        Command::Augment => {
            let path = pipeline::run_augment(&cfg)?;
            println!("augmented sets written to {}", path.display());
            Ok(())
        }
        Command::Train => {
            let r = pipeline::run_train(&cfg)?;
            println!(
                "trained {} epochs; best epoch {} (validation AUC {}); checkpoint {}",
                r.epochs.len(),
                r.best_epoch,
                r.best_valid_auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
                r.best_checkpoint.as_deref().unwrap_or("-")
            );
            Ok(())
        }
        Command::Eval(a) => {
            let r = pipeline::run_eval(&cfg, &checkpoint(a))?;
            print!("{}", r.table());
            Ok(())
        }
        Command::DumpEmbeddings(a) => {
            let path = pipeline::run_dump_embeddings(&cfg, &checkpoint(a))?;
            println!("embeddings written to {}", path.display());
            Ok(())
        }
        Command::Ablate => {
            let rows = pipeline::run_ablate(&cfg)?;
            println!("{:<36} {:>8} {:>8} {:>8} {:>8}", "variant", "AUC", "MRR", "nDCG@5", "nDCG@10");
            for r in rows {
                let m = &r.metrics;
                println!("{:<36} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", r.variant, m.auc, m.mrr, m.ndcg5, m.ndcg10);
            }
            Ok(())
        }
    })
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 1 on a failed run, 2 on a
/// usage error.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
