mod config;
mod error;
mod evaluate;
mod summarize;
mod topics;
mod train;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use taas_core::corpus::read_jsonl;
use taas_core::evaluation::LengthBoundaries;

use config::{parse_override, RunConfig};
use error::{exit_code, CliError};
use summarize::LoadedRun;

/// Topic-aware abstractive summarization.
#[derive(Parser)]
#[command(name = "taas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its run directory.
    Train(TrainArgs),
    /// Summarize a JSONL corpus with a trained run.
    Summarize(SummarizeArgs),
    /// Score candidate summaries against references with ROUGE.
    Evaluate(EvaluateArgs),
    /// Print the top words of every topic, or sweep over topic counts.
    Topics(TopicsArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one configuration field, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, Value)>,

    /// Suppress progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,

    /// JSONL records with `document` and optional `id`.
    #[arg(long)]
    input: PathBuf,

    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,

    #[arg(long)]
    beam: Option<usize>,

    /// Most generated tokens, end marker included.
    #[arg(long)]
    max_len: Option<usize>,

    #[arg(long)]
    min_len: Option<usize>,

    /// Length-normalization exponent; 0 ranks by raw log-probability.
    #[arg(long)]
    length_norm: Option<f64>,

    #[arg(long)]
    block_trigrams: bool,

    /// Write per-token topic attention and the top five tokens as JSONL.
    #[arg(long, value_name = "FILE")]
    dump_attention: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference corpus JSONL (`id`, `document`, `summary`).
    #[arg(long)]
    references: PathBuf,

    /// Candidate JSONL (`id`, `summary`), e.g. the output of `summarize`.
    #[arg(long, required_unless_present = "lead3", conflicts_with = "lead3")]
    candidates: Option<PathBuf>,

    /// Score the first three sentences of each reference document instead.
    #[arg(long)]
    lead3: bool,

    /// Also report short/medium/long buckets by source sentence count.
    #[arg(long, value_name = "LOWER,UPPER")]
    buckets: Option<LengthBoundaries>,

    /// Write per-document scores as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,

    /// Row label in the summary table.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct TopicsArgs {
    /// Run directory written by `train`.
    #[arg(long, required_unless_present = "sweep")]
    run: Option<PathBuf>,

    /// Words per topic.
    #[arg(long, default_value_t = 10)]
    top: usize,

    /// Retrain once per topic count and report validation ROUGE.
    #[arg(long, value_delimiter = ',', value_name = "K,K,...", conflicts_with = "run")]
    sweep: Vec<usize>,

    /// Sweep CSV; `sweep.csv` under the output directory when omitted.
    #[arg(long, value_name = "FILE")]
    sweep_out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

fn require_file(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Invalid {
            flag: flag.into(),
            reason: format!("{} does not exist", path.display()),
        })
    }
}

fn write_jsonl<T: serde::Serialize>(out: &mut dyn Write, records: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(&r)?)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let config = args.config.resolve()?;
    train::run_training(&config, !args.config.quiet)?;
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> anyhow::Result<()> {
    require_file("--input", &args.input)?;
    let run = LoadedRun::open(&args.run)?;
    let mut cfg = run.decode_config();
    cfg.beam_size = args.beam.unwrap_or(cfg.beam_size);
    cfg.max_summary_len = args.max_len.unwrap_or(cfg.max_summary_len);
    cfg.min_len = args.min_len.unwrap_or(cfg.min_len);
    cfg.length_norm_exponent = args.length_norm.unwrap_or(cfg.length_norm_exponent);
    cfg.block_trigrams |= args.block_trigrams;
    let pairs = read_jsonl(&args.input)?;
    let results = summarize::summarize(&run, &pairs, &cfg)?;
    let (summaries, attention): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    match &args.output {
        Some(p) => {
            let mut f = io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
            write_jsonl(&mut f, summaries)?;
        }
        None => write_jsonl(&mut io::stdout().lock(), summaries)?,
    }
    if let Some(p) = &args.dump_attention {
        let mut f = io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
        write_jsonl(&mut f, attention)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    require_file("--references", &args.references)?;
    let references = read_jsonl(&args.references)?;
    let (candidates, default_label) = match &args.candidates {
        Some(p) => {
            require_file("--candidates", p)?;
            (evaluate::read_candidates(p)?, "model")
        }
        None => (evaluate::lead3_candidates(&references), "lead-3"),
    };
    let report = evaluate::evaluate(&candidates, &references, args.buckets)?;
    if let Some(p) = &args.csv {
        fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", report.summary_table(args.label.as_deref().unwrap_or(default_label)));
    Ok(())
}

fn cmd_topics(args: TopicsArgs) -> anyhow::Result<()> {
    if let Some(dir) = &args.run {
        let run = LoadedRun::open(dir)?;
        let mut out = io::stdout().lock();
        for line in topics::topic_lines(&run, args.top) {
            writeln!(out, "{line}")?;
        }
        return Ok(());
    }
    let config = args.config.resolve()?;
    if let Some(&k) = args.sweep.iter().find(|&&k| k < 2) {
        return Err(CliError::Invalid {
            flag: "--sweep".into(),
            reason: format!("topic count {k} is below 2"),
        }
        .into());
    }
    let csv = topics::sweep(&config, &args.sweep, !args.config.quiet)?;
    let path = match args.sweep_out {
        Some(p) => p,
        None => config
            .output_dir
            .clone()
            .expect("sweep validated the output directory")
            .join("sweep.csv"),
    };
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Topics(a) => cmd_topics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
