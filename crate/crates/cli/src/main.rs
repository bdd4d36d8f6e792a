use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mgthash_cli::config::{CorpusFormat, PipelineConfig};
use mgthash_cli::pipeline::{
    cmd_encode, cmd_eval, cmd_gen, cmd_query, cmd_select, cmd_train, cmd_train_topics, QueryMode,
};
use mgthash_core::synth::{SynthConfig, TagLevel};

/// Learns similarity-preserving binary codes for short texts from
/// multi-granularity latent topics and tags, and serves Hamming-space
/// retrieval over them.
#[derive(Parser)]
#[command(name = "mgthash", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set bits=16 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Ok(dir) = std::env::var("MGTHASH_MODEL_DIR") {
            if !dir.is_empty() {
                cfg.model_dir = PathBuf::from(dir);
            }
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-level corpus with known ground truth.
    Gen {
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        coarse: usize,
        #[arg(long, default_value_t = 12)]
        fine: usize,
        #[arg(long, default_value_t = 500)]
        vocab: usize,
        /// Tag level: coarse or fine.
        #[arg(long, default_value = "coarse")]
        tag_level: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train the candidate topic-model bank only.
    TrainTopics(ConfigArgs),
    /// Score and select the optimal granularities against a trained bank.
    Select(ConfigArgs),
    /// Run the full training pipeline and write all model files.
    Train(ConfigArgs),
    /// Encode a corpus file with a trained model into a codes file.
    Encode {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a query text and search the training index.
    Query {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        text: String,
        /// Hamming radius search.
        #[arg(long, conflicts_with = "topk")]
        radius: Option<u32>,
        /// Top-K search.
        #[arg(long)]
        topk: Option<usize>,
    },
    /// Evaluate across a bit-width sweep and emit CSV reports.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Test corpus path.
        #[arg(long)]
        test: PathBuf,
        /// Sweep: "start:step:end" or a comma list, e.g. 4:4:64 or 8,16.
        #[arg(long, default_value = "4:4:64")]
        bits: String,
    },
}

fn parse_format(s: &str) -> Result<CorpusFormat> {
    match s {
        "jsonl" => Ok(CorpusFormat::Jsonl),
        "tsv" => Ok(CorpusFormat::Tsv),
        other => bail!("unknown corpus format {other:?}"),
    }
}

fn parse_bits(spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let list = match parts.as_slice() {
        [single] => single
            .split(',')
            .map(|v| v.trim().parse::<usize>().context("bad bit width"))
            .collect::<Result<Vec<_>>>()?,
        [start, step, end] => {
            let (start, step, end) = (
                start.parse::<usize>()?,
                step.parse::<usize>()?,
                end.parse::<usize>()?,
            );
            if step == 0 {
                bail!("bit sweep step must be positive");
            }
            (start..=end).step_by(step).collect()
        }
        _ => bail!("bit sweep must be start:step:end or a comma list"),
    };
    if list.is_empty() || list.iter().any(|&b| b == 0) {
        bail!("bit widths must be positive");
    }
    Ok(list)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen {
            out,
            n,
            coarse,
            fine,
            vocab,
            tag_level,
            seed,
        } => {
            let tag_level = match tag_level.as_str() {
                "coarse" => TagLevel::Coarse,
                "fine" => TagLevel::Fine,
                other => bail!("tag level must be coarse or fine, got {other:?}"),
            };
            let cfg = SynthConfig {
                n,
                coarse,
                fine,
                vocab,
                tag_level,
                seed,
                ..SynthConfig::default()
            };
            let written = cmd_gen(&cfg, &out)?;
            println!("wrote {written} documents to {}", out.display());
        }
        Command::TrainTopics(args) => {
            let cfg = args.resolve()?;
            cmd_train_topics(&cfg)?;
            println!("trained {} topic models into {}", cfg.candidate_ks.len(), cfg.model_dir.display());
        }
        Command::Select(args) => {
            let cfg = args.resolve()?;
            let sel = cmd_select(&cfg)?;
            let ks: Vec<String> = sel.chosen.iter().map(|k| k.to_string()).collect();
            let weights: Vec<String> = sel.mu_hat.iter().map(|w| format!("{w:.4}")).collect();
            println!("chosen K: {} (weights {})", ks.join(","), weights.join(","));
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let sel = cmd_train(&cfg)?;
            let ks: Vec<String> = sel.chosen.iter().map(|k| k.to_string()).collect();
            println!(
                "trained variant={} bits={} with K={} into {}",
                cfg.variant,
                cfg.bits,
                ks.join(","),
                cfg.model_dir.display()
            );
        }
        Command::Encode {
            model_dir,
            corpus,
            format,
            out,
        } => {
            let format = parse_format(&format)?;
            let n = cmd_encode(&model_dir, &corpus, format, &out)?;
            println!("encoded {n} documents to {}", out.display());
        }
        Command::Query {
            model_dir,
            text,
            radius,
            topk,
        } => {
            let mode = match (radius, topk) {
                (Some(r), None) => QueryMode::Radius(r),
                (None, Some(k)) => QueryMode::TopK(k),
                (None, None) => QueryMode::Radius(3),
                (Some(_), Some(_)) => bail!("choose either --radius or --topk"),
            };
            let hits = cmd_query(&model_dir, &text, mode)?;
            let mut out = String::new();
            for (id, dist) in hits {
                out.push_str(&format!("{id}\t{dist}\n"));
            }
            print_ignoring_closed_pipe(&out);
        }
        Command::Eval { config, test, bits } => {
            let cfg = config.resolve()?;
            let bits = parse_bits(&bits)?;
            let out = cmd_eval(&cfg, &test, &bits)?;
            println!("wrote {}", out.variant_csv.display());
            println!("wrote {}", out.lsh_csv.display());
        }
    }
    Ok(())
}

/// Writes to stdout without panicking when the consumer closes the pipe.
fn print_ignoring_closed_pipe(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
