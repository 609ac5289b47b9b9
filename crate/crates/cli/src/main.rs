use phrasevec_cli::commands;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use phrasevec::config::ExperimentConfig;
use phrasevec::corpus::Partition;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "phrasevec", version, about = "Text-dependent speaker verification experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied after the file and `--seed`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        phrases: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Extract MFCC features from a manifest of 16-bit or float WAV files.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one aligner per phrase on the bkg partition.
    TrainAligner {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "type", value_parser = ["hmm", "gmm"])]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on the bkg partition.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Aligner directory; required for every architecture but A.
        #[arg(long)]
        aligners: Option<PathBuf>,
        /// Architecture C checkpoint to start architecture D from.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Teacher checkpoint for teacher-student training (`bdk = true`).
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write embeddings of one partition.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        aligners: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        partition: Partition,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build impostor-correct trials and score them from embeddings.
    Score {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "eval")]
        partition: Partition,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute EER, minDCF and AUC and write DET data.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::Synth { out, speakers, phrases, sessions } => {
            cfg.speakers = speakers.unwrap_or(cfg.speakers);
            cfg.phrases = phrases.unwrap_or(cfg.phrases);
            cfg.sessions = sessions.unwrap_or(cfg.sessions);
            commands::synth(&cfg, &out)
        }
        Command::Features { manifest, out } => commands::features(&cfg, &manifest, &out),
        Command::TrainAligner { manifest, kind, out } => {
            let hmm = (kind == "hmm").then(|| cfg.hmm_config());
            let gmm = (kind == "gmm").then(|| cfg.gmm_config());
            commands::train_aligner(&cfg, &manifest, hmm, gmm, &out)
        }
        Command::Train { manifest, aligners, init, teacher, out } => commands::train(
            &mut cfg,
            &manifest,
            aligners.as_deref(),
            init.as_deref(),
            teacher.as_deref(),
            &out,
        ),
        Command::Embed { checkpoint, manifest, aligners, partition, out } => {
            commands::embed(&cfg, &checkpoint, &manifest, aligners.as_deref(), partition, &out)
        }
        Command::Score { embeddings, manifest, partition, out } => {
            commands::score(&cfg, &embeddings, &manifest, partition, &out)
        }
        Command::Eval { scores, key, out } => commands::eval(&cfg, &scores, &key, &out),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
