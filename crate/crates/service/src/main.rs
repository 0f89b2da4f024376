use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use convoscope::corpus::synth::SynthSpec;
use convoscope::lda::LdaConfig;
use convoscope::topics::TrainConfig;
use convoscope_service::commands::{self, ResourcePaths};
use convoscope_service::labels::LabelStore;
use convoscope_service::{router, AppState, DataLayout, Snapshot, DATA_DIR_ENV};
use serde::Serialize;

/// Explore patient-provider conversations by topic, sentiment and cohort.
#[derive(Parser)]
#[command(name = "convoscope", version)]
struct Cli {
    /// Data directory holding the corpus, models and label log.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "convoscope-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw message records, drop short conversations and store the corpus.
    Ingest {
        /// A messages.jsonl file or a directory containing one.
        source: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_messages: usize,
    },
    /// Write a synthetic data directory with a ground-truth ledger.
    Synth {
        #[arg(long, default_value_t = 500)]
        conversations: usize,
        /// Conversations with only 1 or 2 messages.
        #[arg(long, default_value_t = 0)]
        short: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Leaf topic laid out as a weekly ramp.
        #[arg(long)]
        ramp_topic: Option<String>,
    },
    /// Train the topic classifier from annotation CSVs or verdict exports.
    Train {
        /// Repeatable. Defaults to the data directory's annotations.csv.
        #[arg(long = "annotations")]
        annotations: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        holdout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fit the discovered-topic model.
    Lda {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    /// Write the verdict export CSV.
    ExportLabels {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long)]
    lda: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn print(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let layout = DataLayout::new(&cli.data_dir);
    match cli.command {
        Command::Ingest { source, min_messages } => print(&commands::ingest(&source, &layout, min_messages)?),
        Command::Synth { conversations, short, seed, ramp_topic } => {
            let mut spec = SynthSpec::new(conversations, seed);
            spec.n_short = short;
            spec.ramp_topic = ramp_topic;
            print(&commands::synth(&layout, &spec)?)
        }
        Command::Train { annotations, holdout, seed, epochs, lambda } => {
            let files = if annotations.is_empty() { vec![layout.annotations()] } else { annotations };
            let mut config = TrainConfig { seed, ..TrainConfig::default() };
            if let Some(e) = epochs {
                config.epochs = e;
            }
            if let Some(l) = lambda {
                config.lambda = l;
            }
            print(&commands::train(&layout, &files, holdout, &config)?)
        }
        Command::Lda { k, seed, iterations } => {
            let config = LdaConfig { iterations, ..LdaConfig::new(k, seed) };
            print(&commands::lda(&layout, &config)?)
        }
        Command::ExportLabels { out } => {
            let csv = commands::export_labels(&layout)?;
            match out {
                Some(path) => std::fs::write(&path, csv).with_context(|| path.display().to_string())?,
                None => print!("{csv}"),
            }
        }
        Command::Serve(args) => serve(&layout, args)?,
    }
    Ok(())
}

fn serve(layout: &DataLayout, args: ServeArgs) -> Result<()> {
    let paths = ResourcePaths {
        corpus: args.corpus,
        lexicon: args.lexicon,
        embeddings: args.embeddings,
        hierarchy: args.hierarchy,
        model: args.model,
        lda: args.lda.clone(),
    };
    let resources = commands::load_resources(layout, &paths)?;
    if resources.model.is_none() {
        log::warn!("no topic model found; classifier topics are off until `train` is run");
    }
    let snapshot = Snapshot::build(resources)?;
    std::fs::create_dir_all(&layout.root).with_context(|| layout.root.display().to_string())?;
    let labels = LabelStore::open(layout.labels())?;
    let state = AppState::new(snapshot, labels, Some(args.lda.unwrap_or_else(|| layout.lda())));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("listen address")?;
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| addr.to_string())?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
