//! Command-line front end: ingest, build, serve, query, eval, bench.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use shotindex_core::bench::{run_latency, synthetic_index};
use shotindex_core::bundle::{build_bundle, ingest_archive, ArchiveBundle, BundleError, IngestInputs};
use shotindex_core::eval::{
    evaluate_run, format_json_lines, format_table, load_judgments, load_run, pair_run, write_run, EvalError,
};
use shotindex_core::ingest::FeatureVector;
use shotindex_core::lexical::LexicalError;
use shotindex_core::model::{AnnotationKind, RankedResult, ShotId};
use shotindex_core::similarity::{query_by_shot, query_by_vector, SearchError, DEFAULT_SHORTLIST};

use crate::service::{router, AppState, DEFAULT_POSITION};

/// Process exit codes, one per failure class.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const INVALID_INPUT: u8 = 3;
    pub const CHECKSUM_MISMATCH: u8 = 4;
    pub const NOT_FOUND: u8 = 5;
    pub const IO: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Bundle(BundleError::ChecksumMismatch { .. }) => exit::CHECKSUM_MISMATCH,
            CliError::Bundle(BundleError::Io { .. }) | CliError::Eval(EvalError::Io { .. }) | CliError::Io(_) => {
                exit::IO
            }
            CliError::Bundle(_) | CliError::Eval(_) => exit::INVALID_INPUT,
            CliError::Search(SearchError::UnknownShot(_) | SearchError::UnknownPosition { .. })
            | CliError::Lexical(LexicalError::UnknownLabel { .. }) => exit::NOT_FOUND,
            CliError::Search(_) | CliError::Lexical(_) | CliError::Usage(_) => exit::USAGE,
        }
    }
}

/// Environment variable naming the bundle directory.
pub const BUNDLE_ENV: &str = "SHOTINDEX_BUNDLE";
const DEFAULT_BUNDLE: &str = "bundle";

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "shotindex", version, about = "Retrieval over shot-segmented video archives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw inputs and stage them in a bundle directory.
    Ingest(IngestArgs),
    /// Build search trees for a staged bundle.
    Build {
        #[arg(long, env = BUNDLE_ENV, default_value = DEFAULT_BUNDLE)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = BUNDLE_ENV, default_value = DEFAULT_BUNDLE)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory laid out as `<video>/<shot>/<position>.jpg`.
        #[arg(long)]
        thumbnails: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SHORTLIST)]
        shortlist: usize,
    },
    /// Run one query and print the ranking.
    Query(QueryArgs),
    /// Score a run file against relevance judgments.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        /// Cutoff; repeat for several.
        #[arg(long = "n", default_values_t = [100usize])]
        cutoffs: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Time similarity queries over a synthetic corpus.
    Bench {
        /// Number of synthetic keyframes.
        #[arg(long, default_value_t = 7_000_000)]
        synthetic: usize,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SHORTLIST)]
        shortlist: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub semantic_codes: Option<PathBuf>,
    #[arg(long)]
    pub semantic_vectors: Option<PathBuf>,
    #[arg(long)]
    pub low_level_codes: Option<PathBuf>,
    #[arg(long)]
    pub low_level_vectors: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub encoder_seed: u64,
    /// Bundle directory to create or overwrite.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, global = true, env = BUNDLE_ENV, default_value = DEFAULT_BUNDLE)]
    pub bundle: PathBuf,
    #[arg(long, global = true, default_value_t = 100)]
    pub k: usize,
    /// Print run-file lines under this query id instead of a table.
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub kind: QueryCommand,
}

#[derive(Debug, Subcommand)]
pub enum QueryCommand {
    /// Query by example keyframe or feature vector.
    Similar {
        /// Shot as `video_id#shot_index`.
        #[arg(long, conflicts_with = "vector", required_unless_present = "vector")]
        shot: Option<String>,
        #[arg(long, default_value_t = DEFAULT_POSITION)]
        position: u8,
        /// Comma-separated feature vector.
        #[arg(long)]
        vector: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_SHORTLIST)]
        shortlist: usize,
    },
    Concept {
        #[arg(long)]
        label: String,
    },
    Person {
        #[arg(long)]
        label: String,
    },
    Text {
        #[arg(long = "q")]
        query: String,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Build { bundle, seed } => {
            let meta = build_bundle(&bundle, seed)?;
            println!("{}", serde_json::to_string_pretty(&meta).expect("serializable"));
            Ok(())
        }
        Command::Serve {
            bundle,
            addr,
            thumbnails,
            shortlist,
        } => serve(&bundle, addr, thumbnails, shortlist),
        Command::Query(args) => query(args),
        Command::Eval {
            run,
            judgments,
            cutoffs,
            json,
        } => eval(&run, &judgments, &cutoffs, json),
        Command::Bench {
            synthetic,
            queries,
            alpha,
            k,
            shortlist,
            seed,
        } => bench(synthetic, queries, alpha, k, shortlist, seed),
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let inputs = IngestInputs {
        manifest: args.manifest,
        semantic_codes: args.semantic_codes,
        semantic_vectors: args.semantic_vectors,
        low_level_codes: args.low_level_codes,
        low_level_vectors: args.low_level_vectors,
        annotations: args.annotations,
        text: args.text,
        encoder_seed: args.encoder_seed,
    };
    let summary = ingest_archive(&inputs, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(())
}

fn serve(bundle: &Path, addr: SocketAddr, thumbnails: Option<PathBuf>, shortlist: usize) -> Result<()> {
    let bundle = ArchiveBundle::load(bundle)?;
    tracing::info!(
        shots = bundle.metadata.shots,
        keyframes = bundle.metadata.keyframes,
        "bundle loaded"
    );
    let mut state = AppState::new(bundle);
    state.thumbnails = thumbnails;
    state.shortlist_size = shortlist;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn parse_vector(s: &str) -> Result<FeatureVector> {
    let values = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad vector component {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureVector::new(values).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run_query(bundle: &ArchiveBundle, k: usize, kind: &QueryCommand) -> Result<RankedResult> {
    Ok(match kind {
        QueryCommand::Similar {
            shot,
            position,
            vector,
            alpha,
            shortlist,
        } => match (shot, vector) {
            (Some(shot), None) => {
                let id: ShotId = shot.parse().map_err(CliError::Usage)?;
                query_by_shot(&bundle.similarity, &id, *position, *alpha, k, *shortlist)?
            }
            (None, Some(vector)) => query_by_vector(
                &bundle.similarity,
                &bundle.encoders,
                &parse_vector(vector)?,
                *alpha,
                k,
                *shortlist,
            )?,
            _ => return Err(CliError::Usage("give exactly one of --shot or --vector".into())),
        },
        QueryCommand::Concept { label } => bundle.postings.concept_search(label, AnnotationKind::Concept, k)?,
        QueryCommand::Person { label } => bundle.postings.concept_search(label, AnnotationKind::Person, k)?,
        QueryCommand::Text { query } => bundle.vocabulary.text_search(query, k)?,
    })
}

fn query(args: QueryArgs) -> Result<()> {
    let bundle = ArchiveBundle::load(&args.bundle)?;
    let result = run_query(&bundle, args.k, &args.kind)?;
    let mut out = std::io::stdout().lock();
    match &args.run_id {
        Some(id) => out.write_all(write_run(id, &result).as_bytes())?,
        None => {
            for (i, e) in result.entries.iter().enumerate() {
                writeln!(out, "{}\t{}\t{:.6}", i + 1, e.shot, e.score)?;
            }
        }
    }
    Ok(())
}

fn eval(run: &Path, judgments: &Path, cutoffs: &[usize], json: bool) -> Result<()> {
    let run = load_run(run)?;
    let judgments = load_judgments(judgments)?;
    let pairs = pair_run(&run, &judgments);
    let reports = cutoffs
        .iter()
        .map(|&n| evaluate_run(&pairs, n))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let text = if json {
        format_json_lines(&reports)
    } else {
        format_table(&reports)
    };
    print!("{text}");
    Ok(())
}

fn bench(keyframes: usize, queries: usize, alpha: f64, k: usize, shortlist: usize, seed: u64) -> Result<()> {
    if alpha != 1.0 {
        return Err(CliError::Usage(
            "synthetic corpora have only semantic codes; use --alpha 1".into(),
        ));
    }
    eprintln!("building synthetic index of {keyframes} keyframes");
    let index = synthetic_index(keyframes, seed);
    let (report, _) = run_latency(&index, queries, alpha, k, shortlist, seed)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}
