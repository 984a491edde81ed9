use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tagsift::approval::http::{router, shared, ApprovalService};
use tagsift::pipeline::{self, Workspace};
use tagsift::Config;

/// Semi-automatic training-set construction from noisily tagged images.
#[derive(Parser)]
#[command(name = "tagsift", version)]
struct Cli {
    /// Work directory holding every pipeline artifact.
    #[arg(long, short = 'w', global = true, default_value = "work")]
    workdir: PathBuf,
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import an external manifest (image_id, path, split, tags, truth).
    Ingest { manifest: PathBuf },
    /// Render a synthetic corpus with ground truth.
    Synth,
    /// Segment every image into regions.
    Segment,
    /// Extract region and global features.
    Features,
    /// Build the review session for a label (or every label with --all).
    Construct {
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        label: Option<String>,
        #[arg(long)]
        all: bool,
        /// Decide the session headlessly from ground truth.
        #[arg(long)]
        oracle: bool,
    },
    /// Serve the review API over the work directory's sessions.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Turn decided sessions into training sets.
    Assemble,
    /// Score the test split with constructed and baseline training sets.
    Annotate,
    /// Average precision per label and arm.
    Evaluate,
    /// Write report.tsv.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ws = Workspace::new(&cli.workdir);
    match cli.command {
        Command::Ingest { manifest } => {
            let c = pipeline::ingest(&ws, &manifest)?;
            println!("ingested {} images, {} labels", c.len(), c.label_vocabulary().len());
        }
        Command::Synth => {
            let c = pipeline::synth(&ws, &cfg)?;
            println!("wrote {} images to {}", c.len(), ws.dir.display());
        }
        Command::Segment => {
            let n = pipeline::segment_corpus(&ws, &cfg)?;
            println!("wrote {n} regions");
        }
        Command::Features => {
            let (r, g) = pipeline::extract_features(&ws, &cfg)?;
            println!("wrote {} region and {} global features", r.len(), g.len());
        }
        Command::Construct { label, all, oracle } => {
            let summaries = if all {
                pipeline::construct_all(&ws, &cfg, oracle)?
            } else {
                vec![pipeline::construct(
                    &ws,
                    &cfg,
                    label.as_deref().unwrap_or_default(),
                    oracle,
                )?]
            };
            for s in summaries {
                let decided = s
                    .decisions
                    .map_or_else(|| "pending".to_string(), |d| format!("{d} decisions"));
                println!(
                    "{}\t{} candidates\t{} bins\t{} clusters\t{decided}",
                    s.label, s.candidates, s.bins, s.clusters
                );
            }
        }
        Command::Serve { port, host } => {
            let service = ApprovalService::load(&ws.sessions())?;
            let app = router(shared(service));
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("bind {addr}"))?;
                log::info!("serving review API on http://{addr}");
                axum::serve(listener, app).await.context("server")
            })?;
        }
        Command::Assemble => {
            for s in pipeline::assemble(&ws, &cfg)? {
                println!(
                    "{}\t{} positives\t{} negatives",
                    s.label,
                    s.positive_ids.len(),
                    s.negative_ids.len()
                );
            }
        }
        Command::Annotate => {
            let runs = pipeline::annotate_runs(&ws, &cfg)?;
            println!("wrote {} scored runs", runs.len());
        }
        Command::Evaluate => {
            let (c, b) = pipeline::evaluate(&ws)?.map();
            let f = |v: Option<f64>| v.map_or_else(|| "NA".into(), |v| format!("{v:.6}"));
            println!("MAP constructed {} baseline {}", f(c), f(b));
        }
        Command::Report => {
            pipeline::report(&ws, &cfg)?;
            println!("{}", ws.report().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
