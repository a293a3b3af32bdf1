use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use chronotopic::bundle::AnalysisBundle;
use chronotopic::config::RunConfig;
use chronotopic::events::{events_to_json, overlap_statistics};
use chronotopic::hdp::CancelToken;
use chronotopic::pipeline;
use chronotopic::relatedness::{scatter_rows, write_scatter_csv, Measure};
use chronotopic_server::AppState;

#[derive(Parser)]
#[command(name = "chronotopic", version, about = "Topic dynamics over a timestamped corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every epoch and write an analysis bundle.
    Run {
        #[arg(long, required_unless_present = "print_default_config")]
        config: Option<PathBuf>,
        /// Epochs fitted in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Overrides `hdp.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Print a config with every default and exit.
        #[arg(long)]
        print_default_config: bool,
    },
    /// Write figure data from a bundle.
    Export {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum)]
        what: ExportKind,
        #[arg(long)]
        out: PathBuf,
        /// Re-prune every graph at this threshold first.
        #[arg(long)]
        zeta: Option<f64>,
        /// Graph to export, or the divergence graph compared in `overlap`.
        #[arg(long, value_parser = parse_measure)]
        measure: Option<Measure>,
    },
    /// Serve the HTTP API for a bundle until interrupted.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Re-prune one graph of a bundle in place.
    Reprune {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_parser = parse_measure)]
        measure: Measure,
        #[arg(long)]
        zeta: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Scatter,
    Overlap,
    Graph,
    Events,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|_| format!("unknown measure {s:?}; expected bhattacharyya, kld_forward or kld_backward"))
}

/// Error carrying its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn validation(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { print_default_config: true, .. } => {
            print!("{}", RunConfig::default_toml());
            Ok(())
        }
        Command::Run { config, jobs, seed, .. } => cmd_run(&config.expect("required by clap"), jobs.into(), seed),
        Command::Export { bundle, what, out, zeta, measure } => cmd_export(&bundle, what, &out, zeta, measure),
        Command::Serve { bundle, port, host } => cmd_serve(&bundle, SocketAddr::new(host, port)),
        Command::Reprune { bundle, measure, zeta } => cmd_reprune(&bundle, measure, zeta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(config: &Path, jobs: usize, seed: Option<u64>) -> Outcome {
    let mut cfg = RunConfig::load(config).map_err(Failure::validation)?;
    if let Some(s) = seed {
        cfg.hdp.seed = s;
    }
    let mut progress = |line: &str| eprintln!("{line}");
    let bundle = pipeline::run(&cfg, jobs, &CancelToken::new(), &mut progress).map_err(|e| {
        if e.is_validation() {
            Failure::validation(e)
        } else {
            Failure::runtime(e)
        }
    })?;
    bundle.write(&cfg.paths.output).map_err(Failure::runtime)?;
    eprintln!("wrote {}", cfg.paths.output.display());
    println!("{}", bundle.content_hash());
    Ok(())
}

fn load(dir: &Path) -> Result<AnalysisBundle, Failure> {
    AnalysisBundle::load(dir).with_context(|| format!("cannot load bundle {}", dir.display())).map_err(Failure::validation)
}

fn cmd_export(dir: &Path, what: ExportKind, out: &Path, zeta: Option<f64>, measure: Option<Measure>) -> Outcome {
    let mut bundle = load(dir)?;
    if let Some(z) = zeta {
        for m in Measure::ALL {
            bundle = bundle.reprune(m, z).map_err(Failure::validation)?;
        }
    }
    let file = File::create(out).with_context(|| format!("cannot write {}", out.display())).map_err(Failure::validation)?;
    let mut w = BufWriter::new(file);
    let written: anyhow::Result<()> = match what {
        ExportKind::Scatter => {
            let [b, f, k] = bundle.graphs();
            let rows = scatter_rows(b, f, k).map_err(Failure::runtime)?;
            write_scatter_csv(&rows, &mut w).map_err(Into::into)
        }
        ExportKind::Overlap => {
            let kld = measure.unwrap_or(Measure::KldForward);
            if kld == Measure::Bhattacharyya {
                return Err(Failure::validation(anyhow!("overlap compares bhattacharyya against a divergence graph")));
            }
            let report = overlap_statistics(bundle.graph(Measure::Bhattacharyya), bundle.graph(kld)).map_err(Failure::runtime)?;
            report.write_csv(&mut w).map_err(Into::into)
        }
        ExportKind::Graph => {
            let g = bundle.graph(measure.unwrap_or(Measure::Bhattacharyya));
            w.write_all(g.to_json().as_bytes()).map_err(Into::into)
        }
        ExportKind::Events => w.write_all(events_to_json(bundle.events()).as_bytes()).map_err(Into::into),
    };
    written.and_then(|()| Ok(w.flush()?)).with_context(|| format!("cannot write {}", out.display())).map_err(Failure::validation)
}

fn cmd_reprune(dir: &Path, measure: Measure, zeta: f64) -> Outcome {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Failure::validation(anyhow!("zeta {zeta} outside [0, 1]")));
    }
    let bundle = load(dir)?.reprune(measure, zeta).map_err(Failure::validation)?;
    bundle.write(dir).map_err(Failure::runtime)?;
    println!("revision_hash={}", bundle.revision_hash());
    println!("surviving_edges={}", bundle.graph(measure).surviving_count());
    println!("content_hash={}", bundle.content_hash());
    Ok(())
}

fn cmd_serve(dir: &Path, addr: SocketAddr) -> Outcome {
    let bundle = load(dir)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))
            .map_err(Failure::validation)?;
        let local = listener.local_addr().map_err(Failure::runtime)?;
        eprintln!("listening on http://{local}/api/v1");
        chronotopic_server::serve(listener, AppState::new(bundle), interrupted()).await.map_err(Failure::runtime)?;
        eprintln!("shut down");
        Ok(())
    })
}

async fn interrupted() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}
