//! `drape`: batch transfers, metric evaluation and the session server.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drape_core::deform::{parse_correspondences, CorrespondenceSet};
use drape_core::geometry::{load_mesh, load_target, write_obj_string};
use drape_core::metrics::{evaluate_transfer, MetricConfig, TransferReport};
use drape_core::pipeline::{DrapeConfig, DrapeSession};

#[derive(Debug, Parser)]
#[command(name = "drape", version, about = "Transfer a mesh's tessellation onto a target shape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drape the source mesh onto the target and write the result.
    Transfer(TransferArgs),
    /// Score an existing result against its source and target.
    Eval(EvalArgs),
    /// Serve the interactive session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct TransferArgs {
    /// Source mesh (OBJ).
    #[arg(long)]
    source: PathBuf,
    /// Target mesh, polygon soup or point cloud.
    #[arg(long)]
    target: PathBuf,
    /// Correspondence pairs (JSON or `vertex x y z [rigid]` lines).
    #[arg(long)]
    corr: Option<PathBuf>,
    /// TOML configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output mesh; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metric report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the loss every N iterations to stderr.
    #[arg(long, value_name = "N")]
    progress: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// TOML configuration; only its `metrics` and `target` tables are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the metric sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Defaults to `DRAPE_PORT`, then 8080.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Defaults to `DRAPE_MAX_UPLOAD_MB`, then 64.
    #[arg(long, value_name = "MB")]
    max_upload_mb: Option<usize>,
    /// Defaults to `DRAPE_CHECKPOINT_DIR`; checkpoints are off when neither
    /// is set.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

fn load_config(path: Option<&Path>) -> CliResult<DrapeConfig> {
    match path {
        Some(p) => DrapeConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(DrapeConfig::default()),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_json(report: &TransferReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn transfer(args: TransferArgs) -> CliResult<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let source = load_mesh(&args.source).map_err(|e| e.to_string())?;
    let target = load_target(&args.target, config.target.dense_samples).map_err(|e| e.to_string())?;
    let corr = match &args.corr {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            parse_correspondences(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => CorrespondenceSet::default(),
    };
    let mut session = DrapeSession::create(source, target, corr, config).map_err(|e| e.to_string())?;
    session.start().map_err(|e| e.to_string())?;
    let total = session.config().iterations;
    while session.iteration() < total {
        let step = session.step().map_err(|e| e.to_string())?;
        if let Some(n) = args.progress.filter(|&n| n > 0) {
            if session.iteration() % n == 0 {
                eprintln!("iteration {}/{total}: loss {:.6e}", session.iteration(), step.report.total);
            }
        }
    }
    let result = session.extract_result().map_err(|e| e.to_string())?;
    write_or_print(args.out.as_deref(), &write_obj_string(&result.mesh))?;
    if let Some(p) = &args.report {
        write_or_print(Some(p), &report_json(&result.report))?;
    }
    let r = &result.report;
    eprintln!(
        "chamfer {:.3e}  hausdorff {:.3e}  dirichlet {:.4}  f_a {:.4}  q_transfer {:.4}",
        r.chamfer, r.hausdorff, r.dirichlet, r.f_a, r.q_transfer
    );
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let config = load_config(args.config.as_deref())?;
    let mut metrics: MetricConfig = config.metrics;
    if let Some(seed) = args.seed {
        metrics.seed = seed;
    }
    let source = load_mesh(&args.source).map_err(|e| e.to_string())?;
    let result = load_mesh(&args.result).map_err(|e| e.to_string())?;
    let target = load_target(&args.target, config.target.dense_samples).map_err(|e| e.to_string())?;
    let report = evaluate_transfer(&source, &result, &target, &metrics).map_err(|e| e.to_string())?;
    let json = report_json(&report);
    print!("{json}");
    if let Some(p) = &args.report {
        write_or_print(Some(p), &json)?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let mut config = drape_service::ServiceConfig::from_env().map_err(|e| e.to_string())?;
    if let Some(mb) = args.max_upload_mb {
        config.max_upload_bytes = mb << 20;
    }
    if let Some(dir) = args.checkpoint_dir {
        config.checkpoint_dir = Some(dir);
    }
    let port = match args.port {
        Some(p) => p,
        None => drape_service::port_from_env().map_err(|e| e.to_string())?,
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let addr = format!("{}:{port}", args.host);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| format!("cannot listen on {addr}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("listening on http://{local}");
        drape_service::serve(listener, config, shutdown_signal())
            .await
            .map_err(|e| e.to_string())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Transfer(a) => transfer(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("drape: {message}");
            ExitCode::FAILURE
        }
    }
}
