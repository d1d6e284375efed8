use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use cota_core::corpus::DataFormat;
use cota_core::experiment::{
    cmd_evaluate, cmd_generate, cmd_hyperopt, cmd_predict, cmd_train, load_model, ExperimentConfig, ExperimentError,
    MODEL_DIR,
};
use cota_core::serve::{FileStore, TicketService};

#[derive(Parser)]
#[command(name = "cota", version, about = "Ticket triage: train, evaluate and serve contact-type and reply suggestions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML), or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of written datasets and prediction dumps.
    #[arg(long, value_parser = ["delimited", "json-lines"])]
    format: Option<String>,
    /// Suggestions per task.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured corpus to <out>/data.
    Generate(Common),
    /// Train the configured model.
    Train(Common),
    /// Score the trained model on the test split.
    Evaluate(Common),
    /// Rank suggestions for tickets read from a JSON-lines file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Random search over the [hyperopt] space.
    Hyperopt(Common),
    /// Serve suggestions over HTTP with the trained model.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// State directory; defaults to <out>/serve.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Events between snapshots.
        #[arg(long, default_value_t = 1000)]
        snapshot_every: u64,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(f) = &c.format {
        cfg.format = f.parse::<DataFormat>().map_err(ExperimentError::Usage)?;
    }
    if let Some(k) = c.top_k {
        cfg.top_k = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn serve(cfg: ExperimentConfig, addr: String, store: Option<PathBuf>, snapshot_every: u64) -> Result<(), ExperimentError> {
    let (model, _) = load_model(&cfg.output_dir, cfg.format)?;
    let store_dir = store.unwrap_or_else(|| cfg.output_dir.join("serve"));
    let store = FileStore::open(&store_dir, snapshot_every).map_err(|e| ExperimentError::Data(e.to_string()))?;
    let version = model.version.clone();
    let service = TicketService::new(Arc::new(model), Box::new(store), cfg.top_k).map_err(|e| ExperimentError::Data(e.to_string()))?;
    let app = cota_cli::router(Arc::new(service));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        log::info!("serving model {version} from {} on {addr}", cfg.output_dir.join(MODEL_DIR).display());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<Vec<String>, ExperimentError> {
    match cli.command {
        Command::Generate(c) => cmd_generate(&load(&c)?),
        Command::Train(c) => cmd_train(&load(&c)?),
        Command::Evaluate(c) => Ok(cmd_evaluate(&load(&c)?)?.to_text().lines().map(String::from).collect()),
        Command::Predict { common, input } => {
            let cfg = load(&common)?;
            let n = cmd_predict(&cfg, &input)?.len();
            Ok(vec![format!("wrote {n} ranked lists")])
        }
        Command::Hyperopt(c) => {
            let trials = cmd_hyperopt(&load(&c)?)?;
            Ok(trials
                .iter()
                .map(|t| match t.validation_accuracy {
                    Some(a) => format!("trial {}: validation accuracy {a:.4}, {:.2} min", t.index, t.minutes),
                    None => format!("trial {}: failed", t.index),
                })
                .collect())
        }
        Command::Serve { common, addr, store, snapshot_every } => {
            serve(load(&common)?, addr, store, snapshot_every)?;
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
