use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use log::{error, info};
use peerlingo_cli::{serve, Options};
use peerlingo_core::content::{sample_catalog, Catalog};
use peerlingo_core::gateway::{Hub, Store};
use peerlingo_core::Config;

/// Peer-teaching platform server.
#[derive(Debug, Parser)]
#[command(name = "peerlingo-server", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: String,
    /// Directory for the command log and snapshots.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Directory of deck files. The built-in sample decks are used if absent.
    #[arg(long)]
    content_dir: Option<PathBuf>,
    /// TOML config file. `PEERLINGO_*` environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load(args: &Args) -> Result<(Config, Catalog), String> {
    let mut config = match &args.config {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    config.apply_env().map_err(|e| e.to_string())?;
    let catalog = match &args.content_dir {
        Some(dir) => Catalog::load_dir(dir, &config.languages),
        None => sample_catalog(&config.languages),
    }
    .map_err(|e| e.to_string())?;
    Ok((config, catalog))
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let (config, catalog) = match load(&args) {
        Ok(x) => x,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.data_dir) {
        error!("creating {}: {e}", args.data_dir.display());
        return ExitCode::from(2);
    }
    let decks = catalog.len();
    let (store, platform, position) = match Store::open(&args.data_dir, config, Arc::new(catalog)) {
        Ok(x) => x,
        Err(e) => {
            error!("recovering {}: {e}", args.data_dir.display());
            return ExitCode::from(1);
        }
    };
    info!("recovered {position} records, {decks} decks loaded");
    let listener = match tokio::net::TcpListener::bind(&args.listen).await {
        Ok(l) => l,
        Err(e) => {
            error!("binding {}: {e}", args.listen);
            return ExitCode::from(1);
        }
    };
    info!("listening on {}", args.listen);
    let hub = Hub::new(platform, store, position);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        info!("shutting down");
    };
    let hub = serve(listener, hub, Options::default(), shutdown).await;
    if hub.is_halted() {
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
