use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use peerlingo_core::content::Catalog;
use peerlingo_core::simharness::{default_catalog, fuzz, run_scenario, RunOutput, Scenario};

/// Runs a bot scenario (or a generated fuzz run) and checks the invariants.
#[derive(Debug, Parser)]
#[command(name = "simrun", version)]
struct Args {
    /// Scenario file. Without it a fuzz run is generated from the seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of generated events for a fuzz run.
    #[arg(long, default_value_t = 10_000)]
    events: u64,
    /// Deck directory; the built-in sample decks otherwise.
    #[arg(long)]
    content_dir: Option<PathBuf>,
    /// Write the command log here.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn run(args: &Args) -> Result<RunOutput, String> {
    let catalog = |languages: &[_]| -> Result<Arc<Catalog>, String> {
        match &args.content_dir {
            Some(dir) => Catalog::load_dir(dir, languages).map(Arc::new).map_err(|e| e.to_string()),
            None => Ok(default_catalog()),
        }
    };
    match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut sc = Scenario::from_toml_str(&text).map_err(|e| e.to_string())?;
            if let Some(seed) = args.seed {
                sc.seed = seed;
            }
            let cat = catalog(&sc.config.languages)?;
            run_scenario(&sc, cat).map_err(|e| e.to_string())
        }
        None => {
            let seed = args.seed.unwrap_or(1);
            let cat = catalog(&Scenario::fuzz(seed, 0).config.languages)?;
            Ok(fuzz(seed, args.events, cat))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out = match run(&args) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("simrun: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(path) = &args.log {
        if let Err(e) = std::fs::write(path, out.log_text()) {
            eprintln!("simrun: writing {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    let s = &out.stats;
    println!(
        "records {}  requests {}  replies {}  errors {}  pushes {}  drops {}",
        out.log.len(),
        s.requests,
        s.replies,
        s.error_count(),
        s.pushes,
        s.drops
    );
    for (code, n) in &s.errors {
        println!("  {code}: {n}");
    }
    print!("{}", out.report);
    if out.report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
