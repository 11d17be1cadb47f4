//! Deterministic simulation: scripted bots speak the wire protocol to an
//! in-memory server, then an oracle replays the command log and checks the
//! global invariants position by position.
//!
//! Bots see only envelopes. The oracle sees only the log.

mod bot;
pub mod oracle;
mod runner;
pub mod scenario;

use std::sync::Arc;

pub use bot::{Bot, BotView};
pub use oracle::{check_log, is_legal_edge, Check, OracleReport};
pub use runner::{encode_log, fuzz, run_scenario, RunOutput, RunStats};
pub use scenario::{Action, BotSpec, CancelWhat, Generator, Scenario, ScenarioError};

use crate::config::Config;
use crate::content::{sample_catalog, Catalog};

/// The sample decks under the default language set.
pub fn default_catalog() -> Arc<Catalog> {
    Arc::new(sample_catalog(&Config::default().languages).expect("sample decks are valid"))
}
