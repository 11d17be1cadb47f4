//! Peer-teaching platform core: presence and multi-call matchmaking, live
//! role-based lessons over multilingual slide decks, a time-banking ledger and
//! engagement features, all driven through one ordered command log.
//!
//! [`Platform`] is the replicated state machine. [`gateway`] speaks the
//! line-delimited wire protocol and persists the command log;
//! [`simharness`] drives scripted bots through it and checks invariants.

pub mod config;
pub mod connector;
pub mod content;
pub mod engage;
pub mod error;
pub mod gateway;
pub mod ids;
pub mod notify;
pub mod platform;
pub mod session;
pub mod simharness;
pub mod timebank;

pub use config::Config;
pub use connector::{CallLeg, Connector, LegState, PresenceStatus, SearchFilter, UserProfile};
pub use content::{Catalog, LangCode, Role, RoleView, SlideDeck};
pub use error::{Error, Result};
pub use ids::{DeckId, GroupId, LegId, PendingId, SessionId, SetId, Timestamp, UserId};
pub use notify::{Notice, Push};
pub use platform::{Applied, Command, Platform, State};
