//! Scenario files: who the bots are and what each one does.
//!
//! ```toml
//! seed = 7
//! duration_s = 620
//!
//! [[bots]]
//! id = "tom"
//! native_language = "en"
//! online = true
//! script = [
//!   { do = "wait", s = 1 },
//!   { do = "call", to = ["ana"], deck = "greetings-A1" },
//! ]
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::connector::PresenceStatus;
use crate::content::{Catalog, LangCode};
use crate::engage::ControllerDecision;
use crate::ids::{DeckId, SetId, Timestamp, UserId};
use crate::session::Direction;

/// 2026-01-01T00:00:00Z.
pub const DEFAULT_START: Timestamp = 1_767_225_600;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate bot id {0}")]
    DuplicateBot(UserId),
    #[error("bot {bot} refers to unknown bot {other}")]
    UnknownBot { bot: UserId, other: UserId },
    #[error("bot {bot} uses unknown deck {deck}")]
    UnknownDeck { bot: UserId, deck: DeckId },
    #[error("bot {bot}: language {lang} is not configured")]
    UnknownLanguage { bot: UserId, lang: LangCode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_at: Timestamp,
    /// Simulated seconds to run the scripts for.
    #[serde(default)]
    pub duration_s: u64,
    #[serde(default)]
    pub config: Config,
    #[serde(default, rename = "bots")]
    pub population: Vec<BotSpec>,
    #[serde(default)]
    pub generator: Option<Generator>,
}

fn default_start() -> Timestamp {
    DEFAULT_START
}

/// Random traffic on top of (or instead of) the scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub events: u64,
    /// Mean random actions per simulated second.
    #[serde(default = "default_rate")]
    pub per_second: u32,
}

fn default_rate() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BotSpec {
    pub id: UserId,
    pub native_language: LangCode,
    #[serde(default)]
    pub display_name: Option<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub levels: Vec<u32>,
    /// Go available right after registering.
    #[serde(default)]
    pub online: bool,
    #[serde(default)]
    pub script: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelWhat {
    /// The bot's latest outgoing group.
    #[default]
    Group,
    /// The handshake the bot is in.
    Pending,
    /// Decline the newest ringing inbound leg.
    Incoming,
    /// Drop the oldest missed call.
    Missed,
}

/// The bot behaviour language. A bot runs its actions in order; `wait`
/// is the only action that lets simulated time pass. A dropped bot
/// reconnects before its next action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Wait {
        s: u64,
    },
    Presence {
        status: PresenceStatus,
    },
    Call {
        to: Vec<UserId>,
        deck: DeckId,
    },
    /// Accept the newest ringing call (optionally from one caller), or the
    /// oldest missed one.
    Accept {
        #[serde(default)]
        from: Option<UserId>,
        #[serde(default)]
        missed: bool,
    },
    Confirm,
    Advance {
        #[serde(default)]
        back: bool,
        #[serde(default = "one")]
        times: u32,
    },
    Hint,
    Chat {
        text: String,
    },
    End,
    /// Rate the partner of the bot's last lesson.
    Rate {
        stars: u8,
    },
    Cancel {
        #[serde(default)]
        what: CancelWhat,
    },
    /// Drop the connection without saying goodbye.
    Drop,
    /// Share an invite; the token becomes available to other bots.
    Invite,
    Share,
    /// Redeem the newest unused invite token minted by `from`.
    Redeem {
        from: UserId,
    },
    Search {
        language: LangCode,
        #[serde(default)]
        country: Option<String>,
    },
    /// Send an opaque blob to the current partner.
    Signal {
        body: String,
    },
    Missed,
    Balance,
    Decks,
    Leaderboard,
    Sync,
    AssignController {
        controller: UserId,
    },
    Decide {
        student: UserId,
        set: SetId,
        decision: ControllerDecision,
    },
    /// Write a raw line to the socket.
    Raw {
        line: String,
    },
}

fn one() -> u32 {
    1
}

impl Action {
    pub fn direction(back: bool) -> Direction {
        if back {
            Direction::Back
        } else {
            Direction::Next
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    /// Checks bot references, decks and languages against `catalog`.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), ScenarioError> {
        let mut ids = BTreeSet::new();
        for b in &self.population {
            if !ids.insert(&b.id) {
                return Err(ScenarioError::DuplicateBot(b.id.clone()));
            }
        }
        for b in &self.population {
            if !self.config.languages.contains(&b.native_language) {
                return Err(ScenarioError::UnknownLanguage {
                    bot: b.id.clone(),
                    lang: b.native_language.clone(),
                });
            }
            let known = |other: &UserId| {
                if ids.contains(other) {
                    Ok(())
                } else {
                    Err(ScenarioError::UnknownBot {
                        bot: b.id.clone(),
                        other: other.clone(),
                    })
                }
            };
            for a in &b.script {
                match a {
                    Action::Call { to, deck } => {
                        to.iter().try_for_each(known)?;
                        if catalog.deck(deck).is_none() {
                            return Err(ScenarioError::UnknownDeck {
                                bot: b.id.clone(),
                                deck: deck.clone(),
                            });
                        }
                    }
                    Action::Accept { from: Some(u), .. }
                    | Action::Redeem { from: u }
                    | Action::AssignController { controller: u }
                    | Action::Decide { student: u, .. } => known(u)?,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// A population of eight speakers of all four sample languages driven
    /// only by the random generator.
    pub fn fuzz(seed: u64, events: u64) -> Scenario {
        let langs = ["en", "en", "en", "es", "es", "ru", "de", "ru"];
        let population = langs
            .iter()
            .enumerate()
            .map(|(i, lang)| BotSpec {
                id: UserId::new(format!("bot{i}")),
                native_language: LangCode::from(*lang),
                display_name: None,
                country: Some(["GB", "ES", "RU", "DE"][i % 4].to_owned()),
                gender: Some(["f", "m"][i % 2].to_owned()),
                age: Some(18 + (i as u32 * 7) % 40),
                levels: vec![1],
                online: i % 3 != 2,
                script: Vec::new(),
            })
            .collect();
        Scenario {
            name: format!("fuzz-{seed}"),
            seed,
            start_at: DEFAULT_START,
            duration_s: 0,
            config: Config {
                handshake_timeout_s: 8,
                missed_ttl_s: 40,
                signup_grant_s: 240,
                controller_enabled: true,
                ..Config::default()
            },
            population,
            generator: Some(Generator { events, per_second: 4 }),
        }
    }
}
