//! Drives bots against a hub over envelope lines, one simulated second at a
//! time. The hub's single queue and the tick-gated release of bot actions
//! put every request in a total order, so a (seed, scenario) pair always
//! yields the same log.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::bot::Bot;
use super::oracle::{check_log, Check, OracleReport, PROTOCOL_TOTALITY};
use super::scenario::{Action, CancelWhat, Scenario, ScenarioError};
use crate::connector::PresenceStatus;
use crate::content::{Catalog, LangCode};
use crate::engage::ControllerDecision;
use crate::gateway::protocol::Envelope;
use crate::gateway::store::{Header, FORMAT_VERSION, LOG_FORMAT};
use crate::gateway::{ConnId, Hub, LogRecord, MemJournal, Outbound};
use crate::ids::{DeckId, SetId, UserId};
use crate::platform::State;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub requests: u64,
    pub replies: u64,
    pub errors: BTreeMap<String, u64>,
    pub pushes: u64,
    pub drops: u64,
}

impl RunStats {
    pub fn error_count(&self) -> u64 {
        self.errors.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: Vec<LogRecord>,
    pub report: OracleReport,
    pub stats: RunStats,
    /// Live state at the end of the run.
    pub state: State,
}

impl RunOutput {
    /// The log in its on-disk form: a header line then one record per line.
    pub fn log_text(&self) -> String {
        encode_log(&self.log)
    }
}

pub fn encode_log(records: &[LogRecord]) -> String {
    let header = Header {
        format: LOG_FORMAT.into(),
        version: FORMAT_VERSION,
        position: None,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

struct Sim {
    hub: Hub<MemJournal>,
    bots: Vec<Bot>,
    by_conn: BTreeMap<ConnId, usize>,
    stats: RunStats,
    unanswered: Option<String>,
}

impl Sim {
    fn route(&mut self, out: Vec<Outbound>) {
        for o in out {
            let Some(&bi) = self.by_conn.get(&o.conn) else { continue };
            if let Ok(env) = Envelope::parse(&o.line) {
                if env.in_reply_to.is_none() {
                    self.stats.pushes += 1;
                }
                self.bots[bi].observe(&env);
            }
            if o.close {
                self.drop_conn(bi);
            }
        }
    }

    fn drop_conn(&mut self, bi: usize) {
        if let Some(conn) = self.bots[bi].conn.take() {
            self.by_conn.remove(&conn);
            self.stats.drops += 1;
            let out = self.hub.disconnect(conn);
            self.route(out);
        }
    }

    fn connect(&mut self, bi: usize) -> ConnId {
        let conn = self.hub.connect();
        self.bots[bi].conn = Some(conn);
        self.bots[bi].seq = 0;
        self.by_conn.insert(conn, bi);
        conn
    }

    /// Sends one line and checks the hub answered it exactly once.
    fn send_line(&mut self, bi: usize, conn: ConnId, line: String, seq: Option<u64>) {
        self.stats.requests += 1;
        let out = self.hub.handle_line(conn, &line);
        let answers: Vec<Envelope> = out
            .iter()
            .filter(|o| o.conn == conn)
            .filter_map(|o| Envelope::parse(&o.line).ok())
            .filter(|e| e.in_reply_to.is_some() || e.kind == "error")
            .filter(|e| seq.is_none() || e.in_reply_to == seq)
            .collect();
        match answers.as_slice() {
            [one] => {
                if one.kind == "error" {
                    let code = one.payload["code"].as_str().unwrap_or("?").to_owned();
                    *self.stats.errors.entry(code).or_default() += 1;
                } else {
                    self.stats.replies += 1;
                }
            }
            _ => {
                if self.unanswered.is_none() {
                    self.unanswered = Some(format!(
                        "{} got {} answers to {line}",
                        self.bots[bi].id(),
                        answers.len()
                    ));
                }
            }
        }
        self.route(out);
    }

    fn request(&mut self, bi: usize, kind: &str, payload: Value) {
        let conn = match self.bots[bi].conn {
            Some(c) => c,
            None => {
                let c = self.connect(bi);
                let auth = self.bots[bi].auth_payload();
                self.envelope(bi, c, "auth", auth);
                if self.bots[bi].conn.is_none() {
                    return;
                }
                c
            }
        };
        self.envelope(bi, conn, kind, payload);
    }

    fn envelope(&mut self, bi: usize, conn: ConnId, kind: &str, payload: Value) {
        let bot = &mut self.bots[bi];
        bot.seq += 1;
        let seq = bot.seq;
        let line = Envelope {
            kind: kind.to_owned(),
            seq,
            payload,
            in_reply_to: None,
        }
        .to_line();
        self.send_line(bi, conn, line, Some(seq));
    }

    fn register(&mut self, bi: usize, referral: Option<&str>) {
        let conn = self.connect(bi);
        let payload = self.bots[bi].register_payload(referral);
        self.envelope(bi, conn, "register", payload);
        if self.bots[bi].spec.online {
            self.request(
                bi,
                "set_presence",
                serde_json::json!({ "status": PresenceStatus::Available }),
            );
        }
    }

    fn perform(&mut self, bi: usize, action: &Action, t: u64) {
        match action {
            Action::Wait { s } => self.bots[bi].ready_at = t + s,
            Action::Drop => self.drop_conn(bi),
            Action::Raw { line } => {
                let conn = match self.bots[bi].conn {
                    Some(c) => c,
                    None => {
                        self.request(bi, "sync", Value::Null);
                        match self.bots[bi].conn {
                            Some(c) => c,
                            None => return,
                        }
                    }
                };
                self.send_line(bi, conn, line.clone(), None);
            }
            Action::Redeem { from } => {
                let token = self
                    .bots
                    .iter()
                    .find(|b| b.id() == from)
                    .and_then(|b| b.view.tokens.last().cloned())
                    .unwrap_or_default();
                self.request(bi, "invite_redeem", serde_json::json!({ "token": token }));
            }
            Action::Advance { back, times } => {
                for _ in 0..*times {
                    let (kind, payload) = self.bots[bi]
                        .request(&Action::Advance { back: *back, times: 1 })
                        .expect("advance is a request");
                    self.request(bi, kind, payload);
                }
            }
            other => {
                if let Some((kind, payload)) = self.bots[bi].request(other) {
                    self.request(bi, kind, payload);
                }
            }
        }
    }

    fn run_scripts(&mut self, t: u64) {
        for bi in 0..self.bots.len() {
            while self.bots[bi].ready_at <= t {
                let Some(action) = self.bots[bi].script.pop_front() else { break };
                self.perform(bi, &action, t);
            }
        }
    }
}

/// Runs a scenario against a fresh in-memory server and checks the log.
pub fn run_scenario(scenario: &Scenario, catalog: Arc<Catalog>) -> Result<RunOutput, ScenarioError> {
    scenario.validate(&catalog)?;
    let config = scenario.config.clone();
    let platform = crate::platform::Platform::new(config.clone(), Arc::clone(&catalog));
    let mut sim = Sim {
        hub: Hub::new(platform, MemJournal::default(), 0),
        bots: scenario.population.iter().cloned().map(Bot::new).collect(),
        by_conn: BTreeMap::new(),
        stats: RunStats::default(),
        unanswered: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let decks: Vec<DeckId> = catalog.decks().map(|d| d.deck_id.clone()).collect();
    let sets: Vec<SetId> = catalog.decks().map(|d| d.set_id.clone()).collect();

    let start = scenario.start_at;
    let _ = sim.hub.tick(start);
    for bi in 0..sim.bots.len() {
        sim.register(bi, None);
    }

    let mut remaining = scenario.generator.map_or(0, |g| g.events);
    let per_second = scenario.generator.map_or(1, |g| g.per_second.max(1));
    let mut t = 0u64;
    loop {
        sim.run_scripts(t);
        if remaining > 0 && !sim.bots.is_empty() {
            let burst = rng.gen_range(0..=2 * per_second).min(remaining as u32);
            for _ in 0..burst {
                let bi = rng.gen_range(0..sim.bots.len());
                let action = random_action(&mut rng, &sim.bots, bi, &decks, &sets);
                sim.perform(bi, &action, t);
            }
            remaining -= burst as u64;
        }
        if t >= scenario.duration_s && remaining == 0 {
            break;
        }
        t += 1;
        let out = sim.hub.tick(start + t as i64).unwrap_or_default();
        sim.route(out);
    }

    let (platform, journal) = sim.hub.into_parts();
    let mut report = check_log(&config, catalog, &journal.records);
    report.push(Check {
        name: PROTOCOL_TOTALITY.into(),
        passed: sim.unanswered.is_none(),
        position: None,
        detail: sim.unanswered,
    });
    Ok(RunOutput {
        log: journal.records,
        report,
        stats: sim.stats,
        state: platform.into_state(),
    })
}

/// Random traffic from eight bots: `n_events` actions, about a third of them
/// aimed at states the bot is not in.
pub fn fuzz(seed: u64, n_events: u64, catalog: Arc<Catalog>) -> RunOutput {
    run_scenario(&Scenario::fuzz(seed, n_events), catalog).expect("fuzz scenario is valid")
}

fn random_action(rng: &mut ChaCha8Rng, bots: &[Bot], bi: usize, decks: &[DeckId], sets: &[SetId]) -> Action {
    let me = &bots[bi];
    let others: Vec<&UserId> = bots.iter().map(|b| b.id()).filter(|u| *u != me.id()).collect();
    let pick_user = |rng: &mut ChaCha8Rng| -> UserId {
        if rng.gen_bool(0.05) {
            UserId::from("nobody")
        } else {
            (*others.choose(rng).expect("at least two bots")).clone()
        }
    };
    // prefer actions that move the bot's own story forward
    if me.in_session().is_some() && rng.gen_bool(0.6) {
        return match rng.gen_range(0..10) {
            0..=3 => Action::Advance {
                back: rng.gen_bool(0.15),
                times: 1,
            },
            4 => Action::Hint,
            5 | 6 => Action::Chat {
                text: chat_text(rng),
            },
            7 => Action::Signal {
                body: format!("sdp-{}", rng.gen::<u32>()),
            },
            _ => Action::End,
        };
    }
    if me.view.pending.is_some() && rng.gen_bool(0.5) {
        return match rng.gen_range(0..10) {
            0..=6 => Action::Confirm,
            7 => Action::Signal {
                body: format!("ice-{}", rng.gen::<u32>()),
            },
            8 => Action::Cancel {
                what: CancelWhat::Pending,
            },
            _ => Action::Drop,
        };
    }
    if !me.view.incoming.is_empty() && rng.gen_bool(0.4) {
        return if rng.gen_bool(0.85) {
            Action::Accept {
                from: None,
                missed: false,
            }
        } else {
            Action::Cancel {
                what: CancelWhat::Incoming,
            }
        };
    }
    match rng.gen_range(0..100) {
        0..=11 => Action::Presence {
            status: if rng.gen_bool(0.8) {
                PresenceStatus::Available
            } else {
                PresenceStatus::Offline
            },
        },
        12..=29 => {
            let n = rng.gen_range(1..=3.min(others.len()));
            let mut to: Vec<UserId> = others.choose_multiple(rng, n).map(|u| (*u).clone()).collect();
            if rng.gen_bool(0.05) {
                to.push(me.id().clone());
            }
            let deck = if rng.gen_bool(0.05) {
                DeckId::from("no-such-deck")
            } else {
                decks.choose(rng).expect("catalog has decks").clone()
            };
            Action::Call { to, deck }
        }
        30..=35 => Action::Accept {
            from: None,
            missed: rng.gen_bool(0.5),
        },
        36..=39 => Action::Confirm,
        40..=44 => Action::Cancel {
            what: *[CancelWhat::Group, CancelWhat::Pending, CancelWhat::Incoming, CancelWhat::Missed]
                .choose(rng)
                .expect("non-empty"),
        },
        45..=47 => Action::Advance {
            back: false,
            times: 1,
        },
        48 => Action::Hint,
        49 => Action::Chat {
            text: chat_text(rng),
        },
        50 => Action::End,
        51..=54 => Action::Rate {
            stars: rng.gen_range(0..=6),
        },
        55..=58 => Action::Drop,
        59..=60 => Action::Invite,
        61 => Action::Share,
        62..=63 => Action::Redeem {
            from: pick_user(rng),
        },
        64..=67 => Action::Search {
            language: LangCode::from(*["en", "es", "ru", "de", "fr"].choose(rng).expect("non-empty")),
            country: None,
        },
        68..=69 => Action::Signal {
            body: "stray".into(),
        },
        70..=72 => Action::Missed,
        73..=74 => Action::Balance,
        75 => Action::Decks,
        76 => Action::Leaderboard,
        77..=78 => Action::Sync,
        79 => Action::AssignController {
            controller: pick_user(rng),
        },
        80 => Action::Decide {
            student: pick_user(rng),
            set: sets.choose(rng).expect("catalog has sets").clone(),
            decision: if rng.gen_bool(0.5) {
                ControllerDecision::Advance
            } else {
                ControllerDecision::Repeat
            },
        },
        81 => Action::Raw {
            line: ["{not json", "", "[]", r#"{"type":"teleport","seq":1000000}"#]
                .choose(rng)
                .expect("non-empty")
                .to_string(),
        },
        _ => Action::Wait { s: 0 },
    }
}

fn chat_text(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..20) {
        0 => "   ".into(),
        1 => "x".repeat(2001),
        _ => format!("hola {}", rng.gen::<u16>()),
    }
}
