//! Connection-level protocol handling on top of the platform. The hub is
//! transport-agnostic: callers feed it lines and get back addressed lines.
//! It is the single writer, so whoever owns it is the application queue.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::protocol::{Envelope, ErrorBody, Request};
use super::store::{Journal, LogRecord};
use crate::connector::{PresenceStatus, UserProfile};
use crate::engage::Month;
use crate::error::{Error, Result};
use crate::ids::{Timestamp, UserId};
use crate::notify::Notice;
use crate::platform::{Command, Platform};

pub type ConnId = u64;

/// One line to write to one connection. `close` asks the transport to close
/// the connection after writing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub conn: ConnId,
    pub line: String,
    pub close: bool,
}

#[derive(Debug, Default)]
struct Conn {
    user: Option<UserId>,
    last_seq: Option<u64>,
    out_seq: u64,
}

pub fn hash_secret(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

pub struct Hub<J: Journal> {
    platform: Platform,
    journal: J,
    position: u64,
    conns: BTreeMap<ConnId, Conn>,
    by_user: BTreeMap<UserId, BTreeSet<ConnId>>,
    next_conn: ConnId,
    halted: Option<String>,
}

impl<J: Journal> Hub<J> {
    /// `position` is the last position already in the journal.
    pub fn new(platform: Platform, journal: J, position: u64) -> Self {
        Hub {
            platform,
            journal,
            position,
            conns: BTreeMap::new(),
            by_user: BTreeMap::new(),
            next_conn: 0,
            halted: None,
        }
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn journal(&self) -> &J {
        &self.journal
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn into_parts(self) -> (Platform, J) {
        (self.platform, self.journal)
    }

    pub fn is_halted(&self) -> bool {
        self.halted.is_some()
    }

    pub fn connect(&mut self) -> ConnId {
        self.next_conn += 1;
        self.conns.insert(self.next_conn, Conn::default());
        self.next_conn
    }

    pub fn is_authenticated(&self, conn: ConnId) -> bool {
        self.conns.get(&conn).is_some_and(|c| c.user.is_some())
    }

    pub fn user_of(&self, conn: ConnId) -> Option<&UserId> {
        self.conns.get(&conn)?.user.as_ref()
    }

    pub fn connections_of(&self, user: &UserId) -> usize {
        self.by_user.get(user).map_or(0, BTreeSet::len)
    }

    /// Drops a connection. When a user's last connection goes while they
    /// are merely online, they go offline; engagements outlive connections.
    pub fn disconnect(&mut self, conn: ConnId) -> Vec<Outbound> {
        let Some(c) = self.conns.remove(&conn) else { return Vec::new() };
        let Some(user) = c.user else { return Vec::new() };
        let last = match self.by_user.get_mut(&user) {
            Some(set) => {
                set.remove(&conn);
                set.is_empty()
            }
            None => true,
        };
        if !last {
            return Vec::new();
        }
        self.by_user.remove(&user);
        let free = self
            .platform
            .state()
            .connector
            .status(&user)
            .is_ok_and(|s| s.is_free());
        if !free {
            return Vec::new();
        }
        self.submit(Command::SetPresence {
            user,
            status: PresenceStatus::Offline,
        })
        .map(|(_, out)| out)
        .unwrap_or_default()
    }

    /// Advances the clock by one tick to `at`.
    pub fn tick(&mut self, at: Timestamp) -> Result<Vec<Outbound>> {
        self.submit(Command::Tick { at }).map(|(_, out)| out)
    }

    /// Applies, journals and routes one command.
    pub fn submit(&mut self, cmd: Command) -> Result<(Value, Vec<Outbound>)> {
        if let Some(why) = &self.halted {
            return Err(Error::StorageFailure(why.clone()));
        }
        let applied = self.platform.apply(&cmd)?;
        let rec = LogRecord {
            position: self.position + 1,
            at: self.platform.now(),
            event: cmd,
        };
        if let Err(e) = self.journal.append(&rec, self.platform.state()) {
            let why = format!("journal append failed: {e}");
            self.halted = Some(why.clone());
            return Err(Error::StorageFailure(why));
        }
        self.position = rec.position;
        let out = self.route(&applied.notices);
        Ok((applied.reply, out))
    }

    fn frame(&mut self, conn: ConnId, kind: &str, payload: Value, in_reply_to: Option<u64>) -> Option<String> {
        let c = self.conns.get_mut(&conn)?;
        c.out_seq += 1;
        Some(
            Envelope {
                kind: kind.to_owned(),
                seq: c.out_seq,
                payload,
                in_reply_to,
            }
            .to_line(),
        )
    }

    fn push_to(&mut self, user: &UserId, kind: &str, payload: &Value, out: &mut Vec<Outbound>) {
        let conns: Vec<ConnId> = self.by_user.get(user).into_iter().flatten().copied().collect();
        for conn in conns {
            if let Some(line) = self.frame(conn, kind, payload.clone(), None) {
                out.push(Outbound { conn, line, close: false });
            }
        }
    }

    fn route(&mut self, notices: &[Notice]) -> Vec<Outbound> {
        let mut out = Vec::new();
        for n in notices {
            let mut v = serde_json::to_value(&n.push).expect("pushes serialize");
            let payload = v.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
            self.push_to(&n.to, n.push.type_name(), &payload, &mut out);
        }
        out
    }

    fn error_frame(&mut self, conn: ConnId, e: &Error, in_reply_to: Option<u64>, close: bool) -> Outbound {
        let line = self
            .frame(conn, "error", json!(ErrorBody::from(e)), in_reply_to)
            .unwrap_or_default();
        Outbound { conn, line, close }
    }

    /// Handles one inbound line from `conn`.
    pub fn handle_line(&mut self, conn: ConnId, line: &str) -> Vec<Outbound> {
        if !self.conns.contains_key(&conn) {
            return Vec::new();
        }
        let env = match Envelope::parse(line) {
            Ok(env) => env,
            Err(e) => return vec![self.error_frame(conn, &e, None, true)],
        };
        let c = self.conns.get_mut(&conn).expect("checked");
        if c.last_seq.is_some_and(|last| env.seq <= last) {
            let e = Error::ProtocolError(format!("seq {} does not increase", env.seq));
            return vec![self.error_frame(conn, &e, Some(env.seq), true)];
        }
        c.last_seq = Some(env.seq);
        let req = match Request::decode(&env) {
            Ok(r) => r,
            Err(e) => return vec![self.error_frame(conn, &e, Some(env.seq), false)],
        };
        let authed = self.user_of(conn).cloned();
        let result = match (authed, req) {
            (None, Request::Auth(body)) => self.auth(conn, &body.user_id, &body.token),
            (None, Request::Register(body)) => self.register(conn, *body),
            (None, _) => {
                let e = Error::ProtocolError("authenticate first".into());
                return vec![self.error_frame(conn, &e, Some(env.seq), true)];
            }
            (Some(_), Request::Auth(_) | Request::Register(_)) => {
                Err(Error::ProtocolError("already authenticated".into()))
            }
            (Some(user), req) => self.dispatch(&user, req),
        };
        match result {
            Ok((payload, mut pushes)) => {
                let mut out = Vec::with_capacity(pushes.len() + 1);
                if let Some(line) = self.frame(conn, &env.kind, payload, Some(env.seq)) {
                    out.push(Outbound { conn, line, close: false });
                }
                out.append(&mut pushes);
                out
            }
            Err(e) => {
                let close = e == Error::AuthFailed;
                vec![self.error_frame(conn, &e, Some(env.seq), close)]
            }
        }
    }

    fn attach(&mut self, conn: ConnId, user: &UserId) {
        if let Some(c) = self.conns.get_mut(&conn) {
            c.user = Some(user.clone());
        }
        self.by_user.entry(user.clone()).or_default().insert(conn);
    }

    fn auth(&mut self, conn: ConnId, user: &UserId, token: &str) -> Result<(Value, Vec<Outbound>)> {
        let ok = self
            .platform
            .state()
            .secret_hash(user)
            .is_some_and(|h| h == hash_secret(token));
        if !ok {
            return Err(Error::AuthFailed);
        }
        self.attach(conn, user);
        Ok((json!(self.platform.sync(user)?), Vec::new()))
    }

    fn register(&mut self, conn: ConnId, b: super::protocol::RegisterBody) -> Result<(Value, Vec<Outbound>)> {
        let profile = UserProfile {
            display_name: b.display_name.unwrap_or_else(|| b.user_id.to_string()),
            user_id: b.user_id.clone(),
            native_language: b.native_language,
            country: b.country,
            gender: b.gender,
            age: b.age,
            levels: b.levels,
        };
        let res = self.submit(Command::Register {
            profile,
            secret_hash: hash_secret(&b.secret),
            referral: b.referral,
        })?;
        self.attach(conn, &b.user_id);
        Ok(res)
    }

    fn dispatch(&mut self, user: &UserId, req: Request) -> Result<(Value, Vec<Outbound>)> {
        let user = user.clone();
        let cmd = match req {
            Request::Register(_) | Request::Auth(_) => unreachable!("handled by caller"),
            Request::SetPresence(status) => Command::SetPresence { user, status },
            Request::Multicall { recipients, deck_id } => Command::Multicall {
                user,
                recipients,
                deck_id,
            },
            Request::Accept(leg_id) => Command::Accept { user, leg_id },
            Request::ConfirmReady(pending_id) => Command::ConfirmReady { user, pending_id },
            Request::Cancel(target) => Command::Cancel { user, target },
            Request::AdvanceSlide { session_id, direction } => Command::AdvanceSlide {
                user,
                session_id,
                direction,
            },
            Request::Hint(session_id) => Command::Hint { user, session_id },
            Request::Chat { session_id, body } => Command::Chat { user, session_id, body },
            Request::EndLesson(session_id) => Command::EndLesson { user, session_id },
            Request::Rate { session_id, stars } => Command::Rate {
                user,
                session_id,
                stars,
            },
            Request::Share(kind) => Command::Share { user, kind },
            Request::InviteRedeem(token) => Command::InviteRedeem { user, token },
            Request::ControllerAssign(controller) => Command::ControllerAssign { user, controller },
            Request::ControllerDecide {
                student,
                set_id,
                decision,
            } => Command::ControllerDecide {
                user,
                student,
                set_id,
                decision,
            },
            Request::Search(filter) => return Ok((json!(self.platform.search(&user, &filter)?), Vec::new())),
            Request::MissedList => return Ok((json!(self.platform.missed_list(&user)?), Vec::new())),
            Request::Balance => {
                return Ok((json!({ "balance_s": self.platform.balance(&user)? }), Vec::new()));
            }
            Request::Leaderboard(b) => {
                let month = b.month.as_deref().map(str::parse::<Month>).transpose()?;
                let rows = self.platform.leaderboard(month, b.limit.unwrap_or(20).min(1000));
                return Ok((json!(rows), Vec::new()));
            }
            Request::Decks => return Ok((json!(self.platform.decks(&user)?), Vec::new())),
            Request::Sync => return Ok((json!(self.platform.sync(&user)?), Vec::new())),
            Request::Signal(s) => {
                self.platform.check_signal(&user, &s.to, s.reference)?;
                let payload = json!({ "from": user, "ref": s.reference, "body": s.body });
                let mut out = Vec::new();
                self.push_to(&s.to, "signal", &payload, &mut out);
                return Ok((json!({}), out));
            }
        };
        self.submit(cmd)
    }
}
