//! A scripted client. Bots know only what the wire tells them: replies to
//! their own requests and the pushes addressed to them.

use std::collections::{BTreeMap, VecDeque};

use serde_json::{json, Value};

use super::scenario::{Action, BotSpec, CancelWhat};
use crate::connector::{CallLeg, PendingSession};
use crate::gateway::protocol::Envelope;
use crate::gateway::ConnId;
use crate::ids::{GroupId, LegId, PendingId, SessionId, UserId};
use crate::notify::SessionInfo;
use crate::platform::SyncView;
use crate::session::SessionSummary;

/// What a bot has learned from the wire.
#[derive(Debug, Clone, Default)]
pub struct BotView {
    pub incoming: BTreeMap<LegId, CallLeg>,
    pub missed: BTreeMap<LegId, CallLeg>,
    pub group: Option<GroupId>,
    pub pending: Option<PendingSession>,
    pub session: Option<SessionInfo>,
    pub last_summary: Option<SessionSummary>,
    pub tokens: Vec<String>,
    pub pushes: u64,
}

impl BotView {
    fn reset_from(&mut self, sync: SyncView) {
        self.incoming = sync.incoming.into_iter().map(|l| (l.leg_id, l)).collect();
        self.missed = sync.missed.into_iter().map(|l| (l.leg_id, l)).collect();
        self.group = sync.outgoing.last().map(|l| l.group_id);
        self.pending = sync.pending;
        self.session = sync.session.map(|s| s.info);
    }

    /// The other party of the current pending or session.
    pub fn partner(&self, me: &UserId) -> Option<UserId> {
        if let Some(s) = &self.session {
            return Some(if s.teacher_id == *me {
                s.student_id.clone()
            } else {
                s.teacher_id.clone()
            });
        }
        let p = self.pending.as_ref()?;
        Some(if p.caller_id == *me {
            p.recipient_id.clone()
        } else {
            p.caller_id.clone()
        })
    }
}

#[derive(Debug)]
pub struct Bot {
    pub spec: BotSpec,
    pub conn: Option<ConnId>,
    pub seq: u64,
    pub script: VecDeque<Action>,
    /// Simulated second (relative to the run start) the next action may run.
    pub ready_at: u64,
    pub view: BotView,
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> Option<T> {
    serde_json::from_value(v.clone()).ok()
}

impl Bot {
    pub fn new(spec: BotSpec) -> Self {
        let script = spec.script.iter().cloned().collect();
        Bot {
            spec,
            conn: None,
            seq: 0,
            script,
            ready_at: 0,
            view: BotView::default(),
        }
    }

    pub fn id(&self) -> &UserId {
        &self.spec.id
    }

    pub fn secret(&self) -> String {
        format!("pw-{}", self.spec.id)
    }

    pub fn register_payload(&self, referral: Option<&str>) -> Value {
        let s = &self.spec;
        let mut v = json!({
            "user_id": s.id,
            "secret": self.secret(),
            "native_language": s.native_language,
            "levels": s.levels,
        });
        for (k, val) in [
            ("display_name", s.display_name.as_ref().map(|x| json!(x))),
            ("country", s.country.as_ref().map(|x| json!(x))),
            ("gender", s.gender.as_ref().map(|x| json!(x))),
            ("age", s.age.map(|x| json!(x))),
            ("referral", referral.map(|x| json!(x))),
        ] {
            if let Some(val) = val {
                v[k] = val;
            }
        }
        v
    }

    pub fn auth_payload(&self) -> Value {
        json!({ "user_id": self.spec.id, "token": self.secret() })
    }

    /// The request for `action`, given what the bot currently knows. Ids the
    /// bot does not have are sent as 0, which never names anything, so the
    /// server answers with an error instead of the bot skipping the step.
    pub fn request(&self, action: &Action) -> Option<(&'static str, Value)> {
        let v = &self.view;
        let session = v.session.as_ref().map_or(0, |s| s.session_id.0);
        Some(match action {
            Action::Wait { .. } | Action::Drop | Action::Raw { .. } | Action::Redeem { .. } => return None,
            Action::Presence { status } => ("set_presence", json!({ "status": status })),
            Action::Call { to, deck } => ("multicall", json!({ "recipients": to, "deck_id": deck })),
            Action::Accept { from, missed } => {
                let leg = if *missed {
                    v.missed
                        .values()
                        .find(|l| from.as_ref().is_none_or(|f| l.caller_id == *f))
                        .map(|l| l.leg_id)
                } else {
                    v.incoming
                        .values()
                        .rev()
                        .find(|l| from.as_ref().is_none_or(|f| l.caller_id == *f))
                        .map(|l| l.leg_id)
                };
                ("accept", json!({ "leg_id": leg.map_or(0, |l| l.0) }))
            }
            Action::Confirm => (
                "confirm_ready",
                json!({ "pending_id": v.pending.as_ref().map_or(0, |p| p.pending_id.0) }),
            ),
            Action::Advance { back, .. } => (
                "advance_slide",
                json!({ "session_id": session, "direction": Action::direction(*back) }),
            ),
            Action::Hint => ("hint", json!({ "session_id": session })),
            Action::Chat { text } => ("chat", json!({ "session_id": session, "body": text })),
            Action::End => ("end_lesson", json!({ "session_id": session })),
            Action::Rate { stars } => {
                let sid = v.last_summary.as_ref().map_or(0, |s| s.session_id.0);
                ("rate", json!({ "session_id": sid, "stars": stars }))
            }
            Action::Cancel { what } => {
                let body = match what {
                    CancelWhat::Group => json!({ "group_id": v.group.map_or(0, |g| g.0) }),
                    CancelWhat::Pending => {
                        json!({ "pending_id": v.pending.as_ref().map_or(0, |p| p.pending_id.0) })
                    }
                    CancelWhat::Incoming => {
                        json!({ "leg_id": v.incoming.keys().next_back().map_or(0, |l| l.0) })
                    }
                    CancelWhat::Missed => json!({ "leg_id": v.missed.keys().next().map_or(0, |l| l.0) }),
                };
                ("cancel", body)
            }
            Action::Invite => ("share", json!({ "kind": "invite" })),
            Action::Share => ("share", json!({ "kind": "lesson_result" })),
            Action::Search { language, country } => {
                let mut f = json!({ "taught_language": language });
                if let Some(c) = country {
                    f["country"] = json!(c);
                }
                ("search", f)
            }
            Action::Signal { body } => {
                let to = v.partner(self.id()).unwrap_or_else(|| self.id().clone());
                let reference = match (&v.session, &v.pending) {
                    (Some(s), _) => json!({ "kind": "session", "id": s.session_id }),
                    (None, Some(p)) => json!({ "kind": "pending", "id": p.pending_id }),
                    (None, None) => json!({ "kind": "session", "id": 0 }),
                };
                ("signal", json!({ "to": to, "ref": reference, "body": body }))
            }
            Action::Missed => ("missed_list", json!({})),
            Action::Balance => ("balance", json!({})),
            Action::Decks => ("decks", json!({})),
            Action::Leaderboard => ("leaderboard", json!({})),
            Action::Sync => ("sync", json!({})),
            Action::AssignController { controller } => ("controller_assign", json!({ "controller": controller })),
            Action::Decide {
                student,
                set,
                decision,
            } => (
                "controller_decide",
                json!({ "student": student, "set_id": set, "decision": decision }),
            ),
        })
    }

    /// Folds one frame addressed to this bot into its view.
    pub fn observe(&mut self, env: &Envelope) {
        let me = self.spec.id.clone();
        let p = &env.payload;
        if env.in_reply_to.is_some() {
            match env.kind.as_str() {
                "auth" | "sync" => {
                    if let Some(sync) = parse::<SyncView>(p) {
                        self.view.reset_from(sync);
                    }
                }
                "multicall" => self.view.group = parse::<GroupId>(&p["group"]["group_id"]),
                "accept" => self.view.pending = parse(p),
                "share" => {
                    if let Some(t) = p["token"].as_str() {
                        self.view.tokens.push(t.to_owned());
                    }
                }
                _ => {}
            }
            return;
        }
        self.view.pushes += 1;
        match env.kind.as_str() {
            "call_incoming" => {
                if let Some(leg) = parse::<CallLeg>(p) {
                    if leg.recipient_id == me {
                        self.view.missed.remove(&leg.leg_id);
                        self.view.incoming.insert(leg.leg_id, leg);
                    }
                }
            }
            "call_held" | "call_withdrawn" | "call_declined" => {
                if let Some(leg) = parse::<CallLeg>(p) {
                    self.view.incoming.remove(&leg.leg_id);
                    self.view.missed.remove(&leg.leg_id);
                }
            }
            "call_missed" => {
                if let Some(leg) = parse::<CallLeg>(p) {
                    self.view.incoming.remove(&leg.leg_id);
                    if leg.recipient_id == me {
                        self.view.missed.insert(leg.leg_id, leg);
                    }
                }
            }
            "pending_started" | "pending_confirmed" => {
                if let Some(pending) = parse::<PendingSession>(p) {
                    self.view.incoming.remove(&pending.leg_id);
                    self.view.missed.remove(&pending.leg_id);
                    self.view.pending = Some(pending);
                }
            }
            "pending_cancelled" => {
                let pid = parse::<PendingId>(&p["pending_id"]);
                if self.view.pending.as_ref().map(|x| x.pending_id) == pid {
                    self.view.pending = None;
                }
            }
            "session_started" => {
                if let Some(info) = parse::<SessionInfo>(p) {
                    self.view.pending = None;
                    self.view.session = Some(info);
                }
            }
            "session_ended" => {
                if let Some(summary) = parse::<SessionSummary>(&p["summary"]) {
                    if self.view.session.as_ref().map(|s| s.session_id) == Some(summary.session_id) {
                        self.view.session = None;
                    }
                    if let Some(missed) = parse::<Vec<CallLeg>>(&p["missed"]) {
                        self.view.missed = missed.into_iter().map(|l| (l.leg_id, l)).collect();
                    }
                    self.view.last_summary = Some(summary);
                }
            }
            _ => {}
        }
    }

    pub fn in_session(&self) -> Option<SessionId> {
        self.view.session.as_ref().map(|s| s.session_id)
    }
}
