//! Line-delimited JSON envelopes and the client message catalog.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::connector::{CancelTarget, PresenceStatus, SearchFilter};
use crate::content::LangCode;
use crate::engage::{ControllerDecision, ShareKind};
use crate::error::{Error, Result};
use crate::ids::{DeckId, GroupId, LegId, PendingId, SessionId, SetId, UserId};
use crate::platform::SignalRef;
use crate::session::Direction;

/// Longest accepted line, in bytes.
pub const MAX_LINE: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}

impl Envelope {
    pub fn parse(line: &str) -> Result<Envelope> {
        if line.len() > MAX_LINE {
            return Err(Error::ProtocolError("line too long".into()));
        }
        serde_json::from_str(line).map_err(|e| Error::ProtocolError(format!("malformed envelope: {e}")))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            code: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RegisterBody {
    pub user_id: UserId,
    pub secret: String,
    #[serde(default)]
    pub display_name: Option<String>,
    pub native_language: LangCode,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub levels: Vec<u32>,
    #[serde(default)]
    pub referral: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AuthBody {
    pub user_id: UserId,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelBody {
    #[serde(default)]
    pub group_id: Option<GroupId>,
    #[serde(default)]
    pub leg_id: Option<LegId>,
    #[serde(default)]
    pub pending_id: Option<PendingId>,
}

impl CancelBody {
    fn target(&self) -> Result<CancelTarget> {
        match (self.group_id, self.leg_id, self.pending_id) {
            (Some(g), None, None) => Ok(CancelTarget::Group(g)),
            (None, Some(l), None) => Ok(CancelTarget::Leg(l)),
            (None, None, Some(p)) => Ok(CancelTarget::Pending(p)),
            _ => Err(Error::ProtocolError(
                "cancel needs exactly one of group_id, leg_id, pending_id".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SignalBody {
    pub to: UserId,
    #[serde(rename = "ref")]
    pub reference: SignalRef,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LeaderboardBody {
    #[serde(default)]
    pub month: Option<String>,
    #[serde(default)]
    pub limit: Option<usize>,
}

/// A decoded client message.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Register(Box<RegisterBody>),
    Auth(AuthBody),
    SetPresence(PresenceStatus),
    Search(SearchFilter),
    Multicall { recipients: Vec<UserId>, deck_id: DeckId },
    Accept(LegId),
    ConfirmReady(PendingId),
    Cancel(CancelTarget),
    MissedList,
    AdvanceSlide { session_id: SessionId, direction: Direction },
    Hint(SessionId),
    Chat { session_id: SessionId, body: String },
    EndLesson(SessionId),
    Rate { session_id: SessionId, stars: u8 },
    Signal(SignalBody),
    Balance,
    Leaderboard(LeaderboardBody),
    Decks,
    Share(ShareKind),
    InviteRedeem(String),
    Sync,
    ControllerAssign(UserId),
    ControllerDecide { student: UserId, set_id: SetId, decision: ControllerDecision },
}

/// Every client message type the server understands.
pub const MESSAGE_TYPES: &[&str] = &[
    "register",
    "auth",
    "set_presence",
    "search",
    "multicall",
    "accept",
    "confirm_ready",
    "cancel",
    "missed_list",
    "advance_slide",
    "hint",
    "chat",
    "end_lesson",
    "rate",
    "signal",
    "balance",
    "leaderboard",
    "decks",
    "share",
    "invite_redeem",
    "sync",
    "controller_assign",
    "controller_decide",
];

fn body<T: serde::de::DeserializeOwned>(kind: &str, payload: &Value) -> Result<T> {
    let v = if payload.is_null() { Value::Object(Default::default()) } else { payload.clone() };
    serde_json::from_value(v).map_err(|e| Error::ProtocolError(format!("bad {kind} payload: {e}")))
}

#[derive(Deserialize)]
struct StatusBody {
    status: PresenceStatus,
}
#[derive(Deserialize)]
struct MulticallBody {
    recipients: Vec<UserId>,
    deck_id: DeckId,
}
#[derive(Deserialize)]
struct LegBody {
    leg_id: LegId,
}
#[derive(Deserialize)]
struct PendingBody {
    pending_id: PendingId,
}
#[derive(Deserialize)]
struct AdvanceBody {
    session_id: SessionId,
    direction: Direction,
}
#[derive(Deserialize)]
struct SessionBody {
    session_id: SessionId,
}
#[derive(Deserialize)]
struct ChatBody {
    session_id: SessionId,
    body: String,
}
#[derive(Deserialize)]
struct RateBody {
    session_id: SessionId,
    stars: u8,
}
#[derive(Deserialize)]
struct ShareBody {
    kind: ShareKind,
}
#[derive(Deserialize)]
struct TokenBody {
    token: String,
}
#[derive(Deserialize)]
struct AssignBody {
    controller: UserId,
}
#[derive(Deserialize)]
struct DecideBody {
    student: UserId,
    set_id: SetId,
    decision: ControllerDecision,
}

impl Request {
    pub fn decode(env: &Envelope) -> Result<Request> {
        let k = env.kind.as_str();
        let p = &env.payload;
        Ok(match k {
            "register" => Request::Register(Box::new(body(k, p)?)),
            "auth" => Request::Auth(body(k, p)?),
            "set_presence" => Request::SetPresence(body::<StatusBody>(k, p)?.status),
            "search" => Request::Search(body(k, p)?),
            "multicall" => {
                let b: MulticallBody = body(k, p)?;
                Request::Multicall {
                    recipients: b.recipients,
                    deck_id: b.deck_id,
                }
            }
            "accept" => Request::Accept(body::<LegBody>(k, p)?.leg_id),
            "confirm_ready" => Request::ConfirmReady(body::<PendingBody>(k, p)?.pending_id),
            "cancel" => Request::Cancel(body::<CancelBody>(k, p)?.target()?),
            "missed_list" => Request::MissedList,
            "advance_slide" => {
                let b: AdvanceBody = body(k, p)?;
                Request::AdvanceSlide {
                    session_id: b.session_id,
                    direction: b.direction,
                }
            }
            "hint" => Request::Hint(body::<SessionBody>(k, p)?.session_id),
            "chat" => {
                let b: ChatBody = body(k, p)?;
                Request::Chat {
                    session_id: b.session_id,
                    body: b.body,
                }
            }
            "end_lesson" => Request::EndLesson(body::<SessionBody>(k, p)?.session_id),
            "rate" => {
                let b: RateBody = body(k, p)?;
                Request::Rate {
                    session_id: b.session_id,
                    stars: b.stars,
                }
            }
            "signal" => Request::Signal(body(k, p)?),
            "balance" => Request::Balance,
            "leaderboard" => Request::Leaderboard(body(k, p)?),
            "decks" => Request::Decks,
            "share" => Request::Share(body::<ShareBody>(k, p)?.kind),
            "invite_redeem" => Request::InviteRedeem(body::<TokenBody>(k, p)?.token),
            "sync" => Request::Sync,
            "controller_assign" => Request::ControllerAssign(body::<AssignBody>(k, p)?.controller),
            "controller_decide" => {
                let b: DecideBody = body(k, p)?;
                Request::ControllerDecide {
                    student: b.student,
                    set_id: b.set_id,
                    decision: b.decision,
                }
            }
            other => return Err(Error::ProtocolError(format!("unknown message type {other:?}"))),
        })
    }
}
