//! Server pushes produced by state transitions. Each variant serializes to a
//! `{ "type": ..., "payload": ... }` pair that the gateway wraps in an
//! envelope.

use serde::{Deserialize, Serialize};

use crate::connector::{CallLeg, PendingView};
use crate::content::{Progress, Role, RoleView};
use crate::engage::{Accolade, EndEffects};
use crate::ids::{DeckId, PendingId, SessionId, UserId};
use crate::session::{ChatMessage, SessionSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelReason {
    CancelledByCaller,
    CancelledByRecipient,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: SessionId,
    pub role: Role,
    pub teacher_id: UserId,
    pub student_id: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_id: Option<UserId>,
    pub deck_id: DeckId,
    pub slide_count: u32,
    pub cursor: u32,
    pub tick_count: u64,
    pub student_remaining_s: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Push {
    CallIncoming(CallLeg),
    CallHeld(CallLeg),
    CallWithdrawn(CallLeg),
    CallMissed(CallLeg),
    CallDeclined(CallLeg),
    PendingStarted(PendingView),
    PendingConfirmed(PendingView),
    PendingCancelled {
        pending_id: PendingId,
        reason: CancelReason,
    },
    SessionStarted(SessionInfo),
    SlideUpdate {
        session_id: SessionId,
        cursor: u32,
        at_boundary: bool,
        progress: Progress,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        view: Option<RoleView>,
    },
    HintUpdate {
        session_id: SessionId,
        view: RoleView,
    },
    ChatMsg {
        session_id: SessionId,
        message: ChatMessage,
    },
    Tick {
        session_id: SessionId,
        tick_count: u64,
        student_remaining_s: i64,
    },
    SessionEnded {
        summary: SessionSummary,
        missed: Vec<CallLeg>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        accolades: Vec<Accolade>,
    },
    RatePrompt {
        session_id: SessionId,
        ratee: UserId,
    },
    Accolade(Accolade),
    Unlocked {
        sets: Vec<crate::ids::SetId>,
    },
}

impl Push {
    pub fn type_name(&self) -> &'static str {
        match self {
            Push::CallIncoming(_) => "call_incoming",
            Push::CallHeld(_) => "call_held",
            Push::CallWithdrawn(_) => "call_withdrawn",
            Push::CallMissed(_) => "call_missed",
            Push::CallDeclined(_) => "call_declined",
            Push::PendingStarted(_) => "pending_started",
            Push::PendingConfirmed(_) => "pending_confirmed",
            Push::PendingCancelled { .. } => "pending_cancelled",
            Push::SessionStarted(_) => "session_started",
            Push::SlideUpdate { .. } => "slide_update",
            Push::HintUpdate { .. } => "hint_update",
            Push::ChatMsg { .. } => "chat_msg",
            Push::Tick { .. } => "tick",
            Push::SessionEnded { .. } => "session_ended",
            Push::RatePrompt { .. } => "rate_prompt",
            Push::Accolade(_) => "accolade",
            Push::Unlocked { .. } => "unlocked",
        }
    }
}

/// A push addressed to every connection of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notice {
    pub to: UserId,
    pub push: Push,
}

impl Notice {
    pub fn new(to: &UserId, push: Push) -> Self {
        Notice { to: to.clone(), push }
    }
}

pub(crate) fn effects_notices(effects: &EndEffects, student: &UserId, out: &mut Vec<Notice>) {
    if !effects.unlocked.is_empty() {
        out.push(Notice::new(
            student,
            Push::Unlocked {
                sets: effects.unlocked.clone(),
            },
        ));
    }
}
