use thiserror::Error;

use crate::ids::{DeckId, LegId, SessionId, UserId};

/// Errors returned by platform operations. Every variant maps to a stable
/// wire code via [`Error::code`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("user {0} already registered")]
    UserExists(UserId),
    #[error("unknown deck {0}")]
    UnknownDeck(DeckId),
    #[error("deck {0} belongs to a lesson set that is still locked")]
    DeckLocked(DeckId),
    #[error("user {0} is busy")]
    Busy(UserId),
    #[error("user {0} has no learning balance left")]
    InsufficientBalance(UserId),
    #[error("recipient list is empty")]
    EmptyRecipientList,
    #[error("invalid recipient {0}: {1}")]
    InvalidRecipient(UserId, &'static str),
    #[error("invalid search filter: {0}")]
    InvalidFilter(&'static str),
    #[error("leg {0} is not ringing")]
    LegNotRinging(LegId),
    #[error("missed call {0} can no longer be connected")]
    StaleCall(LegId),
    #[error("unknown pending session")]
    UnknownPending,
    #[error("handshake deadline passed")]
    Expired,
    #[error("not a participant")]
    NotParticipant,
    #[error("unknown cancel target")]
    UnknownTarget,
    #[error("only the teacher or controller may switch slides")]
    NotTeacher,
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("no such session or pending session")]
    NoSuchSession,
    #[error("session has ended")]
    SessionEnded,
    #[error("no slide is showing yet")]
    NoCurrentSlide,
    #[error("chat body is empty")]
    EmptyBody,
    #[error("chat body exceeds {0} characters")]
    BodyTooLong(usize),
    #[error("language {0} is not configured")]
    UnsupportedLanguage(String),
    #[error("slide ordinal {0} out of range 1..={1}")]
    OrdinalOutOfRange(u32, u32),
    #[error("session already settled")]
    AlreadySettled,
    #[error("invite bonus already granted")]
    DuplicateBonus,
    #[error("signup grant already issued")]
    DuplicateGrant,
    #[error("rating already recorded")]
    DuplicateRating,
    #[error("value out of range")]
    OutOfRange,
    #[error("referral token is unknown")]
    InvalidToken,
    #[error("referral token already redeemed")]
    TokenRedeemed,
    #[error("controller role is disabled")]
    ControllerDisabled,
    #[error("not the controller for this student")]
    NotController,
    #[error("authentication failed")]
    AuthFailed,
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl Error {
    /// Stable snake_case code sent in error frames.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownUser(_) => "unknown_user",
            Error::UserExists(_) => "user_exists",
            Error::UnknownDeck(_) => "unknown_deck",
            Error::DeckLocked(_) => "deck_locked",
            Error::Busy(_) => "busy",
            Error::InsufficientBalance(_) => "insufficient_balance",
            Error::EmptyRecipientList => "empty_recipient_list",
            Error::InvalidRecipient(..) => "invalid_recipient",
            Error::InvalidFilter(_) => "invalid_filter",
            Error::LegNotRinging(_) => "leg_not_ringing",
            Error::StaleCall(_) => "stale_call",
            Error::UnknownPending => "unknown_pending",
            Error::Expired => "expired",
            Error::NotParticipant => "not_participant",
            Error::UnknownTarget => "unknown_target",
            Error::NotTeacher => "not_teacher",
            Error::UnknownSession(_) => "unknown_session",
            Error::NoSuchSession => "no_such_session",
            Error::SessionEnded => "session_ended",
            Error::NoCurrentSlide => "no_current_slide",
            Error::EmptyBody => "empty_body",
            Error::BodyTooLong(_) => "body_too_long",
            Error::UnsupportedLanguage(_) => "unsupported_language",
            Error::OrdinalOutOfRange(..) => "ordinal_out_of_range",
            Error::AlreadySettled => "already_settled",
            Error::DuplicateBonus => "duplicate_bonus",
            Error::DuplicateGrant => "duplicate_grant",
            Error::DuplicateRating => "duplicate_rating",
            Error::OutOfRange => "out_of_range",
            Error::InvalidToken => "invalid_token",
            Error::TokenRedeemed => "token_redeemed",
            Error::ControllerDisabled => "controller_disabled",
            Error::NotController => "not_controller",
            Error::AuthFailed => "auth_failed",
            Error::ProtocolError(_) => "protocol_error",
            Error::StorageFailure(_) => "storage_failure",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
