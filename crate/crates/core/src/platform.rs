//! The replicated state machine. Every state change enters as a [`Command`];
//! `apply` validates first and mutates only on success, so the log holds
//! exactly the commands that applied cleanly and replaying it rebuilds the
//! same [`State`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::connector::{
    search_partners, CallLeg, CancelTarget, Candidate, Confirm, Engagement, LegTransition, PendingSession,
    PresenceStatus, SearchFilter, UserProfile,
};
use crate::connector::Connector;
use crate::content::{Catalog, LangCode, Role, SlideDeck};
use crate::engage::{
    ControllerDecision, DeckProgress, Engage, LeaderboardRow, Month, SessionRecord, ShareKind,
};
use crate::error::{Error, Result};
use crate::ids::{DeckId, LegId, PendingId, SessionId, SetId, Timestamp, UserId};
use crate::notify::{effects_notices, Notice, Push, SessionInfo};
use crate::session::{ChatMessage, Direction, EndReason, LessonSession, LessonStart, Sessions};
use crate::timebank::{Settlement, Timebank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    Register {
        profile: UserProfile,
        secret_hash: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        referral: Option<String>,
    },
    SetPresence {
        user: UserId,
        status: PresenceStatus,
    },
    Multicall {
        user: UserId,
        recipients: Vec<UserId>,
        deck_id: DeckId,
    },
    Accept {
        user: UserId,
        leg_id: LegId,
    },
    ConfirmReady {
        user: UserId,
        pending_id: PendingId,
    },
    Cancel {
        user: UserId,
        target: CancelTarget,
    },
    AdvanceSlide {
        user: UserId,
        session_id: SessionId,
        direction: Direction,
    },
    Hint {
        user: UserId,
        session_id: SessionId,
    },
    Chat {
        user: UserId,
        session_id: SessionId,
        body: String,
    },
    EndLesson {
        user: UserId,
        session_id: SessionId,
    },
    Rate {
        user: UserId,
        session_id: SessionId,
        stars: u8,
    },
    Share {
        user: UserId,
        kind: ShareKind,
    },
    InviteRedeem {
        user: UserId,
        token: String,
    },
    /// A student names the controller who decides their set progression.
    ControllerAssign {
        user: UserId,
        controller: UserId,
    },
    ControllerDecide {
        user: UserId,
        student: UserId,
        set_id: SetId,
        decision: ControllerDecision,
    },
    /// One second of clock time. The only way time moves.
    Tick {
        at: Timestamp,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Register { .. } => "register",
            Command::SetPresence { .. } => "set_presence",
            Command::Multicall { .. } => "multicall",
            Command::Accept { .. } => "accept",
            Command::ConfirmReady { .. } => "confirm_ready",
            Command::Cancel { .. } => "cancel",
            Command::AdvanceSlide { .. } => "advance_slide",
            Command::Hint { .. } => "hint",
            Command::Chat { .. } => "chat",
            Command::EndLesson { .. } => "end_lesson",
            Command::Rate { .. } => "rate",
            Command::Share { .. } => "share",
            Command::InviteRedeem { .. } => "invite_redeem",
            Command::ControllerAssign { .. } => "controller_assign",
            Command::ControllerDecide { .. } => "controller_decide",
            Command::Tick { .. } => "tick",
        }
    }
}

/// Result of a successful command: the reply body for the issuer and the
/// pushes it caused.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub reply: Value,
    pub notices: Vec<Notice>,
}

/// Replicated state. Config and the deck catalog are inputs, not state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub now: Timestamp,
    profiles: BTreeMap<UserId, UserProfile>,
    secrets: BTreeMap<UserId, String>,
    pub connector: Connector,
    pub sessions: Sessions,
    pub timebank: Timebank,
    pub engage: Engage,
}

impl State {
    pub fn profiles(&self) -> &BTreeMap<UserId, UserProfile> {
        &self.profiles
    }

    pub fn profile(&self, user: &UserId) -> Result<&UserProfile> {
        self.profiles.get(user).ok_or_else(|| Error::UnknownUser(user.clone()))
    }

    pub fn secret_hash(&self, user: &UserId) -> Option<&str> {
        self.secrets.get(user).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeckInfo {
    pub deck_id: DeckId,
    pub title: String,
    pub taught_language: LangCode,
    pub level: u32,
    pub set_id: SetId,
    pub set_ordinal: u32,
    pub slide_count: u32,
    pub unlocked: bool,
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<DeckProgress>,
}

/// A user's full current picture, for reconnecting clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncView {
    pub user_id: UserId,
    pub status: PresenceStatus,
    pub balance_s: i64,
    pub incoming: Vec<CallLeg>,
    pub outgoing: Vec<CallLeg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingSession>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<SessionSync>,
    pub missed: Vec<CallLeg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSync {
    pub info: SessionInfo,
    pub hint_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<crate::content::RoleView>,
    pub chat: Vec<ChatMessage>,
}

/// What a signal blob refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum SignalRef {
    Pending(PendingId),
    Session(SessionId),
}

#[derive(Debug, Clone)]
pub struct Platform {
    config: Config,
    catalog: Arc<Catalog>,
    state: State,
}

impl Platform {
    pub fn new(config: Config, catalog: Arc<Catalog>) -> Self {
        Platform {
            config,
            catalog,
            state: State::default(),
        }
    }

    pub fn from_state(config: Config, catalog: Arc<Catalog>, state: State) -> Self {
        Platform { config, catalog, state }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> Arc<Catalog> {
        Arc::clone(&self.catalog)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn now(&self) -> Timestamp {
        self.state.now
    }

    pub fn drain_trace(&mut self) -> Vec<LegTransition> {
        self.state.connector.drain_trace()
    }

    fn deck(&self, id: &DeckId) -> Result<&SlideDeck> {
        self.catalog.deck(id).ok_or_else(|| Error::UnknownDeck(id.clone()))
    }

    fn native(&self, user: &UserId) -> Result<&LangCode> {
        Ok(&self.state.profile(user)?.native_language)
    }

    /// (teacher, student) for a pair of parties on a deck. The teacher is the
    /// native speaker of the taught language.
    fn roles<'a>(&self, deck: &SlideDeck, caller: &'a UserId, recipient: &'a UserId) -> Result<(&'a UserId, &'a UserId)> {
        if *self.native(caller)? == deck.taught_language {
            Ok((caller, recipient))
        } else {
            Ok((recipient, caller))
        }
    }

    fn check_student(&self, student: &UserId, deck: &SlideDeck) -> Result<()> {
        if !self.state.timebank.can_start_learning(student)? {
            return Err(Error::InsufficientBalance(student.clone()));
        }
        if !self.state.engage.is_set_unlocked(&self.catalog, student, &deck.set_id) {
            return Err(Error::DeckLocked(deck.deck_id.clone()));
        }
        Ok(())
    }

    pub fn apply(&mut self, cmd: &Command) -> Result<Applied> {
        let now = self.state.now;
        let mut notices = Vec::new();
        let reply = match cmd {
            Command::Register {
                profile,
                secret_hash,
                referral,
            } => self.register(profile, secret_hash, referral.as_deref(), &mut notices)?,
            Command::SetPresence { user, status } => {
                let (p, out) = self.state.connector.set_presence(user, *status, now)?;
                notices.extend(out);
                json!(p)
            }
            Command::Multicall {
                user,
                recipients,
                deck_id,
            } => {
                let deck = self.deck(deck_id)?;
                self.state.connector.check_multicall(user, recipients)?;
                let caller_teaches = *self.native(user)? == deck.taught_language;
                for r in recipients {
                    let native = *self.native(r)? == deck.taught_language;
                    if caller_teaches && native {
                        return Err(Error::InvalidRecipient(r.clone(), "recipient already speaks the taught language"));
                    }
                    if !caller_teaches && !native {
                        return Err(Error::InvalidRecipient(r.clone(), "recipient is not a native speaker"));
                    }
                }
                if !caller_teaches {
                    self.check_student(user, deck)?;
                }
                let (group, out) = self.state.connector.initiate_multicall(user, recipients, deck_id, now)?;
                notices.extend(out);
                let legs: Vec<&CallLeg> = group.legs.iter().filter_map(|id| self.state.connector.leg(*id)).collect();
                json!({ "group": group, "legs": legs })
            }
            Command::Accept { user, leg_id } => {
                let leg = self
                    .state
                    .connector
                    .check_accept(user, *leg_id, now, self.config.missed_ttl_s)?;
                let deck = self.deck(&leg.deck_id)?;
                let (_, student) = self.roles(deck, &leg.caller_id, &leg.recipient_id)?;
                self.check_student(student, deck)?;
                let (pending, out) = self.state.connector.accept_call(
                    user,
                    *leg_id,
                    now,
                    self.config.handshake_timeout_s,
                    self.config.missed_ttl_s,
                )?;
                notices.extend(out);
                json!(pending)
            }
            Command::ConfirmReady { user, pending_id } => {
                let (confirm, out) = self.state.connector.confirm_ready(user, *pending_id)?;
                notices.extend(out);
                match confirm {
                    Confirm::Waiting(p) => json!({ "status": "waiting", "pending": p }),
                    Confirm::Ready(p) => {
                        let session_id = self.start_lesson(&p, &mut notices);
                        json!({ "status": "session_started", "session_id": session_id })
                    }
                }
            }
            Command::Cancel { user, target } => {
                notices.extend(self.state.connector.cancel(user, *target, now)?);
                json!({})
            }
            Command::AdvanceSlide {
                user,
                session_id,
                direction,
            } => {
                let mv = self.state.sessions.advance(user, *session_id, *direction)?;
                self.slide_notices(*session_id, mv.at_boundary, &mut notices);
                json!(mv)
            }
            Command::Hint { user, session_id } => {
                self.state.sessions.activate_hint(user, *session_id)?;
                let s = self.state.sessions.get(*session_id)?;
                if let Ok(deck) = self.deck(&s.deck_id) {
                    for p in &s.participants {
                        if let Ok(Some(view)) = s.view_for(deck, p) {
                            notices.push(Notice::new(
                                &p.user_id,
                                Push::HintUpdate {
                                    session_id: *session_id,
                                    view,
                                },
                            ));
                        }
                    }
                }
                json!({ "hint_active": true })
            }
            Command::Chat { user, session_id, body } => {
                let msg = self.state.sessions.send_chat(user, *session_id, body)?;
                for p in &self.state.sessions.get(*session_id)?.participants {
                    notices.push(Notice::new(
                        &p.user_id,
                        Push::ChatMsg {
                            session_id: *session_id,
                            message: msg.clone(),
                        },
                    ));
                }
                json!(msg)
            }
            Command::EndLesson { user, session_id } => {
                self.state.sessions.check_end(user, *session_id)?;
                json!(self.end_lesson(Some(user), *session_id, EndReason::Ended, &mut notices))
            }
            Command::Rate {
                user,
                session_id,
                stars,
            } => json!(self.state.engage.record_rating(user, *session_id, *stars, now)?),
            Command::Share { user, kind } => {
                self.state.profile(user)?;
                json!(self.state.engage.share_event(user, *kind, now))
            }
            Command::InviteRedeem { user, token } => {
                self.state.profile(user)?;
                self.redeem(user, token, &mut notices)?
            }
            Command::ControllerAssign { user, controller } => {
                if !self.config.controller_enabled {
                    return Err(Error::ControllerDisabled);
                }
                self.state.profile(user)?;
                self.state.profile(controller)?;
                if user == controller {
                    return Err(Error::NotController);
                }
                self.state.engage.assign_controller(controller, user);
                json!({ "student": user, "controller": controller })
            }
            Command::ControllerDecide {
                user,
                student,
                set_id,
                decision,
            } => {
                if !self.config.controller_enabled {
                    return Err(Error::ControllerDisabled);
                }
                let opened = self
                    .state
                    .engage
                    .controller_decide(&self.catalog, user, student, set_id, *decision)?;
                if !opened.is_empty() {
                    notices.push(Notice::new(student, Push::Unlocked { sets: opened.clone() }));
                }
                json!({
                    "opened": opened,
                    "unlock_state": self.state.engage.unlock_state(&self.catalog, student),
                })
            }
            Command::Tick { at } => {
                if *at <= now {
                    return Err(Error::OutOfRange);
                }
                self.tick(*at, &mut notices);
                json!({ "now": at })
            }
        };
        Ok(Applied { reply, notices })
    }

    fn register(
        &mut self,
        profile: &UserProfile,
        secret_hash: &str,
        referral: Option<&str>,
        notices: &mut Vec<Notice>,
    ) -> Result<Value> {
        let id = &profile.user_id;
        if id.as_str().trim().is_empty() || id.as_str().len() > 64 {
            return Err(Error::ProtocolError("user id must be 1 to 64 bytes".into()));
        }
        if self.state.profiles.contains_key(id) {
            return Err(Error::UserExists(id.clone()));
        }
        if !self.config.languages.contains(&profile.native_language) {
            return Err(Error::UnsupportedLanguage(profile.native_language.to_string()));
        }
        if let Some(token) = referral {
            self.state.engage.check_redeem(id, token)?;
        }
        let now = self.state.now;
        self.state.profiles.insert(id.clone(), profile.clone());
        self.state.secrets.insert(id.clone(), secret_hash.to_owned());
        self.state.connector.register(id, now);
        self.state
            .timebank
            .grant_signup(id, self.config.signup_grant_s, now)
            .expect("fresh user has no grant");
        if let Some(token) = referral {
            self.redeem(id, token, notices)?;
        }
        Ok(json!({
            "user_id": id,
            "balance_s": self.state.timebank.balance(id)?.seconds,
        }))
    }

    fn redeem(&mut self, invitee: &UserId, token: &str, notices: &mut Vec<Notice>) -> Result<Value> {
        let inviter = self.state.engage.check_redeem(invitee, token)?;
        self.state.timebank.check_invite_bonus(&inviter, invitee)?;
        let now = self.state.now;
        let accolades = self
            .state
            .engage
            .commit_redeem(invitee, token, &self.config.badges, now);
        let entry = self
            .state
            .timebank
            .grant_invite_bonus(&inviter, invitee, self.config.invite_bonus_s, now)
            .expect("bonus checked above");
        for a in accolades {
            notices.push(Notice::new(&a.user_id.clone(), Push::Accolade(a)));
        }
        Ok(json!({ "inviter": inviter, "bonus": entry }))
    }

    fn session_info(&self, s: &LessonSession, role: Role) -> SessionInfo {
        let balance = self.state.timebank.balance(&s.student_id).map(|b| b.seconds).unwrap_or(0);
        SessionInfo {
            session_id: s.session_id,
            role,
            teacher_id: s.teacher_id.clone(),
            student_id: s.student_id.clone(),
            controller_id: s.controller_id.clone(),
            deck_id: s.deck_id.clone(),
            slide_count: s.slide_count,
            cursor: s.cursor,
            tick_count: s.tick_count,
            student_remaining_s: balance - s.tick_count as i64,
        }
    }

    fn start_lesson(&mut self, p: &PendingSession, notices: &mut Vec<Notice>) -> SessionId {
        let now = self.state.now;
        let deck = Arc::clone(&self.catalog);
        let deck = deck.deck(&p.deck_id).expect("deck checked at accept");
        let (teacher, student) = self.roles(deck, &p.caller_id, &p.recipient_id).expect("parties registered");
        let controller = self
            .config
            .controller_enabled
            .then(|| self.state.engage.controller_of(student))
            .flatten()
            .filter(|c| *c != teacher && *c != student)
            .and_then(|c| Some((c.clone(), self.native(c).ok()?.clone())));
        let teacher_lang = self.native(teacher).expect("registered").clone();
        let student_lang = self.native(student).expect("registered").clone();
        let session_id = self
            .state
            .sessions
            .start(LessonStart {
                teacher,
                teacher_lang: &teacher_lang,
                student,
                student_lang: &student_lang,
                controller: controller.as_ref().map(|(c, l)| (c, l)),
                deck,
                at: now,
            })
            .session_id;
        notices.extend(self.state.connector.establish(p.pending_id, session_id, now));
        let s = self.state.sessions.get(session_id).expect("just started");
        for part in &s.participants {
            notices.push(Notice::new(
                &part.user_id,
                Push::SessionStarted(self.session_info(s, part.role)),
            ));
        }
        session_id
    }

    fn slide_notices(&self, session_id: SessionId, at_boundary: bool, notices: &mut Vec<Notice>) {
        let Ok(s) = self.state.sessions.get(session_id) else { return };
        let Ok(deck) = self.deck(&s.deck_id) else { return };
        let Ok(progress) = s.progress(deck) else { return };
        for p in &s.participants {
            notices.push(Notice::new(
                &p.user_id,
                Push::SlideUpdate {
                    session_id,
                    cursor: s.cursor,
                    at_boundary,
                    progress: progress.clone(),
                    view: s.view_for(deck, p).ok().flatten(),
                },
            ));
        }
    }

    /// Ends a running lesson and applies settlement, engagement effects and
    /// connector release. Callers check that the session is running.
    fn end_lesson(
        &mut self,
        actor: Option<&UserId>,
        session_id: SessionId,
        reason: EndReason,
        notices: &mut Vec<Notice>,
    ) -> crate::session::SessionSummary {
        let now = self.state.now;
        let s = self.state.sessions.get(session_id).expect("running session");
        let words = self.catalog.deck(&s.deck_id).map_or(0, |d| d.words_learned(s.cursor));
        let participants = s.participants.clone();
        let summary = self
            .state
            .sessions
            .end(actor, session_id, reason, words, now)
            .expect("session checked running");
        self.state
            .timebank
            .settle_session(&Settlement {
                session_id,
                teacher: &summary.teacher_id,
                student: &summary.student_id,
                duration_s: summary.duration_s,
                at: now,
            })
            .expect("each session ends once");
        let effects = self.state.engage.on_session_end(
            &self.catalog,
            SessionRecord {
                session_id,
                teacher: summary.teacher_id.clone(),
                student: summary.student_id.clone(),
                deck_id: summary.deck_id.clone(),
                duration_s: summary.duration_s,
                slides_completed: summary.slides_completed,
                deck_completed: summary.deck_completed,
                words_learned: summary.words_learned,
                ended_at: now,
            },
            self.config.expert_threshold,
            &self.config.badges,
        );
        let missed: BTreeMap<UserId, Vec<CallLeg>> = self
            .state
            .connector
            .release(&[&summary.teacher_id, &summary.student_id], now, self.config.missed_ttl_s)
            .into_iter()
            .collect();
        for p in &participants {
            notices.push(Notice::new(
                &p.user_id,
                Push::SessionEnded {
                    summary: summary.clone(),
                    missed: missed.get(&p.user_id).cloned().unwrap_or_default(),
                    accolades: effects
                        .accolades
                        .iter()
                        .filter(|a| a.user_id == p.user_id)
                        .cloned()
                        .collect(),
                },
            ));
        }
        for (rater, ratee) in [
            (&summary.teacher_id, &summary.student_id),
            (&summary.student_id, &summary.teacher_id),
        ] {
            notices.push(Notice::new(
                rater,
                Push::RatePrompt {
                    session_id,
                    ratee: ratee.clone(),
                },
            ));
        }
        effects_notices(&effects, &summary.student_id, notices);
        summary
    }

    fn tick(&mut self, at: Timestamp, notices: &mut Vec<Notice>) {
        self.state.now = at;
        notices.extend(self.state.connector.expire_due(at));
        for id in self.state.sessions.running_ids() {
            let Some(count) = self.state.sessions.tick(id) else { continue };
            let s = self.state.sessions.get(id).expect("running");
            let balance = self.state.timebank.balance(&s.student_id).map(|b| b.seconds).unwrap_or(0);
            let remaining = balance - count as i64;
            for p in &s.participants {
                notices.push(Notice::new(
                    &p.user_id,
                    Push::Tick {
                        session_id: id,
                        tick_count: count,
                        student_remaining_s: remaining,
                    },
                ));
            }
            if remaining <= 0 {
                self.end_lesson(None, id, EndReason::BalanceExhausted, notices);
            }
        }
    }

    // ---- queries: never logged, never mutate ----

    pub fn search(&self, user: &UserId, filter: &SearchFilter) -> Result<Vec<Candidate>> {
        search_partners(user, filter, &self.state.profiles, &self.state.connector, |u| {
            self.state.engage.rating_stats(u)
        })
    }

    pub fn missed_list(&self, user: &UserId) -> Result<Vec<CallLeg>> {
        self.state.connector.status(user)?;
        Ok(self
            .state
            .connector
            .list_missed_calls(user, self.state.now, self.config.missed_ttl_s))
    }

    pub fn balance(&self, user: &UserId) -> Result<i64> {
        Ok(self.state.timebank.balance(user)?.seconds)
    }

    pub fn leaderboard(&self, month: Option<Month>, limit: usize) -> Vec<LeaderboardRow> {
        let month = month.unwrap_or_else(|| Month::of(self.state.now));
        self.state.engage.leaderboard(month, limit)
    }

    pub fn decks(&self, user: &UserId) -> Result<Vec<DeckInfo>> {
        let profile = self.state.profile(user)?;
        let unlocks = self.state.engage.unlock_state(&self.catalog, user);
        let progress = self.state.engage.deck_progress(user);
        Ok(self
            .catalog
            .decks()
            .map(|d| DeckInfo {
                deck_id: d.deck_id.clone(),
                title: d
                    .title
                    .get(&profile.native_language)
                    .or_else(|| d.title.get(&d.taught_language))
                    .cloned()
                    .unwrap_or_default(),
                taught_language: d.taught_language.clone(),
                level: d.level,
                set_id: d.set_id.clone(),
                set_ordinal: d.set_ordinal,
                slide_count: d.len(),
                unlocked: unlocks.unlocked_sets.contains(&d.set_id),
                completed: unlocks.completed_decks.contains(&d.deck_id),
                progress: progress.get(&d.deck_id).cloned(),
            })
            .collect())
    }

    pub fn sync(&self, user: &UserId) -> Result<SyncView> {
        let c = &self.state.connector;
        let status = c.status(user)?;
        let mut pending = None;
        let mut session = None;
        match c.engagement(user) {
            Some(Engagement::Pending(pid)) => pending = c.pending(pid).cloned(),
            Some(Engagement::Session(sid)) => session = self.session_sync(user, sid),
            None => {}
        }
        if session.is_none() {
            // controllers are not engaged at the connector level
            session = self
                .state
                .sessions
                .running()
                .find(|s| s.controller_id.as_ref() == Some(user))
                .and_then(|s| self.session_sync(user, s.session_id));
        }
        Ok(SyncView {
            user_id: user.clone(),
            status,
            balance_s: self.balance(user)?,
            incoming: c.visible_inbound(user).into_iter().cloned().collect(),
            outgoing: c.outgoing_live(user).into_iter().cloned().collect(),
            pending,
            session,
            missed: self.missed_list(user)?,
        })
    }

    fn session_sync(&self, user: &UserId, sid: SessionId) -> Option<SessionSync> {
        let s = self.state.sessions.get(sid).ok()?;
        let p = s.participants.iter().find(|p| p.user_id == *user)?;
        let view = self.deck(&s.deck_id).ok().and_then(|d| s.view_for(d, p).ok().flatten());
        Some(SessionSync {
            info: self.session_info(s, p.role),
            hint_active: s.hint_active,
            view,
            chat: s.chat.clone(),
        })
    }

    /// Checks that `from` may send a media-negotiation blob to `to` under
    /// `reference`.
    pub fn check_signal(&self, from: &UserId, to: &UserId, reference: SignalRef) -> Result<()> {
        let (a, b) = match reference {
            SignalRef::Pending(pid) => {
                let p = self.state.connector.pending(pid).ok_or(Error::NoSuchSession)?;
                if p.state != crate::connector::PendingState::Waiting {
                    return Err(Error::NoSuchSession);
                }
                (p.caller_id.clone(), p.recipient_id.clone())
            }
            SignalRef::Session(sid) => {
                let s = self.state.sessions.get(sid).map_err(|_| Error::NoSuchSession)?;
                if !s.is_running() {
                    return Err(Error::NoSuchSession);
                }
                if s.role_of(from).is_none() || s.role_of(to).is_none() || from == to {
                    return Err(Error::NotParticipant);
                }
                return Ok(());
            }
        };
        let pair = (from == &a && to == &b) || (from == &b && to == &a);
        if !pair {
            return Err(Error::NotParticipant);
        }
        Ok(())
    }
}
