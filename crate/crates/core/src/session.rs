//! Live lessons: slide cursor, hints, chat, per-second ticks and the
//! end-of-lesson summary. Settlement and engagement effects are applied by the
//! platform once a session ends.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::content::{deck_progress, render_slide_view, LangCode, Progress, Role, RoleView, SlideDeck};
use crate::error::{Error, Result};
use crate::ids::{DeckId, IdSeq, SessionId, Timestamp, UserId};

pub const MAX_CHAT_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub sender_id: UserId,
    pub body: String,
    /// Tick index at send time.
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Next,
    Back,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Ended,
    BalanceExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: SessionId,
    pub teacher_id: UserId,
    pub student_id: UserId,
    pub deck_id: DeckId,
    pub duration_s: i64,
    pub slides_completed: u32,
    pub deck_completed: bool,
    pub words_learned: u32,
    /// `None` when the system ended the lesson.
    pub ended_by: Option<UserId>,
    pub reason: EndReason,
    pub ended_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub user_id: UserId,
    pub role: Role,
    pub lang: LangCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LessonSession {
    pub session_id: SessionId,
    pub teacher_id: UserId,
    pub student_id: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_id: Option<UserId>,
    pub deck_id: DeckId,
    pub slide_count: u32,
    pub participants: Vec<Participant>,
    pub cursor: u32,
    pub hint_active: bool,
    pub chat: Vec<ChatMessage>,
    pub started_at: Timestamp,
    pub tick_count: u64,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SessionSummary>,
}

impl LessonSession {
    pub fn role_of(&self, user: &UserId) -> Option<Role> {
        self.participants.iter().find(|p| p.user_id == *user).map(|p| p.role)
    }

    pub fn is_running(&self) -> bool {
        self.state == SessionState::Running
    }

    fn check_running(&self, actor: &UserId) -> Result<Role> {
        let role = self.role_of(actor).ok_or(Error::NotParticipant)?;
        if !self.is_running() {
            return Err(Error::SessionEnded);
        }
        Ok(role)
    }

    /// Current view for one participant, or `None` before the first slide.
    pub fn view_for(&self, deck: &SlideDeck, p: &Participant) -> Result<Option<RoleView>> {
        if self.cursor == 0 {
            return Ok(None);
        }
        render_slide_view(deck, self.cursor, p.role, &p.lang, self.hint_active).map(Some)
    }

    pub fn views(&self, deck: &SlideDeck) -> Result<Vec<(UserId, Option<RoleView>)>> {
        self.participants
            .iter()
            .map(|p| Ok((p.user_id.clone(), self.view_for(deck, p)?)))
            .collect()
    }

    pub fn progress(&self, deck: &SlideDeck) -> Result<Progress> {
        deck_progress(self.cursor, deck)
    }
}

/// Everything needed to open a lesson, resolved by the caller.
#[derive(Debug, Clone)]
pub struct LessonStart<'a> {
    pub teacher: &'a UserId,
    pub teacher_lang: &'a LangCode,
    pub student: &'a UserId,
    pub student_lang: &'a LangCode,
    pub controller: Option<(&'a UserId, &'a LangCode)>,
    pub deck: &'a SlideDeck,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideMove {
    pub cursor: u32,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sessions {
    sessions: BTreeMap<SessionId, LessonSession>,
    running: BTreeSet<SessionId>,
    ids: IdSeq,
}

impl Sessions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: SessionId) -> Result<&LessonSession> {
        self.sessions.get(&id).ok_or(Error::UnknownSession(id))
    }

    pub fn all(&self) -> impl Iterator<Item = &LessonSession> {
        self.sessions.values()
    }

    pub fn running(&self) -> impl Iterator<Item = &LessonSession> {
        self.running.iter().map(|id| &self.sessions[id])
    }

    pub fn running_ids(&self) -> Vec<SessionId> {
        self.running.iter().copied().collect()
    }

    pub fn start(&mut self, s: LessonStart<'_>) -> &LessonSession {
        let id = SessionId(self.ids.next());
        let mut participants = vec![
            Participant {
                user_id: s.teacher.clone(),
                role: Role::Teacher,
                lang: s.teacher_lang.clone(),
            },
            Participant {
                user_id: s.student.clone(),
                role: Role::Student,
                lang: s.student_lang.clone(),
            },
        ];
        if let Some((c, lang)) = s.controller {
            participants.push(Participant {
                user_id: c.clone(),
                role: Role::Controller,
                lang: lang.clone(),
            });
        }
        let session = LessonSession {
            session_id: id,
            teacher_id: s.teacher.clone(),
            student_id: s.student.clone(),
            controller_id: s.controller.map(|(c, _)| c.clone()),
            deck_id: s.deck.deck_id.clone(),
            slide_count: s.deck.len(),
            participants,
            cursor: 0,
            hint_active: false,
            chat: Vec::new(),
            started_at: s.at,
            tick_count: 0,
            state: SessionState::Running,
            summary: None,
        };
        self.running.insert(id);
        self.sessions.entry(id).or_insert(session)
    }

    fn get_mut(&mut self, id: SessionId) -> Result<&mut LessonSession> {
        self.sessions.get_mut(&id).ok_or(Error::UnknownSession(id))
    }

    pub fn check_advance(&self, actor: &UserId, id: SessionId) -> Result<()> {
        match self.get(id)?.check_running(actor)? {
            Role::Student => Err(Error::NotTeacher),
            Role::Teacher | Role::Controller => Ok(()),
        }
    }

    /// Moves the cursor one step, clamped to `[1, N]`. A clamped move still
    /// succeeds and reports `at_boundary`.
    pub fn advance(&mut self, actor: &UserId, id: SessionId, dir: Direction) -> Result<SlideMove> {
        self.check_advance(actor, id)?;
        let s = self.get_mut(id)?;
        let n = s.slide_count;
        let target = match dir {
            Direction::Next => (s.cursor + 1).min(n),
            Direction::Back if s.cursor <= 1 => s.cursor,
            Direction::Back => s.cursor - 1,
        };
        let at_boundary = target == s.cursor;
        if !at_boundary {
            s.cursor = target;
            s.hint_active = false;
        }
        Ok(SlideMove {
            cursor: s.cursor,
            at_boundary,
        })
    }

    pub fn check_hint(&self, actor: &UserId, id: SessionId) -> Result<()> {
        let s = self.get(id)?;
        match s.check_running(actor)? {
            Role::Teacher | Role::Student => {}
            Role::Controller => return Err(Error::NotParticipant),
        }
        if s.cursor == 0 {
            return Err(Error::NoCurrentSlide);
        }
        Ok(())
    }

    pub fn activate_hint(&mut self, actor: &UserId, id: SessionId) -> Result<()> {
        self.check_hint(actor, id)?;
        self.get_mut(id)?.hint_active = true;
        Ok(())
    }

    pub fn check_chat(&self, actor: &UserId, id: SessionId, body: &str) -> Result<()> {
        self.get(id)?.check_running(actor)?;
        if body.trim().is_empty() {
            return Err(Error::EmptyBody);
        }
        let chars = body.chars().count();
        if chars > MAX_CHAT_CHARS {
            return Err(Error::BodyTooLong(chars));
        }
        Ok(())
    }

    pub fn send_chat(&mut self, actor: &UserId, id: SessionId, body: &str) -> Result<ChatMessage> {
        self.check_chat(actor, id, body)?;
        let s = self.get_mut(id)?;
        let msg = ChatMessage {
            sender_id: actor.clone(),
            body: body.to_owned(),
            at: s.tick_count,
        };
        s.chat.push(msg.clone());
        Ok(msg)
    }

    /// Advances one running session by one second. Ended sessions ignore ticks.
    pub fn tick(&mut self, id: SessionId) -> Option<u64> {
        let s = self.sessions.get_mut(&id)?;
        if !s.is_running() {
            return None;
        }
        s.tick_count += 1;
        Some(s.tick_count)
    }

    pub fn check_end(&self, actor: &UserId, id: SessionId) -> Result<()> {
        self.get(id)?.check_running(actor).map(drop)
    }

    /// Ends a running lesson. `actor` is `None` for system-initiated ends.
    pub fn end(
        &mut self,
        actor: Option<&UserId>,
        id: SessionId,
        reason: EndReason,
        words_learned: u32,
        at: Timestamp,
    ) -> Result<SessionSummary> {
        match actor {
            Some(a) => self.check_end(a, id)?,
            None if !self.get(id)?.is_running() => return Err(Error::SessionEnded),
            None => {}
        }
        let s = self.get_mut(id)?;
        let summary = SessionSummary {
            session_id: id,
            teacher_id: s.teacher_id.clone(),
            student_id: s.student_id.clone(),
            deck_id: s.deck_id.clone(),
            duration_s: s.tick_count as i64,
            slides_completed: s.cursor,
            deck_completed: s.cursor == s.slide_count,
            words_learned,
            ended_by: actor.cloned(),
            reason,
            ended_at: at,
        };
        s.state = SessionState::Ended;
        s.summary = Some(summary.clone());
        self.running.remove(&id);
        Ok(summary)
    }
}
