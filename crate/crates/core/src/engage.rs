//! Ratings, the monthly leaderboard, lesson-set unlocking, accolades and
//! share/invite events.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::content::Catalog;
use crate::error::{Error, Result};
use crate::ids::{DeckId, SessionId, SetId, Timestamp, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub rater_id: UserId,
    pub ratee_id: UserId,
    pub session_ref: SessionId,
    pub stars: u8,
    pub created_at: Timestamp,
}

/// Running (sum, count) of received stars. The mean is derived, never stored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingStats {
    pub sum: u64,
    pub count: u64,
}

impl RatingStats {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }

    /// Exact comparison of means by cross-multiplication. Unrated sorts lowest.
    pub fn cmp_mean(&self, other: &RatingStats) -> Ordering {
        match (self.count, other.count) {
            (0, 0) => Ordering::Equal,
            (0, _) => Ordering::Less,
            (_, 0) => Ordering::Greater,
            _ => (u128::from(self.sum) * u128::from(other.count))
                .cmp(&(u128::from(other.sum) * u128::from(self.count))),
        }
    }
}

/// Calendar month in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(ts: Timestamp) -> Month {
        let dt = DateTime::from_timestamp(ts, 0).unwrap_or_default();
        Month {
            year: dt.year(),
            month: dt.month(),
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s.split_once('-').ok_or(Error::OutOfRange)?;
        let year = y.parse().map_err(|_| Error::OutOfRange)?;
        let month: u32 = m.parse().map_err(|_| Error::OutOfRange)?;
        if !(1..=12).contains(&month) {
            return Err(Error::OutOfRange);
        }
        Ok(Month { year, month })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub user_id: UserId,
    pub activity_seconds: i64,
}

/// Facts about one ended lesson kept for ratings and the leaderboard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub teacher: UserId,
    pub student: UserId,
    pub deck_id: DeckId,
    pub duration_s: i64,
    pub slides_completed: u32,
    pub deck_completed: bool,
    pub words_learned: u32,
    pub ended_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counter {
    SessionsTaught,
    CompletedTeaching,
    SessionsLearned,
    DecksCompleted,
    SecondsTaught,
    SecondsLearned,
    InvitesRedeemed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub sessions_taught: u64,
    /// Taught sessions that reached the last slide.
    pub completed_teaching: u64,
    pub sessions_learned: u64,
    pub decks_completed: u64,
    pub seconds_taught: u64,
    pub seconds_learned: u64,
    pub invites_redeemed: u64,
}

impl Counters {
    pub fn get(&self, c: Counter) -> u64 {
        match c {
            Counter::SessionsTaught => self.sessions_taught,
            Counter::CompletedTeaching => self.completed_teaching,
            Counter::SessionsLearned => self.sessions_learned,
            Counter::DecksCompleted => self.decks_completed,
            Counter::SecondsTaught => self.seconds_taught,
            Counter::SecondsLearned => self.seconds_learned,
            Counter::InvitesRedeemed => self.invites_redeemed,
        }
    }
}

/// A badge is a name plus a threshold on one counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadgeRule {
    pub name: String,
    pub counter: Counter,
    pub threshold: u64,
}

impl BadgeRule {
    pub fn defaults() -> Vec<BadgeRule> {
        let rule = |name: &str, counter, threshold| BadgeRule {
            name: name.to_owned(),
            counter,
            threshold,
        };
        vec![
            rule("first-lesson-taught", Counter::SessionsTaught, 1),
            rule("first-lesson-learned", Counter::SessionsLearned, 1),
            rule("deck-collector", Counter::DecksCompleted, 5),
            rule("ten-hours-taught", Counter::SecondsTaught, 36_000),
            rule("ambassador", Counter::InvitesRedeemed, 3),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "name", rename_all = "snake_case")]
pub enum AccoladeKind {
    Badge(String),
    Expert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accolade {
    pub user_id: UserId,
    pub kind: AccoladeKind,
    pub awarded_at: Timestamp,
    pub criterion_snapshot: Counters,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlockState {
    /// Sets opened beyond the always-open first set of each language.
    pub unlocked_sets: BTreeSet<SetId>,
    pub completed_decks: BTreeSet<DeckId>,
    /// Sets a controller asked the student to repeat; their successor does
    /// not open automatically.
    pub held_sets: BTreeSet<SetId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerDecision {
    Advance,
    Repeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareKind {
    LessonResult,
    Invite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VitalityEvent {
    pub user_id: UserId,
    pub kind: ShareKind,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Referral {
    inviter: UserId,
    redeemed_by: Option<UserId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeckProgress {
    pub best_cursor: u32,
    pub words_learned: u32,
}

/// Everything `on_session_end` changed, for notification fan-out.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndEffects {
    pub unlocked: Vec<SetId>,
    pub accolades: Vec<Accolade>,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engage {
    ratings: Vec<Rating>,
    rated: BTreeSet<(UserId, SessionId)>,
    stats: BTreeMap<UserId, RatingStats>,
    sessions: BTreeMap<SessionId, SessionRecord>,
    unlocks: BTreeMap<UserId, UnlockState>,
    counters: BTreeMap<UserId, Counters>,
    accolades: Vec<Accolade>,
    progress: BTreeMap<UserId, BTreeMap<DeckId, DeckProgress>>,
    controllers: BTreeMap<UserId, UserId>,
    shares: Vec<VitalityEvent>,
    referrals: BTreeMap<String, Referral>,
    invited: BTreeSet<UserId>,
}

impl Engage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_rating(
        &mut self,
        rater: &UserId,
        session: SessionId,
        stars: u8,
        at: Timestamp,
    ) -> Result<Rating> {
        let record = self.sessions.get(&session).ok_or(Error::UnknownSession(session))?;
        let ratee = if *rater == record.teacher {
            record.student.clone()
        } else if *rater == record.student {
            record.teacher.clone()
        } else {
            return Err(Error::NotParticipant);
        };
        if !(1..=5).contains(&stars) {
            return Err(Error::OutOfRange);
        }
        if self.rated.contains(&(rater.clone(), session)) {
            return Err(Error::DuplicateRating);
        }
        let rating = Rating {
            rater_id: rater.clone(),
            ratee_id: ratee.clone(),
            session_ref: session,
            stars,
            created_at: at,
        };
        self.rated.insert((rater.clone(), session));
        let s = self.stats.entry(ratee).or_default();
        s.sum += u64::from(stars);
        s.count += 1;
        self.ratings.push(rating.clone());
        Ok(rating)
    }

    pub fn rating_stats(&self, user: &UserId) -> RatingStats {
        self.stats.get(user).copied().unwrap_or_default()
    }

    /// (mean, count); mean is 0 when nobody has rated the user yet.
    pub fn avg_rating(&self, user: &UserId) -> (f64, u64) {
        let s = self.rating_stats(user);
        (s.mean().unwrap_or(0.0), s.count)
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn leaderboard(&self, month: Month, limit: usize) -> Vec<LeaderboardRow> {
        let mut activity: BTreeMap<&UserId, i64> = BTreeMap::new();
        for r in self.sessions.values().filter(|r| Month::of(r.ended_at) == month) {
            *activity.entry(&r.teacher).or_default() += r.duration_s;
            *activity.entry(&r.student).or_default() += r.duration_s;
        }
        let mut rows: Vec<LeaderboardRow> = activity
            .into_iter()
            .filter(|(_, secs)| *secs > 0)
            .map(|(u, secs)| LeaderboardRow {
                user_id: u.clone(),
                activity_seconds: secs,
            })
            .collect();
        rows.sort_by(|a, b| {
            b.activity_seconds
                .cmp(&a.activity_seconds)
                .then_with(|| a.user_id.cmp(&b.user_id))
        });
        rows.truncate(limit);
        rows
    }

    pub fn session_records(&self) -> impl Iterator<Item = &SessionRecord> {
        self.sessions.values()
    }

    pub fn session_record(&self, id: SessionId) -> Option<&SessionRecord> {
        self.sessions.get(&id)
    }

    pub fn is_set_unlocked(&self, catalog: &Catalog, user: &UserId, set: &SetId) -> bool {
        catalog.is_first_set(set)
            || self
                .unlocks
                .get(user)
                .is_some_and(|u| u.unlocked_sets.contains(set))
    }

    pub fn unlock_state(&self, catalog: &Catalog, user: &UserId) -> UnlockState {
        let mut state = self.unlocks.get(user).cloned().unwrap_or_default();
        state.unlocked_sets.extend(catalog.first_sets().cloned());
        state
    }

    pub fn counters(&self, user: &UserId) -> Counters {
        self.counters.get(user).copied().unwrap_or_default()
    }

    pub fn accolades(&self) -> &[Accolade] {
        &self.accolades
    }

    pub fn is_expert(&self, user: &UserId) -> bool {
        self.accolades
            .iter()
            .any(|a| a.user_id == *user && a.kind == AccoladeKind::Expert)
    }

    pub fn deck_progress(&self, user: &UserId) -> BTreeMap<DeckId, DeckProgress> {
        self.progress.get(user).cloned().unwrap_or_default()
    }

    fn try_unlock_after(&mut self, catalog: &Catalog, user: &UserId, mut set: SetId) -> Vec<SetId> {
        let mut opened = Vec::new();
        let state = self.unlocks.entry(user.clone()).or_default();
        loop {
            if state.held_sets.contains(&set) {
                break;
            }
            let done = catalog
                .set_decks(&set)
                .iter()
                .all(|d| state.completed_decks.contains(d));
            let Some(next) = catalog.next_set(&set) else { break };
            if !done {
                break;
            }
            if state.unlocked_sets.insert(next.clone()) {
                opened.push(next.clone());
            }
            set = next.clone();
        }
        opened
    }

    fn award_badges(&mut self, user: &UserId, badges: &[BadgeRule], at: Timestamp, out: &mut Vec<Accolade>) {
        let counters = self.counters(user);
        for rule in badges {
            let kind = AccoladeKind::Badge(rule.name.clone());
            if counters.get(rule.counter) >= rule.threshold
                && !self.accolades.iter().any(|a| a.user_id == *user && a.kind == kind)
            {
                let a = Accolade {
                    user_id: user.clone(),
                    kind,
                    awarded_at: at,
                    criterion_snapshot: counters,
                };
                self.accolades.push(a.clone());
                out.push(a);
            }
        }
    }

    /// Applies the end-of-lesson bookkeeping. Idempotent per session id.
    pub fn on_session_end(
        &mut self,
        catalog: &Catalog,
        record: SessionRecord,
        expert_threshold: u32,
        badges: &[BadgeRule],
    ) -> EndEffects {
        if self.sessions.contains_key(&record.session_id) {
            return EndEffects {
                duplicate: true,
                ..EndEffects::default()
            };
        }
        let at = record.ended_at;
        let dur = record.duration_s.max(0) as u64;
        let teacher = record.teacher.clone();
        let student = record.student.clone();
        let mut effects = EndEffects::default();

        let t = self.counters.entry(teacher.clone()).or_default();
        t.sessions_taught += 1;
        t.seconds_taught += dur;
        if record.deck_completed {
            t.completed_teaching += 1;
        }
        let completed_teaching = t.completed_teaching;

        let newly_completed = record.deck_completed
            && self
                .unlocks
                .entry(student.clone())
                .or_default()
                .completed_decks
                .insert(record.deck_id.clone());
        let s = self.counters.entry(student.clone()).or_default();
        s.sessions_learned += 1;
        s.seconds_learned += dur;
        if newly_completed {
            s.decks_completed += 1;
        }

        let p = self
            .progress
            .entry(student.clone())
            .or_default()
            .entry(record.deck_id.clone())
            .or_default();
        p.best_cursor = p.best_cursor.max(record.slides_completed);
        p.words_learned = p.words_learned.max(record.words_learned);

        if newly_completed {
            if let Some(deck) = catalog.deck(&record.deck_id) {
                effects.unlocked = self.try_unlock_after(catalog, &student, deck.set_id.clone());
            }
        }

        if record.deck_completed
            && completed_teaching >= u64::from(expert_threshold)
            && !self.is_expert(&teacher)
        {
            let a = Accolade {
                user_id: teacher.clone(),
                kind: AccoladeKind::Expert,
                awarded_at: at,
                criterion_snapshot: self.counters(&teacher),
            };
            self.accolades.push(a.clone());
            effects.accolades.push(a);
        }
        self.award_badges(&teacher, badges, at, &mut effects.accolades);
        self.award_badges(&student, badges, at, &mut effects.accolades);
        self.sessions.insert(record.session_id, record);
        effects
    }

    pub fn assign_controller(&mut self, controller: &UserId, student: &UserId) {
        self.controllers.insert(student.clone(), controller.clone());
    }

    pub fn controller_of(&self, student: &UserId) -> Option<&UserId> {
        self.controllers.get(student)
    }

    pub fn check_controller(&self, controller: &UserId, student: &UserId) -> Result<()> {
        match self.controllers.get(student) {
            Some(c) if c == controller => Ok(()),
            _ => Err(Error::NotController),
        }
    }

    /// Applies a controller decision for `set`. Returns newly opened sets.
    pub fn controller_decide(
        &mut self,
        catalog: &Catalog,
        controller: &UserId,
        student: &UserId,
        set: &SetId,
        decision: ControllerDecision,
    ) -> Result<Vec<SetId>> {
        self.check_controller(controller, student)?;
        if !catalog.has_set(set) {
            return Err(Error::OutOfRange);
        }
        let state = self.unlocks.entry(student.clone()).or_default();
        match decision {
            ControllerDecision::Repeat => {
                state.held_sets.insert(set.clone());
                Ok(Vec::new())
            }
            ControllerDecision::Advance => {
                state.held_sets.remove(set);
                let mut opened = Vec::new();
                if let Some(next) = catalog.next_set(set) {
                    if state.unlocked_sets.insert(next.clone()) {
                        opened.push(next.clone());
                    }
                    let next = next.clone();
                    opened.extend(self.try_unlock_after(catalog, student, next));
                }
                Ok(opened)
            }
        }
    }

    /// Records a share. Invites mint a single-use referral token derived from
    /// the user and the share count, so replay reproduces it.
    pub fn share_event(&mut self, user: &UserId, kind: ShareKind, at: Timestamp) -> VitalityEvent {
        let token = (kind == ShareKind::Invite).then(|| {
            let mut h = Sha256::new();
            h.update(user.as_str().as_bytes());
            h.update(b":");
            h.update((self.shares.len() as u64).to_le_bytes());
            let token = hex::encode(&h.finalize()[..8]);
            self.referrals.insert(
                token.clone(),
                Referral {
                    inviter: user.clone(),
                    redeemed_by: None,
                },
            );
            token
        });
        let ev = VitalityEvent {
            user_id: user.clone(),
            kind,
            at,
            token,
        };
        self.shares.push(ev.clone());
        ev
    }

    pub fn shares(&self) -> &[VitalityEvent] {
        &self.shares
    }

    /// Validates a redemption without changing anything. Returns the inviter.
    pub fn check_redeem(&self, invitee: &UserId, token: &str) -> Result<UserId> {
        let r = self.referrals.get(token).ok_or(Error::InvalidToken)?;
        if r.redeemed_by.is_some() {
            return Err(Error::TokenRedeemed);
        }
        if r.inviter == *invitee {
            return Err(Error::InvalidToken);
        }
        if self.invited.contains(invitee) {
            return Err(Error::DuplicateBonus);
        }
        Ok(r.inviter.clone())
    }

    pub fn commit_redeem(&mut self, invitee: &UserId, token: &str, badges: &[BadgeRule], at: Timestamp) -> Vec<Accolade> {
        let mut out = Vec::new();
        let Some(r) = self.referrals.get_mut(token) else {
            return out;
        };
        r.redeemed_by = Some(invitee.clone());
        let inviter = r.inviter.clone();
        self.invited.insert(invitee.clone());
        self.counters.entry(inviter.clone()).or_default().invites_redeemed += 1;
        self.award_badges(&inviter, badges, at, &mut out);
        out
    }
}
