//! Time-banking ledger. One second taught earns one second of learning.
//!
//! Balances are a fold over an append-only list of signed entries; the
//! cached per-user sum is kept in step with every append.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{EntryId, IdSeq, SessionId, Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    TeachCredit,
    LearnDebit,
    InviteBonus,
    SignupGrant,
    Adjustment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub entry_id: EntryId,
    pub user_id: UserId,
    pub delta_seconds: i64,
    pub reason: Reason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_ref: Option<SessionId>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub seconds: i64,
}

/// What the ledger needs to know about a finished lesson.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement<'a> {
    pub session_id: SessionId,
    pub teacher: &'a UserId,
    pub student: &'a UserId,
    pub duration_s: i64,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timebank {
    entries: Vec<LedgerEntry>,
    balances: BTreeMap<UserId, i64>,
    settled: BTreeSet<SessionId>,
    signup_granted: BTreeSet<UserId>,
    bonus_pairs: BTreeSet<(UserId, UserId)>,
    ids: IdSeq,
}

impl Timebank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_account(&mut self, user: &UserId) {
        self.balances.entry(user.clone()).or_insert(0);
    }

    pub fn has_account(&self, user: &UserId) -> bool {
        self.balances.contains_key(user)
    }

    fn append(
        &mut self,
        user: &UserId,
        delta_seconds: i64,
        reason: Reason,
        session_ref: Option<SessionId>,
        at: Timestamp,
    ) -> LedgerEntry {
        let entry = LedgerEntry {
            entry_id: EntryId(self.ids.next()),
            user_id: user.clone(),
            delta_seconds,
            reason,
            session_ref,
            created_at: at,
        };
        *self.balances.entry(user.clone()).or_insert(0) += delta_seconds;
        self.entries.push(entry.clone());
        entry
    }

    /// Moves `duration_s` from the student to the teacher. Zero-length lessons
    /// are marked settled without writing entries.
    pub fn settle_session(&mut self, s: &Settlement<'_>) -> Result<Vec<LedgerEntry>> {
        if self.settled.contains(&s.session_id) {
            return Err(Error::AlreadySettled);
        }
        if s.duration_s < 0 {
            return Err(Error::OutOfRange);
        }
        for u in [s.teacher, s.student] {
            if !self.has_account(u) {
                return Err(Error::UnknownUser(u.clone()));
            }
        }
        self.settled.insert(s.session_id);
        if s.duration_s == 0 {
            return Ok(Vec::new());
        }
        let credit = self.append(s.teacher, s.duration_s, Reason::TeachCredit, Some(s.session_id), s.at);
        let debit = self.append(s.student, -s.duration_s, Reason::LearnDebit, Some(s.session_id), s.at);
        Ok(vec![credit, debit])
    }

    pub fn grant_signup(&mut self, user: &UserId, seconds: i64, at: Timestamp) -> Result<LedgerEntry> {
        if self.signup_granted.contains(user) {
            return Err(Error::DuplicateGrant);
        }
        self.open_account(user);
        self.signup_granted.insert(user.clone());
        Ok(self.append(user, seconds, Reason::SignupGrant, None, at))
    }

    pub fn check_invite_bonus(&self, inviter: &UserId, invitee: &UserId) -> Result<()> {
        for u in [inviter, invitee] {
            if !self.has_account(u) {
                return Err(Error::UnknownUser(u.clone()));
            }
        }
        if self.bonus_pairs.contains(&(inviter.clone(), invitee.clone())) {
            return Err(Error::DuplicateBonus);
        }
        Ok(())
    }

    pub fn grant_invite_bonus(
        &mut self,
        inviter: &UserId,
        invitee: &UserId,
        seconds: i64,
        at: Timestamp,
    ) -> Result<LedgerEntry> {
        self.check_invite_bonus(inviter, invitee)?;
        self.bonus_pairs.insert((inviter.clone(), invitee.clone()));
        Ok(self.append(inviter, seconds, Reason::InviteBonus, None, at))
    }

    pub fn balance(&self, user: &UserId) -> Result<Balance> {
        self.balances
            .get(user)
            .map(|&seconds| Balance { seconds })
            .ok_or_else(|| Error::UnknownUser(user.clone()))
    }

    pub fn can_start_learning(&self, user: &UserId) -> Result<bool> {
        Ok(self.balance(user)?.seconds > 0)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_settled(&self, session: SessionId) -> bool {
        self.settled.contains(&session)
    }

    /// Writes one JSON object per entry, in append order.
    pub fn export<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
