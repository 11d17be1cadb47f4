//! Presence and the multi-call connector.
//!
//! A caller fans one request out to several recipients (a call group with one
//! leg per recipient). The first recipient to accept opens a pending session;
//! every other ringing leg touching either party goes on hold and is hidden.
//! Both parties then confirm readiness. If the handshake is cancelled or times
//! out, held legs ring again; if it succeeds, the caller's surplus legs are
//! withdrawn and inbound calls to both parties drop into their missed queues.
//!
//! Leg state edges:
//!
//! ```text
//! ringing  -> held | withdrawn | missed | expired | accepted | declined
//! held     -> ringing | withdrawn | expired
//! missed   -> accepted                       (connecting a missed call)
//! accepted -> declined | withdrawn | expired (handshake failed)
//! ```

mod search;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{DeckId, GroupId, IdSeq, LegId, PendingId, SessionId, Timestamp, UserId};
use crate::notify::{CancelReason, Notice, Push};

pub use search::{search_partners, Candidate, SearchFilter, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceStatus {
    Offline,
    Available,
    Calling,
    Pending,
    InSession,
}

impl PresenceStatus {
    pub fn is_engaged(self) -> bool {
        matches!(self, PresenceStatus::Pending | PresenceStatus::InSession)
    }

    /// Online and not engaged: can accept a call or be called back.
    pub fn is_free(self) -> bool {
        matches!(self, PresenceStatus::Available | PresenceStatus::Calling)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presence {
    pub user_id: UserId,
    pub status: PresenceStatus,
    pub since: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegState {
    Ringing,
    Held,
    Withdrawn,
    Missed,
    Expired,
    Accepted,
    Declined,
}

impl LegState {
    pub fn can_transition_to(self, to: LegState) -> bool {
        use LegState::*;
        matches!(
            (self, to),
            (Ringing, Held | Withdrawn | Missed | Expired | Accepted | Declined)
                | (Held, Ringing | Withdrawn | Expired)
                | (Missed, Accepted)
                | (Accepted, Declined | Withdrawn | Expired)
        )
    }

    fn is_live(self) -> bool {
        matches!(self, LegState::Ringing | LegState::Held)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLeg {
    pub leg_id: LegId,
    pub group_id: GroupId,
    pub caller_id: UserId,
    pub recipient_id: UserId,
    pub deck_id: DeckId,
    pub state: LegState,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missed_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_by: Option<PendingId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupState {
    Active,
    Connected,
    Cancelled,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGroup {
    pub group_id: GroupId,
    pub caller_id: UserId,
    pub deck_id: DeckId,
    pub legs: Vec<LegId>,
    pub state: GroupState,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingState {
    Waiting,
    Started,
    Cancelled,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingSession {
    pub pending_id: PendingId,
    pub caller_id: UserId,
    pub recipient_id: UserId,
    pub deck_id: DeckId,
    pub leg_id: LegId,
    pub group_id: GroupId,
    pub confirmed: BTreeSet<UserId>,
    pub deadline: Timestamp,
    /// Legs put on hold on behalf of this handshake.
    pub held: Vec<LegId>,
    pub state: PendingState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<SessionId>,
}

impl PendingSession {
    pub fn involves(&self, user: &UserId) -> bool {
        self.caller_id == *user || self.recipient_id == *user
    }
}

pub type PendingView = PendingSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Engagement {
    Pending(PendingId),
    Session(SessionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum CancelTarget {
    Group(GroupId),
    Leg(LegId),
    Pending(PendingId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Confirm {
    Waiting(PendingSession),
    Ready(PendingSession),
}

/// One observed leg state change, for invariant checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegTransition {
    pub leg_id: LegId,
    pub from: LegState,
    pub to: LegState,
}

/// Transitions since the last drain. Observational only: excluded from
/// equality and snapshots.
#[derive(Debug, Clone, Default)]
pub struct Trace(Vec<LegTransition>);

impl PartialEq for Trace {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    presence: BTreeMap<UserId, Presence>,
    legs: BTreeMap<LegId, CallLeg>,
    groups: BTreeMap<GroupId, CallGroup>,
    pendings: BTreeMap<PendingId, PendingSession>,
    engaged: BTreeMap<UserId, Engagement>,
    /// Ringing or held legs by caller.
    live_out: BTreeMap<UserId, BTreeSet<LegId>>,
    /// Ringing or held legs by recipient.
    live_in: BTreeMap<UserId, BTreeSet<LegId>>,
    /// Missed legs by recipient; leg id order is arrival order.
    missed: BTreeMap<UserId, BTreeSet<LegId>>,
    waiting: BTreeSet<PendingId>,
    leg_ids: IdSeq,
    group_ids: IdSeq,
    pending_ids: IdSeq,
    #[serde(skip)]
    trace: Trace,
}

fn take_set(map: &BTreeMap<UserId, BTreeSet<LegId>>, user: &UserId) -> Vec<LegId> {
    map.get(user).map(|s| s.iter().copied().collect()).unwrap_or_default()
}

impl Connector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, user: &UserId, now: Timestamp) {
        self.presence.entry(user.clone()).or_insert_with(|| Presence {
            user_id: user.clone(),
            status: PresenceStatus::Offline,
            since: now,
        });
    }

    pub fn presence(&self, user: &UserId) -> Option<&Presence> {
        self.presence.get(user)
    }

    pub fn presences(&self) -> impl Iterator<Item = &Presence> {
        self.presence.values()
    }

    pub fn status(&self, user: &UserId) -> Result<PresenceStatus> {
        self.presence
            .get(user)
            .map(|p| p.status)
            .ok_or_else(|| Error::UnknownUser(user.clone()))
    }

    pub fn engagement(&self, user: &UserId) -> Option<Engagement> {
        self.engaged.get(user).copied()
    }

    pub fn leg(&self, id: LegId) -> Option<&CallLeg> {
        self.legs.get(&id)
    }

    pub fn legs(&self) -> impl Iterator<Item = &CallLeg> {
        self.legs.values()
    }

    pub fn group(&self, id: GroupId) -> Option<&CallGroup> {
        self.groups.get(&id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &CallGroup> {
        self.groups.values()
    }

    pub fn pending(&self, id: PendingId) -> Option<&PendingSession> {
        self.pendings.get(&id)
    }

    pub fn pendings(&self) -> impl Iterator<Item = &PendingSession> {
        self.pendings.values()
    }

    pub fn waiting_pendings(&self) -> impl Iterator<Item = &PendingSession> + '_ {
        self.waiting.iter().filter_map(|id| self.pendings.get(id))
    }

    /// Ringing legs the user can see and answer. Held legs are hidden.
    pub fn visible_inbound(&self, user: &UserId) -> Vec<&CallLeg> {
        self.live_in
            .get(user)
            .into_iter()
            .flatten()
            .filter_map(|id| self.legs.get(id))
            .filter(|l| l.state == LegState::Ringing)
            .collect()
    }

    pub fn outgoing_live(&self, user: &UserId) -> Vec<&CallLeg> {
        self.live_out
            .get(user)
            .into_iter()
            .flatten()
            .filter_map(|id| self.legs.get(id))
            .collect()
    }

    pub fn drain_trace(&mut self) -> Vec<LegTransition> {
        std::mem::take(&mut self.trace.0)
    }

    fn set_status(&mut self, user: &UserId, status: PresenceStatus, now: Timestamp) {
        if let Some(p) = self.presence.get_mut(user) {
            if p.status != status {
                p.status = status;
                p.since = now;
            }
        }
    }

    /// Re-derives calling/available for an online, unengaged user.
    fn recompute_status(&mut self, user: &UserId, now: Timestamp) {
        let Some(current) = self.presence.get(user).map(|p| p.status) else {
            return;
        };
        if !current.is_free() || self.engaged.contains_key(user) {
            return;
        }
        let calling = self.live_out.get(user).is_some_and(|s| !s.is_empty());
        let next = if calling {
            PresenceStatus::Calling
        } else {
            PresenceStatus::Available
        };
        self.set_status(user, next, now);
    }

    fn set_leg(&mut self, id: LegId, to: LegState, now: Timestamp) {
        let leg = self.legs.get_mut(&id).expect("leg exists");
        let from = leg.state;
        debug_assert!(from.can_transition_to(to), "illegal leg edge {from:?} -> {to:?} on {id}");
        leg.state = to;
        if to != LegState::Held {
            leg.held_by = None;
        }
        if to == LegState::Missed {
            leg.missed_at = Some(now);
        }
        let (caller, recipient) = (leg.caller_id.clone(), leg.recipient_id.clone());
        if from.is_live() && !to.is_live() {
            if let Some(s) = self.live_out.get_mut(&caller) {
                s.remove(&id);
            }
            if let Some(s) = self.live_in.get_mut(&recipient) {
                s.remove(&id);
            }
        } else if !from.is_live() && to.is_live() {
            self.live_out.entry(caller).or_default().insert(id);
            self.live_in.entry(recipient.clone()).or_default().insert(id);
        }
        if to == LegState::Missed {
            self.missed.entry(recipient).or_default().insert(id);
        } else if from == LegState::Missed {
            if let Some(s) = self.missed.get_mut(&recipient) {
                s.remove(&id);
            }
        }
        self.trace.0.push(LegTransition { leg_id: id, from, to });
    }

    fn leg_snapshot(&self, id: LegId) -> CallLeg {
        self.legs[&id].clone()
    }

    fn notify_both(&self, id: LegId, push: fn(CallLeg) -> Push, out: &mut Vec<Notice>) {
        let leg = self.leg_snapshot(id);
        let to = leg.recipient_id.clone();
        out.push(Notice::new(&leg.caller_id, push(leg.clone())));
        out.push(Notice::new(&to, push(leg)));
    }

    /// Expires an active group once nothing in it can progress, and frees its
    /// caller if that was their last live call.
    fn refresh_group(&mut self, gid: GroupId, now: Timestamp) {
        let Some(group) = self.groups.get(&gid) else { return };
        if group.state != GroupState::Active {
            return;
        }
        let alive = group.legs.iter().any(|id| {
            matches!(
                self.legs[id].state,
                LegState::Ringing | LegState::Held | LegState::Accepted
            )
        });
        let caller = group.caller_id.clone();
        if !alive {
            self.groups.get_mut(&gid).expect("group").state = GroupState::Expired;
        }
        self.recompute_status(&caller, now);
    }

    pub fn set_presence(
        &mut self,
        user: &UserId,
        status: PresenceStatus,
        now: Timestamp,
    ) -> Result<(Presence, Vec<Notice>)> {
        let current = self.status(user)?;
        if current.is_engaged() {
            return Err(Error::Busy(user.clone()));
        }
        let mut out = Vec::new();
        match status {
            PresenceStatus::Available => {
                if current == PresenceStatus::Calling {
                    return Err(Error::Busy(user.clone()));
                }
                self.set_status(user, PresenceStatus::Available, now);
            }
            PresenceStatus::Offline => {
                let mut touched = BTreeSet::new();
                for id in take_set(&self.live_out, user) {
                    self.set_leg(id, LegState::Withdrawn, now);
                    self.notify_both(id, Push::CallWithdrawn, &mut out);
                    touched.insert(self.legs[&id].group_id);
                }
                for gid in &touched {
                    let g = self.groups.get_mut(gid).expect("group");
                    if g.state == GroupState::Active {
                        g.state = GroupState::Cancelled;
                    }
                }
                for id in take_set(&self.live_in, user) {
                    if self.legs[&id].state == LegState::Ringing {
                        self.set_leg(id, LegState::Missed, now);
                        self.notify_both(id, Push::CallMissed, &mut out);
                        let gid = self.legs[&id].group_id;
                        self.refresh_group(gid, now);
                    }
                }
                self.set_status(user, PresenceStatus::Offline, now);
            }
            _ => return Err(Error::OutOfRange),
        }
        Ok((self.presence[user].clone(), out))
    }

    /// Validates and creates a call group. Role, balance and unlock checks are
    /// the caller's responsibility.
    pub fn initiate_multicall(
        &mut self,
        caller: &UserId,
        recipients: &[UserId],
        deck: &DeckId,
        now: Timestamp,
    ) -> Result<(CallGroup, Vec<Notice>)> {
        self.check_multicall(caller, recipients)?;
        let gid = GroupId(self.group_ids.next());
        let mut group = CallGroup {
            group_id: gid,
            caller_id: caller.clone(),
            deck_id: deck.clone(),
            legs: Vec::with_capacity(recipients.len()),
            state: GroupState::Active,
            created_at: now,
        };
        let mut out = Vec::new();
        let mut ringing = Vec::new();
        let mut missed = Vec::new();
        for r in recipients {
            let id = LegId(self.leg_ids.next());
            let available = self.presence[r].status == PresenceStatus::Available;
            self.legs.insert(
                id,
                CallLeg {
                    leg_id: id,
                    group_id: gid,
                    caller_id: caller.clone(),
                    recipient_id: r.clone(),
                    deck_id: deck.clone(),
                    state: LegState::Ringing,
                    created_at: now,
                    missed_at: None,
                    held_by: None,
                },
            );
            self.live_out.entry(caller.clone()).or_default().insert(id);
            self.live_in.entry(r.clone()).or_default().insert(id);
            group.legs.push(id);
            if available {
                ringing.push(id);
            } else {
                missed.push(id);
            }
        }
        self.groups.insert(gid, group);
        for id in ringing {
            let leg = self.leg_snapshot(id);
            let to = leg.recipient_id.clone();
            out.push(Notice::new(&to, Push::CallIncoming(leg)));
        }
        // Busy or offline recipients: the request goes straight to their
        // missed queue.
        for id in missed {
            self.set_leg(id, LegState::Missed, now);
            self.notify_both(id, Push::CallMissed, &mut out);
        }
        self.set_status(caller, PresenceStatus::Calling, now);
        self.refresh_group(gid, now);
        Ok((self.groups[&gid].clone(), out))
    }

    pub fn check_multicall(&self, caller: &UserId, recipients: &[UserId]) -> Result<()> {
        if self.status(caller)? != PresenceStatus::Available {
            return Err(Error::Busy(caller.clone()));
        }
        if recipients.is_empty() {
            return Err(Error::EmptyRecipientList);
        }
        let mut seen = BTreeSet::new();
        for r in recipients {
            if r == caller {
                return Err(Error::InvalidRecipient(r.clone(), "cannot call yourself"));
            }
            if !seen.insert(r) {
                return Err(Error::InvalidRecipient(r.clone(), "duplicate recipient"));
            }
            self.status(r)?;
        }
        Ok(())
    }

    /// Checks that `recipient` may accept `leg_id` now. Returns the leg.
    pub fn check_accept(&self, recipient: &UserId, leg_id: LegId, now: Timestamp, missed_ttl: i64) -> Result<&CallLeg> {
        let leg = self.legs.get(&leg_id).ok_or(Error::LegNotRinging(leg_id))?;
        if leg.recipient_id != *recipient {
            return Err(Error::LegNotRinging(leg_id));
        }
        if !self.status(recipient)?.is_free() {
            return Err(Error::Busy(recipient.clone()));
        }
        match leg.state {
            LegState::Ringing => {}
            LegState::Missed => {
                let group = &self.groups[&leg.group_id];
                let fresh = leg.missed_at.is_some_and(|t| now - t <= missed_ttl);
                let open = matches!(group.state, GroupState::Active | GroupState::Expired);
                let caller_free = self.status(&leg.caller_id)?.is_free();
                if !(fresh && open && caller_free) {
                    return Err(Error::StaleCall(leg_id));
                }
            }
            _ => return Err(Error::LegNotRinging(leg_id)),
        }
        if !self.status(&leg.caller_id)?.is_free() {
            return Err(Error::LegNotRinging(leg_id));
        }
        Ok(leg)
    }

    pub fn accept_call(
        &mut self,
        recipient: &UserId,
        leg_id: LegId,
        now: Timestamp,
        handshake_timeout: i64,
        missed_ttl: i64,
    ) -> Result<(PendingSession, Vec<Notice>)> {
        let leg = self.check_accept(recipient, leg_id, now, missed_ttl)?.clone();
        let caller = leg.caller_id.clone();
        let pid = PendingId(self.pending_ids.next());
        let mut out = Vec::new();

        self.set_leg(leg_id, LegState::Accepted, now);
        if let Some(g) = self.groups.get_mut(&leg.group_id) {
            g.state = GroupState::Active;
        }

        let mut to_hold: BTreeSet<LegId> = BTreeSet::new();
        for u in [&caller, recipient] {
            for map in [&self.live_in, &self.live_out] {
                to_hold.extend(map.get(u).into_iter().flatten().copied());
            }
        }
        to_hold.retain(|id| self.legs[id].state == LegState::Ringing);
        let held: Vec<LegId> = to_hold.into_iter().collect();
        for &id in &held {
            self.set_leg(id, LegState::Held, now);
            self.legs.get_mut(&id).expect("leg").held_by = Some(pid);
            self.notify_both(id, Push::CallHeld, &mut out);
        }

        let pending = PendingSession {
            pending_id: pid,
            caller_id: caller.clone(),
            recipient_id: recipient.clone(),
            deck_id: leg.deck_id.clone(),
            leg_id,
            group_id: leg.group_id,
            confirmed: BTreeSet::new(),
            deadline: now + handshake_timeout,
            held,
            state: PendingState::Waiting,
            session_id: None,
        };
        self.pendings.insert(pid, pending.clone());
        self.waiting.insert(pid);
        for u in [&caller, recipient] {
            self.engaged.insert(u.clone(), Engagement::Pending(pid));
            self.set_status(u, PresenceStatus::Pending, now);
            out.push(Notice::new(u, Push::PendingStarted(pending.clone())));
        }
        Ok((pending, out))
    }

    pub fn confirm_ready(&mut self, user: &UserId, pid: PendingId) -> Result<(Confirm, Vec<Notice>)> {
        let p = self.pendings.get_mut(&pid).ok_or(Error::UnknownPending)?;
        if !p.involves(user) {
            return Err(Error::NotParticipant);
        }
        match p.state {
            PendingState::Waiting => {}
            PendingState::Expired => return Err(Error::Expired),
            PendingState::Started | PendingState::Cancelled => return Err(Error::UnknownPending),
        }
        p.confirmed.insert(user.clone());
        let snapshot = p.clone();
        let mut out = Vec::new();
        if snapshot.confirmed.len() == 2 {
            return Ok((Confirm::Ready(snapshot), out));
        }
        for u in [&snapshot.caller_id, &snapshot.recipient_id] {
            out.push(Notice::new(u, Push::PendingConfirmed(snapshot.clone())));
        }
        Ok((Confirm::Waiting(snapshot), out))
    }

    /// Turns a fully confirmed pending into a live engagement.
    pub fn establish(&mut self, pid: PendingId, session: SessionId, now: Timestamp) -> Vec<Notice> {
        let mut out = Vec::new();
        let p = self.pendings.get_mut(&pid).expect("pending exists");
        p.state = PendingState::Started;
        p.session_id = Some(session);
        let p = p.clone();
        self.waiting.remove(&pid);
        if let Some(g) = self.groups.get_mut(&p.group_id) {
            g.state = GroupState::Connected;
        }
        let parties = [p.caller_id.clone(), p.recipient_id.clone()];
        for u in &parties {
            self.engaged.insert(u.clone(), Engagement::Session(session));
            self.set_status(u, PresenceStatus::InSession, now);
        }
        let mut touched = BTreeSet::new();
        for u in &parties {
            for id in take_set(&self.live_out, u) {
                self.set_leg(id, LegState::Withdrawn, now);
                self.notify_both(id, Push::CallWithdrawn, &mut out);
                touched.insert(self.legs[&id].group_id);
            }
        }
        for gid in touched {
            let g = self.groups.get_mut(&gid).expect("group");
            if g.state == GroupState::Active {
                g.state = GroupState::Cancelled;
            }
        }
        for u in &parties {
            for id in take_set(&self.live_in, u) {
                if self.legs[&id].state == LegState::Held {
                    self.set_leg(id, LegState::Ringing, now);
                }
                self.set_leg(id, LegState::Missed, now);
                self.notify_both(id, Push::CallMissed, &mut out);
                let gid = self.legs[&id].group_id;
                self.refresh_group(gid, now);
            }
        }
        out
    }

    fn fail_pending(&mut self, pid: PendingId, reason: CancelReason, now: Timestamp, out: &mut Vec<Notice>) {
        let p = self.pendings.get_mut(&pid).expect("pending exists");
        p.state = if reason == CancelReason::Expired {
            PendingState::Expired
        } else {
            PendingState::Cancelled
        };
        let p = p.clone();
        self.waiting.remove(&pid);
        let leg_to = match reason {
            CancelReason::CancelledByCaller => LegState::Withdrawn,
            CancelReason::CancelledByRecipient => LegState::Declined,
            CancelReason::Expired => LegState::Expired,
        };
        self.set_leg(p.leg_id, leg_to, now);
        for u in [&p.caller_id, &p.recipient_id] {
            self.engaged.remove(u);
            self.set_status(u, PresenceStatus::Available, now);
        }

        let mut touched = BTreeSet::from([p.group_id]);
        for &id in &p.held {
            let leg = &self.legs[&id];
            if leg.state != LegState::Held || leg.held_by != Some(pid) {
                continue;
            }
            let (caller, recipient, gid) = (leg.caller_id.clone(), leg.recipient_id.clone(), leg.group_id);
            touched.insert(gid);
            let other_pending = [&caller, &recipient].into_iter().find_map(|u| match self.engaged.get(u) {
                Some(Engagement::Pending(p2)) => Some(*p2),
                _ => None,
            });
            if let Some(p2) = other_pending {
                self.legs.get_mut(&id).expect("leg").held_by = Some(p2);
                self.pendings.get_mut(&p2).expect("pending").held.push(id);
                continue;
            }
            let caller_status = self.presence[&caller].status;
            let recipient_status = self.presence[&recipient].status;
            if !caller_status.is_free() {
                self.set_leg(id, LegState::Withdrawn, now);
                self.notify_both(id, Push::CallWithdrawn, out);
            } else if !recipient_status.is_free() {
                self.set_leg(id, LegState::Ringing, now);
                self.set_leg(id, LegState::Missed, now);
                self.notify_both(id, Push::CallMissed, out);
            } else {
                self.set_leg(id, LegState::Ringing, now);
                let leg = self.leg_snapshot(id);
                let to = leg.caller_id.clone();
                out.push(Notice::new(&leg.recipient_id, Push::CallIncoming(leg.clone())));
                out.push(Notice::new(&to, Push::CallIncoming(leg)));
            }
        }
        for gid in touched {
            self.refresh_group(gid, now);
        }
        for u in [&p.caller_id, &p.recipient_id] {
            self.recompute_status(u, now);
            out.push(Notice::new(
                u,
                Push::PendingCancelled {
                    pending_id: pid,
                    reason,
                },
            ));
        }
    }

    /// Fails every waiting handshake whose deadline has passed.
    pub fn expire_due(&mut self, now: Timestamp) -> Vec<Notice> {
        let due: Vec<PendingId> = self
            .waiting
            .iter()
            .filter(|id| self.pendings[id].deadline <= now)
            .copied()
            .collect();
        let mut out = Vec::new();
        for pid in due {
            self.fail_pending(pid, CancelReason::Expired, now, &mut out);
        }
        out
    }

    pub fn check_cancel(&self, user: &UserId, target: CancelTarget) -> Result<()> {
        self.status(user)?;
        match target {
            CancelTarget::Group(gid) => {
                let g = self.groups.get(&gid).ok_or(Error::UnknownTarget)?;
                if g.caller_id != *user {
                    return Err(Error::NotParticipant);
                }
            }
            CancelTarget::Leg(id) => {
                let leg = self.legs.get(&id).ok_or(Error::UnknownTarget)?;
                let is_caller = leg.caller_id == *user;
                let is_recipient = leg.recipient_id == *user;
                if !is_caller && !is_recipient {
                    return Err(Error::NotParticipant);
                }
                match leg.state {
                    LegState::Ringing => {}
                    LegState::Held if is_caller => {}
                    LegState::Missed if is_recipient => {}
                    LegState::Accepted if self.waiting_for_leg(id).is_some() => {}
                    _ => return Err(Error::LegNotRinging(id)),
                }
            }
            CancelTarget::Pending(pid) => {
                let p = self.pendings.get(&pid).ok_or(Error::UnknownTarget)?;
                if !p.involves(user) {
                    return Err(Error::NotParticipant);
                }
                if p.state != PendingState::Waiting {
                    return Err(Error::UnknownTarget);
                }
            }
        }
        Ok(())
    }

    fn waiting_for_leg(&self, leg: LegId) -> Option<PendingId> {
        self.waiting
            .iter()
            .copied()
            .find(|id| self.pendings[id].leg_id == leg)
    }

    pub fn cancel(&mut self, user: &UserId, target: CancelTarget, now: Timestamp) -> Result<Vec<Notice>> {
        self.check_cancel(user, target)?;
        let mut out = Vec::new();
        match target {
            CancelTarget::Group(gid) => {
                if self.groups[&gid].state != GroupState::Active {
                    return Ok(out);
                }
                self.groups.get_mut(&gid).expect("group").state = GroupState::Cancelled;
                let legs = self.groups[&gid].legs.clone();
                for &id in &legs {
                    if self.legs[&id].state.is_live() {
                        self.set_leg(id, LegState::Withdrawn, now);
                        self.notify_both(id, Push::CallWithdrawn, &mut out);
                    }
                }
                let pending = self.waiting.iter().copied().find(|p| self.pendings[p].group_id == gid);
                if let Some(pid) = pending {
                    self.fail_pending(pid, CancelReason::CancelledByCaller, now, &mut out);
                }
                self.recompute_status(user, now);
            }
            CancelTarget::Leg(id) => {
                let leg = self.leg_snapshot(id);
                let is_caller = leg.caller_id == *user;
                match leg.state {
                    LegState::Accepted => {
                        let pid = self.waiting_for_leg(id).expect("checked");
                        let reason = if is_caller {
                            CancelReason::CancelledByCaller
                        } else {
                            CancelReason::CancelledByRecipient
                        };
                        self.fail_pending(pid, reason, now, &mut out);
                    }
                    LegState::Missed => {
                        if let Some(s) = self.missed.get_mut(user) {
                            s.remove(&id);
                        }
                    }
                    _ if is_caller => {
                        self.set_leg(id, LegState::Withdrawn, now);
                        self.notify_both(id, Push::CallWithdrawn, &mut out);
                        self.refresh_group(leg.group_id, now);
                    }
                    _ => {
                        self.set_leg(id, LegState::Declined, now);
                        self.notify_both(id, Push::CallDeclined, &mut out);
                        self.refresh_group(leg.group_id, now);
                    }
                }
            }
            CancelTarget::Pending(pid) => {
                let reason = if self.pendings[&pid].caller_id == *user {
                    CancelReason::CancelledByCaller
                } else {
                    CancelReason::CancelledByRecipient
                };
                self.fail_pending(pid, reason, now, &mut out);
            }
        }
        Ok(out)
    }

    /// Frees both parties after a lesson and returns each one's missed calls.
    pub fn release(&mut self, users: &[&UserId], now: Timestamp, missed_ttl: i64) -> Vec<(UserId, Vec<CallLeg>)> {
        for u in users {
            self.engaged.remove(*u);
            self.set_status(u, PresenceStatus::Available, now);
        }
        users
            .iter()
            .map(|u| ((*u).clone(), self.list_missed_calls(u, now, missed_ttl)))
            .collect()
    }

    /// Missed legs still connectable, in arrival order.
    pub fn list_missed_calls(&self, user: &UserId, now: Timestamp, missed_ttl: i64) -> Vec<CallLeg> {
        self.missed
            .get(user)
            .into_iter()
            .flatten()
            .filter_map(|id| self.legs.get(id))
            .filter(|l| l.state == LegState::Missed && l.missed_at.is_some_and(|t| now - t <= missed_ttl))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests;
