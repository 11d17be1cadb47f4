//! Invariant checks over a finished command log. The oracle replays the log
//! one record at a time and inspects the state after each position, so a
//! failure names the shortest prefix that reproduces it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::connector::{LegState, PendingState, PresenceStatus};
use crate::content::Catalog;
use crate::engage::Month;
use crate::gateway::LogRecord;
use crate::ids::{LegId, PendingId, SessionId, UserId};
use crate::platform::{Command, Platform, State};
use crate::session::SessionState;
use crate::timebank::Reason;

pub const LEGAL_TRANSITIONS: &str = "legal_transitions";
pub const SINGLE_ENGAGEMENT: &str = "single_engagement";
pub const PRESENCE_CONSISTENT: &str = "presence_consistent";
pub const HOLD_RESUME: &str = "hold_resume";
pub const LEDGER_CONSERVATION: &str = "ledger_conservation";
pub const INVITE_BONUS: &str = "invite_bonus";
pub const SETTLEMENT_ONCE: &str = "settlement_once";
pub const BALANCE_FOLD: &str = "balance_fold";
pub const LEADERBOARD_CONSERVATION: &str = "leaderboard_conservation";
pub const REPLAY: &str = "replay";
pub const PROTOCOL_TOTALITY: &str = "protocol_totality";

/// Leg edges, written out independently of the connector's own table.
/// Creation is not an edge: every leg is born ringing.
const EDGES: &[(LegState, LegState)] = {
    use LegState::*;
    &[
        (Ringing, Held),
        (Ringing, Withdrawn),
        (Ringing, Missed),
        (Ringing, Expired),
        (Ringing, Accepted),
        (Ringing, Declined),
        (Held, Ringing),
        (Held, Withdrawn),
        (Held, Expired),
        // a missed call connected after the recipient frees up
        (Missed, Accepted),
        // the handshake on an accepted leg failed
        (Accepted, Declined),
        (Accepted, Withdrawn),
        (Accepted, Expired),
    ]
};

pub fn is_legal_edge(from: LegState, to: LegState) -> bool {
    EDGES.contains(&(from, to))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// First log position at which the check failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Earliest failing position over all checks.
    pub fn first_failure(&self) -> Option<u64> {
        self.failures().filter_map(|c| c.position).min()
    }

    pub(crate) fn push(&mut self, check: Check) {
        self.checks.push(check);
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name)?;
            if let Some(p) = c.position {
                write!(f, " at position {p}")?;
            }
            if let Some(d) = &c.detail {
                write!(f, ": {d}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// First failure per check name, in a fixed order.
struct Acc {
    order: Vec<&'static str>,
    failed: BTreeMap<&'static str, (Option<u64>, String)>,
}

impl Acc {
    fn new(order: &[&'static str]) -> Self {
        Acc {
            order: order.to_vec(),
            failed: BTreeMap::new(),
        }
    }

    fn fail(&mut self, name: &'static str, position: Option<u64>, detail: impl FnOnce() -> String) {
        self.failed.entry(name).or_insert_with(|| (position, detail()));
    }

    fn report(self) -> OracleReport {
        let mut r = OracleReport::default();
        for name in self.order {
            let failed = self.failed.get(name);
            r.push(Check {
                name: name.to_owned(),
                passed: failed.is_none(),
                position: failed.and_then(|f| f.0),
                detail: failed.map(|f| f.1.clone()),
            });
        }
        r
    }
}

/// Replays `records` from an empty state and checks every invariant.
pub fn check_log(config: &Config, catalog: Arc<Catalog>, records: &[LogRecord]) -> OracleReport {
    let mut acc = Acc::new(&[
        REPLAY,
        LEGAL_TRANSITIONS,
        SINGLE_ENGAGEMENT,
        PRESENCE_CONSISTENT,
        HOLD_RESUME,
        SETTLEMENT_ONCE,
        BALANCE_FOLD,
        LEDGER_CONSERVATION,
        INVITE_BONUS,
        LEADERBOARD_CONSERVATION,
    ]);
    let mut platform = Platform::new(config.clone(), catalog);
    let mut shadow: BTreeMap<LegId, LegState> = BTreeMap::new();
    let mut fold: BTreeMap<UserId, i64> = BTreeMap::new();
    let mut settled: BTreeSet<(SessionId, bool)> = BTreeSet::new();
    let mut entries_seen = 0usize;
    let mut tokens: BTreeSet<String> = BTreeSet::new();

    for (i, rec) in records.iter().enumerate() {
        let pos = rec.position;
        if pos != i as u64 + 1 {
            acc.fail(REPLAY, Some(pos), || format!("expected position {}", i + 1));
            break;
        }
        let waiting_before: Vec<PendingId> = platform
            .state()
            .connector
            .waiting_pendings()
            .map(|p| p.pending_id)
            .collect();
        if let Err(e) = platform.apply(&rec.event) {
            acc.fail(REPLAY, Some(pos), || format!("{} failed on replay: {e}", rec.event.name()));
            break;
        }
        match &rec.event {
            Command::Register {
                referral: Some(t), ..
            }
            | Command::InviteRedeem { token: t, .. } => {
                tokens.insert(t.clone());
            }
            _ => {}
        }
        let trace = platform.drain_trace();
        let state = platform.state();

        // leg edges, and continuity with what we saw before
        let mut touched: BTreeSet<LegId> = BTreeSet::new();
        for t in &trace {
            let known = shadow.get(&t.leg_id).copied().unwrap_or(LegState::Ringing);
            if known != t.from {
                acc.fail(LEGAL_TRANSITIONS, Some(pos), || {
                    format!("{} reported leaving {:?} but was {:?}", t.leg_id, t.from, known)
                });
            }
            if !is_legal_edge(t.from, t.to) {
                acc.fail(LEGAL_TRANSITIONS, Some(pos), || {
                    format!("{} moved {:?} -> {:?}", t.leg_id, t.from, t.to)
                });
            }
            shadow.insert(t.leg_id, t.to);
            touched.insert(t.leg_id);
        }
        let mut next = shadow.keys().next_back().map_or(1, |l| l.0 + 1);
        while let Some(leg) = state.connector.leg(LegId(next)) {
            shadow.entry(leg.leg_id).or_insert(LegState::Ringing);
            touched.insert(leg.leg_id);
            next += 1;
        }
        for id in &touched {
            let actual = state.connector.leg(*id).map(|l| l.state);
            if actual != shadow.get(id).copied() {
                acc.fail(LEGAL_TRANSITIONS, Some(pos), || {
                    format!("{id} is {actual:?} without a traced transition")
                });
            }
        }

        check_engagement(state, pos, &mut acc);
        check_holds(state, &waiting_before, &touched, pos, &mut acc);

        // ledger: every new entry, folded independently
        let entries = state.timebank.entries();
        for e in &entries[entries_seen..] {
            *fold.entry(e.user_id.clone()).or_default() += e.delta_seconds;
            let teach = match e.reason {
                Reason::TeachCredit => Some(true),
                Reason::LearnDebit => Some(false),
                _ => None,
            };
            if let Some(teach) = teach {
                let ok = e.session_ref.is_some_and(|s| settled.insert((s, teach)));
                if !ok {
                    acc.fail(SETTLEMENT_ONCE, Some(pos), || {
                        format!("{:?} for {:?} written twice or without a session", e.reason, e.session_ref)
                    });
                }
            }
            if e.reason == Reason::InviteBonus && e.delta_seconds != config.invite_bonus_s {
                acc.fail(INVITE_BONUS, Some(pos), || format!("bonus of {} s", e.delta_seconds));
            }
        }
        for e in &entries[entries_seen..] {
            let live = state.timebank.balance(&e.user_id).map(|b| b.seconds).ok();
            let folded = fold.get(&e.user_id).copied();
            if live != folded {
                acc.fail(BALANCE_FOLD, Some(pos), || {
                    format!("{} balance {live:?} but entries sum to {folded:?}", e.user_id)
                });
            }
            if folded.is_some_and(|b| b < 0) {
                acc.fail(BALANCE_FOLD, Some(pos), || format!("{} went negative", e.user_id));
            }
        }
        entries_seen = entries.len();
        check_conservation(state, config, &tokens, pos, &mut acc);
    }

    let state = platform.state();
    let last = records.last().map(|r| r.position);
    for s in state.sessions.all() {
        let Some(sum) = &s.summary else { continue };
        if s.state != SessionState::Ended {
            continue;
        }
        let credit: i64 = state
            .timebank
            .entries()
            .iter()
            .filter(|e| e.session_ref == Some(s.session_id))
            .map(|e| {
                if e.reason == Reason::TeachCredit && e.user_id == s.teacher_id {
                    e.delta_seconds
                } else if e.reason == Reason::LearnDebit && e.user_id == s.student_id {
                    -e.delta_seconds
                } else {
                    i64::MIN / 4
                }
            })
            .sum();
        if credit != 2 * sum.duration_s {
            acc.fail(SETTLEMENT_ONCE, last, || {
                format!("{} lasted {} s but moved {credit} s", s.session_id, sum.duration_s)
            });
        }
    }
    check_leaderboard(&platform, last, &mut acc);
    acc.report()
}

fn check_engagement(state: &State, pos: u64, acc: &mut Acc) {
    let mut count: BTreeMap<&UserId, (u32, Option<PresenceStatus>)> = BTreeMap::new();
    for p in state.connector.waiting_pendings() {
        for u in [&p.caller_id, &p.recipient_id] {
            let e = count.entry(u).or_default();
            e.0 += 1;
            e.1 = Some(PresenceStatus::Pending);
        }
    }
    for s in state.sessions.running() {
        for u in [&s.teacher_id, &s.student_id] {
            let e = count.entry(u).or_default();
            e.0 += 1;
            e.1 = Some(PresenceStatus::InSession);
        }
    }
    for (u, (n, _)) in &count {
        if *n > 1 {
            acc.fail(SINGLE_ENGAGEMENT, Some(pos), || format!("{u} has {n} engagements"));
        }
    }
    for p in state.connector.presences() {
        let expected = count.get(&p.user_id).and_then(|c| c.1);
        let engaged = matches!(p.status, PresenceStatus::Pending | PresenceStatus::InSession);
        let ok = match expected {
            Some(s) => p.status == s,
            None => !engaged,
        };
        if !ok {
            acc.fail(PRESENCE_CONSISTENT, Some(pos), || {
                format!("{} shows {:?} but is engaged as {expected:?}", p.user_id, p.status)
            });
        }
    }
}

/// Held legs belong to a live handshake; when a handshake fails its held
/// legs leave hold, and ring again when nothing stands in the way.
fn check_holds(state: &State, waiting_before: &[PendingId], touched: &BTreeSet<LegId>, pos: u64, acc: &mut Acc) {
    let c = &state.connector;
    let holder_waiting = |pid: Option<PendingId>| {
        pid.and_then(|p| c.pending(p))
            .is_some_and(|p| p.state == PendingState::Waiting)
    };
    for id in touched {
        let Some(leg) = c.leg(*id) else { continue };
        if leg.state == LegState::Held && !holder_waiting(leg.held_by) {
            acc.fail(HOLD_RESUME, Some(pos), || format!("{id} is held by a finished handshake"));
        }
    }
    for pid in waiting_before {
        let Some(p) = c.pending(*pid) else { continue };
        if !matches!(p.state, PendingState::Cancelled | PendingState::Expired) {
            continue;
        }
        for id in &p.held {
            let Some(leg) = c.leg(*id) else { continue };
            if leg.state == LegState::Held {
                if !holder_waiting(leg.held_by) {
                    acc.fail(HOLD_RESUME, Some(pos), || format!("{id} stayed held after {pid} failed"));
                }
                continue;
            }
            let free = |u: &UserId| c.status(u).is_ok_and(|s| s.is_free());
            let group_open = c
                .group(leg.group_id)
                .is_some_and(|g| g.state == crate::connector::GroupState::Active);
            if free(&leg.caller_id) && free(&leg.recipient_id) && group_open && leg.state != LegState::Ringing {
                acc.fail(HOLD_RESUME, Some(pos), || {
                    format!("{id} ended {:?} after {pid} failed with both parties free", leg.state)
                });
            }
        }
    }
}

fn check_conservation(state: &State, config: &Config, tokens: &BTreeSet<String>, pos: u64, acc: &mut Acc) {
    let (mut teach, mut learn, mut bonus) = (0i64, 0i64, 0i64);
    for e in state.timebank.entries() {
        match e.reason {
            Reason::TeachCredit => teach += e.delta_seconds,
            Reason::LearnDebit => learn += e.delta_seconds,
            Reason::InviteBonus => bonus += e.delta_seconds,
            _ => {}
        }
    }
    if teach + learn != 0 {
        acc.fail(LEDGER_CONSERVATION, Some(pos), || {
            format!("teach credits {teach} s, learn debits {learn} s")
        });
    }
    let expected = config.invite_bonus_s * tokens.len() as i64;
    if bonus != expected {
        acc.fail(INVITE_BONUS, Some(pos), || {
            format!("{} tokens redeemed but {bonus} s of bonus (expected {expected})", tokens.len())
        });
    }
}

fn check_leaderboard(platform: &Platform, last: Option<u64>, acc: &mut Acc) {
    let mut per_month: BTreeMap<Month, i64> = BTreeMap::new();
    for s in platform.state().sessions.all() {
        if let Some(sum) = &s.summary {
            *per_month.entry(Month::of(sum.ended_at)).or_default() += sum.duration_s;
        }
    }
    for (month, total) in per_month {
        let rows: i64 = platform
            .leaderboard(Some(month), usize::MAX)
            .iter()
            .map(|r| r.activity_seconds)
            .sum();
        if rows != 2 * total {
            acc.fail(LEADERBOARD_CONSERVATION, last, || {
                format!("{month}: rows sum to {rows} s, sessions to {total} s")
            });
        }
    }
}
