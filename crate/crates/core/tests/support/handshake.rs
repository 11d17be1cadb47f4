//! Handshake driver: ana calls tom and bob, tom is already calling ivan.
//! When tom accepts, ana's leg to bob and tom's leg to ivan go on hold.

use peerlingo_core::connector::{CancelTarget, PendingState};
use peerlingo_core::simharness::default_catalog;
use peerlingo_core::{Command, Config, LegId, LegState, PendingId, Platform, PresenceStatus, UserId, UserProfile};

const T0: i64 = 1_767_225_600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ev {
    Accept,
    ConfirmTom,
    ConfirmAna,
    Cancel,
    Timeout,
}

pub const EVENTS: [Ev; 5] = [Ev::Accept, Ev::ConfirmTom, Ev::ConfirmAna, Ev::Cancel, Ev::Timeout];

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Untouched,
    Waiting,
    Started,
    Aborted,
}

/// What should happen, from the order alone.
pub fn expected(order: &[Ev]) -> Outcome {
    let Some(a) = order.iter().position(|e| *e == Ev::Accept) else {
        return Outcome::Untouched;
    };
    let after = &order[a + 1..];
    let end = after.iter().position(|e| matches!(e, Ev::Cancel | Ev::Timeout));
    let window = &after[..end.unwrap_or(after.len())];
    let both = window.contains(&Ev::ConfirmTom) && window.contains(&Ev::ConfirmAna);
    match (both, end) {
        (true, _) => Outcome::Started,
        (false, Some(_)) => Outcome::Aborted,
        (false, None) => Outcome::Waiting,
    }
}

fn u(s: &str) -> UserId {
    UserId::from(s)
}

struct Fixture {
    p: Platform,
    ana_leg_to_tom: LegId,
    held: Vec<LegId>,
    prior: [PresenceStatus; 2],
}

fn apply(p: &mut Platform, cmd: Command) -> bool {
    p.apply(&cmd).is_ok()
}

fn setup() -> Fixture {
    let mut p = Platform::new(Config::default(), default_catalog());
    assert!(apply(&mut p, Command::Tick { at: T0 }));
    for (id, lang) in [("tom", "en"), ("ana", "es"), ("bob", "en"), ("ivan", "ru")] {
        let profile = UserProfile {
            user_id: u(id),
            display_name: id.into(),
            native_language: lang.into(),
            country: None,
            gender: None,
            age: None,
            levels: vec![],
        };
        assert!(apply(&mut p, Command::Register { profile, secret_hash: String::new(), referral: None }));
        assert!(apply(&mut p, Command::SetPresence { user: u(id), status: PresenceStatus::Available }));
    }
    let call = |p: &mut Platform, from: &str, to: &[&str]| {
        let cmd = Command::Multicall {
            user: u(from),
            recipients: to.iter().map(|s| u(s)).collect(),
            deck_id: "greetings-A1".into(),
        };
        assert!(apply(p, cmd));
    };
    call(&mut p, "tom", &["ivan"]);
    call(&mut p, "ana", &["tom", "bob"]);
    let leg = |p: &Platform, from: &str, to: &str| {
        p.state()
            .connector
            .legs()
            .find(|l| l.caller_id == u(from) && l.recipient_id == u(to))
            .unwrap()
            .leg_id
    };
    let ana_leg_to_tom = leg(&p, "ana", "tom");
    let held = vec![leg(&p, "ana", "bob"), leg(&p, "tom", "ivan")];
    let prior = [status(&p, "tom"), status(&p, "ana")];
    assert_eq!(prior, [PresenceStatus::Calling, PresenceStatus::Calling]);
    Fixture { p, ana_leg_to_tom, held, prior }
}

fn status(p: &Platform, who: &str) -> PresenceStatus {
    p.state().connector.status(&u(who)).unwrap()
}

fn pending_id(p: &Platform) -> PendingId {
    p.state().connector.pendings().next().map(|x| x.pending_id).unwrap_or(PendingId(1))
}

/// Runs `order`, with `gaps[i]` one-second ticks before event `i`.
fn run(order: &[Ev], tom_cancels: bool, gaps: &[u8]) -> (Fixture, Outcome) {
    let mut f = setup();
    for (i, ev) in order.iter().enumerate() {
        for _ in 0..gaps.get(i).copied().unwrap_or(0) {
            let at = f.p.now() + 1;
            assert!(apply(&mut f.p, Command::Tick { at }));
        }
        let pid = pending_id(&f.p);
        let cmd = match ev {
            Ev::Accept => Command::Accept { user: u("tom"), leg_id: f.ana_leg_to_tom },
            Ev::ConfirmTom => Command::ConfirmReady { user: u("tom"), pending_id: pid },
            Ev::ConfirmAna => Command::ConfirmReady { user: u("ana"), pending_id: pid },
            Ev::Cancel => Command::Cancel {
                user: u(if tom_cancels { "tom" } else { "ana" }),
                target: CancelTarget::Pending(pid),
            },
            Ev::Timeout => Command::Tick { at: f.p.now() + Config::default().handshake_timeout_s },
        };
        // rejected commands are fine; the outcome is judged on state
        let _ = f.p.apply(&cmd);
    }
    let c = &f.p.state().connector;
    let outcome = match c.pendings().next().map(|x| x.state) {
        None => Outcome::Untouched,
        Some(PendingState::Waiting) => Outcome::Waiting,
        Some(PendingState::Started) => Outcome::Started,
        Some(PendingState::Cancelled | PendingState::Expired) => Outcome::Aborted,
    };
    (f, outcome)
}

pub fn check(order: &[Ev], tom_cancels: bool, gaps: &[u8]) -> Result<(), String> {
    let (f, got) = run(order, tom_cancels, gaps);
    let want = expected(order);
    if got != want {
        return Err(format!("{order:?}: expected {want:?}, got {got:?}"));
    }
    let c = &f.p.state().connector;
    let sessions = f.p.state().sessions.all().count();
    let statuses = [status(&f.p, "tom"), status(&f.p, "ana")];
    let held: Vec<LegState> = f.held.iter().map(|id| c.leg(*id).unwrap().state).collect();
    let ok = match got {
        Outcome::Started => sessions == 1 && statuses == [PresenceStatus::InSession; 2],
        Outcome::Waiting => sessions == 0 && statuses == [PresenceStatus::Pending; 2] && held == [LegState::Held; 2],
        Outcome::Untouched | Outcome::Aborted => {
            sessions == 0 && statuses == f.prior && held == [LegState::Ringing; 2]
        }
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{order:?} {got:?}: sessions {sessions}, statuses {statuses:?}, held legs {held:?}"))
    }
}

pub fn permutations(items: &[Ev]) -> Vec<Vec<Ev>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

