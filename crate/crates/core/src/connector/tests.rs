use super::*;

const TIMEOUT: i64 = 60;
const TTL: i64 = 600;

fn u(s: &str) -> UserId {
    UserId::from(s)
}

fn deck() -> DeckId {
    DeckId::from("greetings-A1")
}

fn online(names: &[&str]) -> Connector {
    let mut c = Connector::new();
    for n in names {
        c.register(&u(n), 0);
        c.set_presence(&u(n), PresenceStatus::Available, 0).unwrap();
    }
    c
}

fn status(c: &Connector, n: &str) -> PresenceStatus {
    c.status(&u(n)).unwrap()
}

fn leg_to(c: &Connector, g: &CallGroup, n: &str) -> CallLeg {
    g.legs
        .iter()
        .map(|id| c.leg(*id).unwrap().clone())
        .find(|l| l.recipient_id == u(n))
        .unwrap()
}

fn call(c: &mut Connector, from: &str, to: &[&str], now: Timestamp) -> CallGroup {
    let rs: Vec<UserId> = to.iter().map(|n| u(n)).collect();
    c.initiate_multicall(&u(from), &rs, &deck(), now).unwrap().0
}

fn visible(c: &Connector, n: &str) -> BTreeSet<LegId> {
    c.visible_inbound(&u(n)).iter().map(|l| l.leg_id).collect()
}

#[test]
fn presence_basics() {
    let mut c = Connector::new();
    c.register(&u("u1"), 0);
    assert_eq!(status(&c, "u1"), PresenceStatus::Offline);
    let (p, _) = c.set_presence(&u("u1"), PresenceStatus::Available, 5).unwrap();
    assert_eq!((p.status, p.since), (PresenceStatus::Available, 5));
    assert!(matches!(
        c.set_presence(&u("ghost"), PresenceStatus::Available, 5),
        Err(Error::UnknownUser(_))
    ));
}

#[test]
fn offline_turns_ringing_legs_missed() {
    let mut c = online(&["a", "b", "u1"]);
    let g1 = call(&mut c, "a", &["u1"], 1);
    let g2 = call(&mut c, "b", &["u1"], 2);
    c.set_presence(&u("u1"), PresenceStatus::Offline, 3).unwrap();
    for g in [&g1, &g2] {
        assert_eq!(leg_to(&c, g, "u1").state, LegState::Missed);
    }
    // both groups are dead, so both callers are free again
    assert_eq!(status(&c, "a"), PresenceStatus::Available);
    assert_eq!(c.group(g1.group_id).unwrap().state, GroupState::Expired);
}

#[test]
fn multicall_rings_available_and_queues_the_rest() {
    let mut c = online(&["a", "b"]);
    c.register(&u("c"), 0);
    let g = call(&mut c, "a", &["b", "c"], 1);
    assert_eq!(leg_to(&c, &g, "b").state, LegState::Ringing);
    assert_eq!(leg_to(&c, &g, "c").state, LegState::Missed);
    assert_eq!(status(&c, "a"), PresenceStatus::Calling);
    assert_eq!(c.list_missed_calls(&u("c"), 1, TTL).len(), 1);
}

#[test]
fn multicall_guards() {
    let mut c = online(&["a", "b"]);
    assert_eq!(c.initiate_multicall(&u("a"), &[], &deck(), 0).unwrap_err(), Error::EmptyRecipientList);
    assert!(matches!(
        c.initiate_multicall(&u("a"), &[u("a")], &deck(), 0),
        Err(Error::InvalidRecipient(..))
    ));
    assert!(matches!(
        c.initiate_multicall(&u("a"), &[u("b"), u("b")], &deck(), 0),
        Err(Error::InvalidRecipient(..))
    ));
    call(&mut c, "a", &["b"], 0);
    assert_eq!(
        c.initiate_multicall(&u("a"), &[u("b")], &deck(), 0).unwrap_err(),
        Error::Busy(u("a"))
    );
}

#[test]
fn accept_holds_the_other_legs() {
    let mut c = online(&["a", "b", "c"]);
    let g = call(&mut c, "a", &["b", "c"], 1);
    let (p, _) = c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    assert_eq!((p.caller_id.clone(), p.recipient_id.clone()), (u("a"), u("b")));
    assert_eq!(p.deadline, 2 + TIMEOUT);
    assert_eq!(leg_to(&c, &g, "c").state, LegState::Held);
    assert!(visible(&c, "c").is_empty());
    assert_eq!(status(&c, "a"), PresenceStatus::Pending);
    assert_eq!(status(&c, "b"), PresenceStatus::Pending);
}

#[test]
fn accept_holds_the_recipients_own_outgoing_calls() {
    let mut c = online(&["a", "b", "d"]);
    let gb = call(&mut c, "b", &["d"], 1);
    let ga = call(&mut c, "a", &["b"], 2);
    c.accept_call(&u("b"), leg_to(&c, &ga, "b").leg_id, 3, TIMEOUT, TTL).unwrap();
    assert_eq!(leg_to(&c, &gb, "d").state, LegState::Held);
}

#[test]
fn accept_errors() {
    let mut c = online(&["a", "b", "x"]);
    assert_eq!(
        c.accept_call(&u("b"), LegId(99), 0, TIMEOUT, TTL).unwrap_err(),
        Error::LegNotRinging(LegId(99))
    );
    let g = call(&mut c, "a", &["b"], 0);
    let leg = leg_to(&c, &g, "b").leg_id;
    assert_eq!(
        c.accept_call(&u("x"), leg, 0, TIMEOUT, TTL).unwrap_err(),
        Error::LegNotRinging(leg)
    );
}

#[test]
fn two_confirms_start_a_session() {
    let mut c = online(&["a", "b", "c"]);
    let g = call(&mut c, "a", &["b", "c"], 1);
    let (p, _) = c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    assert!(matches!(c.confirm_ready(&u("a"), p.pending_id).unwrap().0, Confirm::Waiting(_)));
    assert!(matches!(c.confirm_ready(&u("b"), p.pending_id).unwrap().0, Confirm::Ready(_)));
    assert_eq!(c.confirm_ready(&u("c"), p.pending_id).unwrap_err(), Error::NotParticipant);
    let out = c.establish(p.pending_id, SessionId(1), 3);
    assert_eq!(leg_to(&c, &g, "c").state, LegState::Withdrawn);
    assert!(out
        .iter()
        .any(|n| n.to == u("c") && matches!(n.push, Push::CallWithdrawn(_))));
    assert_eq!(c.group(g.group_id).unwrap().state, GroupState::Connected);
    let accepted = g
        .legs
        .iter()
        .filter(|id| c.leg(**id).unwrap().state == LegState::Accepted)
        .count();
    assert_eq!(accepted, 1);
    assert_eq!(status(&c, "a"), PresenceStatus::InSession);
    assert_eq!(c.engagement(&u("b")), Some(Engagement::Session(SessionId(1))));
}

#[test]
fn expiry_resumes_held_legs() {
    let mut c = online(&["a", "b", "c"]);
    let g = call(&mut c, "a", &["b", "c"], 1);
    let before = visible(&c, "c");
    let (p, _) = c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    c.confirm_ready(&u("a"), p.pending_id).unwrap();
    assert!(c.expire_due(2 + TIMEOUT - 1).is_empty());
    c.expire_due(2 + TIMEOUT);
    assert_eq!(c.confirm_ready(&u("b"), p.pending_id).unwrap_err(), Error::Expired);
    assert_eq!(visible(&c, "c"), before);
    assert_eq!(status(&c, "a"), PresenceStatus::Calling);
    assert_eq!(status(&c, "b"), PresenceStatus::Available);
    assert_eq!(leg_to(&c, &g, "b").state, LegState::Expired);
}

#[test]
fn recipient_cancel_resumes_callers_other_leg() {
    let mut c = online(&["a", "b", "c"]);
    let g = call(&mut c, "a", &["b", "c"], 1);
    let (p, _) = c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    c.cancel(&u("b"), CancelTarget::Pending(p.pending_id), 3).unwrap();
    assert_eq!(leg_to(&c, &g, "c").state, LegState::Ringing);
    assert_eq!(leg_to(&c, &g, "b").state, LegState::Declined);
    assert_eq!(status(&c, "a"), PresenceStatus::Calling);
    assert_eq!(status(&c, "b"), PresenceStatus::Available);
}

#[test]
fn caller_cancels_group() {
    let mut c = online(&["a", "b", "c", "d"]);
    let g = call(&mut c, "a", &["b", "c", "d"], 1);
    let out = c.cancel(&u("a"), CancelTarget::Group(g.group_id), 2).unwrap();
    let withdrawn = out
        .iter()
        .filter(|n| n.to != u("a") && matches!(n.push, Push::CallWithdrawn(_)))
        .count();
    assert_eq!(withdrawn, 3);
    assert_eq!(status(&c, "a"), PresenceStatus::Available);
    assert_eq!(c.group(g.group_id).unwrap().state, GroupState::Cancelled);
}

#[test]
fn stranger_cannot_cancel() {
    let mut c = online(&["a", "b", "x"]);
    let g = call(&mut c, "a", &["b"], 1);
    assert_eq!(
        c.cancel(&u("x"), CancelTarget::Group(g.group_id), 2).unwrap_err(),
        Error::NotParticipant
    );
    assert_eq!(
        c.cancel(&u("x"), CancelTarget::Group(GroupId(42)), 2).unwrap_err(),
        Error::UnknownTarget
    );
}

#[test]
fn decline_affects_one_leg() {
    let mut c = online(&["a", "b", "c"]);
    let g = call(&mut c, "a", &["b", "c"], 1);
    let out = c.cancel(&u("b"), CancelTarget::Leg(leg_to(&c, &g, "b").leg_id), 2).unwrap();
    assert!(out
        .iter()
        .any(|n| n.to == u("a") && matches!(n.push, Push::CallDeclined(_))));
    assert_eq!(leg_to(&c, &g, "c").state, LegState::Ringing);
    assert_eq!(status(&c, "a"), PresenceStatus::Calling);
}

#[test]
fn missed_calls_queue_while_busy() {
    let mut c = online(&["a", "b", "x", "y"]);
    let g = call(&mut c, "a", &["b"], 1);
    let (p, _) = c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    c.confirm_ready(&u("a"), p.pending_id).unwrap();
    c.confirm_ready(&u("b"), p.pending_id).unwrap();
    c.establish(p.pending_id, SessionId(1), 3);
    assert!(c.list_missed_calls(&u("b"), 3, TTL).is_empty());

    let gx = call(&mut c, "x", &["b"], 10);
    let gy = call(&mut c, "y", &["b"], 20);
    assert_eq!(leg_to(&c, &gx, "b").state, LegState::Missed);
    let released = c.release(&[&u("a"), &u("b")], 30, TTL);
    let b_missed: Vec<UserId> = released
        .iter()
        .find(|(who, _)| *who == u("b"))
        .unwrap()
        .1
        .iter()
        .map(|l| l.caller_id.clone())
        .collect();
    assert_eq!(b_missed, vec![u("x"), u("y")]);

    // connecting a missed call works while the caller is free
    let leg = leg_to(&c, &gy, "b").leg_id;
    c.accept_call(&u("b"), leg, 31, TIMEOUT, TTL).unwrap();
    assert_eq!(status(&c, "y"), PresenceStatus::Pending);
}

#[test]
fn missed_calls_go_stale() {
    let mut c = online(&["a", "x"]);
    c.register(&u("b"), 0);
    let g = call(&mut c, "a", &["b"], 100);
    c.set_presence(&u("b"), PresenceStatus::Available, 100).unwrap();
    let leg = leg_to(&c, &g, "b").leg_id;
    assert_eq!(c.list_missed_calls(&u("b"), 100 + TTL, TTL).len(), 1);
    assert!(c.list_missed_calls(&u("b"), 100 + TTL + 1, TTL).is_empty());
    assert_eq!(
        c.accept_call(&u("b"), leg, 100 + TTL + 1, TIMEOUT, TTL).unwrap_err(),
        Error::StaleCall(leg)
    );
    // the caller went offline: stale too
    let g2 = {
        c.register(&u("z"), 0);
        call(&mut c, "x", &["z"], 200)
    };
    c.set_presence(&u("z"), PresenceStatus::Available, 201).unwrap();
    c.set_presence(&u("x"), PresenceStatus::Offline, 202).unwrap();
    let leg2 = leg_to(&c, &g2, "z").leg_id;
    assert_eq!(
        c.accept_call(&u("z"), leg2, 203, TIMEOUT, TTL).unwrap_err(),
        Error::StaleCall(leg2)
    );
}

#[test]
fn engaged_users_cannot_change_presence() {
    let mut c = online(&["a", "b"]);
    let g = call(&mut c, "a", &["b"], 1);
    c.accept_call(&u("b"), leg_to(&c, &g, "b").leg_id, 2, TIMEOUT, TTL).unwrap();
    assert_eq!(
        c.set_presence(&u("a"), PresenceStatus::Offline, 3).unwrap_err(),
        Error::Busy(u("a"))
    );
}

#[test]
fn transition_table() {
    use LegState::*;
    let all = [Ringing, Held, Withdrawn, Missed, Expired, Accepted, Declined];
    let legal: BTreeSet<(LegState, LegState)> = [
        (Ringing, Held),
        (Ringing, Withdrawn),
        (Ringing, Missed),
        (Ringing, Expired),
        (Ringing, Accepted),
        (Ringing, Declined),
        (Held, Ringing),
        (Held, Withdrawn),
        (Held, Expired),
        (Missed, Accepted),
        (Accepted, Declined),
        (Accepted, Withdrawn),
        (Accepted, Expired),
    ]
    .into_iter()
    .collect();
    for a in all {
        for b in all {
            assert_eq!(a.can_transition_to(b), legal.contains(&(a, b)), "{a:?} -> {b:?}");
        }
    }
}
