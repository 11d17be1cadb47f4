//! Every ordering of accept, both confirms, a cancel and a timeout on one
//! pending session.

mod support;

use proptest::prelude::*;
use support::handshake::{check, expected, permutations, Ev, Outcome, EVENTS};

#[test]
fn all_orderings_of_the_five_events() {
    let all = permutations(&EVENTS);
    assert_eq!(all.len(), 120);
    let mut started = 0;
    for order in &all {
        for tom_cancels in [true, false] {
            check(order, tom_cancels, &[]).unwrap();
        }
        if expected(order) == Outcome::Started {
            started += 1;
        }
    }
    // accept, then both confirms in either order; each terminator is either
    // spent before the accept or comes after the confirms: 2 * 6
    assert_eq!(started, 12);
}

#[test]
fn every_prefix_is_consistent_too() {
    for order in permutations(&EVENTS) {
        for n in 0..order.len() {
            check(&order[..n], n % 2 == 0, &[]).unwrap();
        }
    }
}

fn order_strategy() -> impl Strategy<Value = Vec<Ev>> {
    Just(EVENTS.to_vec())
        .prop_shuffle()
        .prop_flat_map(|v| (1..=v.len()).prop_map(move |n| v[..n].to_vec()))
}

proptest! {
    #[test]
    fn handshake_is_total(order in order_strategy(), tom_cancels: bool, gaps in prop::collection::vec(0u8..4, 5)) {
        prop_assert_eq!(check(&order, tom_cancels, &gaps), Ok(()));
    }
}
