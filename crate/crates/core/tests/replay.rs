//! Recovering from disk gives back the live state, for twenty generated
//! runs, with and without snapshots along the way.

use peerlingo_core::gateway::store::{Journal, Store};
use peerlingo_core::simharness::{default_catalog, fuzz, Scenario};
use peerlingo_core::{Platform, State};

fn assert_same(seed: u64, got: &State, want: &State) {
    assert_eq!(got.now, want.now, "seed {seed}: clock");
    assert_eq!(got.profiles(), want.profiles(), "seed {seed}: profiles");
    assert_eq!(got.connector, want.connector, "seed {seed}: connector");
    assert_eq!(got.sessions, want.sessions, "seed {seed}: sessions");
    assert_eq!(got.timebank, want.timebank, "seed {seed}: timebank");
    assert_eq!(got.engage, want.engage, "seed {seed}: engage");
    for user in want.profiles().keys() {
        assert_eq!(got.secret_hash(user), want.secret_hash(user), "seed {seed}: secret of {user}");
    }
    assert_eq!(got, want, "seed {seed}");
}

#[test]
fn recovered_state_equals_live_state_for_twenty_runs() {
    for seed in 1..=20u64 {
        let out = fuzz(seed, 1_200, default_catalog());
        assert!(out.report.passed(), "seed {seed}: {}", out.report);
        let config = Scenario::fuzz(seed, 0).config;
        let every = if seed % 2 == 0 { 97 } else { u64::MAX };

        let dir = tempfile::tempdir().unwrap();
        let (store, mut live, _) = Store::open(dir.path(), config.clone(), default_catalog()).unwrap();
        let mut store = store.without_fsync().with_snapshot_every(every);
        for r in &out.log {
            live.apply(&r.event).unwrap();
            store.append(r, live.state()).unwrap();
        }
        assert_same(seed, live.state(), &out.state);

        let (_, recovered, pos) = Store::open(dir.path(), config.clone(), default_catalog()).unwrap();
        assert_eq!(pos, out.log.len() as u64, "seed {seed}");
        assert_same(seed, recovered.state(), &out.state);

        // a plain in-memory fold agrees as well
        let mut fold = Platform::new(config, default_catalog());
        for r in &out.log {
            fold.apply(&r.event).unwrap();
        }
        assert_same(seed, fold.state(), &out.state);
    }
}
