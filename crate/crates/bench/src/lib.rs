//! Fixtures shared by the benchmarks.

use peerlingo_core::gateway::LogRecord;
use peerlingo_core::simharness::{default_catalog, fuzz, Scenario};
use peerlingo_core::{Command, Config, Platform, PresenceStatus, UserId, UserProfile};

pub const T0: i64 = 1_767_225_600;

/// A platform with `n` registered, available users named `u0..`, half of
/// them English speakers and half Spanish.
pub fn populated(n: usize) -> Platform {
    let mut p = Platform::new(Config::default(), default_catalog());
    p.apply(&Command::Tick { at: T0 }).unwrap();
    for i in 0..n {
        let id = UserId::new(format!("u{i}"));
        let profile = UserProfile {
            user_id: id.clone(),
            display_name: id.to_string(),
            native_language: if i % 2 == 0 { "en" } else { "es" }.into(),
            country: None,
            gender: None,
            age: None,
            levels: vec![],
        };
        p.apply(&Command::Register { profile, secret_hash: String::new(), referral: None }).unwrap();
        p.apply(&Command::SetPresence { user: id, status: PresenceStatus::Available }).unwrap();
    }
    p
}

/// The command log and config of a generated run.
pub fn fuzz_log(seed: u64, events: u64) -> (Config, Vec<LogRecord>) {
    let out = fuzz(seed, events, default_catalog());
    (Scenario::fuzz(seed, 0).config, out.log)
}
