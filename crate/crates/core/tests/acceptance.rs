//! Acceptance run: one PASS/FAIL line per criterion, then a nonzero exit if
//! any failed. Tolerances are exact unless stated on the line.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use peerlingo_core::content::{load_deck, render_slide_view, FieldKind, LangCode, Role, SAMPLE_DECKS};
use peerlingo_core::engage::{AccoladeKind, ControllerDecision, Month};
use peerlingo_core::gateway::store::{Journal, Store};
use peerlingo_core::simharness::oracle::{HOLD_RESUME, LEGAL_TRANSITIONS, SINGLE_ENGAGEMENT};
use peerlingo_core::simharness::{default_catalog, fuzz, run_scenario, RunOutput, Scenario};
use peerlingo_core::timebank::Reason;
use peerlingo_core::{Command, Config, SetId, UserId};
use support::handshake::{check, expected, permutations, Outcome, EVENTS};
use support::lessons::{u, Driver};

const FUZZ_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const FUZZ_EVENTS: u64 = 10_000;
const FUZZ_BUDGET: Duration = Duration::from_secs(60);
const SCENARIOS: [&str; 6] = ["idle", "lesson-600", "auto-end", "invite", "storm", "full-lesson"];

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::from_toml_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ledger_sum(out: &RunOutput, reason: Reason) -> i64 {
    out.state.timebank.entries().iter().filter(|e| e.reason == reason).map(|e| e.delta_seconds).sum()
}

fn connector_safety() -> Verdict {
    let started = Instant::now();
    let mut transitions = 0usize;
    for seed in FUZZ_SEEDS {
        let out = fuzz(seed, FUZZ_EVENTS, default_catalog());
        for name in [LEGAL_TRANSITIONS, SINGLE_ENGAGEMENT, HOLD_RESUME] {
            let c = out.report.check(name).ok_or(format!("seed {seed}: no {name} check"))?;
            ensure(c.passed, || format!("seed {seed}: {name} at {:?}: {:?}", c.position, c.detail))?;
        }
        ensure(out.report.passed(), || format!("seed {seed}:\n{}", out.report))?;
        transitions += out.log.len();
    }
    let took = started.elapsed();
    ensure(took < FUZZ_BUDGET, || format!("took {took:.1?}, budget {FUZZ_BUDGET:?}"))?;
    Ok(format!("20 seeds x {FUZZ_EVENTS} events, {transitions} records, {took:.1?} < 60 s"))
}

fn timebank_conservation() -> Verdict {
    let mut runs: Vec<(String, i64, RunOutput)> = SCENARIOS
        .iter()
        .map(|n| {
            let sc = scenario(n);
            (n.to_string(), sc.config.invite_bonus_s, run_scenario(&sc, default_catalog()).unwrap())
        })
        .collect();
    for seed in [1, 2, 3] {
        runs.push((format!("fuzz {seed}"), Scenario::fuzz(seed, 0).config.invite_bonus_s, fuzz(seed, 3_000, default_catalog())));
    }
    let mut bonus_tokens = 0;
    for (name, bonus, out) in &runs {
        let teach = ledger_sum(out, Reason::TeachCredit);
        let learn = ledger_sum(out, Reason::LearnDebit);
        ensure(teach + learn == 0, || format!("{name}: teach {teach} + learn {learn} != 0"))?;
        let tokens: BTreeSet<&str> = out
            .log
            .iter()
            .filter_map(|r| match &r.event {
                Command::InviteRedeem { token, .. } => Some(token.as_str()),
                Command::Register { referral: Some(t), .. } => Some(t.as_str()),
                _ => None,
            })
            .collect();
        let got = ledger_sum(out, Reason::InviteBonus);
        ensure(got == bonus * tokens.len() as i64, || format!("{name}: bonus {got} for {} tokens", tokens.len()))?;
        bonus_tokens += tokens.len();
    }
    let invite = &runs.iter().find(|r| r.0 == "invite").unwrap().2;
    ensure(ledger_sum(invite, Reason::InviteBonus) == 1800, || "invite scenario bonus is not 1800 s".into())?;
    Ok(format!("{} runs, teach + learn = 0, {bonus_tokens} tokens x 1800 s", runs.len()))
}

fn minute_for_minute() -> Verdict {
    let out = run_scenario(&scenario("lesson-600"), default_catalog()).unwrap();
    let delta = |who: &str, reason| -> i64 {
        out.state
            .timebank
            .entries()
            .iter()
            .filter(|e| e.user_id == UserId::from(who) && e.reason == reason)
            .map(|e| e.delta_seconds)
            .sum()
    };
    let (t, s) = (delta("tom", Reason::TeachCredit), delta("ana", Reason::LearnDebit));
    ensure((t, s) == (600, -600), || format!("teacher {t:+}, student {s:+}"))?;

    let out = run_scenario(&scenario("auto-end"), default_catalog()).unwrap();
    let sum = out.state.sessions.all().next().and_then(|s| s.summary.clone()).ok_or("no session")?;
    let start = out.log.iter().filter(|r| matches!(r.event, Command::ConfirmReady { .. })).nth(1).unwrap().position;
    let tick3 = out
        .log
        .iter()
        .filter(|r| r.position > start && matches!(r.event, Command::Tick { .. }))
        .nth(2)
        .ok_or("fewer than 3 ticks")?;
    ensure(sum.duration_s == 3 && sum.ended_at == tick3.at && sum.ended_by.is_none(), || {
        format!("auto-end: {sum:?}")
    })?;
    Ok("600 s lesson: teacher +600, student -600; 3 s balance ends at tick 3".into())
}

fn role_views() -> Verdict {
    let src = SAMPLE_DECKS.iter().find(|d| d.0 == "greetings-A1").unwrap().1;
    let deck = load_deck(src, &Config::default().languages).map_err(|e| e.to_string())?;
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/greetings-A1");
    let roles = [(Role::Teacher, "teacher"), (Role::Student, "student"), (Role::Controller, "controller")];
    let mut n = 0;
    for ordinal in 1..=deck.len() {
        for lang in ["en", "es", "ru", "de"] {
            let l = LangCode::from(lang);
            for (role, rname) in roles {
                for (hint, h) in [(false, "plain"), (true, "hint")] {
                    let view = render_slide_view(&deck, ordinal, role, &l, hint).map_err(|e| e.to_string())?;
                    let name = format!("{ordinal}-{rname}-{lang}-{h}.json");
                    let golden = std::fs::read_to_string(dir.join(&name)).map_err(|e| format!("{name}: {e}"))?;
                    let rendered = serde_json::to_string_pretty(&view).unwrap() + "\n";
                    ensure(rendered == golden, || format!("{name} differs from golden"))?;
                    n += 1;
                }
            }
            let set = |role, hint| -> BTreeSet<(FieldKind, String)> {
                let v = render_slide_view(&deck, ordinal, role, &l, hint).unwrap();
                v.fields().into_iter().map(|(k, s)| (k, s.to_owned())).collect()
            };
            let (before, after, ctrl) = (set(Role::Student, false), set(Role::Student, true), set(Role::Controller, false));
            ensure(before.is_subset(&after) && before != after, || format!("slide {ordinal} {lang}: hint adds nothing"))?;
            ensure(after.is_subset(&ctrl) && after != ctrl, || format!("slide {ordinal} {lang}: controller view not larger"))?;
        }
    }
    Ok(format!("{n} renderings match golden files; student < student+hint < controller"))
}

fn handshake_totality() -> Verdict {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for order in permutations(&EVENTS) {
        for n in 0..=order.len() {
            for tom_cancels in [true, false] {
                check(&order[..n], tom_cancels, &[])?;
            }
            if n == order.len() {
                let k = match expected(&order) {
                    Outcome::Started => "started",
                    Outcome::Aborted => "aborted",
                    Outcome::Waiting => "waiting",
                    Outcome::Untouched => "untouched",
                };
                *counts.entry(k).or_default() += 1;
            }
        }
    }
    ensure(counts.get("started") == Some(&12), || format!("{counts:?}"))?;
    Ok(format!("120 orderings and their prefixes, both cancellers: {counts:?}"))
}

fn replay_determinism() -> Verdict {
    for seed in 1..=20u64 {
        let out = fuzz(seed, 1_200, default_catalog());
        let config = Scenario::fuzz(seed, 0).config;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (store, mut live, _) = Store::open(dir.path(), config.clone(), default_catalog()).map_err(|e| e.to_string())?;
        let mut store = store.without_fsync().with_snapshot_every(if seed % 2 == 0 { 97 } else { u64::MAX });
        for r in &out.log {
            live.apply(&r.event).map_err(|e| e.to_string())?;
            store.append(r, live.state()).map_err(|e| e.to_string())?;
        }
        let (_, rec, _) = Store::open(dir.path(), config, default_catalog()).map_err(|e| e.to_string())?;
        let (a, b) = (rec.state(), live.state());
        ensure(a.now == b.now, || format!("seed {seed}: clock"))?;
        ensure(a.profiles() == b.profiles(), || format!("seed {seed}: profiles"))?;
        ensure(a.connector == b.connector, || format!("seed {seed}: connector"))?;
        ensure(a.sessions == b.sessions, || format!("seed {seed}: sessions"))?;
        ensure(a.timebank == b.timebank, || format!("seed {seed}: timebank"))?;
        ensure(a.engage == b.engage, || format!("seed {seed}: engage"))?;
        ensure(a == b, || format!("seed {seed}: state"))?;
    }
    Ok("20 generated runs recover field-for-field".into())
}

fn engage_suite() -> Verdict {
    // leaderboard conservation on lessons that straddle a month boundary
    let users = [("tom", "en"), ("ana", "es"), ("ivan", "ru"), ("bob", "en")];
    let mut d = Driver::new(Config::default(), 1_769_903_400, &users);
    for (i, secs) in [120, 300, 45, 200, 90].into_iter().enumerate() {
        let (s, t) = [("ana", "tom"), ("ivan", "bob")][i % 2];
        d.lesson(s, t, "greetings-A1", secs, 1).map_err(|e| e.to_string())?;
    }
    let mut want: BTreeMap<Month, i64> = BTreeMap::new();
    for (at, secs) in &d.lessons {
        *want.entry(Month::of(*at)).or_default() += 2 * secs;
    }
    ensure(want.len() == 2, || "lessons did not straddle the month".into())?;
    for (m, w) in &want {
        let got: i64 = d.p.leaderboard(Some(*m), usize::MAX).iter().map(|r| r.activity_seconds).sum();
        ensure(got == *w, || format!("{m}: rows {got}, expected {w}"))?;
    }
    for seed in [1, 2, 3] {
        let out = fuzz(seed, 3_000, default_catalog());
        ensure(out.report.check("leaderboard_conservation").is_some_and(|c| c.passed), || format!("fuzz {seed}"))?;
    }

    // Expert at exactly the fifth completed teaching session
    let mut d = Driver::new(Config::default(), 1_767_225_600, &[("tom", "en"), ("ana", "es")]);
    let mut completed = 0;
    for slides in [5, 2, 5, 5, 0, 5, 5] {
        d.lesson("ana", "tom", "greetings-A1", 10, slides).map_err(|e| e.to_string())?;
        completed += u32::from(slides == 5);
        ensure(d.expert("tom") == (completed >= 5), || format!("expert wrong after {completed} completed"))?;
    }
    let experts = d.p.state().engage.accolades().iter().filter(|a| a.kind == AccoladeKind::Expert).count();
    ensure(experts == 1, || format!("{experts} expert accolades"))?;

    // set 2 opens exactly when set 1 is complete
    let mut d = Driver::new(Config::default(), 1_767_225_600, &[("tom", "en"), ("ana", "es")]);
    d.lesson("ana", "tom", "greetings-A1", 5, 5).map_err(|e| e.to_string())?;
    ensure(!d.unlocked("ana", "en-daily"), || "opened after one of two decks".into())?;
    d.lesson("ana", "tom", "numbers-A1", 5, 3).map_err(|e| e.to_string())?;
    ensure(d.unlocked("ana", "en-daily"), || "not opened after both decks".into())?;

    // a controller's repeat holds it shut
    let config = Config { controller_enabled: true, ..Config::default() };
    let mut d = Driver::new(config, 1_767_225_600, &[("tom", "en"), ("ana", "es"), ("olga", "ru")]);
    d.run(Command::ControllerAssign { user: u("ana"), controller: u("olga") }).map_err(|e| e.to_string())?;
    d.run(Command::ControllerDecide {
        user: u("olga"),
        student: u("ana"),
        set_id: SetId::from("en-basics"),
        decision: ControllerDecision::Repeat,
    })
    .map_err(|e| e.to_string())?;
    d.lesson("ana", "tom", "greetings-A1", 5, 5).map_err(|e| e.to_string())?;
    d.lesson("ana", "tom", "numbers-A1", 5, 3).map_err(|e| e.to_string())?;
    ensure(!d.unlocked("ana", "en-daily"), || "repeat did not block the unlock".into())?;
    Ok("leaderboard = 2 x lesson time per month; expert at 5th; set unlock; repeat blocks".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("connector safety", connector_safety),
        ("time-bank conservation", timebank_conservation),
        ("minute-for-minute exchange", minute_for_minute),
        ("role-view golden files", role_views),
        ("handshake totality", handshake_totality),
        ("replay determinism", replay_determinism),
        ("engage suite", engage_suite),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
