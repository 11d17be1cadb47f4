//! Whole lessons driven command by command on a bare platform.

use peerlingo_core::session::Direction;
use peerlingo_core::simharness::default_catalog;
use peerlingo_core::{Command, Config, Error, Platform, PresenceStatus, SessionId, SetId, Timestamp, UserId, UserProfile};

pub fn u(s: &str) -> UserId {
    UserId::from(s)
}

pub struct Driver {
    pub p: Platform,
    /// (ended_at, seconds) for every lesson, kept by the test itself.
    pub lessons: Vec<(Timestamp, i64)>,
}

impl Driver {
    pub fn new(config: Config, start: Timestamp, users: &[(&str, &str)]) -> Self {
        let mut p = Platform::new(config, default_catalog());
        p.apply(&Command::Tick { at: start }).unwrap();
        for (id, lang) in users {
            let profile = UserProfile {
                user_id: u(id),
                display_name: id.to_string(),
                native_language: (*lang).into(),
                country: None,
                gender: None,
                age: None,
                levels: vec![],
            };
            p.apply(&Command::Register { profile, secret_hash: String::new(), referral: None }).unwrap();
            p.apply(&Command::SetPresence { user: u(id), status: PresenceStatus::Available }).unwrap();
        }
        Driver { p, lessons: Vec::new() }
    }

    pub fn tick(&mut self, n: i64) {
        for _ in 0..n {
            let at = self.p.now() + 1;
            self.p.apply(&Command::Tick { at }).unwrap();
        }
    }

    pub fn run(&mut self, cmd: Command) -> Result<serde_json::Value, Error> {
        self.p.apply(&cmd).map(|a| a.reply)
    }

    /// One lesson of `seconds`, advanced `slides` times by the teacher.
    pub fn lesson(&mut self, student: &str, teacher: &str, deck: &str, seconds: i64, slides: u32) -> Result<SessionId, Error> {
        self.run(Command::Multicall { user: u(student), recipients: vec![u(teacher)], deck_id: deck.into() })?;
        let leg = self.p.state().connector.visible_inbound(&u(teacher))[0].leg_id;
        let r = self.run(Command::Accept { user: u(teacher), leg_id: leg })?;
        let pid = serde_json::from_value(r["pending_id"].clone()).unwrap();
        self.run(Command::ConfirmReady { user: u(teacher), pending_id: pid })?;
        self.run(Command::ConfirmReady { user: u(student), pending_id: pid })?;
        let sid = self.p.state().sessions.running_ids()[0];
        for _ in 0..slides {
            self.run(Command::AdvanceSlide { user: u(teacher), session_id: sid, direction: Direction::Next })?;
        }
        self.tick(seconds);
        self.run(Command::EndLesson { user: u(teacher), session_id: sid })?;
        self.lessons.push((self.p.now(), seconds));
        Ok(sid)
    }

    pub fn expert(&self, who: &str) -> bool {
        self.p.state().engage.is_expert(&u(who))
    }

    pub fn unlocked(&self, who: &str, set: &str) -> bool {
        self.p.state().engage.is_set_unlocked(&default_catalog(), &u(who), &SetId::from(set))
    }
}

