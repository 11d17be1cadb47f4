use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Connector, PresenceStatus};
use crate::content::LangCode;
use crate::engage::RatingStats;
use crate::error::{Error, Result};
use crate::ids::{Timestamp, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub display_name: String,
    pub native_language: LangCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    /// Deck levels this user is willing to teach; empty means any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFilter {
    pub taught_language: LangCode,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub age_range: Option<(u32, u32)>,
    #[serde(default)]
    pub level: Option<u32>,
}

impl SearchFilter {
    pub fn validate(&self) -> Result<()> {
        match self.age_range {
            Some((lo, hi)) if lo > hi => Err(Error::InvalidFilter("age range is empty")),
            _ => Ok(()),
        }
    }

    pub fn matches(&self, p: &UserProfile) -> bool {
        p.native_language == self.taught_language
            && self.country.as_ref().is_none_or(|c| p.country.as_ref() == Some(c))
            && self.gender.as_ref().is_none_or(|g| p.gender.as_ref() == Some(g))
            && self
                .age_range
                .is_none_or(|(lo, hi)| p.age.is_some_and(|a| (lo..=hi).contains(&a)))
            && self.level.is_none_or(|l| p.levels.is_empty() || p.levels.contains(&l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub profile: UserProfile,
    pub rating_mean: f64,
    pub rating_count: u64,
    pub available_since: Timestamp,
}

/// Available native speakers matching `filter`, best rated first, then
/// longest waiting.
pub fn search_partners(
    seeker: &UserId,
    filter: &SearchFilter,
    profiles: &BTreeMap<UserId, UserProfile>,
    connector: &Connector,
    stats: impl Fn(&UserId) -> RatingStats,
) -> Result<Vec<Candidate>> {
    if connector.status(seeker)? != PresenceStatus::Available {
        return Err(Error::Busy(seeker.clone()));
    }
    filter.validate()?;
    let mut hits: Vec<(RatingStats, Timestamp, &UserProfile)> = connector
        .presences()
        .filter(|p| p.status == PresenceStatus::Available && p.user_id != *seeker)
        .filter_map(|p| {
            let profile = profiles.get(&p.user_id)?;
            filter.matches(profile).then(|| (stats(&p.user_id), p.since, profile))
        })
        .collect();
    hits.sort_by(|a, b| {
        b.0.cmp_mean(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| a.2.user_id.cmp(&b.2.user_id))
    });
    Ok(hits
        .into_iter()
        .map(|(s, since, profile)| Candidate {
            profile: profile.clone(),
            rating_mean: s.mean().unwrap_or(0.0),
            rating_count: s.count,
            available_since: since,
        })
        .collect())
}
