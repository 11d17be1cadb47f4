use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DeckId, SetId};

/// A language code from the configured set (`en`, `es`, `ru`, `de` by default).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LangCode(String);

impl LangCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for LangCode {
    fn from(s: &str) -> Self {
        LangCode(s.trim().to_ascii_lowercase())
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Text keyed by language.
pub type LangMap = BTreeMap<LangCode, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Media {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
}

impl Media {
    pub fn is_empty(&self) -> bool {
        self.image.is_none() && self.video.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slide {
    pub ordinal: u32,
    #[serde(default)]
    pub media: Media,
    /// What the teacher says aloud, in the taught language plus translations.
    pub teacher_script: LangMap,
    /// Stage direction for the teacher.
    pub teacher_instruction: LangMap,
    /// The minimal cue shown to the student.
    pub student_prompt: LangMap,
    /// Taught-language text revealed by a hint. Must equal the taught-language
    /// teacher script.
    pub hint_transcript: String,
    pub hint_translation: LangMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideDeck {
    pub deck_id: DeckId,
    pub title: LangMap,
    pub taught_language: LangCode,
    pub level: u32,
    pub set_id: SetId,
    pub set_ordinal: u32,
    #[serde(default)]
    pub vocabulary: Vec<LangMap>,
    #[serde(default)]
    pub slides: Vec<Slide>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeckError {
    #[error("deck schema: {0}")]
    Schema(String),
    #[error("deck has no slides")]
    EmptyDeck,
    #[error("{field} is missing language {lang}{}", slide.map(|s| format!(" on slide {s}")).unwrap_or_default())]
    MissingLanguage {
        slide: Option<u32>,
        field: &'static str,
        lang: LangCode,
    },
    #[error("slide at position {position} has ordinal {found}")]
    BadOrdinal { position: u32, found: u32 },
    #[error("slide {0}: hint_transcript differs from the taught-language teacher_script")]
    HintMismatch(u32),
    #[error("language {0} is not configured")]
    UnknownLanguage(LangCode),
    #[error("duplicate deck id {0}")]
    DuplicateDeck(DeckId),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

/// Parses and validates one deck document against the configured languages.
pub fn load_deck(source: &str, languages: &[LangCode]) -> Result<SlideDeck, DeckError> {
    let deck: SlideDeck = toml::from_str(source).map_err(|e| DeckError::Schema(e.message().to_owned()))?;
    deck.validate(languages)?;
    Ok(deck)
}

fn require_langs(
    map: &LangMap,
    languages: &[LangCode],
    slide: Option<u32>,
    field: &'static str,
) -> Result<(), DeckError> {
    match languages.iter().find(|l| !map.contains_key(*l)) {
        Some(lang) => Err(DeckError::MissingLanguage {
            slide,
            field,
            lang: lang.clone(),
        }),
        None => Ok(()),
    }
}

impl SlideDeck {
    pub fn validate(&self, languages: &[LangCode]) -> Result<(), DeckError> {
        if self.deck_id.0.trim().is_empty() {
            return Err(DeckError::Schema("deck_id is empty".into()));
        }
        if !languages.contains(&self.taught_language) {
            return Err(DeckError::UnknownLanguage(self.taught_language.clone()));
        }
        if self.level == 0 {
            return Err(DeckError::Schema("level is 1-based".into()));
        }
        if self.set_ordinal == 0 {
            return Err(DeckError::Schema("set_ordinal is 1-based".into()));
        }
        if self.slides.is_empty() {
            return Err(DeckError::EmptyDeck);
        }
        require_langs(&self.title, languages, None, "title")?;
        for entry in &self.vocabulary {
            require_langs(entry, languages, None, "vocabulary")?;
        }
        for (i, slide) in self.slides.iter().enumerate() {
            let position = i as u32 + 1;
            if slide.ordinal != position {
                return Err(DeckError::BadOrdinal {
                    position,
                    found: slide.ordinal,
                });
            }
            let at = Some(slide.ordinal);
            require_langs(&slide.teacher_script, languages, at, "teacher_script")?;
            require_langs(&slide.teacher_instruction, languages, at, "teacher_instruction")?;
            require_langs(&slide.student_prompt, languages, at, "student_prompt")?;
            require_langs(&slide.hint_translation, languages, at, "hint_translation")?;
            if slide.teacher_script[&self.taught_language] != slide.hint_transcript {
                return Err(DeckError::HintMismatch(slide.ordinal));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> u32 {
        self.slides.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.slides.is_empty()
    }

    pub fn slide(&self, ordinal: u32) -> Option<&Slide> {
        ordinal.checked_sub(1).and_then(|i| self.slides.get(i as usize))
    }

    /// Vocabulary entries whose taught-language form occurs in the teacher
    /// script of a slide at or before `cursor`.
    pub fn words_learned(&self, cursor: u32) -> u32 {
        let spoken: Vec<String> = self
            .slides
            .iter()
            .take(cursor as usize)
            .filter_map(|s| s.teacher_script.get(&self.taught_language))
            .map(|t| t.to_lowercase())
            .collect();
        self.vocabulary
            .iter()
            .filter_map(|entry| entry.get(&self.taught_language))
            .map(|w| w.trim().to_lowercase())
            .filter(|w| !w.is_empty() && spoken.iter().any(|s| s.contains(w.as_str())))
            .count() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub fraction: f64,
    pub studied: u32,
    pub remaining: u32,
}

pub fn deck_progress(cursor: u32, deck: &SlideDeck) -> Result<Progress, crate::Error> {
    let n = deck.len();
    if cursor > n {
        return Err(crate::Error::OrdinalOutOfRange(cursor, n));
    }
    Ok(Progress {
        fraction: f64::from(cursor) / f64::from(n),
        studied: cursor,
        remaining: n - cursor,
    })
}
