use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::deck::{LangCode, LangMap, Media, SlideDeck};
use crate::error::{Error, Result};
use crate::ids::DeckId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    TeacherScript,
    TeacherInstruction,
    StudentPrompt,
    HintTranscript,
    HintTranslation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBlock {
    pub field: FieldKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintBody {
    /// Taught-language text of what the teacher said.
    pub transcript: String,
    /// Its translation into the viewer's language.
    pub translation: String,
}

/// One participant's rendering of one slide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleView {
    pub deck_id: DeckId,
    pub ordinal: u32,
    pub role: Role,
    pub lang: LangCode,
    pub visible_fields: Vec<TextBlock>,
    pub media: Media,
    pub hint_available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint_body: Option<HintBody>,
}

impl RoleView {
    /// Every (field, text) pair the view exposes, hint included.
    pub fn fields(&self) -> BTreeSet<(FieldKind, &str)> {
        let mut out: BTreeSet<(FieldKind, &str)> =
            self.visible_fields.iter().map(|b| (b.field, b.text.as_str())).collect();
        if let Some(h) = &self.hint_body {
            out.insert((FieldKind::HintTranscript, h.transcript.as_str()));
            out.insert((FieldKind::HintTranslation, h.translation.as_str()));
        }
        out
    }
}

fn text(map: &LangMap, lang: &LangCode) -> Result<String> {
    map.get(lang)
        .cloned()
        .ok_or_else(|| Error::UnsupportedLanguage(lang.to_string()))
}

/// Renders slide `ordinal` of `deck` for a viewer with the given role and
/// native language. Pure.
pub fn render_slide_view(
    deck: &SlideDeck,
    ordinal: u32,
    role: Role,
    native: &LangCode,
    hint_active: bool,
) -> Result<RoleView> {
    let slide = deck
        .slide(ordinal)
        .ok_or(Error::OrdinalOutOfRange(ordinal, deck.len()))?;
    let block = |field, map: &LangMap| -> Result<TextBlock> {
        Ok(TextBlock {
            field,
            text: text(map, native)?,
        })
    };
    let visible_fields = match role {
        Role::Teacher => vec![
            block(FieldKind::TeacherScript, &slide.teacher_script)?,
            block(FieldKind::TeacherInstruction, &slide.teacher_instruction)?,
        ],
        Role::Student => vec![block(FieldKind::StudentPrompt, &slide.student_prompt)?],
        Role::Controller => vec![
            block(FieldKind::TeacherScript, &slide.teacher_script)?,
            block(FieldKind::TeacherInstruction, &slide.teacher_instruction)?,
            block(FieldKind::StudentPrompt, &slide.student_prompt)?,
        ],
    };
    let show_hint = hint_active || role == Role::Controller;
    let hint_body = if show_hint {
        Some(HintBody {
            transcript: slide.hint_transcript.clone(),
            translation: text(&slide.hint_translation, native)?,
        })
    } else {
        None
    };
    Ok(RoleView {
        deck_id: deck.deck_id.clone(),
        ordinal,
        role,
        lang: native.clone(),
        visible_fields,
        media: slide.media.clone(),
        hint_available: true,
        hint_body,
    })
}
