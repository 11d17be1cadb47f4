//! Multilingual, role-structured slide decks: loading, validation and
//! per-role rendering.

mod catalog;
mod deck;
mod view;

pub use catalog::Catalog;
pub use deck::{deck_progress, load_deck, DeckError, LangCode, LangMap, Media, Progress, Slide, SlideDeck};
pub use view::{render_slide_view, FieldKind, HintBody, Role, RoleView, TextBlock};

/// Sample decks from the crate's `content/` directory, embedded at build time.
pub const SAMPLE_DECKS: &[(&str, &str)] = &[
    ("greetings-A1", include_str!("../../content/greetings-A1.toml")),
    ("numbers-A1", include_str!("../../content/numbers-A1.toml")),
    ("cafe-A2", include_str!("../../content/cafe-A2.toml")),
    ("saludos-A1", include_str!("../../content/saludos-A1.toml")),
];

pub fn sample_catalog(languages: &[LangCode]) -> Result<Catalog, DeckError> {
    let decks = SAMPLE_DECKS
        .iter()
        .map(|(_, text)| load_deck(text, languages))
        .collect::<Result<Vec<_>, _>>()?;
    Catalog::from_decks(decks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const GREETINGS: &str = SAMPLE_DECKS[0].1;

    fn langs() -> Vec<LangCode> {
        crate::Config::default().languages
    }

    fn raw() -> toml::Value {
        toml::from_str(GREETINGS).unwrap()
    }

    fn raw_slide_text(ordinal: usize, field: &str, lang: &str) -> String {
        raw()["slides"][ordinal - 1][field][lang].as_str().unwrap().to_owned()
    }

    #[test]
    fn loads_fixture_deck() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let raw = raw();
        let raw_slides = raw["slides"].as_array().unwrap();
        assert_eq!(deck.len() as usize, raw_slides.len());
        assert_eq!(deck.len(), 5);
        assert_eq!(deck.level, 1);
        assert_eq!(deck.title.len(), 4);
        assert_eq!(deck.vocabulary.len(), raw["vocabulary"].as_array().unwrap().len());
    }

    #[test]
    fn empty_deck_rejected() {
        let head: String = GREETINGS.split("[[slides]]").next().unwrap().to_owned();
        assert_eq!(load_deck(&head, &langs()), Err(DeckError::EmptyDeck));
    }

    #[test]
    fn missing_language_reports_slide_and_lang() {
        let mut value = raw();
        let prompt = value["slides"][2]["student_prompt"].as_table_mut().unwrap();
        prompt.remove("de");
        let present: Vec<String> = prompt.keys().cloned().collect();
        let expected_missing: Vec<&str> = ["en", "es", "ru", "de"]
            .into_iter()
            .filter(|l| !present.iter().any(|p| p == l))
            .collect();
        assert_eq!(expected_missing, ["de"]);

        let text = toml::to_string(&value).unwrap();
        assert_eq!(
            load_deck(&text, &langs()),
            Err(DeckError::MissingLanguage {
                slide: Some(3),
                field: "student_prompt",
                lang: LangCode::from("de"),
            })
        );
    }

    #[test]
    fn hint_must_match_teacher_script() {
        let text = GREETINGS.replacen("hint_transcript = \"Hello!\"", "hint_transcript = \"Hi!\"", 1);
        assert_eq!(load_deck(&text, &langs()), Err(DeckError::HintMismatch(1)));
    }

    #[test]
    fn ordinals_must_be_contiguous() {
        let text = GREETINGS.replacen("ordinal = 4", "ordinal = 7", 1);
        assert_eq!(
            load_deck(&text, &langs()),
            Err(DeckError::BadOrdinal { position: 4, found: 7 })
        );
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(load_deck("deck_id = 3", &langs()), Err(DeckError::Schema(_))));
        let text = GREETINGS.replacen("set_ordinal = 1", "set_ordinal = 1\nsurprise = true", 1);
        assert!(matches!(load_deck(&text, &langs()), Err(DeckError::Schema(_))));
        let text = GREETINGS.replacen("taught_language = \"en\"", "taught_language = \"fr\"", 1);
        assert_eq!(
            load_deck(&text, &langs()),
            Err(DeckError::UnknownLanguage(LangCode::from("fr")))
        );
    }

    #[test]
    fn extra_configured_language_is_required() {
        let mut l = langs();
        l.push(LangCode::from("fr"));
        assert_eq!(
            load_deck(GREETINGS, &l),
            Err(DeckError::MissingLanguage {
                slide: None,
                field: "title",
                lang: LangCode::from("fr"),
            })
        );
    }

    #[test]
    fn student_view_without_hint() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let v = render_slide_view(&deck, 1, Role::Student, &LangCode::from("ru"), false).unwrap();
        assert_eq!(
            v.visible_fields,
            vec![TextBlock {
                field: FieldKind::StudentPrompt,
                text: raw_slide_text(1, "student_prompt", "ru"),
            }]
        );
        assert_eq!(v.media.image.as_deref(), raw()["slides"][0]["media"]["image"].as_str());
        assert!(v.hint_available);
        assert!(v.hint_body.is_none());
    }

    #[test]
    fn student_view_with_hint() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let v = render_slide_view(&deck, 1, Role::Student, &LangCode::from("ru"), true).unwrap();
        assert_eq!(v.visible_fields.len(), 1);
        let hint = v.hint_body.unwrap();
        assert_eq!(hint.transcript, raw()["slides"][0]["hint_transcript"].as_str().unwrap());
        assert_eq!(hint.transcript, raw_slide_text(1, "teacher_script", "en"));
        assert_eq!(hint.translation, raw_slide_text(1, "hint_translation", "ru"));
    }

    #[test]
    fn teacher_and_controller_views() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let en = LangCode::from("en");
        let t = render_slide_view(&deck, 2, Role::Teacher, &en, false).unwrap();
        let kinds: Vec<FieldKind> = t.visible_fields.iter().map(|b| b.field).collect();
        assert_eq!(kinds, [FieldKind::TeacherScript, FieldKind::TeacherInstruction]);
        assert_eq!(t.visible_fields[1].text, raw_slide_text(2, "teacher_instruction", "en"));
        assert_eq!(t.media.video.as_deref(), Some("media/greetings/morning.mp4"));

        let c = render_slide_view(&deck, 2, Role::Controller, &en, false).unwrap();
        assert!(t.fields().is_subset(&c.fields()));
        assert!(c.fields().contains(&(FieldKind::StudentPrompt, "Answer how you feel.")));
        assert!(c.hint_body.is_some());
    }

    #[test]
    fn ordinal_bounds() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let en = LangCode::from("en");
        assert_eq!(
            render_slide_view(&deck, 0, Role::Teacher, &en, false),
            Err(Error::OrdinalOutOfRange(0, 5))
        );
        assert_eq!(
            render_slide_view(&deck, 6, Role::Student, &en, true),
            Err(Error::OrdinalOutOfRange(6, 5))
        );
        assert!(render_slide_view(&deck, 5, Role::Student, &LangCode::from("fr"), false).is_err());
    }

    #[test]
    fn progress_counts() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        let p = deck_progress(0, &deck).unwrap();
        assert_eq!((p.fraction, p.studied, p.remaining), (0.0, 0, 5));
        let p = deck_progress(5, &deck).unwrap();
        assert_eq!((p.fraction, p.studied, p.remaining), (1.0, 5, 0));
        let p = deck_progress(2, &deck).unwrap();
        assert_eq!((p.studied, p.remaining), (2, 3));
        assert!((p.fraction - 2.0 / 5.0).abs() < 1e-12);
        assert_eq!(deck_progress(6, &deck), Err(Error::OrdinalOutOfRange(6, 5)));
    }

    #[test]
    fn words_learned_follow_the_script() {
        let deck = load_deck(GREETINGS, &langs()).unwrap();
        // hello@1, good morning@2, my name is@3, nice to meet you@4, goodbye@5
        assert_eq!(deck.words_learned(0), 0);
        assert_eq!(deck.words_learned(1), 1);
        assert_eq!(deck.words_learned(3), 3);
        assert_eq!(deck.words_learned(5), 5);
    }
}
