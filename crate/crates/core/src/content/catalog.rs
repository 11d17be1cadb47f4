use std::collections::BTreeMap;
use std::path::Path;

use super::deck::{load_deck, DeckError, LangCode, SlideDeck};
use crate::ids::{DeckId, SetId};

/// All decks known to the server, plus the lesson-set order per taught
/// language. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    decks: BTreeMap<DeckId, SlideDeck>,
    /// Sets ordered by (lowest deck level, set id), per taught language.
    set_order: BTreeMap<LangCode, Vec<SetId>>,
    set_decks: BTreeMap<SetId, Vec<DeckId>>,
    set_lang: BTreeMap<SetId, LangCode>,
}

impl Catalog {
    pub fn from_decks(decks: impl IntoIterator<Item = SlideDeck>) -> Result<Self, DeckError> {
        let mut by_id = BTreeMap::new();
        for deck in decks {
            if by_id.contains_key(&deck.deck_id) {
                return Err(DeckError::DuplicateDeck(deck.deck_id));
            }
            by_id.insert(deck.deck_id.clone(), deck);
        }
        let mut set_lang: BTreeMap<SetId, LangCode> = BTreeMap::new();
        let mut set_level: BTreeMap<SetId, u32> = BTreeMap::new();
        let mut set_decks: BTreeMap<SetId, Vec<(u32, DeckId)>> = BTreeMap::new();
        for deck in by_id.values() {
            if let Some(lang) = set_lang.get(&deck.set_id) {
                if *lang != deck.taught_language {
                    return Err(DeckError::Schema(format!(
                        "set {} mixes taught languages {} and {}",
                        deck.set_id, lang, deck.taught_language
                    )));
                }
            }
            set_lang.insert(deck.set_id.clone(), deck.taught_language.clone());
            let level = set_level.entry(deck.set_id.clone()).or_insert(deck.level);
            *level = (*level).min(deck.level);
            set_decks
                .entry(deck.set_id.clone())
                .or_default()
                .push((deck.set_ordinal, deck.deck_id.clone()));
        }
        let mut set_order: BTreeMap<LangCode, Vec<SetId>> = BTreeMap::new();
        for (set, lang) in &set_lang {
            set_order.entry(lang.clone()).or_default().push(set.clone());
        }
        for sets in set_order.values_mut() {
            sets.sort_by(|a, b| (set_level[a], a).cmp(&(set_level[b], b)));
        }
        let set_decks = set_decks
            .into_iter()
            .map(|(set, mut decks)| {
                decks.sort();
                (set, decks.into_iter().map(|(_, d)| d).collect())
            })
            .collect();
        Ok(Catalog {
            decks: by_id,
            set_order,
            set_decks,
            set_lang,
        })
    }

    /// Loads every `*.toml` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path, languages: &[LangCode]) -> Result<Self, DeckError> {
        let io = |e: std::io::Error| DeckError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut decks = Vec::with_capacity(paths.len());
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| DeckError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let deck = load_deck(&text, languages).map_err(|e| match e {
                DeckError::Schema(m) => DeckError::Schema(format!("{}: {m}", path.display())),
                other => other,
            })?;
            decks.push(deck);
        }
        Self::from_decks(decks)
    }

    pub fn deck(&self, id: &DeckId) -> Option<&SlideDeck> {
        self.decks.get(id)
    }

    pub fn decks(&self) -> impl Iterator<Item = &SlideDeck> {
        self.decks.values()
    }

    pub fn len(&self) -> usize {
        self.decks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decks.is_empty()
    }

    pub fn set_decks(&self, set: &SetId) -> &[DeckId] {
        self.set_decks.get(set).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_first_set(&self, set: &SetId) -> bool {
        self.set_lang
            .get(set)
            .and_then(|lang| self.set_order.get(lang))
            .and_then(|sets| sets.first())
            .is_some_and(|first| first == set)
    }

    pub fn first_sets(&self) -> impl Iterator<Item = &SetId> {
        self.set_order.values().filter_map(|sets| sets.first())
    }

    pub fn next_set(&self, set: &SetId) -> Option<&SetId> {
        let sets = self.set_order.get(self.set_lang.get(set)?)?;
        let pos = sets.iter().position(|s| s == set)?;
        sets.get(pos + 1)
    }

    pub fn previous_set(&self, set: &SetId) -> Option<&SetId> {
        let sets = self.set_order.get(self.set_lang.get(set)?)?;
        let pos = sets.iter().position(|s| s == set)?;
        pos.checked_sub(1).map(|p| &sets[p])
    }

    pub fn has_set(&self, set: &SetId) -> bool {
        self.set_lang.contains_key(set)
    }
}
