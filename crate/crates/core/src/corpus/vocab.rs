use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::digest_strs;

pub type TokenId = u32;

/// Replacement token for perturbations and the integrated-gradients baseline.
/// Unknown surfaces encode to it as well.
pub const MASK_ID: TokenId = 0;
pub const CLS_ID: TokenId = 1;
pub const SEP_ID: TokenId = 2;

pub const MASK: &str = "<mask>";
pub const CLS: &str = "<cls>";
pub const SEP: &str = "<sep>";
/// The surface cue of the single-segment tasks.
pub const THE: &str = "the";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClass {
    Special,
    The,
    Determiner,
    Noun,
    IrregularPast,
    RegularPast,
    IngVerb,
    PresentVerb,
    Adjective,
    Adverb,
    Preposition,
    Negator,
    Hedge,
    Control,
    Subordinator,
    Place,
}

impl WordClass {
    pub fn name(self) -> &'static str {
        match self {
            WordClass::Special => "special",
            WordClass::The => "the",
            WordClass::Determiner => "determiner",
            WordClass::Noun => "noun",
            WordClass::IrregularPast => "irregular_past",
            WordClass::RegularPast => "regular_past",
            WordClass::IngVerb => "ing_verb",
            WordClass::PresentVerb => "present_verb",
            WordClass::Adjective => "adjective",
            WordClass::Adverb => "adverb",
            WordClass::Preposition => "preposition",
            WordClass::Negator => "negator",
            WordClass::Hedge => "hedge",
            WordClass::Control => "control",
            WordClass::Subordinator => "subordinator",
            WordClass::Place => "place",
        }
    }
}

impl fmt::Display for WordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const DETERMINERS: &[&str] = &[
    "a", "some", "every", "this", "that", "each", "another", "my", "your", "our", "his", "her",
];
const NOUNS: &[&str] = &[
    "lawyer", "doctor", "actor", "student", "teacher", "artist", "senator", "banker", "athlete",
    "author", "manager", "tourist", "secretary", "professor", "judge", "farmer", "pilot", "dancer",
    "singer", "painter", "chef", "nurse", "soldier", "scientist", "president", "child", "woman",
    "man", "friend", "neighbor", "baker", "sailor", "driver", "writer", "editor", "clerk", "guard",
    "king", "queen", "cat", "dog", "horse", "bird", "river", "city", "house", "garden", "school",
    "library", "museum",
];
const IRREGULAR_PAST: &[&str] = &[
    "slept", "ran", "ate", "sang", "wrote", "broke", "drove", "spoke", "took", "saw", "went",
    "fell", "froze", "bit", "hid", "rode", "shook", "swam", "threw", "woke", "wore", "forgot",
    "began", "drank", "flew", "grew", "knew", "sank", "stole", "fought",
];
const REGULAR_PAST: &[&str] = &[
    "walked", "talked", "played", "jumped", "cleaned", "painted", "visited", "helped", "watched",
    "called", "opened", "cooked", "danced", "laughed", "smiled", "moved", "carried", "studied",
    "waited", "worked", "asked", "liked", "loved", "hated", "pushed", "pulled", "kicked",
    "climbed", "dropped", "fixed",
];
const ING_VERBS: &[&str] = &[
    "sleeping", "running", "eating", "singing", "writing", "breaking", "driving", "speaking",
    "taking", "seeing", "going", "falling", "walking", "talking", "playing", "jumping", "cleaning",
    "painting", "visiting", "helping", "watching", "calling", "opening", "cooking", "dancing",
    "laughing", "smiling", "moving", "carrying", "studying",
];
const PRESENT_VERBS: &[&str] = &[
    "sleeps", "runs", "eats", "sings", "writes", "breaks", "drives", "speaks", "takes", "sees",
    "goes", "falls", "walks", "talks", "plays", "jumps", "cleans", "paints", "visits", "helps",
    "watches", "calls", "opens", "cooks", "dances", "laughs", "smiles", "moves", "carries",
    "studies",
];
const ADJECTIVES: &[&str] = &[
    "happy", "tall", "short", "young", "old", "brave", "clever", "quiet", "loud", "kind", "angry",
    "busy", "famous", "tired", "hungry", "proud", "calm", "gentle", "polite", "rich", "poor",
    "strong", "weak", "shy", "wise", "eager", "lazy", "honest", "curious", "friendly",
];
const ADVERBS: &[&str] = &[
    "quickly", "slowly", "quietly", "loudly", "happily", "sadly", "calmly", "gladly", "boldly",
    "easily", "rarely", "often", "early", "late", "today", "yesterday", "again", "twice", "soon",
    "finally",
];
const PREPOSITIONS: &[&str] = &[
    "from", "to", "near", "with", "under", "over", "behind", "beside", "into", "across",
    "between", "and",
];
const NEGATORS: &[&str] = &["not", "never", "hardly", "barely", "scarcely"];
const HEDGES: &[&str] = &["surely", "really", "truly", "indeed", "also"];
const CONTROLS: &[&str] = &["unless", "if", "whether", "suppose", "lest"];
const SUBORDINATORS: &[&str] = &["since", "because", "when", "once", "while"];
const PLACES: &[&str] = &[
    "paris", "london", "tokyo", "berlin", "rome", "madrid", "cairo", "lima", "oslo", "dublin",
    "vienna", "prague", "athens", "boston", "denver", "seattle", "chicago", "toronto", "sydney",
    "delhi",
];

/// Closed token table with word-class annotations. Ids 0..3 are reserved for
/// the mask, CLS and SEP tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyParts", into = "VocabularyParts")]
pub struct Vocabulary {
    tokens: Vec<String>,
    classes: BTreeMap<WordClass, Vec<TokenId>>,
    index: BTreeMap<String, TokenId>,
}

/// Serialized form of a [`Vocabulary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularyParts {
    pub tokens: Vec<String>,
    pub classes: BTreeMap<WordClass, Vec<TokenId>>,
}

impl TryFrom<VocabularyParts> for Vocabulary {
    type Error = Error;

    fn try_from(parts: VocabularyParts) -> Result<Self> {
        Vocabulary::from_parts(parts.tokens, parts.classes)
    }
}

impl From<Vocabulary> for VocabularyParts {
    fn from(vocab: Vocabulary) -> Self {
        VocabularyParts { tokens: vocab.tokens, classes: vocab.classes }
    }
}

impl Vocabulary {
    /// The built-in synthetic vocabulary (~290 types).
    pub fn standard() -> Self {
        let groups: &[(WordClass, &[&str])] = &[
            (WordClass::The, &[THE]),
            (WordClass::Determiner, DETERMINERS),
            (WordClass::Noun, NOUNS),
            (WordClass::IrregularPast, IRREGULAR_PAST),
            (WordClass::RegularPast, REGULAR_PAST),
            (WordClass::IngVerb, ING_VERBS),
            (WordClass::PresentVerb, PRESENT_VERBS),
            (WordClass::Adjective, ADJECTIVES),
            (WordClass::Adverb, ADVERBS),
            (WordClass::Preposition, PREPOSITIONS),
            (WordClass::Negator, NEGATORS),
            (WordClass::Hedge, HEDGES),
            (WordClass::Control, CONTROLS),
            (WordClass::Subordinator, SUBORDINATORS),
            (WordClass::Place, PLACES),
        ];
        let mut tokens: Vec<String> = [MASK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        let mut classes = BTreeMap::new();
        classes.insert(WordClass::Special, alloc::vec![MASK_ID, CLS_ID, SEP_ID]);
        for (class, words) in groups {
            let ids = words
                .iter()
                .map(|w| {
                    tokens.push(w.to_string());
                    (tokens.len() - 1) as TokenId
                })
                .collect();
            classes.insert(*class, ids);
        }
        Self::from_parts(tokens, classes).expect("built-in vocabulary is well formed")
    }

    pub fn from_parts(
        tokens: Vec<String>,
        classes: BTreeMap<WordClass, Vec<TokenId>>,
    ) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != MASK || tokens[1] != CLS || tokens[2] != SEP {
            return Err(Error::Validation(
                "vocabulary must start with <mask>, <cls>, <sep>".into(),
            ));
        }
        let mut index = BTreeMap::new();
        for (id, surface) in tokens.iter().enumerate() {
            if index.insert(surface.clone(), id as TokenId).is_some() {
                return Err(Error::Validation(alloc::format!(
                    "duplicate token `{surface}` in vocabulary"
                )));
            }
        }
        for (class, ids) in &classes {
            if let Some(bad) = ids.iter().find(|&&id| id as usize >= tokens.len()) {
                return Err(Error::Validation(alloc::format!(
                    "word class {class} references id {bad} outside the vocabulary"
                )));
            }
        }
        Ok(Self { tokens, classes, index })
    }

    /// Removes a word class; used to build deliberately incomplete vocabularies.
    pub fn without_class(mut self, class: WordClass) -> Self {
        self.classes.remove(&class);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn classes(&self) -> &BTreeMap<WordClass, Vec<TokenId>> {
        &self.classes
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    /// Id of `surface`, falling back to the mask id for unknown words.
    pub fn id_or_mask(&self, surface: &str) -> TokenId {
        self.id(surface).unwrap_or(MASK_ID)
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn class(&self, class: WordClass) -> Result<&[TokenId]> {
        match self.classes.get(&class) {
            Some(ids) if !ids.is_empty() => Ok(ids),
            _ => Err(Error::MissingWordClass(class)),
        }
    }

    pub fn require(&self, classes: &[WordClass]) -> Result<()> {
        classes.iter().try_for_each(|&c| self.class(c).map(|_| ()))
    }

    pub fn contains_in(&self, class: WordClass, surface: &str) -> bool {
        match (self.classes.get(&class), self.id(surface)) {
            (Some(ids), Some(id)) => ids.contains(&id),
            _ => false,
        }
    }

    /// Order-sensitive digest of the token table.
    pub fn digest(&self) -> String {
        digest_strs(self.tokens.iter().map(String::as_str))
    }
}
