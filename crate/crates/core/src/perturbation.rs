//! Word-level local edits applied between iterations.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::levenshtein;

pub const DEFAULT_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMethod {
    SynonymReplace,
    WordSwap,
    InsertDelete,
}

impl PerturbMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbMethod::SynonymReplace => "synonym_replace",
            PerturbMethod::WordSwap => "word_swap",
            PerturbMethod::InsertDelete => "insert_delete",
        }
    }
}

impl std::str::FromStr for PerturbMethod {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synonym_replace" | "sr" => Ok(PerturbMethod::SynonymReplace),
            "word_swap" | "ws" => Ok(PerturbMethod::WordSwap),
            "insert_delete" | "id" => Ok(PerturbMethod::InsertDelete),
            other => Err(PerturbError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbError {
    #[error("rate {0} must lie in (0, 1]")]
    Rate(f64),
    #[error("synonym_replace needs a lexicon")]
    MissingLexicon,
    #[error("lexicon given for {0}, which does not use one")]
    UnexpectedLexicon(&'static str),
    #[error("word_swap needs at least 2 words, got {0}")]
    TooFewWords(usize),
    #[error("text has no words")]
    EmptyText,
    #[error("lexicon line {line}: {detail}")]
    Lexicon { line: usize, detail: String },
    #[error("unknown perturbation method {0:?}")]
    UnknownMethod(String),
    #[error("{0}")]
    Io(String),
}

/// Word to synonym list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon(BTreeMap<String, Vec<String>>);

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, synonyms: Vec<String>) {
        self.0.insert(word.into(), synonyms);
    }

    /// Parses `word<TAB>syn1,syn2,...` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |detail: &str| PerturbError::Lexicon {
                line: idx + 1,
                detail: detail.to_string(),
            };
            let (word, syns) = line.split_once('\t').ok_or_else(|| err("expected word<TAB>synonyms"))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(err("empty word"));
            }
            let syns: Vec<String> = syns
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            if syns.is_empty() {
                return Err(err("no synonyms"));
            }
            map.insert(word.to_string(), syns);
        }
        Ok(Lexicon(map))
    }

    pub fn load(path: &Path) -> Result<Self, PerturbError> {
        let text = std::fs::read_to_string(path).map_err(|e| PerturbError::Io(format!("{}: {e}", path.display())))?;
        Lexicon::parse(&text)
    }

    /// Synonyms for a word, trying the exact form then lowercase.
    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.0
            .get(word)
            .or_else(|| self.0.get(&word.to_lowercase()))
            .map(Vec::as_slice)
            .filter(|s| !s.is_empty())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbSpec {
    method: PerturbMethod,
    rate: f64,
    lexicon: Option<Lexicon>,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(method: PerturbMethod, rate: f64, lexicon: Option<Lexicon>, seed: u64) -> Result<Self, PerturbError> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PerturbError::Rate(rate));
        }
        match (method, &lexicon) {
            (PerturbMethod::SynonymReplace, None) => return Err(PerturbError::MissingLexicon),
            (PerturbMethod::SynonymReplace, Some(_)) | (_, None) => {}
            (m, Some(_)) => return Err(PerturbError::UnexpectedLexicon(m.as_str())),
        }
        Ok(PerturbSpec {
            method,
            rate,
            lexicon,
            seed,
        })
    }

    pub fn method(&self) -> PerturbMethod {
        self.method
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PerturbSpec { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbOutcome {
    pub text: String,
    pub edit_count: usize,
    /// Set when fewer operations than budgeted could be applied.
    pub warning: Option<String>,
}

/// `ceil(rate * word_count)`, ignoring float noise below 1e-9.
pub fn edit_budget(rate: f64, word_count: usize) -> usize {
    let raw = rate * word_count as f64;
    (raw - 1e-9).ceil().max(0.0) as usize
}

/// Applies `ceil(rate * word_count)` word operations at seeded positions.
/// Output words are joined with single spaces.
pub fn perturb(text: &str, spec: &PerturbSpec) -> Result<PerturbOutcome, PerturbError> {
    let mut words: Vec<String> = text.split_whitespace().map(String::from).collect();
    let wc = words.len();
    match spec.method {
        PerturbMethod::WordSwap if wc < 2 => return Err(PerturbError::TooFewWords(wc)),
        _ if wc == 0 => return Err(PerturbError::EmptyText),
        _ => {}
    }
    let budget = edit_budget(spec.rate, wc);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut applied = 0;
    let mut warning = None;

    for _ in 0..budget {
        match spec.method {
            PerturbMethod::SynonymReplace => {
                let lexicon = spec.lexicon.as_ref().expect("validated in PerturbSpec::new");
                let mut order: Vec<usize> = (0..words.len()).collect();
                order.shuffle(&mut rng);
                let hit = order.into_iter().find_map(|pos| lexicon.lookup(&words[pos]).map(|s| (pos, s)));
                match hit {
                    Some((pos, syns)) => {
                        words[pos] = syns.choose(&mut rng).expect("nonempty").clone();
                        applied += 1;
                    }
                    None => {
                        warning = Some(format!(
                            "no lexicon entry matches any word; applied {applied} of {budget} replacements"
                        ));
                        break;
                    }
                }
            }
            PerturbMethod::WordSwap => {
                let j = rng.random_range(0..words.len() - 1);
                words.swap(j, j + 1);
                applied += 1;
            }
            PerturbMethod::InsertDelete => {
                // a single remaining word is never deleted
                let delete = words.len() > 1 && rng.random_bool(0.5);
                if delete {
                    let j = rng.random_range(0..words.len());
                    words.remove(j);
                } else {
                    let w = words.choose(&mut rng).expect("nonempty").clone();
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, w);
                }
                applied += 1;
            }
        }
    }
    Ok(PerturbOutcome {
        text: words.join(" "),
        edit_count: applied,
        warning,
    })
}

/// Whether the word-level edit distance stays within twice the budget
/// (a swap costs up to two unit edits).
pub fn verify_edit_budget(original: &str, perturbed: &str, spec: &PerturbSpec) -> bool {
    let a: Vec<&str> = original.split_whitespace().collect();
    let b: Vec<&str> = perturbed.split_whitespace().collect();
    levenshtein(&a, &b) <= 2 * edit_budget(spec.rate, a.len())
}
