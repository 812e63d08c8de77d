//! Chain data model and JSONL persistence.
//!
//! A file holds one [`StepRecord`] per line, flattened together with the
//! owning chain's identity. Keys are written in this canonical order:
//!
//! ```text
//! run_id, chain_id, task, language, step, text, prompt_id, model_id,
//! temperature, perturbation, candidates[{text, sum_logprob, token_logprobs,
//! embedding}], selected_index, embedding
//! ```
//!
//! Absent optionals are omitted rather than written as `null`, and an empty
//! candidate list is omitted. Floats use the shortest decimal form that
//! round-trips. Lines are ordered by `(run_id, chain_id, step)`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::runner::RunConfig;

/// Tolerance between a candidate's `sum_logprob` and its token sum.
pub const LOGPROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Paraphrase,
    Polish,
    Clarify,
    Formality,
    Translate,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Paraphrase => "paraphrase",
            Task::Polish => "polish",
            Task::Clarify => "clarify",
            Task::Formality => "formality",
            Task::Translate => "translate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    En,
    Zh,
}

/// One element of the beam sampled at a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    /// Natural-log probability of the whole text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sum_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Candidate {
    pub fn new(text: impl Into<String>) -> Self {
        Candidate {
            text: text.into(),
            sum_logprob: None,
            token_logprobs: None,
            embedding: None,
        }
    }

    /// Candidate with per-token log-probabilities and their sum.
    pub fn with_token_logprobs(text: impl Into<String>, token_logprobs: Vec<f64>) -> Self {
        let sum = token_logprobs.iter().sum();
        Candidate {
            text: text.into(),
            sum_logprob: Some(sum),
            token_logprobs: Some(token_logprobs),
            embedding: None,
        }
    }
}

/// Local edit applied to the selected text before it was fed forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationNote {
    pub method: String,
    pub edit_count: usize,
}

/// One text `T_i` of a chain together with how it was produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepRecord {
    pub step: usize,
    pub text: String,
    pub prompt_id: Option<String>,
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    /// Present when `text` is a perturbed copy of the selected candidate.
    pub perturbation: Option<PerturbationNote>,
    pub candidates: Vec<Candidate>,
    pub selected_index: Option<usize>,
    pub embedding: Option<Vec<f64>>,
}

impl StepRecord {
    pub fn origin(text: impl Into<String>) -> Self {
        StepRecord {
            step: 0,
            text: text.into(),
            ..StepRecord::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub run_id: String,
    pub chain_id: String,
    pub task: Task,
    pub language: Language,
    pub steps: Vec<StepRecord>,
}

impl Chain {
    /// Number of transformation rounds `M` (steps minus the origin).
    pub fn rounds(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.text.as_str()).collect()
    }

    fn key(&self) -> (&str, &str) {
        (&self.run_id, &self.chain_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "step {step}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Chains cut short by a backend failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationMarker {
    pub chain_id: String,
    pub completed_steps: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub created_at: DateTime<Utc>,
    pub chain_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncated: Vec<TruncationMarker>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<TruncationMarker>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), ChainError> {
        let mut json = serde_json::to_string_pretty(self).map_err(ChainError::Encode)?;
        json.push('\n');
        fsutil::write_string_atomic(path, &json).map_err(|source| ChainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ChainError> {
        let file = File::open(path).map_err(|source| ChainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|source| ChainError::Parse {
            line: 0,
            source,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: malformed record: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("chain {chain_id}: missing origin (no step 0)")]
    MissingOrigin { chain_id: String },
    #[error("line {line}: chain {chain_id} disagrees with earlier lines on {field}")]
    Inconsistent {
        line: usize,
        chain_id: String,
        field: &'static str,
    },
    #[error("line {line}: chain {chain_id} is not contiguous in the file")]
    Interleaved { line: usize, chain_id: String },
    #[error("chain {chain_id} is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid {
        chain_id: String,
        violations: Vec<Violation>,
    },
    #[error("encoding failed: {0}")]
    Encode(serde_json::Error),
}

/// Checks every chain and step invariant; an empty list means the chain is valid.
pub fn validate_chain(chain: &Chain) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |step: Option<usize>, message: String| out.push(Violation { step, message });

    if chain.steps.is_empty() {
        push(None, "chain has no steps".into());
        return out;
    }
    if chain.steps[0].step != 0 {
        push(Some(chain.steps[0].step), "missing origin (first step is not 0)".into());
    } else if let Some((_, rec)) = chain.steps.iter().enumerate().find(|(idx, rec)| rec.step != *idx) {
        push(Some(rec.step), "non-contiguous steps".into());
    }
    if chain.steps.len() < 2 {
        push(None, "chain needs at least one transformation step (M >= 1)".into());
    }

    let mut dim: Option<usize> = None;
    let mut check_dim = |step: usize, v: &[f64], push: &mut dyn FnMut(Option<usize>, String)| {
        if v.iter().any(|x| !x.is_finite()) {
            push(Some(step), "embedding has non-finite values".into());
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => push(
                Some(step),
                format!("embedding dimension {} differs from chain dimension {d}", v.len()),
            ),
            _ => {}
        }
    };

    for rec in &chain.steps {
        let s = rec.step;
        if let Some(t) = rec.temperature {
            if !(t.is_finite() && t >= 0.0) {
                push(Some(s), format!("temperature {t} is not a finite value >= 0"));
            }
        }
        if s == 0 {
            if !rec.candidates.is_empty() {
                push(Some(0), "origin step must not carry candidates".into());
            }
            if rec.selected_index.is_some() {
                push(Some(0), "origin step must not carry selected_index".into());
            }
            if rec.perturbation.is_some() {
                push(Some(0), "origin step must not carry a perturbation".into());
            }
        } else {
            match (rec.selected_index, rec.candidates.is_empty()) {
                (None, false) => push(Some(s), "candidates present but selected_index missing".into()),
                (Some(_), true) => push(Some(s), "selected_index present but no candidates".into()),
                (Some(idx), false) if idx >= rec.candidates.len() => push(
                    Some(s),
                    format!("selected_index {idx} out of range for {} candidates", rec.candidates.len()),
                ),
                (Some(idx), false) => {
                    if rec.perturbation.is_none() && rec.text != rec.candidates[idx].text {
                        push(Some(s), "text differs from candidates[selected_index].text".into());
                    }
                }
                (None, true) => {}
            }
        }
        for (ci, cand) in rec.candidates.iter().enumerate() {
            if cand.text.is_empty() {
                push(Some(s), format!("candidate {ci} has empty text"));
            }
            if let Some(sum) = cand.sum_logprob {
                if !(sum.is_finite() && sum <= 0.0) {
                    push(Some(s), format!("candidate {ci} sum_logprob {sum} is not a finite value <= 0"));
                }
            }
            if let Some(tokens) = &cand.token_logprobs {
                if tokens.iter().any(|lp| !(lp.is_finite() && *lp <= 0.0)) {
                    push(Some(s), format!("candidate {ci} has a token logprob that is not finite and <= 0"));
                }
                if let Some(sum) = cand.sum_logprob {
                    let total: f64 = tokens.iter().sum();
                    if (total - sum).abs() > LOGPROB_SUM_TOLERANCE {
                        push(
                            Some(s),
                            format!("candidate {ci} sum_logprob {sum} disagrees with token sum {total}"),
                        );
                    }
                }
            }
            if let Some(e) = &cand.embedding {
                check_dim(s, e, &mut push);
            }
        }
        if let Some(e) = &rec.embedding {
            check_dim(s, e, &mut push);
        }
    }
    out
}

// One JSONL line, borrowed for writing.
#[derive(Serialize)]
struct LineOut<'a> {
    run_id: &'a str,
    chain_id: &'a str,
    task: Task,
    language: Language,
    step: usize,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation: Option<&'a PerturbationNote>,
    #[serde(skip_serializing_if = "<[Candidate]>::is_empty")]
    candidates: &'a [Candidate],
    #[serde(skip_serializing_if = "Option::is_none")]
    selected_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding: Option<&'a [f64]>,
}

#[derive(Deserialize)]
struct LineIn {
    run_id: String,
    chain_id: String,
    task: Task,
    language: Language,
    step: usize,
    text: String,
    #[serde(default)]
    prompt_id: Option<String>,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    perturbation: Option<PerturbationNote>,
    #[serde(default)]
    candidates: Vec<Candidate>,
    #[serde(default)]
    selected_index: Option<usize>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

impl LineIn {
    fn into_parts(self) -> (String, String, Task, Language, StepRecord) {
        let rec = StepRecord {
            step: self.step,
            text: self.text,
            prompt_id: self.prompt_id,
            model_id: self.model_id,
            temperature: self.temperature,
            perturbation: self.perturbation,
            candidates: self.candidates,
            selected_index: self.selected_index,
            embedding: self.embedding,
        };
        (self.run_id, self.chain_id, self.task, self.language, rec)
    }
}

/// Writes one chain as JSONL lines in canonical key order.
pub fn write_chain<W: Write + ?Sized>(chain: &Chain, out: &mut W) -> io::Result<()> {
    for rec in &chain.steps {
        let line = LineOut {
            run_id: &chain.run_id,
            chain_id: &chain.chain_id,
            task: chain.task,
            language: chain.language,
            step: rec.step,
            text: &rec.text,
            prompt_id: rec.prompt_id.as_deref(),
            model_id: rec.model_id.as_deref(),
            temperature: rec.temperature,
            perturbation: rec.perturbation.as_ref(),
            candidates: &rec.candidates,
            selected_index: rec.selected_index,
            embedding: rec.embedding.as_deref(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Serializes chains to the canonical JSONL form, sorted by `(run_id, chain_id)`.
pub fn to_jsonl(chains: &[Chain]) -> Result<String, ChainError> {
    check_all(chains)?;
    let mut buf = Vec::new();
    for chain in sorted(chains) {
        write_chain(chain, &mut buf).map_err(|e| ChainError::Encode(serde_json::Error::io(e)))?;
    }
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Saves chains as canonical JSONL. Every chain must validate cleanly.
pub fn save_chains(chains: &[Chain], path: &Path) -> Result<(), ChainError> {
    check_all(chains)?;
    fsutil::write_atomic(path, |w| {
        for chain in sorted(chains) {
            write_chain(chain, w)?;
        }
        Ok(())
    })
    .map_err(|source| ChainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_all(chains: &[Chain]) -> Result<(), ChainError> {
    for chain in chains {
        let violations = validate_chain(chain);
        if !violations.is_empty() {
            return Err(ChainError::Invalid {
                chain_id: chain.chain_id.clone(),
                violations,
            });
        }
    }
    Ok(())
}

fn sorted(chains: &[Chain]) -> Vec<&Chain> {
    let mut refs: Vec<&Chain> = chains.iter().collect();
    refs.sort_by(|a, b| a.key().cmp(&b.key()));
    refs
}

/// Loads every chain in a JSONL file, grouped by `(run_id, chain_id)` and
/// ordered by that key; steps are ordered by step number.
pub fn load_chains(path: &Path) -> Result<Vec<Chain>, ChainError> {
    let file = File::open(path).map_err(|source| ChainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_chains(BufReader::new(file))
}

/// Same as [`load_chains`] over any buffered reader. Lines of one chain may
/// be interleaved with other chains.
pub fn parse_chains<R: BufRead>(reader: R) -> Result<Vec<Chain>, ChainError> {
    let mut groups: BTreeMap<(String, String), Chain> = BTreeMap::new();
    for item in LineReader::new(reader) {
        let (line, run_id, chain_id, task, language, rec) = item?;
        let key = (run_id, chain_id);
        match groups.get_mut(&key) {
            Some(chain) => {
                check_consistent(chain, task, language, line)?;
                chain.steps.push(rec);
            }
            None => {
                groups.insert(
                    key.clone(),
                    Chain {
                        run_id: key.0,
                        chain_id: key.1,
                        task,
                        language,
                        steps: vec![rec],
                    },
                );
            }
        }
    }
    groups.into_values().map(finish_group).collect()
}

/// Streams chains from a file whose lines are grouped by chain, as written
/// by [`save_chains`]; only one chain is held in memory at a time.
pub struct ChainStream<R> {
    lines: LineReader<R>,
    pending: Option<Chain>,
    seen: std::collections::HashSet<(String, String)>,
    done: bool,
}

impl ChainStream<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, ChainError> {
        let file = File::open(path).map_err(|source| ChainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ChainStream::new(BufReader::new(file)))
    }
}

impl<R: BufRead> ChainStream<R> {
    pub fn new(reader: R) -> Self {
        ChainStream {
            lines: LineReader::new(reader),
            pending: None,
            seen: Default::default(),
            done: false,
        }
    }
}

impl<R: BufRead> Iterator for ChainStream<R> {
    type Item = Result<Chain, ChainError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.lines.next() {
                None => {
                    self.done = true;
                    return self.pending.take().map(finish_group);
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok((line, run_id, chain_id, task, language, rec))) => {
                    if let Some(chain) = self.pending.as_mut() {
                        if chain.run_id == run_id && chain.chain_id == chain_id {
                            if let Err(e) = check_consistent(chain, task, language, line) {
                                self.done = true;
                                return Some(Err(e));
                            }
                            chain.steps.push(rec);
                            continue;
                        }
                    }
                    if !self.seen.insert((run_id.clone(), chain_id.clone())) {
                        self.done = true;
                        return Some(Err(ChainError::Interleaved { line, chain_id }));
                    }
                    let fresh = Chain {
                        run_id,
                        chain_id,
                        task,
                        language,
                        steps: vec![rec],
                    };
                    if let Some(prev) = self.pending.replace(fresh) {
                        return Some(finish_group(prev));
                    }
                }
            }
        }
    }
}

fn check_consistent(chain: &Chain, task: Task, language: Language, line: usize) -> Result<(), ChainError> {
    let field = if chain.task != task {
        "task"
    } else if chain.language != language {
        "language"
    } else {
        return Ok(());
    };
    Err(ChainError::Inconsistent {
        line,
        chain_id: chain.chain_id.clone(),
        field,
    })
}

fn finish_group(mut chain: Chain) -> Result<Chain, ChainError> {
    chain.steps.sort_by_key(|s| s.step);
    if chain.steps.first().map(|s| s.step) != Some(0) {
        return Err(ChainError::MissingOrigin {
            chain_id: chain.chain_id,
        });
    }
    Ok(chain)
}

type ParsedLine = (usize, String, String, Task, Language, StepRecord);

struct LineReader<R> {
    reader: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> LineReader<R> {
    fn new(reader: R) -> Self {
        LineReader {
            reader,
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for LineReader<R> {
    type Item = Result<ParsedLine, ChainError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(ChainError::Parse {
                        line: self.line_no,
                        source: serde_json::Error::io(e),
                    }))
                }
            }
            if self.buf.trim().is_empty() {
                continue;
            }
            let parsed: Result<LineIn, _> = serde_json::from_str(self.buf.trim_end_matches(['\n', '\r']));
            return Some(match parsed {
                Ok(rec) => {
                    let (run_id, chain_id, task, language, step) = rec.into_parts();
                    Ok((self.line_no, run_id, chain_id, task, language, step))
                }
                Err(source) => Err(ChainError::Parse {
                    line: self.line_no,
                    source,
                }),
            });
        }
    }
}
