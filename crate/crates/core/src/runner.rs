//! Drives successive transformation chains against a backend.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Candidate, Chain, ChainError, Language, PerturbationNote, RunManifest, StepRecord, Task, TruncationMarker};
use crate::gateway::{Backend, BackendConfig, GatewayError, RetryPolicy, SampleRequest};
use crate::perturbation::{perturb, Lexicon, PerturbError, PerturbMethod, PerturbSpec, DEFAULT_RATE};
use crate::signals::conditional_perplexity;

const TEXT_SLOT: &str = "{text}";
const PREV_SLOT: &str = "{prev}";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("prompt error: {0}")]
    Prompt(String),
    #[error("candidate {index}: {detail}")]
    Selection { index: usize, detail: String },
    #[error("empty beam")]
    EmptyBeam,
    #[error("step {step}: backend failed: {source}")]
    Backend { step: usize, source: GatewayError },
    #[error("no source texts")]
    EmptySources,
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub task: Task,
    pub template: String,
    /// Conditions on the previous text through a `{prev}` slot.
    #[serde(default)]
    pub history: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Lit(&'a str),
    Text,
    Prev,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, task: Task, template: impl Into<String>, history: bool) -> Result<Self, RunError> {
        let t = PromptTemplate {
            id: id.into(),
            task,
            template: template.into(),
            history,
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), RunError> {
        let texts = self.template.matches(TEXT_SLOT).count();
        let prevs = self.template.matches(PREV_SLOT).count();
        if texts != 1 {
            return Err(RunError::Prompt(format!("template {} must contain {{text}} exactly once", self.id)));
        }
        if self.history && prevs != 1 {
            return Err(RunError::Prompt(format!("history template {} must contain {{prev}} exactly once", self.id)));
        }
        if !self.history && prevs != 0 {
            return Err(RunError::Prompt(format!("template {} has {{prev}} but is not a history template", self.id)));
        }
        Ok(())
    }

    fn pieces(&self) -> Vec<Piece<'_>> {
        let mut out = Vec::new();
        let mut rest = self.template.as_str();
        loop {
            let next = [(TEXT_SLOT, Piece::Text), (PREV_SLOT, Piece::Prev)]
                .into_iter()
                .filter_map(|(slot, piece)| rest.find(slot).map(|pos| (pos, slot.len(), piece)))
                .min_by_key(|(pos, _, _)| *pos);
            match next {
                Some((pos, len, piece)) => {
                    if pos > 0 {
                        out.push(Piece::Lit(&rest[..pos]));
                    }
                    out.push(piece);
                    rest = &rest[pos + len..];
                }
                None => {
                    if !rest.is_empty() {
                        out.push(Piece::Lit(rest));
                    }
                    return out;
                }
            }
        }
    }

    fn literal_len(&self) -> usize {
        self.template.len() - TEXT_SLOT.len() - if self.history { PREV_SLOT.len() } else { 0 }
    }

    /// Recovers the `{text}` slot from a prompt built with this template.
    pub fn extract_source<'p>(&self, prompt: &'p str) -> Option<&'p str> {
        let pieces = self.pieces();
        let mut pos = 0;
        let mut text_span = None;
        let mut open: Option<(Piece, usize)> = None;
        for piece in &pieces {
            match piece {
                Piece::Lit(lit) => {
                    let at = match &open {
                        // first literal must sit at the cursor
                        None => prompt[pos..].starts_with(lit).then_some(pos)?,
                        Some(_) => pos + prompt[pos..].find(lit)?,
                    };
                    if let Some((Piece::Text, start)) = open.take() {
                        text_span = Some((start, at));
                    }
                    pos = at + lit.len();
                }
                slot => open = Some((slot.clone(), pos)),
            }
        }
        match open {
            Some((Piece::Text, start)) => text_span = Some((start, prompt.len())),
            Some(_) => {}
            None if pos != prompt.len() => return None,
            None => {}
        }
        text_span.map(|(a, b)| &prompt[a..b])
    }
}

/// Fills `{text}` and, for history templates, `{prev}` in one pass, so
/// placeholder-like strings inside the inserted texts stay verbatim.
pub fn build_prompt(template: &PromptTemplate, current: &str, prev: Option<&str>) -> Result<String, RunError> {
    match (template.history, prev) {
        (true, None) => {
            return Err(RunError::Prompt(format!(
                "history template {} needs the previous text",
                template.id
            )))
        }
        (false, Some(_)) => {
            return Err(RunError::Prompt(format!(
                "template {} takes no previous text",
                template.id
            )))
        }
        _ => {}
    }
    let mut out = String::with_capacity(template.template.len() + current.len() + prev.map_or(0, str::len));
    for piece in template.pieces() {
        match piece {
            Piece::Lit(s) => out.push_str(s),
            Piece::Text => out.push_str(current),
            Piece::Prev => out.push_str(prev.unwrap_or_default()),
        }
    }
    Ok(out)
}

pub const COMPLEX_PARAPHRASE_PROMPT: &str = "Please rewrite the following paragraph with the goal of enhancing lexical and syntactical variety without changing the original meaning. Pay attention to employing diverse vocabulary, increasing the complexity and variation of sentence structures, using different conjunctions and clause constructions to make the expression more diverse and rich, while maintaining the core information and logical coherence of the original text. Specifically, avoid repetitive sentence patterns and try to express the same ideas in different ways.";

/// Templates addressable by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        use Task::*;
        let builtin = [
            ("paraphrase-a", Paraphrase, "Please paraphrase the following text: {text}", false),
            ("paraphrase-b", Paraphrase, "Please rephrase the text below: {text}", false),
            ("paraphrase-c", Paraphrase, "Please rewrite the following text: {text}", false),
            ("paraphrase-d", Paraphrase, "Please polish the text below: {text}", false),
            (
                "paraphrase-history",
                Paraphrase,
                "Please paraphrase the following text: {text}\nYour paraphrase must differ from both the text above and this earlier version of it: {prev}",
                true,
            ),
            ("polish", Polish, "Please polish the following text: {text}", false),
            (
                "clarify",
                Clarify,
                "Please rewrite the following text in a way that is simpler and easier to understand, using clear language and shorter sentences without losing the original meaning: {text}",
                false,
            ),
            ("informal", Formality, "Transform the following text into an informal style: {text}", false),
            ("formal", Formality, "Rewrite the following text in a formal style: {text}", false),
            ("translate-en-zh", Translate, "Please translate the following English text into Chinese: {text}", false),
            ("translate-zh-en", Translate, "Please translate the following Chinese text into English: {text}", false),
        ];
        let mut lib = PromptLibrary {
            templates: BTreeMap::new(),
        };
        for (id, task, tpl, history) in builtin {
            lib.insert(PromptTemplate::new(id, task, tpl, history).expect("built-in templates are valid"));
        }
        lib.insert(
            PromptTemplate::new("paraphrase-complex", Paraphrase, format!("{COMPLEX_PARAPHRASE_PROMPT}\n\n{{text}}"), false)
                .expect("valid"),
        );
        lib
    }
}

impl PromptLibrary {
    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Prompt ids used when a config names none.
    pub fn default_ids(task: Task, history: bool) -> Vec<String> {
        let ids: &[&str] = match (task, history) {
            (Task::Paraphrase, true) => &["paraphrase-history"],
            (Task::Paraphrase, false) => &["paraphrase-a"],
            (Task::Polish, _) => &["polish"],
            (Task::Clarify, _) => &["clarify"],
            (Task::Formality, _) => &["informal", "formal"],
            (Task::Translate, _) => &["translate-en-zh", "translate-zh-en"],
        };
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// Text slot of a prompt built by any template in the library. Templates
    /// with more literal text are tried first.
    pub fn extract_source<'p>(&self, prompt: &'p str) -> Option<&'p str> {
        let mut templates: Vec<&PromptTemplate> = self.templates.values().collect();
        templates.sort_by_key(|t| std::cmp::Reverse(t.literal_len()));
        templates.into_iter().find_map(|t| t.extract_source(prompt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    HighestProb,
    MaxPpl,
    MinPpl,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSchedule {
    /// Seeded uniform pick at every step.
    Random,
    /// Round-robin in list order, for alternating tasks.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub method: PerturbMethod,
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Lexicon file for synonym replacement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
}

fn default_rate() -> f64 {
    DEFAULT_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub task: Task,
    pub language: Language,
    pub rounds: usize,
    pub beams: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub strategy: Strategy,
    /// Rank `highest_prob` by mean token logprob instead of the raw sum.
    pub length_normalized: bool,
    pub prompt_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_schedule: Option<PromptSchedule>,
    pub model_ids: Vec<String>,
    pub history_mode: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Store embeddings of every step text and candidate.
    pub embed: bool,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<PromptTemplate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: None,
            task: Task::Paraphrase,
            language: Language::En,
            rounds: 15,
            beams: 10,
            temperature: 0.6,
            top_p: 0.9,
            strategy: Strategy::HighestProb,
            length_normalized: false,
            prompt_ids: Vec::new(),
            prompt_schedule: None,
            model_ids: vec!["mock".into()],
            history_mode: false,
            perturbation: None,
            seed: None,
            embed: false,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            prompts: Vec::new(),
            backend: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    fn is_stochastic(&self) -> bool {
        self.strategy == Strategy::Random
            || self.perturbation.is_some()
            || self.model_ids.len() > 1
            || (self.prompt_ids.len() > 1 && self.prompt_schedule != Some(PromptSchedule::Cycle))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |m: &str| Err(RunError::Config(m.to_string()));
        if self.rounds < 1 {
            return fail("rounds must be >= 1");
        }
        if self.beams < 1 {
            return fail("beams must be >= 1");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return fail("temperature must be >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail("top_p must lie in (0, 1]");
        }
        if self.strategy == Strategy::Random && self.seed.is_none() {
            return fail("strategy random requires a seed");
        }
        if self.model_ids.is_empty() {
            return fail("model_ids must be nonempty");
        }
        if let Some(p) = &self.perturbation {
            if p.method == PerturbMethod::SynonymReplace && p.lexicon.is_none() {
                return fail("synonym_replace needs a lexicon path");
            }
        }
        let lib = self.library()?;
        for id in self.effective_prompt_ids() {
            let t = lib
                .get(&id)
                .ok_or_else(|| RunError::Config(format!("unknown prompt id {id}")))?;
            if t.history != self.history_mode {
                return Err(RunError::Config(format!(
                    "prompt {id} is {}a history template but history_mode is {}",
                    if t.history { "" } else { "not " },
                    self.history_mode
                )));
            }
        }
        Ok(())
    }

    pub fn library(&self) -> Result<PromptLibrary, RunError> {
        let mut lib = PromptLibrary::default();
        for t in &self.prompts {
            t.check()?;
            lib.insert(t.clone());
        }
        Ok(lib)
    }

    pub fn effective_prompt_ids(&self) -> Vec<String> {
        if self.prompt_ids.is_empty() {
            PromptLibrary::default_ids(self.task, self.history_mode)
        } else {
            self.prompt_ids.clone()
        }
    }

    fn effective_schedule(&self) -> PromptSchedule {
        self.prompt_schedule.unwrap_or(
            if self.prompt_ids.is_empty() && matches!(self.task, Task::Formality | Task::Translate) {
                PromptSchedule::Cycle
            } else {
                PromptSchedule::Random
            },
        )
    }

    fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Config snapshot for the manifest, with the seed filled in whenever
    /// anything stochastic is enabled.
    pub fn snapshot(&self) -> RunConfig {
        let mut snap = self.clone();
        if snap.is_stochastic() && snap.seed.is_none() {
            snap.seed = Some(self.base_seed());
        }
        snap
    }

    fn perturb_spec(&self) -> Result<Option<PerturbSpec>, RunError> {
        let Some(p) = &self.perturbation else {
            return Ok(None);
        };
        let lexicon = match &p.lexicon {
            Some(path) => Some(Lexicon::load(path)?),
            None => None,
        };
        Ok(Some(PerturbSpec::new(p.method, p.rate, lexicon, 0)?))
    }
}

/// Per-chain seed, independent of scheduling order.
pub fn chain_seed(base: u64, chain_index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (chain_index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Picks the candidate fed into the next round. Ties go to the lowest index.
pub fn select_candidate(beam: &[Candidate], strategy: Strategy, seed: u64) -> Result<usize, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    select_with(beam, strategy, false, &mut rng)
}

fn argmax_by<F>(beam: &[Candidate], mut score: F) -> Result<usize, RunError>
where
    F: FnMut(usize, &Candidate) -> Result<f64, RunError>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in beam.iter().enumerate() {
        let s = score(i, c)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(RunError::EmptyBeam)
}

fn token_ppl(index: usize, c: &Candidate) -> Result<f64, RunError> {
    let tokens = c.token_logprobs.as_deref().ok_or_else(|| RunError::Selection {
        index,
        detail: "perplexity strategy needs token_logprobs".into(),
    })?;
    conditional_perplexity(tokens).map_err(|e| RunError::Selection {
        index,
        detail: e.to_string(),
    })
}

pub(crate) fn select_with<R: Rng>(beam: &[Candidate], strategy: Strategy, length_normalized: bool, rng: &mut R) -> Result<usize, RunError> {
    if beam.is_empty() {
        return Err(RunError::EmptyBeam);
    }
    match strategy {
        Strategy::HighestProb => argmax_by(beam, |i, c| {
            let sum = c
                .sum_logprob
                .or_else(|| c.token_logprobs.as_ref().map(|t| t.iter().sum()))
                .ok_or_else(|| RunError::Selection {
                    index: i,
                    detail: "highest_prob needs sum_logprob".into(),
                })?;
            if length_normalized {
                let n = c.token_logprobs.as_ref().map_or(0, Vec::len);
                if n == 0 {
                    return Err(RunError::Selection {
                        index: i,
                        detail: "length normalization needs token_logprobs".into(),
                    });
                }
                Ok(sum / n as f64)
            } else {
                Ok(sum)
            }
        }),
        Strategy::MaxPpl => argmax_by(beam, token_ppl),
        Strategy::MinPpl => argmax_by(beam, |i, c| token_ppl(i, c).map(|p| -p)),
        Strategy::Random => Ok(rng.random_range(0..beam.len())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub chain: Chain,
    pub truncation: Option<TruncationMarker>,
}

struct Runner<'a> {
    config: &'a RunConfig,
    library: PromptLibrary,
    prompt_ids: Vec<String>,
    schedule: PromptSchedule,
    perturb: Option<PerturbSpec>,
    backend: &'a dyn Backend,
    run_id: String,
}

impl<'a> Runner<'a> {
    fn new(config: &'a RunConfig, backend: &'a dyn Backend) -> Result<Self, RunError> {
        config.validate()?;
        Ok(Runner {
            config,
            library: config.library()?,
            prompt_ids: config.effective_prompt_ids(),
            schedule: config.effective_schedule(),
            perturb: config.perturb_spec()?,
            backend,
            run_id: config
                .run_id
                .clone()
                .unwrap_or_else(|| format!("run-{}", config.base_seed())),
        })
    }

    fn embed(&self, model: &str, texts: Vec<String>, step: usize) -> Result<Vec<Vec<f64>>, RunError> {
        self.config
            .retry
            .run(|| self.backend.embed(model, &texts))
            .map_err(|source| RunError::Backend { step, source })
    }

    fn run(&self, source: &str, chain_index: usize) -> Result<ChainOutcome, RunError> {
        let cfg = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(cfg.base_seed(), chain_index));
        let chain_id = format!("chain-{chain_index:04}");
        let mut origin = StepRecord::origin(source);
        if cfg.embed {
            origin.embedding = self.embed(&cfg.model_ids[0], vec![source.to_string()], 0)?.pop();
        }
        let mut steps = vec![origin];
        let mut truncation = None;

        for i in 1..=cfg.rounds {
            match self.step(i, &steps, &mut rng) {
                Ok(rec) => steps.push(rec),
                Err(e) if i == 1 => return Err(e),
                Err(e) => {
                    log::warn!("{chain_id}: truncated after step {}: {e}", i - 1);
                    truncation = Some(TruncationMarker {
                        chain_id: chain_id.clone(),
                        completed_steps: i - 1,
                        reason: e.to_string(),
                    });
                    break;
                }
            }
        }
        Ok(ChainOutcome {
            chain: Chain {
                run_id: self.run_id.clone(),
                chain_id,
                task: cfg.task,
                language: cfg.language,
                steps,
            },
            truncation,
        })
    }

    fn step(&self, i: usize, steps: &[StepRecord], rng: &mut ChaCha8Rng) -> Result<StepRecord, RunError> {
        let cfg = self.config;
        let prompt_id = match (self.schedule, self.prompt_ids.len()) {
            (_, 1) => &self.prompt_ids[0],
            (PromptSchedule::Cycle, n) => &self.prompt_ids[(i - 1) % n],
            (PromptSchedule::Random, n) => &self.prompt_ids[rng.random_range(0..n)],
        };
        let model_id = match cfg.model_ids.len() {
            1 => &cfg.model_ids[0],
            n => &cfg.model_ids[rng.random_range(0..n)],
        };
        let template = self
            .library
            .get(prompt_id)
            .ok_or_else(|| RunError::Config(format!("unknown prompt id {prompt_id}")))?;
        let current = steps[i - 1].text.as_str();
        // the first history step uses T_0 as its own reference
        let prev = template.history.then(|| steps[i.saturating_sub(2)].text.as_str());
        let prompt = build_prompt(template, current, prev)?;
        let req = SampleRequest {
            model: model_id,
            prompt: &prompt,
            n: cfg.beams,
            temperature: cfg.temperature,
            top_p: cfg.top_p,
        };
        let mut candidates = cfg
            .retry
            .run(|| self.backend.chat_sample(&req))
            .map_err(|source| RunError::Backend { step: i, source })?;
        if candidates.is_empty() {
            return Err(RunError::Backend {
                step: i,
                source: GatewayError::Decode("backend returned no candidates".into()),
            });
        }
        let selected = select_with(&candidates, cfg.strategy, cfg.length_normalized, rng)?;
        let mut text = candidates[selected].text.clone();
        let mut perturbation = None;
        if let Some(spec) = &self.perturb {
            let spec = spec.with_seed(rng.next_u64());
            match perturb(&text, &spec) {
                Ok(out) => {
                    if let Some(w) = &out.warning {
                        log::warn!("step {i}: {w}");
                    }
                    perturbation = Some(PerturbationNote {
                        method: spec.method().as_str().to_string(),
                        edit_count: out.edit_count,
                    });
                    text = out.text;
                }
                Err(e) => log::warn!("step {i}: perturbation skipped: {e}"),
            }
        }
        let mut embedding = None;
        if cfg.embed {
            let mut texts: Vec<String> = vec![text.clone()];
            texts.extend(candidates.iter().map(|c| c.text.clone()));
            let mut vecs = self.embed(model_id, texts, i)?.into_iter();
            embedding = vecs.next();
            for (c, v) in candidates.iter_mut().zip(vecs) {
                c.embedding = Some(v);
            }
        }
        Ok(StepRecord {
            step: i,
            text,
            prompt_id: Some(prompt_id.clone()),
            model_id: Some(model_id.clone()),
            temperature: Some(cfg.temperature),
            perturbation,
            candidates,
            selected_index: Some(selected),
            embedding,
        })
    }
}

/// Runs `T_{i} = P(T_{i-1})` for `i = 1..=rounds` from one source text.
///
/// A backend failure after step 1 truncates the chain at the last complete
/// step and records a [`TruncationMarker`]; failure at step 1 is an error.
pub fn run_chain(source: &str, config: &RunConfig, backend: &dyn Backend, chain_index: usize) -> Result<ChainOutcome, RunError> {
    Runner::new(config, backend)?.run(source, chain_index)
}

#[derive(Debug)]
pub struct BatchOutcome {
    /// Complete and truncated chains in source order.
    pub chains: Vec<Chain>,
    pub manifest: RunManifest,
    /// Sources that produced no usable chain, by index.
    pub failures: Vec<(usize, RunError)>,
}

impl BatchOutcome {
    /// Writes the chains as JSONL and the manifest next to them.
    pub fn save(&self, chains_path: &Path) -> Result<PathBuf, RunError> {
        crate::chain::save_chains(&self.chains, chains_path)?;
        let manifest_path = manifest_path_for(chains_path);
        self.manifest.save(&manifest_path)?;
        Ok(manifest_path)
    }
}

/// `out/chains.jsonl` → `out/chains.manifest.json`.
pub fn manifest_path_for(chains_path: &Path) -> PathBuf {
    let stem = chains_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "chains".into());
    chains_path.with_file_name(format!("{stem}.manifest.json"))
}

/// One chain per source; chains run concurrently up to `max_in_flight`.
pub fn run_batch(sources: &[String], config: &RunConfig, backend: &dyn Backend) -> Result<BatchOutcome, RunError> {
    if sources.is_empty() {
        return Err(RunError::EmptySources);
    }
    let runner = Runner::new(config, backend)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let results: Vec<Result<ChainOutcome, RunError>> = pool.install(|| {
        use rayon::prelude::*;
        sources
            .par_iter()
            .enumerate()
            .map(|(idx, src)| runner.run(src, idx))
            .collect()
    });

    let mut chains = Vec::new();
    let mut truncated = Vec::new();
    let mut failed = Vec::new();
    let mut failures = Vec::new();
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(out) => {
                truncated.extend(out.truncation);
                chains.push(out.chain);
            }
            Err(e) => {
                failed.push(TruncationMarker {
                    chain_id: format!("chain-{idx:04}"),
                    completed_steps: 0,
                    reason: e.to_string(),
                });
                failures.push((idx, e));
            }
        }
    }
    let manifest = RunManifest {
        run_id: runner.run_id.clone(),
        config: config.snapshot(),
        created_at: chrono::Utc::now(),
        chain_count: chains.len(),
        truncated,
        failed,
    };
    Ok(BatchOutcome {
        chains,
        manifest,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;

    fn lib() -> PromptLibrary {
        PromptLibrary::default()
    }

    #[test]
    fn paraphrase_prompt_matches_table_a() {
        let t = lib().get("paraphrase-a").unwrap().clone();
        assert_eq!(build_prompt(&t, "X", None).unwrap(), "Please paraphrase the following text: X");
    }

    #[test]
    fn history_prompt_fills_both_slots() {
        let t = lib().get("paraphrase-history").unwrap().clone();
        let p = build_prompt(&t, "current text", Some("older text")).unwrap();
        assert!(p.starts_with("Please paraphrase the following text: current text\n"));
        assert!(p.ends_with(": older text"));
        assert!(build_prompt(&t, "x", None).is_err());
        let plain = lib().get("paraphrase-a").unwrap().clone();
        assert!(build_prompt(&plain, "x", Some("y")).is_err());
    }

    #[test]
    fn substitution_is_single_pass() {
        let t = lib().get("paraphrase-a").unwrap().clone();
        assert_eq!(
            build_prompt(&t, "say {prev} and {text}", None).unwrap(),
            "Please paraphrase the following text: say {prev} and {text}"
        );
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new("x", Task::Paraphrase, "no slot", false).is_err());
        assert!(PromptTemplate::new("x", Task::Paraphrase, "{text}", true).is_err());
        assert!(PromptTemplate::new("x", Task::Paraphrase, "{text} {prev}", false).is_err());
        assert!(PromptTemplate::new("x", Task::Paraphrase, "{text} {prev}", true).is_ok());
    }

    #[test]
    fn sources_are_recovered_from_prompts() {
        let l = lib();
        for id in l.ids().collect::<Vec<_>>() {
            let t = l.get(id).unwrap();
            let prev = t.history.then_some("the earlier one");
            let p = build_prompt(t, "the text: with colon", prev).unwrap();
            assert_eq!(l.extract_source(&p), Some("the text: with colon"), "template {id}");
        }
        assert_eq!(l.extract_source("unrelated"), None);
    }

    #[test]
    fn selection_rules() {
        let beam: Vec<Candidate> = [-5.0, -3.0, -7.0]
            .iter()
            .map(|&s| Candidate {
                sum_logprob: Some(s),
                ..Candidate::new("t")
            })
            .collect();
        assert_eq!(select_candidate(&beam, Strategy::HighestProb, 0).unwrap(), 1);

        let ppl2 = Candidate::with_token_logprobs("a", vec![0.5f64.ln(); 3]);
        let ppl8 = Candidate::with_token_logprobs("b", vec![0.125f64.ln(); 2]);
        let beam = vec![ppl2.clone(), ppl8.clone()];
        assert_eq!(select_candidate(&beam, Strategy::MaxPpl, 0).unwrap(), 1);
        assert_eq!(select_candidate(&beam, Strategy::MinPpl, 0).unwrap(), 0);

        let twins = vec![ppl2.clone(), ppl2.clone()];
        for s in [Strategy::HighestProb, Strategy::MaxPpl, Strategy::MinPpl] {
            assert_eq!(select_candidate(&twins, s, 0).unwrap(), 0);
        }

        let bare = vec![Candidate::new("a"), Candidate::new("b")];
        let err = select_candidate(&bare, Strategy::MaxPpl, 0).unwrap_err();
        assert!(matches!(err, RunError::Selection { index: 0, .. }));
    }

    #[test]
    fn random_selection_is_seeded() {
        let beam: Vec<Candidate> = (0..10).map(|i| Candidate::new(format!("c{i}"))).collect();
        let a: Vec<usize> = (0..20).map(|s| select_candidate(&beam, Strategy::Random, s).unwrap()).collect();
        let b: Vec<usize> = (0..20).map(|s| select_candidate(&beam, Strategy::Random, s).unwrap()).collect();
        assert_eq!(a, b);
        assert!(a.iter().any(|&i| i != a[0]));
    }

    #[test]
    fn length_normalization_switch() {
        let long = Candidate::with_token_logprobs("long", vec![-0.1; 10]);
        let short = Candidate::with_token_logprobs("short", vec![-0.5; 1]);
        let beam = vec![long, short];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_with(&beam, Strategy::HighestProb, false, &mut rng).unwrap(), 1);
        assert_eq!(select_with(&beam, Strategy::HighestProb, true, &mut rng).unwrap(), 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig {
            strategy: Strategy::Random,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.seed = Some(1);
        assert!(cfg.validate().is_ok());
        cfg.rounds = 0;
        assert!(cfg.validate().is_err());
        let hist = RunConfig {
            history_mode: true,
            prompt_ids: vec!["paraphrase-a".into()],
            ..RunConfig::default()
        };
        assert!(hist.validate().is_err());
    }

    #[test]
    fn involution_mock_gives_two_cycle() {
        let mock = MockBackend::default();
        let src = mock.table().texts().next().unwrap().to_string();
        let cfg = RunConfig {
            rounds: 4,
            beams: 1,
            ..RunConfig::default()
        };
        let out = run_chain(&src, &cfg, &mock, 0).unwrap();
        let t = out.chain.texts();
        assert_eq!(t.len(), 5);
        assert_eq!(t[3], t[1]);
        assert_eq!(t[4], t[2]);
        assert_eq!(t[2], t[0]);
    }

    #[test]
    fn one_round_chain_has_two_steps() {
        let mock = MockBackend::default();
        let cfg = RunConfig {
            rounds: 1,
            beams: 2,
            ..RunConfig::default()
        };
        let out = run_chain("anything", &cfg, &mock, 0).unwrap();
        assert_eq!(out.chain.steps.len(), 2);
        assert!(crate::chain::validate_chain(&out.chain).is_empty());
    }

    #[test]
    fn alternating_tasks_cycle_prompts() {
        let mock = MockBackend::default();
        let cfg = RunConfig {
            task: Task::Formality,
            rounds: 4,
            beams: 1,
            ..RunConfig::default()
        };
        let out = run_chain("some text", &cfg, &mock, 0).unwrap();
        let ids: Vec<_> = out.chain.steps[1..].iter().map(|s| s.prompt_id.clone().unwrap()).collect();
        assert_eq!(ids, ["informal", "formal", "informal", "formal"]);
    }

    #[test]
    fn chain_seeds_differ_per_index() {
        assert_ne!(chain_seed(7, 0), chain_seed(7, 1));
        assert_eq!(chain_seed(7, 3), chain_seed(7, 3));
    }
}
