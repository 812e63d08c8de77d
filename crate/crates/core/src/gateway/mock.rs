use std::collections::{BTreeMap, BTreeSet};

use crate::chain::Candidate;
use crate::runner::PromptLibrary;

use super::{Backend, GatewayError, SampleRequest};

/// Per-token log-probability of the mock's canonical output, `ln 0.9`.
pub const CANONICAL_TOKEN_LOGPROB: f64 = -0.10536051565782628;
/// Per-token log-probability of anything else, `ln 0.1`.
pub const OFF_CANONICAL_TOKEN_LOGPROB: f64 = -2.3025850929940455;
pub const MOCK_EMBED_DIM: usize = 64;
/// Appended to inputs the table does not know.
pub const ECHO_MARKER: &str = " [mock-echo]";

/// A finite involution on texts: `pair(pair(x)) == x` and `pair(x) != x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockTable {
    map: BTreeMap<String, String>,
}

impl MockTable {
    /// Builds the involution from unordered pairs; every text may appear once.
    pub fn new<I, A, B>(pairs: I) -> Result<Self, GatewayError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (a.into(), b.into());
            if a == b {
                return Err(GatewayError::Config(format!("mock pair maps {a:?} to itself")));
            }
            for t in [&a, &b] {
                if map.contains_key(t) {
                    return Err(GatewayError::Config(format!("text {t:?} appears in two mock pairs")));
                }
            }
            map.insert(a.clone(), b.clone());
            map.insert(b, a);
        }
        Ok(MockTable { map })
    }

    pub fn pair(&self, text: &str) -> Option<&str> {
        self.map.get(text).map(String::as_str)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Key occurring earliest in `haystack`, longest on ties.
    fn find_in(&self, haystack: &str) -> Option<&str> {
        self.map
            .keys()
            .filter_map(|k| haystack.find(k.as_str()).map(|pos| (pos, k)))
            .min_by(|(pa, ka), (pb, kb)| pa.cmp(pb).then(kb.len().cmp(&ka.len())))
            .map(|(_, k)| k.as_str())
    }
}

impl Default for MockTable {
    fn default() -> Self {
        MockTable::new(DEFAULT_PAIRS.iter().copied()).expect("built-in mock pairs form an involution")
    }
}

const DEFAULT_PAIRS: &[(&str, &str)] = &[
    (
        "The committee approved the new budget after a long debate.",
        "Following lengthy discussion, the panel signed off on the revised spending plan.",
    ),
    (
        "Heavy rain forced the organizers to postpone the outdoor concert.",
        "Because of a downpour, the open-air show was pushed back by its planners.",
    ),
    (
        "She learned to play the violin when she was seven years old.",
        "At the age of seven, she picked up the violin.",
    ),
    (
        "The museum will extend its opening hours during the summer.",
        "Over the summer months, visitors can tour the gallery later into the evening.",
    ),
    (
        "Researchers found that regular exercise improves sleep quality.",
        "Working out consistently leads to better rest, according to a new study.",
    ),
    (
        "The train was delayed because of a signal failure near the station.",
        "A broken signal close to the depot held up the railway service.",
    ),
    (
        "Our team finished the project two weeks ahead of schedule.",
        "We wrapped up the assignment a fortnight earlier than planned.",
    ),
    (
        "Local farmers are worried about the prolonged drought.",
        "The extended dry spell has growers in the region concerned.",
    ),
];

/// Deterministic offline backend.
///
/// Generation returns the table image of the source text as candidate 0 and
/// `n - 1` suffixed variants; scoring favours exactly that canonical image;
/// embeddings are signed feature hashes of the word multiset.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: MockTable,
    prompts: PromptLibrary,
    fail_on: BTreeSet<String>,
}

impl MockBackend {
    pub fn new(table: MockTable) -> Self {
        MockBackend {
            table,
            prompts: PromptLibrary::default(),
            fail_on: BTreeSet::new(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptLibrary) -> Self {
        self.prompts = prompts;
        self
    }

    /// Every generation whose source text equals `text` fails.
    pub fn fail_on(mut self, text: impl Into<String>) -> Self {
        self.fail_on.insert(text.into());
        self
    }

    pub fn table(&self) -> &MockTable {
        &self.table
    }

    /// The text slot of a prompt built from a known template.
    pub fn source_of<'p>(&self, prompt: &'p str) -> &'p str {
        if let Some(src) = self.prompts.extract_source(prompt) {
            return src;
        }
        if let Some(key) = self.table.find_in(prompt) {
            let pos = prompt.find(key).expect("key was found");
            return &prompt[pos..pos + key.len()];
        }
        prompt
    }

    /// Output the mock considers most likely for a prompt.
    pub fn canonical_output(&self, prompt: &str) -> String {
        let src = self.source_of(prompt);
        match self.table.pair(src) {
            Some(image) => image.to_string(),
            None => format!("{src}{ECHO_MARKER}"),
        }
    }
}

fn token_logprobs(text: &str, per_token: f64) -> Vec<f64> {
    vec![per_token; text.split_whitespace().count().max(1)]
}

impl Backend for MockBackend {
    fn chat_sample(&self, req: &SampleRequest<'_>) -> Result<Vec<Candidate>, GatewayError> {
        if req.n == 0 {
            return Err(GatewayError::InvalidRequest("n must be >= 1".into()));
        }
        let src = self.source_of(req.prompt);
        if self.fail_on.contains(src) {
            return Err(GatewayError::Injected(format!("mock configured to fail on {src:?}")));
        }
        let canonical = self.canonical_output(req.prompt);
        let mut out = Vec::with_capacity(req.n);
        let lp = token_logprobs(&canonical, CANONICAL_TOKEN_LOGPROB);
        out.push(Candidate::with_token_logprobs(canonical.clone(), lp));
        for j in 1..req.n {
            let text = format!("{canonical} (variant {j})");
            let lp = token_logprobs(&text, OFF_CANONICAL_TOKEN_LOGPROB);
            out.push(Candidate::with_token_logprobs(text, lp));
        }
        Ok(out)
    }

    fn score_continuation(&self, _model: &str, context: &str, continuation: &str) -> Result<Vec<f64>, GatewayError> {
        if continuation.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("continuation must be nonempty".into()));
        }
        let per_token = if continuation == self.canonical_output(context) {
            CANONICAL_TOKEN_LOGPROB
        } else {
            OFF_CANONICAL_TOKEN_LOGPROB
        };
        Ok(token_logprobs(continuation, per_token))
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        Ok(texts.iter().map(|t| hash_embedding(t)).collect())
    }
}

/// Signed feature hash of the whitespace-word multiset, L2-normalized.
/// A text without words maps to the first basis vector.
pub fn hash_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; MOCK_EMBED_DIM];
    for word in text.split_whitespace() {
        let h = fnv1a(word.as_bytes());
        let bucket = (h % MOCK_EMBED_DIM as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let n = crate::metrics::norm(&v);
    if n == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{cosine_similarity, normalized_edit_distance, Granularity};

    fn req(prompt: &str, n: usize) -> SampleRequest<'_> {
        SampleRequest {
            model: "mock",
            prompt,
            n,
            temperature: 0.6,
            top_p: 0.9,
        }
    }

    #[test]
    fn logprob_constants_are_logs() {
        assert_eq!(CANONICAL_TOKEN_LOGPROB, 0.9f64.ln());
        assert_eq!(OFF_CANONICAL_TOKEN_LOGPROB, 0.1f64.ln());
    }

    #[test]
    fn default_table_is_an_involution() {
        let t = MockTable::default();
        for x in t.texts() {
            let y = t.pair(x).unwrap();
            assert_ne!(x, y);
            assert_eq!(t.pair(y), Some(x));
            assert!(normalized_edit_distance(x, y, Granularity::Char) > 0.2);
        }
    }

    #[test]
    fn table_rejects_overlap_and_fixed_points() {
        assert!(MockTable::new([("a", "a")]).is_err());
        assert!(MockTable::new([("a", "b"), ("b", "c")]).is_err());
    }

    #[test]
    fn sample_returns_pair_then_variants() {
        let mock = MockBackend::default();
        let x = "She learned to play the violin when she was seven years old.";
        let prompt = format!("Please paraphrase the following text: {x}");
        let one = mock.chat_sample(&req(&prompt, 1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].text, "At the age of seven, she picked up the violin.");
        let three = mock.chat_sample(&req(&prompt, 3)).unwrap();
        assert_eq!(three[0].text, one[0].text);
        assert!(three[1].text.ends_with("(variant 1)"));
        assert!(three[2].text.ends_with("(variant 2)"));
        assert!(three[0].sum_logprob.unwrap() > three[1].sum_logprob.unwrap());
        assert!(mock.chat_sample(&req(&prompt, 0)).is_err());
    }

    #[test]
    fn unknown_input_is_echoed_with_marker() {
        let mock = MockBackend::default();
        let c = mock.chat_sample(&req("Please paraphrase the following text: hello there", 1)).unwrap();
        assert_eq!(c[0].text, format!("hello there{ECHO_MARKER}"));
    }

    #[test]
    fn scoring_follows_the_mock_contract() {
        let mock = MockBackend::new(MockTable::new([("w x y z", "a b c d")]).unwrap());
        let ctx = "Please paraphrase the following text: w x y z";
        assert_eq!(mock.score_continuation("m", ctx, "a b c d").unwrap(), vec![0.9f64.ln(); 4]);
        assert_eq!(mock.score_continuation("m", ctx, "a b c e").unwrap(), vec![0.1f64.ln(); 4]);
        assert!(mock.score_continuation("m", ctx, "").is_err());
    }

    #[test]
    fn embeddings_are_deterministic_unit_vectors() {
        let mock = MockBackend::default();
        let t = "the same text twice".to_string();
        let e = mock.embed("m", &[t.clone(), t]).unwrap();
        assert_eq!(e[0], e[1]);
        assert_eq!(e[0].len(), MOCK_EMBED_DIM);
        assert!((crate::metrics::norm(&e[0]) - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&e[0], &e[1]).unwrap() - 1.0).abs() < 1e-12);
        assert!(mock.embed("m", &[]).is_err());
    }

    #[test]
    fn fault_injection_targets_one_source() {
        let mock = MockBackend::default().fail_on("boom");
        let err = mock.chat_sample(&req("Please paraphrase the following text: boom", 1)).unwrap_err();
        assert!(matches!(err, GatewayError::Injected(_)));
    }
}
