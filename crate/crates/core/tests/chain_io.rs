use std::path::Path;

use proptest::prelude::*;
use textcycle::chain::{
    load_chains, parse_chains, save_chains, to_jsonl, validate_chain, Candidate, Chain, ChainStream, Language, StepRecord, Task,
};

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/chains.jsonl")
}

#[test]
fn fixture_round_trips_byte_for_byte() {
    let original = std::fs::read_to_string(fixture()).unwrap();
    let chains = load_chains(&fixture()).unwrap();
    assert_eq!(chains.len(), 2);
    assert!(chains.iter().all(|c| validate_chain(c).is_empty()));
    assert_eq!(to_jsonl(&chains).unwrap(), original);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.jsonl");
    save_chains(&chains, &out).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap(), original);
}

#[test]
fn stream_yields_the_same_chains() {
    let all = load_chains(&fixture()).unwrap();
    let streamed: Vec<Chain> = ChainStream::open(&fixture()).unwrap().map(Result::unwrap).collect();
    assert_eq!(all, streamed);
}

#[test]
fn malformed_lines_are_reported() {
    let bad = "{\"run_id\":\"r\",\"chain_id\":\"c\",\"task\":\"paraphrase\",\"language\":\"en\",\"step\":0,\"text\":\"a\"}\nnot json\n";
    assert!(parse_chains(bad.as_bytes()).is_err());
}

fn arb_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[a-zé中 ]{1,20}").unwrap()
}

fn arb_chain() -> impl Strategy<Value = Chain> {
    (
        prop::collection::vec(arb_text(), 2..6),
        prop::collection::vec(prop::collection::vec(-8.0f64..0.0, 1..4), 1..3),
        any::<bool>(),
    )
        .prop_map(|(texts, lps, with_emb)| {
            let mut steps = vec![StepRecord::origin(texts[0].clone())];
            for (i, t) in texts.iter().enumerate().skip(1) {
                let mut candidates: Vec<Candidate> = lps
                    .iter()
                    .enumerate()
                    .map(|(j, lp)| Candidate::with_token_logprobs(format!("{t}{j}"), lp.clone()))
                    .collect();
                candidates[0].text = t.clone();
                if with_emb {
                    for c in &mut candidates {
                        c.embedding = Some(vec![0.5, -0.25, i as f64]);
                    }
                }
                steps.push(StepRecord {
                    step: i,
                    text: t.clone(),
                    prompt_id: Some("paraphrase-b".into()),
                    model_id: Some("m".into()),
                    temperature: Some(0.7),
                    candidates,
                    selected_index: Some(0),
                    embedding: with_emb.then(|| vec![1.0, 0.0, -(i as f64)]),
                    ..StepRecord::default()
                });
            }
            Chain {
                run_id: "prop".into(),
                chain_id: "chain-0000".into(),
                task: Task::Paraphrase,
                language: Language::En,
                steps,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn serialize_parse_is_identity(chain in arb_chain()) {
        prop_assert!(validate_chain(&chain).is_empty());
        let text = to_jsonl(std::slice::from_ref(&chain)).unwrap();
        let back = parse_chains(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &vec![chain]);
        prop_assert_eq!(to_jsonl(&back).unwrap(), text);
    }
}
