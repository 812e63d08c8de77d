use textcycle::chain::validate_chain;
use textcycle::gateway::{MockBackend, RetryPolicy};
use textcycle::runner::{manifest_path_for, run_batch, run_chain, RunConfig, RunError, Strategy};

/// `n` table texts, no two of which map to each other.
fn sources(mock: &MockBackend, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in mock.table().texts() {
        if out.len() < n && !out.iter().any(|o| mock.table().pair(o) == Some(t)) {
            out.push(t.to_string());
        }
    }
    out
}

fn quick(seed: u64) -> RunConfig {
    RunConfig {
        rounds: 6,
        beams: 3,
        seed: Some(seed),
        retry: RetryPolicy {
            attempts: 1,
            initial_backoff_ms: 0,
        },
        ..RunConfig::default()
    }
}

#[test]
fn failure_mid_chain_truncates_only_that_chain() {
    let plain = MockBackend::default();
    let src = sources(&plain, 3);
    let image = plain.table().pair(&src[2]).unwrap().to_string();
    let mock = MockBackend::default().fail_on(image);
    let out = run_batch(&src, &quick(1), &mock).unwrap();

    assert_eq!(out.chains.len(), 3);
    assert!(out.failures.is_empty());
    assert_eq!(out.chains[0].rounds(), 6);
    assert_eq!(out.chains[1].rounds(), 6);
    assert_eq!(out.chains[2].rounds(), 1);
    assert!(out.chains.iter().all(|c| validate_chain(c).is_empty()));
    assert_eq!(out.manifest.truncated.len(), 1);
    assert_eq!(out.manifest.truncated[0].chain_id, "chain-0002");
    assert_eq!(out.manifest.truncated[0].completed_steps, 1);
}

#[test]
fn failure_at_first_step_is_recorded_as_failed() {
    let plain = MockBackend::default();
    let src = sources(&plain, 2);
    let mock = MockBackend::default().fail_on(src[0].clone());
    let out = run_batch(&src, &quick(2), &mock).unwrap();
    assert_eq!(out.chains.len(), 1);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].0, 0);
    assert!(matches!(out.failures[0].1, RunError::Backend { step: 1, .. }));
    assert_eq!(out.manifest.failed[0].chain_id, "chain-0000");
    assert!(run_chain(&src[0], &quick(2), &mock, 0).is_err());
}

#[test]
fn random_strategy_is_reproducible_per_seed() {
    let mock = MockBackend::default();
    let src = sources(&mock, 3);
    let cfg = RunConfig {
        strategy: Strategy::Random,
        model_ids: vec!["m-a".into(), "m-b".into()],
        ..quick(42)
    };
    let a = run_batch(&src, &cfg, &mock).unwrap();
    let b = run_batch(&src, &cfg, &mock).unwrap();
    assert_eq!(a.chains, b.chains);
    let models: Vec<String> = a.chains.iter().flat_map(|c| c.steps[1..].iter().map(|s| s.model_id.clone().unwrap())).collect();
    assert!(models.iter().any(|m| m == "m-a") && models.iter().any(|m| m == "m-b"));

    let c = run_batch(&src, &RunConfig { seed: Some(43), ..cfg }, &mock).unwrap();
    let picks = |o: &textcycle::runner::BatchOutcome| -> Vec<Option<usize>> {
        o.chains.iter().flat_map(|ch| ch.steps.iter().map(|s| s.selected_index)).collect()
    };
    assert_ne!(picks(&a), picks(&c));
}

#[test]
fn saved_batch_has_manifest_next_to_chains() {
    let mock = MockBackend::default();
    let out = run_batch(&sources(&mock, 2), &quick(3), &mock).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chains.jsonl");
    let manifest = out.save(&path).unwrap();
    assert_eq!(manifest, manifest_path_for(&path));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(json["chain_count"], 2);
    assert_eq!(json["config"]["seed"], 3);
    assert_eq!(textcycle::chain::load_chains(&path).unwrap(), out.chains);
}

#[test]
fn embed_mode_stores_step_and_beam_vectors() {
    let mock = MockBackend::default();
    let cfg = RunConfig { embed: true, ..quick(4) };
    let out = run_batch(&sources(&mock, 1), &cfg, &mock).unwrap();
    let chain = &out.chains[0];
    assert!(chain.steps.iter().all(|s| s.embedding.is_some()));
    assert!(chain.steps[1..].iter().all(|s| s.candidates.iter().all(|c| c.embedding.is_some())));
    let div = textcycle::signals::diversity_series(chain).unwrap();
    assert_eq!(div.len(), 6);
}
