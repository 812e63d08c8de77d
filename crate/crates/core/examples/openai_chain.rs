//! One short paraphrase chain against an OpenAI-compatible endpoint.
//!
//! OPENAI_API_KEY=... cargo run --example openai_chain -- gpt-4o-mini
//! BASE_URL=http://localhost:8000/v1 cargo run --example openai_chain -- my-model

use textcycle::gateway::{BackendConfig, BackendKind, HttpBackend};
use textcycle::metrics::{periodicity_degree, Granularity};
use textcycle::runner::{run_chain, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = std::env::args().nth(1).unwrap_or_else(|| "gpt-4o-mini".into());
    let base_url = std::env::var("BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into());
    if base_url.contains("api.openai.com") && std::env::var("OPENAI_API_KEY").is_err() {
        eprintln!("set OPENAI_API_KEY, or BASE_URL for a local server");
        std::process::exit(1);
    }
    let backend = HttpBackend::from_config(&BackendConfig {
        kind: BackendKind::Http,
        base_url: Some(base_url),
        model: model.clone(),
        ..BackendConfig::default()
    })?;
    let config = RunConfig {
        rounds: 5,
        beams: 3,
        model_ids: vec![model],
        ..RunConfig::default()
    };
    let out = run_chain("The quick brown fox jumps over the lazy dog.", &config, &backend, 0)?;
    for s in &out.chain.steps {
        println!("[{}] {}", s.step, s.text);
    }
    if let Some(t) = out.truncation {
        println!("truncated after {} steps: {}", t.completed_steps, t.reason);
    }
    if out.chain.rounds() >= 3 {
        println!("tau_2 = {:.3}", periodicity_degree(&out.chain, 2, Granularity::Char)?.tau);
    }
    Ok(())
}
