//! Forward and reverse conditional perplexity along a mock chain.
//!
//! The mock scores its own canonical output at ln 0.9 per token, so once
//! the chain is in its 2-cycle both directions sit at 1/0.9.
//!
//! cargo run --example perplexity_convergence

use textcycle::gateway::MockBackend;
use textcycle::runner::{run_chain, PromptLibrary, RunConfig};
use textcycle::signals::perplexity_series;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mock = MockBackend::default();
    let source = mock.table().texts().next().unwrap().to_string();
    let config = RunConfig {
        rounds: 6,
        beams: 2,
        ..RunConfig::default()
    };
    let chain = run_chain(&source, &config, &mock, 0)?.chain;
    let s = perplexity_series(&chain, &mock, "mock", &PromptLibrary::default())?;
    println!("step  forward  reverse");
    for (i, f) in &s.forward {
        let r = s.reverse.iter().find(|(j, _)| j == i).map(|(_, r)| format!("{r:.4}"));
        println!("{i:>4}  {f:.4}   {}", r.unwrap_or_else(|| "-".into()));
    }
    println!("alpha estimate (last three forward) = {:.4}", s.alpha_estimate);
    Ok(())
}
