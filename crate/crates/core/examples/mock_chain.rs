//! Runs paraphrase chains against the offline mock backend and prints the
//! periodicity degree of each chain. The mock maps texts in pairs, so the
//! chains settle into a 2-cycle from the first step.
//!
//! cargo run --example mock_chain

use textcycle::gateway::MockBackend;
use textcycle::metrics::{periodicity_degree, Granularity};
use textcycle::runner::{run_batch, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mock = MockBackend::default();
    let sources: Vec<String> = mock.table().texts().step_by(2).take(3).map(String::from).collect();
    let config = RunConfig {
        rounds: 8,
        beams: 4,
        seed: Some(1),
        ..RunConfig::default()
    };
    let out = run_batch(&sources, &config, &mock)?;
    for chain in &out.chains {
        let t2 = periodicity_degree(chain, 2, Granularity::Char)?;
        let t3 = periodicity_degree(chain, 3, Granularity::Char)?;
        println!("{}: tau_2 {:.3}  tau_3 {:.3}", chain.chain_id, t2.tau, t3.tau);
        for step in chain.steps.iter().take(4) {
            println!("  [{}] {}", step.step, step.text);
        }
    }
    Ok(())
}
