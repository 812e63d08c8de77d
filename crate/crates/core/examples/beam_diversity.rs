//! Vendi score of candidate beams.
//!
//! cargo run --example beam_diversity

use textcycle::gateway::{hash_embedding, MockBackend};
use textcycle::runner::{run_chain, RunConfig};
use textcycle::signals::{diversity_series, vendi_score};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let identical = vec![vec![1.0, 2.0, 3.0]; 4];
    let spread = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    println!("identical beam: {:.4}", vendi_score(&identical)?);
    println!("orthogonal beam: {:.4}", vendi_score(&spread)?);

    let words = ["quiet harbor at dawn", "noisy market at noon", "empty stadium after midnight"];
    let vecs: Vec<Vec<f64>> = words.iter().map(|w| hash_embedding(w)).collect();
    println!("hashed text beam: {:.4}", vendi_score(&vecs)?);

    // stored beams from an embedded run
    let mock = MockBackend::default();
    let source = mock.table().texts().next().unwrap().to_string();
    let config = RunConfig {
        rounds: 4,
        beams: 5,
        embed: true,
        ..RunConfig::default()
    };
    let chain = run_chain(&source, &config, &mock, 0)?.chain;
    for (step, v) in diversity_series(&chain)? {
        println!("step {step}: vendi {v:.4}");
    }
    Ok(())
}
