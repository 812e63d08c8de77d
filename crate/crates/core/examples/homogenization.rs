//! Corpus-level drift: repeatedly paraphrasing part of a corpus under a
//! low-perplexity preference narrows the spread of perplexities.
//!
//! cargo run --release --example homogenization

use textcycle::sim::stats::kendall_trend;
use textcycle::sim::{build_space, homogenization_sim, low_ppl_affinity, HomogenizeConfig, OperatorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = build_space(200, 16, 5)?;
    let op = OperatorConfig {
        beta_logit: 1.0,
        lambda: 0.5,
        eta: 1.0,
        ..OperatorConfig::new(low_ppl_affinity(&space, 10.0))
    };
    let h = homogenization_sim(&space, &op, &HomogenizeConfig::default())?;
    for (step, s) in h.std_series.iter().enumerate().step_by(5) {
        println!("step {step:>2}: std {s:.3}");
    }
    let k = kendall_trend(&h.std_series);
    println!("Kendall tau {:.3}, p = {:.2e}", k.tau, k.p_value);
    Ok(())
}
