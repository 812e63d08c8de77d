//! Exact-enumeration check of the periodicity lower bound, with
//! parameters measured from the operator itself.
//!
//! cargo run --release --example verify_bound

use textcycle::sim::{build_space, measure_bound_params, random_affinity, verify_bound, InitialState, OperatorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = build_space(12, 3, 21)?;
    let op = OperatorConfig {
        beta_logit: 2.0,
        delta_min: 0.65,
        ..OperatorConfig::new(random_affinity(12, 21))
    };
    let m = measure_bound_params(&space, &op, 6, InitialState::Uniform)?;
    println!("measured alpha {:.4}, reverse {:.4}, k {:.4} ({} nodes)", m.alpha, m.reverse, m.k_slope, m.nodes);
    let report = verify_bound(&space, &op, 6, m.params(0.5, 0.25), InitialState::Uniform)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
