//! Reinforced random walk on a synthetic text space. Compares tau_2 with
//! reinforcement against the same walk without it.
//!
//! cargo run --example attractor_sim

use textcycle::sim::stats::{median, sign_test};
use textcycle::sim::{build_space, random_affinity, simulate_chain, OperatorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..30 {
        let space = build_space(40, 16, seed)?;
        let op = OperatorConfig::new(random_affinity(40, seed)).with_seed(seed);
        let flat = OperatorConfig { lambda: 0.0, ..op.clone() };
        with.push(simulate_chain(&space, &op, 0, 15)?.tau(&space, 2)?);
        without.push(simulate_chain(&space, &flat, 0, 15)?.tau(&space, 2)?);
    }
    let pairs: Vec<(f64, f64)> = with.iter().copied().zip(without.iter().copied()).collect();
    let t = sign_test(&pairs);
    println!("median tau_2 reinforced {:.3}, flat {:.3}", median(&with), median(&without));
    println!("sign test {}+ / {}-  p = {:.2e}", t.positive, t.negative, t.p_value);

    let space = build_space(40, 16, 0)?;
    let op = OperatorConfig::new(random_affinity(40, 0)).with_seed(0);
    print!("{}", simulate_chain(&space, &op, 0, 15)?.to_csv());
    Ok(())
}
