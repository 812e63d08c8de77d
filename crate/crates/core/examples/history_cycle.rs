//! History-conditioned walk: forbidding a return to the previous state
//! turns the 2-cycle into a 3-cycle.
//!
//! cargo run --example history_cycle

use textcycle::sim::{build_space, pair_clique_affinity, simulate_chain, OperatorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = build_space(9, 8, 3)?;
    for history in [false, true] {
        let op = OperatorConfig {
            beta_logit: f64::INFINITY,
            history_mode: history,
            ..OperatorConfig::new(pair_clique_affinity(9))
        };
        let c = simulate_chain(&space, &op, 0, 12)?;
        println!(
            "history {history:<5} states {:?}  tau_2 {:.3}  tau_3 {:.3}",
            c.states,
            c.tau(&space, 2)?,
            c.tau(&space, 3)?
        );
    }
    Ok(())
}
