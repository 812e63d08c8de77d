//! Loads the bundled fixture, validates it, and writes it back unchanged.
//!
//! cargo run --example jsonl_roundtrip

use std::path::Path;

use textcycle::chain::{load_chains, to_jsonl, validate_chain, ChainStream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/chains.jsonl");
    for chain in ChainStream::open(&path)? {
        let chain = chain?;
        println!("{} / {}: {} rounds, {} violations", chain.run_id, chain.chain_id, chain.rounds(), validate_chain(&chain).len());
    }
    let chains = load_chains(&path)?;
    let again = to_jsonl(&chains)?;
    println!("byte-identical after round trip: {}", again == std::fs::read_to_string(&path)?);
    Ok(())
}
