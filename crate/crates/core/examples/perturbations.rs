//! The three local perturbations at a 20% edit rate.
//!
//! cargo run --example perturbations

use textcycle::perturbation::{perturb, verify_edit_budget, Lexicon, PerturbMethod, PerturbSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "the quick brown fox jumps over the lazy dog near a quiet river bank";
    let lexicon = Lexicon::parse("quick\tfast,speedy\nlazy\tidle\nquiet\tsilent,still\nriver\tstream\n")?;
    let specs = [
        PerturbSpec::new(PerturbMethod::SynonymReplace, 0.2, Some(lexicon), 7)?,
        PerturbSpec::new(PerturbMethod::WordSwap, 0.2, None, 7)?,
        PerturbSpec::new(PerturbMethod::InsertDelete, 0.2, None, 7)?,
    ];
    println!("original      {text}");
    for spec in &specs {
        let out = perturb(text, spec)?;
        println!(
            "{:<13} {} ({} edits, budget ok: {})",
            spec.method().as_str(),
            out.text,
            out.edit_count,
            verify_edit_budget(text, &out.text, spec)
        );
        if let Some(w) = out.warning {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
