//! Pairwise normalized edit distances over a short chain, plus tau_2.
//!
//! cargo run --example edit_distance_matrix

use textcycle::chain::Language;
use textcycle::metrics::{normalized_edit_distance, normalized_edit_distance_in, DifferenceMatrix, Granularity};

fn main() {
    let texts = [
        "The committee approved the new budget.",
        "The panel signed off on the spending plan.",
        "The committee approved the new budget.",
        "The panel signed off on the revised spending plan.",
        "The committee approved the new budget.",
    ];
    let m = DifferenceMatrix::from_texts(&texts, Granularity::Char, Language::En);
    print!("{}", m.to_csv());

    let lag2: Vec<f64> = (3..texts.len()).map(|i| m.get(i, i - 2)).collect();
    println!("tau_2 = {:.4}", 1.0 - lag2.iter().sum::<f64>() / lag2.len() as f64);

    println!(
        "word-level d(T_1, T_3) = {:.4}",
        normalized_edit_distance(texts[1], texts[3], Granularity::Word)
    );
    // Chinese counts characters even at word granularity
    println!(
        "zh d = {:.4}",
        normalized_edit_distance_in("今天天气很好", "今天天气不错", Granularity::Word, Language::Zh)
    );
}
