//! Precision/recall evaluation: per-class average precision and mAP.
//!
//! Each class is scored one-vs-rest: items are ranked by score (ties
//! broken by original index), precision and recall are read off at every
//! rank, and AP sums precision at each recall step. mAP averages the
//! defined per-class APs; a class with no positive items is reported as
//! undefined and skipped.
//!
//! Run with: cargo run --example evaluate_map

use oscnn::eval::{average_precision, evaluate, pr_curve, reference_average_precision};
use oscnn::tensor::Tensor;

fn main() -> oscnn::Result<()> {
    // The worked example: four items, ranked 0.9(+) 0.8(-) 0.7(+) 0.6(+).
    let scores = [0.9f32, 0.8, 0.7, 0.6];
    let labels = [true, false, true, true];
    let curve = pr_curve(&scores, &labels, "demo")?;
    println!("rank  score  label  precision  recall");
    for (k, &item) in curve.ranking.iter().enumerate() {
        println!(
            "  {k}   {:.2}   {:>5}    {:.4}    {:.4}",
            scores[item], labels[item], curve.precision[k], curve.recall[k]
        );
    }
    let ap = average_precision(&scores, &labels, "demo")?;
    println!("AP = (1 + 2/3 + 3/4) / 3 = {ap:.6}");

    // The independent O(n^2) counting definition agrees to float noise.
    let slow = reference_average_precision(&scores, &labels, "demo")?;
    assert!((ap - slow).abs() < 1e-12);
    println!("direct counting definition agrees: {slow:.6}");

    // A small multi-class report. Rows are items, columns class scores;
    // the second class has no positives and comes out undefined.
    let class_names: Vec<String> =
        ["arrival", "ghost", "departure"].map(String::from).to_vec();
    let matrix = Tensor::from_vec(
        &[4, 3],
        vec![
            0.8, 0.1, 0.1, //
            0.3, 0.5, 0.2, //
            0.2, 0.1, 0.7, //
            0.6, 0.2, 0.2,
        ],
    )?;
    let labels = [0usize, 2, 2, 0];
    // The library also logs a warning for the empty class, for operators
    // running with a logger installed.
    let report = evaluate(&matrix, &labels, &class_names)?;
    print!("{}", report.text());
    Ok(())
}
