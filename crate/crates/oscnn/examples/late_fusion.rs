//! Late score fusion: combining per-stream class scores by weighted sum.
//!
//! Each stream scores every image independently; fusion happens on those
//! scores, not on features. Equal weights combine complementary axes
//! (object + scene). Across network depths on one axis the deeper model
//! gets double weight — 0.3 and 0.6, kept exactly as-is even though they
//! do not sum to one, because ranking metrics ignore the overall scale.
//!
//! Run with: cargo run --example late_fusion

use oscnn::fusion::{
    depth_ensemble_weights, equal_weights, fuse, ScoreMatrix, DEPTH_WEIGHT_DEEP,
    DEPTH_WEIGHT_VERY_DEEP,
};
use oscnn::net::argmax;
use oscnn::stream::StreamId;
use oscnn::tensor::Tensor;

fn matrix(values: [[f32; 3]; 2]) -> oscnn::Result<ScoreMatrix> {
    ScoreMatrix::new(
        vec!["parade".into(), "picnic".into(), "regatta".into()],
        vec!["img-0".into(), "img-1".into()],
        Tensor::from_vec(&[2, 3], values.concat())?,
    )
}

fn main() -> oscnn::Result<()> {
    // The object stream is confident about the glyph-ish evidence and the
    // scene stream about the backdrop; on img-1 they disagree.
    let object = matrix([[0.70, 0.20, 0.10], [0.10, 0.60, 0.30]])?;
    let scene = matrix([[0.60, 0.30, 0.10], [0.05, 0.25, 0.70]])?;

    let equal = equal_weights(2);
    println!("axis fusion weights: {equal:?}");
    let fused = fuse(&[&object, &scene], &equal)?;
    for (i, id) in fused.ids.iter().enumerate() {
        let row = fused.row(i);
        println!(
            "  {id}: {row:?} -> {}",
            fused.class_names[argmax(row)]
        );
    }

    // Depth ensemble on one axis: deep 0.3, very deep 0.6, unnormalized.
    let deep = matrix([[0.50, 0.30, 0.20], [0.20, 0.50, 0.30]])?;
    let very_deep = matrix([[0.80, 0.15, 0.05], [0.10, 0.30, 0.60]])?;
    let weights = [DEPTH_WEIGHT_DEEP, DEPTH_WEIGHT_VERY_DEEP];
    let ensemble = fuse(&[&deep, &very_deep], &weights)?;
    println!("depth ensemble weights: {weights:?} (sum {})", weights.iter().sum::<f32>());
    for (i, id) in ensemble.ids.iter().enumerate() {
        println!("  {id}: {:?}", ensemble.row(i));
    }

    // The weight policy generalizes: axes split evenly, depths keep their
    // 0.3 / 0.6, same-depth variants share their depth's mass.
    for streams in [
        vec!["object/deep", "scene/deep"],
        vec!["object/deep", "object/verydeep", "scene/deep", "scene/verydeep"],
        vec![
            "object/deep",
            "object/verydeep",
            "object/verydeep/plain",
            "scene/deep",
            "scene/verydeep",
        ],
    ] {
        let ids: Vec<StreamId> =
            streams.iter().map(|s| StreamId::parse(s)).collect::<oscnn::Result<_>>()?;
        let w = depth_ensemble_weights(&ids)?;
        println!("{streams:?}\n  -> {w:?}");
    }
    Ok(())
}
