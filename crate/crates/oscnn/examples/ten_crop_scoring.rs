//! The ten-crop test-time view set, and how scoring averages over it.
//!
//! At test time an image is resized to the canonical square and cut into
//! ten views: the four corner crops, the center crop, and the horizontal
//! mirror of each. The network scores all ten and the per-class softmax
//! probabilities are averaged, which buys a little translation and
//! reflection robustness for free.
//!
//! Run with: cargo run --release --example ten_crop_scoring

use std::path::Path;

use oscnn::dataset::toy::make_toy_dataset;
use oscnn::dataset::Manifest;
use oscnn::image::{horizontal_flip, read_ppm, resize_bilinear, ten_crop, Image};
use oscnn::net::PresetFlavor;
use oscnn::optim::TrainConfig;
use oscnn::stream::{pretrain_proxy, score_image, Axis};

fn main() -> oscnn::Result<()> {
    // The classic geometry: 256px canonical square, 224px crops.
    let canonical = Image::filled(256, 256, [127.0, 0.0, 0.0]);
    let views = ten_crop(&canonical, 224)?;
    println!("ten-crop offsets on a 256px square with 224px crops:");
    for (i, info) in views.info.iter().enumerate() {
        println!(
            "  view {i}: top {:>2}, left {:>2}{}",
            info.top,
            info.left,
            if info.flipped { ", mirrored" } else { "" }
        );
    }

    // Now in anger: train a small object stream briefly and score one
    // held-out image.
    let root = Path::new("example-output/ten_crop_scoring");
    if root.exists() {
        std::fs::remove_dir_all(root).map_err(|e| oscnn::Error::io(root, e))?;
    }
    let corpus = make_toy_dataset(&root.join("corpus"), 11, 8, 6)?;
    let proxy = Manifest::load(corpus.object_proxy.as_ref().expect("full corpus"))?;
    let config = TrainConfig {
        batch_size: 8,
        base_lr: 1e-3,
        schedule: vec![(0, 1e-3)],
        stop_iteration: 80,
        hidden_lr_multiplier: 1e-2,
        ..TrainConfig::default()
    };
    let trained = pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &config, 5)?;
    let model = trained.model;

    let eval = Manifest::load(&corpus.eval)?;
    let img = read_ppm(&eval.image_path(0))?;
    let probs = score_image(&model, &img)?;
    println!("probabilities for {:?}:", eval.entries[0].0);
    for (name, p) in model.class_names.iter().zip(&probs) {
        println!("  {name:<16} {p:.4}");
    }
    let sum: f32 = probs.iter().sum();
    println!("probabilities sum to {sum:.6} (softmax averaged over 10 views)");

    // Because the view set contains each crop and its mirror, scoring a
    // mirrored image visits the same views and lands on (numerically)
    // the same average.
    let mirrored = score_image(&model, &horizontal_flip(&img))?;
    let worst = probs
        .iter()
        .zip(&mirrored)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("mirror-scoring difference: {worst:.2e}");

    // The resize half: any input lands on the model's canonical square.
    let tall = resize_bilinear(&img, 96, 40)?;
    let scored_anyway = score_image(&model, &tall)?;
    println!(
        "a distorted {}x{} copy still scores (top class {}), via resize to {}px",
        tall.height(),
        tall.width(),
        model.class_names[oscnn::net::argmax(&scored_anyway)],
        model.resize_to
    );
    Ok(())
}
