//! Pretrain an object stream on its proxy task, then fine-tune it on the
//! event classes — the two-stage recipe both streams go through.
//!
//! Pretraining trains a fresh network on glyph identity. Fine-tuning swaps
//! the classifier head for one sized to the event classes and continues on
//! the event split, with hidden layers moving at a small fraction of the
//! head's learning rate so the pretrained features are refined, not
//! destroyed.
//!
//! Run with: cargo run --release --example train_stream

use std::path::Path;

use oscnn::dataset::toy::make_toy_dataset;
use oscnn::dataset::Manifest;
use oscnn::model_file::{load_model, save_model};
use oscnn::net::PresetFlavor;
use oscnn::optim::TrainConfig;
use oscnn::stream::{finetune, pretrain_proxy, Axis};

fn main() -> oscnn::Result<()> {
    let root = Path::new("example-output/train_stream");
    if root.exists() {
        std::fs::remove_dir_all(root).map_err(|e| oscnn::Error::io(root, e))?;
    }
    let corpus = make_toy_dataset(&root.join("corpus"), 9, 8, 6)?;
    let proxy = Manifest::load(corpus.object_proxy.as_ref().expect("full corpus"))?;
    let dev = Manifest::load(&corpus.dev)?;

    // A short toy recipe: decade learning-rate drop partway through, then
    // a hard stop. The full-scale defaults follow the same shape, just ten
    // times longer and one decade hotter.
    let config = TrainConfig {
        batch_size: 8,
        base_lr: 1e-3,
        schedule: vec![(0, 1e-3), (80, 1e-4)],
        stop_iteration: 120,
        hidden_lr_multiplier: 1e-2,
        ..TrainConfig::default()
    };

    println!(
        "pretraining object/deep on {} pool images, {} proxy classes",
        proxy.len(),
        proxy.class_names.len()
    );
    let pre = pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &config, 7)?;
    for line in pre.log.iter().step_by(20) {
        println!("  {line}");
    }
    println!("  {}", pre.log.last().unwrap());

    println!("fine-tuning on {} event images, {} classes", dev.len(), dev.class_names.len());
    let tuned = finetune(&pre.model, &dev, &config, 8)?;
    for line in tuned.log.iter().step_by(20) {
        println!("  {line}");
    }
    println!("  {}", tuned.log.last().unwrap());

    // Save, reload, and confirm the round trip is the identical model.
    let path = root.join("object_deep.oscn");
    save_model(&tuned.model, &path)?;
    let back = load_model(&path)?;
    assert_eq!(back.class_names, dev.class_names);
    assert_eq!(back.id.to_string(), "object/deep");
    println!("saved and reloaded {}", path.display());
    Ok(())
}
