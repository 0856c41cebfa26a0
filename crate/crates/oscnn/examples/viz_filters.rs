//! Export the first convolution layer's filters as an image — the classic
//! sanity check that a network learned oriented, colorful structure.
//!
//! Each filter becomes one RGB tile (its three input channels are the
//! colors), min-max normalized on its own, laid out in a square grid with
//! one-pixel gutters.
//!
//! Run with: cargo run --release --example viz_filters

use std::path::Path;

use oscnn::dataset::toy::make_toy_dataset;
use oscnn::dataset::Manifest;
use oscnn::image::{filter_grid, write_ppm};
use oscnn::net::{LayerKind, PresetFlavor};
use oscnn::optim::TrainConfig;
use oscnn::stream::{pretrain_proxy, Axis};

fn main() -> oscnn::Result<()> {
    let root = Path::new("example-output/viz_filters");
    if root.exists() {
        std::fs::remove_dir_all(root).map_err(|e| oscnn::Error::io(root, e))?;
    }
    let corpus = make_toy_dataset(&root.join("corpus"), 3, 8, 6)?;
    let proxy = Manifest::load(corpus.object_proxy.as_ref().expect("full corpus"))?;
    let config = TrainConfig {
        batch_size: 8,
        base_lr: 1e-3,
        schedule: vec![(0, 1e-3)],
        stop_iteration: 100,
        hidden_lr_multiplier: 1e-2,
        ..TrainConfig::default()
    };
    let trained = pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &config, 21)?;
    let model = trained.model;

    // Find the first plain convolution and tile its weight tensor.
    let first_conv = model
        .spec
        .param_descs()?
        .into_iter()
        .find(|d| matches!(model.spec.layers[d.layer], LayerKind::Conv { .. }))
        .expect("presets start with a convolution");
    let weights = &model.params.get(&first_conv.name).expect("initialized")[0].weights;
    let dims = weights.dims().to_vec();
    let grid = filter_grid(weights)?;
    let out = root.join("filters.ppm");
    write_ppm(&grid, &out)?;
    println!(
        "tiled {} filters of shape {}x{}x{} into a {}x{} image",
        dims[0],
        dims[1],
        dims[2],
        dims[3],
        grid.height(),
        grid.width()
    );
    println!("wrote {}", out.display());
    println!("view it with any PPM-capable viewer, or convert to PNG");
    Ok(())
}
