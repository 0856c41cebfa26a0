//! The whole two-stream experiment, end to end, in miniature: generate a
//! corpus, pretrain an object and a scene stream on their proxy tasks,
//! fine-tune both on the event classes, ten-crop score the held-out split,
//! fuse the two score files, and evaluate everything.
//!
//! This drives the same operator commands as the `oscnn` binary, from a
//! config written on the spot. The shipped `configs/replication.toml` is
//! the same experiment at full toy scale, with a second object depth.
//!
//! Run with: cargo run --release --example full_pipeline

use std::path::Path;

use oscnn::commands::{self, CliOverrides};
use oscnn::config::RunConfig;

const CONFIG: &str = r#"
[gen]
out_dir = "corpus"
seed = 17
image_size = 48
glyphs = 3
backgrounds = 2
dev_per_class = 8
val_per_class = 3
eval_per_class = 5
pretrain_per_combo = 8

[train]
batch_size = 8
base_lr = 1e-3
schedule = [[0, 1e-3], [80, 1e-4]]
stop_iteration = 120
hidden_lr_multiplier = 1e-2

[[stream]]
name = "object"
axis = "object"
flavor = "deep_toy"

[[stream]]
name = "scene"
axis = "scene"
flavor = "deep_toy"

[[pretrain]]
stream = "object"
manifest = "corpus/object_proxy.manifest"
model_out = "models/object.pretrain.oscn"
seed = 1

[[pretrain]]
stream = "scene"
manifest = "corpus/scene_proxy.manifest"
model_out = "models/scene.pretrain.oscn"
seed = 2

[[finetune]]
stream = "object"
model_in = "models/object.pretrain.oscn"
manifest = "corpus/dev.manifest"
model_out = "models/object.oscn"
seed = 3

[[finetune]]
stream = "scene"
model_in = "models/scene.pretrain.oscn"
manifest = "corpus/dev.manifest"
model_out = "models/scene.oscn"
seed = 4

[[score]]
model = "models/object.oscn"
manifest = "corpus/eval.manifest"
scores_out = "scores/object.scores"

[[score]]
model = "models/scene.oscn"
manifest = "corpus/eval.manifest"
scores_out = "scores/scene.scores"

[[fuse]]
inputs = ["scores/object.scores", "scores/scene.scores"]
streams = ["object/deep", "scene/deep"]
scores_out = "scores/fused.scores"

[[eval]]
scores = "scores/object.scores"
manifest = "corpus/eval.manifest"
report_out = "reports/object.txt"

[[eval]]
scores = "scores/scene.scores"
manifest = "corpus/eval.manifest"
report_out = "reports/scene.txt"

[[eval]]
scores = "scores/fused.scores"
manifest = "corpus/eval.manifest"
report_out = "reports/fused.txt"
"#;

fn main() -> oscnn::Result<()> {
    let root = Path::new("example-output/full_pipeline");
    if root.exists() {
        std::fs::remove_dir_all(root).map_err(|e| oscnn::Error::io(root, e))?;
    }
    std::fs::create_dir_all(root).map_err(|e| oscnn::Error::io(root, e))?;
    let config_path = root.join("run.toml");
    std::fs::write(&config_path, CONFIG).map_err(|e| oscnn::Error::io(&config_path, e))?;

    let config = RunConfig::load(&config_path)?;
    let cli = CliOverrides::default();
    for (name, step) in [
        ("gen-toy", commands::gen_toy as fn(&RunConfig, &CliOverrides) -> oscnn::Result<()>),
        ("pretrain", commands::pretrain),
        ("finetune", commands::finetune),
        ("score", commands::score),
        ("fuse", commands::fuse),
        ("eval", commands::eval),
    ] {
        println!("==> {name}");
        step(&config, &cli)?;
    }
    println!("==> done; artifacts under {}", root.display());
    Ok(())
}
