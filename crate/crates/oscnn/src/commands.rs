//! Operator commands: the work behind each CLI subcommand.
//!
//! Every command reads its slice of a [`RunConfig`] and executes all of the
//! matching entries in file order, printing one summary line per step.
//! Nothing on disk is ever overwritten unless `--force` is given; with
//! `--dry-run` a command prints what it would do (training commands print
//! the full planned learning-rate schedule) and writes nothing.

use std::io::Write as _;
use std::path::Path;

use crate::config::{FuseEntry, RunConfig};
use crate::dataset::{merge_splits, Manifest};
use crate::dataset::toy;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::fusion::{self, ScoreMatrix};
use crate::image::{filter_grid, write_ppm};
use crate::model_file::{check_stream, load_model, save_model};
use crate::net::{LayerKind, LrRole};
use crate::optim::TrainConfig;
use crate::stream::{self, TrainOutcome};

/// Command-line switches that cut across the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    /// Replaces the seed of every entry the command touches.
    pub seed: Option<u64>,
    /// Allow overwriting existing output files.
    pub force: bool,
    /// Fuse with the depth-ensemble weight policy derived from the entry's
    /// declared streams instead of configured or equal weights.
    pub depth_ensemble: bool,
    /// Fuse with exactly these weights.
    pub weights: Option<Vec<f32>>,
    /// Describe the work without touching the filesystem.
    pub dry_run: bool,
}

impl CliOverrides {
    fn seed_for(&self, entry_seed: u64) -> u64 {
        self.seed.unwrap_or(entry_seed)
    }
}

/// Refuse to clobber an existing output (unless forced), and make sure the
/// parent directory exists so the subsequent write can succeed.
fn guard_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite { path: path.to_path_buf() });
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// The planned per-iteration learning rates of a recipe, one
/// `iteration,head rate,hidden rate,-` line per step (the `-` stands in for
/// the loss a real run would record).
pub fn schedule_rows(train: &TrainConfig, hidden_multiplier: f64) -> Result<Vec<String>> {
    train.validate()?;
    let mut rows = Vec::with_capacity(train.stop_iteration);
    for i in 0..train.stop_iteration {
        let head = train.lr_at(i, LrRole::Head)?;
        rows.push(format!("{i},{head},{hidden},-", hidden = head * hidden_multiplier));
    }
    Ok(rows)
}

fn print_rows(rows: &[String]) {
    let mut text = rows.join("\n");
    text.push('\n');
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn write_loss_log(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut text = String::from("iteration,lr_head,lr_hidden,loss\n");
    for line in &outcome.log {
        text.push_str(line);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn final_loss(outcome: &TrainOutcome) -> &str {
    outcome
        .log
        .last()
        .and_then(|l| l.rsplit(',').next())
        .unwrap_or("-")
}

/// Generate the synthetic corpus described by `[gen]`. With `--force` an
/// existing corpus directory is deleted and regenerated from scratch.
pub fn gen_toy(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    let entry = config
        .gen
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no [gen] section".into()))?;
    let mut toy_config = entry.toy_config(&config.base_dir)?;
    toy_config.seed = cli.seed_for(toy_config.seed);
    if cli.dry_run {
        println!(
            "would generate corpus at {} (seed {}, {} glyphs x {} backgrounds, {}px, dev {}/val {}/eval {} per class, pretrain {} per pair)",
            toy_config.out_dir.display(),
            toy_config.seed,
            toy_config.glyphs,
            toy_config.backgrounds,
            toy_config.image_size,
            toy_config.dev_per_class,
            toy_config.val_per_class,
            toy_config.eval_per_class,
            toy_config.pretrain_per_combo,
        );
        return Ok(());
    }
    let exists = toy_config.out_dir.exists();
    let non_empty = exists
        && std::fs::read_dir(&toy_config.out_dir)
            .map_err(|e| Error::io(&toy_config.out_dir, e))?
            .next()
            .is_some();
    if non_empty {
        if !cli.force {
            return Err(Error::WouldOverwrite { path: toy_config.out_dir.clone() });
        }
        std::fs::remove_dir_all(&toy_config.out_dir).map_err(|e| Error::io(&toy_config.out_dir, e))?;
    }
    let corpus = toy::generate(&toy_config)?;
    println!("generated corpus at {}", corpus.root.display());
    for (name, path) in [
        ("dev", Some(&corpus.dev)),
        ("val", Some(&corpus.val)),
        ("eval", Some(&corpus.eval)),
        ("object proxy", corpus.object_proxy.as_ref()),
        ("scene proxy", corpus.scene_proxy.as_ref()),
    ] {
        if let Some(p) = path {
            println!("  {name} manifest: {}", p.display());
        }
    }
    println!("  digest: {}", corpus.digest);
    Ok(())
}

/// Run every `[[pretrain]]` entry: train a fresh network of the declared
/// flavor on its proxy manifest and save the model.
pub fn pretrain(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    for entry in &config.pretrain {
        let declared = config.find_stream(&entry.stream)?;
        let train = config.effective_train(&entry.train);
        if cli.dry_run {
            println!("# dry run: pretrain {} ({} iterations)", entry.stream, train.stop_iteration);
            // Pretraining trains every layer at the schedule rate.
            print_rows(&schedule_rows(&train, 1.0)?);
            continue;
        }
        let model_out = config.path(&entry.model_out);
        guard_output(&model_out, cli.force)?;
        if let Some(log) = &entry.loss_log {
            guard_output(&config.path(log), cli.force)?;
        }
        let manifest = Manifest::load(&config.path(&entry.manifest))?;
        let seed = cli.seed_for(entry.seed);
        let outcome =
            stream::pretrain_proxy(declared.axis()?, declared.flavor()?, &manifest, &train, seed)?;
        save_model(&outcome.model, &model_out)?;
        if let Some(log) = &entry.loss_log {
            write_loss_log(&config.path(log), &outcome)?;
        }
        println!(
            "pretrained {} on {} images ({} classes, seed {seed}), final loss {} -> {}",
            entry.stream,
            manifest.len(),
            manifest.class_names.len(),
            final_loss(&outcome),
            model_out.display(),
        );
    }
    Ok(())
}

/// Run every `[[finetune]]` entry: load the pretrained model, swap its head
/// for the event classes, and continue training on the event split(s).
pub fn finetune(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    for entry in &config.finetune {
        let declared = config.find_stream(&entry.stream)?;
        let train = config.effective_train(&entry.train);
        if cli.dry_run {
            println!("# dry run: finetune {} ({} iterations)", entry.stream, train.stop_iteration);
            print_rows(&schedule_rows(&train, train.hidden_lr_multiplier)?);
            continue;
        }
        let model_out = config.path(&entry.model_out);
        guard_output(&model_out, cli.force)?;
        if let Some(log) = &entry.loss_log {
            guard_output(&config.path(log), cli.force)?;
        }
        let pretrained = load_model(&config.path(&entry.model_in))?;
        check_stream(&pretrained, &declared.stream_id()?)?;
        let main = Manifest::load(&config.path(&entry.manifest))?;
        let manifest = if entry.merge.is_empty() {
            main
        } else {
            let extra: Vec<Manifest> = entry
                .merge
                .iter()
                .map(|p| Manifest::load(&config.path(p)))
                .collect::<Result<_>>()?;
            let mut parts = vec![&main];
            parts.extend(extra.iter());
            merge_splits(&parts)?
        };
        let seed = cli.seed_for(entry.seed);
        let outcome = stream::finetune(&pretrained, &manifest, &train, seed)?;
        save_model(&outcome.model, &model_out)?;
        if let Some(log) = &entry.loss_log {
            write_loss_log(&config.path(log), &outcome)?;
        }
        println!(
            "finetuned {} on {} images ({} classes, seed {seed}), final loss {} -> {}",
            entry.stream,
            manifest.len(),
            manifest.class_names.len(),
            final_loss(&outcome),
            model_out.display(),
        );
    }
    Ok(())
}

/// Run every `[[score]]` entry: ten-crop score a split with a saved model
/// and write the score file.
pub fn score(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    for entry in &config.score {
        let scores_out = config.path(&entry.scores_out);
        if cli.dry_run {
            println!(
                "would score {} with {} -> {}",
                config.path(&entry.manifest).display(),
                config.path(&entry.model).display(),
                scores_out.display(),
            );
            continue;
        }
        guard_output(&scores_out, cli.force)?;
        let model = load_model(&config.path(&entry.model))?;
        let manifest = Manifest::load(&config.path(&entry.manifest))?;
        let matrix = stream::score_dataset(&model, &manifest, entry.parallel)?;
        matrix.save(&scores_out)?;
        println!(
            "scored {} images with {} ({} classes) -> {}",
            matrix.num_items(),
            model.id,
            matrix.num_classes(),
            scores_out.display(),
        );
    }
    Ok(())
}

/// The weights a fuse entry resolves to, in precedence order: explicit
/// `--weights`, the `--depth-ensemble` policy over the entry's declared
/// streams, the entry's configured weights, equal weights.
fn fuse_weights(entry: &FuseEntry, cli: &CliOverrides) -> Result<Vec<f32>> {
    if let Some(w) = &cli.weights {
        if w.len() != entry.inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "--weights gives {} values for {} input files",
                w.len(),
                entry.inputs.len()
            )));
        }
        return Ok(w.clone());
    }
    if cli.depth_ensemble {
        let ids = entry.stream_ids()?.ok_or_else(|| {
            Error::InvalidConfig(
                "--depth-ensemble needs the fuse entry to declare its streams".into(),
            )
        })?;
        return fusion::depth_ensemble_weights(&ids);
    }
    if let Some(w) = &entry.weights {
        return Ok(w.clone());
    }
    Ok(fusion::equal_weights(entry.inputs.len()))
}

/// Run every `[[fuse]]` entry: weighted-sum the input score files into one.
pub fn fuse(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    for entry in &config.fuse {
        let weights = fuse_weights(entry, cli)?;
        let scores_out = config.path(&entry.scores_out);
        if cli.dry_run {
            println!(
                "would fuse {} files with weights {weights:?} -> {}",
                entry.inputs.len(),
                scores_out.display(),
            );
            continue;
        }
        guard_output(&scores_out, cli.force)?;
        let parts: Vec<ScoreMatrix> = entry
            .inputs
            .iter()
            .map(|p| ScoreMatrix::load(&config.path(p)))
            .collect::<Result<_>>()?;
        let refs: Vec<&ScoreMatrix> = parts.iter().collect();
        let fused = fusion::fuse(&refs, &weights)?;
        fused.save(&scores_out)?;
        println!(
            "fused {} files with weights {weights:?} -> {}",
            parts.len(),
            scores_out.display(),
        );
    }
    Ok(())
}

/// Run every `[[eval]]` entry: compare a score file against its labeled
/// manifest and write the report (text plus `.csv` sibling).
pub fn eval(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    for entry in &config.eval {
        let report_out = config.path(&entry.report_out);
        if cli.dry_run {
            println!(
                "would evaluate {} against {} -> {}",
                config.path(&entry.scores).display(),
                config.path(&entry.manifest).display(),
                report_out.display(),
            );
            continue;
        }
        guard_output(&report_out, cli.force)?;
        let mut csv = report_out.as_os_str().to_owned();
        csv.push(".csv");
        guard_output(Path::new(&csv), cli.force)?;
        let matrix = ScoreMatrix::load(&config.path(&entry.scores))?;
        let manifest = Manifest::load(&config.path(&entry.manifest))?;
        let labels = align_labels(&matrix, &manifest)?;
        let report = evaluate(&matrix.values, &labels, &matrix.class_names)?;
        report.save(&report_out)?;
        println!("evaluated {} -> {}", config.path(&entry.scores).display(), report_out.display());
        print!("{}", report.text());
    }
    Ok(())
}

/// Match score rows to manifest labels by item id. The score file and the
/// manifest must cover exactly the same items and classes.
fn align_labels(matrix: &ScoreMatrix, manifest: &Manifest) -> Result<Vec<usize>> {
    if matrix.class_names != manifest.class_names {
        return Err(Error::InvalidArgument(format!(
            "score file classes {:?} do not match manifest classes {:?}",
            matrix.class_names, manifest.class_names
        )));
    }
    if matrix.ids.len() != manifest.len() {
        return Err(Error::InvalidArgument(format!(
            "score file has {} rows but the manifest lists {} items",
            matrix.ids.len(),
            manifest.len()
        )));
    }
    let by_path: std::collections::HashMap<&str, usize> = manifest
        .entries
        .iter()
        .map(|(path, label)| (path.as_str(), *label))
        .collect();
    matrix
        .ids
        .iter()
        .map(|id| {
            by_path.get(id.as_str()).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("score row {id:?} is not in the manifest"))
            })
        })
        .collect()
}

/// Export the first convolution layer's filters of the `[viz]` model as a
/// tiled PPM image.
pub fn viz_filters(config: &RunConfig, cli: &CliOverrides) -> Result<()> {
    let entry = config
        .viz
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no [viz] section".into()))?;
    let image_out = config.path(&entry.image_out);
    if cli.dry_run {
        println!(
            "would export first-layer filters of {} -> {}",
            config.path(&entry.model).display(),
            image_out.display(),
        );
        return Ok(());
    }
    guard_output(&image_out, cli.force)?;
    let model = load_model(&config.path(&entry.model))?;
    let first_conv = model
        .spec
        .param_descs()?
        .into_iter()
        .find(|d| matches!(model.spec.layers[d.layer], LayerKind::Conv { .. }))
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "model {} has no plain convolution layer to visualize",
                model.id
            ))
        })?;
    let pairs = model.params.get(&first_conv.name).ok_or_else(|| {
        Error::InvalidArgument(format!("model has no parameters for layer {:?}", first_conv.name))
    })?;
    let grid = filter_grid(&pairs[0].weights)?;
    write_ppm(&grid, &image_out)?;
    println!(
        "exported {} filters of {} as a {}x{} image -> {}",
        pairs[0].weights.dims()[0],
        model.id,
        grid.height(),
        grid.width(),
        image_out.display(),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GenEntry;
    use std::path::PathBuf;

    fn temp_config(body: &str) -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, body).unwrap();
        let config = RunConfig::load(&path).unwrap();
        (dir, config)
    }

    fn tiny_gen(seed: u64) -> GenEntry {
        GenEntry {
            out_dir: PathBuf::from("corpus"),
            seed,
            image_size: 24,
            glyphs: 2,
            backgrounds: 2,
            dev_per_class: 2,
            val_per_class: Some(1),
            eval_per_class: Some(1),
            pretrain_per_combo: Some(1),
            mode: "full".into(),
        }
    }

    #[test]
    fn schedule_rows_follow_the_piecewise_recipe() {
        let train = TrainConfig {
            batch_size: 4,
            base_lr: 1e-2,
            schedule: vec![(0, 1e-2), (3, 1e-3)],
            stop_iteration: 5,
            hidden_lr_multiplier: 1e-2,
            ..TrainConfig::default()
        };
        let rows = schedule_rows(&train, train.hidden_lr_multiplier).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], "0,0.01,0.0001,-");
        assert_eq!(rows[2], "2,0.01,0.0001,-");
        let (head, hidden) = (1e-3f64, 1e-3f64 * 1e-2f64);
        assert_eq!(rows[3], format!("3,{head},{hidden},-"));
        // Full-rate variant used by pretraining.
        let full = schedule_rows(&train, 1.0).unwrap();
        assert_eq!(full[4], "4,0.001,0.001,-");
    }

    #[test]
    fn gen_toy_refuses_then_forces_overwrite() {
        let (_dir, mut config) = temp_config("");
        config.gen = Some(tiny_gen(5));
        let cli = CliOverrides::default();
        gen_toy(&config, &cli).unwrap();
        let root = config.path(Path::new("corpus"));
        let digest1 = std::fs::read_to_string(root.join("DIGEST")).unwrap();
        // Second run refuses to clobber the corpus.
        match gen_toy(&config, &cli) {
            Err(Error::WouldOverwrite { path }) => assert_eq!(path, root),
            other => panic!("expected WouldOverwrite, got {other:?}"),
        }
        // Forced regeneration with another seed really replaces it.
        config.gen.as_mut().unwrap().seed = 6;
        gen_toy(&config, &CliOverrides { force: true, ..CliOverrides::default() }).unwrap();
        let digest2 = std::fs::read_to_string(root.join("DIGEST")).unwrap();
        assert_ne!(digest1, digest2);
        // The CLI seed override beats the entry seed.
        gen_toy(
            &config,
            &CliOverrides { force: true, seed: Some(5), ..CliOverrides::default() },
        )
        .unwrap();
        let digest3 = std::fs::read_to_string(root.join("DIGEST")).unwrap();
        assert_eq!(digest1, digest3);
    }

    #[test]
    fn dry_run_touches_nothing() {
        let (_dir, mut config) = temp_config(
            r#"
[[stream]]
name = "s"
axis = "object"
flavor = "deep_toy"

[[pretrain]]
stream = "s"
manifest = "missing/proxy.manifest"
model_out = "models/s.oscn"
seed = 1

[pretrain.train]
batch_size = 2
base_lr = 1e-4
schedule = [[0, 1e-4]]
stop_iteration = 3

[[score]]
model = "missing/model.oscn"
manifest = "missing/eval.manifest"
scores_out = "scores/out.scores"

[[fuse]]
inputs = ["missing/a.scores", "missing/b.scores"]
scores_out = "scores/fused.scores"

[[eval]]
scores = "missing/fused.scores"
manifest = "missing/eval.manifest"
report_out = "reports/out.txt"

[viz]
model = "missing/model.oscn"
image_out = "filters.ppm"
"#,
        );
        config.gen = Some(tiny_gen(1));
        let cli = CliOverrides { dry_run: true, ..CliOverrides::default() };
        // None of the referenced inputs exist; dry runs must not care, and
        // must not create any outputs.
        gen_toy(&config, &cli).unwrap();
        pretrain(&config, &cli).unwrap();
        finetune(&config, &cli).unwrap();
        score(&config, &cli).unwrap();
        fuse(&config, &cli).unwrap();
        eval(&config, &cli).unwrap();
        viz_filters(&config, &cli).unwrap();
        assert!(!config.path(Path::new("corpus")).exists());
        assert!(!config.path(Path::new("models")).exists());
        assert!(!config.path(Path::new("scores")).exists());
        assert!(!config.path(Path::new("reports")).exists());
        assert!(!config.path(Path::new("filters.ppm")).exists());
    }

    #[test]
    fn fuse_weight_precedence() {
        let entry = FuseEntry {
            inputs: vec![PathBuf::from("a"), PathBuf::from("b")],
            streams: Some(vec!["object/deep".into(), "object/verydeep".into()]),
            weights: Some(vec![0.7, 0.3]),
            scores_out: PathBuf::from("out"),
        };
        let plain = CliOverrides::default();
        assert_eq!(fuse_weights(&entry, &plain).unwrap(), [0.7, 0.3]);
        let ensemble = CliOverrides { depth_ensemble: true, ..CliOverrides::default() };
        assert_eq!(fuse_weights(&entry, &ensemble).unwrap(), [0.3, 0.6]);
        let explicit = CliOverrides { weights: Some(vec![0.9, 0.1]), ..CliOverrides::default() };
        assert_eq!(fuse_weights(&entry, &explicit).unwrap(), [0.9, 0.1]);
        let wrong_len = CliOverrides { weights: Some(vec![1.0]), ..CliOverrides::default() };
        assert!(fuse_weights(&entry, &wrong_len).is_err());
        let mut bare = entry.clone();
        bare.weights = None;
        assert_eq!(fuse_weights(&bare, &plain).unwrap(), [0.5, 0.5]);
        bare.streams = None;
        assert!(fuse_weights(&bare, &ensemble).is_err());
    }

    #[test]
    fn align_labels_matches_ids_and_rejects_mismatches() {
        use crate::tensor::Tensor;
        let classes = vec!["a".to_string(), "b".to_string()];
        let matrix = ScoreMatrix::new(
            classes.clone(),
            vec!["x.ppm".into(), "y.ppm".into()],
            Tensor::from_vec(&[2, 2], vec![0.9, 0.1, 0.2, 0.8]).unwrap(),
        )
        .unwrap();
        let manifest = Manifest {
            root: PathBuf::from("."),
            split: crate::dataset::SplitTag::Eval,
            class_names: classes.clone(),
            entries: vec![("y.ppm".into(), 1), ("x.ppm".into(), 0)],
        };
        // Order differs between file and manifest; ids line them up.
        assert_eq!(align_labels(&matrix, &manifest).unwrap(), [0, 1]);
        let mut wrong_classes = manifest.clone();
        wrong_classes.class_names = vec!["a".into(), "c".into()];
        assert!(align_labels(&matrix, &wrong_classes).is_err());
        let mut missing = manifest.clone();
        missing.entries[1].0 = "z.ppm".into();
        assert!(align_labels(&matrix, &missing).is_err());
        let mut short = manifest;
        short.entries.pop();
        assert!(align_labels(&matrix, &short).is_err());
    }
}
