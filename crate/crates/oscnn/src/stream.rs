//! Streams: one trained network per label axis.
//!
//! A *stream* is a network that looks at the same images as every other
//! stream but answers a different question — the object stream "what is
//! shown", the scene stream "where does it happen". Each stream is
//! proxy-pretrained on its own axis labels, fine-tuned on the event classes
//! with a replaced head, and scored at test time by averaging softmax
//! probabilities over the ten-crop view set. Every random choice derives
//! from the caller's seed through [`crate::sub_seed`], so training and
//! scoring are bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

use crate::dataset::{channel_means, BatchIterator, Manifest};
use crate::error::{Error, Result};
use crate::fusion::ScoreMatrix;
use crate::image::{self, normalize, random_crop_flip, resize_bilinear, ten_crop, Image};
use crate::net::{
    backward, build_preset, forward, replace_head, softmax_cross_entropy, softmax_rows,
    DropoutMode, LrRole, NetworkSpec, ParamSet, PresetFlavor,
};
use crate::optim::{sgd_step, OptimizerState, TrainConfig};
use crate::sub_seed;
use crate::tensor::Tensor;

/// Which label axis a stream models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Object,
    Scene,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Object => "object",
            Axis::Scene => "scene",
        }
    }

    pub fn parse(s: &str) -> Result<Axis> {
        match s {
            "object" => Ok(Axis::Object),
            "scene" => Ok(Axis::Scene),
            other => Err(Error::InvalidArgument(format!(
                "unknown axis {other:?}; expected \"object\" or \"scene\""
            ))),
        }
    }

    /// Class-name prefix that marks a proxy manifest as belonging to this
    /// axis (e.g. `object:triangle`).
    pub fn proxy_prefix(self) -> &'static str {
        match self {
            Axis::Object => "object:",
            Axis::Scene => "scene:",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How deep the stream's network is; the depth pair is what the standard
/// (0.3, 0.6) ensemble weights refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Deep,
    VeryDeep,
}

impl Depth {
    pub fn name(self) -> &'static str {
        match self {
            Depth::Deep => "deep",
            Depth::VeryDeep => "verydeep",
        }
    }

    pub fn parse(s: &str) -> Result<Depth> {
        match s {
            "deep" => Ok(Depth::Deep),
            "verydeep" => Ok(Depth::VeryDeep),
            other => Err(Error::InvalidArgument(format!(
                "unknown depth {other:?}; expected \"deep\" or \"verydeep\""
            ))),
        }
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identity of a trained stream: axis, depth, and an optional architecture
/// variant tag distinguishing same-depth alternatives (e.g. `plain`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamId {
    pub axis: Axis,
    pub depth: Depth,
    pub variant: Option<String>,
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            Some(v) => write!(f, "{}/{}/{}", self.axis, self.depth, v),
            None => write!(f, "{}/{}", self.axis, self.depth),
        }
    }
}

impl StreamId {
    /// Parse the `axis/depth[/variant]` form produced by `Display`.
    pub fn parse(s: &str) -> Result<StreamId> {
        let parts: Vec<&str> = s.split('/').collect();
        let (axis, depth, variant) = match parts.as_slice() {
            [a, d] => (a, d, None),
            [a, d, v] if !v.is_empty() => (a, d, Some(v.to_string())),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "bad stream id {s:?}; expected axis/depth[/variant]"
                )))
            }
        };
        Ok(StreamId {
            axis: Axis::parse(axis)?,
            depth: Depth::parse(depth)?,
            variant,
        })
    }
}

/// The stream identity a preset architecture trains into.
pub fn preset_stream_id(axis: Axis, flavor: PresetFlavor) -> StreamId {
    let (depth, variant) = match flavor {
        PresetFlavor::DeepToy => (Depth::Deep, None),
        PresetFlavor::VeryDeepToy => (Depth::VeryDeep, None),
        PresetFlavor::VeryDeepPlainToy => (Depth::VeryDeep, Some("plain".to_string())),
    };
    StreamId { axis, depth, variant }
}

/// A trained stream, complete with everything scoring needs: the network,
/// its parameters, the normalization statistics of its training data, and
/// the test-time geometry.
#[derive(Debug, Clone)]
pub struct StreamModel {
    pub id: StreamId,
    pub spec: NetworkSpec,
    pub params: ParamSet,
    /// Per-channel means of the resized training images, subtracted from
    /// every input.
    pub channel_means: [f32; 3],
    /// Side of the square network input, cut from the resized image.
    pub crop_size: usize,
    /// Side of the canonical square every image is resized to first.
    pub resize_to: usize,
    pub class_names: Vec<String>,
}

impl StreamModel {
    /// Check internal consistency: parameters fit the spec, the head width
    /// matches the class list, and the crop geometry matches the input.
    pub fn validate(&self) -> Result<()> {
        self.params.conforms_to(&self.spec)?;
        if self.spec.num_classes() != self.class_names.len() {
            return Err(Error::InvalidArgument(format!(
                "network has {} outputs but the model lists {} classes",
                self.spec.num_classes(),
                self.class_names.len()
            )));
        }
        if self.spec.input != [3, self.crop_size, self.crop_size] {
            return Err(Error::InvalidArgument(format!(
                "crop size {} does not match network input {:?}",
                self.crop_size, self.spec.input
            )));
        }
        if self.crop_size > self.resize_to {
            return Err(Error::InvalidArgument(format!(
                "crop size {} exceeds resize target {}",
                self.crop_size, self.resize_to
            )));
        }
        if self.channel_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("non-finite channel means".into()));
        }
        Ok(())
    }
}

/// A finished training run: the model plus its per-iteration loss log, one
/// `iteration,head rate,hidden rate,loss` line per step.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StreamModel,
    pub log: Vec<String>,
}

fn rng_for(seed: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stage))
}

/// The shared minibatch-SGD loop. Images are loaded once and resized to the
/// canonical square up front; each iteration draws a batch, augments it with
/// a random crop and flip, normalizes, and takes one optimizer step.
fn train_network(
    id: StreamId,
    spec: NetworkSpec,
    mut params: ParamSet,
    crop_size: usize,
    resize_to: usize,
    manifest: &Manifest,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    params.conforms_to(&spec)?;
    if spec.num_classes() != manifest.class_names.len() {
        return Err(Error::InvalidArgument(format!(
            "network has {} outputs but the split has {} classes",
            spec.num_classes(),
            manifest.class_names.len()
        )));
    }
    if manifest.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty split".into()));
    }

    let images = manifest.load_images()?;
    let resized: Vec<Image> = images
        .iter()
        .map(|img| resize_bilinear(img, resize_to, resize_to))
        .collect::<Result<_>>()?;
    let means = channel_means(&resized)?;
    let labels: Vec<usize> = manifest.entries.iter().map(|e| e.1).collect();
    let roles: Vec<LrRole> = spec.param_descs()?.iter().map(|d| d.role).collect();

    let mut augment = rng_for(seed, "augment");
    let mut dropout = rng_for(seed, "dropout");
    let mut batches = BatchIterator::new(resized.len(), config.batch_size, rng_for(seed, "shuffle"))?;
    let mut state = OptimizerState::new(&params);
    let mut log = Vec::with_capacity(config.stop_iteration);
    let view_len = 3 * crop_size * crop_size;

    while state.iteration < config.stop_iteration {
        let iteration = state.iteration;
        let lr_head = config.lr_at(iteration, LrRole::Head)?;
        let lr_hidden = config.lr_at(iteration, LrRole::Hidden)?;

        let picks = batches.next_batch();
        let mut batch = Tensor::zeros(&[picks.len(), 3, crop_size, crop_size]);
        let mut batch_labels = Vec::with_capacity(picks.len());
        for (slot, &i) in picks.iter().enumerate() {
            let view = random_crop_flip(&resized[i], crop_size, &mut augment)?;
            let normalized = normalize(&view, means);
            batch.data_mut()[slot * view_len..][..view_len].copy_from_slice(normalized.data());
            batch_labels.push(labels[i]);
        }

        let (logits, trace) = forward(&spec, &params, &batch, DropoutMode::Train(&mut dropout))?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, &batch_labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, what: "training loss".into() });
        }
        let grads = backward(&spec, &params, &trace, &grad_logits)?;
        sgd_step(&mut params, &grads, &mut state, config, &roles)?;
        log.push(format!("{iteration},{lr_head},{lr_hidden},{loss}"));
    }

    let model = StreamModel {
        id,
        spec,
        params,
        channel_means: means,
        crop_size,
        resize_to,
        class_names: manifest.class_names.clone(),
    };
    model.validate()?;
    Ok(TrainOutcome { model, log })
}

/// Pretrain a fresh preset network on a proxy split of `axis` — the
/// manifest's class names must all carry the axis prefix (`object:` /
/// `scene:`), which catches feeding a scene proxy to an object stream.
/// Every layer trains at the full schedule rate (the hidden-layer
/// multiplier only applies once a replaced head is being fine-tuned), so
/// any configured multiplier is ignored here.
pub fn pretrain_proxy(
    axis: Axis,
    flavor: PresetFlavor,
    manifest: &Manifest,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let prefix = axis.proxy_prefix();
    if let Some(bad) = manifest.class_names.iter().find(|n| !n.starts_with(prefix)) {
        return Err(Error::InvalidArgument(format!(
            "proxy class {bad:?} does not carry the {:?} axis prefix {prefix:?}",
            axis.name()
        )));
    }
    let mut config = config.clone();
    config.hidden_lr_multiplier = 1.0;
    let mut init = rng_for(seed, "init");
    let (spec, params) = build_preset(flavor, manifest.class_names.len(), &mut init)?;
    train_network(
        preset_stream_id(axis, flavor),
        spec,
        params,
        flavor.crop_size(),
        flavor.resize_to(),
        manifest,
        &config,
        seed,
    )
}

/// Train a fresh preset network directly on a labeled split, with no
/// pretraining stage. All layers train at the full schedule rate. This is
/// the from-scratch baseline that pretraining is compared against.
pub fn train_scratch(
    axis: Axis,
    flavor: PresetFlavor,
    manifest: &Manifest,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut config = config.clone();
    config.hidden_lr_multiplier = 1.0;
    let mut init = rng_for(seed, "init");
    let (spec, params) = build_preset(flavor, manifest.class_names.len(), &mut init)?;
    train_network(
        preset_stream_id(axis, flavor),
        spec,
        params,
        flavor.crop_size(),
        flavor.resize_to(),
        manifest,
        &config,
        seed,
    )
}

/// Fine-tune a pretrained stream on an event split: the classifier head is
/// replaced to match the split's classes, the trunk carries over, hidden
/// layers move at the configured fraction of the schedule rate, and the
/// normalization means are recomputed on the new split.
pub fn finetune(
    pretrained: &StreamModel,
    manifest: &Manifest,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    pretrained.validate()?;
    let mut head_rng = rng_for(seed, "head");
    let (spec, params) = replace_head(
        &pretrained.spec,
        &pretrained.params,
        manifest.class_names.len(),
        &mut head_rng,
    )?;
    train_network(
        pretrained.id.clone(),
        spec,
        params,
        pretrained.crop_size,
        pretrained.resize_to,
        manifest,
        config,
        seed,
    )
}

/// Score one image: resize to the canonical square, cut the ten-crop view
/// set, run every view through the network, and average the ten softmax
/// probability vectors. Returns one probability per class.
pub fn score_image(model: &StreamModel, img: &Image) -> Result<Vec<f32>> {
    let canonical = resize_bilinear(img, model.resize_to, model.resize_to)?;
    let views = ten_crop(&canonical, model.crop_size)?;
    let c = model.crop_size;
    let view_len = 3 * c * c;
    let mut batch = Tensor::zeros(&[views.views.len(), 3, c, c]);
    for (slot, view) in views.views.iter().enumerate() {
        let normalized = normalize(view, model.channel_means);
        batch.data_mut()[slot * view_len..][..view_len].copy_from_slice(normalized.data());
    }
    let (logits, _) = forward(&model.spec, &model.params, &batch, DropoutMode::Eval)?;
    let probs = softmax_rows(&logits);
    let classes = model.class_names.len();
    let mut mean = vec![0.0f32; classes];
    for row in probs.data().chunks_exact(classes) {
        for (m, &p) in mean.iter_mut().zip(row) {
            *m += p;
        }
    }
    let inv = 1.0 / views.views.len() as f32;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Score every image of a split, in manifest order. With `parallel` the
/// images are scored across threads; each image's arithmetic is untouched,
/// so the result is bit-identical to the sequential path.
pub fn score_dataset(model: &StreamModel, manifest: &Manifest, parallel: bool) -> Result<ScoreMatrix> {
    model.validate()?;
    if manifest.class_names != model.class_names {
        return Err(Error::InvalidArgument(format!(
            "split classes {:?} do not match model classes {:?}",
            manifest.class_names, model.class_names
        )));
    }
    let score_one = |rel: &str| -> Result<Vec<f32>> {
        let img = image::read_ppm(&manifest.root.join(rel))?;
        score_image(model, &img)
    };
    let rows: Vec<Vec<f32>> = if parallel {
        manifest
            .entries
            .par_iter()
            .map(|(rel, _)| score_one(rel))
            .collect::<Result<_>>()?
    } else {
        manifest.entries.iter().map(|(rel, _)| score_one(rel)).collect::<Result<_>>()?
    };
    let n = rows.len();
    let c = model.class_names.len();
    ScoreMatrix::new(
        model.class_names.clone(),
        manifest.entries.iter().map(|e| e.0.clone()).collect(),
        Tensor::from_vec(&[n, c], rows.concat())?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy::{self, ToyConfig, ToyMode};
    use crate::image::horizontal_flip;
    use tempfile::TempDir;

    fn micro_corpus(seed: u64) -> (TempDir, toy::ToyCorpus) {
        let dir = tempfile::tempdir().unwrap();
        let corpus = toy::generate(&ToyConfig {
            out_dir: dir.path().to_path_buf(),
            seed,
            image_size: 24,
            glyphs: 2,
            backgrounds: 2,
            dev_per_class: 3,
            val_per_class: 1,
            eval_per_class: 2,
            pretrain_per_combo: 3,
            mode: ToyMode::Full,
        })
        .unwrap();
        (dir, corpus)
    }

    fn micro_config() -> TrainConfig {
        // The full-scale default rate (1e-2) is far too hot for He-init
        // networks fed raw-pixel-scale inputs; toy runs train around 1e-4.
        TrainConfig {
            momentum: 0.9,
            batch_size: 4,
            base_lr: 1e-4,
            hidden_lr_multiplier: 1e-2,
            schedule: vec![(0, 1e-4), (4, 1e-5)],
            stop_iteration: 6,
            weight_decay: 0.0,
        }
    }

    #[test]
    fn stream_id_display_and_parse_roundtrip() {
        let plain = preset_stream_id(Axis::Object, PresetFlavor::DeepToy);
        assert_eq!(plain.to_string(), "object/deep");
        assert_eq!(StreamId::parse("object/deep").unwrap(), plain);
        let variant = preset_stream_id(Axis::Scene, PresetFlavor::VeryDeepPlainToy);
        assert_eq!(variant.to_string(), "scene/verydeep/plain");
        assert_eq!(StreamId::parse("scene/verydeep/plain").unwrap(), variant);
        assert!(StreamId::parse("object").is_err());
        assert!(StreamId::parse("object/shallow").is_err());
        assert!(StreamId::parse("indoor/deep").is_err());
    }

    #[test]
    fn pretrain_rejects_a_proxy_from_the_wrong_axis() {
        let (_dir, corpus) = micro_corpus(40);
        let scene_proxy = Manifest::load(corpus.scene_proxy.as_ref().unwrap()).unwrap();
        let err = pretrain_proxy(
            Axis::Object,
            PresetFlavor::DeepToy,
            &scene_proxy,
            &micro_config(),
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("axis prefix"), "{err}");
        // The event split has no prefixes at all, so it is rejected too.
        let dev = Manifest::load(&corpus.dev).unwrap();
        assert!(pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &dev, &micro_config(), 1).is_err());
    }

    #[test]
    fn training_and_scoring_are_bit_deterministic() {
        let (_dir, corpus) = micro_corpus(41);
        let proxy = Manifest::load(corpus.object_proxy.as_ref().unwrap()).unwrap();
        let run = || {
            pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &micro_config(), 7).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params.max_abs_diff(&b.model.params), 0.0);
        assert_eq!(a.model.channel_means, b.model.channel_means);
        // Scoring: sequential twice, and parallel against sequential.
        let sequential = score_dataset(&a.model, &proxy, false).unwrap();
        let again = score_dataset(&a.model, &proxy, false).unwrap();
        let parallel = score_dataset(&b.model, &proxy, true).unwrap();
        assert_eq!(sequential, again);
        assert_eq!(sequential, parallel);
        // A different seed moves the parameters.
        let c =
            pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &micro_config(), 8).unwrap();
        assert!(c.model.params.max_abs_diff(&a.model.params) > 0.0);
    }

    #[test]
    fn loss_log_lines_carry_the_scheduled_rates() {
        let (_dir, corpus) = micro_corpus(42);
        let proxy = Manifest::load(corpus.object_proxy.as_ref().unwrap()).unwrap();
        let out =
            pretrain_proxy(Axis::Scene, PresetFlavor::DeepToy, &proxy, &micro_config(), 3);
        // Wrong axis for this proxy: rejected.
        assert!(out.is_err());
        let scene_proxy = Manifest::load(corpus.scene_proxy.as_ref().unwrap()).unwrap();
        let out =
            pretrain_proxy(Axis::Scene, PresetFlavor::DeepToy, &scene_proxy, &micro_config(), 3)
                .unwrap();
        assert_eq!(out.log.len(), 6);
        // Pretraining trains every layer at the full rate: head == hidden.
        assert!(out.log[0].starts_with("0,0.0001,0.0001,"));
        assert!(out.log[3].starts_with("3,0.0001,0.0001,"));
        assert!(out.log[4].starts_with("4,0.00001,0.00001,"));
        assert!(out.log[5].starts_with("5,0.00001,0.00001,"));
        // Every line ends in a parseable finite loss.
        for line in &out.log {
            let loss: f32 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(loss.is_finite());
        }
    }

    #[test]
    fn finetune_swaps_the_head_and_multiplier_zero_freezes_the_trunk() {
        let (_dir, corpus) = micro_corpus(43);
        let proxy = Manifest::load(corpus.object_proxy.as_ref().unwrap()).unwrap();
        let dev = Manifest::load(&corpus.dev).unwrap();
        let pre =
            pretrain_proxy(Axis::Object, PresetFlavor::DeepToy, &proxy, &micro_config(), 5).unwrap();
        let mut frozen_cfg = micro_config();
        frozen_cfg.hidden_lr_multiplier = 0.0;
        let tuned = finetune(&pre.model, &dev, &frozen_cfg, 6).unwrap();
        assert_eq!(tuned.model.id, pre.model.id);
        assert_eq!(tuned.model.class_names, dev.class_names);
        assert_eq!(tuned.model.spec.num_classes(), 4);
        // Hidden rate zero: every trunk entry is bitwise untouched.
        let entries = tuned.model.params.entries();
        let pre_entries = pre.model.params.entries();
        assert_eq!(entries.len(), pre_entries.len());
        for ((name, pairs), (pre_name, pre_pairs)) in
            entries[..entries.len() - 1].iter().zip(pre_entries)
        {
            assert_eq!(name, pre_name);
            for (pair, pre_pair) in pairs.iter().zip(pre_pairs) {
                assert_eq!(pair.weights.max_abs_diff(&pre_pair.weights), 0.0);
                assert_eq!(pair.bias.max_abs_diff(&pre_pair.bias), 0.0);
            }
        }
        // The head was both replaced (new width) and trained (bias moved).
        let head = &entries.last().unwrap().1[0];
        assert_eq!(head.weights.dims()[1], 4);
        assert!(head.bias.data().iter().any(|&b| b != 0.0));
        // Log reports hidden rate 0 while the head keeps the schedule.
        assert!(tuned.log[0].starts_with("0,0.0001,0,"));
        // The multiplier default (non-zero) does move the trunk.
        let moved = finetune(&pre.model, &dev, &micro_config(), 6).unwrap();
        let first = &moved.model.params.entries()[0].1[0];
        let pre_first = &pre.model.params.entries()[0].1[0];
        assert!(first.weights.max_abs_diff(&pre_first.weights) > 0.0);
    }

    #[test]
    fn scores_are_probability_rows() {
        let (_dir, corpus) = micro_corpus(44);
        let dev = Manifest::load(&corpus.dev).unwrap();
        let out = train_scratch(Axis::Object, PresetFlavor::DeepToy, &dev, &micro_config(), 2)
            .unwrap();
        let eval = Manifest::load(&corpus.eval).unwrap();
        let scores = score_dataset(&out.model, &eval, false).unwrap();
        assert_eq!(scores.ids.len(), eval.len());
        for i in 0..scores.num_items() {
            let row = scores.row(i);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-5, "row {i} sums to {sum}");
        }
        // Scoring a split with different classes is rejected.
        let proxy = Manifest::load(corpus.object_proxy.as_ref().unwrap()).unwrap();
        assert!(score_dataset(&out.model, &proxy, false).is_err());
    }

    #[test]
    fn zero_parameters_score_uniformly() {
        let (_dir, corpus) = micro_corpus(45);
        let dev = Manifest::load(&corpus.dev).unwrap();
        let mut out = train_scratch(Axis::Object, PresetFlavor::DeepToy, &dev, &micro_config(), 9)
            .unwrap();
        for t in out.model.params.tensors_mut() {
            *t = Tensor::zeros(t.dims());
        }
        let img = image::read_ppm(&dev.image_path(0)).unwrap();
        let probs = score_image(&out.model, &img).unwrap();
        // All-zero logits -> exactly uniform softmax, and the mean of ten
        // identical 1/4 rows is 1/4 on the nose.
        assert_eq!(probs, vec![0.25; 4]);
    }

    #[test]
    fn scoring_is_flip_invariant() {
        // The ten-crop views of a mirrored image are a permutation of the
        // flips of the original views, so the averaged score is unchanged
        // up to summation order.
        let (_dir, corpus) = micro_corpus(46);
        let dev = Manifest::load(&corpus.dev).unwrap();
        let out = train_scratch(Axis::Object, PresetFlavor::DeepToy, &dev, &micro_config(), 11)
            .unwrap();
        let img = image::read_ppm(&dev.image_path(1)).unwrap();
        let straight = score_image(&out.model, &img).unwrap();
        let mirrored = score_image(&out.model, &horizontal_flip(&img)).unwrap();
        for (a, b) in straight.iter().zip(&mirrored) {
            assert!((a - b).abs() < 1e-4, "{straight:?} vs {mirrored:?}");
        }
    }
}
