//! Run configuration: one TOML file describes a whole experiment.
//!
//! Each operator command reads its own part: `[gen]` for corpus generation,
//! `[[pretrain]]` / `[[finetune]]` / `[[score]]` / `[[fuse]]` / `[[eval]]`
//! entry lists (a command executes all of its entries in order), `[viz]`
//! for filter export, `[[stream]]` declarations naming the networks, and a
//! global `[train]` section. A per-entry `train` table replaces the global
//! one wholesale (unset fields fall back to the built-in defaults, not to
//! the global section). Relative paths in the file resolve against the
//! config file's own directory, so an experiment directory can be moved as
//! a unit.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::dataset::toy::{ToyConfig, ToyMode};
use crate::error::{Error, Result};
use crate::net::PresetFlavor;
use crate::optim::TrainConfig;
use crate::stream::{Axis, StreamId};

/// Parameters for `gen-toy`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenEntry {
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_glyphs")]
    pub glyphs: usize,
    #[serde(default = "default_backgrounds")]
    pub backgrounds: usize,
    pub dev_per_class: usize,
    /// Defaults to 40% of `dev_per_class` (the standard 5:2:3 split).
    #[serde(default)]
    pub val_per_class: Option<usize>,
    /// Defaults to 60% of `dev_per_class`.
    #[serde(default)]
    pub eval_per_class: Option<usize>,
    /// Defaults to `dev_per_class`.
    #[serde(default)]
    pub pretrain_per_combo: Option<usize>,
    /// `"full"`, `"object-only"`, or `"scene-only"`.
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_image_size() -> usize {
    64
}
fn default_glyphs() -> usize {
    4
}
fn default_backgrounds() -> usize {
    2
}
fn default_mode() -> String {
    "full".to_string()
}

impl GenEntry {
    pub fn toy_mode(&self) -> Result<ToyMode> {
        match self.mode.as_str() {
            "full" => Ok(ToyMode::Full),
            "object-only" => Ok(ToyMode::ObjectOnly),
            "scene-only" => Ok(ToyMode::SceneOnly),
            other => Err(Error::InvalidConfig(format!(
                "unknown corpus mode {other:?}; expected \"full\", \"object-only\", or \"scene-only\""
            ))),
        }
    }

    /// Expand into the generator's full parameter set, resolving the output
    /// directory against `base` and filling the ratio-derived defaults.
    pub fn toy_config(&self, base: &Path) -> Result<ToyConfig> {
        let ratio = |f: f64| ((self.dev_per_class as f64 * f).round() as usize).max(1);
        Ok(ToyConfig {
            out_dir: resolve(base, &self.out_dir),
            seed: self.seed,
            image_size: self.image_size,
            glyphs: self.glyphs,
            backgrounds: self.backgrounds,
            dev_per_class: self.dev_per_class,
            val_per_class: self.val_per_class.unwrap_or_else(|| ratio(0.4)),
            eval_per_class: self.eval_per_class.unwrap_or_else(|| ratio(0.6)),
            pretrain_per_combo: self.pretrain_per_combo.unwrap_or(self.dev_per_class),
            mode: self.toy_mode()?,
        })
    }
}

/// A named network declaration, referenced by pretrain/finetune entries.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StreamEntry {
    pub name: String,
    /// `"object"` or `"scene"`.
    pub axis: String,
    /// A preset name: `"deep_toy"`, `"verydeep_toy"`, or
    /// `"verydeep_plain_toy"`.
    pub flavor: String,
}

impl StreamEntry {
    pub fn axis(&self) -> Result<Axis> {
        Axis::parse(&self.axis)
    }

    pub fn flavor(&self) -> Result<PresetFlavor> {
        PresetFlavor::parse(&self.flavor)
    }

    pub fn stream_id(&self) -> Result<StreamId> {
        Ok(crate::stream::preset_stream_id(self.axis()?, self.flavor()?))
    }
}

/// One proxy-pretraining run.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainEntry {
    /// Name of a `[[stream]]` declaration.
    pub stream: String,
    pub manifest: PathBuf,
    pub model_out: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub loss_log: Option<PathBuf>,
    /// Wholesale replacement for the global `[train]` section.
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

/// One fine-tuning run.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneEntry {
    pub stream: String,
    /// The pretrained model to start from.
    pub model_in: PathBuf,
    pub manifest: PathBuf,
    /// Further splits merged into `manifest` (e.g. train on dev+val).
    #[serde(default)]
    pub merge: Vec<PathBuf>,
    pub model_out: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub loss_log: Option<PathBuf>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

/// One scoring run: a model over a split.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub scores_out: PathBuf,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_true() -> bool {
    true
}

/// One fusion: combine score files into a new one.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FuseEntry {
    pub inputs: Vec<PathBuf>,
    /// Stream identities (`axis/depth[/variant]`) aligned with `inputs`;
    /// required for the depth-ensemble weight policy.
    #[serde(default)]
    pub streams: Option<Vec<String>>,
    /// Explicit weights aligned with `inputs`; defaults to equal weights.
    #[serde(default)]
    pub weights: Option<Vec<f32>>,
    pub scores_out: PathBuf,
}

impl FuseEntry {
    pub fn stream_ids(&self) -> Result<Option<Vec<StreamId>>> {
        match &self.streams {
            None => Ok(None),
            Some(names) => Ok(Some(
                names.iter().map(|s| StreamId::parse(s)).collect::<Result<Vec<_>>>()?,
            )),
        }
    }
}

/// One evaluation: a score file against a labeled split.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalEntry {
    pub scores: PathBuf,
    pub manifest: PathBuf,
    pub report_out: PathBuf,
}

/// Filter visualization: first-layer filters of a model to an image.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VizEntry {
    pub model: PathBuf,
    pub image_out: PathBuf,
}

/// A whole experiment description.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen: Option<GenEntry>,
    /// Global training recipe; per-entry `train` tables replace it.
    pub train: TrainConfig,
    pub stream: Vec<StreamEntry>,
    pub pretrain: Vec<PretrainEntry>,
    pub finetune: Vec<FinetuneEntry>,
    pub score: Vec<ScoreEntry>,
    pub fuse: Vec<FuseEntry>,
    pub eval: Vec<EvalEntry>,
    pub viz: Option<VizEntry>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Resolve a possibly-relative configured path against the config file's
/// directory.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    /// Parse and validate a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        config.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks: unique stream names, resolvable references,
    /// parseable enumerations, consistent array lengths, valid training
    /// recipes.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.train.validate()?;
        if let Some(gen) = &self.gen {
            gen.toy_mode()?;
        }
        let mut names = HashSet::new();
        for s in &self.stream {
            if s.name.is_empty() {
                return bad("stream names must be non-empty".into());
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate stream name {:?}", s.name));
            }
            s.axis()?;
            s.flavor()?;
        }
        let stream_exists = |name: &str, what: &str| {
            if names.contains(name) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{what} entry references unknown stream {name:?}"
                )))
            }
        };
        for p in &self.pretrain {
            stream_exists(&p.stream, "pretrain")?;
            if let Some(t) = &p.train {
                t.validate()?;
            }
        }
        for f in &self.finetune {
            stream_exists(&f.stream, "finetune")?;
            if let Some(t) = &f.train {
                t.validate()?;
            }
        }
        for f in &self.fuse {
            if f.inputs.is_empty() {
                return bad("fuse entry needs at least one input score file".into());
            }
            if let Some(w) = &f.weights {
                if w.len() != f.inputs.len() {
                    return bad(format!(
                        "fuse entry has {} weights for {} inputs",
                        w.len(),
                        f.inputs.len()
                    ));
                }
            }
            if let Some(ids) = f.stream_ids()? {
                if ids.len() != f.inputs.len() {
                    return bad(format!(
                        "fuse entry names {} streams for {} inputs",
                        ids.len(),
                        f.inputs.len()
                    ));
                }
            }
        }
        Ok(())
    }

    /// The training recipe an entry actually runs with: its own `train`
    /// table if present, otherwise the global one.
    pub fn effective_train(&self, entry_train: &Option<TrainConfig>) -> TrainConfig {
        entry_train.clone().unwrap_or_else(|| self.train.clone())
    }

    /// Shorthand for [`resolve`] against this config's directory.
    pub fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }

    /// Look up a declared stream by name. Validation guarantees this
    /// succeeds for names referenced by entries.
    pub fn find_stream(&self, name: &str) -> Result<&StreamEntry> {
        self.stream
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stream {name:?}")))
    }
}
