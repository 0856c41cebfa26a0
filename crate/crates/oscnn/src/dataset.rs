//! Dataset manifests, per-channel statistics, and minibatch iteration.
//!
//! A dataset split is a plain-text manifest rooted at a directory of PPM
//! images. Line 1 declares the class names; each following line is
//! `relative/path.ppm,<class index>`. The [`toy`] submodule generates a
//! complete synthetic corpus in this format.

pub mod toy;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{self, Image};

/// Which split a manifest was loaded from, inferred from its file stem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Dev,
    Val,
    Eval,
    Merged,
}

impl SplitTag {
    fn from_stem(stem: &str) -> SplitTag {
        match stem {
            "dev" => SplitTag::Dev,
            "val" => SplitTag::Val,
            "eval" => SplitTag::Eval,
            _ => SplitTag::Merged,
        }
    }
}

/// One labeled dataset split: class names plus (relative path, label) rows,
/// resolved against `root`.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub root: PathBuf,
    pub split: SplitTag,
    pub class_names: Vec<String>,
    /// (relative path, class index), in manifest order.
    pub entries: Vec<(String, usize)>,
}

impl Manifest {
    /// Parse a manifest file; image paths resolve against the manifest's
    /// parent directory.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty manifest".into()))?;
        let class_list = header
            .strip_prefix("classes:")
            .ok_or_else(|| parse_err(1, "first line must start with \"classes:\"".into()))?;
        let class_names: Vec<String> = class_list.split(',').map(|s| s.trim().to_string()).collect();
        if class_names.len() < 2 || class_names.iter().any(|n| n.is_empty()) {
            return Err(parse_err(1, "need at least two non-empty class names".into()));
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (rel, label) = line
                .rsplit_once(',')
                .ok_or_else(|| parse_err(lineno, "expected \"path,<class index>\"".into()))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad class index {:?}", label.trim())))?;
            if label >= class_names.len() {
                return Err(parse_err(
                    lineno,
                    format!("class index {label} out of range (have {} classes)", class_names.len()),
                ));
            }
            let rel = rel.trim().to_string();
            if rel.is_empty() {
                return Err(parse_err(lineno, "empty image path".into()));
            }
            if !seen.insert(rel.clone()) {
                return Err(parse_err(lineno, format!("duplicate image path {rel:?}")));
            }
            entries.push((rel, label));
        }
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        Ok(Manifest {
            root,
            split: SplitTag::from_stem(stem),
            class_names,
            entries,
        })
    }

    /// Serialize back to the manifest grammar and write to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "classes:{}", self.class_names.join(","));
        for (rel, label) in &self.entries {
            let _ = writeln!(out, "{rel},{label}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Absolute path of entry `i`'s image.
    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.entries[i].0)
    }

    /// Load every image in manifest order.
    pub fn load_images(&self) -> Result<Vec<Image>> {
        self.entries
            .iter()
            .map(|(rel, _)| image::read_ppm(&self.root.join(rel)))
            .collect()
    }
}

/// Concatenate splits that share a class list and root, e.g. to fine-tune on
/// dev+val together. Entry order is the argument order.
pub fn merge_splits(parts: &[&Manifest]) -> Result<Manifest> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("merge_splits needs at least one manifest".into()))?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for m in parts {
        if m.class_names != first.class_names {
            return Err(Error::InvalidArgument(format!(
                "cannot merge manifests with different class lists ({:?} vs {:?})",
                first.class_names, m.class_names
            )));
        }
        if m.root != first.root {
            return Err(Error::InvalidArgument(format!(
                "cannot merge manifests rooted at {:?} and {:?}",
                first.root, m.root
            )));
        }
        for e in &m.entries {
            if !seen.insert(e.0.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate image path {:?} across merged splits",
                    e.0
                )));
            }
            entries.push(e.clone());
        }
    }
    Ok(Manifest {
        root: first.root.clone(),
        split: SplitTag::Merged,
        class_names: first.class_names.clone(),
        entries,
    })
}

/// Mean value of each channel over every pixel of every image, computed with
/// compensated f64 summation so the result does not depend on image order
/// beyond ~1e-9.
pub fn channel_means(images: &[Image]) -> Result<[f32; 3]> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("channel_means over zero images".into()));
    }
    let mut sums = [0.0f64; 3];
    let mut comps = [0.0f64; 3];
    let mut count = 0usize;
    for img in images {
        let plane = img.height() * img.width();
        count += plane;
        for c in 0..3 {
            for &v in &img.data()[c * plane..(c + 1) * plane] {
                // Kahan compensated addition.
                let y = v as f64 - comps[c];
                let t = sums[c] + y;
                comps[c] = (t - sums[c]) - y;
                sums[c] = t;
            }
        }
    }
    Ok([
        (sums[0] / count as f64) as f32,
        (sums[1] / count as f64) as f32,
        (sums[2] / count as f64) as f32,
    ])
}

/// Endless minibatch source: reshuffles the dataset each epoch with a fresh
/// permutation and carries partial batches across epoch boundaries, so every
/// batch has exactly `batch_size` items.
#[derive(Debug)]
pub struct BatchIterator {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, rng: ChaCha8Rng) -> Result<BatchIterator> {
        if n == 0 || batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch iteration needs a non-empty dataset and batch size >= 1".into(),
            ));
        }
        let mut it = BatchIterator {
            n,
            batch_size,
            order: (0..n).collect(),
            cursor: 0,
            rng,
        };
        it.reshuffle();
        Ok(it)
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// Indices of the next minibatch.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.cursor == self.n {
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}
