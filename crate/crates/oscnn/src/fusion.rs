//! Late fusion: weighted averaging of per-stream score matrices, plus the
//! on-disk score-file format.
//!
//! Weights are applied exactly as given — deliberately without
//! renormalization, so the standard depth-ensemble pair (0.3, 0.6) sums to
//! 0.9 just as specified. Ranking metrics and per-item argmax are invariant
//! to any common positive scaling, so preserving the raw weights is both
//! faithful and harmless.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::{Axis, Depth, StreamId};
use crate::tensor::Tensor;

/// Weight of the shallower network when both depths of an axis are fused.
pub const DEPTH_WEIGHT_DEEP: f32 = 0.3;

/// Weight of the deeper network when both depths of an axis are fused.
pub const DEPTH_WEIGHT_VERY_DEEP: f32 = 0.6;

/// Scores of `N` items for `C` classes, with row identities. `ids` are the
/// items' manifest-relative paths; rows follow `ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub class_names: Vec<String>,
    pub ids: Vec<String>,
    /// `[N, C]` scores.
    pub values: Tensor,
}

impl ScoreMatrix {
    pub fn new(class_names: Vec<String>, ids: Vec<String>, values: Tensor) -> Result<ScoreMatrix> {
        if values.rank() != 2 || values.dims() != [ids.len(), class_names.len()] {
            return Err(Error::shape(
                "score matrix",
                format!("[{}, {}]", ids.len(), class_names.len()),
                format!("{:?}", values.dims()),
            ));
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidArgument("score matrix needs at least two classes".into()));
        }
        if class_names.iter().any(|n| n.is_empty() || n.contains(',')) {
            return Err(Error::InvalidArgument(
                "class names must be non-empty and comma-free".into(),
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate item id {dup:?}")));
        }
        if ids.iter().any(|id| id.is_empty()) {
            return Err(Error::InvalidArgument("item ids must be non-empty".into()));
        }
        if !values.all_finite() {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(ScoreMatrix { class_names, ids, values })
    }

    pub fn num_items(&self) -> usize {
        self.ids.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Scores of item `i`, one per class.
    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.class_names.len();
        &self.values.data()[i * c..(i + 1) * c]
    }

    /// Serialize to the score-file format: a header line
    /// `id,<class names>`, then one `id,<scores>` row per item. Floats are
    /// printed with the shortest representation that parses back to the same
    /// bits, so save → load → save is byte-identical.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("id,{}\n", self.class_names.join(","));
        let c = self.class_names.len();
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in &self.values.data()[i * c..(i + 1) * c] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Parse a score file. Item ids may contain commas (scores are taken
    /// from the right), class names may not.
    pub fn load(path: &Path) -> Result<ScoreMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty score file".into()))?;
        let mut fields = header.split(',');
        if fields.next() != Some("id") {
            return Err(parse_err(1, "header must start with \"id,\"".into()));
        }
        let class_names: Vec<String> = fields.map(|s| s.to_string()).collect();
        let c = class_names.len();
        if c < 2 {
            return Err(parse_err(1, "need at least two class columns".into()));
        }
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts: Vec<&str> = line.rsplitn(c + 1, ',').collect();
            parts.reverse();
            if parts.len() != c + 1 || parts[0].is_empty() {
                return Err(parse_err(lineno, format!("expected an id and {c} scores")));
            }
            ids.push(parts[0].to_string());
            for field in &parts[1..] {
                let v: f32 = field
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad score {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno, format!("non-finite score {field:?}")));
                }
                data.push(v);
            }
        }
        let n = ids.len();
        ScoreMatrix::new(class_names, ids, Tensor::from_vec(&[n, c], data)?)
    }
}

/// Weighted sum of score matrices: `fused = Σ weights[i] · parts[i]`. All
/// parts must agree on classes and item order; weights are applied verbatim
/// (no renormalization).
pub fn fuse(parts: &[&ScoreMatrix], weights: &[f32]) -> Result<ScoreMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("fusion needs at least one score matrix".into()))?;
    if weights.len() != parts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} score matrices",
            weights.len(),
            parts.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fusion weights must be finite and non-negative, got {weights:?}"
        )));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidArgument("at least one fusion weight must be positive".into()));
    }
    for m in &parts[1..] {
        if m.class_names != first.class_names {
            return Err(Error::InvalidArgument(format!(
                "cannot fuse over different class lists ({:?} vs {:?})",
                first.class_names, m.class_names
            )));
        }
        if m.ids != first.ids {
            return Err(Error::InvalidArgument(
                "cannot fuse score matrices over different items or item orders".into(),
            ));
        }
    }
    let mut data = vec![0.0f32; first.values.len()];
    for (m, &w) in parts.iter().zip(weights) {
        for (acc, &v) in data.iter_mut().zip(m.values.data()) {
            *acc += w * v;
        }
    }
    ScoreMatrix::new(
        first.class_names.clone(),
        first.ids.clone(),
        Tensor::from_vec(first.values.dims(), data)?,
    )
}

/// Equal weights that average `n` streams: `1/n` each.
pub fn equal_weights(n: usize) -> Vec<f32> {
    vec![1.0 / n as f32; n]
}

/// The depth-ensemble weight policy. Each axis present gets an equal share
/// (`1 / number of axes`). Within an axis, when both depths are present the
/// shallower networks share [`DEPTH_WEIGHT_DEEP`] and the deeper ones share
/// [`DEPTH_WEIGHT_VERY_DEEP`] — unnormalized, so a lone axis with both
/// depths yields exactly (0.3, 0.6). An axis with a single depth gives its
/// whole share to that depth. Multiple variants of one depth split that
/// depth's weight equally, which is how a five-stream ensemble (one deep and
/// two very-deep object networks plus a deep and a very-deep scene network)
/// lands on (0.15, 0.15, 0.15, 0.15, 0.3).
pub fn depth_ensemble_weights(streams: &[StreamId]) -> Result<Vec<f32>> {
    if streams.is_empty() {
        return Err(Error::InvalidArgument("depth ensemble needs at least one stream".into()));
    }
    let axes: Vec<Axis> = {
        let mut seen = Vec::new();
        for s in streams {
            if !seen.contains(&s.axis) {
                seen.push(s.axis);
            }
        }
        seen
    };
    let axis_share = 1.0 / axes.len() as f32;
    let count = |axis: Axis, depth: Depth| {
        streams.iter().filter(|s| s.axis == axis && s.depth == depth).count()
    };
    let weights = streams
        .iter()
        .map(|s| {
            let deep_n = count(s.axis, Depth::Deep);
            let very_deep_n = count(s.axis, Depth::VeryDeep);
            let both = deep_n > 0 && very_deep_n > 0;
            let (depth_weight, siblings) = match s.depth {
                Depth::Deep => (if both { DEPTH_WEIGHT_DEEP } else { 1.0 }, deep_n),
                Depth::VeryDeep => (if both { DEPTH_WEIGHT_VERY_DEEP } else { 1.0 }, very_deep_n),
            };
            axis_share * depth_weight / siblings as f32
        })
        .collect();
    Ok(weights)
}
