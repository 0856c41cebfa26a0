//! Synthetic toy corpus: small RGB images of colored glyphs on textured
//! backgrounds, organized so that "what object" and "what scene" are two
//! independent label axes.
//!
//! An event class is a (glyph, background) combination; proxy labelings over
//! a separate pretraining pool expose each axis on its own. Degenerate
//! corpora blank one axis (uniform gray scenes, or no glyph) so a model's
//! axis specialization can be probed directly. Generation is a pure function
//! of the seed: regenerating with the same seed is byte-identical, which the
//! corpus digest makes checkable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{write_ppm, Image};
use crate::sub_seed;

/// Glyph identities, in label order.
pub const GLYPH_NAMES: [&str; 4] = ["triangle", "square", "disc", "cross"];

/// Background kinds, in label order.
pub const BG_NAMES: [&str; 3] = ["stripes", "gradient", "blobs"];

/// Which axes the generated corpus exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMode {
    /// Glyphs on textured backgrounds; event classes are the combinations
    /// and both proxy manifests are emitted.
    Full,
    /// Glyphs on a uniform mid-gray background; event classes are the
    /// glyphs, no proxies.
    ObjectOnly,
    /// Textured backgrounds with no glyph; event classes are the
    /// backgrounds, no proxies.
    SceneOnly,
}

/// Parameters for one corpus generation run.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Side of the square images, at least 16. The standard toy setting
    /// is 64.
    pub image_size: usize,
    /// How many glyph identities to use (2..=4).
    pub glyphs: usize,
    /// How many background kinds to use (2..=3).
    pub backgrounds: usize,
    pub dev_per_class: usize,
    pub val_per_class: usize,
    pub eval_per_class: usize,
    /// Pretraining-pool images per (glyph, background) combination; the pool
    /// is disjoint from the event splits and only emitted in [`ToyMode::Full`].
    pub pretrain_per_combo: usize,
    pub mode: ToyMode,
}

impl ToyConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.image_size < 16 {
            return bad(format!("toy image size {} too small; need >= 16", self.image_size));
        }
        if !(2..=GLYPH_NAMES.len()).contains(&self.glyphs) {
            return bad(format!("glyph count {} outside 2..={}", self.glyphs, GLYPH_NAMES.len()));
        }
        if !(2..=BG_NAMES.len()).contains(&self.backgrounds) {
            return bad(format!(
                "background count {} outside 2..={}",
                self.backgrounds,
                BG_NAMES.len()
            ));
        }
        if self.dev_per_class == 0 || self.val_per_class == 0 || self.eval_per_class == 0 {
            return bad("every split needs at least one image per class".into());
        }
        if self.mode == ToyMode::Full && self.pretrain_per_combo == 0 {
            return bad("full corpora need at least one pretraining image per combination".into());
        }
        Ok(())
    }
}

/// Paths and digest of a generated corpus.
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub root: PathBuf,
    pub dev: PathBuf,
    pub val: PathBuf,
    pub eval: PathBuf,
    /// Pretraining pool labeled by glyph; absent for degenerate corpora.
    pub object_proxy: Option<PathBuf>,
    /// Pretraining pool labeled by background; absent for degenerate corpora.
    pub scene_proxy: Option<PathBuf>,
    /// Hex SHA-256 over every generated file, also written to `DIGEST`.
    pub digest: String,
}

fn jitter_color(base: [f32; 3], rng: &mut ChaCha8Rng) -> [f32; 3] {
    base.map(|v| (v + rng.gen_range(-30.0..=30.0)).clamp(0.0, 255.0).round())
}

/// Paint one background kind. Each kind has characteristic colors, jittered
/// per image, plus kind-specific geometry randomness.
fn render_background(kind: usize, size: usize, rng: &mut ChaCha8Rng) -> Image {
    match kind {
        0 => {
            // Stripes: alternating bands of warm and cold color.
            let c1 = jitter_color([210.0, 190.0, 80.0], rng);
            let c2 = jitter_color([50.0, 70.0, 130.0], rng);
            let period = rng.gen_range(size / 8..=size / 4).max(2);
            let phase = rng.gen_range(0..period);
            let orient = rng.gen_range(0..3u8); // rows, columns, diagonal
            let mut img = Image::filled(size, size, [0.0; 3]);
            for y in 0..size {
                for x in 0..size {
                    let idx = match orient {
                        0 => y,
                        1 => x,
                        _ => x + y,
                    };
                    let c = if ((idx + phase) / period) % 2 == 0 { c1 } else { c2 };
                    for ch in 0..3 {
                        img.set(ch, y, x, c[ch]);
                    }
                }
            }
            img
        }
        1 => {
            // Gradient: smooth linear blend between two colors.
            let c1 = jitter_color([150.0, 60.0, 140.0], rng);
            let c2 = jitter_color([240.0, 200.0, 120.0], rng);
            let vertical = rng.gen_bool(0.5);
            let mut img = Image::filled(size, size, [0.0; 3]);
            for y in 0..size {
                for x in 0..size {
                    let t = (if vertical { y } else { x }) as f32 / (size - 1) as f32;
                    for ch in 0..3 {
                        img.set(ch, y, x, (c1[ch] + t * (c2[ch] - c1[ch])).round());
                    }
                }
            }
            img
        }
        _ => {
            // Blobs: soft bright discs scattered on a dark field.
            let base = jitter_color([30.0, 40.0, 35.0], rng);
            let blob = jitter_color([90.0, 170.0, 160.0], rng);
            let count = rng.gen_range(4..=7);
            let centers: Vec<(f32, f32, f32)> = (0..count)
                .map(|_| {
                    let cy = rng.gen_range(0..size) as f32;
                    let cx = rng.gen_range(0..size) as f32;
                    let r = rng.gen_range(size as f32 / 12.0..=size as f32 / 6.0);
                    (cy, cx, r)
                })
                .collect();
            let mut img = Image::filled(size, size, [0.0; 3]);
            for y in 0..size {
                for x in 0..size {
                    let mut alpha: f32 = 0.0;
                    for &(cy, cx, r) in &centers {
                        let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                        alpha = alpha.max((1.0 - d2 / (r * r)).max(0.0));
                    }
                    for ch in 0..3 {
                        let v = base[ch] + alpha * (blob[ch] - base[ch]);
                        img.set(ch, y, x, v.round());
                    }
                }
            }
            img
        }
    }
}

/// Paint one glyph onto `img` at a random position and scale. Each glyph has
/// a characteristic fill color, jittered per image.
fn render_glyph(img: &mut Image, glyph: usize, rng: &mut ChaCha8Rng) {
    let size = img.height();
    let base = match glyph {
        0 => [225.0, 60.0, 60.0],   // triangle: red
        1 => [60.0, 205.0, 75.0],   // square: green
        2 => [65.0, 95.0, 225.0],   // disc: blue
        _ => [235.0, 235.0, 235.0], // cross: light gray
    };
    let color = jitter_color(base, rng);
    let s = rng.gen_range(size / 8..=size / 4) as i64;
    let cy = rng.gen_range(s..=size as i64 - 1 - s);
    let cx = rng.gen_range(s..=size as i64 - 1 - s);
    let t = (s / 3).max(2);
    for y in 0..size as i64 {
        for x in 0..size as i64 {
            let (dy, dx) = (y - cy, x - cx);
            let inside = match glyph {
                0 => dy.abs() <= s && dx.abs() * 2 <= dy + s, // apex-up triangle
                1 => dy.abs() <= s && dx.abs() <= s,
                2 => dy * dy + dx * dx <= s * s,
                _ => (dx.abs() <= t && dy.abs() <= s) || (dy.abs() <= t && dx.abs() <= s),
            };
            if inside {
                for ch in 0..3 {
                    img.set(ch, y as usize, x as usize, color[ch]);
                }
            }
        }
    }
}

/// Render one image from its own derived RNG. `background` of `None` means
/// the uniform mid-gray scene; `glyph` of `None` means no object.
fn render_image(
    size: usize,
    glyph: Option<usize>,
    background: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Image {
    let mut img = match background {
        Some(kind) => render_background(kind, size, rng),
        None => Image::filled(size, size, [128.0; 3]),
    };
    if let Some(g) = glyph {
        render_glyph(&mut img, g, rng);
    }
    img
}

/// Generate a complete corpus under `config.out_dir`: event split manifests
/// `dev`/`val`/`eval`, the proxy manifests when applicable, all images, and
/// a `DIGEST` file. Same config -> byte-identical output.
pub fn generate(config: &ToyConfig) -> Result<ToyCorpus> {
    config.validate()?;
    let root = &config.out_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    // Event classes, glyph-major in full mode.
    let (class_names, cases): (Vec<String>, Vec<(Option<usize>, Option<usize>)>) = match config.mode {
        ToyMode::Full => {
            let mut names = Vec::new();
            let mut cases = Vec::new();
            for g in 0..config.glyphs {
                for b in 0..config.backgrounds {
                    names.push(format!("{}_{}", GLYPH_NAMES[g], BG_NAMES[b]));
                    cases.push((Some(g), Some(b)));
                }
            }
            (names, cases)
        }
        ToyMode::ObjectOnly => (
            GLYPH_NAMES[..config.glyphs].iter().map(|s| s.to_string()).collect(),
            (0..config.glyphs).map(|g| (Some(g), None)).collect(),
        ),
        ToyMode::SceneOnly => (
            BG_NAMES[..config.backgrounds].iter().map(|s| s.to_string()).collect(),
            (0..config.backgrounds).map(|b| (None, Some(b))).collect(),
        ),
    };

    let mut corpus = ToyCorpus {
        root: root.clone(),
        dev: root.join("dev.manifest"),
        val: root.join("val.manifest"),
        eval: root.join("eval.manifest"),
        object_proxy: None,
        scene_proxy: None,
        digest: String::new(),
    };

    let splits = [
        ("dev", config.dev_per_class, &corpus.dev),
        ("val", config.val_per_class, &corpus.val),
        ("eval", config.eval_per_class, &corpus.eval),
    ];
    for (split_name, per_class, manifest_path) in splits {
        let img_dir = root.join("images").join(split_name);
        std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        let mut entries = Vec::new();
        for (label, (glyph, background)) in cases.iter().enumerate() {
            for i in 0..per_class {
                let tag = format!("event/{split_name}/{label}/{i}");
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, &tag));
                let img = render_image(config.image_size, *glyph, *background, &mut rng);
                let rel = format!("images/{split_name}/{}_{i:04}.ppm", class_names[label]);
                write_ppm(&img, &root.join(&rel))?;
                entries.push((rel, label));
            }
        }
        write_manifest(manifest_path, &class_names, &entries)?;
    }

    if config.mode == ToyMode::Full {
        let pool_dir = root.join("images").join("pretrain");
        std::fs::create_dir_all(&pool_dir).map_err(|e| Error::io(&pool_dir, e))?;
        let mut object_entries = Vec::new();
        let mut scene_entries = Vec::new();
        for g in 0..config.glyphs {
            for b in 0..config.backgrounds {
                for i in 0..config.pretrain_per_combo {
                    let tag = format!("pretrain/{g}/{b}/{i}");
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, &tag));
                    let img = render_image(config.image_size, Some(g), Some(b), &mut rng);
                    let rel = format!(
                        "images/pretrain/{}_{}_{i:04}.ppm",
                        GLYPH_NAMES[g], BG_NAMES[b]
                    );
                    write_ppm(&img, &root.join(&rel))?;
                    object_entries.push((rel.clone(), g));
                    scene_entries.push((rel, b));
                }
            }
        }
        let object_names: Vec<String> = GLYPH_NAMES[..config.glyphs]
            .iter()
            .map(|n| format!("object:{n}"))
            .collect();
        let scene_names: Vec<String> = BG_NAMES[..config.backgrounds]
            .iter()
            .map(|n| format!("scene:{n}"))
            .collect();
        let object_path = root.join("object_proxy.manifest");
        let scene_path = root.join("scene_proxy.manifest");
        write_manifest(&object_path, &object_names, &object_entries)?;
        write_manifest(&scene_path, &scene_names, &scene_entries)?;
        corpus.object_proxy = Some(object_path);
        corpus.scene_proxy = Some(scene_path);
    }

    corpus.digest = corpus_digest(root)?;
    let digest_path = root.join("DIGEST");
    std::fs::write(&digest_path, format!("{}\n", corpus.digest)).map_err(|e| Error::io(&digest_path, e))?;
    Ok(corpus)
}

fn write_manifest(path: &Path, class_names: &[String], entries: &[(String, usize)]) -> Result<()> {
    let mut out = format!("classes:{}\n", class_names.join(","));
    for (rel, label) in entries {
        out.push_str(&format!("{rel},{label}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// SHA-256 over every file under `root` except `DIGEST`, visited in sorted
/// relative-path order; each file contributes its path, a NUL byte, and its
/// bytes. Two corpora generated with the same seed hash identically even in
/// different directories.
pub fn corpus_digest(root: &Path) -> Result<String> {
    fn collect(root: &Path, dir: &Path, files: &mut Vec<String>) -> Result<()> {
        let iter = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in iter {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                collect(root, &path, files)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_string_lossy()
                    .into_owned();
                if rel != "DIGEST" {
                    files.push(rel);
                }
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    collect(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in &files {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        let bytes = std::fs::read(root.join(rel)).map_err(|e| Error::io(&root.join(rel), e))?;
        hasher.update(&bytes);
    }
    let out = hasher.finalize();
    Ok(out.iter().map(|b| format!("{b:02x}")).collect())
}

/// Convenience wrapper with the standard split ratios (dev : val : eval
/// = 5 : 2 : 3): `per_class` images per class in dev, scaled counts in
/// val/eval, and a pretraining pool of the same per-combination size.
/// `class_count` of 4, 6, or 8 selects 2, 3, or 4 glyphs over 2 backgrounds.
pub fn make_toy_dataset(
    out_dir: &Path,
    seed: u64,
    per_class: usize,
    class_count: usize,
) -> Result<ToyCorpus> {
    let glyphs = match class_count {
        4 => 2,
        6 => 3,
        8 => 4,
        other => {
            return Err(Error::InvalidConfig(format!(
                "class count {other} unsupported; pick 4, 6, or 8"
            )))
        }
    };
    generate(&ToyConfig {
        out_dir: out_dir.to_path_buf(),
        seed,
        image_size: 64,
        glyphs,
        backgrounds: 2,
        dev_per_class: per_class,
        val_per_class: ((per_class as f64 * 0.4).round() as usize).max(1),
        eval_per_class: ((per_class as f64 * 0.6).round() as usize).max(1),
        pretrain_per_combo: per_class,
        mode: ToyMode::Full,
    })
}
