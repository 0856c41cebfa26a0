//! Generate a synthetic event corpus and inspect what came out.
//!
//! The generator paints colored glyphs (the "objects") over structured
//! backgrounds (the "scenes"); an event class is a glyph/background pair.
//! Alongside the dev/val/eval event splits it emits a pretraining pool
//! labeled twice — once by glyph, once by background — which is what the
//! object and scene streams pretrain on. Everything is a pure function of
//! the seed; the DIGEST file pins the corpus bytes.
//!
//! Run with: cargo run --example generate_corpus

use std::path::Path;

use oscnn::dataset::toy::{corpus_digest, make_toy_dataset};
use oscnn::dataset::Manifest;

fn main() -> oscnn::Result<()> {
    let out = Path::new("example-output/generate_corpus/corpus");
    if out.exists() {
        std::fs::remove_dir_all(out).map_err(|e| oscnn::Error::io(out, e))?;
    }
    // 8 event classes (4 glyphs x 2 backgrounds), 10 dev images per class,
    // val and eval sized at the standard 40% / 60% of dev.
    let corpus = make_toy_dataset(out, 42, 10, 8)?;
    println!("corpus root: {}", corpus.root.display());

    let dev = Manifest::load(&corpus.dev)?;
    println!("event classes ({}):", dev.class_names.len());
    for name in &dev.class_names {
        println!("  {name}");
    }
    for (label, path) in [("dev", &corpus.dev), ("val", &corpus.val), ("eval", &corpus.eval)] {
        let m = Manifest::load(path)?;
        println!("{label}: {} images", m.len());
    }

    // The same pool of images carries both proxy labelings.
    let object = Manifest::load(corpus.object_proxy.as_ref().expect("full corpus"))?;
    let scene = Manifest::load(corpus.scene_proxy.as_ref().expect("full corpus"))?;
    println!(
        "pretraining pool: {} images, object proxy classes {:?}, scene proxy classes {:?}",
        object.len(),
        object.class_names,
        scene.class_names
    );

    // The digest in memory, the DIGEST file, and a fresh walk all agree.
    let walked = corpus_digest(&corpus.root)?;
    assert_eq!(walked, corpus.digest);
    println!("digest: {walked}");

    // Regenerating with the same seed reproduces the corpus byte for byte.
    let again = make_toy_dataset(Path::new("example-output/generate_corpus/again"), 42, 10, 8)?;
    assert_eq!(again.digest, corpus.digest);
    println!("regeneration with the same seed is byte-identical");
    Ok(())
}
