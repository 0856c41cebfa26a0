//! Two-stream convolutional networks with late score fusion, from scratch.
//!
//! This crate trains small image classifiers along two label axes — what an
//! image *contains* (object) and where it *takes place* (scene) — fuses their
//! prediction scores, and evaluates the result with precision/recall average
//! precision. Everything numeric is built in-crate: tensors, convolution and
//! its backward pass, SGD with momentum and a stepped learning-rate schedule,
//! ten-crop test-time averaging, and the evaluation metrics.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense arrays and the conv/pool/matmul/relu kernels.
//! - [`net`]: layer graph, parameter sets, forward/backward, presets.
//! - [`optim`]: SGD with momentum and the stepped learning-rate schedule.
//! - [`image`]: CHW images, bilinear resize, crops and flips, PPM files.
//! - [`dataset`]: manifests, batching, and the synthetic toy corpus.
//! - [`stream`]: one trained network per label axis — pretrain, fine-tune,
//!   ten-crop scoring.
//! - [`fusion`]: weighted score averaging across streams.
//! - [`eval`]: precision/recall curves and mean average precision.
//! - [`model_file`], [`config`], [`commands`]: the on-disk model format, run
//!   configuration, and the operations behind the `oscnn` command-line tool.
//!
//! The `examples/` directory demonstrates each capability end to end on the
//! synthetic corpus; `cargo run --example full_pipeline` walks the whole
//! train/score/fuse/evaluate loop in a couple of minutes.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod image;
pub mod model_file;
pub mod net;
pub mod optim;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};

/// Derive a stage-specific RNG seed from a master seed and a textual tag.
///
/// Every random stage of a run (corpus images, weight init, batch shuffling,
/// augmentation, dropout) seeds its own generator through this function, so
/// stages are statistically independent, insensitive to each other's draw
/// counts, and reproducible from the single master seed.
pub fn sub_seed(master: u64, tag: &str) -> u64 {
    // FNV-style absorption of the tag into the master, then a SplitMix64
    // finalizer to spread the bits.
    let mut h = master ^ 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
