//! The on-disk model container.
//!
//! Layout: the magic `OSCN`, a little-endian u16 format version, a u32
//! header length, a UTF-8 text header, the parameter tensors in directory
//! order (each in the standalone tensor format), and a trailing CRC-32 of
//! every preceding byte. The checksum is verified before anything is
//! parsed, so a flipped bit anywhere in the file surfaces as a checksum
//! error rather than as garbage weights.
//!
//! The header is line-oriented:
//!
//! ```text
//! stream object/deep
//! crop 56
//! resize 64
//! means 104.5 110.25 93.75
//! classes triangle_stripes,triangle_gradient
//! arch input 3 56 56
//! arch conv 6 k3 s1 p1
//! ...
//! tensor conv1.weight
//! tensor conv1.bias
//! ...
//! ```
//!
//! The tensor directory is redundant with the architecture — deliberately:
//! a reader can check the two against each other, and a human can see what
//! the file contains with `strings`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{NetworkSpec, ParamPair, ParamSet};
use crate::stream::{StreamId, StreamModel};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: [u8; 4] = *b"OSCN";
pub const MODEL_FORMAT_VERSION: u16 = 1;

/// Suffixes distinguishing the parallel branches of an inception layer, in
/// pair order (1x1, 3x3, 5x5).
const BRANCH_SUFFIXES: [&str; 3] = ["k1", "k3", "k5"];

/// The tensor directory implied by an architecture: weight and bias names
/// per parameterised layer, in the canonical parameter order.
fn tensor_names(spec: &NetworkSpec) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for desc in spec.param_descs()? {
        if desc.shapes.len() == 1 {
            names.push(format!("{}.weight", desc.name));
            names.push(format!("{}.bias", desc.name));
        } else {
            if desc.shapes.len() != BRANCH_SUFFIXES.len() {
                return Err(Error::InvalidArgument(format!(
                    "layer {} has {} parameter pairs; expected 1 or {}",
                    desc.name,
                    desc.shapes.len(),
                    BRANCH_SUFFIXES.len()
                )));
            }
            for suffix in BRANCH_SUFFIXES {
                names.push(format!("{}.{suffix}.weight", desc.name));
                names.push(format!("{}.{suffix}.bias", desc.name));
            }
        }
    }
    Ok(names)
}

/// Serialize a model to `path`.
pub fn save_model(model: &StreamModel, path: &Path) -> Result<()> {
    model.validate()?;
    let mut header = String::new();
    let _ = writeln!(header, "stream {}", model.id);
    let _ = writeln!(header, "crop {}", model.crop_size);
    let _ = writeln!(header, "resize {}", model.resize_to);
    let _ = writeln!(
        header,
        "means {} {} {}",
        model.channel_means[0], model.channel_means[1], model.channel_means[2]
    );
    let _ = writeln!(header, "classes {}", model.class_names.join(","));
    for line in model.spec.to_lines() {
        let _ = writeln!(header, "arch {line}");
    }
    for name in tensor_names(&model.spec)? {
        let _ = writeln!(header, "tensor {name}");
    }

    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for tensor in model.params.tensors() {
        // Writing into a Vec cannot fail, but the signature is fallible.
        tensor.write_to(&mut bytes).map_err(|e| Error::io(path, e))?;
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a model back. The trailing checksum is verified over the whole file
/// before any field is interpreted.
pub fn load_model(path: &Path) -> Result<StreamModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |message: String| Error::Format { path: path.to_path_buf(), message };

    if bytes.len() < MODEL_MAGIC.len() + 2 + 4 + 4 {
        return Err(fmt(format!("file too short ({} bytes) to be a model", bytes.len())));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { path: path.to_path_buf(), stored, computed });
    }

    if body[..4] != MODEL_MAGIC {
        return Err(fmt(format!("bad magic {:?}; not a model file", &body[..4])));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(fmt(format!(
            "model format version {version} unsupported (this build reads {MODEL_FORMAT_VERSION})"
        )));
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let header_end = 10usize.checked_add(header_len).ok_or_else(|| fmt("header length overflows".into()))?;
    if header_end > body.len() {
        return Err(fmt(format!(
            "header claims {header_len} bytes but only {} remain",
            body.len() - 10
        )));
    }
    let header = std::str::from_utf8(&body[10..header_end])
        .map_err(|_| fmt("header is not valid UTF-8".into()))?;

    // Parse header lines.
    let mut stream: Option<StreamId> = None;
    let mut crop: Option<usize> = None;
    let mut resize: Option<usize> = None;
    let mut means: Option<[f32; 3]> = None;
    let mut classes: Option<Vec<String>> = None;
    let mut arch_lines: Vec<&str> = Vec::new();
    let mut directory: Vec<&str> = Vec::new();
    for line in header.lines() {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "stream" => stream = Some(StreamId::parse(rest)?),
            "crop" => {
                crop = Some(rest.parse().map_err(|_| fmt(format!("bad crop size {rest:?}")))?)
            }
            "resize" => {
                resize = Some(rest.parse().map_err(|_| fmt(format!("bad resize target {rest:?}")))?)
            }
            "means" => {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(fmt(format!("means line needs 3 values, got {rest:?}")));
                }
                let mut m = [0.0f32; 3];
                for (slot, p) in m.iter_mut().zip(&parts) {
                    *slot = p.parse().map_err(|_| fmt(format!("bad channel mean {p:?}")))?;
                }
                means = Some(m);
            }
            "classes" => classes = Some(rest.split(',').map(|s| s.to_string()).collect()),
            "arch" => arch_lines.push(rest),
            "tensor" => directory.push(rest),
            other => return Err(fmt(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |what: &str| fmt(format!("header is missing the {what} line"));
    let stream = stream.ok_or_else(|| missing("stream"))?;
    let crop = crop.ok_or_else(|| missing("crop"))?;
    let resize = resize.ok_or_else(|| missing("resize"))?;
    let means = means.ok_or_else(|| missing("means"))?;
    let classes = classes.ok_or_else(|| missing("classes"))?;

    let spec = NetworkSpec::from_lines(&arch_lines)?;
    let expected = tensor_names(&spec)?;
    if directory != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(fmt(format!(
            "tensor directory does not match the architecture: listed {directory:?}, expected {expected:?}"
        )));
    }

    // Read the payload tensors in directory order and regroup them into the
    // parameter layout the architecture prescribes.
    let mut cursor = &body[header_end..];
    let mut read_tensor = || -> Result<Tensor> {
        Tensor::read_from(&mut cursor).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format { path: path.to_path_buf(), message },
            other => other,
        })
    };
    let mut entries = Vec::new();
    for desc in spec.param_descs()? {
        let mut pairs = Vec::with_capacity(desc.shapes.len());
        for _ in 0..desc.shapes.len() {
            let weights = read_tensor()?;
            let bias = read_tensor()?;
            pairs.push(ParamPair { weights, bias });
        }
        entries.push((desc.name, pairs));
    }
    if !cursor.is_empty() {
        return Err(fmt(format!("{} trailing bytes after the last tensor", cursor.len())));
    }

    let model = StreamModel {
        id: stream,
        spec,
        params: ParamSet::new(entries),
        channel_means: means,
        crop_size: crop,
        resize_to: resize,
        class_names: classes,
    };
    model.validate()?;
    Ok(model)
}

/// Guard that a loaded model is the stream the caller meant to use.
pub fn check_stream(model: &StreamModel, expected: &StreamId) -> Result<()> {
    if &model.id != expected {
        return Err(Error::StreamMismatch {
            expected: expected.to_string(),
            got: model.id.to_string(),
        });
    }
    Ok(())
}
