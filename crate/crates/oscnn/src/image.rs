//! Image geometry and normalization: bilinear resize, crops and flips for
//! training, the ten-crop view set for testing, and binary PPM files.
//!
//! An [`Image`] is always 3-channel, CHW, with values in `[0, 255]` until
//! [`normalize`] subtracts the per-channel means. All operations here are
//! deterministic; the only randomness is the seeded offset/flip draw in
//! [`random_crop_flip`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 3-channel image, CHW layout, f32 values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    /// Length `3 * height * width`, channel-major.
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image extents must be >= 1, got {height}x{width}"
            )));
        }
        if data.len() != 3 * height * width {
            return Err(Error::shape(
                "Image::new",
                format!("{} values (3x{height}x{width})", 3 * height * width),
                format!("{}", data.len()),
            ));
        }
        Ok(Image { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let plane = height * width;
        let mut data = Vec::with_capacity(3 * plane);
        for &v in &rgb {
            data.extend(std::iter::repeat(v).take(plane));
        }
        Image { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// One channel as a contiguous plane.
    fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..][..self.height * self.width]
    }
}

/// Bilinear resize to `out_h x out_w`, sampling at source coordinate
/// `(i + 0.5) * scale - 0.5` (clamped to the image), which keeps a
/// same-size resize bit-identical and never extrapolates outside the source
/// value range. Aspect ratio is not preserved; both axes stretch
/// independently.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize targets must be >= 1".into()));
    }
    let (in_h, in_w) = (img.height, img.width);
    let scale_y = in_h as f32 / out_h as f32;
    let scale_x = in_w as f32 / out_w as f32;
    // Precompute per-axis source indices and weights once.
    let axis = |out_n: usize, in_n: usize, scale: f32| -> Vec<(usize, usize, f32)> {
        (0..out_n)
            .map(|i| {
                let src = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (in_n - 1) as f32);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_n - 1);
                (lo, hi, src - lo as f32)
            })
            .collect()
    };
    let ys = axis(out_h, in_h, scale_y);
    let xs = axis(out_w, in_w, scale_x);
    let mut data = Vec::with_capacity(3 * out_h * out_w);
    for c in 0..3 {
        let plane = img.plane(c);
        for &(y0, y1, fy) in &ys {
            let row0 = &plane[y0 * in_w..][..in_w];
            let row1 = &plane[y1 * in_w..][..in_w];
            for &(x0, x1, fx) in &xs {
                let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
                let bot = row1[x0] + (row1[x1] - row1[x0]) * fx;
                data.push(top + (bot - top) * fy);
            }
        }
    }
    Ok(Image {
        height: out_h,
        width: out_w,
        data,
    })
}

/// Mirror left-right: column `j` maps to `width - 1 - j` in every channel.
pub fn horizontal_flip(img: &Image) -> Image {
    let mut out = img.clone();
    for c in 0..3 {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, x, img.get(c, y, img.width - 1 - x));
            }
        }
    }
    out
}

/// Extract the `size x size` window with top-left corner at (`top`, `left`).
pub fn crop(img: &Image, top: usize, left: usize, size: usize) -> Result<Image> {
    if top + size > img.height || left + size > img.width {
        return Err(Error::InvalidArgument(format!(
            "crop {size} at ({top}, {left}) exceeds {}x{}",
            img.height, img.width
        )));
    }
    let mut data = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let plane = img.plane(c);
        for y in top..top + size {
            data.extend_from_slice(&plane[y * img.width + left..][..size]);
        }
    }
    Ok(Image {
        height: size,
        width: size,
        data,
    })
}

/// Training augmentation: a uniformly random `size x size` crop, flipped
/// horizontally with probability one half. Draw order is fixed (row offset,
/// then column offset, then flip), so results are a pure function of the
/// RNG state.
pub fn random_crop_flip(img: &Image, size: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    if size > img.height || size > img.width {
        return Err(Error::InvalidArgument(format!(
            "crop {size} exceeds image {}x{}",
            img.height, img.width
        )));
    }
    let top = rng.gen_range(0..=img.height - size);
    let left = rng.gen_range(0..=img.width - size);
    let flip = rng.gen_bool(0.5);
    let view = crop(img, top, left, size)?;
    Ok(if flip { horizontal_flip(&view) } else { view })
}

/// Where a ten-crop view came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropInfo {
    pub top: usize,
    pub left: usize,
    pub flipped: bool,
}

/// The ten test-time views of one image: four corner crops and the center
/// crop, then the horizontal flip of each, in that fixed order.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub views: Vec<Image>,
    pub info: Vec<CropInfo>,
}

/// Build the ten-crop view set: offsets (0,0), (0,W-c), (H-c,0), (H-c,W-c),
/// then the center at (⌊(H-c)/2⌋, ⌊(W-c)/2⌋), then the five flips in the
/// same order.
pub fn ten_crop(img: &Image, crop_size: usize) -> Result<ViewSet> {
    let (h, w) = (img.height, img.width);
    if crop_size > h || crop_size > w {
        return Err(Error::InvalidArgument(format!(
            "crop {crop_size} exceeds image {h}x{w}"
        )));
    }
    let offsets = [
        (0, 0),
        (0, w - crop_size),
        (h - crop_size, 0),
        (h - crop_size, w - crop_size),
        ((h - crop_size) / 2, (w - crop_size) / 2),
    ];
    let mut views = Vec::with_capacity(10);
    let mut info = Vec::with_capacity(10);
    for &(top, left) in &offsets {
        views.push(crop(img, top, left, crop_size)?);
        info.push(CropInfo { top, left, flipped: false });
    }
    for i in 0..5 {
        views.push(horizontal_flip(&views[i]));
        info.push(CropInfo { flipped: true, ..info[i] });
    }
    Ok(ViewSet { views, info })
}

/// Subtract per-channel means, producing a `[3, H, W]` tensor ready to batch
/// into a network. No variance scaling.
pub fn normalize(img: &Image, channel_means: [f32; 3]) -> Tensor {
    let plane = img.height * img.width;
    let mut data = img.data.clone();
    for (c, chunk) in data.chunks_exact_mut(plane).enumerate() {
        for v in chunk {
            *v -= channel_means[c];
        }
    }
    Tensor::from_vec(&[3, img.height, img.width], data).expect("image data matches dims")
}

/// Read a binary "P6" PPM with maxval 255.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    // Header: "P6", whitespace-separated width, height, maxval, then a
    // single whitespace byte before the raw RGB triples.
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(bytes)? != "P6" {
        return Err("not a binary P6 image".into());
    }
    let width: usize = token(bytes)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(bytes)?.parse().map_err(|_| "bad height".to_string())?;
    let maxval = token(bytes)?;
    if maxval != "255" {
        return Err(format!("unsupported maxval {maxval}; only 255"));
    }
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    pos += 1; // exactly one whitespace byte separates header and data
    let need = 3 * width * height;
    let raw = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("expected {need} data bytes, file has {}", bytes.len() - pos.min(bytes.len())))?;
    // Interleaved RGB rows -> CHW planes.
    let plane = width * height;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        data[i] = px[0] as f32;
        data[plane + i] = px[1] as f32;
        data[2 * plane + i] = px[2] as f32;
    }
    Ok(Image { height, width, data })
}

/// Write a binary "P6" PPM with maxval 255. Values are rounded to the
/// nearest integer and clamped to `[0, 255]`; writing then reading is exact
/// for integer-valued images.
pub fn write_ppm(img: &Image, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io_err = |e| Error::io(path, e);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height).map_err(io_err)?;
    let plane = img.height * img.width;
    let mut raw = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            raw.push(img.data[c * plane + i].round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&raw).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Render a bank of first-layer convolution filters as one image: a
/// `ceil(sqrt(F))` × `ceil(sqrt(F))` grid of `k`×`k` tiles in row-major
/// order, separated by one-pixel black gutters (no outer border). Each
/// filter is min-max normalized to `[0, 255]` on its own (a constant filter
/// renders mid-gray); grid cells past the last filter stay black. The
/// filters must have three input channels so the tiles are literal RGB.
pub fn filter_grid(filters: &Tensor) -> Result<Image> {
    let dims = filters.dims();
    if dims.len() != 4 || dims[1] != 3 {
        return Err(Error::shape(
            "filter grid",
            "[filters, 3, k, k]",
            format!("{dims:?}"),
        ));
    }
    let (count, k) = (dims[0], dims[2]);
    if dims[3] != k {
        return Err(Error::shape("filter grid", "square kernels", format!("{dims:?}")));
    }
    let side = (count as f64).sqrt().ceil() as usize;
    let image_side = side * k + (side - 1);
    let mut img = Image::filled(image_side, image_side, [0.0; 3]);
    let per_filter = 3 * k * k;
    for f in 0..count {
        let block = &filters.data()[f * per_filter..(f + 1) * per_filter];
        let lo = block.iter().fold(f32::INFINITY, |a, &b| a.min(b));
        let hi = block.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let scale = |v: f32| {
            if lo == hi {
                128.0
            } else {
                (v - lo) / (hi - lo) * 255.0
            }
        };
        let (top, left) = ((f / side) * (k + 1), (f % side) * (k + 1));
        for c in 0..3 {
            for y in 0..k {
                for x in 0..k {
                    img.set(c, top + y, left + x, scale(block[c * k * k + y * k + x]));
                }
            }
        }
    }
    Ok(img)
}
