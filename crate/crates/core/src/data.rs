//! Datasets: raw tensor files, PNG I/O, directory loading, flip augmentation
//! and a synthetic two-domain shapes dataset.
//!
//! Images are `[C, H, W]` tensors with values in `[0, 1]`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};
use crate::nets::checkpoint::write_atomic;
use crate::tensor::Tensor;
use crate::Rng;

const RAW_MAGIC: &[u8; 4] = b"UGRT";
const RAW_VERSION: u16 = 1;
const DTYPE_F64_LE: u8 = 1;

/// Encode a tensor as: magic, u16 version, u8 dtype tag, u8 ndim, ndim × u64
/// dims, then little-endian f64 payload.
pub fn encode_raw(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.ndim() + 8 * t.numel());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    out.push(DTYPE_F64_LE);
    out.push(t.ndim() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let bad = |why: &str| Error::format(origin, why.to_string());
    if bytes.len() < 8 || &bytes[..4] != RAW_MAGIC {
        return Err(bad("not a raw tensor file"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RAW_VERSION {
        return Err(bad(&format!("unsupported raw tensor version {version}")));
    }
    if bytes[6] != DTYPE_F64_LE {
        return Err(bad(&format!("unsupported dtype tag {}", bytes[6])));
    }
    let ndim = bytes[7] as usize;
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let shape: Vec<usize> = bytes[8..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflows"))?;
    if numel.checked_mul(8) != Some(bytes.len() - header) {
        return Err(bad("payload length does not match shape"));
    }
    let data = bytes[header..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(shape, data)
}

pub fn save_raw(path: &Path, t: &Tensor) -> Result<()> {
    write_atomic(path, &encode_raw(t))
}

pub fn load_raw(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, path)
}

/// Decode a PNG to `[C, H, W]` in `[0, 1]`. Gray images give one channel,
/// colour images three; alpha is dropped.
pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    if color.has_color() {
        let buf = img.into_rgb16();
        let raw = buf.as_raw();
        Ok(Tensor::from_fn([3, h, w], |i| {
            let (c, p) = (i / (h * w), i % (h * w));
            raw[p * 3 + c] as f64 / 65535.0
        }))
    } else if color.bits_per_pixel() / color.channel_count() as u16 > 8 {
        let buf = img.into_luma16();
        Ok(Tensor::new(vec![1, h, w], buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect())?)
    } else {
        let buf = img.into_luma8();
        Ok(Tensor::new(vec![1, h, w], buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect())?)
    }
}

/// Encode a `[1|3, H, W]` tensor as an 8-bit PNG, clamping to `[0, 1]`.
pub fn save_png(path: &Path, t: &Tensor) -> Result<()> {
    let (c, h, w) = chw(t)?;
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let hw = h * w;
    let mut bytes = Vec::new();
    let color = match c {
        1 => {
            bytes.extend(t.data().iter().map(|&v| q(v)));
            image::ExtendedColorType::L8
        }
        3 => {
            for p in 0..hw {
                bytes.extend((0..3).map(|ch| q(t.data()[ch * hw + p])));
            }
            image::ExtendedColorType::Rgb8
        }
        _ => return Err(Error::Dimension(format!("PNG export needs 1 or 3 channels, got {c}"))),
    };
    let mut encoded = Vec::new();
    image::ImageEncoder::write_image(
        image::codecs::png::PngEncoder::new(&mut encoded),
        &bytes,
        w as u32,
        h as u32,
        color,
    )
    .map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    write_atomic(path, &encoded)
}

/// Rescale to `[0, 1]` by the tensor's own range, for viewing uncertainty maps.
pub fn normalize_for_display(t: &Tensor) -> Tensor {
    let lo = t.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        t.map(|v| (v - lo) / (hi - lo))
    } else {
        Tensor::zeros(t.shape().to_vec())
    }
}

fn chw(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        [1, c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Dimension(format!("expected a [C, H, W] image, got {:?}", t.shape()))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Raw,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Raw => "rt",
        }
    }

    pub fn of_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(ImageFormat::Png),
            "rt" => Some(ImageFormat::Raw),
            _ => None,
        }
    }
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let t = match ImageFormat::of_path(path) {
        Some(ImageFormat::Png) => load_png(path)?,
        Some(ImageFormat::Raw) => load_raw(path)?,
        None => return Err(Error::format(path, "unknown image extension (expected .png or .rt)")),
    };
    let t = if t.ndim() == 2 {
        let s = t.shape().to_vec();
        t.reshape([1, s[0], s[1]])?
    } else {
        t
    };
    chw(&t).map_err(|_| Error::format(path, format!("image tensor has shape {:?}", t.shape())))?;
    Ok(t)
}

pub fn save_image(path: &Path, t: &Tensor) -> Result<()> {
    match ImageFormat::of_path(path) {
        Some(ImageFormat::Png) => save_png(path, t),
        Some(ImageFormat::Raw) => save_raw(path, t),
        None => Err(Error::format(path, "unknown image extension (expected .png or .rt)")),
    }
}

/// Image files (`.png`, `.rt`) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && ImageFormat::of_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Nearest,
    Bilinear,
}

/// Target size applied while loading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resize {
    pub height: usize,
    pub width: usize,
    pub filter: Filter,
}

/// Resize a `[C, H, W]` image with half-pixel-centre sampling.
pub fn resize(t: &Tensor, height: usize, width: usize, filter: Filter) -> Result<Tensor> {
    let (c, h, w) = chw(t)?;
    if height == 0 || width == 0 || h == 0 || w == 0 {
        return Err(Error::Dimension("resize to or from an empty image".into()));
    }
    let d = t.data();
    let src = |o: usize, n_in: usize, n_out: usize| ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
    Ok(Tensor::from_fn([c, height, width], |i| {
        let (ch, y, x) = (i / (height * width), (i / width) % height, i % width);
        let plane = &d[ch * h * w..(ch + 1) * h * w];
        let (sy, sx) = (src(y, h, height), src(x, w, width));
        match filter {
            Filter::Nearest => {
                let ny = ((y as f64 + 0.5) * h as f64 / height as f64).floor().min(h as f64 - 1.0) as usize;
                let nx = ((x as f64 + 0.5) * w as f64 / width as f64).floor().min(w as f64 - 1.0) as usize;
                plane[ny * w + nx]
            }
            Filter::Bilinear => {
                let (y0, x0) = ((sy.floor() as usize).min(h - 1), (sx.floor() as usize).min(w - 1));
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                top * (1.0 - fy) + bottom * fy
            }
        }
    }))
}

/// Two independently sampled image sets of a common `[C, H, W]` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedDataset {
    pub domain_a: Vec<Tensor>,
    pub domain_b: Vec<Tensor>,
}

impl UnpairedDataset {
    pub fn new(domain_a: Vec<Tensor>, domain_b: Vec<Tensor>) -> Result<Self> {
        let ds = Self { domain_a, domain_b };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain_a.is_empty() || self.domain_b.is_empty() {
            return Err(Error::Data("both domains need at least one image".into()));
        }
        let shape = self.domain_a[0].shape();
        chw(&self.domain_a[0])?;
        for (i, t) in self.domain_a.iter().chain(&self.domain_b).enumerate() {
            if t.shape() != shape {
                return Err(Error::Data(format!("image {i} has shape {:?}, expected {shape:?}", t.shape())));
            }
            if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Data(format!("image {i} has pixels outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// `(C, H, W)`.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.domain_a[0].shape();
        (s[0], s[1], s[2])
    }
}

/// Inputs with their ground-truth translations, aligned by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

fn load_domain(dir: &Path, resize_to: Option<Resize>) -> Result<Vec<Tensor>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::Data(format!("{} contains no .png or .rt images", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let t = load_image(p)?;
            match resize_to {
                Some(r) => resize(&t, r.height, r.width, r.filter),
                None => Ok(t),
            }
        })
        .collect()
}

/// Load `dir/domainA` and `dir/domainB`.
pub fn load_dataset(dir: &Path, resize_to: Option<Resize>) -> Result<UnpairedDataset> {
    let a = load_domain(&dir.join("domainA"), resize_to)?;
    let b = load_domain(&dir.join("domainB"), resize_to)?;
    UnpairedDataset::new(a, b)
}

/// Load `dir/domainA` and `dir/domainB` as index-aligned pairs (sorted names).
pub fn load_paired(dir: &Path) -> Result<PairedDataset> {
    let a = load_domain(&dir.join("domainA"), None)?;
    let b = load_domain(&dir.join("domainB"), None)?;
    if a.len() != b.len() {
        return Err(Error::Data(format!("paired set has {} inputs but {} targets", a.len(), b.len())));
    }
    UnpairedDataset::new(a.clone(), b.clone())?;
    Ok(PairedDataset { inputs: a, targets: b })
}

/// Write images as `dir/{prefix}{index:04}.{ext}`.
pub fn save_images(dir: &Path, images: &[Tensor], format: ImageFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let path = dir.join(format!("{i:04}.{}", format.extension()));
            save_image(&path, t)?;
            Ok(path)
        })
        .collect()
}

pub fn save_dataset(dir: &Path, a: &[Tensor], b: &[Tensor], format: ImageFormat) -> Result<()> {
    save_images(&dir.join("domainA"), a, format)?;
    save_images(&dir.join("domainB"), b, format)?;
    Ok(())
}

pub fn flip_horizontal(t: &Tensor) -> Result<Tensor> {
    let (_, _, w) = chw(t)?;
    let d = t.data();
    Tensor::new(t.shape().to_vec(), (0..d.len()).map(|i| d[i - i % w + (w - 1 - i % w)]).collect())
}

pub fn flip_vertical(t: &Tensor) -> Result<Tensor> {
    let (_, h, w) = chw(t)?;
    let d = t.data();
    Tensor::new(
        t.shape().to_vec(),
        (0..d.len())
            .map(|i| {
                let (plane, y, x) = (i / (h * w), (i / w) % h, i % w);
                d[plane * h * w + (h - 1 - y) * w + x]
            })
            .collect(),
    )
}

/// Independent fair-coin horizontal and vertical flips.
pub fn augment_flip(t: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    let (flip_h, flip_v) = (rng.random::<bool>(), rng.random::<bool>());
    let mut out = t.clone();
    if flip_h {
        out = flip_horizontal(&out)?;
    }
    if flip_v {
        out = flip_vertical(&out)?;
    }
    Ok(out)
}

/// Gray levels used for filled shapes; background is 0.
pub const SHAPE_LEVELS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0];

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
        }
    }

    fn random(rng: &mut Rng, size: usize) -> Self {
        let s = size as f64;
        let (lo, hi) = (s / 8.0, s / 2.0);
        let (hy, hx) = (rng.random_range(lo..hi) / 2.0, rng.random_range(lo..hi) / 2.0);
        let (cy, cx) = (rng.random_range(hy..s - hy), rng.random_range(hx..s - hx));
        if rng.random::<bool>() {
            Shape::Rect { y0: cy - hy, x0: cx - hx, y1: cy + hy, x1: cx + hx }
        } else {
            Shape::Ellipse { cy, cx, ry: hy, rx: hx }
        }
    }
}

/// Label-map-like scene: 1–3 random shapes painted over a zero background.
fn shape_scene(rng: &mut Rng, size: usize) -> Vec<f64> {
    let n_shapes = rng.random_range(1..=3);
    let shapes: Vec<(Shape, f64)> = (0..n_shapes)
        .map(|_| (Shape::random(rng, size), SHAPE_LEVELS[rng.random_range(0..SHAPE_LEVELS.len())]))
        .collect();
    let mut img = vec![0.0; size * size];
    for (shape, level) in &shapes {
        for y in 0..size {
            for x in 0..size {
                if shape.contains(y as f64 + 0.5, x as f64 + 0.5) {
                    img[y * size + x] = *level;
                }
            }
        }
    }
    img
}

/// Region boundaries of a scene: 1 where a 4-neighbour differs, else 0.
fn edges(scene: &[f64], size: usize) -> Vec<f64> {
    let at = |y: usize, x: usize| scene[y * size + x];
    (0..size * size)
        .map(|i| {
            let (y, x) = (i / size, i % size);
            let v = at(y, x);
            let differs = (y > 0 && at(y - 1, x) != v)
                || (y + 1 < size && at(y + 1, x) != v)
                || (x > 0 && at(y, x - 1) != v)
                || (x + 1 < size && at(y, x + 1) != v);
            if differs {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn image(size: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![1, size, size], data).expect("size² pixels")
}

/// Domain A: filled shapes on ≤ 4 gray levels. Domain B: edge renderings of
/// separately drawn scenes, so the two domains share no pairs.
pub fn synth_shapes_dataset(n_per_domain: usize, size: usize, seed: u64) -> Result<UnpairedDataset> {
    if n_per_domain == 0 || size < 8 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs n >= 1 and size >= 8, got n = {n_per_domain}, size = {size}"
        )));
    }
    let mut rng_a = Rng::seed_from_u64(seed);
    rng_a.set_stream(1);
    let mut rng_b = Rng::seed_from_u64(seed);
    rng_b.set_stream(2);
    let a = (0..n_per_domain).map(|_| image(size, shape_scene(&mut rng_a, size))).collect();
    let b = (0..n_per_domain).map(|_| image(size, edges(&shape_scene(&mut rng_b, size), size))).collect();
    UnpairedDataset::new(a, b)
}

/// Scenes paired with their own edge renderings, for A→B evaluation.
pub fn synth_paired_dataset(n: usize, size: usize, seed: u64) -> Result<PairedDataset> {
    if n == 0 || size < 8 {
        return Err(Error::InvalidArgument(format!("paired synthetic set needs n >= 1 and size >= 8, got {n}, {size}")));
    }
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let scenes: Vec<Vec<f64>> = (0..n).map(|_| shape_scene(&mut rng, size)).collect();
    Ok(PairedDataset {
        targets: scenes.iter().map(|s| image(size, edges(s, size))).collect(),
        inputs: scenes.into_iter().map(|s| image(size, s)).collect(),
    })
}
