//! Decoding, resizing, augmentation and normalization of `[3, H, W]` images.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel statistics of the large-corpus pretraining set the backbone
/// weights usually come from.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

pub const DEFAULT_RESOLUTION: usize = 224;

/// Planar RGB pixels in `[0, 1]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(
                "RgbImage::new",
                format!("{} values for a {width}x{height} RGB image", data.len()),
            ));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(self.data.clone(), &[3, self.height, self.width]).expect("length checked on construction")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        match t.shape() {
            &[3, h, w] => RgbImage::new(w, h, t.to_vec()),
            s => Err(Error::shape("RgbImage::from_tensor", format!("expected [3, H, W], got {s:?}"))),
        }
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Decodes any supported raster format into `[0, 1]` RGB.
pub fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let rgb = decoded.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.into_raw();
    let mut data = vec![0.0f32; 3 * w * h];
    for (p, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + p] = px[c].clamp(0.0, 1.0);
        }
    }
    RgbImage::new(w, h, data)
}

/// Decodes `path` and resizes it to `resolution x resolution`.
pub fn load_image(path: &Path, resolution: usize) -> Result<Tensor<f32>> {
    let img = decode_rgb(path)?;
    Ok(resize_bilinear(&img, resolution, resolution)?.to_tensor())
}

/// Bilinear resampling with half-pixel centres and edge clamping.
///
/// Output pixel `o` samples source coordinate `(o + 0.5) * in / out - 0.5`.
/// No antialiasing filter is applied when shrinking.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> Result<RgbImage> {
    if out_w == 0 || out_h == 0 || img.width == 0 || img.height == 0 {
        return Err(Error::contract("cannot resize to or from an empty image"));
    }
    if (out_w, out_h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let axis = |out: usize, input: usize| -> Vec<(usize, usize, f32)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(input - 1);
                let i1 = (i0 + 1).min(input - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = axis(out_w, img.width);
    let ys = axis(out_h, img.height);
    let mut data = Vec::with_capacity(3 * out_w * out_h);
    for c in 0..3 {
        for &(y0, y1, wy) in &ys {
            for &(x0, x1, wx) in &xs {
                let top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                let bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                data.push(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    RgbImage::new(out_w, out_h, data)
}

/// Random perturbations applied to training images only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Rotation angle drawn uniformly from `[-deg, deg]`.
    pub rotation_deg: f64,
    /// Additive brightness offset drawn uniformly from `[-delta, delta]`.
    pub brightness_delta: f64,
}

impl AugmentSpec {
    pub const NONE: AugmentSpec = AugmentSpec {
        hflip_prob: 0.0,
        vflip_prob: 0.0,
        rotation_deg: 0.0,
        brightness_delta: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::NONE
    }
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            rotation_deg: 10.0,
            brightness_delta: 0.1,
        }
    }
}

pub fn hflip(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for row in out.data.chunks_exact_mut(img.width) {
        row.reverse();
    }
    out
}

pub fn vflip(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(img.data.len());
    for plane in img.data.chunks_exact(w * h) {
        for y in (0..h).rev() {
            data.extend_from_slice(&plane[y * w..(y + 1) * w]);
        }
    }
    RgbImage { data, ..*img }
}

/// Rotates about the image centre, filling uncovered pixels with black.
pub fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut data = vec![0.0f32; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            // inverse map: rotate the output coordinate back by -angle
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (wx, wy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for c in 0..3 {
                let top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                let bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                data[(c * h + y) * w + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    RgbImage { data, ..*img }
}

/// Adds `delta` to every value and clamps into `[0, 1]`.
pub fn shift_brightness(img: &RgbImage, delta: f32) -> RgbImage {
    let data = img.data.iter().map(|v| (v + delta).clamp(0.0, 1.0)).collect();
    RgbImage { data, ..*img }
}

/// Applies flips, rotation and brightness jitter in that order.
///
/// Random draws happen only for enabled perturbations, so the identity spec
/// consumes nothing from `rng`.
pub fn augment(img: &RgbImage, spec: &AugmentSpec, rng: &mut impl Rng) -> RgbImage {
    let mut out = img.clone();
    if spec.hflip_prob > 0.0 && rng.gen_bool(spec.hflip_prob.min(1.0)) {
        out = hflip(&out);
    }
    if spec.vflip_prob > 0.0 && rng.gen_bool(spec.vflip_prob.min(1.0)) {
        out = vflip(&out);
    }
    if spec.rotation_deg > 0.0 {
        let angle = rng.gen_range(-spec.rotation_deg..=spec.rotation_deg);
        out = rotate(&out, angle);
    }
    if spec.brightness_delta > 0.0 {
        let d = rng.gen_range(-spec.brightness_delta..=spec.brightness_delta) as f32;
        out = shift_brightness(&out, d);
    }
    out
}

/// Per-channel affine normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    pub fn imagenet() -> Self {
        Normalization {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.std.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::contract(format!("normalization std must be positive, got {s}")));
        }
        Ok(())
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Self::imagenet()
    }
}

/// `(x - mean[c]) / std[c]` for a `[3, H, W]` tensor.
pub fn normalize(img: &Tensor<f32>, mean: [f32; 3], std: [f32; 3]) -> Result<Tensor<f32>> {
    let norm = Normalization { mean, std };
    norm.validate()?;
    let plane = match img.shape() {
        &[3, h, w] => h * w,
        s => return Err(Error::shape("normalize", format!("expected [3, H, W], got {s:?}"))),
    };
    let data = normalize_values(img.data(), plane, &norm);
    Tensor::from_vec(data, img.shape())
}

pub(crate) fn normalize_values(data: &[f32], plane: usize, norm: &Normalization) -> Vec<f32> {
    data.iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i / plane;
            (v - norm.mean[c]) / norm.std[c]
        })
        .collect()
}
