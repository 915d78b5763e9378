//! Procedural coloured-shape images for hermetic training tests.
//!
//! Each image is a grey background with one filled shape whose colour
//! identifies the class. Colour and per-pixel noise are jittered, so the
//! classes separate by channel statistics but not by any single pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::InMemoryDataset;
use super::image::RgbImage;
use super::labels::{ClassId, LabelRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapesTask {
    pub name: String,
    pub class_names: Vec<String>,
    /// Mean fill colour per class.
    pub palette: Vec<[f32; 3]>,
    /// Uniform jitter applied to each channel of the fill colour, per image.
    pub color_jitter: f32,
    /// Uniform per-pixel noise amplitude.
    pub pixel_noise: f32,
}

impl ShapesTask {
    /// Red, green and blue shapes.
    pub fn primaries() -> Self {
        ShapesTask {
            name: "primaries".into(),
            class_names: vec!["red".into(), "green".into(), "blue".into()],
            palette: vec![[0.85, 0.15, 0.15], [0.15, 0.85, 0.15], [0.15, 0.15, 0.85]],
            color_jitter: 0.1,
            pixel_noise: 0.1,
        }
    }

    /// Pink, lime and sky-blue shapes: paler, noisier relatives of the
    /// primaries.
    pub fn pastels() -> Self {
        ShapesTask {
            name: "pastels".into(),
            class_names: vec!["pink".into(), "lime".into(), "sky".into()],
            palette: vec![[0.8, 0.45, 0.5], [0.5, 0.8, 0.4], [0.4, 0.55, 0.85]],
            color_jitter: 0.12,
            pixel_noise: 0.2,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.palette.len()
    }

    pub fn class_name_refs(&self) -> Vec<&str> {
        self.class_names.iter().map(String::as_str).collect()
    }

    /// `per_class` images of every class at `resolution`, interleaved by class.
    pub fn generate(&self, per_class: usize, resolution: usize, seed: u64) -> InMemoryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = InMemoryDataset::new();
        for i in 0..per_class {
            for (c, color) in self.palette.iter().enumerate() {
                let img = self.draw(color, resolution, &mut rng);
                out.push(format!("{}_{}_{i:04}", self.name, self.class_names[c]), img, c);
            }
        }
        out
    }

    /// Label records matching [`generate`](Self::generate), for splitting.
    pub fn records(data: &InMemoryDataset) -> Vec<LabelRecord> {
        data.ids()
            .iter()
            .zip(data.labels())
            .map(|(id, &c)| LabelRecord {
                image_id: id.clone(),
                class_id: ClassId(c),
            })
            .collect()
    }

    fn draw(&self, color: &[f32; 3], res: usize, rng: &mut ChaCha8Rng) -> RgbImage {
        let bg: f32 = rng.gen_range(0.35..0.65);
        let fill: Vec<f32> = color
            .iter()
            .map(|&v| v + rng.gen_range(-self.color_jitter..=self.color_jitter))
            .collect();
        let r = res as f32;
        let size = rng.gen_range(0.3 * r..0.6 * r);
        let cx = rng.gen_range(size / 2.0..=r - size / 2.0);
        let cy = rng.gen_range(size / 2.0..=r - size / 2.0);
        let shape = rng.gen_range(0..3);
        let inside = |x: f32, y: f32| {
            let (dx, dy) = (x - cx, y - cy);
            let h = size / 2.0;
            match shape {
                0 => dx * dx + dy * dy <= h * h,
                1 => dx.abs() <= h && dy.abs() <= h,
                _ => dy <= h && dy >= -h && dx.abs() <= (dy + h) / 2.0,
            }
        };
        let plane = res * res;
        let mut data = vec![0.0f32; 3 * plane];
        for y in 0..res {
            for x in 0..res {
                let on = inside(x as f32 + 0.5, y as f32 + 0.5);
                for c in 0..3 {
                    let base = if on { fill[c] } else { bg };
                    let v = base + rng.gen_range(-self.pixel_noise..=self.pixel_noise);
                    data[c * plane + y * res + x] = v.clamp(0.0, 1.0);
                }
            }
        }
        RgbImage {
            width: res,
            height: res,
            data,
        }
    }
}
