//! Synthetic image-group generator: every group shares one colored shape
//! class across its images, each image adds its own distractor shapes on a
//! varied background. Ground truth covers the common shape only, while the
//! bundled saliency maps cover all shapes, mimicking a single-image
//! saliency detector that cannot tell common objects from distractors.

use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::imagio::{save_mask_png, save_rgb_png, save_scalar_map_png, PixelMask, RgbImage, ScalarMap};

#[derive(Debug, Clone, Copy)]
pub enum ShapeKind {
    Circle,
    Square,
    Diamond,
    Triangle,
}

impl ShapeKind {
    fn from_index(i: usize) -> Self {
        match i % 4 {
            0 => ShapeKind::Circle,
            1 => ShapeKind::Square,
            2 => ShapeKind::Diamond,
            _ => ShapeKind::Triangle,
        }
    }

    fn contains(&self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            ShapeKind::Circle => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
            ShapeKind::Diamond => dx.abs() + dy.abs() <= r,
            ShapeKind::Triangle => {
                // upward triangle inscribed in the radius box
                dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    r: f64,
    color: [u8; 3],
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub image_count: usize,
    pub distractors_per_image: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { width: 128, height: 128, image_count: 6, distractors_per_image: 1, seed: 0 }
    }
}

pub struct SynthImage {
    pub image: RgbImage,
    pub ground_truth: PixelMask,
    pub saliency: ScalarMap,
}

pub struct SynthGroup {
    pub name: String,
    pub images: Vec<SynthImage>,
}

// saturated object colors, distinct from the muted backgrounds below
const OBJECT_COLORS: [[u8; 3]; 8] = [
    [220, 40, 40],
    [40, 170, 40],
    [40, 70, 220],
    [230, 180, 30],
    [180, 40, 200],
    [30, 200, 200],
    [240, 120, 30],
    [120, 220, 60],
];

const BACKGROUND_COLORS: [[u8; 3]; 5] = [
    [150, 150, 155],
    [170, 160, 140],
    [135, 145, 160],
    [160, 170, 165],
    [145, 135, 130],
];

/// Deterministic group synthesis for a given spec.
pub fn generate_group(spec: &SynthSpec) -> SynthGroup {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let common_kind = ShapeKind::from_index(rng.gen_range(0..4));
    let common_color = OBJECT_COLORS[rng.gen_range(0..OBJECT_COLORS.len())];
    let base_r = (w.min(h) as f64) * rng.gen_range(0.14..0.20);

    let mut images = Vec::with_capacity(spec.image_count);
    for img_idx in 0..spec.image_count {
        let bg = BACKGROUND_COLORS[(spec.seed as usize + img_idx) % BACKGROUND_COLORS.len()];
        let r = base_r * rng.gen_range(0.85..1.15);
        let margin = r + 4.0;
        let cx = rng.gen_range(margin..w as f64 - margin);
        let cy = rng.gen_range(margin..h as f64 - margin);
        let common = Shape { kind: common_kind, cx, cy, r, color: common_color };

        let mut distractors = Vec::with_capacity(spec.distractors_per_image);
        for d in 0..spec.distractors_per_image {
            // a distractor color distinct from the common one
            let mut color_idx = rng.gen_range(0..OBJECT_COLORS.len());
            while OBJECT_COLORS[color_idx] == common_color {
                color_idx = (color_idx + 1) % OBJECT_COLORS.len();
            }
            let dr = base_r * rng.gen_range(0.6..0.9);
            let dm = dr + 3.0;
            // keep distractors clear of the common shape so the saliency
            // oracle components stay separable
            let (dx, dy) = loop {
                let x = rng.gen_range(dm..w as f64 - dm);
                let y = rng.gen_range(dm..h as f64 - dm);
                let dist = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                if dist > r + dr + 6.0 {
                    break (x, y);
                }
            };
            distractors.push(Shape {
                kind: ShapeKind::from_index(img_idx + d + 1),
                cx: dx,
                cy: dy,
                r: dr,
                color: OBJECT_COLORS[color_idx],
            });
        }

        let mut data = Vec::with_capacity(3 * w * h);
        let mut gt = Vec::with_capacity(w * h);
        let mut sal = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64;
                let fy = y as f64;
                let mut color = bg;
                // mild vertical shading keeps backgrounds non-constant
                let shade = ((y as i32 * 20) / h as i32 - 10) as i32;
                for c in &mut color {
                    *c = (*c as i32 + shade).clamp(0, 255) as u8;
                }
                let mut in_common = false;
                let mut in_any = false;
                if common.kind.contains(fx - common.cx, fy - common.cy, common.r) {
                    color = common.color;
                    in_common = true;
                    in_any = true;
                }
                for s in &distractors {
                    if s.kind.contains(fx - s.cx, fy - s.cy, s.r) {
                        color = s.color;
                        in_any = true;
                    }
                }
                let noise = rng.gen_range(-6i32..=6);
                for c in &mut color {
                    *c = (*c as i32 + noise).clamp(0, 255) as u8;
                }
                data.extend_from_slice(&color);
                gt.push(in_common);
                sal.push(if in_any { 1.0f32 } else { 0.0 });
            }
        }
        images.push(SynthImage {
            image: RgbImage::new(w, h, data).expect("sized buffer"),
            ground_truth: PixelMask { width: w, height: h, data: gt },
            saliency: ScalarMap::new(w, h, sal).expect("sized buffer"),
        });
    }
    SynthGroup { name: format!("group{:03}", spec.seed), images }
}

/// Writes a group in the on-disk dataset layout:
/// `<root>/<name>/{images,gt,iris}/imgNN.png`.
pub fn write_group_dataset(group: &SynthGroup, root: impl AsRef<Path>) -> Result<()> {
    let dir = root.as_ref().join(&group.name);
    for sub in ["images", "gt", "iris"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| crate::error::Error::Io {
            path: dir.join(sub),
            source: e,
        })?;
    }
    for (i, img) in group.images.iter().enumerate() {
        let stem = format!("img{i:02}");
        save_rgb_png(&img.image, dir.join("images").join(format!("{stem}.png")))?;
        save_mask_png(&img.ground_truth, dir.join("gt").join(format!("{stem}.png")))?;
        save_scalar_map_png(&img.saliency, dir.join("iris").join(format!("{stem}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let spec = SynthSpec { seed: 3, ..Default::default() };
        let a = generate_group(&spec);
        let b = generate_group(&spec);
        assert_eq!(a.images.len(), 6);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.image.data, y.image.data);
            assert_eq!(x.ground_truth.data, y.ground_truth.data);
        }
        for img in &a.images {
            let gt = img.ground_truth.count_ones();
            assert!(gt > 300, "common object too small: {gt}");
            let sal = img.saliency.values.iter().filter(|&&v| v > 0.5).count();
            assert!(sal > gt, "saliency must also cover distractors");
        }
    }

    #[test]
    fn dataset_layout_written() {
        let dir = tempfile::tempdir().unwrap();
        let group = generate_group(&SynthSpec { image_count: 2, seed: 1, ..Default::default() });
        write_group_dataset(&group, dir.path()).unwrap();
        let base = dir.path().join(&group.name);
        assert!(base.join("images/img00.png").exists());
        assert!(base.join("gt/img01.png").exists());
        assert!(base.join("iris/img00.png").exists());
    }
}
