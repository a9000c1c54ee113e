//! Synthetic stand-in for coronal lung slices.
//!
//! Each image is an elliptical "lung" of textured tissue in which
//! low-attenuation blobs near -950 HU cover a fraction of the lung drawn from
//! the interval of the image's extent score. Outside the ellipse the
//! preprocessing fill applies. Nuisance factors vary independently of the
//! score: texture contrast, mean lung intensity, lung size, bright vessels,
//! and a few percent of small dark spots that the score does not count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess, BinaryMask, CropBox, RawImage};
use super::LabeledImage;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::sampling::ExtentScore;
use crate::tensor::Tensor;

/// Score probabilities, skewed towards 0 with about 13% above score 1.
pub const SCORE_PROBS: [f64; 6] = [0.73, 0.14, 0.06, 0.04, 0.02, 0.01];

pub const DEFAULT_HEIGHT: usize = 57;
pub const DEFAULT_WIDTH: usize = 125;
pub const MIN_IMAGES: usize = 10;

/// Tissue intensities are clamped to this range so that no healthy pixel
/// falls below the lesion threshold of -900 HU.
const TISSUE_RANGE_HU: (f64, f64) = (-885.0, -550.0);
const LESION_HU: f64 = -950.0;
const LESION_JITTER_HU: f64 = 25.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub score_probs: [f64; 6],
    /// Range of the per-image smooth texture amplitude, HU.
    pub texture_amplitude_hu: (f64, f64),
    /// Per-pixel white noise half-width, HU.
    pub pixel_noise_hu: f64,
    /// Range of the per-image mean lung intensity, HU. Tissue density is
    /// shifted to reach it as far as the tissue range allows, so overall
    /// brightness carries little information about the score.
    pub mean_lung_hu: (f64, f64),
    /// Lung semi-axes as a fraction of the half frame size.
    pub lung_extent: (f64, f64),
    /// Blob radius range, pixels.
    pub blob_radius: (f64, f64),
    /// Range of the fraction of lung covered by small low-attenuation spots
    /// that do not count towards the score.
    pub incidental_fraction: (f64, f64),
    /// Range of the number of bright vessel segments per image.
    pub vessels: (usize, usize),
    /// Vessel intensity range, HU.
    pub vessel_hu: (f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            score_probs: SCORE_PROBS,
            texture_amplitude_hu: (5.0, 40.0),
            pixel_noise_hu: 12.0,
            mean_lung_hu: (-900.0, -700.0),
            lung_extent: (0.75, 0.97),
            blob_radius: (1.5, 5.0),
            incidental_fraction: (0.0, 0.04),
            vessels: (5, 10),
            vessel_hu: (-500.0, -100.0),
        }
    }
}

/// One generated image with the generator's own ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub image: LabeledImage,
    pub lung: BinaryMask,
    /// Scored low-attenuation area.
    pub lesion: BinaryMask,
    /// Unscored low-attenuation spots.
    pub incidental: BinaryMask,
    pub target_fraction: f64,
}

impl SyntheticSample {
    pub fn lesion_fraction(&self) -> f64 {
        self.lesion.count() as f64 / self.lung.count() as f64
    }
}

/// `n` labelled images of `height x width`, bit-identical for a given seed.
pub fn generate_synthetic(n: usize, seed: u64, height: usize, width: usize) -> Result<Vec<LabeledImage>> {
    Ok(generate_samples(n, seed, height, width, &SyntheticConfig::default())?
        .into_iter()
        .map(|s| s.image)
        .collect())
}

pub fn generate_samples(
    n: usize,
    seed: u64,
    height: usize,
    width: usize,
    config: &SyntheticConfig,
) -> Result<Vec<SyntheticSample>> {
    if n < MIN_IMAGES {
        return Err(Error::usage(format!("need at least {MIN_IMAGES} images, got {n}")));
    }
    if height < 8 || width < 8 {
        return Err(Error::usage(format!("image size {height}x{width} is too small")));
    }
    let score_dist = WeightedIndex::new(config.score_probs)
        .map_err(|e| Error::config(format!("invalid score distribution: {e}")))?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(rng::derive_seed(seed, i as u64));
            let score = ExtentScore::new(score_dist.sample(&mut rng) as u8)?;
            synthesize(format!("img{i:05}"), score, height, width, config, &mut rng)
        })
        .collect()
}

/// Generates one image with a given score.
pub fn synthesize(
    id: String,
    score: ExtentScore,
    height: usize,
    width: usize,
    config: &SyntheticConfig,
    rng: &mut StreamRng,
) -> Result<SyntheticSample> {
    let lung = lung_mask(height, width, config, rng);
    let (lo, hi) = score.fraction_range();
    let target_fraction = if score.value() == 0 { 0.0 } else { rng.gen_range(lo..=hi) };
    let lesion = place_blobs(&lung, target_fraction, config.blob_radius, rng);
    let incidental_fraction = rng.gen_range(config.incidental_fraction.0..=config.incidental_fraction.1);
    let incidental = place_blobs(&lung, incidental_fraction, (0.5, 1.5), rng);
    let dark = BinaryMask::from_fn(height, width, |r, c| lesion.get(r, c) || incidental.get(r, c));

    let amplitude = rng.gen_range(config.texture_amplitude_hu.0..=config.texture_amplitude_hu.1);
    let target_mean = rng.gen_range(config.mean_lung_hu.0..=config.mean_lung_hu.1);
    let texture = Texture::random(amplitude, height, width, rng);
    let vessels = draw_vessels(&lung, &dark, config, rng);
    let mut hu = Tensor::zeros(&[height, width]);
    let (mut lung_sum, mut tissue_count) = (0.0, 0usize);
    for (i, v) in hu.data_mut().iter_mut().enumerate() {
        let (r, c) = (i / width, i % width);
        let noise = rng.gen_range(-config.pixel_noise_hu..=config.pixel_noise_hu);
        let vessel = vessels[i];
        *v = if dark.get(r, c) {
            LESION_HU + rng.gen_range(-LESION_JITTER_HU..=LESION_JITTER_HU)
        } else if let Some(hu) = vessel {
            hu + noise
        } else {
            -800.0 + texture.at(r, c) + noise
        };
        if lung.get(r, c) {
            lung_sum += *v;
            tissue_count += usize::from(!dark.get(r, c) && vessel.is_none());
        }
    }
    let offset = if tissue_count == 0 {
        0.0
    } else {
        (target_mean * lung.count() as f64 - lung_sum) / tissue_count as f64
    };
    for (i, v) in hu.data_mut().iter_mut().enumerate() {
        if !dark.get(i / width, i % width) && vessels[i].is_none() {
            *v = (*v + offset).clamp(TISSUE_RANGE_HU.0, TISSUE_RANGE_HU.1);
        }
    }
    let raw = RawImage { hu, mask: lung.clone() };
    let pixels = preprocess(&raw, &CropBox::full(height, width))?;
    Ok(SyntheticSample {
        image: LabeledImage { id, score, pixels },
        lung,
        lesion,
        incidental,
        target_fraction,
    })
}

fn lung_mask(height: usize, width: usize, config: &SyntheticConfig, rng: &mut StreamRng) -> BinaryMask {
    let (lo, hi) = config.lung_extent;
    let ry = (height as f64 / 2.0) * rng.gen_range(lo..=hi);
    let rx = (width as f64 / 2.0) * rng.gen_range(lo..=hi);
    let cy = (height as f64 - 1.0) / 2.0 + rng.gen_range(-0.05..=0.05) * height as f64;
    let cx = (width as f64 - 1.0) / 2.0 + rng.gen_range(-0.05..=0.05) * width as f64;
    BinaryMask::from_fn(height, width, |r, c| {
        let dy = (r as f64 - cy) / ry;
        let dx = (c as f64 - cx) / rx;
        dy * dy + dx * dx <= 1.0
    })
}

/// Marks exactly `ceil(fraction * lung pixels)` lung pixels as lesion, grown
/// from random disks.
fn place_blobs(lung: &BinaryMask, fraction: f64, radius: (f64, f64), rng: &mut StreamRng) -> BinaryMask {
    let (h, w) = (lung.height(), lung.width());
    let lung_pixels: Vec<usize> = (0..h * w).filter(|&i| lung.data()[i]).collect();
    let target = (fraction * lung_pixels.len() as f64).ceil() as usize;
    let mut lesion = vec![false; h * w];
    let mut marked = 0;
    let mut disks = 0;
    while marked < target && disks < 20_000 {
        disks += 1;
        let center = lung_pixels[rng.gen_range(0..lung_pixels.len())];
        let (cy, cx) = ((center / w) as f64, (center % w) as f64);
        let radius = rng.gen_range(radius.0..=radius.1);
        let reach = radius.ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if marked == target {
                    break;
                }
                let (r, c) = (cy as isize + dy, cx as isize + dx);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                if ((dy * dy + dx * dx) as f64) > radius * radius {
                    continue;
                }
                let i = r as usize * w + c as usize;
                if lung.data()[i] && !lesion[i] {
                    lesion[i] = true;
                    marked += 1;
                }
            }
        }
    }
    // Random disks rarely reach the last few percent of a nearly full lung.
    for &i in &lung_pixels {
        if marked == target {
            break;
        }
        if !lesion[i] {
            lesion[i] = true;
            marked += 1;
        }
    }
    BinaryMask::new(h, w, lesion).expect("dimensions match the lung mask")
}

/// Bright line segments, one to two pixels wide, crossing lung tissue but not
/// low-attenuation areas. Returns the vessel intensity per pixel.
fn draw_vessels(
    lung: &BinaryMask,
    dark: &BinaryMask,
    config: &SyntheticConfig,
    rng: &mut StreamRng,
) -> Vec<Option<f64>> {
    let (h, w) = (lung.height(), lung.width());
    let mut out = vec![None; h * w];
    let count = rng.gen_range(config.vessels.0..=config.vessels.1);
    for _ in 0..count {
        let hu = rng.gen_range(config.vessel_hu.0..=config.vessel_hu.1);
        let (mut y, mut x) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let mut angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let length = rng.gen_range(5..(h.min(w)));
        let thick = rng.gen_bool(0.5);
        for _ in 0..length {
            for (dy, dx) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)].iter().take(if thick { 4 } else { 1 }) {
                let (r, c) = ((y + dy) as isize, (x + dx) as isize);
                if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                    let (r, c) = (r as usize, c as usize);
                    if lung.get(r, c) && !dark.get(r, c) {
                        out[r * w + c] = Some(hu);
                    }
                }
            }
            angle += rng.gen_range(-0.3..0.3);
            y += angle.sin();
            x += angle.cos();
        }
    }
    out
}

/// Smooth random field: a sum of a few plane waves.
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn random(amplitude: f64, height: usize, width: usize, rng: &mut StreamRng) -> Self {
        const WAVES: usize = 4;
        let waves = (0..WAVES)
            .map(|_| {
                let fy = rng.gen_range(1.0..6.0) * std::f64::consts::TAU / height as f64;
                let fx = rng.gen_range(1.0..12.0) * std::f64::consts::TAU / width as f64;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (amplitude / WAVES as f64 * 2.0, fy, fx, phase)
            })
            .collect();
        Self { waves }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.waves
            .iter()
            .map(|&(a, fy, fx, p)| a * (fy * r as f64 + fx * c as f64 + p).sin())
            .sum()
    }
}
