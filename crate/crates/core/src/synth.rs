//! Synthetic tagged corpora with known ground truth.
//!
//! Each image is a background texture with one label patch (and sometimes a
//! second, smaller one). Backgrounds are shared across labels, but each label
//! favors one of them, the way tigers favor grass. Truth labels are the
//! rendered patches. With probability `noise` an image's tags get a wrong
//! label substituted, so the expected tag precision is `1 - noise`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageRecord, Split};
use crate::error::{Error, Result};

const LABEL_NAMES: [&str; 16] = [
    "tiger", "sunset", "flowers", "ocean", "car", "bird", "snow", "boat", "tree", "house", "horse", "fire", "leaf",
    "train", "fish", "rock",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub labels: usize,
    pub dev_per_label: usize,
    pub test_per_label: usize,
    /// Probability that an image's tags carry a substituted wrong label.
    pub noise: f64,
    /// Probability that a substituted tag is the true label's partner rather
    /// than a uniformly drawn wrong label. Labels come in partner pairs that
    /// share a favored background and differ mostly in texture.
    pub confusion: f64,
    /// Hue offset between partner labels, in degrees.
    pub partner_hue_gap: f64,
    pub backgrounds: usize,
    /// Probability that an image uses its label's favored background rather
    /// than a uniformly drawn one.
    pub context: f64,
    pub image_size: u32,
    /// Patch side range as fractions of the image side.
    pub patch_min: f64,
    pub patch_max: f64,
    /// Probability of a second, smaller patch of another label.
    pub extra_patch_prob: f64,
    /// Per-image color jitter applied to patches, in 8-bit units.
    pub color_jitter: u8,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            labels: 8,
            dev_per_label: 200,
            test_per_label: 100,
            noise: 0.45,
            confusion: 0.9,
            partner_hue_gap: 35.0,
            backgrounds: 1,
            context: 0.7,
            image_size: 64,
            patch_min: 0.3,
            patch_max: 0.6,
            extra_patch_prob: 0.1,
            color_jitter: 24,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labels < 2 {
            return Err(Error::Config("synthetic corpus needs at least 2 labels".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 1)", self.noise)));
        }
        if self.backgrounds == 0 || self.image_size < 16 {
            return Err(Error::Config("need at least one background and 16px images".into()));
        }
        if [self.context, self.confusion, self.extra_patch_prob]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::Config(
                "context, confusion and extra_patch_prob must lie in [0, 1]".into(),
            ));
        }
        if !(0.0 < self.patch_min && self.patch_min < self.patch_max && self.patch_max <= 1.0) {
            return Err(Error::Config("need 0 < patch_min < patch_max <= 1".into()));
        }
        Ok(())
    }
}

pub fn label_name(i: usize) -> String {
    LABEL_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("label{i:02}"))
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| ((t + m) * 255.0).round() as u8)
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Solid,
    HStripes(u32),
    VStripes(u32),
    Checker(u32),
}

impl Texture {
    fn pick(&self, x: u32, y: u32) -> bool {
        match *self {
            Texture::Solid => true,
            Texture::HStripes(p) => (y / p).is_multiple_of(2),
            Texture::VStripes(p) => (x / p).is_multiple_of(2),
            Texture::Checker(p) => (x / p + y / p).is_multiple_of(2),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Appearance {
    primary: [u8; 3],
    secondary: [u8; 3],
    texture: Texture,
}

/// The label each label is most often mistaken for.
pub fn partner(l: usize, labels: usize) -> usize {
    if l ^ 1 < labels {
        l ^ 1
    } else {
        l.saturating_sub(1)
    }
}

fn favored_background(l: usize, backgrounds: usize) -> usize {
    (l / 2) % backgrounds
}

fn label_appearance(l: usize, n: usize, hue_gap: f64) -> Appearance {
    let pairs = n.div_ceil(2);
    let hue = 360.0 * (l / 2) as f64 / pairs as f64 + hue_gap * (l % 2) as f64;
    let texture = match l % 4 {
        0 => Texture::Solid,
        1 => Texture::HStripes(2 + (l / 4) as u32 % 3),
        2 => Texture::VStripes(2 + (l / 4) as u32 % 3),
        _ => Texture::Checker(2 + (l / 4) as u32 % 3),
    };
    Appearance {
        primary: hsv(hue, 0.9, 0.95),
        secondary: hsv(hue + 35.0, 0.7, 0.55),
        texture,
    }
}

fn background_appearance(b: usize, n: usize) -> Appearance {
    let hue = 200.0 + 360.0 * b as f64 / n as f64;
    Appearance {
        primary: hsv(hue, 0.35, 0.75),
        secondary: hsv(hue, 0.3, 0.5),
        texture: if b.is_multiple_of(2) {
            Texture::HStripes(4)
        } else {
            Texture::Checker(4)
        },
    }
}

fn jitter(c: [u8; 3], d: [i16; 3]) -> [u8; 3] {
    [0, 1, 2].map(|i| (i16::from(c[i]) + d[i]).clamp(0, 255) as u8)
}

struct Patch {
    label: usize,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    shift: [i16; 3],
}

struct Job {
    primary: usize,
    split: Split,
}

struct Rendered {
    record: ImageRecord,
    image: RgbImage,
}

fn render(index: usize, job: &Job, cfg: &SyntheticConfig, seed: u64) -> Rendered {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let size = cfg.image_size;
    let b = if rng.random_bool(cfg.context) {
        favored_background(job.primary, cfg.backgrounds)
    } else {
        rng.random_range(0..cfg.backgrounds)
    };
    let bg = background_appearance(b, cfg.backgrounds);

    let patch = |label: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        let w = ((f64::from(size) * rng.random_range(lo..hi)) as u32).max(2);
        let h = ((f64::from(size) * rng.random_range(lo..hi)) as u32).max(2);
        let x0 = rng.random_range(0..=size - w);
        let y0 = rng.random_range(0..=size - h);
        let j = i16::from(cfg.color_jitter);
        let shift = [0; 3].map(|_: i16| if j == 0 { 0 } else { rng.random_range(-j..=j) });
        Patch {
            label,
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
            shift,
        }
    };
    let mut patches = vec![patch(job.primary, cfg.patch_min, cfg.patch_max, &mut rng)];
    if rng.random_bool(cfg.extra_patch_prob) {
        let mut other = rng.random_range(0..cfg.labels - 1);
        if other >= job.primary {
            other += 1;
        }
        patches.push(patch(other, cfg.patch_min * 0.6, cfg.patch_max * 0.6, &mut rng));
    }

    let mut img = RgbImage::new(size, size);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let mut color = if bg.texture.pick(x, y) {
            bg.primary
        } else {
            bg.secondary
        };
        for p in &patches {
            if x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1 {
                let a = label_appearance(p.label, cfg.labels, cfg.partner_hue_gap);
                let c = if a.texture.pick(x - p.x0, y - p.y0) {
                    a.primary
                } else {
                    a.secondary
                };
                color = jitter(c, p.shift);
            }
        }
        *px = Rgb(color);
    }

    let truth: BTreeSet<usize> = patches.iter().map(|p| p.label).collect();
    let mut tags = truth.clone();
    if rng.random_bool(cfg.noise) {
        let victims: Vec<usize> = tags.iter().copied().collect();
        let victim = victims[rng.random_range(0..victims.len())];
        let confuser = partner(victim, cfg.labels);
        let substitute = if !truth.contains(&confuser) && rng.random_bool(cfg.confusion) {
            confuser
        } else {
            let wrong: Vec<usize> = (0..cfg.labels).filter(|l| !truth.contains(l)).collect();
            wrong[rng.random_range(0..wrong.len())]
        };
        tags.remove(&victim);
        tags.insert(substitute);
    }
    let id = format!("img{index:05}");
    Rendered {
        record: ImageRecord {
            path: PathBuf::from("images").join(format!("{id}.png")),
            image_id: id,
            tags: tags.into_iter().map(label_name).collect(),
            split: job.split,
            truth_labels: Some(truth.into_iter().map(label_name).collect()),
        },
        image: img,
    }
}

/// Renders the corpus under `out_dir` (images in `images/`, manifest in
/// `manifest.tsv`) and returns it.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64, out_dir: &Path) -> Result<Corpus> {
    config.validate()?;
    let mut jobs: Vec<Job> = (0..config.labels)
        .flat_map(|l| {
            std::iter::repeat_n(Split::Development, config.dev_per_label)
                .chain(std::iter::repeat_n(Split::Testing, config.test_per_label))
                .map(move |split| Job { primary: l, split })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    jobs.shuffle(&mut rng);

    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let records: Vec<ImageRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let r = render(i, job, config, seed);
            let path = out_dir.join(&r.record.path);
            r.image.save(&path).map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Ok(r.record)
        })
        .collect::<Result<_>>()?;
    let corpus = Corpus::new(records, out_dir)?;
    corpus.write_manifest(out_dir.join("manifest.tsv"))?;
    Ok(corpus)
}
