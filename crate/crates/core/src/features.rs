//! Region and whole-image descriptors.
//!
//! Region vector (46): autocorrelogram over 8 colors at distances 1,3,5,7 (32),
//! color moments (9), shape (3), position (2).
//!
//! Global vector (83): 4x4x4 RGB histogram (64), edge direction histogram with
//! 18 orientation bins over [0, 180) degrees plus one no-edge bin (19).
//!
//! Every block is L1-normalized independently so no family dominates the
//! Euclidean distances used downstream.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Region;

pub const CORRELOGRAM_DISTANCES: [u32; 4] = [1, 3, 5, 7];
pub const QUANT_COLORS: usize = 8;
pub const CORRELOGRAM_DIM: usize = QUANT_COLORS * CORRELOGRAM_DISTANCES.len();
pub const REGION_DIM: usize = CORRELOGRAM_DIM + 9 + 3 + 2;

pub const HIST_BINS: usize = 64;
pub const EDGE_ANGLE_BINS: usize = 18;
pub const GLOBAL_DIM: usize = HIST_BINS + EDGE_ANGLE_BINS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Gradient magnitude threshold on [0,1] luminance.
    pub edge_threshold: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { edge_threshold: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeature {
    pub region_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature {
    pub image_id: String,
    pub vector: Vec<f64>,
}

/// 1 bit per channel.
#[inline]
pub fn quantize8(p: [u8; 3]) -> usize {
    (usize::from(p[0] >> 7) << 2) | (usize::from(p[1] >> 7) << 1) | usize::from(p[2] >> 7)
}

/// 2 bits per channel.
#[inline]
pub fn quantize64(p: [u8; 3]) -> usize {
    (usize::from(p[0] >> 6) << 4) | (usize::from(p[1] >> 6) << 2) | usize::from(p[2] >> 6)
}

/// Offsets at exactly L-infinity distance `d` from the origin.
fn ring(d: i64) -> impl Iterator<Item = (i64, i64)> {
    (-d..=d).flat_map(move |dy| {
        let xs: Vec<i64> = if dy.abs() == d { (-d..=d).collect() } else { vec![-d, d] };
        xs.into_iter().map(move |dx| (dx, dy))
    })
}

/// Same-color co-occurrence probability per (distance, color), restricted to
/// pixel pairs inside the region. Entry `[d][c]` is
/// `P(color(q) = c | color(p) = c, |p - q|_inf = d)`, or 0 when no pair with a
/// color-`c` first pixel exists at that distance.
pub fn autocorrelogram_raw(image: &RgbImage, region: &Region) -> Vec<[f64; QUANT_COLORS]> {
    let b = region.bbox;
    let (bw, bh) = (i64::from(b.width()), i64::from(b.height()));
    // Quantized colors of member pixels, -1 elsewhere.
    let q: Vec<i8> = (0..bh)
        .flat_map(|y| (0..bw).map(move |x| (x, y)))
        .map(|(x, y)| {
            if region.mask[(y * bw + x) as usize] {
                let p = image.get_pixel(b.x0 + x as u32, b.y0 + y as u32).0;
                quantize8(p) as i8
            } else {
                -1
            }
        })
        .collect();
    CORRELOGRAM_DISTANCES
        .iter()
        .map(|&d| {
            let offs: Vec<(i64, i64)> = ring(i64::from(d)).collect();
            let mut same = [0u64; QUANT_COLORS];
            let mut total = [0u64; QUANT_COLORS];
            for y in 0..bh {
                for x in 0..bw {
                    let c = q[(y * bw + x) as usize];
                    if c < 0 {
                        continue;
                    }
                    for &(dx, dy) in &offs {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= bw || ny >= bh {
                            continue;
                        }
                        let n = q[(ny * bw + nx) as usize];
                        if n < 0 {
                            continue;
                        }
                        total[c as usize] += 1;
                        if n == c {
                            same[c as usize] += 1;
                        }
                    }
                }
            }
            let mut row = [0.0; QUANT_COLORS];
            for c in 0..QUANT_COLORS {
                if total[c] > 0 {
                    row[c] = same[c] as f64 / total[c] as f64;
                }
            }
            row
        })
        .collect()
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn region_features(image: &RgbImage, region: &Region) -> Result<RegionFeature> {
    let n = region.mask_len();
    if n == 0 {
        return Err(Error::EmptyMask(region.region_id.clone()));
    }
    let mut v = Vec::with_capacity(REGION_DIM);
    for mut row in autocorrelogram_raw(image, region) {
        l1_normalize(&mut row);
        v.extend_from_slice(&row);
    }

    // Color moments on [0,1]-scaled channels.
    let b = region.bbox;
    let pixels: Vec<[f64; 3]> = region
        .mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| {
            let x = b.x0 + i as u32 % b.width();
            let y = b.y0 + i as u32 / b.width();
            image.get_pixel(x, y).0.map(|c| f64::from(c) / 255.0)
        })
        .collect();
    let nf = n as f64;
    for ch in 0..3 {
        let mean = pixels.iter().map(|p| p[ch]).sum::<f64>() / nf;
        let m2 = pixels.iter().map(|p| (p[ch] - mean).powi(2)).sum::<f64>() / nf;
        let m3 = pixels.iter().map(|p| (p[ch] - mean).powi(3)).sum::<f64>() / nf;
        v.extend_from_slice(&[mean, m2.sqrt(), m3.cbrt()]);
    }

    let aspect = (f64::from(b.width()) / f64::from(b.height())).clamp(0.0, 8.0) / 8.0;
    let extent = nf / b.area() as f64;
    v.extend_from_slice(&[region.area_fraction, aspect, extent]);
    v.extend_from_slice(&[region.centroid.0, region.centroid.1]);
    debug_assert_eq!(v.len(), REGION_DIM);
    Ok(RegionFeature {
        region_id: region.region_id.clone(),
        vector: v,
    })
}

#[inline]
fn luminance(p: [u8; 3]) -> f64 {
    (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0
}

/// Sobel gradient at `(x, y)` with edge replication, scaled so a unit luminance
/// step yields magnitude 1.
pub fn sobel(lum: &[f64], w: u32, h: u32, x: u32, y: u32) -> (f64, f64) {
    let at = |dx: i64, dy: i64| {
        let xx = (i64::from(x) + dx).clamp(0, i64::from(w) - 1) as usize;
        let yy = (i64::from(y) + dy).clamp(0, i64::from(h) - 1) as usize;
        lum[yy * w as usize + xx]
    };
    let gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
    let gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
    (gx / 4.0, gy / 4.0)
}

/// Orientation bin for a gradient, folding directions into [0, 180).
pub fn edge_bin(gx: f64, gy: f64) -> usize {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    ((deg / (180.0 / EDGE_ANGLE_BINS as f64)) as usize).min(EDGE_ANGLE_BINS - 1)
}

pub fn global_features(image_id: &str, image: &RgbImage, config: &FeatureConfig) -> Result<GlobalFeature> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let mut hist = vec![0.0; HIST_BINS];
    let mut lum = Vec::with_capacity((w * h) as usize);
    for p in image.pixels() {
        hist[quantize64(p.0)] += 1.0;
        lum.push(luminance(p.0));
    }
    let mut edges = vec![0.0; EDGE_ANGLE_BINS + 1];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = sobel(&lum, w, h, x, y);
            if gx.hypot(gy) >= config.edge_threshold {
                edges[edge_bin(gx, gy)] += 1.0;
            } else {
                edges[EDGE_ANGLE_BINS] += 1.0;
            }
        }
    }
    l1_normalize(&mut hist);
    l1_normalize(&mut edges);
    hist.extend(edges);
    Ok(GlobalFeature {
        image_id: image_id.to_string(),
        vector: hist,
    })
}
