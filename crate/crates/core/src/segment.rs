//! Over-segmentation of images into regions.
//!
//! Regions of one image are pairwise disjoint and cover it. Each region keeps
//! a bbox-aligned bitmask so non-rectangular strategies can be added behind
//! [`SegmentStrategy`] without touching feature extraction.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub region_id: String,
    pub image_id: String,
    pub bbox: BBox,
    /// Row-major over the bbox; `true` marks member pixels.
    pub mask: Vec<bool>,
    pub area_fraction: f64,
    /// Normalized to `[0, 1]^2`.
    pub centroid: (f64, f64),
}

impl Region {
    /// Builds a region from a mask, deriving area fraction and centroid.
    pub fn from_mask(
        region_id: String,
        image_id: String,
        bbox: BBox,
        mask: Vec<bool>,
        image_size: (u32, u32),
    ) -> Result<Region> {
        debug_assert_eq!(mask.len() as u64, bbox.area());
        let (w, h) = (f64::from(image_size.0), f64::from(image_size.1));
        let (mut n, mut sx, mut sy) = (0u64, 0f64, 0f64);
        let bw = bbox.width() as usize;
        for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            n += 1;
            sx += (bbox.x0 as usize + i % bw) as f64 + 0.5;
            sy += (bbox.y0 as usize + i / bw) as f64 + 0.5;
        }
        if n == 0 {
            return Err(Error::EmptyMask(region_id));
        }
        Ok(Region {
            area_fraction: n as f64 / (w * h),
            centroid: (sx / n as f64 / w, sy / n as f64 / h),
            region_id,
            image_id,
            bbox,
            mask,
        })
    }

    pub fn rect(region_id: String, image_id: String, bbox: BBox, image_size: (u32, u32)) -> Result<Region> {
        let mask = vec![true; bbox.area() as usize];
        Region::from_mask(region_id, image_id, bbox, mask, image_size)
    }

    pub fn mask_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Whether absolute pixel `(x, y)` belongs to the region.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let b = &self.bbox;
        if x < b.x0 || x >= b.x1 || y < b.y0 || y >= b.y1 {
            return false;
        }
        self.mask[((y - b.y0) * b.width() + (x - b.x0)) as usize]
    }
}

pub fn region_id(image_id: &str, index: usize) -> String {
    format!("{image_id}/r{index:02}")
}

/// A deterministic partition of an image into regions.
pub trait SegmentStrategy {
    fn segment(&self, image_id: &str, image: &RgbImage) -> Result<Vec<Region>>;
}

/// `G x G` rectangular grid. The last row and column absorb the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid(pub u32);

impl SegmentStrategy for Grid {
    fn segment(&self, image_id: &str, image: &RgbImage) -> Result<Vec<Region>> {
        let g = self.0;
        let (w, h) = image.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::EmptyImage);
        }
        if g == 0 || w < g || h < g {
            return Err(Error::ImageTooSmall {
                width: w,
                height: h,
                grid: g,
            });
        }
        let cuts = |len: u32| -> Vec<u32> {
            let step = len / g;
            (0..=g).map(|i| if i == g { len } else { i * step }).collect()
        };
        let (xs, ys) = (cuts(w), cuts(h));
        let mut out = Vec::with_capacity((g * g) as usize);
        for row in 0..g as usize {
            for col in 0..g as usize {
                let bbox = BBox {
                    x0: xs[col],
                    y0: ys[row],
                    x1: xs[col + 1],
                    y1: ys[row + 1],
                };
                let id = region_id(image_id, row * g as usize + col);
                out.push(Region::rect(id, image_id.to_string(), bbox, (w, h))?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum SegmenterConfig {
    Grid { size: u32 },
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig::Grid { size: 4 }
    }
}

pub fn segment(image_id: &str, image: &RgbImage, config: &SegmenterConfig) -> Result<Vec<Region>> {
    match *config {
        SegmenterConfig::Grid { size } => Grid(size).segment(image_id, image),
    }
}

/// One row of the persisted region table. Masks are not persisted; they are
/// recomputed from the image by re-running the (pure) segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub region_id: String,
    pub image_id: String,
    pub bbox: BBox,
    pub area_fraction: f64,
    pub centroid: (f64, f64),
}

impl From<&Region> for RegionRow {
    fn from(r: &Region) -> Self {
        RegionRow {
            region_id: r.region_id.clone(),
            image_id: r.image_id.clone(),
            bbox: r.bbox,
            area_fraction: r.area_fraction,
            centroid: r.centroid,
        }
    }
}

pub fn write_region_table(path: &Path, rows: &[RegionRow]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        let b = r.bbox;
        out.push_str(&format!(
            "{}\t{}\t{},{},{},{}\t{}\t{},{}\n",
            r.region_id,
            r.image_id,
            b.x0,
            b.y0,
            b.x1,
            b.y1,
            table::fmt_f64(r.area_fraction),
            table::fmt_f64(r.centroid.0),
            table::fmt_f64(r.centroid.1)
        ));
    }
    table::write_text(path, &out)
}

pub fn read_region_table(path: &Path) -> Result<Vec<RegionRow>> {
    let mut rows = Vec::new();
    for (line, row) in table::read_rows(path)? {
        let f = table::fields(path, line, &row, 5)?;
        let bb: Vec<u32> = f[2]
            .split(',')
            .map(|v| table::parse_num(path, line, v, "bbox coordinate"))
            .collect::<Result<_>>()?;
        let c: Vec<f64> = f[4]
            .split(',')
            .map(|v| table::parse_num(path, line, v, "centroid"))
            .collect::<Result<_>>()?;
        if bb.len() != 4 || c.len() != 2 {
            return Err(Error::parse(path, line, "bad bbox or centroid arity"));
        }
        rows.push(RegionRow {
            region_id: f[0].to_string(),
            image_id: f[1].to_string(),
            bbox: BBox {
                x0: bb[0],
                y0: bb[1],
                x1: bb[2],
                y1: bb[3],
            },
            area_fraction: table::parse_num(path, line, f[3], "area fraction")?,
            centroid: (c[0], c[1]),
        });
    }
    Ok(rows)
}

/// Region id to owning image id.
pub fn owner_map(rows: &[RegionRow]) -> BTreeMap<String, String> {
    rows.iter().map(|r| (r.region_id.clone(), r.image_id.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blank(w: u32, h: u32) -> RgbImage {
        RgbImage::new(w, h)
    }

    #[test]
    fn grid_64_exact() {
        let regions = Grid(4).segment("i", &blank(64, 64)).unwrap();
        assert_eq!(regions.len(), 16);
        for r in &regions {
            assert_eq!(r.area_fraction, 1.0 / 16.0);
        }
        assert_eq!(regions[5].region_id, "i/r05");
    }

    #[test]
    fn grid_65_absorbs_remainder() {
        let regions = Grid(4).segment("i", &blank(65, 65)).unwrap();
        assert_eq!(regions.len(), 16);
        // Enumerate pixel ownership directly.
        let mut owner = vec![usize::MAX; 65 * 65];
        for (k, r) in regions.iter().enumerate() {
            for y in 0..65 {
                for x in 0..65 {
                    if r.contains(x, y) {
                        assert_eq!(owner[(y * 65 + x) as usize], usize::MAX);
                        owner[(y * 65 + x) as usize] = k;
                    }
                }
            }
        }
        assert!(owner.iter().all(|&o| o != usize::MAX));
        let counts: Vec<usize> = (0..16).map(|k| owner.iter().filter(|&&o| o == k).count()).collect();
        // interior 16x16, last column 17x16, last row 16x17, corner 17x17
        assert_eq!(counts[0], 256);
        assert_eq!(counts[3], 272);
        assert_eq!(counts[12], 272);
        assert_eq!(counts[15], 289);
        let total: f64 = regions.iter().map(|r| r.area_fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_errors() {
        assert!(matches!(
            Grid(16).segment("i", &blank(10, 10)),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn full_image_centroid() {
        let r = Region::rect(
            "r".into(),
            "i".into(),
            BBox {
                x0: 0,
                y0: 0,
                x1: 64,
                y1: 64,
            },
            (64, 64),
        )
        .unwrap();
        assert_eq!(r.centroid, (0.5, 0.5));
        assert_eq!(r.area_fraction, 1.0);
    }

    #[test]
    fn empty_mask_rejected() {
        let b = BBox {
            x0: 0,
            y0: 0,
            x1: 2,
            y1: 2,
        };
        assert!(matches!(
            Region::from_mask("r".into(), "i".into(), b, vec![false; 4], (4, 4)),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("regions.tsv");
        let regions = Grid(3).segment("img", &blank(31, 20)).unwrap();
        let rows: Vec<RegionRow> = regions.iter().map(RegionRow::from).collect();
        write_region_table(&p, &rows).unwrap();
        assert_eq!(read_region_table(&p).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn partition_invariants(w in 1u32..80, h in 1u32..80, g in 1u32..9) {
            prop_assume!(w >= g && h >= g);
            let regions = Grid(g).segment("p", &blank(w, h)).unwrap();
            prop_assert_eq!(regions.len() as u32, g * g);
            let total: f64 = regions.iter().map(|r| r.area_fraction).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            let pixels: u64 = regions.iter().map(|r| r.mask_len() as u64).sum();
            prop_assert_eq!(pixels, u64::from(w) * u64::from(h));
            for r in &regions {
                let b = r.bbox;
                let (cx, cy) = r.centroid;
                prop_assert!(cx >= f64::from(b.x0) / f64::from(w) && cx <= f64::from(b.x1) / f64::from(w));
                prop_assert!(cy >= f64::from(b.y0) / f64::from(h) && cy <= f64::from(b.y1) / f64::from(h));
            }
        }
    }
}
