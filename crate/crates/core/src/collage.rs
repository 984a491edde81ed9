//! Review montages of whole parent images.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::table;

const BACKDROP: Rgb<u8> = Rgb([24, 24, 24]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollageConfig {
    pub max_tiles: usize,
    pub tile_px: u32,
}

impl Default for CollageConfig {
    fn default() -> Self {
        CollageConfig {
            max_tiles: 25,
            tile_px: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Collage {
    pub image: RgbImage,
    /// Tile index to image id.
    pub legend: Vec<String>,
    pub skipped: Vec<String>,
}

pub fn legend_path(png: &Path) -> PathBuf {
    png.with_extension("legend.tsv")
}

impl Collage {
    pub fn columns(&self) -> usize {
        grid_columns(self.legend.len())
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.image
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: PathBuf::from("<collage>"),
                message: e.to_string(),
            })?;
        Ok(buf.into_inner())
    }

    /// Writes the PNG and its `tile_index<TAB>image_id` legend.
    pub fn write(&self, png: &Path) -> Result<()> {
        let bytes = self.to_png()?;
        if let Some(parent) = png.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(png, bytes).map_err(|e| Error::io(png, e))?;
        let legend: String = self
            .legend
            .iter()
            .enumerate()
            .map(|(i, id)| format!("{i}\t{id}\n"))
            .collect();
        table::write_text(&legend_path(png), &legend)
    }
}

pub fn grid_columns(tiles: usize) -> usize {
    (tiles as f64).sqrt().ceil() as usize
}

/// Distinct parent images of the given regions, ordered by image id.
pub fn parent_images<'a>(
    region_ids: impl IntoIterator<Item = &'a String>,
    owners: &BTreeMap<String, String>,
) -> Vec<String> {
    region_ids
        .into_iter()
        .filter_map(|r| owners.get(r).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path).map(|i| i.to_rgb8()).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Letterboxes `img` into a `tile x tile` square.
fn tile_of(img: &RgbImage, tile: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let scale = f64::from(tile) / f64::from(w.max(h));
    let nw = ((f64::from(w) * scale).round() as u32).clamp(1, tile);
    let nh = ((f64::from(h) * scale).round() as u32).clamp(1, tile);
    let resized = imageops::resize(img, nw, nh, FilterType::Triangle);
    let mut out = RgbImage::from_pixel(tile, tile, BACKDROP);
    imageops::replace(
        &mut out,
        &resized,
        i64::from((tile - nw) / 2),
        i64::from((tile - nh) / 2),
    );
    out
}

/// Montage of the whole images behind a set of regions.
pub fn make_collage(
    region_ids: &[String],
    owners: &BTreeMap<String, String>,
    corpus: &Corpus,
    config: &CollageConfig,
) -> Result<Collage> {
    let images = parent_images(region_ids, owners);
    collage_of_images(&images, corpus, config)
}

pub fn collage_of_images(image_ids: &[String], corpus: &Corpus, config: &CollageConfig) -> Result<Collage> {
    if image_ids.is_empty() {
        return Err(Error::InvalidArgument("collage needs at least one member".into()));
    }
    let mut sorted: Vec<&String> = image_ids.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut tiles = Vec::new();
    let mut legend = Vec::new();
    let mut skipped = Vec::new();
    for id in sorted {
        if tiles.len() == config.max_tiles {
            break;
        }
        let loaded = corpus.require(id).and_then(|r| load_rgb(&corpus.image_path(r)));
        match loaded {
            Ok(img) => {
                tiles.push(tile_of(&img, config.tile_px));
                legend.push(id.clone());
            }
            Err(e) => {
                log::warn!("collage: skipping {id}: {e}");
                skipped.push(id.clone());
            }
        }
    }
    if tiles.is_empty() {
        return Err(Error::EmptyCollage);
    }
    let cols = grid_columns(tiles.len());
    let rows = tiles.len().div_ceil(cols);
    let t = config.tile_px;
    let mut canvas = RgbImage::from_pixel(cols as u32 * t, rows as u32 * t, BACKDROP);
    for (i, tile) in tiles.iter().enumerate() {
        let (c, r) = ((i % cols) as u32, (i / cols) as u32);
        imageops::replace(&mut canvas, tile, i64::from(c * t), i64::from(r * t));
    }
    Ok(Collage {
        image: canvas,
        legend,
        skipped,
    })
}
