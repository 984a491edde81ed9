//! Binary feature store.
//!
//! Layout: a UTF-8 header line `dim=<D> count=<N>\n` followed by `N * D`
//! little-endian `f32` values, row-major. A sidecar TSV maps each row index
//! to `id<TAB>image_id`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::table;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    image_ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tsv");
    PathBuf::from(s)
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: &str, image_id: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.image_ids.push(image_id.to_string());
        self.data.extend(vector.iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data[i * self.dim..(i + 1) * self.dim]
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<Vec<f64>> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn image_of(&self, id: &str) -> Option<&str> {
        self.index.get(id).map(|&i| self.image_ids[i].as_str())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("dim={} count={}\n", self.dim, self.len()).into_bytes();
        bytes.reserve(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side: String = self
            .ids
            .iter()
            .zip(&self.image_ids)
            .enumerate()
            .map(|(i, (id, img))| format!("{i}\t{id}\t{img}\n"))
            .collect();
        table::write_text(&sidecar_path(path), &side)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse(path, 1, "header is not UTF-8"))?;
        let mut dim = None;
        let mut count = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("dim", v)) => dim = Some(table::parse_num::<usize>(path, 1, v, "dim")?),
                Some(("count", v)) => count = Some(table::parse_num::<usize>(path, 1, v, "count")?),
                _ => return Err(Error::parse(path, 1, format!("unexpected header token `{part}`"))),
            }
        }
        let (dim, count) = match (dim, count) {
            (Some(d), Some(c)) => (d, c),
            _ => return Err(Error::parse(path, 1, "header needs dim and count")),
        };
        let body = &bytes[nl + 1..];
        if body.len() != dim * count * 4 {
            return Err(Error::parse(
                path,
                1,
                format!("expected {} payload bytes, found {}", dim * count * 4, body.len()),
            ));
        }
        let data: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let side = sidecar_path(path);
        let rows = table::read_rows(&side)?;
        if rows.len() != count {
            return Err(Error::parse(&side, rows.len(), format!("expected {count} rows")));
        }
        let mut store = FeatureStore::new(dim);
        store.data = data;
        for (expect, (line, row)) in rows.into_iter().enumerate() {
            let f = table::fields(&side, line, &row, 3)?;
            let i: usize = table::parse_num(&side, line, f[0], "row index")?;
            if i != expect {
                return Err(Error::parse(&side, line, "row indices out of order"));
            }
            store.index.insert(f[1].to_string(), i);
            store.ids.push(f[1].to_string());
            store.image_ids.push(f[2].to_string());
        }
        Ok(store)
    }
}
