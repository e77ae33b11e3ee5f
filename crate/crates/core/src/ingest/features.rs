//! Per-item content feature matrices.
//!
//! Canonical on-disk form is MMF1 (little-endian): magic `MMF1`, `u32`
//! version, `u64` rows, `u64` cols, then `rows × cols` `f32` values in
//! row-major order. A CSV fallback exists for small hand-written fixtures.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::split::IdMaps;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const MMF1_MAGIC: &[u8; 4] = b"MMF1";
pub const MMF1_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: DenseMatrix,
}

impl FeatureMatrix {
    pub fn new(rows: DenseMatrix) -> Result<Self> {
        check_finite(&rows)?;
        Ok(FeatureMatrix { rows })
    }

    pub fn n_items(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, item: usize) -> &[f64] {
        self.rows.row(item)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.rows
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.rows
    }

    /// Scale every nonzero row to unit L2 norm.
    pub fn normalize_rows(&mut self) {
        for r in 0..self.rows.rows() {
            let row = self.rows.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// New matrix whose row `k` is row `order[k]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> FeatureMatrix {
        let cols = self.dim();
        let mut out = DenseMatrix::zeros(order.len(), cols);
        for (k, &src) in order.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.rows.row(src));
        }
        FeatureMatrix { rows: out }
    }
}

fn check_finite(m: &DenseMatrix) -> Result<()> {
    for r in 0..m.rows() {
        if let Some(c) = m.row(r).iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value at row {r}, column {c}")));
        }
    }
    Ok(())
}

pub fn write_mmf1(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 4);
    buf.extend_from_slice(MMF1_MAGIC);
    buf.extend_from_slice(&MMF1_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_mmf1(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mmf1(&bytes)
}

fn decode_mmf1(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("MMF1 header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MMF1_MAGIC {
        return Err(Error::Format("bad magic, expected MMF1".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MMF1_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: MMF1_VERSION,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Format(format!("MMF1 dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count {
        return Err(Error::Format(format!(
            "MMF1 payload has {} bytes, {rows}x{cols} needs {count}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    DenseMatrix::from_vec(rows as usize, cols as usize, data)
}

fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad feature value {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

/// Load an MMF1 (or CSV) feature file and enforce its row count.
pub fn load_feature_matrix(path: impl AsRef<Path>, expected_rows: usize, normalize: bool) -> Result<FeatureMatrix> {
    let m = read_any(path.as_ref())?;
    if m.rows() != expected_rows {
        return Err(Error::Shape(format!(
            "feature file {} has {} rows, expected {expected_rows}",
            path.as_ref().display(),
            m.rows()
        )));
    }
    finish(m, normalize)
}

fn read_any(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MMF1_MAGIC) {
        decode_mmf1(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is neither MMF1 nor UTF-8 CSV", path.display())))?;
        parse_csv(&text)
    }
}

fn finish(m: DenseMatrix, normalize: bool) -> Result<FeatureMatrix> {
    let mut f = FeatureMatrix::new(m)?;
    if normalize {
        f.normalize_rows();
    }
    Ok(f)
}

/// Token map for a feature file: `<stem>.items` next to it, else a shared
/// `items.txt` in the same directory.
pub fn feature_token_map_path(path: impl AsRef<Path>) -> Option<PathBuf> {
    let path = path.as_ref();
    let own = path.with_extension("items");
    if own.is_file() {
        return Some(own);
    }
    let shared = path.parent().unwrap_or(Path::new(".")).join("items.txt");
    shared.is_file().then_some(shared)
}

/// Load features and reorder rows into encoded item order.
///
/// Without a token map the file must already hold exactly one row per
/// encoded item, in encoded order.
pub fn load_aligned_features(path: impl AsRef<Path>, ids: &IdMaps, normalize: bool) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let Some(map_path) = feature_token_map_path(path) else {
        return load_feature_matrix(path, ids.n_items(), normalize);
    };
    let m = read_any(path)?;
    let text = fs::read_to_string(&map_path).map_err(|e| Error::io(&map_path, e))?;
    let tokens: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).map(str::trim).collect();
    if tokens.len() != m.rows() {
        return Err(Error::Shape(format!(
            "{} lists {} items but {} has {} rows",
            map_path.display(),
            tokens.len(),
            path.display(),
            m.rows()
        )));
    }
    let row_of: HashMap<&str, usize> = tokens.iter().enumerate().map(|(r, t)| (*t, r)).collect();
    let order = ids
        .item_tokens()
        .iter()
        .map(|t| {
            row_of
                .get(t.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("item {t:?} has no row in {}", path.display())))
        })
        .collect::<Result<Vec<usize>>>()?;
    let full = FeatureMatrix::new(m)?;
    let mut f = full.select_rows(&order);
    if normalize {
        f.normalize_rows();
    }
    Ok(f)
}
