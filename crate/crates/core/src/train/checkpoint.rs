use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::ParamSet;
use crate::model::{ModelDims, ModelParams, TENSOR_NAMES};

pub const MMCK_MAGIC: &[u8; 4] = b"MMCK";
pub const MMCK_VERSION: u32 = 1;

/// Parameters plus the training metadata saved alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// 1-based epoch the parameters come from; 0 means untrained.
    pub epoch: u32,
    pub best_val_recall: f64,
    pub config_echo: String,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        let mut buf = Vec::new();
        buf.extend_from_slice(MMCK_MAGIC);
        buf.extend_from_slice(&MMCK_VERSION.to_le_bytes());
        let ModelDims {
            n_users,
            n_items,
            d,
            d_img,
            d_txt,
            h,
        } = p.dims;
        for v in [n_users, n_items, d, d_img, d_txt, h] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(p.tensor_count() as u32).to_le_bytes());
        for k in 0..p.tensor_count() {
            let (name, data) = p.tensor(k);
            put_str16(&mut buf, name)?;
            let shape = p.tensor_shape(k);
            buf.push(shape.len() as u8);
            for s in shape {
                buf.extend_from_slice(&(s as u64).to_le_bytes());
            }
            for &v in data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&self.epoch.to_le_bytes());
        buf.extend_from_slice(&self.best_val_recall.to_le_bytes());
        let echo = self.config_echo.as_bytes();
        let len = u32::try_from(echo.len()).map_err(|_| Error::Format("config echo too long".into()))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(echo);
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MMCK_MAGIC {
            return Err(Error::Format("bad magic, expected MMCK".into()));
        }
        let version = r.u32()?;
        if version != MMCK_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: MMCK_VERSION,
            });
        }
        let mut dim = [0usize; 6];
        for slot in &mut dim {
            *slot = usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension overflows usize".into()))?;
        }
        let dims = ModelDims {
            n_users: dim[0],
            n_items: dim[1],
            d: dim[2],
            d_img: dim[3],
            d_txt: dim[4],
            h: dim[5],
        };
        dims.validate()
            .map_err(|e| Error::Format(format!("invalid dimensions in checkpoint: {e}")))?;
        // Guard the allocation below against absurd headers.
        let total: u128 = [
            dims.n_users * dims.d,
            dims.n_items * dims.d,
            dims.d * (dims.d_img + dims.d_txt + 2 * dims.d + 2 * dims.h + 4) + dims.h,
        ]
        .iter()
        .map(|&v| v as u128)
        .sum();
        if total * 4 > bytes.len() as u128 {
            return Err(Error::Format(
                "checkpoint truncated: header dimensions exceed file size".into(),
            ));
        }
        let mut params = ModelParams::zeros(dims);
        let count = r.u32()? as usize;
        if count != TENSOR_NAMES.len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} tensors, expected {}",
                TENSOR_NAMES.len()
            )));
        }
        for (k, expected) in TENSOR_NAMES.iter().enumerate() {
            let name_len = r.u16()? as usize;
            let name =
                std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            if name != *expected {
                return Err(Error::Format(format!("tensor {k} is {name:?}, expected {expected:?}")));
            }
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let want = params.tensor_shape(k);
            if shape != want {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {shape:?}, dims imply {want:?}"
                )));
            }
            let dst = params.tensor_mut(k);
            let raw = r.take(dst.len() * 4)?;
            for (v, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f64::from(f32::from_le_bytes(c.try_into().unwrap()));
            }
        }
        let epoch = r.u32()?;
        let best_val_recall = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let echo_len = r.u32()? as usize;
        let config_echo = String::from_utf8(r.take(echo_len)?.to_vec())
            .map_err(|_| Error::Format("config echo is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint metadata",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params,
            epoch,
            best_val_recall,
            config_echo,
        })
    }
}

fn put_str16(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Format(format!("name too long: {s}")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.bytes.len())))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Write atomically: a sibling temporary file is renamed into place, so a
/// failed save never leaves a half-written checkpoint at `path`.
pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.encode()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}
