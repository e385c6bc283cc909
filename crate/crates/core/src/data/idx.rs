//! IDX files: big-endian `u32` magic, one `u32` per dimension, then raw
//! unsigned bytes. Images use magic `0x00000803` (`[n, rows, cols]`), labels
//! `0x00000801` (`[n]`).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Tensor;

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.name.to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.err("truncated header"))?;
        self.pos += 4;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or_else(|| self.err("size overflow"))?;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| {
            self.err(format!(
                "truncated payload: need {n} bytes, {} available",
                self.bytes.len() - self.pos
            ))
        })?;
        self.pos = end;
        Ok(b)
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

/// Parses an images file into `(n, rows, cols, pixels)`.
pub fn parse_images(name: &str, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = Reader {
        name,
        bytes,
        pos: 0,
    };
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        r.pos = 0;
        return Err(r.err(format!(
            "bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"
        )));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(r.err(format!("degenerate dimensions {n}x{rows}x{cols}")));
    }
    let pixels = r.take(n * rows * cols)?.to_vec();
    r.finish()?;
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(name: &str, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader {
        name,
        bytes,
        pos: 0,
    };
    let magic = r.u32_be()?;
    if magic != LABELS_MAGIC {
        r.pos = 0;
        return Err(r.err(format!(
            "bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"
        )));
    }
    let n = r.u32_be()? as usize;
    let labels = r.take(n)?.to_vec();
    r.finish()?;
    Ok(labels)
}

/// Builds a dataset from raw IDX bytes. Pixels are scaled to `[0, 1]` by
/// `/255`; inputs have shape `[n, 1, rows, cols]`.
pub fn dataset_from_idx_bytes(name: &str, images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_images(&format!("{name} images"), images)?;
    let labels = parse_labels(&format!("{name} labels"), labels)?;
    if labels.len() != n {
        return Err(Error::Parse {
            source_name: format!("{name} labels"),
            offset: 4,
            message: format!("{} labels for {n} images", labels.len()),
        });
    }
    let inputs = Tensor::new(
        vec![n, 1, rows, cols],
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(name, inputs, labels, class_count)
}

/// Reads an images/labels file pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset_from_idx_bytes(&name, &images, &labels)
}

/// Serialises inputs back to an IDX images file. Every input value must be
/// an exact multiple of `1/255` in `[0, 1]`.
pub fn images_to_idx(ds: &Dataset) -> Result<Vec<u8>> {
    let shape = ds.inputs.shape();
    let n = shape[0];
    let (rows, cols) = match shape {
        [_, 1, r, c] => (*r, *c),
        [_, d] => (1, *d),
        _ => {
            return Err(Error::domain(format!(
                "cannot write inputs of shape {shape:?} as IDX images"
            )))
        }
    };
    let mut out = Vec::with_capacity(16 + ds.inputs.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for &x in ds.inputs.data() {
        let q = (x * 255.0).round();
        if !(0.0..=255.0).contains(&q) || q / 255.0 != x {
            return Err(Error::domain(format!(
                "input value {x} is not a byte level"
            )));
        }
        out.push(q as u8);
    }
    Ok(out)
}

pub fn labels_to_idx(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + ds.labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.labels.len() as u32).to_be_bytes());
    for &y in &ds.labels {
        let b =
            u8::try_from(y).map_err(|_| Error::domain(format!("label {y} does not fit a byte")))?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    fs::write(images_path, images_to_idx(ds)?).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, labels_to_idx(ds)?).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}
