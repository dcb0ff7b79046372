//! Bit-exact container formats and external dataset loaders.
//!
//! `GRD1` grid container:
//!   magic `"GRD1"`, u8 rank n, u8 reserved (0), u16 channels (LE),
//!   n x u32 axis lengths (LE), then f32 LE payload in channel-major order.
//!
//! `LDS1` labeled dataset container:
//!   magic `"LDS1"`, u32 class count (LE), u32 instance count (LE), then per
//!   instance a u32 label (LE) followed by an embedded GRD1 block.
//!
//! External loaders: CIFAR-10 binary (3073-byte records) and IDX ubyte files
//! (big-endian dims). Pixel bytes are scaled to `[0, 1]` by `/255`.

use std::fs;
use std::path::Path;

use super::{GridTensor, LabeledDataset};
use crate::error::{Error, Result};

const GRD_MAGIC: &[u8; 4] = b"GRD1";
const LDS_MAGIC: &[u8; 4] = b"LDS1";
const CIFAR_RECORD: usize = 3073;

/// Byte cursor that reports the offset of any malformed field.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.offset(),
                format!("truncated while reading {what} ({n} bytes needed)"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16_le(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn grid_write_into(g: &GridTensor, out: &mut Vec<u8>) {
    out.extend_from_slice(GRD_MAGIC);
    out.push(g.rank() as u8);
    out.push(0); // reserved
    out.extend_from_slice(&(g.channels() as u16).to_le_bytes());
    for &d in g.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in g.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn grid_read_from(r: &mut Reader) -> Result<GridTensor> {
    let magic_at = r.offset();
    let magic = r.take(4, "magic")?;
    if magic != GRD_MAGIC {
        return Err(Error::format(magic_at, format!("bad magic {magic:?}, expected \"GRD1\"")));
    }
    let n = r.u8("rank")? as usize;
    if n == 0 {
        return Err(Error::format(r.offset() - 1, "rank must be >= 1"));
    }
    let _reserved = r.u8("reserved")?;
    let m_at = r.offset();
    let m = r.u16_le("channel count")? as usize;
    if m == 0 {
        return Err(Error::format(m_at, "channel count must be >= 1"));
    }
    let mut shape = Vec::with_capacity(n);
    let mut total = m;
    for k in 0..n {
        let at = r.offset();
        let d = r.u32_le("axis length")? as usize;
        if d == 0 {
            return Err(Error::format(at, format!("axis {k} has zero length")));
        }
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::format(at, "grid dimensions overflow"))?;
        shape.push(d);
    }
    let payload = r.take(total * 4, "f32 payload")?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    GridTensor::new(m, shape, values)
}

/// Serialize a grid into GRD1 bytes. Values are narrowed to f32.
pub fn grid_to_bytes(g: &GridTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * g.rank() + 4 * g.len());
    grid_write_into(g, &mut out);
    out
}

/// Parse a GRD1 byte buffer; trailing bytes are an error.
pub fn grid_from_bytes(bytes: &[u8]) -> Result<GridTensor> {
    let mut r = Reader::new(bytes);
    let g = grid_read_from(&mut r)?;
    if !r.done() {
        return Err(Error::format(r.offset(), "trailing bytes after grid payload"));
    }
    Ok(g)
}

pub fn write_grid(g: &GridTensor, path: &Path) -> Result<()> {
    fs::write(path, grid_to_bytes(g))?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridTensor> {
    grid_from_bytes(&fs::read(path)?)
}

/// Serialize a labeled dataset into LDS1 bytes.
pub fn dataset_to_bytes(ds: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(LDS_MAGIC);
    out.extend_from_slice(&(ds.class_count as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for (g, &label) in ds.instances.iter().zip(&ds.labels) {
        out.extend_from_slice(&(label as u32).to_le_bytes());
        grid_write_into(g, &mut out);
    }
    out
}

/// Parse an LDS1 byte buffer.
pub fn dataset_from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = Reader::new(bytes);
    let magic_at = r.offset();
    let magic = r.take(4, "magic")?;
    if magic != LDS_MAGIC {
        return Err(Error::format(magic_at, format!("bad magic {magic:?}, expected \"LDS1\"")));
    }
    let class_count = r.u32_le("class count")? as usize;
    let count = r.u32_le("instance count")? as usize;
    let mut instances = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(r.u32_le("label")? as usize);
        instances.push(grid_read_from(&mut r)?);
    }
    if !r.done() {
        return Err(Error::format(r.offset(), "trailing bytes after last instance"));
    }
    LabeledDataset::new(instances, labels, class_count)
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    dataset_from_bytes(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFormat {
    /// CIFAR-10 binary batches: 3073-byte records, label byte then
    /// 3x32x32 channel-major pixels.
    Cifar10,
    /// IDX ubyte image file plus a sibling IDX label file.
    Idx,
}

fn cifar_from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD;
        return Err(Error::format(
            (whole * CIFAR_RECORD) as u64,
            format!(
                "file length {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        ));
    }
    let count = bytes.len() / CIFAR_RECORD;
    let mut instances = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for rec in 0..count {
        let base = rec * CIFAR_RECORD;
        let label = bytes[base] as usize;
        if label > 9 {
            return Err(Error::format(base as u64, format!("label byte {label} > 9")));
        }
        let values = bytes[base + 1..base + CIFAR_RECORD]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        instances.push(GridTensor::new(3, vec![32, 32], values)?);
        labels.push(label);
    }
    LabeledDataset::new(instances, labels, 10)
}

/// Load an IDX ubyte image file (magic `0x00000803`): each image becomes a
/// single-channel grid with the declared row/column dims, scaled by 1/255.
pub fn load_idx_images(path: &Path) -> Result<Vec<GridTensor>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic_at = r.offset();
    let magic = r.u32_be("magic")?;
    if magic != 0x0000_0803 {
        return Err(Error::format(
            magic_at,
            format!("bad IDX image magic {magic:#010x}, expected 0x00000803"),
        ));
    }
    let count = r.u32_be("image count")? as usize;
    let rows_at = r.offset();
    let rows = r.u32_be("rows")? as usize;
    let cols = r.u32_be("cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(rows_at, "image dims must be >= 1"));
    }
    let per = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(rows_at, "image dims overflow"))?;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let pix = r.take(per, "image pixels")?;
        let values = pix.iter().map(|&b| b as f64 / 255.0).collect();
        images.push(GridTensor::new(1, vec![rows, cols], values)?);
    }
    if !r.done() {
        return Err(Error::format(r.offset(), "trailing bytes after last image"));
    }
    Ok(images)
}

/// Load an IDX ubyte label file (magic `0x00000801`).
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic_at = r.offset();
    let magic = r.u32_be("magic")?;
    if magic != 0x0000_0801 {
        return Err(Error::format(
            magic_at,
            format!("bad IDX label magic {magic:#010x}, expected 0x00000801"),
        ));
    }
    let count = r.u32_be("label count")? as usize;
    let body = r.take(count, "labels")?;
    if !r.done() {
        return Err(Error::format(r.offset(), "trailing bytes after labels"));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Load an external dataset. For [`ExternalFormat::Idx`] a label file path is
/// required and the class count is inferred as `max label + 1`.
pub fn load_external(
    format: ExternalFormat,
    images_path: &Path,
    labels_path: Option<&Path>,
) -> Result<LabeledDataset> {
    match format {
        ExternalFormat::Cifar10 => cifar_from_bytes(&fs::read(images_path)?),
        ExternalFormat::Idx => {
            let labels_path = labels_path
                .ok_or_else(|| Error::invalid("IDX loading needs a label file path"))?;
            let images = load_idx_images(images_path)?;
            let labels = load_idx_labels(labels_path)?;
            if images.len() != labels.len() {
                return Err(Error::invalid(format!(
                    "{} images but {} labels",
                    images.len(),
                    labels.len()
                )));
            }
            let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
            LabeledDataset::new(images, labels, classes)
        }
    }
}
