//! Raw volume files.
//!
//! A volume is two files: the little-endian payload at `path` and a text
//! header at `path.hdr`:
//!
//! ```text
//! ffn-volume 1
//! dims 64 64 32
//! dtype f32
//! order x-fastest
//! range unit
//! ```
//!
//! `dtype` is `f32` (intensities, range `unit`), `u8` (8-bit intensities,
//! scaled by 1/255 on load, range `byte`) or `u32` (labels, range `labels`).
//! Only `f32` and `u32` are written.

use std::fs;
use std::path::{Path, PathBuf};

use super::{voxel_count, Dims, Grid, ImageVolume, SegmentationVolume};
use crate::error::{Error, Result};

const MAGIC: &str = "ffn-volume 1";
const ORDER: &str = "x-fastest";

#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Image(ImageVolume),
    Labels(SegmentationVolume),
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn write_header(path: &Path, dims: Dims, dtype: &str, range: &str) -> Result<()> {
    let text = format!(
        "{MAGIC}\ndims {} {} {}\ndtype {dtype}\norder {ORDER}\nrange {range}\n",
        dims[0], dims[1], dims[2]
    );
    let hdr = header_path(path);
    fs::write(&hdr, text).map_err(|e| Error::io(hdr, e))
}

struct Header {
    dims: Dims,
    dtype: String,
}

fn read_header(path: &Path) -> Result<Header> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: hdr.clone(),
        reason,
    };
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(MAGIC) {
        return Err(malformed(format!("first line must be `{MAGIC}`")));
    }
    let (mut dims, mut dtype, mut order) = (None, None, None);
    for line in lines {
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| malformed(format!("line `{line}` has no value")))?;
        let value = value.trim();
        match key {
            "dims" => {
                let parts: Vec<usize> = value
                    .split_whitespace()
                    .map(|p| p.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| malformed(format!("bad dims `{value}`")))?;
                if parts.len() != 3 || parts.contains(&0) {
                    return Err(malformed(format!("dims must be three positive integers, got `{value}`")));
                }
                dims = Some([parts[0], parts[1], parts[2]]);
            }
            "dtype" => dtype = Some(value.to_string()),
            "order" => order = Some(value.to_string()),
            "range" => {}
            _ => return Err(malformed(format!("unknown key `{key}`"))),
        }
    }
    let dims = dims.ok_or_else(|| malformed("missing `dims`".into()))?;
    let dtype = dtype.ok_or_else(|| malformed("missing `dtype`".into()))?;
    match order.as_deref() {
        Some(ORDER) => {}
        other => return Err(malformed(format!("order must be `{ORDER}`, got {other:?}"))),
    }
    Ok(Header { dims, dtype })
}

fn read_payload(path: &Path, dims: Dims, elem_size: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = voxel_count(dims);
    if bytes.len() != expected * elem_size {
        return Err(Error::PayloadMismatch {
            expected,
            actual: bytes.len() / elem_size,
        });
    }
    Ok(bytes)
}

pub fn save_image(volume: &ImageVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = volume.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_header(path, volume.dims(), "f32", "unit")
}

pub fn save_labels(volume: &SegmentationVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = volume.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_header(path, volume.dims(), "u32", "labels")
}

pub fn save_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    match volume {
        Volume::Image(v) => save_image(v, path),
        Volume::Labels(v) => save_labels(v, path),
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let dims = header.dims;
    match header.dtype.as_str() {
        "f32" => {
            let bytes = read_payload(path, dims, 4)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Volume::Image(ImageVolume::from_vec(dims, data)?))
        }
        "u8" => {
            let bytes = read_payload(path, dims, 1)?;
            Ok(Volume::Image(ImageVolume::from_u8(dims, &bytes)?))
        }
        "u32" => {
            let bytes = read_payload(path, dims, 4)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Volume::Labels(Grid::from_vec(dims, data)?))
        }
        other => Err(Error::UnsupportedDtype(other.to_string())),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageVolume> {
    match load_volume(path)? {
        Volume::Image(v) => Ok(v),
        Volume::Labels(_) => Err(Error::UnsupportedDtype(
            "u32 (expected an intensity volume)".into(),
        )),
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<SegmentationVolume> {
    match load_volume(path)? {
        Volume::Labels(v) => Ok(v),
        Volume::Image(_) => Err(Error::UnsupportedDtype(
            "f32/u8 (expected a label volume)".into(),
        )),
    }
}
