//! The `BSTACK01` raster container.
//!
//! Layout: 8-byte magic, a little-endian `u32` header length, the UTF-8
//! JSON header, `band_count` planes of little-endian `f32` (band-major,
//! row-major), one `u8` label plane and one `u8` valid-mask plane.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 8] = b"BSTACK01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub band_count: usize,
    pub band_names: Vec<String>,
    pub nodata_value: Option<f32>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRaster {
    pub header: RawHeader,
    pub planes: Vec<Vec<f32>>,
    pub label: Vec<u8>,
    pub valid: Vec<u8>,
}

pub fn write_raw(path: &Path, raster: &RawRaster) -> Result<()> {
    let h = &raster.header;
    let plane = h.width * h.height;
    if raster.planes.len() != h.band_count
        || raster.planes.iter().any(|p| p.len() != plane)
        || raster.label.len() != plane
        || raster.valid.len() != plane
    {
        return Err(Error::invalid(format!("raster {} planes do not match its header", h.id)));
    }
    let json = serde_json::to_vec(h).map_err(|e| Error::json(path, e))?;
    let mut buf = Vec::with_capacity(16 + json.len() + plane * (4 * h.band_count + 2));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in &raster.planes {
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend_from_slice(&raster.label);
    buf.extend_from_slice(&raster.valid);

    write_atomic(path, &buf)
}

pub fn read_raw(path: &Path) -> Result<RawRaster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |field: &'static str, msg: String| Error::Format { path: path.to_path_buf(), field, msg };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("magic", "not a BSTACK01 container".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hend = 12usize.checked_add(hlen).filter(|&e| e <= bytes.len());
    let hend = hend.ok_or_else(|| bad("header", format!("declared length {hlen} exceeds file size")))?;
    let header: RawHeader =
        serde_json::from_slice(&bytes[12..hend]).map_err(|e| bad("header", e.to_string()))?;
    if header.band_names.len() != header.band_count {
        return Err(bad(
            "band_names",
            format!("{} names for {} bands", header.band_names.len(), header.band_count),
        ));
    }
    let plane = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| bad("width", "raster size overflows".into()))?;
    let expected = plane * (4 * header.band_count + 2);
    let body = &bytes[hend..];
    if body.len() != expected {
        return Err(bad(
            "planes",
            format!(
                "expected {expected} bytes for {} bands of {}x{} plus label and mask, found {}",
                header.band_count,
                header.width,
                header.height,
                body.len()
            ),
        ));
    }
    let fbytes = 4 * plane;
    let planes = (0..header.band_count)
        .map(|b| {
            body[b * fbytes..(b + 1) * fbytes]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
        .collect();
    let off = header.band_count * fbytes;
    let label = body[off..off + plane].to_vec();
    let valid = body[off + plane..].to_vec();
    Ok(RawRaster { header, planes, label, valid })
}
