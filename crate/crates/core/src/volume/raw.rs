//! Headerless little-endian payload (`<name>.raw`) with a JSON sidecar
//! (`<name>.json`) describing the grid.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::nifti::AnyVolume;
use super::{Spacing, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
}

/// Returns the `(payload, sidecar)` pair for a path naming either file
/// or their shared stem.
pub fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("raw"), with("json"))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let (payload_path, sidecar_path) = raw_paths(path.as_ref());
    let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let bad = |reason: String| Error::Sidecar {
        path: sidecar_path.clone(),
        reason,
    };
    let meta: RawSidecar = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if meta.order != "x-fastest" {
        return Err(bad(format!("unsupported order {:?}", meta.order)));
    }
    let spacing = Spacing::from_array(meta.spacing_mm).map_err(|e| bad(e.to_string()))?;
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let n = meta.dims.iter().product::<usize>();
    let need = |size: usize| {
        if bytes.len() != n * size {
            Err(Error::TruncatedPayload {
                expected: n * size,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    Ok(match meta.dtype.as_str() {
        "u8" => {
            need(1)?;
            AnyVolume::U8(Volume::new(meta.dims, spacing, bytes)?)
        }
        "i16" => {
            need(2)?;
            let mut data = vec![0i16; n];
            LittleEndian::read_i16_into(&bytes, &mut data);
            AnyVolume::I16(Volume::new(meta.dims, spacing, data)?)
        }
        "f32" => {
            need(4)?;
            let mut data = vec![0f32; n];
            LittleEndian::read_f32_into(&bytes, &mut data);
            AnyVolume::F32(Volume::new(meta.dims, spacing, data)?)
        }
        other => return Err(bad(format!("unsupported dtype {other:?}"))),
    })
}

pub fn write_raw(vol: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    let (payload_path, sidecar_path) = raw_paths(path.as_ref());
    let (dtype, bytes) = match vol {
        AnyVolume::U8(v) => ("u8", v.data().to_vec()),
        AnyVolume::I16(v) => {
            let mut b = vec![0u8; v.len() * 2];
            LittleEndian::write_i16_into(v.data(), &mut b);
            ("i16", b)
        }
        AnyVolume::F32(v) => {
            let mut b = vec![0u8; v.len() * 4];
            LittleEndian::write_f32_into(v.data(), &mut b);
            ("f32", b)
        }
        AnyVolume::F64(v) => {
            let narrowed: Vec<f32> = v.data().iter().map(|&x| x as f32).collect();
            let mut b = vec![0u8; narrowed.len() * 4];
            LittleEndian::write_f32_into(&narrowed, &mut b);
            ("f32", b)
        }
    };
    let meta = RawSidecar {
        dims: vol.dims(),
        spacing_mm: vol.spacing().as_array(),
        dtype: dtype.into(),
        order: "x-fastest".into(),
    };
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))
}

/// Reads either format, choosing by extension (`.raw`/`.json` select the
/// sidecar format, anything else is NIfTI).
pub fn read_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => read_raw(path),
        _ => super::nifti::read_nifti(path),
    }
}

pub fn write_volume(vol: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => write_raw(vol, path),
        _ => super::nifti::write_nifti(vol, path),
    }
}
