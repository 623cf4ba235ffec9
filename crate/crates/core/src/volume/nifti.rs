//! NIfTI-1 single-file (`.nii`, `.nii.gz`) and header/image pair
//! (`.hdr` + `.img`) support for 3-D `uint8`, `int16` and `float32`
//! volumes.
//!
//! Only the fields needed for spacing-based metrics are interpreted:
//! `dim`, `pixdim`, `datatype`, `vox_offset` and the intensity scaling
//! pair. qform/sform orientation and header extensions are ignored on
//! read and left empty on write.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{BinaryMask, LabelVolume, ScalarVolume, Spacing, Volume};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

/// A volume as stored on disk, in its native voxel type.
///
/// `F64` only arises when a non-identity `scl_slope`/`scl_inter` pair
/// was applied on read; it is written back as `float32`.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    U8(Volume<u8>),
    I16(Volume<i16>),
    F32(Volume<f32>),
    F64(Volume<f64>),
}

impl AnyVolume {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            AnyVolume::U8(v) => v.dims(),
            AnyVolume::I16(v) => v.dims(),
            AnyVolume::F32(v) => v.dims(),
            AnyVolume::F64(v) => v.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            AnyVolume::U8(v) => v.spacing(),
            AnyVolume::I16(v) => v.spacing(),
            AnyVolume::F32(v) => v.spacing(),
            AnyVolume::F64(v) => v.spacing(),
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            AnyVolume::U8(_) => "u8",
            AnyVolume::I16(_) => "i16",
            AnyVolume::F32(_) => "f32",
            AnyVolume::F64(_) => "f64",
        }
    }

    /// Interprets the voxels as raw labels. Values must be integers in
    /// `[0, 255]`.
    pub fn into_labels(self) -> Result<LabelVolume> {
        fn conv<T: Copy + Into<f64>>(v: &Volume<T>) -> Result<LabelVolume> {
            let mut out = Vec::with_capacity(v.len());
            for &x in v.data() {
                let f: f64 = x.into();
                if f.fract() != 0.0 || !(0.0..=255.0).contains(&f) {
                    return Err(Error::InvalidArgument(format!(
                        "voxel value {f} is not a label in [0, 255]"
                    )));
                }
                out.push(f as u8);
            }
            v.with_data(out)
        }
        match self {
            AnyVolume::U8(v) => Ok(v),
            AnyVolume::I16(v) => conv(&v),
            AnyVolume::F32(v) => conv(&v),
            AnyVolume::F64(v) => conv(&v),
        }
    }

    pub fn into_scalar(self) -> ScalarVolume {
        match self {
            AnyVolume::U8(v) => v.map(|&x| x as f64),
            AnyVolume::I16(v) => v.map(|&x| x as f64),
            AnyVolume::F32(v) => v.map(|&x| x as f64),
            AnyVolume::F64(v) => v,
        }
    }

    /// Nonzero voxels are foreground.
    pub fn into_mask(self) -> BinaryMask {
        self.into_scalar().map(|&x| x != 0.0)
    }
}

impl From<LabelVolume> for AnyVolume {
    fn from(v: LabelVolume) -> Self {
        AnyVolume::U8(v)
    }
}

impl From<Volume<i16>> for AnyVolume {
    fn from(v: Volume<i16>) -> Self {
        AnyVolume::I16(v)
    }
}

impl From<Volume<f32>> for AnyVolume {
    fn from(v: Volume<f32>) -> Self {
        AnyVolume::F32(v)
    }
}

impl From<ScalarVolume> for AnyVolume {
    fn from(v: ScalarVolume) -> Self {
        AnyVolume::F64(v)
    }
}

#[derive(Debug, Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Header {
    endian: Endian,
    dims: [usize; 3],
    spacing: Spacing,
    datatype: i16,
    vox_offset: usize,
    slope: f32,
    inter: f32,
    single_file: bool,
}

fn read_i16(e: Endian, b: &[u8]) -> i16 {
    match e {
        Endian::Little => LittleEndian::read_i16(b),
        Endian::Big => BigEndian::read_i16(b),
    }
}

fn read_f32(e: Endian, b: &[u8]) -> f32 {
    match e {
        Endian::Little => LittleEndian::read_f32(b),
        Endian::Big => BigEndian::read_f32(b),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::TruncatedPayload {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    let endian = match (LittleEndian::read_i32(bytes), BigEndian::read_i32(bytes)) {
        (348, _) => Endian::Little,
        (_, 348) => Endian::Big,
        (le, _) => return Err(Error::BadHeaderSize(le)),
    };
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[344..348]);
    let single_file = match &magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => return Err(Error::BadMagic(magic)),
    };

    let ndim = read_i16(endian, &bytes[40..]);
    if ndim != 3 {
        return Err(Error::UnsupportedDimensionality(ndim));
    }
    let mut dims = [0usize; 3];
    for (k, d) in dims.iter_mut().enumerate() {
        let v = read_i16(endian, &bytes[42 + 2 * k..]);
        if v < 1 {
            return Err(Error::InvalidHeader {
                field: "dim",
                reason: format!("dim[{}] = {v}", k + 1),
            });
        }
        *d = v as usize;
    }

    let datatype = read_i16(endian, &bytes[70..]);
    if !matches!(datatype, DT_UINT8 | DT_INT16 | DT_FLOAT32) {
        return Err(Error::UnsupportedDatatype(datatype));
    }

    let mut pix = [0f64; 3];
    for (k, p) in pix.iter_mut().enumerate() {
        // pixdim[0] is qfac; spacing lives in pixdim[1..=3].
        *p = read_f32(endian, &bytes[80 + 4 * k..]).abs() as f64;
    }
    let spacing = Spacing::from_array(pix).map_err(|_| Error::InvalidHeader {
        field: "pixdim",
        reason: format!("non-positive spacing {pix:?}"),
    })?;

    let vox_offset = read_f32(endian, &bytes[108..]);
    if !(vox_offset >= 0.0) || vox_offset.fract() != 0.0 {
        return Err(Error::InvalidHeader {
            field: "vox_offset",
            reason: format!("{vox_offset}"),
        });
    }
    let vox_offset = vox_offset as usize;
    if single_file && vox_offset < HEADER_SIZE {
        return Err(Error::InvalidHeader {
            field: "vox_offset",
            reason: format!("{vox_offset} overlaps the header"),
        });
    }

    Ok(Header {
        endian,
        dims,
        spacing,
        datatype,
        vox_offset,
        slope: read_f32(endian, &bytes[112..]),
        inter: read_f32(endian, &bytes[116..]),
        single_file,
    })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn companion_image(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let img = if let Some(stem) = name.strip_suffix(".hdr.gz") {
        format!("{stem}.img.gz")
    } else if let Some(stem) = name.strip_suffix(".hdr") {
        format!("{stem}.img")
    } else {
        format!("{name}.img")
    };
    path.with_file_name(img)
}

fn decode<T>(bytes: &[u8], n: usize, size: usize, f: impl Fn(&[u8]) -> T) -> Result<Vec<T>> {
    let expected = n * size;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[..expected].chunks_exact(size).map(f).collect())
}

/// Reads a 3-D NIfTI-1 volume. Gzip compression is detected from the
/// stream itself, not the file extension.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let hdr = parse_header(&bytes)?;
    let payload_owned;
    let payload: &[u8] = if hdr.single_file {
        bytes.get(hdr.vox_offset..).unwrap_or(&[])
    } else {
        payload_owned = read_maybe_gz(&companion_image(path))?;
        payload_owned.get(hdr.vox_offset..).unwrap_or(&[])
    };

    let n = hdr.dims[0] * hdr.dims[1] * hdr.dims[2];
    let e = hdr.endian;
    let vol = match hdr.datatype {
        DT_UINT8 => AnyVolume::U8(Volume::new(hdr.dims, hdr.spacing, decode(payload, n, 1, |b| b[0])?)?),
        DT_INT16 => AnyVolume::I16(Volume::new(hdr.dims, hdr.spacing, decode(payload, n, 2, |b| read_i16(e, b))?)?),
        DT_FLOAT32 => AnyVolume::F32(Volume::new(hdr.dims, hdr.spacing, decode(payload, n, 4, |b| read_f32(e, b))?)?),
        other => return Err(Error::UnsupportedDatatype(other)),
    };

    let identity = hdr.slope == 0.0 || (hdr.slope == 1.0 && hdr.inter == 0.0);
    if identity || !hdr.slope.is_finite() || !hdr.inter.is_finite() {
        return Ok(vol);
    }
    let (slope, inter) = (hdr.slope as f64, hdr.inter as f64);
    let scaled = vol.into_scalar().map(|&v| v * slope + inter);
    Ok(AnyVolume::F64(scaled))
}

fn build_header(dims: [usize; 3], spacing: Spacing, datatype: i16, bitpix: i16) -> Result<[u8; HEADER_SIZE]> {
    let mut h = [0u8; HEADER_SIZE];
    LittleEndian::write_i32(&mut h[0..], HEADER_SIZE as i32);
    h[38] = b'r';
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for k in 0..3 {
        dim[k + 1] = i16::try_from(dims[k]).map_err(|_| {
            Error::InvalidArgument(format!("dimension {} does not fit a NIfTI-1 header", dims[k]))
        })?;
    }
    for (k, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * k..], *d);
    }
    LittleEndian::write_i16(&mut h[70..], datatype);
    LittleEndian::write_i16(&mut h[72..], bitpix);
    let pixdim = [1.0f32, spacing.sx as f32, spacing.sy as f32, spacing.sz as f32, 1.0, 1.0, 1.0, 1.0];
    for (k, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * k..], *p);
    }
    LittleEndian::write_f32(&mut h[108..], SINGLE_FILE_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..], 1.0);
    LittleEndian::write_f32(&mut h[116..], 0.0);
    // NIFTI_UNITS_MM
    h[123] = 2;
    h[344..348].copy_from_slice(b"n+1\0");
    Ok(h)
}

fn encode(vol: &AnyVolume) -> Result<Vec<u8>> {
    let dims = vol.dims();
    let spacing = vol.spacing();
    let (datatype, bitpix, payload) = match vol {
        AnyVolume::U8(v) => (DT_UINT8, 8, v.data().to_vec()),
        AnyVolume::I16(v) => {
            let mut buf = vec![0u8; v.len() * 2];
            LittleEndian::write_i16_into(v.data(), &mut buf);
            (DT_INT16, 16, buf)
        }
        AnyVolume::F32(v) => {
            let mut buf = vec![0u8; v.len() * 4];
            LittleEndian::write_f32_into(v.data(), &mut buf);
            (DT_FLOAT32, 32, buf)
        }
        AnyVolume::F64(v) => {
            let narrowed: Vec<f32> = v.data().iter().map(|&x| x as f32).collect();
            let mut buf = vec![0u8; narrowed.len() * 4];
            LittleEndian::write_f32_into(&narrowed, &mut buf);
            (DT_FLOAT32, 32, buf)
        }
    };
    let mut out = Vec::with_capacity(SINGLE_FILE_OFFSET + payload.len());
    out.extend_from_slice(&build_header(dims, spacing, datatype, bitpix)?);
    // Empty extension block.
    out.extend_from_slice(&[0u8; 4]);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes a single-file NIfTI-1 volume, little-endian. A `.gz` suffix
/// selects gzip compression.
pub fn write_nifti(vol: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(vol)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(&bytes)
            .and_then(|_| enc.finish())
            .and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes() -> Vec<u8> {
        let v = LabelVolume::new([4, 4, 4], Spacing::new(1.0, 1.0, 3.0).unwrap(), vec![7; 64]).unwrap();
        encode(&AnyVolume::U8(v)).unwrap()
    }

    #[test]
    fn header_echo() {
        let bytes = header_bytes();
        let h = parse_header(&bytes).unwrap();
        assert_eq!(h.dims, [4, 4, 4]);
        assert_eq!(h.spacing.as_array(), [1.0, 1.0, 3.0]);
        assert_eq!(h.datatype, DT_UINT8);
        assert_eq!(h.vox_offset, 352);
    }

    #[test]
    fn distinct_header_errors() {
        let mut b = header_bytes();
        b[344..348].copy_from_slice(b"abc\0");
        assert!(matches!(parse_header(&b), Err(Error::BadMagic(_))));

        let mut b = header_bytes();
        LittleEndian::write_i16(&mut b[70..], 64);
        assert!(matches!(parse_header(&b), Err(Error::UnsupportedDatatype(64))));

        let mut b = header_bytes();
        LittleEndian::write_i16(&mut b[40..], 4);
        assert!(matches!(parse_header(&b), Err(Error::UnsupportedDimensionality(4))));

        let mut b = header_bytes();
        LittleEndian::write_i32(&mut b[0..], 540);
        assert!(matches!(parse_header(&b), Err(Error::BadHeaderSize(540))));

        assert!(matches!(parse_header(&b[..100]), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn big_endian_header_is_understood() {
        let le = header_bytes();
        let mut be = le.clone();
        // Swap the fields parse_header reads.
        for range in [0..4usize, 108..112, 112..116, 116..120] {
            be[range.clone()].reverse();
        }
        for k in 0..8 {
            be[40 + 2 * k..42 + 2 * k].reverse();
            be[76 + 4 * k..80 + 4 * k].reverse();
        }
        be[70..72].reverse();
        let h = parse_header(&be).unwrap();
        assert!(matches!(h.endian, Endian::Big));
        assert_eq!(h.dims, [4, 4, 4]);
        assert_eq!(h.spacing.sz, 3.0);
    }
}
