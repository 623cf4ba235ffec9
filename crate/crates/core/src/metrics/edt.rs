//! Exact anisotropic Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas transform (Felzenszwalb &
//! Huttenlocher), one pass per axis with the squared spacing as the
//! parabola weight. Distances are between voxel centres, in mm.

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, ScalarVolume};

/// Scratch buffers for the 1-D transform, reused across lines.
struct Scratch {
    f: Vec<f64>,
    d: Vec<f64>,
    v: Vec<usize>,
    h: Vec<f64>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            f: vec![0.0; n],
            d: vec![0.0; n],
            v: vec![0; n],
            h: vec![0.0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `d[q] = min_p w (q - p)^2 + f[p]` over the finite entries of `f`.
    fn transform(&mut self, n: usize, w: f64) {
        let f = &self.f[..n];
        let d = &mut self.d[..n];
        let v = &mut self.v;
        let z = &mut self.z;
        let h = &mut self.h;

        let Some(first) = f.iter().position(|x| x.is_finite()) else {
            d.fill(f64::INFINITY);
            return;
        };
        // h[q] = f[q] + w q^2, so the intersection of parabolas p and q
        // sits at (h[q] - h[p]) / (2 w (q - p)).
        let inv2w = 0.5 / w;
        let mut k = 0usize;
        v[0] = first;
        h[0] = f[first] + w * (first * first) as f64;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for (q, &fq) in f.iter().enumerate().skip(first + 1) {
            if !fq.is_finite() {
                continue;
            }
            let hq = fq + w * (q * q) as f64;
            let mut s = (hq - h[k]) * inv2w / (q - v[k]) as f64;
            while k > 0 && s <= z[k] {
                k -= 1;
                s = (hq - h[k]) * inv2w / (q - v[k]) as f64;
            }
            k += 1;
            v[k] = q;
            h[k] = hq;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        let mut k = 0usize;
        for (q, out) in d.iter_mut().enumerate() {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let dq = qf - v[k] as f64;
            *out = w * dq * dq + f[v[k]];
        }
    }
}

/// Lines gathered per tile in the strided passes.
const TILE: usize = 64;
/// Keeps tile rows off power-of-two strides, which alias in the cache.
const PAD: usize = 8;

/// Runs the 1-D transform along a strided axis. Line `j` of a tile starts
/// at `base + j` and steps by `stride`; tiles of up to `TILE` adjacent
/// lines are gathered so reads and writes stay contiguous.
fn strided_pass(field: &mut [f64], bases: impl Iterator<Item = (usize, usize)>, len: usize, stride: usize, w: f64, s: &mut Scratch, buf: &mut [f64]) {
    let ls = len + PAD;
    for (base, t) in bases {
        for i in 0..len {
            let row = &field[base + i * stride..base + i * stride + t];
            for (j, &v) in row.iter().enumerate() {
                buf[j * ls + i] = v;
            }
        }
        for j in 0..t {
            let line = &mut buf[j * ls..j * ls + len];
            s.f[..len].copy_from_slice(line);
            s.transform(len, w);
            line.copy_from_slice(&s.d[..len]);
        }
        for i in 0..len {
            let row = &mut field[base + i * stride..base + i * stride + t];
            for (j, v) in row.iter_mut().enumerate() {
                *v = buf[j * ls + i];
            }
        }
    }
}

/// In-place squared EDT of `field` (0 at sources, +inf elsewhere) over a
/// grid of `dims` with per-axis `spacing`.
pub(crate) fn squared_edt_in_place(field: &mut [f64], dims: [usize; 3], spacing: [f64; 3]) {
    let [nx, ny, nz] = dims;
    debug_assert_eq!(field.len(), nx * ny * nz);
    let mut scratch = Scratch::new(nx.max(ny).max(nz));

    // x: contiguous rows.
    let wx = spacing[0] * spacing[0];
    for row in field.chunks_exact_mut(nx) {
        scratch.f[..nx].copy_from_slice(row);
        scratch.transform(nx, wx);
        row.copy_from_slice(&scratch.d[..nx]);
    }

    let plane = nx * ny;
    let tiles = move |offset: usize| (0..nx).step_by(TILE).map(move |x0| (offset + x0, TILE.min(nx - x0)));
    let mut buf = vec![0.0; TILE * (ny.max(nz) + PAD)];
    if ny > 1 {
        let bases = (0..nz).flat_map(|z| tiles(z * plane));
        strided_pass(field, bases, ny, nx, spacing[1] * spacing[1], &mut scratch, &mut buf);
    }
    if nz > 1 {
        let bases = (0..ny).flat_map(|y| tiles(y * nx));
        strided_pass(field, bases, nz, plane, spacing[2] * spacing[2], &mut scratch, &mut buf);
    }
}

/// Squared distance (mm²) from every voxel to the nearest foreground voxel.
pub fn squared_edt(mask: &BinaryMask) -> Result<ScalarVolume> {
    if mask.is_all_background() {
        return Err(Error::EmptyMask("distance transform needs at least one foreground voxel"));
    }
    let mut field: Vec<f64> = mask
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    squared_edt_in_place(&mut field, mask.dims(), mask.spacing().as_array());
    mask.with_data(field)
}

/// Distance (mm) from every voxel centre to the nearest foreground voxel
/// centre; zero on the foreground.
pub fn edt(mask: &BinaryMask) -> Result<ScalarVolume> {
    let sq = squared_edt(mask)?;
    Ok(sq.map(|&d| d.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    #[test]
    fn all_foreground_is_zero() {
        let m = BinaryMask::filled([3, 4, 5], Spacing::default(), true).unwrap();
        assert!(edt(&m).unwrap().data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn anisotropic_neighbour() {
        let s = Spacing::new(1.0, 1.0, 3.0).unwrap();
        let mut data = vec![false; 27];
        data[13] = true;
        let m = BinaryMask::new([3, 3, 3], s, data).unwrap();
        let d = edt(&m).unwrap();
        assert_eq!(*d.get(1, 1, 2), 3.0);
        assert_eq!(*d.get(1, 1, 0), 3.0);
        assert_eq!(*d.get(2, 1, 1), 1.0);
        assert!((*d.get(0, 0, 0) - (1.0f64 + 1.0 + 9.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = BinaryMask::filled([2, 2, 2], Spacing::default(), false).unwrap();
        assert!(matches!(edt(&m), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn single_line_grids() {
        let s = Spacing::new(0.5, 1.0, 1.0).unwrap();
        let m = BinaryMask::new([5, 1, 1], s, vec![false, false, false, false, true]).unwrap();
        assert_eq!(edt(&m).unwrap().data(), &[2.0, 1.5, 1.0, 0.5, 0.0]);
    }
}
