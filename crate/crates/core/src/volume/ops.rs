use super::{Axis, BinaryMask, ScalarVolume, Volume};
use crate::error::{Error, Result};

/// Clamps intensities to `[lo, hi]` and maps that window linearly onto
/// `[out_lo, out_hi]`.
pub fn clip_rescale(vol: &ScalarVolume, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> Result<ScalarVolume> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("clip window lo {lo} must be < hi {hi}")));
    }
    if !(out_lo < out_hi) {
        return Err(Error::InvalidArgument(format!(
            "output range lo {out_lo} must be < hi {out_hi}"
        )));
    }
    let scale = (out_hi - out_lo) / (hi - lo);
    Ok(vol.map(|&v| {
        let r = out_lo + (v.clamp(lo, hi) - lo) * scale;
        r.clamp(out_lo, out_hi)
    }))
}

/// Voxel-aligned view of the grid as `outer × n × inner` around `axis`.
fn axis_layout(dims: [usize; 3], axis: Axis) -> (usize, usize, usize) {
    let [nx, ny, nz] = dims;
    match axis {
        Axis::X => (ny * nz, nx, 1),
        Axis::Y => (nz, ny, nx),
        Axis::Z => (1, nz, nx * ny),
    }
}

/// Block-mean downsampling along one axis. Trailing voxels that do not
/// fill a whole block are dropped.
pub fn avg_pool_axis(vol: &ScalarVolume, axis: Axis, factor: usize) -> Result<ScalarVolume> {
    let dims = vol.dims();
    let n = dims[axis.index()];
    if factor == 0 {
        return Err(Error::InvalidArgument("pooling factor must be >= 1".into()));
    }
    if factor > n {
        return Err(Error::InvalidArgument(format!(
            "pooling factor {factor} exceeds axis length {n}"
        )));
    }
    let m = n / factor;
    let (outer, _, inner) = axis_layout(dims, axis);
    let mut out = vec![0.0; outer * m * inner];
    let src = vol.data();
    let inv = 1.0 / factor as f64;
    for o in 0..outer {
        for j in 0..m {
            for i in 0..inner {
                let mut acc = 0.0;
                for k in 0..factor {
                    acc += src[(o * n + j * factor + k) * inner + i];
                }
                out[(o * m + j) * inner + i] = acc * inv;
            }
        }
    }
    let mut new_dims = dims;
    new_dims[axis.index()] = m;
    Volume::new(new_dims, vol.spacing().scaled(axis, factor as f64), out)
}

/// Nearest-neighbour upsampling along one axis: each slice is repeated
/// `factor` times and the remaining `target_len - n * factor` trailing
/// slices are filled with `T::default()`.
pub fn nn_upsample_axis<T: Copy + Default>(
    vol: &Volume<T>,
    axis: Axis,
    factor: usize,
    target_len: usize,
) -> Result<Volume<T>> {
    let dims = vol.dims();
    let n = dims[axis.index()];
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be >= 1".into()));
    }
    if target_len < n * factor {
        return Err(Error::InvalidArgument(format!(
            "target length {target_len} shorter than {n} x {factor}"
        )));
    }
    let (outer, _, inner) = axis_layout(dims, axis);
    let mut out = vec![T::default(); outer * target_len * inner];
    let src = vol.data();
    for o in 0..outer {
        for j in 0..n {
            let from = &src[(o * n + j) * inner..(o * n + j + 1) * inner];
            for k in 0..factor {
                let start = (o * target_len + j * factor + k) * inner;
                out[start..start + inner].copy_from_slice(from);
            }
        }
    }
    let mut new_dims = dims;
    new_dims[axis.index()] = target_len;
    Volume::new(new_dims, vol.spacing().scaled(axis, 1.0 / factor as f64), out)
}

/// Foreground where `p >= t`.
pub fn threshold(prob: &ScalarVolume, t: f64) -> BinaryMask {
    prob.map(|&p| p >= t)
}
