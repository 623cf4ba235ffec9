use super::edt::squared_edt_in_place;
use crate::error::{Error, Result};
use crate::volume::BinaryMask;

/// Foreground voxels with at least one face neighbour that is background
/// or lies outside the grid.
pub fn surface(mask: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let d = mask.data();
    let plane = nx * ny;
    let mut out = vec![false; d.len()];
    for z in 0..nz {
        for y in 0..ny {
            let row = z * plane + y * nx;
            for x in 0..nx {
                let i = row + x;
                if !d[i] {
                    continue;
                }
                out[i] = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !d[i - 1]
                    || !d[i + 1]
                    || !d[i - nx]
                    || !d[i + nx]
                    || !d[i - plane]
                    || !d[i + plane];
            }
        }
    }
    mask.with_data(out).expect("same grid")
}

/// Directed surface-to-surface distances in mm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceDistanceSet {
    /// For every surface voxel of A (scan order), distance to surface(B).
    pub d_ab: Vec<f64>,
    /// For every surface voxel of B (scan order), distance to surface(A).
    pub d_ba: Vec<f64>,
}

impl SurfaceDistanceSet {
    pub fn pooled_mean(&self) -> Option<f64> {
        let n = self.d_ab.len() + self.d_ba.len();
        if n == 0 {
            return None;
        }
        let sum: f64 = self.d_ab.iter().chain(&self.d_ba).sum();
        Some(sum / n as f64)
    }

    pub fn directed_mean(&self) -> Option<f64> {
        if self.d_ab.is_empty() || self.d_ba.is_empty() {
            return None;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(0.5 * (mean(&self.d_ab) + mean(&self.d_ba)))
    }

    pub fn max(&self) -> Option<f64> {
        self.d_ab.iter().chain(&self.d_ba).copied().reduce(f64::max)
    }

    pub fn into_pooled(mut self) -> Vec<f64> {
        self.d_ab.append(&mut self.d_ba);
        self.d_ab
    }
}

/// Bounding box `[lo, hi)` per axis of the foreground of `a` or `b`.
fn union_bbox(a: &BinaryMask, b: &BinaryMask) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let [nx, ny, _] = a.dims();
    let plane = nx * ny;
    let mut any = false;
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if !(x || y) {
            continue;
        }
        any = true;
        let c = [i % nx, (i / nx) % ny, i / plane];
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k] + 1);
        }
    }
    any.then_some((lo, hi))
}

/// Squared distance to the nearest foreground voxel of `src`, evaluated on
/// the sub-grid `[lo, hi)`. Exact as long as every foreground voxel of
/// `src` lies inside that box.
fn cropped_squared_edt(src: &BinaryMask, lo: [usize; 3], hi: [usize; 3]) -> Vec<f64> {
    let [nx, ny, _] = src.dims();
    let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let d = src.data();
    let mut field = Vec::with_capacity(dims.iter().product());
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            let row = (z * ny + y) * nx;
            field.extend(d[row + lo[0]..row + hi[0]].iter().map(|&b| if b { 0.0 } else { f64::INFINITY }));
        }
    }
    squared_edt_in_place(&mut field, dims, src.spacing().as_array());
    field
}

fn directed(from: &BinaryMask, to_field: &[f64], lo: [usize; 3], hi: [usize; 3]) -> Vec<f64> {
    let [nx, ny, _] = from.dims();
    let cx = hi[0] - lo[0];
    let cy = hi[1] - lo[1];
    let d = from.data();
    let mut out = Vec::new();
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            let row = (z * ny + y) * nx;
            let crow = ((z - lo[2]) * cy + (y - lo[1])) * cx;
            for x in lo[0]..hi[0] {
                if d[row + x] {
                    out.push(to_field[crow + x - lo[0]].sqrt());
                }
            }
        }
    }
    out
}

/// Distances between the surfaces of two nonempty masks, measured
/// between voxel centres via the distance transform.
pub fn surface_distances(a: &BinaryMask, b: &BinaryMask) -> Result<SurfaceDistanceSet> {
    a.check_same_grid(b)?;
    let sa = surface(a);
    let sb = surface(b);
    let Some((lo, hi)) = union_bbox(&sa, &sb) else {
        return Err(Error::EmptyMask("surface distances need two nonempty masks"));
    };
    if sa.is_all_background() || sb.is_all_background() {
        return Err(Error::EmptyMask("surface distances need two nonempty masks"));
    }
    let to_b = cropped_squared_edt(&sb, lo, hi);
    let d_ab = directed(&sa, &to_b, lo, hi);
    drop(to_b);
    let to_a = cropped_squared_edt(&sa, lo, hi);
    let d_ba = directed(&sb, &to_a, lo, hi);
    Ok(SurfaceDistanceSet { d_ab, d_ba })
}
