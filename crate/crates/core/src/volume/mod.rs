//! Voxel-grid containers, file I/O and geometric preprocessing.
//!
//! All grids are stored in x-fastest linear order: the voxel `(x, y, z)`
//! lives at `x + nx * (y + ny * z)`.

mod components;
pub mod nifti;
mod ops;
pub mod raw;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{keep_k_largest_components, Connectivity};
pub use ops::{avg_pool_axis, clip_rescale, nn_upsample_axis, threshold};

/// Voxel edge lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = Spacing { sx, sy, sz };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidSpacing(all))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn along(&self, axis: Axis) -> f64 {
        self.as_array()[axis.index()]
    }

    /// Volume of one voxel in millilitres.
    pub fn voxel_volume_ml(&self) -> f64 {
        self.sx * self.sy * self.sz / 1000.0
    }

    fn scaled(&self, axis: Axis, factor: f64) -> Self {
        let mut a = self.as_array();
        a[axis.index()] *= factor;
        Spacing {
            sx: a[0],
            sy: a[1],
            sz: a[2],
        }
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing {
            sx: 1.0,
            sy: 1.0,
            sz: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Dense 3-D grid with anisotropic spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: Spacing,
    data: Vec<T>,
}

/// Integer label map (raw taxonomy ids, 0 is background).
pub type LabelVolume = Volume<u8>;
/// Single-class foreground mask.
pub type BinaryMask = Volume<bool>;
/// Real-valued volume (intensities, a probability channel, a distance field).
pub type ScalarVolume = Volume<f64>;

impl<T> Volume<T> {
    pub fn new(dims: [usize; 3], spacing: Spacing, data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        spacing.validate()?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    /// Same grid (dims and spacing) as `other`.
    pub fn same_grid<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn check_same_grid<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        if self.spacing != other.spacing {
            return Err(Error::ShapeMismatch(format!(
                "spacing {:?} vs {:?}",
                self.spacing.as_array(),
                other.spacing.as_array()
            )));
        }
        Ok(())
    }

    /// New volume on the same grid with each voxel mapped through `f`.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn with_data<U>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(self.dims, self.spacing, data)
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(dims: [usize; 3], spacing: Spacing, value: T) -> Result<Self> {
        check_dims(dims)?;
        Self::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all_background(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_grid(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        self.with_data(data)
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_grid(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect();
        self.with_data(data)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_grid(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        self.with_data(data)
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidDims(dims));
    }
    dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or(Error::InvalidDims(dims))?;
    Ok(())
}

/// Per-voxel probability distributions over `channels` classes.
///
/// Stored voxel-major: channel `c` of voxel `i` is `data[i * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    dims: [usize; 3],
    spacing: Spacing,
    channels: usize,
    data: Vec<f64>,
    normalized: bool,
}

/// Tolerance on per-voxel channel sums for a volume flagged normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-5;

impl ProbVolume {
    /// Builds a probability volume from voxel-major data.
    ///
    /// Every component must lie in `[0, 1]`. The `normalized` flag is
    /// computed from the data.
    pub fn new(dims: [usize; 3], spacing: Spacing, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        spacing.validate()?;
        if channels == 0 {
            return Err(Error::InvalidArgument("probability volume needs at least one channel".into()));
        }
        let expected = dims[0] * dims[1] * dims[2] * channels;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "probability component {bad} outside [0, 1]"
            )));
        }
        let normalized = data
            .chunks_exact(channels)
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE);
        Ok(ProbVolume {
            dims,
            spacing,
            channels,
            data,
            normalized,
        })
    }

    /// Assembles a probability volume from one scalar volume per channel.
    pub fn from_channels(channels: &[ScalarVolume]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or(Error::EmptyInput("no probability channels"))?;
        for c in &channels[1..] {
            first.check_same_grid(c)?;
        }
        let n = first.len();
        let nc = channels.len();
        let mut data = vec![0.0; n * nc];
        for (c, vol) in channels.iter().enumerate() {
            for (i, &p) in vol.data().iter().enumerate() {
                data[i * nc + c] = p;
            }
        }
        Self::new(first.dims(), first.spacing(), nc, data)
    }

    /// Builds a one-hot volume from class indices in `0..channels`.
    pub fn one_hot(dims: [usize; 3], spacing: Spacing, channels: usize, classes: &[usize]) -> Result<Self> {
        let mut data = vec![0.0; classes.len() * channels];
        for (i, &c) in classes.iter().enumerate() {
            if c >= channels {
                return Err(Error::InvalidArgument(format!("class index {c} >= {channels} channels")));
            }
            data[i * channels + c] = 1.0;
        }
        Self::new(dims, spacing, channels, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn voxel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    pub fn channel(&self, c: usize) -> Result<ScalarVolume> {
        if c >= self.channels {
            return Err(Error::InvalidArgument(format!("channel {c} >= {}", self.channels)));
        }
        let data = self.rows().map(|row| row[c]).collect();
        Volume::new(self.dims, self.spacing, data)
    }

    pub(crate) fn with_data_unchecked(&self, data: Vec<f64>, normalized: bool) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        ProbVolume {
            dims: self.dims,
            spacing: self.spacing,
            channels: self.channels,
            data,
            normalized,
        }
    }

    pub fn check_same_grid(&self, other: &ProbVolume) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?}/{:?} vs {:?}/{:?}",
                self.dims,
                self.spacing.as_array(),
                other.dims,
                other.spacing.as_array()
            )));
        }
        if self.channels != other.channels {
            return Err(Error::ShapeMismatch(format!(
                "{} channels vs {}",
                self.channels, other.channels
            )));
        }
        Ok(())
    }
}
