//! Overlap, surface-distance and volume metrics with the benchmark's
//! absence rules:
//!
//! * DSC is not applicable when the ground truth is empty.
//! * For HD95/ASD an empty mask (either side) is replaced by the
//!   all-foreground mask of the full grid.
//! * AVD is always defined.

mod edt;
mod eval;
mod surface;

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::Result;
use crate::volume::BinaryMask;

pub use edt::{edt, squared_edt};
pub use eval::{evaluate_case, ClassMetrics, EvalOptions, MetricRecord};
pub use surface::{surface, surface_distances, SurfaceDistanceSet};

/// A metric value or the explicit "not applicable" state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MetricValue {
    Value(f64),
    #[default]
    NotApplicable,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::NotApplicable => None,
        }
    }

    pub fn is_applicable(self) -> bool {
        matches!(self, MetricValue::Value(_))
    }

    /// Mean of the applicable values; not applicable if there are none.
    pub fn mean_of(values: impl IntoIterator<Item = MetricValue>) -> MetricValue {
        let (sum, n) = values
            .into_iter()
            .filter_map(MetricValue::value)
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            MetricValue::NotApplicable
        } else {
            MetricValue::Value(sum / n as f64)
        }
    }
}

impl From<Option<f64>> for MetricValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(MetricValue::NotApplicable, MetricValue::Value)
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{v}"),
            MetricValue::NotApplicable => f.write_str("NA"),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Value(v) => s.serialize_f64(*v),
            MetricValue::NotApplicable => s.serialize_none(),
        }
    }
}

/// How the pooled surface distances are averaged into ASD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsdMode {
    /// Mean of the symmetric multiset `d_ab ⊎ d_ba`.
    #[default]
    Pooled,
    /// Average of the two directed means.
    DirectedMean,
}

fn count_pair(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize)> {
    pred.check_same_grid(gt)?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        p += a as usize;
        g += b as usize;
        both += (a && b) as usize;
    }
    Ok((p, g, both))
}

/// Dice overlap `2|P∩G| / (|P| + |G|)`; not applicable for empty ground truth.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    let (p, g, both) = count_pair(pred, gt)?;
    if g == 0 {
        return Ok(MetricValue::NotApplicable);
    }
    Ok(MetricValue::Value(2.0 * both as f64 / (p + g) as f64))
}

/// Absolute volume difference in millilitres.
pub fn avd(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    let (p, g, _) = count_pair(pred, gt)?;
    Ok(MetricValue::Value(p.abs_diff(g) as f64 * pred.spacing().voxel_volume_ml()))
}

/// Fraction of ground-truth lesion voxels covered by the predicted lung.
pub fn sensitivity(lung_pred: &BinaryMask, lesion_gt: &BinaryMask) -> Result<MetricValue> {
    let (_, g, both) = count_pair(lung_pred, lesion_gt)?;
    if g == 0 {
        return Ok(MetricValue::NotApplicable);
    }
    Ok(MetricValue::Value(both as f64 / g as f64))
}

/// Percentile `q` in `[0, 100]` with linear interpolation between the
/// closest order statistics (rank `q/100 * (n - 1)`). Reorders `values`.
pub fn percentile_linear(values: &mut [f64], q: f64) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let rank = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, &mut a, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Some(a);
    }
    let b = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Some(a + frac * (b - a))
}

/// HD95 and ASD with the pooled ASD convention.
pub fn hd95_asd(pred: &BinaryMask, gt: &BinaryMask) -> Result<(MetricValue, MetricValue)> {
    hd95_asd_with(pred, gt, AsdMode::Pooled)
}

/// HD95 and ASD. An empty mask on either side is replaced by the
/// all-foreground grid before surfaces are extracted.
pub fn hd95_asd_with(pred: &BinaryMask, gt: &BinaryMask, mode: AsdMode) -> Result<(MetricValue, MetricValue)> {
    pred.check_same_grid(gt)?;
    let filled;
    let pred = if pred.is_all_background() {
        filled = BinaryMask::filled(pred.dims(), pred.spacing(), true)?;
        &filled
    } else {
        pred
    };
    let filled_gt;
    let gt = if gt.is_all_background() {
        filled_gt = BinaryMask::filled(gt.dims(), gt.spacing(), true)?;
        &filled_gt
    } else {
        gt
    };
    let set = surface_distances(pred, gt)?;
    let asd = match mode {
        AsdMode::Pooled => set.pooled_mean(),
        AsdMode::DirectedMean => set.directed_mean(),
    };
    let mut pooled = set.into_pooled();
    let hd95 = percentile_linear(&mut pooled, 95.0);
    Ok((hd95.into(), asd.into()))
}
