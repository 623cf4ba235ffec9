use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::percentile_linear;
use crate::taxonomy::{EvalClass, Taxonomy};
use crate::volume::LabelVolume;

/// Lesion groups reported in the volume boxplots.
pub const BOXPLOT_CLASSES: [EvalClass; 5] = EvalClass::LESION_GROUPS;

/// Distribution of nonzero per-case lesion volumes for one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotSeries {
    pub class: String,
    /// Sorted volumes in ml; zero-volume cases are excluded.
    pub volumes_ml: Vec<f64>,
    pub n_present: usize,
    pub n_total: usize,
    pub mean: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    /// Most extreme data points within 1.5 IQR of the quartiles.
    pub whisker_lo: Option<f64>,
    pub whisker_hi: Option<f64>,
    pub outliers: Vec<f64>,
}

impl BoxplotSeries {
    pub fn from_case_volumes(class: &str, per_case_ml: &[f64]) -> Self {
        let mut v: Vec<f64> = per_case_ml.iter().copied().filter(|&x| x > 0.0).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut series = BoxplotSeries {
            class: class.to_string(),
            volumes_ml: v.clone(),
            n_present: n,
            n_total: per_case_ml.len(),
            mean: None,
            q1: None,
            median: None,
            q3: None,
            whisker_lo: None,
            whisker_hi: None,
            outliers: Vec::new(),
        };
        if n == 0 {
            return series;
        }
        let mut scratch = v.clone();
        let q1 = percentile_linear(&mut scratch, 25.0).expect("nonempty");
        let median = percentile_linear(&mut scratch, 50.0).expect("nonempty");
        let q3 = percentile_linear(&mut scratch, 75.0).expect("nonempty");
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        series.mean = Some(v.iter().sum::<f64>() / n as f64);
        series.q1 = Some(q1);
        series.median = Some(median);
        series.q3 = Some(q3);
        series.whisker_lo = v.iter().copied().find(|&x| x >= lo_fence);
        series.whisker_hi = v.iter().rev().copied().find(|&x| x <= hi_fence);
        series.outliers = v.into_iter().filter(|&x| x < lo_fence || x > hi_fence).collect();
        series
    }
}

/// Ground-truth volume (ml) of every boxplot class in one case.
pub fn lesion_volumes_ml(gt: &LabelVolume, taxonomy: &Taxonomy) -> Result<BTreeMap<EvalClass, f64>> {
    let voxel_ml = gt.spacing().voxel_volume_ml();
    BOXPLOT_CLASSES
        .into_iter()
        .map(|c| Ok((c, taxonomy.project(gt, c)?.count() as f64 * voxel_ml)))
        .collect()
}

/// Writes per-class boxplot series as JSON. `per_case` holds one map of
/// class volumes per case; classes missing from a case count as 0 ml.
pub fn emit_volume_boxplots(per_case: &[BTreeMap<EvalClass, f64>], out_path: impl AsRef<Path>) -> Result<Vec<BoxplotSeries>> {
    let series: Vec<BoxplotSeries> = BOXPLOT_CLASSES
        .into_iter()
        .map(|c| {
            let vols: Vec<f64> = per_case.iter().map(|m| m.get(&c).copied().unwrap_or(0.0)).collect();
            BoxplotSeries::from_case_volumes(c.name(), &vols)
        })
        .collect();
    let out_path = out_path.as_ref();
    let text = serde_json::to_string_pretty(&series)?;
    std::fs::write(out_path, text).map_err(|e| Error::io(out_path, e))?;
    Ok(series)
}
