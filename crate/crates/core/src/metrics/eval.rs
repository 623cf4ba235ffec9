use serde::Serialize;

use super::{avd, dice, hd95_asd_with, sensitivity, AsdMode, MetricValue};
use crate::error::Result;
use crate::taxonomy::{EvalClass, Task, Taxonomy};
use crate::volume::{BinaryMask, LabelVolume};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub asd_mode: AsdMode,
}

/// Metric values for one evaluation class of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: EvalClass,
    pub dsc: MetricValue,
    pub hd95: MetricValue,
    pub asd: MetricValue,
    pub avd: MetricValue,
    pub sen: MetricValue,
}

impl ClassMetrics {
    fn empty(class: EvalClass) -> Self {
        ClassMetrics {
            class,
            dsc: MetricValue::NotApplicable,
            hd95: MetricValue::NotApplicable,
            asd: MetricValue::NotApplicable,
            avd: MetricValue::NotApplicable,
            sen: MetricValue::NotApplicable,
        }
    }

    /// Overlap, distance and volume metrics for one mask pair.
    pub fn compute(class: EvalClass, pred: &BinaryMask, gt: &BinaryMask, opts: EvalOptions) -> Result<Self> {
        let (hd95, asd) = hd95_asd_with(pred, gt, opts.asd_mode)?;
        Ok(ClassMetrics {
            class,
            dsc: dice(pred, gt)?,
            hd95,
            asd,
            avd: avd(pred, gt)?,
            sen: MetricValue::NotApplicable,
        })
    }
}

/// One row of the per-case table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub case_id: String,
    pub method: String,
    pub task: Task,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Evaluates one case for one task.
///
/// * `Lung`: metrics on the lung masks (every non-background class) plus
///   the sensitivity of the predicted lung for each multiclass target.
/// * `Bin`: metrics on the union of all lesion classes.
/// * `Multiclass`: ground-truth voxels in the taxonomy's ignore set are
///   removed from both volumes, then CON, CPP, GGO, their unweighted MEAN
///   and GGO+CPP are scored.
pub fn evaluate_case(
    gt: &LabelVolume,
    pred: &LabelVolume,
    taxonomy: &Taxonomy,
    task: Task,
    opts: EvalOptions,
) -> Result<Vec<ClassMetrics>> {
    gt.check_same_grid(pred)?;
    taxonomy.validate(gt)?;
    taxonomy.validate(pred)?;
    match task {
        Task::Lung => {
            let lung_gt = taxonomy.project(gt, EvalClass::Lung)?;
            let lung_pred = taxonomy.project(pred, EvalClass::Lung)?;
            let mut out = vec![ClassMetrics::compute(EvalClass::Lung, &lung_pred, &lung_gt, opts)?];
            for cls in EvalClass::TARGETS {
                let lesion = taxonomy.project(gt, cls)?;
                let mut m = ClassMetrics::empty(cls);
                m.sen = sensitivity(&lung_pred, &lesion)?;
                out.push(m);
            }
            Ok(out)
        }
        Task::Bin => {
            let g = taxonomy.project(gt, EvalClass::Bin)?;
            let p = taxonomy.project(pred, EvalClass::Bin)?;
            Ok(vec![ClassMetrics::compute(EvalClass::Bin, &p, &g, opts)?])
        }
        Task::Multiclass => {
            let ignore = taxonomy.ignore_mask(gt)?;
            let score = |cls: EvalClass| -> Result<ClassMetrics> {
                let g = taxonomy.project(gt, cls)?.and_not(&ignore)?;
                let p = taxonomy.project(pred, cls)?.and_not(&ignore)?;
                ClassMetrics::compute(cls, &p, &g, opts)
            };
            let per: Vec<ClassMetrics> = EvalClass::TARGETS.into_iter().map(score).collect::<Result<_>>()?;
            let mean = ClassMetrics {
                class: EvalClass::Mean,
                dsc: MetricValue::mean_of(per.iter().map(|m| m.dsc)),
                hd95: MetricValue::mean_of(per.iter().map(|m| m.hd95)),
                asd: MetricValue::mean_of(per.iter().map(|m| m.asd)),
                avd: MetricValue::mean_of(per.iter().map(|m| m.avd)),
                sen: MetricValue::NotApplicable,
            };
            let union = score(EvalClass::GgoPlusCpp)?;
            let mut out = per;
            out.push(mean);
            out.push(union);
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::RawClass;
    use crate::volume::Spacing;

    fn vol(labels: Vec<u8>) -> LabelVolume {
        LabelVolume::new([labels.len(), 1, 1], Spacing::default(), labels).unwrap()
    }

    #[test]
    fn perfect_prediction_every_task() {
        let t = Taxonomy::default();
        let gt = vol(vec![0, 1, 2, 2, 3, 4, 5, 7, 8, 1]);
        for task in Task::ALL {
            for m in evaluate_case(&gt, &gt, &t, task, EvalOptions::default()).unwrap() {
                if m.dsc.is_applicable() {
                    assert_eq!(m.dsc, MetricValue::Value(1.0));
                }
                if m.class != EvalClass::Mean && m.hd95.is_applicable() {
                    assert_eq!(m.hd95, MetricValue::Value(0.0));
                    assert_eq!(m.asd, MetricValue::Value(0.0));
                    assert_eq!(m.avd, MetricValue::Value(0.0));
                }
            }
        }
    }

    #[test]
    fn lung_task_rows() {
        let t = Taxonomy::default();
        let gt = vol(vec![0, 1, 1, 3, 2, 0]);
        let pred = vol(vec![0, 1, 1, 0, 1, 0]);
        let rows = evaluate_case(&gt, &pred, &t, Task::Lung, EvalOptions::default()).unwrap();
        let classes: Vec<_> = rows.iter().map(|r| r.class).collect();
        assert_eq!(classes, vec![EvalClass::Lung, EvalClass::Con, EvalClass::Cpp, EvalClass::Ggo]);
        assert_eq!(rows[1].sen, MetricValue::Value(0.0));
        assert_eq!(rows[2].sen, MetricValue::NotApplicable);
        assert_eq!(rows[3].sen, MetricValue::Value(1.0));
        assert_eq!(rows[0].dsc, MetricValue::Value(2.0 * 3.0 / 7.0));
    }

    #[test]
    fn multiclass_ignores_com_voxels_in_prediction() {
        let t = Taxonomy::default();
        let ggo = RawClass::Ggo.default_id();
        let com = RawClass::Combined.default_id();
        // gt: 1 GGO voxel, 2 COM voxels; pred: GGO on all three.
        let gt = vol(vec![ggo, com, com, 0]);
        let pred = vol(vec![ggo, ggo, ggo, 0]);
        let rows = evaluate_case(&gt, &pred, &t, Task::Multiclass, EvalOptions::default()).unwrap();
        let g = rows.iter().find(|r| r.class == EvalClass::Ggo).unwrap();
        assert_eq!(g.dsc, MetricValue::Value(1.0));
        let no_ignore = t.clone().with_ignore([]).unwrap();
        let rows = evaluate_case(&gt, &pred, &no_ignore, Task::Multiclass, EvalOptions::default()).unwrap();
        let g = rows.iter().find(|r| r.class == EvalClass::Ggo).unwrap();
        assert_eq!(g.dsc, MetricValue::Value(0.5));
    }

    #[test]
    fn mean_row_skips_absent_classes() {
        let t = Taxonomy::default();
        let gt = vol(vec![2, 2, 0, 0]);
        let pred = vol(vec![2, 0, 0, 0]);
        let rows = evaluate_case(&gt, &pred, &t, Task::Multiclass, EvalOptions::default()).unwrap();
        let mean = rows.iter().find(|r| r.class == EvalClass::Mean).unwrap();
        assert_eq!(mean.dsc, MetricValue::Value(2.0 / 3.0));
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].class, EvalClass::GgoPlusCpp);
    }
}
