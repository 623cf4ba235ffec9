//! Per-case metric tables, per-task summary tables with bootstrap
//! statistics, lesion-volume boxplot data, and the manifest runner.

mod boxplot;
mod manifest;
mod tables;

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::taxonomy::{EvalClass, Task};

pub use boxplot::{emit_volume_boxplots, lesion_volumes_ml, BoxplotSeries, BOXPLOT_CLASSES};
pub use manifest::{
    run_manifest, CaseSpec, Manifest, MajoritySpec, PredictionSource, PredictionSpec, ProbabilitySpec, RunOptions,
    RunReport, MANIFEST_SCHEMA,
};
pub use tables::{emit_summary_tables, summarize_task, table_rows, TableRow};

/// Metric records across cases, methods, tasks and classes; each
/// `(case, method, task, class)` appears at most once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    records: Vec<MetricRecord>,
    keys: HashSet<(String, String, Task, EvalClass)>,
}

impl MetricTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: MetricRecord) -> Result<()> {
        let key = (r.case_id.clone(), r.method.clone(), r.task, r.metrics.class);
        if !self.keys.insert(key) {
            return Err(Error::InvalidArgument(format!(
                "duplicate record for case {} method {} task {} class {}",
                r.case_id, r.method, r.task, r.metrics.class
            )));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn from_records(records: impl IntoIterator<Item = MetricRecord>) -> Result<Self> {
        let mut t = MetricTable::new();
        for r in records {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Tasks present, in canonical order.
    pub fn tasks(&self) -> Vec<Task> {
        Task::ALL
            .into_iter()
            .filter(|t| self.records.iter().any(|r| r.task == *t))
            .collect()
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Per-case CSV: `case_id,method,task,class,dsc,hd95_mm,asd_mm,avd_ml,sen`
    /// with `NA` for not-applicable values.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case_id", "method", "task", "class", "dsc", "hd95_mm", "asd_mm", "avd_ml", "sen"])?;
        for r in &self.records {
            let m = &r.metrics;
            w.write_record([
                r.case_id.clone(),
                r.method.clone(),
                r.task.to_string(),
                m.class.to_string(),
                m.dsc.to_string(),
                m.hd95.to_string(),
                m.asd.to_string(),
                m.avd.to_string(),
                m.sen.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}
