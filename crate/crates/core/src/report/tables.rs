use std::path::{Path, PathBuf};

use super::MetricTable;
use crate::error::{Error, Result};
use crate::stats::{summarize, BootstrapConfig, Metric, MetricSummary};
use crate::taxonomy::{EvalClass, Task};

/// One row of a per-task results table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    /// Class block the row is printed under.
    pub block: EvalClass,
    /// Row label, e.g. `DSC` or `SEN^CON`.
    pub label: String,
    /// Class the metric values come from.
    pub class: EvalClass,
    pub metric: Metric,
}

/// Row layout of the results table for `task`.
pub fn table_rows(task: Task) -> Vec<TableRow> {
    let block = |class: EvalClass| {
        Metric::OVERLAP_AND_DISTANCE.into_iter().map(move |metric| TableRow {
            block: class,
            label: metric.name().to_string(),
            class,
            metric,
        })
    };
    match task {
        Task::Lung => block(EvalClass::Lung)
            .chain(EvalClass::TARGETS.into_iter().map(|c| TableRow {
                block: EvalClass::Lung,
                label: format!("SEN^{}", c.name()),
                class: c,
                metric: Metric::Sen,
            }))
            .collect(),
        Task::Bin => block(EvalClass::Bin).collect(),
        Task::Multiclass => [
            EvalClass::Con,
            EvalClass::Cpp,
            EvalClass::Ggo,
            EvalClass::Mean,
            EvalClass::GgoPlusCpp,
        ]
        .into_iter()
        .flat_map(block)
        .collect(),
    }
}

/// Summaries for every row of the task's table, in row order.
pub fn summarize_task(table: &MetricTable, task: Task, cfg: &BootstrapConfig) -> Result<Vec<MetricSummary>> {
    table_rows(task)
        .iter()
        .map(|row| summarize(table.records(), row.metric, row.class, task, cfg))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Three significant digits, as in printed tables.
fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (2 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn wide_csv(
    rows: &[TableRow],
    summaries: &[MetricSummary],
    methods: &[String],
    cell: impl Fn(&MetricSummary, &str) -> Option<f64>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["block".to_string(), "row".to_string()];
    header.extend(methods.iter().cloned());
    w.write_record(&header)?;
    for (row, s) in rows.iter().zip(summaries) {
        let mut rec = vec![row.block.to_string(), row.label.clone()];
        rec.extend(methods.iter().map(|m| fmt_opt(cell(s, m))));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn long_csv(summaries: &[MetricSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task",
        "class",
        "metric",
        "method",
        "n",
        "mean",
        "ci_lo",
        "ci_hi",
        "superior_to_all",
        "p_values",
    ])?;
    for s in summaries {
        for m in &s.methods {
            w.write_record([
                s.task.to_string(),
                s.class.to_string(),
                s.metric.to_string(),
                m.method.clone(),
                m.n.to_string(),
                fmt_opt(m.mean),
                fmt_opt(m.ci_lo),
                fmt_opt(m.ci_hi),
                m.superior_to_all.to_string(),
                serde_json::to_string(&m.p_values)?,
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn markdown(task: Task, rows: &[TableRow], summaries: &[MetricSummary], methods: &[String]) -> String {
    let mut out = format!("## Task {task}\n\n| | |");
    for m in methods {
        out.push_str(&format!(" {m} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(methods.len()));
    out.push('\n');
    for (row, s) in rows.iter().zip(summaries) {
        let best = s.best().map(|i| s.methods[i].method.as_str());
        out.push_str(&format!("| {} | {} |", row.block, row.label));
        for m in methods {
            let entry = s.methods.iter().find(|x| &x.method == m);
            let text = match entry.and_then(|e| e.mean.map(|v| (v, e.superior_to_all))) {
                None => "NA".to_string(),
                Some((v, sup)) => {
                    let mut t = fmt_sig(v);
                    if best == Some(m.as_str()) {
                        t = format!("**{t}**");
                    }
                    if sup {
                        t.push('*');
                    }
                    t
                }
            };
            out.push_str(&format!(" {text} |"));
        }
        out.push('\n');
    }
    out.push_str("\nBold: best mean. `*`: significantly superior to every other method (p < 0.05).\n");
    out
}

/// Writes, for every task in `table`:
///
/// * `table_<task>.csv`: mean per (class block, metric row) and method,
/// * `table_<task>_ci_lo.csv`, `table_<task>_ci_hi.csv`: the CI bounds in
///   the same layout,
/// * `summary_<task>.csv`: long form with n, CI, p-values and the
///   superiority flag,
/// * `table_<task>.md` when `markdown` is set.
pub fn emit_summary_tables(
    table: &MetricTable,
    out_dir: impl AsRef<Path>,
    cfg: &BootstrapConfig,
    markdown_tables: bool,
) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(Error::EmptyInput("metric table is empty"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let methods = table.methods();
    let mut written = Vec::new();
    for task in table.tasks() {
        let rows = table_rows(task);
        let summaries = summarize_task(table, task, cfg)?;
        let lookup = |s: &MetricSummary, m: &str| s.methods.iter().find(|x| x.method == m).cloned();
        let files: [(String, String); 4] = [
            (format!("table_{task}.csv"), wide_csv(&rows, &summaries, &methods, |s, m| lookup(s, m).and_then(|x| x.mean))?),
            (
                format!("table_{task}_ci_lo.csv"),
                wide_csv(&rows, &summaries, &methods, |s, m| lookup(s, m).and_then(|x| x.ci_lo))?,
            ),
            (
                format!("table_{task}_ci_hi.csv"),
                wide_csv(&rows, &summaries, &methods, |s, m| lookup(s, m).and_then(|x| x.ci_hi))?,
            ),
            (format!("summary_{task}.csv"), long_csv(&summaries)?),
        ];
        for (name, text) in files {
            let p = out_dir.join(name);
            write_file(&p, &text)?;
            written.push(p);
        }
        if markdown_tables {
            let p = out_dir.join(format!("table_{task}.md"));
            write_file(&p, &markdown(task, &rows, &summaries, &methods))?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lung_rows() {
        let labels: Vec<String> = table_rows(Task::Lung).into_iter().map(|r| r.label).collect();
        assert_eq!(labels, ["DSC", "HD95", "ASD", "AVD", "SEN^CON", "SEN^CPP", "SEN^GGO"]);
    }

    #[test]
    fn multiclass_blocks() {
        let rows = table_rows(Task::Multiclass);
        assert_eq!(rows.len(), 20);
        let mut blocks: Vec<EvalClass> = rows.iter().map(|r| r.block).collect();
        blocks.dedup();
        assert_eq!(
            blocks,
            [EvalClass::Con, EvalClass::Cpp, EvalClass::Ggo, EvalClass::Mean, EvalClass::GgoPlusCpp]
        );
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.97812), "0.978");
        assert_eq!(fmt_sig(2.4312), "2.43");
        assert_eq!(fmt_sig(42.61), "42.6");
        assert_eq!(fmt_sig(125.4), "125");
        assert_eq!(fmt_sig(1234.4), "1234");
    }
}
