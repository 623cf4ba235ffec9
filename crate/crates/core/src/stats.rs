//! Paired bootstrap superiority tests and percentile confidence
//! intervals over per-case metric values.
//!
//! Resamples are drawn in fixed-size blocks; block `k` uses the ChaCha
//! stream `k` of the master seed, so results are bit-identical regardless
//! of how many worker threads process the blocks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{percentile_linear, MetricRecord, MetricValue};
use crate::taxonomy::{EvalClass, Task};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const MIN_RESAMPLES: usize = 1_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// The reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dsc,
    Hd95,
    Asd,
    Avd,
    Sen,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Dsc, Metric::Hd95, Metric::Asd, Metric::Avd, Metric::Sen];
    pub const OVERLAP_AND_DISTANCE: [Metric; 4] = [Metric::Dsc, Metric::Hd95, Metric::Asd, Metric::Avd];

    pub fn direction(self) -> Direction {
        match self {
            Metric::Dsc | Metric::Sen => Direction::HigherBetter,
            Metric::Hd95 | Metric::Asd | Metric::Avd => Direction::LowerBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsc => "DSC",
            Metric::Hd95 => "HD95",
            Metric::Asd => "ASD",
            Metric::Avd => "AVD",
            Metric::Sen => "SEN",
        }
    }

    pub fn of(self, r: &MetricRecord) -> MetricValue {
        let m = &r.metrics;
        match self {
            Metric::Dsc => m.dsc,
            Metric::Hd95 => m.hd95,
            Metric::Asd => m.asd,
            Metric::Avd => m.avd,
            Metric::Sen => m.sen,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Per-case values of two methods, restricted to cases where both are
/// applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub case_ids: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedScores {
    pub fn new(case_ids: Vec<String>, a: &[MetricValue], b: &[MetricValue]) -> Result<Self> {
        if case_ids.len() != a.len() || a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} case ids, {} and {} scores",
                case_ids.len(),
                a.len(),
                b.len()
            )));
        }
        let mut out = PairedScores {
            case_ids: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
        };
        for ((id, x), y) in case_ids.into_iter().zip(a).zip(b) {
            if let (Some(x), Some(y)) = (x.value(), y.value()) {
                out.case_ids.push(id);
                out.a.push(x);
                out.b.push(y);
            }
        }
        if out.a.is_empty() {
            return Err(Error::EmptyInput("no case is applicable for both methods"));
        }
        Ok(out)
    }

    pub fn from_values(a: &[f64], b: &[f64]) -> Result<Self> {
        let ids = (0..a.len()).map(|i| i.to_string()).collect();
        let wrap = |v: &[f64]| v.iter().map(|&x| MetricValue::Value(x)).collect::<Vec<_>>();
        Self::new(ids, &wrap(a), &wrap(b))
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Differences oriented so that positive means A is better.
    pub fn oriented_differences(&self, direction: Direction) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| match direction {
                Direction::HigherBetter => x - y,
                Direction::LowerBetter => y - x,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    /// Mean oriented difference (positive favours A).
    pub observed_mean_diff: f64,
    pub p_value: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub significant: bool,
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn n_blocks(n: usize) -> usize {
    n.div_ceil(BLOCK)
}

/// Calls `f` with the resampled sum for every resample of block `k`.
fn for_each_resample_sum(values: &[f64], seed: u64, n: usize, k: usize, mut f: impl FnMut(f64)) {
    let m = values.len();
    let mut rng = block_rng(seed, k);
    let start = k * BLOCK;
    let end = (start + BLOCK).min(n);
    for _ in start..end {
        let mut s = 0.0;
        for _ in 0..m {
            s += values[rng.random_range(0..m)];
        }
        f(s);
    }
}

/// One-sided paired bootstrap test of "A is superior to B".
///
/// Case-level differences are resampled with replacement `n` times and
/// `p = (1 + #{resample mean <= 0}) / (n + 1)`.
pub fn bootstrap_superiority(ps: &PairedScores, n: usize, seed: u64, direction: Direction) -> Result<TestResult> {
    if ps.is_empty() {
        return Err(Error::EmptyInput("no paired scores"));
    }
    if n < MIN_RESAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_RESAMPLES} resamples, got {n}")));
    }
    let d = ps.oriented_differences(direction);
    let observed_mean_diff = d.iter().sum::<f64>() / d.len() as f64;
    let not_better: usize = (0..n_blocks(n))
        .into_par_iter()
        .map(|k| {
            let mut c = 0usize;
            for_each_resample_sum(&d, seed, n, k, |s| c += (s <= 0.0) as usize);
            c
        })
        .sum();
    let p_value = (1 + not_better) as f64 / (n + 1) as f64;
    Ok(TestResult {
        observed_mean_diff,
        p_value,
        n_resamples: n,
        seed,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}

/// Percentile bootstrap confidence interval of the mean.
pub fn bootstrap_ci(scores: &[f64], n: usize, seed: u64, level: f64) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    let m = scores.len() as f64;
    let mut means: Vec<f64> = (0..n_blocks(n))
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut out = Vec::with_capacity(BLOCK);
            for_each_resample_sum(scores, seed, n, k, |s| out.push(s / m));
            out
        })
        .collect();
    let tail = (1.0 - level) / 2.0 * 100.0;
    let lo = percentile_linear(&mut means, tail).expect("nonempty");
    let hi = percentile_linear(&mut means, 100.0 - tail).expect("nonempty");
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub ci_level: f64,
}

fn default_n() -> usize {
    DEFAULT_RESAMPLES
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n: DEFAULT_RESAMPLES,
            seed: 0,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Number of cases with an applicable value.
    pub n: usize,
    pub mean: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// p-value of "this method is superior to X", per other method.
    pub p_values: BTreeMap<String, f64>,
    pub superior_to_all: bool,
}

/// Summary of one metric for one (task, class) across methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub task: Task,
    pub class: EvalClass,
    pub metric: Metric,
    pub methods: Vec<MethodSummary>,
}

impl MetricSummary {
    /// Index of the method with the best mean, if any mean exists.
    pub fn best(&self) -> Option<usize> {
        let better = |a: f64, b: f64| match self.metric.direction() {
            Direction::HigherBetter => a > b,
            Direction::LowerBetter => a < b,
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in self.methods.iter().enumerate() {
            if let Some(v) = m.mean {
                if best.is_none_or(|(_, b)| better(v, b)) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Means, confidence intervals and pairwise superiority for every method
/// appearing in `records` for `(task, class)`. Methods are listed in order
/// of first appearance.
pub fn summarize(
    records: &[MetricRecord],
    metric: Metric,
    class: EvalClass,
    task: Task,
    cfg: &BootstrapConfig,
) -> Result<MetricSummary> {
    let mut methods: Vec<String> = Vec::new();
    let mut cases: Vec<String> = Vec::new();
    let mut values: BTreeMap<(String, String), MetricValue> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task == task && r.metrics.class == class) {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !cases.contains(&r.case_id) {
            cases.push(r.case_id.clone());
        }
        values.insert((r.method.clone(), r.case_id.clone()), metric.of(r));
    }
    let column = |method: &str| -> Vec<MetricValue> {
        cases
            .iter()
            .map(|c| values.get(&(method.to_string(), c.clone())).copied().unwrap_or_default())
            .collect()
    };

    let mut out = Vec::with_capacity(methods.len());
    for method in &methods {
        let col = column(method);
        let present: Vec<f64> = col.iter().filter_map(|v| v.value()).collect();
        let (mean, ci_lo, ci_hi) = if present.is_empty() {
            (None, None, None)
        } else {
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            let (lo, hi) = bootstrap_ci(&present, cfg.n, cfg.seed, cfg.ci_level)?;
            (Some(mean), Some(lo), Some(hi))
        };
        let mut p_values = BTreeMap::new();
        let mut all_significant = methods.len() > 1;
        for other in methods.iter().filter(|o| *o != method) {
            match PairedScores::new(cases.clone(), &col, &column(other)) {
                Ok(ps) => {
                    let t = bootstrap_superiority(&ps, cfg.n, cfg.seed, metric.direction())?;
                    all_significant &= t.significant;
                    p_values.insert(other.clone(), t.p_value);
                }
                Err(Error::EmptyInput(_)) => all_significant = false,
                Err(e) => return Err(e),
            }
        }
        out.push(MethodSummary {
            method: method.clone(),
            n: present.len(),
            mean,
            ci_lo,
            ci_hi,
            p_values,
            superior_to_all: all_significant,
        });
    }
    Ok(MetricSummary {
        task,
        class,
        metric,
        methods: out,
    })
}
