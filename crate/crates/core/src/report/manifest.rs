//! Manifest-driven batch evaluation.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "taxonomy": "taxonomy.json",
//!   "vote_seed": 0,
//!   "bootstrap": {"n": 10000, "seed": 0, "ci_level": 0.95},
//!   "majority_vote": {"name": "MAJ", "methods": ["A", "B", "C"]},
//!   "cases": [{
//!     "id": "case01",
//!     "gt": "gt/case01.nii.gz",
//!     "tasks": ["lung", "bin", "mc"],
//!     "predictions": [
//!       {"method": "A", "labels": "A/case01.nii.gz"},
//!       {"method": "B", "task": "mc",
//!        "probabilities": {"class_ids": [0, 2, 3, 4],
//!                          "folds": [["f0_c0.nii", "f0_c1.nii", "f0_c2.nii", "f0_c3.nii"]]}}
//!     ]
//!   }]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. A prediction
//! without `task` is evaluated for every task of its case.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boxplot::{emit_volume_boxplots, lesion_volumes_ml};
use super::tables::emit_summary_tables;
use super::MetricTable;
use crate::ensemble::{argmax_labels, average_probs, majority_vote, VoteConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_case, AsdMode, EvalOptions, MetricRecord};
use crate::stats::BootstrapConfig;
use crate::taxonomy::{EvalClass, Task, Taxonomy};
use crate::volume::raw::read_volume;
use crate::volume::{LabelVolume, ProbVolume};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub vote_seed: u64,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub asd_mode: AsdMode,
    #[serde(default)]
    pub majority_vote: Option<MajoritySpec>,
    pub cases: Vec<CaseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MajoritySpec {
    #[serde(default = "default_maj_name")]
    pub name: String,
    /// Members; all label-producing methods when omitted.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
}

fn default_maj_name() -> String {
    "MAJ".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub id: String,
    #[serde(alias = "gt_path")]
    pub gt: PathBuf,
    pub tasks: Vec<Task>,
    pub predictions: Vec<PredictionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSpec {
    pub method: String,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(flatten)]
    pub source: PredictionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    /// Hard label map.
    Labels(PathBuf),
    /// Per-class probability maps of one or more models, averaged and
    /// then reduced by argmax.
    Probabilities(ProbabilitySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilitySpec {
    /// Label written for each channel.
    pub class_ids: Vec<u8>,
    /// One list of per-channel files per model.
    pub folds: Vec<Vec<PathBuf>>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::Manifest(format!(
                "unsupported schema {} (expected {MANIFEST_SCHEMA})",
                self.schema
            )));
        }
        if self.cases.is_empty() {
            return Err(Error::Manifest("no cases".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.cases {
            if !ids.insert(&c.id) {
                return Err(Error::Manifest(format!("duplicate case id {:?}", c.id)));
            }
            if c.tasks.is_empty() {
                return Err(Error::Manifest(format!("case {:?} lists no tasks", c.id)));
            }
        }
        if let Some(maj) = &self.majority_vote {
            let exists = |m: &String| self.cases.iter().any(|c| c.predictions.iter().any(|p| &p.method == m));
            if self.cases.iter().any(|c| c.predictions.iter().any(|p| p.method == maj.name)) {
                return Err(Error::Manifest(format!("method name {:?} is reserved for the vote", maj.name)));
            }
            for m in maj.methods.iter().flatten() {
                if !exists(m) {
                    return Err(Error::Manifest(format!("majority vote member {m:?} has no predictions")));
                }
            }
        }
        Ok(())
    }

    /// Methods in order of first appearance, the vote last.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cases {
            for p in &c.predictions {
                if !out.contains(&p.method) {
                    out.push(p.method.clone());
                }
            }
        }
        if let Some(maj) = &self.majority_vote {
            out.push(maj.name.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub vote_seed: Option<u64>,
    pub boot_n: Option<usize>,
    pub boot_seed: Option<u64>,
    pub markdown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub n_cases: usize,
    pub n_records: usize,
    /// `(case id, error message)` for every case that failed.
    pub failures: Vec<(String, String)>,
    pub written: Vec<PathBuf>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

struct CaseOutcome {
    records: Vec<MetricRecord>,
    volumes: BTreeMap<EvalClass, f64>,
    spacing: [f64; 3],
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_prediction(base: &Path, src: &PredictionSource) -> Result<LabelVolume> {
    match src {
        PredictionSource::Labels(p) => read_volume(resolve(base, p))?.into_labels(),
        PredictionSource::Probabilities(spec) => {
            if spec.folds.is_empty() {
                return Err(Error::Manifest("probability prediction without folds".into()));
            }
            let mut models = Vec::with_capacity(spec.folds.len());
            for fold in &spec.folds {
                if fold.len() != spec.class_ids.len() {
                    return Err(Error::Manifest(format!(
                        "{} channel files for {} class ids",
                        fold.len(),
                        spec.class_ids.len()
                    )));
                }
                let channels = fold
                    .iter()
                    .map(|p| Ok(read_volume(resolve(base, p))?.into_scalar()))
                    .collect::<Result<Vec<_>>>()?;
                models.push(ProbVolume::from_channels(&channels)?);
            }
            argmax_labels(&average_probs(&models)?, &spec.class_ids)
        }
    }
}

fn run_case(
    base: &Path,
    case: &CaseSpec,
    taxonomy: &Taxonomy,
    maj: Option<&MajoritySpec>,
    vote: VoteConfig,
    opts: EvalOptions,
) -> Result<CaseOutcome> {
    let gt = read_volume(resolve(base, &case.gt))?.into_labels()?;
    taxonomy.validate(&gt)?;
    let mut loaded: Vec<(&PredictionSpec, LabelVolume)> = Vec::with_capacity(case.predictions.len());
    for p in &case.predictions {
        let vol = load_prediction(base, &p.source)
            .map_err(|e| Error::Manifest(format!("method {}: {e}", p.method)))?;
        gt.check_same_grid(&vol)
            .map_err(|e| Error::Manifest(format!("method {}: {e}", p.method)))?;
        loaded.push((p, vol));
    }

    let mut records = Vec::new();
    for &task in &case.tasks {
        let for_task: Vec<&(&PredictionSpec, LabelVolume)> =
            loaded.iter().filter(|(p, _)| p.task.is_none_or(|t| t == task)).collect();
        let mut emit = |method: &str, pred: &LabelVolume| -> Result<()> {
            for m in evaluate_case(&gt, pred, taxonomy, task, opts)? {
                records.push(MetricRecord {
                    case_id: case.id.clone(),
                    method: method.to_string(),
                    task,
                    metrics: m,
                });
            }
            Ok(())
        };
        for (p, vol) in &for_task {
            emit(&p.method, vol)?;
        }
        if let Some(maj) = maj {
            let members: Vec<LabelVolume> = for_task
                .iter()
                .filter(|(p, _)| maj.methods.as_ref().is_none_or(|ms| ms.contains(&p.method)))
                .map(|(_, v)| taxonomy.canonicalize(v, task))
                .collect::<Result<_>>()?;
            if !members.is_empty() {
                let fused = majority_vote(&members, vote)?;
                emit(&maj.name, &fused)?;
            }
        }
    }
    Ok(CaseOutcome {
        records,
        volumes: lesion_volumes_ml(&gt, taxonomy)?,
        spacing: gt.spacing().as_array(),
    })
}

#[derive(Serialize)]
struct Provenance<'a> {
    schema: u32,
    vote_seed: u64,
    bootstrap: BootstrapConfig,
    asd_mode: AsdMode,
    ignore: Vec<&'static str>,
    oat_ignored: bool,
    methods: Vec<String>,
    cases: Vec<CaseProvenance<'a>>,
}

#[derive(Serialize)]
struct CaseProvenance<'a> {
    id: &'a str,
    status: &'static str,
    spacing_mm: Option<[f64; 3]>,
}

/// Loads every case, fuses and evaluates predictions, runs the bootstrap
/// statistics and writes all reports into `opts.out_dir`.
///
/// A failing case is logged to `errors.log` and excluded; the rest of the
/// batch still runs. Manifest-level problems (unreadable or malformed
/// manifest, bad taxonomy) are returned as errors.
pub fn run_manifest(manifest_path: impl AsRef<Path>, opts: &RunOptions) -> Result<RunReport> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let taxonomy = match &manifest.taxonomy {
        Some(p) => Taxonomy::load(resolve(&base, p))?,
        None => Taxonomy::default(),
    };
    let vote = VoteConfig {
        seed: opts.vote_seed.unwrap_or(manifest.vote_seed),
    };
    let mut boot = manifest.bootstrap;
    if let Some(n) = opts.boot_n {
        boot.n = n;
    }
    if let Some(s) = opts.boot_seed {
        boot.seed = s;
    }
    let eval_opts = EvalOptions {
        asd_mode: manifest.asd_mode,
    };

    let outcomes: Vec<Result<CaseOutcome>> = manifest
        .cases
        .par_iter()
        .map(|c| run_case(&base, c, &taxonomy, manifest.majority_vote.as_ref(), vote, eval_opts))
        .collect();

    let out_dir = &opts.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut table = MetricTable::new();
    let mut volumes = Vec::new();
    let mut failures = Vec::new();
    let mut case_prov = Vec::new();
    for (case, outcome) in manifest.cases.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                for r in o.records {
                    table.push(r)?;
                }
                volumes.push(o.volumes);
                case_prov.push(CaseProvenance {
                    id: &case.id,
                    status: "ok",
                    spacing_mm: Some(o.spacing),
                });
            }
            Err(e) => {
                failures.push((case.id.clone(), e.to_string()));
                case_prov.push(CaseProvenance {
                    id: &case.id,
                    status: "failed",
                    spacing_mm: None,
                });
            }
        }
    }

    let mut written = Vec::new();
    let per_case = out_dir.join("per_case.csv");
    table.write_csv(&per_case)?;
    written.push(per_case);
    if !table.is_empty() {
        written.extend(emit_summary_tables(&table, out_dir, &boot, opts.markdown)?);
    }
    let box_path = out_dir.join("boxplots.json");
    emit_volume_boxplots(&volumes, &box_path)?;
    written.push(box_path);

    let prov = Provenance {
        schema: MANIFEST_SCHEMA,
        vote_seed: vote.seed,
        bootstrap: boot,
        asd_mode: manifest.asd_mode,
        ignore: taxonomy.ignore_set().iter().map(|c| c.name()).collect(),
        oat_ignored: taxonomy.ignore_set().contains(&EvalClass::Oat),
        methods: manifest.methods(),
        cases: case_prov,
    };
    let run_path = out_dir.join("run.json");
    std::fs::write(&run_path, serde_json::to_string_pretty(&prov)?).map_err(|e| Error::io(&run_path, e))?;
    written.push(run_path);

    let err_path = out_dir.join("errors.log");
    let mut log = String::new();
    for (id, msg) in &failures {
        let _ = writeln!(log, "{id}: {msg}");
    }
    std::fs::write(&err_path, log).map_err(|e| Error::io(&err_path, e))?;
    written.push(err_path);

    Ok(RunReport {
        n_cases: manifest.cases.len(),
        n_records: table.len(),
        failures,
        written,
    })
}
