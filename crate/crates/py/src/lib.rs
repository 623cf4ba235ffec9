//! Python bindings. Volumes cross the boundary as flat lists in x-fastest
//! order together with `dims` and `spacing` tuples.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use segbench_core as core;
use core::ensemble::{argmax_labels, average_probs, majority_vote, VoteConfig};
use core::losses::{self, OneHotGt};
use core::metrics::{self, EvalOptions};
use core::stats::{self, Direction, PairedScores};
use core::volume::nifti::AnyVolume;
use core::volume::raw::{read_volume as core_read, write_volume as core_write};
use core::volume::{keep_k_largest_components, Connectivity};
use core::{AsdMode, BinaryMask, LabelVolume, MetricValue, ProbVolume, Spacing, Task, Volume};

type Dims = [usize; 3];
type Sp = [f64; 3];

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn spacing(s: Sp) -> PyResult<Spacing> {
    Spacing::from_array(s).map_err(err)
}

fn mask(data: Vec<bool>, dims: Dims, s: Sp) -> PyResult<BinaryMask> {
    Volume::new(dims, spacing(s)?, data).map_err(err)
}

fn labels(data: Vec<u8>, dims: Dims, s: Sp) -> PyResult<LabelVolume> {
    Volume::new(dims, spacing(s)?, data).map_err(err)
}

fn taxonomy(json: Option<&str>) -> PyResult<core::Taxonomy> {
    json.map_or_else(|| Ok(core::Taxonomy::default()), |t| core::Taxonomy::from_json(t).map_err(err))
}

fn matrix(json: Option<&str>) -> PyResult<losses::DistanceMatrix> {
    json.map_or_else(|| Ok(losses::default_matrix()), |t| losses::DistanceMatrix::from_json(t).map_err(err))
}

/// Dice score; `None` when the ground truth is empty.
#[pyfunction]
#[pyo3(signature = (pred, gt, dims, spacing=[1.0, 1.0, 1.0]))]
fn dice(pred: Vec<bool>, gt: Vec<bool>, dims: Dims, spacing: Sp) -> PyResult<Option<f64>> {
    let r = metrics::dice(&mask(pred, dims, spacing)?, &mask(gt, dims, spacing)?).map_err(err)?;
    Ok(r.value())
}

/// `(hd95_mm, asd_mm)` with the empty-mask fill rule applied.
#[pyfunction]
#[pyo3(signature = (pred, gt, dims, spacing=[1.0, 1.0, 1.0], directed_asd=false))]
fn hd95_asd(pred: Vec<bool>, gt: Vec<bool>, dims: Dims, spacing: Sp, directed_asd: bool) -> PyResult<(Option<f64>, Option<f64>)> {
    let mode = if directed_asd { AsdMode::DirectedMean } else { AsdMode::Pooled };
    let (h, a) = metrics::hd95_asd_with(&mask(pred, dims, spacing)?, &mask(gt, dims, spacing)?, mode).map_err(err)?;
    Ok((h.value(), a.value()))
}

/// Absolute volume difference in ml.
#[pyfunction]
#[pyo3(signature = (pred, gt, dims, spacing=[1.0, 1.0, 1.0]))]
fn avd(pred: Vec<bool>, gt: Vec<bool>, dims: Dims, spacing: Sp) -> PyResult<Option<f64>> {
    Ok(metrics::avd(&mask(pred, dims, spacing)?, &mask(gt, dims, spacing)?).map_err(err)?.value())
}

/// Fraction of lesion voxels inside the predicted lung.
#[pyfunction]
#[pyo3(signature = (lung_pred, lesion_gt, dims, spacing=[1.0, 1.0, 1.0]))]
fn sensitivity(lung_pred: Vec<bool>, lesion_gt: Vec<bool>, dims: Dims, spacing: Sp) -> PyResult<Option<f64>> {
    let r = metrics::sensitivity(&mask(lung_pred, dims, spacing)?, &mask(lesion_gt, dims, spacing)?).map_err(err)?;
    Ok(r.value())
}

/// Euclidean distance (mm) of every voxel to the nearest foreground voxel.
#[pyfunction]
#[pyo3(signature = (mask_data, dims, spacing=[1.0, 1.0, 1.0]))]
fn edt(mask_data: Vec<bool>, dims: Dims, spacing: Sp) -> PyResult<Vec<f64>> {
    Ok(metrics::edt(&mask(mask_data, dims, spacing)?).map_err(err)?.into_data())
}

/// Per-class rows `(class, dsc, hd95, asd, avd, sen)` for one task
/// (`"lung"`, `"bin"` or `"mc"`); `None` marks not-applicable values.
#[pyfunction]
#[pyo3(signature = (gt, pred, dims, task, spacing=[1.0, 1.0, 1.0], taxonomy_json=None))]
#[allow(clippy::type_complexity)]
fn evaluate(
    gt: Vec<u8>,
    pred: Vec<u8>,
    dims: Dims,
    task: &str,
    spacing: Sp,
    taxonomy_json: Option<&str>,
) -> PyResult<Vec<(String, Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>)>> {
    let task: Task = task.parse().map_err(err)?;
    let tax = taxonomy(taxonomy_json)?;
    let rows = metrics::evaluate_case(&labels(gt, dims, spacing)?, &labels(pred, dims, spacing)?, &tax, task, EvalOptions::default())
        .map_err(err)?;
    let v = MetricValue::value;
    Ok(rows
        .into_iter()
        .map(|m| (m.class.to_string(), v(m.dsc), v(m.hd95), v(m.asd), v(m.avd), v(m.sen)))
        .collect())
}

/// Per-voxel majority vote with seeded uniform tie breaking; labels come
/// back as `bytes`.
#[pyfunction]
#[pyo3(signature = (preds, dims, seed=0))]
fn vote(preds: Vec<Vec<u8>>, dims: Dims, seed: u64) -> PyResult<Vec<u8>> {
    let vols = preds
        .into_iter()
        .map(|p| labels(p, dims, [1.0; 3]))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(majority_vote(&vols, VoteConfig { seed }).map_err(err)?.into_data())
}

/// Averages voxel-major probability arrays (`n_voxels * channels` each)
/// and takes the argmax, writing `class_ids[channel]` (as `bytes`).
#[pyfunction]
fn average_argmax(probs: Vec<Vec<f64>>, dims: Dims, class_ids: Vec<u8>) -> PyResult<Vec<u8>> {
    let channels = class_ids.len();
    let vols = probs
        .into_iter()
        .map(|p| ProbVolume::new(dims, Spacing::default(), channels, p).map_err(err))
        .collect::<PyResult<Vec<_>>>()?;
    let avg = average_probs(&vols).map_err(err)?;
    Ok(argmax_labels(&avg, &class_ids).map_err(err)?.into_data())
}

/// Keeps the `k` largest connected components of a mask.
#[pyfunction]
#[pyo3(signature = (mask_data, dims, k=1, connectivity=26))]
fn keep_largest_components(mask_data: Vec<bool>, dims: Dims, k: usize, connectivity: u32) -> PyResult<Vec<bool>> {
    let conn = Connectivity::from_count(connectivity).map_err(err)?;
    let m = mask(mask_data, dims, [1.0; 3])?;
    Ok(keep_k_largest_components(&m, k, conn).map_err(err)?.into_data())
}

/// `(class names, rows)` of the default lesion distance matrix.
#[pyfunction]
fn default_matrix() -> (Vec<String>, Vec<Vec<f64>>) {
    let m = losses::default_matrix();
    let rows = (0..m.len()).map(|i| m.row(i).to_vec()).collect();
    (m.classes().to_vec(), rows)
}

/// Generalized Wasserstein Dice on voxel-major probabilities.
/// Returns `(score, loss, gradient)`.
#[pyfunction]
#[pyo3(signature = (probs, gt_classes, matrix_json=None))]
fn gwdl(probs: Vec<f64>, gt_classes: Vec<usize>, matrix_json: Option<&str>) -> PyResult<(f64, f64, Vec<f64>)> {
    let m = matrix(matrix_json)?;
    let gt = OneHotGt::new(gt_classes, m.len()).map_err(err)?;
    let score = losses::gwdl_score_raw(&probs, &gt, &m).map_err(err)?;
    let (loss, grad) = losses::gwdl_loss_and_grad_raw(&probs, &gt, &m).map_err(err)?;
    Ok((score, loss, grad))
}

/// One-sided paired bootstrap p-value for "A is superior to B".
#[pyfunction]
#[pyo3(signature = (a, b, n=10_000, seed=0, higher_is_better=true))]
fn bootstrap_superiority(a: Vec<f64>, b: Vec<f64>, n: usize, seed: u64, higher_is_better: bool) -> PyResult<f64> {
    let ps = PairedScores::from_values(&a, &b).map_err(err)?;
    let dir = if higher_is_better { Direction::HigherBetter } else { Direction::LowerBetter };
    Ok(stats::bootstrap_superiority(&ps, n, seed, dir).map_err(err)?.p_value)
}

/// Percentile bootstrap confidence interval of the mean.
#[pyfunction]
#[pyo3(signature = (scores, n=10_000, seed=0, level=0.95))]
fn bootstrap_ci(scores: Vec<f64>, n: usize, seed: u64, level: f64) -> PyResult<(f64, f64)> {
    stats::bootstrap_ci(&scores, n, seed, level).map_err(err)
}

/// Reads a NIfTI-1 or raw volume: `(dtype, dims, spacing, data)`.
#[pyfunction]
fn read_volume(path: &str) -> PyResult<(String, Dims, Sp, Vec<f64>)> {
    let v = core_read(path).map_err(err)?;
    let (dtype, dims, sp) = (v.dtype_name().to_string(), v.dims(), v.spacing().as_array());
    Ok((dtype, dims, sp, v.into_scalar().into_data()))
}

/// Writes a volume as `dtype` (`"u8"`, `"i16"` or `"f32"`; the numpy
/// spellings are accepted too).
/// The format follows the extension (`.nii`, `.nii.gz`, `.raw`).
#[pyfunction]
#[pyo3(signature = (path, data, dims, spacing=[1.0, 1.0, 1.0], dtype="f32"))]
fn write_volume(path: &str, data: Vec<f64>, dims: Dims, spacing: Sp, dtype: &str) -> PyResult<()> {
    let s = self::spacing(spacing)?;
    let any = match dtype {
        "u8" | "uint8" => AnyVolume::from(Volume::new(dims, s, data.iter().map(|&x| x as u8).collect()).map_err(err)?),
        "i16" | "int16" => AnyVolume::from(Volume::new(dims, s, data.iter().map(|&x| x as i16).collect::<Vec<i16>>()).map_err(err)?),
        "f32" | "float32" => AnyVolume::from(Volume::new(dims, s, data.iter().map(|&x| x as f32).collect::<Vec<f32>>()).map_err(err)?),
        other => return Err(PyValueError::new_err(format!("unsupported dtype {other:?}"))),
    };
    core_write(&any, path).map_err(err)
}

/// Runs a manifest; returns the ids and messages of failed cases.
#[pyfunction]
#[pyo3(signature = (manifest, out_dir, vote_seed=None, boot_n=None, boot_seed=None, markdown=false))]
fn run_manifest(
    manifest: &str,
    out_dir: &str,
    vote_seed: Option<u64>,
    boot_n: Option<usize>,
    boot_seed: Option<u64>,
    markdown: bool,
) -> PyResult<Vec<(String, String)>> {
    let opts = core::report::RunOptions {
        out_dir: out_dir.into(),
        vote_seed,
        boot_n,
        boot_seed,
        markdown,
    };
    Ok(core::report::run_manifest(manifest, &opts).map_err(err)?.failures)
}

#[pymodule]
#[pyo3(name = "segbench")]
fn segbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(hd95_asd, m)?)?;
    m.add_function(wrap_pyfunction!(avd, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(edt, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(average_argmax, m)?)?;
    m.add_function(wrap_pyfunction!(keep_largest_components, m)?)?;
    m.add_function(wrap_pyfunction!(default_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(gwdl, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_superiority, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_volume, m)?)?;
    m.add_function(wrap_pyfunction!(run_manifest, m)?)?;
    Ok(())
}
