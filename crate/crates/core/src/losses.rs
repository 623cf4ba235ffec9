//! Generalized Wasserstein Dice score and loss.
//!
//! With a one-hot ground truth the per-voxel Wasserstein distance reduces
//! to `W_i = sum_l' M[g_i][l'] * p_{i,l'}`, and the score is
//!
//! ```text
//!          2 * sum_i a_i (1 - W_i)
//! score = -------------------------,   a_i = alpha[g_i] = 1 / (1 + |class g_i|)
//!            sum_i a_i (2 - W_i)
//! ```
//!
//! which is 1 for a perfect prediction. The trainable loss is `1 - score`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{RawClass, Taxonomy};
use crate::volume::{LabelVolume, ProbVolume, NORMALIZATION_TOLERANCE};

/// Ground distance between classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    classes: Vec<String>,
    m: Vec<Vec<f64>>,
}

/// Class order of the built-in matrix.
pub const DEFAULT_CLASSES: [&str; 7] = ["background", "GGO", "CON", "CPP", "COM", "OAT", "healthy_lung"];

impl DistanceMatrix {
    /// Validates symmetry, a zero diagonal and entries in `[0, 1]`. The
    /// triangle inequality is deliberately not required.
    pub fn new(classes: Vec<String>, m: Vec<Vec<f64>>) -> Result<Self> {
        let l = classes.len();
        if l == 0 {
            return Err(Error::InvalidMatrix("no classes".into()));
        }
        if m.len() != l || m.iter().any(|row| row.len() != l) {
            return Err(Error::InvalidMatrix(format!("expected a {l}x{l} matrix")));
        }
        for i in 0..l {
            if m[i][i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..l {
                let v = m[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {v} outside [0, 1]")));
                }
                if v != m[j][i] {
                    return Err(Error::InvalidMatrix(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { classes, m })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            classes: Vec<String>,
            m: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Self::new(raw.classes, raw.m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.m[from][to]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let norm = |s: &str| s.to_ascii_lowercase().replace([' ', '-'], "_");
        let target = norm(name);
        self.classes.iter().position(|c| norm(c) == target)
    }

    /// Multiplies every off-diagonal entry by `c` in `(0, 1]`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidArgument(format!("scale {c} outside (0, 1]")));
        }
        let m = self.m.iter().map(|row| row.iter().map(|v| v * c).collect()).collect();
        Self::new(self.classes.clone(), m)
    }
}

/// The matrix over {background, GGO, CON, CPP, COM, OAT, healthy lung}.
///
/// COM has zero distance to every lesion class, and OAT zero distance to
/// everything except healthy lung.
pub fn default_matrix() -> DistanceMatrix {
    let m = vec![
        vec![0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.8, 0.8, 0.0, 0.0, 1.0],
        vec![1.0, 0.8, 0.0, 0.8, 0.0, 0.0, 1.0],
        vec![1.0, 0.8, 0.8, 0.0, 0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0],
    ];
    DistanceMatrix::new(DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(), m)
        .expect("built-in matrix is valid")
}

/// Ground-truth class index per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotGt {
    classes: Vec<usize>,
    n_classes: usize,
}

impl OneHotGt {
    pub fn new(classes: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some(&c) = classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidArgument(format!("class index {c} >= {n_classes}")));
        }
        Ok(OneHotGt { classes, n_classes })
    }

    /// Maps raw labels onto the matrix's classes (linear opacity counts
    /// as CON and reversed halo sign as COM).
    pub fn from_labels(labels: &LabelVolume, taxonomy: &Taxonomy, matrix: &DistanceMatrix) -> Result<Self> {
        let mut table = [None::<usize>; 256];
        for raw in RawClass::ALL {
            let Some(id) = taxonomy.id_of(raw) else { continue };
            let name = match raw {
                RawClass::Background => "background",
                RawClass::HealthyLung => "healthy_lung",
                RawClass::Ggo => "GGO",
                RawClass::Consolidation | RawClass::LinearOpacity => "CON",
                RawClass::Cpp => "CPP",
                RawClass::Rhs | RawClass::Combined => "COM",
                RawClass::Oat => "OAT",
            };
            table[id as usize] = matrix.index_of(name);
        }
        let mut classes = Vec::with_capacity(labels.len());
        for &l in labels.data() {
            classes.push(table[l as usize].ok_or(Error::UnknownLabel(l))?);
        }
        Self::new(classes, matrix.len())
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// `alpha_l = 1 / (1 + number of ground-truth voxels of class l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

pub fn alpha_weights(gt: &OneHotGt, n_classes: usize) -> ClassWeights {
    let mut counts = vec![0usize; n_classes];
    for &c in &gt.classes {
        if c < n_classes {
            counts[c] += 1;
        }
    }
    ClassWeights(counts.into_iter().map(|n| 1.0 / (1.0 + n as f64)).collect())
}

fn check_distribution(p: &[f64], voxel: usize) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("probability {bad} outside [0, 1] at voxel {voxel}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized { voxel, sum });
    }
    Ok(())
}

#[inline]
fn w_unchecked(p: &[f64], gt_class: usize, m: &DistanceMatrix) -> f64 {
    m.row(gt_class).iter().zip(p).map(|(d, q)| d * q).sum()
}

/// Wasserstein distance between `p` and the one-hot distribution at
/// `gt_class`.
pub fn wasserstein_pointwise(p: &[f64], gt_class: usize, m: &DistanceMatrix) -> Result<f64> {
    if p.len() != m.len() {
        return Err(Error::ShapeMismatch(format!("{} probabilities for {} classes", p.len(), m.len())));
    }
    if gt_class >= m.len() {
        return Err(Error::InvalidArgument(format!("class index {gt_class} >= {}", m.len())));
    }
    check_distribution(p, 0)?;
    Ok(w_unchecked(p, gt_class, m))
}

/// Sum in a fixed pairwise order, independent of how the caller chunks.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Numerator and denominator sums plus the per-voxel weights `a_i`.
struct Parts {
    num: f64,
    den: f64,
    weights: Vec<f64>,
}

fn parts(probs: &[f64], gt: &OneHotGt, m: &DistanceMatrix) -> Result<Parts> {
    let l = m.len();
    if gt.n_classes != l {
        return Err(Error::ShapeMismatch(format!(
            "ground truth has {} classes, matrix {l}",
            gt.n_classes
        )));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("ground truth has no voxels"));
    }
    if probs.len() != gt.len() * l {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities for {} voxels x {l} classes",
            probs.len(),
            gt.len()
        )));
    }
    let alpha = alpha_weights(gt, l);
    let n = gt.len();
    let mut num_terms = Vec::with_capacity(n);
    let mut den_terms = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, (row, &g)) in probs.chunks_exact(l).zip(&gt.classes).enumerate() {
        check_distribution(row, i)?;
        let w = w_unchecked(row, g, m);
        let a = alpha.0[g];
        num_terms.push(a * (1.0 - w));
        den_terms.push(a * (2.0 - w));
        weights.push(a);
    }
    Ok(Parts {
        num: pairwise_sum(&num_terms),
        den: pairwise_sum(&den_terms),
        weights,
    })
}

/// Score over voxel-major probabilities (`probs[i * L + l]`).
pub fn gwdl_score_raw(probs: &[f64], gt: &OneHotGt, m: &DistanceMatrix) -> Result<f64> {
    let p = parts(probs, gt, m)?;
    Ok(2.0 * p.num / p.den)
}

/// Loss `1 - score` and its gradient with respect to every `probs` entry.
pub fn gwdl_loss_and_grad_raw(probs: &[f64], gt: &OneHotGt, m: &DistanceMatrix) -> Result<(f64, Vec<f64>)> {
    let p = parts(probs, gt, m)?;
    let l = m.len();
    let loss = 1.0 - 2.0 * p.num / p.den;
    // d num / d p = d den / d p = -a_i M[g_i][l'], so
    // d loss / d p = 2 a_i M[g_i][l'] (den - num) / den^2.
    let coef = 2.0 * (p.den - p.num) / (p.den * p.den);
    let mut grad = vec![0.0; probs.len()];
    for (i, (&g, &a)) in gt.classes.iter().zip(&p.weights).enumerate() {
        for (lp, d) in m.row(g).iter().enumerate() {
            grad[i * l + lp] = coef * a * d;
        }
    }
    Ok((loss, grad))
}

fn check_volume(pred: &ProbVolume, gt: &OneHotGt) -> Result<()> {
    if pred.n_voxels() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted voxels vs {} ground-truth voxels",
            pred.n_voxels(),
            gt.len()
        )));
    }
    Ok(())
}

pub fn gwdl_score(pred: &ProbVolume, gt: &OneHotGt, m: &DistanceMatrix) -> Result<f64> {
    check_volume(pred, gt)?;
    gwdl_score_raw(pred.data(), gt, m)
}

pub fn gwdl_loss_and_grad(pred: &ProbVolume, gt: &OneHotGt, m: &DistanceMatrix) -> Result<(f64, Vec<f64>)> {
    check_volume(pred, gt)?;
    gwdl_loss_and_grad_raw(pred.data(), gt, m)
}
