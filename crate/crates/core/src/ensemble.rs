//! Label fusion: per-voxel majority voting over hard label maps and
//! averaging of probabilistic predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ProbVolume};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteConfig {
    /// Key of the tie-break generator.
    pub seed: u64,
}

/// Counter-based tie-break stream: the draw for a voxel depends only on
/// `(seed, voxel index)`.
#[derive(Clone)]
pub struct TieBreaker {
    base: ChaCha8Rng,
}

impl TieBreaker {
    pub fn new(seed: u64) -> Self {
        TieBreaker {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform index in `0..k` for `voxel`.
    pub fn pick(&self, voxel: usize, k: usize) -> usize {
        let mut rng = self.base.clone();
        rng.set_stream(voxel as u64);
        rng.set_word_pos(0);
        rng.random_range(0..k)
    }
}

const CHUNK: usize = 1 << 14;

/// Per-voxel majority vote. On ties the winner is drawn uniformly among
/// the tied labels (in ascending label order) using the voxel's own
/// stream, so the result does not depend on input order or threading.
pub fn majority_vote(preds: &[LabelVolume], cfg: VoteConfig) -> Result<LabelVolume> {
    let first = preds.first().ok_or(Error::EmptyInput("majority vote needs at least one prediction"))?;
    for p in &preds[1..] {
        first.check_same_grid(p)?;
    }
    let n = first.len();
    let ties = TieBreaker::new(cfg.seed);
    let mut out = vec![0u8; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut counts: Vec<(u8, usize)> = Vec::with_capacity(preds.len());
        let mut tied: Vec<u8> = Vec::with_capacity(preds.len());
        for (j, slot) in chunk.iter_mut().enumerate() {
            let i = c * CHUNK + j;
            counts.clear();
            for p in preds {
                let l = p.data()[i];
                match counts.iter_mut().find(|(lab, _)| *lab == l) {
                    Some(e) => e.1 += 1,
                    None => counts.push((l, 1)),
                }
            }
            let best = counts.iter().map(|e| e.1).max().unwrap_or(0);
            tied.clear();
            tied.extend(counts.iter().filter(|e| e.1 == best).map(|e| e.0));
            *slot = if tied.len() == 1 {
                tied[0]
            } else {
                tied.sort_unstable();
                tied[ties.pick(i, tied.len())]
            };
        }
    });
    first.with_data(out)
}

/// Per-voxel, per-channel arithmetic mean. The result is flagged
/// normalized iff every input is.
pub fn average_probs(preds: &[ProbVolume]) -> Result<ProbVolume> {
    let first = preds.first().ok_or(Error::EmptyInput("averaging needs at least one prediction"))?;
    for p in &preds[1..] {
        first.check_same_grid(p)?;
    }
    let inv = 1.0 / preds.len() as f64;
    let mut data = vec![0.0; first.data().len()];
    data.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let start = c * CHUNK;
        for (j, slot) in chunk.iter_mut().enumerate() {
            let sum: f64 = preds.iter().map(|p| p.data()[start + j]).sum();
            *slot = sum * inv;
        }
    });
    let normalized = preds.iter().all(ProbVolume::is_normalized);
    Ok(first.with_data_unchecked(data, normalized))
}

/// Label of the most probable channel per voxel; ties go to the lowest
/// channel index.
pub fn argmax_labels(prob: &ProbVolume, class_ids: &[u8]) -> Result<LabelVolume> {
    if class_ids.len() != prob.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} class ids for {} channels",
            class_ids.len(),
            prob.channels()
        )));
    }
    let data = prob
        .rows()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = c;
                }
            }
            class_ids[best]
        })
        .collect();
    LabelVolume::new(prob.dims(), prob.spacing(), data)
}
