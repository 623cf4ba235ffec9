//! Brute-force oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segbench::volume::nifti::{write_nifti, AnyVolume};
use segbench::{BinaryMask, LabelVolume, Spacing, Volume};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn idx(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

pub fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

pub fn random_dims(r: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [r.random_range(1..=max), r.random_range(1..=max), r.random_range(1..=max)]
}

pub fn random_spacing(r: &mut ChaCha8Rng) -> Spacing {
    Spacing::new(r.random_range(0.3..1.5), r.random_range(0.3..1.5), r.random_range(0.5..5.0)).unwrap()
}

/// Mixture of a sparse speckle and a random box, so that both thin and
/// solid structures occur.
pub fn random_mask(r: &mut ChaCha8Rng, dims: [usize; 3], spacing: Spacing) -> BinaryMask {
    let n: usize = dims.iter().product();
    let density = r.random_range(0.0..0.4);
    let mut data: Vec<bool> = (0..n).map(|_| r.random_bool(density)).collect();
    if r.random_bool(0.5) {
        let lo: Vec<usize> = dims.iter().map(|&d| r.random_range(0..d)).collect();
        let hi: Vec<usize> = dims.iter().zip(&lo).map(|(&d, &l)| r.random_range(l..d) + 1).collect();
        for (i, v) in data.iter_mut().enumerate() {
            let c = coords(dims, i);
            if (0..3).all(|k| c[k] >= lo[k] && c[k] < hi[k]) {
                *v = true;
            }
        }
    }
    BinaryMask::new(dims, spacing, data).unwrap()
}

/// Foreground voxels with a face neighbour outside the mask or grid.
pub fn brute_surface(m: &BinaryMask) -> Vec<[usize; 3]> {
    let dims = m.dims();
    let d = m.data();
    let mut out = Vec::new();
    for (i, &on) in d.iter().enumerate() {
        if !on {
            continue;
        }
        let c = coords(dims, i);
        let mut boundary = false;
        for k in 0..3 {
            for step in [-1i64, 1] {
                let v = c[k] as i64 + step;
                if v < 0 || v >= dims[k] as i64 {
                    boundary = true;
                    continue;
                }
                let mut n = c;
                n[k] = v as usize;
                if !d[idx(dims, n[0], n[1], n[2])] {
                    boundary = true;
                }
            }
        }
        if boundary {
            out.push(c);
        }
    }
    out
}

fn dist(a: [usize; 3], b: [usize; 3], s: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for k in 0..3 {
        let d = (a[k] as f64 - b[k] as f64) * s[k];
        acc += d * d;
    }
    acc.sqrt()
}

/// All-pairs minimum distances from every point of `from` to `to`.
pub fn brute_directed(from: &[[usize; 3]], to: &[[usize; 3]], s: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|&a| to.iter().map(|&b| dist(a, b, s)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Brute-force Euclidean distance to the nearest foreground voxel.
pub fn brute_edt(m: &BinaryMask) -> Vec<f64> {
    let dims = m.dims();
    let fg: Vec<[usize; 3]> = (0..m.len()).filter(|&i| m.data()[i]).map(|i| coords(dims, i)).collect();
    let all: Vec<[usize; 3]> = (0..m.len()).map(|i| coords(dims, i)).collect();
    brute_directed(&all, &fg, m.spacing().as_array())
}

/// Percentile by full sort and linear interpolation between order
/// statistics at rank `q/100 * (n-1)`.
pub fn sorted_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    pub dsc: Option<f64>,
    pub hd95: f64,
    pub asd: f64,
    pub avd: f64,
}

fn filled_if_empty(m: &BinaryMask) -> BinaryMask {
    if m.data().iter().any(|&b| b) {
        m.clone()
    } else {
        BinaryMask::new(m.dims(), m.spacing(), vec![true; m.len()]).unwrap()
    }
}

/// DSC, HD95, pooled ASD and AVD computed from scratch.
pub fn oracle_metrics(pred: &BinaryMask, gt: &BinaryMask) -> OracleMetrics {
    let p = pred.data().iter().filter(|&&b| b).count();
    let g = gt.data().iter().filter(|&&b| b).count();
    let both = pred.data().iter().zip(gt.data()).filter(|(a, b)| **a && **b).count();
    let dsc = (g > 0).then(|| 2.0 * both as f64 / (p + g) as f64);
    let s = pred.spacing();
    let avd = p.abs_diff(g) as f64 * (s.sx * s.sy * s.sz / 1000.0);
    let (pf, gf) = (filled_if_empty(pred), filled_if_empty(gt));
    let (sp, sg) = (brute_surface(&pf), brute_surface(&gf));
    let mut pooled = brute_directed(&sp, &sg, s.as_array());
    pooled.extend(brute_directed(&sg, &sp, s.as_array()));
    let asd = pooled.iter().sum::<f64>() / pooled.len() as f64;
    OracleMetrics {
        dsc,
        hd95: sorted_percentile(&pooled, 95.0),
        asd,
        avd,
    }
}

/// Labels with the highest count at one voxel, ascending.
pub fn vote_winners(column: &[u8]) -> Vec<u8> {
    let mut counts = [0usize; 256];
    for &l in column {
        counts[l as usize] += 1;
    }
    let top = *counts.iter().max().unwrap();
    (0..=255u8).filter(|&l| counts[l as usize] == top && top > 0).collect()
}

/// Loss `1 - 2A/B` evaluated directly, one voxel at a time, with
/// `A = sum a_i (1 - W_i)`, `B = sum a_i (2 - W_i)`.
pub fn gwdl_loss_oracle(probs: &[f64], gt: &[usize], m: &[Vec<f64>]) -> f64 {
    let l = m.len();
    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    for (i, &g) in gt.iter().enumerate() {
        let count = gt.iter().filter(|&&x| x == g).count();
        let alpha = 1.0 / (1.0 + count as f64);
        let mut w = 0.0;
        for k in 0..l {
            w += m[g][k] * probs[i * l + k];
        }
        a_sum += alpha * (1.0 - w);
        b_sum += alpha * (2.0 - w);
    }
    1.0 - 2.0 * a_sum / b_sum
}

pub const FIXTURE_DIMS: [usize; 3] = [20, 18, 10];

/// Synthetic ground truth: lung with GGO, CON, CPP, COMBINED and OAT
/// blobs whose sizes vary with `case`.
pub fn synthetic_gt(case: usize) -> Vec<u8> {
    let [nx, ny, nz] = FIXTURE_DIMS;
    let mut v = vec![0u8; nx * ny * nz];
    let r = |k: usize| 1 + (case * 7 + k * 3) % 3;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = idx(FIXTURE_DIMS, x, y, z);
                if x >= 1 && x + 1 < nx && y >= 1 && y + 1 < ny && z + 1 < nz {
                    v[i] = 1;
                }
                let near = |cx: usize, cy: usize, cz: usize, rad: usize| {
                    x.abs_diff(cx) <= rad && y.abs_diff(cy) <= rad && z.abs_diff(cz) <= rad.min(2)
                };
                if near(5, 5, 4, r(0)) {
                    v[i] = 2;
                }
                if near(14, 5, 4, r(1)) {
                    v[i] = 3;
                }
                if !case.is_multiple_of(3) && near(5, 12, 5, r(2)) {
                    v[i] = 4;
                }
                if case.is_multiple_of(2) && near(14, 13, 5, 1) {
                    v[i] = 7;
                }
                if case % 4 == 1 && near(10, 9, 2, 0) {
                    v[i] = 8;
                }
            }
        }
    }
    v
}

/// A prediction derived from `gt` by flipping a `noise` fraction of voxels
/// to a random label.
pub fn noisy_prediction(gt: &[u8], noise: f64, seed: u64) -> Vec<u8> {
    let mut r = rng(seed);
    gt.iter()
        .map(|&l| if r.random_bool(noise) { [0u8, 1, 2, 3, 4][r.random_range(0..5)] } else { l })
        .collect()
}

pub fn write_labels(path: &Path, data: Vec<u8>) {
    let vol: LabelVolume = Volume::new(FIXTURE_DIMS, Spacing::new(0.7, 0.7, 2.5).unwrap(), data).unwrap();
    write_nifti(&AnyVolume::U8(vol), path).unwrap();
}

/// Writes `n_cases` cases with methods `A`, `B`, `C` of increasing noise and
/// a manifest voting over all three. Returns the manifest path.
pub fn write_fixture(dir: &Path, n_cases: usize) -> PathBuf {
    let mut cases = Vec::new();
    for c in 0..n_cases {
        let gt = synthetic_gt(c);
        let id = format!("case{c:02}");
        write_labels(&dir.join(format!("{id}_gt.nii.gz")), gt.clone());
        let mut preds = Vec::new();
        for (k, (m, noise)) in [("A", 0.02), ("B", 0.06), ("C", 0.12)].into_iter().enumerate() {
            let file = format!("{id}_{m}.nii");
            write_labels(&dir.join(&file), noisy_prediction(&gt, noise, (c * 10 + k) as u64));
            preds.push(format!(r#"{{"method": "{m}", "labels": "{file}"}}"#));
        }
        cases.push(format!(
            r#"{{"id": "{id}", "gt": "{id}_gt.nii.gz", "tasks": ["lung", "bin", "mc"], "predictions": [{}]}}"#,
            preds.join(", ")
        ));
    }
    let manifest = format!(
        r#"{{"schema": 1, "vote_seed": 42, "bootstrap": {{"n": 1000, "seed": 7}},
  "majority_vote": {{"name": "MAJ", "methods": ["A", "B", "C"]}},
  "cases": [{}]}}"#,
        cases.join(",\n  ")
    );
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest).unwrap();
    path
}
