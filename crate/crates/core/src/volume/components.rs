use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::InvalidArgument(format!("connectivity must be 6 or 26, got {n}"))),
        }
    }

    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Labels connected components; returns per-voxel component ids (0 =
/// background, components numbered from 1 in order of their smallest
/// linear index) and the voxel count of each component.
fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let [nx, ny, nz] = mask.dims();
    let data = mask.data();
    let offsets = conn.offsets();
    let mut labels = vec![0u32; data.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..data.len() {
        if !data[seed] || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[seed] = id;
        stack.push(seed);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            let x = (v % nx) as isize;
            let y = ((v / nx) % ny) as isize;
            let z = (v / (nx * ny)) as isize;
            for o in &offsets {
                let (qx, qy, qz) = (x + o[0], y + o[1], z + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize || qz >= nz as isize {
                    continue;
                }
                let q = qx as usize + nx * (qy as usize + ny * qz as usize);
                if data[q] && labels[q] == 0 {
                    labels[q] = id;
                    stack.push(q);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps the `k` largest connected components of `mask`. Equal-sized
/// components are ranked by their smallest linear voxel index.
pub fn keep_k_largest_components(mask: &BinaryMask, k: usize, conn: Connectivity) -> Result<BinaryMask> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let (labels, sizes) = label_components(mask, conn);
    if sizes.len() <= k {
        return Ok(mask.clone());
    }
    // Component ids already follow seed order, so a stable sort on size
    // keeps the seed tie-break.
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut keep = vec![false; sizes.len() + 1];
    for &c in &order[..k] {
        keep[c + 1] = true;
    }
    mask.with_data(labels.iter().map(|&l| keep[l as usize]).collect())
}
