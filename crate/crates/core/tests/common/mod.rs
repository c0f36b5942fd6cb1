#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use jablab::cli::{load_config, ExperimentSpec};
use jablab::driving::{build_driving, Driving, DrivingSpec, LawSpec, SymbolSpec};
use jablab::geometry::{AffineBranch, JablonskiMap, RectPartition};
use jablab::transfer::Cocycle;
use jablab::variation::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

pub fn spec(name: &str) -> ExperimentSpec {
    load_config(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn grid_for(d: &Driving, cells: usize) -> Arc<Grid> {
    Arc::new(Grid::refining(d.common_partition(), &vec![cells; d.dim()]).unwrap())
}

pub fn cocycle_for(d: &Driving, cells: usize) -> Cocycle {
    Cocycle::new(d, grid_for(d, cells)).unwrap()
}

pub fn iid(maps: Vec<JablonskiMap>, p: Vec<f64>) -> Driving {
    build_driving(DrivingSpec {
        symbols: maps
            .into_iter()
            .enumerate()
            .map(|(i, map)| SymbolSpec { name: format!("s{i}"), map })
            .collect(),
        law: LawSpec::Iid(p),
        common_partition: None,
    })
    .unwrap()
}

pub fn single(map: JablonskiMap) -> Driving {
    iid(vec![map], vec![1.0])
}

/// Strictly increasing breakpoints `0 = b_0 < … < b_r = 1` with no gap
/// smaller than `1/(8r)`.
pub fn random_axis(rng: &mut ChaCha8Rng, r: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..r).map(|_| rng.gen_range(1.0..8.0)).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for wi in &w[..r - 1] {
        acc += wi / total;
        out.push(acc);
    }
    out.push(1.0);
    out
}

/// Branch on `[lo, hi]` with `|slope| ≥ 1`, random orientation, image in `[0, 1]`.
pub fn random_branch(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> AffineBranch {
    let w = hi - lo;
    let s = rng.gen_range(1.0..=(1.0 / w).max(1.0));
    let room = (1.0 - s * w).max(0.0);
    let start = rng.gen::<f64>() * room;
    if rng.gen_bool(0.5) {
        AffineBranch::new(s, start - s * lo)
    } else {
        AffineBranch::new(-s, start + s * hi)
    }
}

pub fn random_map_1d(rng: &mut ChaCha8Rng, r: usize) -> (Vec<f64>, Vec<AffineBranch>) {
    let bp = random_axis(rng, r);
    let br = (0..r).map(|s| random_branch(rng, bp[s], bp[s + 1])).collect();
    (bp, br)
}

/// General (non-product) map: every cell gets its own branches.
pub fn random_map(rng: &mut ChaCha8Rng, cells: &[usize]) -> JablonskiMap {
    let axes: Vec<Vec<f64>> = cells.iter().map(|&r| random_axis(rng, r)).collect();
    let part = RectPartition::new(axes).unwrap();
    let branches = (0..part.cell_count())
        .map(|c| {
            let rect = part.cell_rect(&part.multi_index(c));
            (0..part.dim())
                .map(|i| random_branch(rng, rect.lo[i], rect.hi[i]))
                .collect()
        })
        .collect();
    JablonskiMap::new(part, branches).unwrap()
}

/// Every branch maps its cell onto `[0, 1]`, with random orientation.
pub fn random_onto_map(rng: &mut ChaCha8Rng, cells: &[usize]) -> JablonskiMap {
    let axes: Vec<Vec<f64>> = cells.iter().map(|&r| random_axis(rng, r)).collect();
    let part = RectPartition::new(axes).unwrap();
    let branches = (0..part.cell_count())
        .map(|c| {
            let rect = part.cell_rect(&part.multi_index(c));
            (0..part.dim())
                .map(|i| {
                    let s = 1.0 / rect.side(i);
                    if rng.gen_bool(0.5) {
                        AffineBranch::new(s, -s * rect.lo[i])
                    } else {
                        AffineBranch::new(-s, s * rect.hi[i])
                    }
                })
                .collect()
        })
        .collect();
    JablonskiMap::new(part, branches).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
