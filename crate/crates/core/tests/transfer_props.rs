mod common;

use std::sync::Arc;

use jablab::geometry::{JablonskiMap, RectPartition};
use jablab::transfer::ulam_matrix;
use jablab::variation::{Grid, GridFunction};
use proptest::prelude::*;
use rand::Rng;

use common::{random_map, rng};

/// `m(B_k ∩ f⁻¹ A)` for a grid-aligned set `A`, through inverse branches.
fn preimage_measure(f: &JablonskiMap, grid: &Grid, k: usize, a: &[bool]) -> f64 {
    let gp = grid.partition();
    let cell = gp.cell_rect(&gp.multi_index(k));
    let fp = f.partition();
    let owner = fp.linear_index(&fp.locate(&cell.midpoint()).unwrap());
    let mut total = 0.0;
    for (j, _) in a.iter().enumerate().filter(|(_, &inside)| inside) {
        let target = gp.cell_rect(&gp.multi_index(j));
        let mut vol = 1.0;
        for i in 0..gp.dim() {
            let b = f.branch(owner, i);
            let (u, v) = (b.inverse(target.lo[i]), b.inverse(target.hi[i]));
            let (lo, hi) = (u.min(v).max(cell.lo[i]), u.max(v).min(cell.hi[i]));
            vol *= (hi - lo).max(0.0);
        }
        total += vol;
    }
    total
}

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 1..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn duality_on_aligned_sets(cells in shape(), seed in any::<u64>()) {
        let mut g = rng(seed);
        let f = random_map(&mut g, &cells);
        let grid = Arc::new(Grid::refining(f.partition(), &vec![7; cells.len()]).unwrap());
        let op = ulam_matrix(&f, grid.clone()).unwrap();
        let h = GridFunction::new(grid.clone(), (0..grid.len()).map(|_| g.gen_range(-1.0..2.0)).collect()).unwrap();
        let a: Vec<bool> = (0..grid.len()).map(|_| g.gen_bool(0.4)).collect();
        let lh = op.apply(&h);
        let lhs: f64 = lh.masses().iter().zip(&a).filter(|(_, &x)| x).map(|(m, _)| m).sum();
        let rhs: f64 = (0..grid.len()).map(|k| h.values()[k] * preimage_measure(&f, &grid, k, &a)).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn positive_stochastic_and_contracting(cells in shape(), seed in any::<u64>()) {
        let mut g = rng(seed);
        let f = random_map(&mut g, &cells);
        let grid = Arc::new(Grid::refining(f.partition(), &vec![9; cells.len()]).unwrap());
        let op = ulam_matrix(&f, grid.clone()).unwrap();
        for k in 0..op.size() {
            prop_assert!((op.row_sum(k) - 1.0).abs() < 1e-12);
        }
        let pos = GridFunction::new(grid.clone(), (0..grid.len()).map(|_| g.gen::<f64>()).collect()).unwrap();
        prop_assert!(op.apply(&pos).values().iter().all(|&v| v >= 0.0));
        let signed = GridFunction::new(grid.clone(), (0..grid.len()).map(|_| g.gen_range(-1.0..1.0)).collect()).unwrap();
        prop_assert!(op.apply(&signed).l1_norm() <= signed.l1_norm() + 1e-12);
    }
}

fn max_entry_gap(a: &jablab::transfer::UlamOperator, b: &jablab::transfer::UlamOperator) -> f64 {
    let mut gap: f64 = 0.0;
    for (k, j, v) in a.entries() {
        gap = gap.max((v - b.entry(k, j)).abs());
    }
    for (k, j, v) in b.entries() {
        gap = gap.max((v - a.entry(k, j)).abs());
    }
    gap
}

#[test]
fn composition_on_markov_grids() {
    let cases: Vec<(Vec<u32>, Vec<u32>, Vec<usize>)> = vec![
        (vec![2], vec![2], vec![16]),
        (vec![2], vec![3], vec![36]),
        (vec![3], vec![2], vec![36]),
        (vec![2, 3], vec![3, 2], vec![36, 36]),
        (vec![3, 3], vec![3, 3], vec![27, 9]),
    ];
    for (a, b, cells) in cases {
        let f = JablonskiMap::multiply_mod(&a).unwrap();
        let h = JablonskiMap::multiply_mod(&b).unwrap();
        let grid = Arc::new(Grid::new(RectPartition::uniform(&cells).unwrap()));
        let pf = ulam_matrix(&f, grid.clone()).unwrap();
        let ph = ulam_matrix(&h, grid.clone()).unwrap();
        let direct = ulam_matrix(&f.then(&h).unwrap(), grid).unwrap();
        let gap = max_entry_gap(&pf.then(&ph), &direct);
        assert!(gap < 1e-12, "{a:?} then {b:?}: {gap}");
    }
}
