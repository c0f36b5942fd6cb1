//! Ulam discretization of the transfer operator of a Jabłoński map.
//!
//! Entries are `P[k][j] = m(B_k ∩ f⁻¹ B_j) / m(B_k)`. On a grid cell inside a
//! partition rectangle the map acts axis by axis through affine branches, so
//! the fraction factors as a product of one-dimensional interval overlaps and
//! is computed in closed form.
//!
//! Operators act on mass vectors (cell integrals of a density): the mass
//! vector `m` is mapped to `m P`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::driving::{Driving, SymbolWindow};
use crate::geometry::{AffineBranch, GeometryError, JablonskiMap};
use crate::variation::{fmt_f64, Grid, GridFunction};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("grid does not refine the map partition")]
    GridNotRefining,
    #[error("window provides {available} future symbols, {needed} needed")]
    WindowTooShort { needed: usize, available: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Sparse row-stochastic Ulam matrix on a grid.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    grid: Arc<Grid>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // transpose, used for application so that each output cell is one dot
    // product with a fixed summation order
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    tvals: Vec<f64>,
}

/// Overlap fractions of the image of `[x0, x1]` with the cells of `axis_bp`.
fn overlap_row(branch: &AffineBranch, x0: f64, x1: f64, axis_bp: &[f64]) -> Vec<(usize, f64)> {
    let (lo, hi) = branch.image(x0, x1);
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    let len = hi - lo;
    let cells = axis_bp.len() - 1;
    let mut j = axis_bp.partition_point(|&b| b <= lo).saturating_sub(1).min(cells - 1);
    let mut out = Vec::new();
    while j < cells && axis_bp[j] < hi {
        let ov = hi.min(axis_bp[j + 1]) - lo.max(axis_bp[j]);
        if ov > 0.0 {
            out.push((j, ov / len));
        }
        j += 1;
    }
    out
}

pub fn ulam_matrix(map: &JablonskiMap, grid: Arc<Grid>) -> Result<UlamOperator, TransferError> {
    let gp = grid.partition();
    let mp = map.partition();
    if !gp.refines(mp) {
        return Err(TransferError::GridNotRefining);
    }
    let n = gp.dim();

    // partition axis-cell of every grid axis-cell, and the first grid cell of
    // every partition axis-cell
    let mut axis_cell_of: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut axis_start: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let bp = gp.breakpoints(i);
        let owner: Vec<usize> = (0..gp.cells_on_axis(i))
            .map(|g| mp.locate_axis(i, 0.5 * (bp[g] + bp[g + 1])))
            .collect();
        let mut start = vec![usize::MAX; mp.cells_on_axis(i)];
        for (g, &s) in owner.iter().enumerate() {
            start[s] = start[s].min(g);
        }
        axis_cell_of.push(owner);
        axis_start.push(start);
    }

    // one-dimensional overlap rows, per partition rectangle and axis, for the
    // grid cells along that axis inside the rectangle
    let rect_rows: Vec<Vec<Vec<Vec<(usize, f64)>>>> = (0..mp.cell_count())
        .into_par_iter()
        .map(|rect| {
            let m = mp.multi_index(rect);
            (0..n)
                .map(|i| {
                    let bp = gp.breakpoints(i);
                    let b = map.branch(rect, i);
                    let start = axis_start[i][m[i]];
                    (start..gp.cells_on_axis(i))
                        .take_while(|&g| axis_cell_of[i][g] == m[i])
                        .map(|g| overlap_row(b, bp[g], bp[g + 1], bp))
                        .collect()
                })
                .collect()
        })
        .collect();

    let rows: Vec<Vec<(usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let gm = gp.multi_index(k);
            let pm: Vec<usize> = (0..n).map(|i| axis_cell_of[i][gm[i]]).collect();
            let rect = mp.linear_index(&pm);
            let factors: Vec<&Vec<(usize, f64)>> = (0..n)
                .map(|i| &rect_rows[rect][i][gm[i] - axis_start[i][pm[i]]])
                .collect();
            let mut row = vec![(0usize, 1.0f64)];
            for (i, f) in factors.iter().enumerate() {
                let stride = gp.stride(i);
                let mut next = Vec::with_capacity(row.len() * f.len());
                for &(idx, w) in &row {
                    for &(j, v) in f.iter() {
                        next.push((idx + j * stride, w * v));
                    }
                }
                row = next;
            }
            row
        })
        .collect();

    Ok(UlamOperator::from_rows(grid, rows))
}

impl UlamOperator {
    /// Assembles from per-source rows, each sorted by target index.
    pub fn from_rows(grid: Arc<Grid>, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let size = grid.len();
        let mut row_ptr = Vec::with_capacity(size + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in &rows {
            for &(j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        let mut counts = vec![0usize; size + 1];
        for &j in &cols {
            counts[j + 1] += 1;
        }
        for j in 0..size {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut trows = vec![0; nnz];
        let mut tvals = vec![0.0; nnz];
        for k in 0..size {
            for e in row_ptr[k]..row_ptr[k + 1] {
                let j = cols[e];
                trows[fill[j]] = k;
                tvals[fill[j]] = vals[e];
                fill[j] += 1;
            }
        }
        UlamOperator {
            grid,
            row_ptr,
            cols,
            vals,
            col_ptr,
            rows: trows,
            tvals,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[k]..self.row_ptr[k + 1]).map(move |e| (self.cols[e], self.vals[e]))
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.vals[self.row_ptr[k]..self.row_ptr[k + 1]].iter().sum()
    }

    pub fn entry(&self, k: usize, j: usize) -> f64 {
        self.row(k).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `(source, target, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size()).flat_map(move |k| self.row(k).map(move |(j, v)| (k, j, v)))
    }

    /// `m ↦ m P` on mass vectors.
    pub fn apply_mass(&self, mass: &[f64]) -> Vec<f64> {
        assert_eq!(mass.len(), self.size());
        (0..self.size())
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                (self.col_ptr[j]..self.col_ptr[j + 1])
                    .map(|e| self.tvals[e] * mass[self.rows[e]])
                    .sum()
            })
            .collect()
    }

    pub fn apply(&self, h: &GridFunction) -> GridFunction {
        let out = self.apply_mass(&h.masses());
        GridFunction::from_masses(self.grid.clone(), &out)
    }

    /// Product `self` then `next` (mass vectors see `m P_self P_next`).
    pub fn then(&self, next: &UlamOperator) -> UlamOperator {
        let rows = (0..self.size())
            .into_par_iter()
            .map(|k| {
                let mut acc = std::collections::BTreeMap::new();
                for (j, v) in self.row(k) {
                    for (l, w) in next.row(j) {
                        *acc.entry(l).or_insert(0.0) += v * w;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        UlamOperator::from_rows(self.grid.clone(), rows)
    }

    /// Debug dump: `source,target,entry` triples.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "source,target,entry")?;
        for (k, j, v) in self.entries() {
            writeln!(w, "{k},{j},{}", fmt_f64(v))?;
        }
        Ok(())
    }
}

/// Ulam operators of every symbol of a driving on one grid.
#[derive(Debug, Clone)]
pub struct Cocycle {
    grid: Arc<Grid>,
    ops: Vec<UlamOperator>,
}

impl Cocycle {
    pub fn new(driving: &Driving, grid: Arc<Grid>) -> Result<Self, TransferError> {
        let ops = (0..driving.alphabet_size())
            .map(|a| ulam_matrix(driving.map(a), grid.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Cocycle { grid, ops })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self, symbol: usize) -> &UlamOperator {
        &self.ops[symbol]
    }

    /// Applies the operators of `symbols` in order, first symbol first.
    pub fn apply_symbols(&self, symbols: &[usize], h: &GridFunction) -> GridFunction {
        let mut mass = h.masses();
        for &a in symbols {
            mass = self.ops[a].apply_mass(&mass);
        }
        GridFunction::from_masses(self.grid.clone(), &mass)
    }

    /// `L_ω^{(k)} h = L_{σ^{k-1}ω} ∘ … ∘ L_ω h`, with `ω` the window.
    pub fn apply(
        &self,
        window: &SymbolWindow,
        h: &GridFunction,
        k: usize,
    ) -> Result<GridFunction, TransferError> {
        if k > window.k_future {
            return Err(TransferError::WindowTooShort {
                needed: k,
                available: window.k_future,
            });
        }
        let mass = h.integral();
        if (mass - 1.0).abs() > 1e-9 || h.values().iter().any(|&v| v < 0.0) {
            log::warn!("cocycle applied to a non-probability density (mass {mass})");
        }
        let symbols = window.block(0, k).expect("checked window length");
        Ok(self.apply_symbols(&symbols, h))
    }
}

/// Builds the operators on the density's grid and applies `k` steps.
pub fn apply_cocycle(
    driving: &Driving,
    window: &SymbolWindow,
    density: &GridFunction,
    k: usize,
) -> Result<GridFunction, TransferError> {
    Cocycle::new(driving, density.grid().clone())?.apply(window, density, k)
}

/// `L h (x) = Σ_s h(Ψ_s x) ∏_i δ_{i,s}` over the partition rectangles whose
/// image contains `x`, with `Ψ_s` the inverse branch and `δ_{i,s} = 1/|φ'|`.
pub fn transfer_pointwise(map: &JablonskiMap, h: &GridFunction, x: &[f64]) -> Result<f64, GeometryError> {
    let p = map.partition();
    let n = p.dim();
    if x.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut total = 0.0;
    'cells: for cell in 0..p.cell_count() {
        let rect = p.cell_rect(&p.multi_index(cell));
        let mut pre = Vec::with_capacity(n);
        let mut jac = 1.0;
        for i in 0..n {
            let b = map.branch(cell, i);
            let (lo, hi) = b.image(rect.lo[i], rect.hi[i]);
            if x[i] < lo || x[i] > hi {
                continue 'cells;
            }
            pre.push(b.inverse(x[i]).clamp(rect.lo[i], rect.hi[i]));
            jac /= b.slope.abs();
        }
        total += h.value_at(&pre)? * jac;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RectPartition;

    #[test]
    fn doubling_on_four_cells() {
        let f = JablonskiMap::multiply_mod(&[2]).unwrap();
        let op = ulam_matrix(&f, Arc::new(Grid::uniform(&[4]).unwrap())).unwrap();
        let expect = [[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5], [0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]];
        for (k, row) in expect.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((op.entry(k, j) - v).abs() < 1e-15, "({k},{j})");
            }
        }
    }

    #[test]
    fn identity_map_gives_identity() {
        let id = JablonskiMap::product(
            RectPartition::uniform(&[1, 1]).unwrap(),
            vec![vec![AffineBranch::new(1.0, 0.0)]; 2],
        )
        .unwrap();
        let op = ulam_matrix(&id, Arc::new(Grid::uniform(&[5, 3]).unwrap())).unwrap();
        assert_eq!(op.nnz(), 15);
        for k in 0..15 {
            assert_eq!(op.entry(k, k), 1.0);
        }
    }

    #[test]
    fn non_refining_grid_is_rejected() {
        let f = JablonskiMap::multiply_mod(&[3]).unwrap();
        assert!(matches!(
            ulam_matrix(&f, Arc::new(Grid::uniform(&[4]).unwrap())),
            Err(TransferError::GridNotRefining)
        ));
    }

    #[test]
    fn pointwise_doubling_examples() {
        let f = JablonskiMap::multiply_mod(&[2]).unwrap();
        let g = Arc::new(Grid::uniform(&[4]).unwrap());
        let one = GridFunction::constant(g.clone(), 1.0);
        for x in [0.1, 0.3, 0.77] {
            assert!((transfer_pointwise(&f, &one, &[x]).unwrap() - 1.0).abs() < 1e-15);
        }
        let left = GridFunction::new(g, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((transfer_pointwise(&f, &left, &[0.3]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn window_too_short() {
        use crate::driving::{build_driving, DrivingSpec, LawSpec, SymbolSpec};
        let d = build_driving(DrivingSpec {
            symbols: vec![SymbolSpec {
                name: "D".into(),
                map: JablonskiMap::multiply_mod(&[2]).unwrap(),
            }],
            law: LawSpec::Iid(vec![1.0]),
            common_partition: None,
        })
        .unwrap();
        let w = SymbolWindow::from_symbols(vec![0, 0, 0], 0);
        let h = GridFunction::constant(Arc::new(Grid::uniform(&[4]).unwrap()), 1.0);
        assert!(apply_cocycle(&d, &w, &h, 2).is_ok());
        assert!(matches!(
            apply_cocycle(&d, &w, &h, 3),
            Err(TransferError::WindowTooShort { needed: 3, available: 2 })
        ));
        assert_eq!(apply_cocycle(&d, &w, &h, 0).unwrap(), h);
    }
}
