//! Rectangular partitions of the unit cube and Jabłoński maps built from
//! affine, strictly monotone branches.
//!
//! A [`RectPartition`] is a tensor grid: each axis carries breakpoints
//! `0 = a_0 < a_1 < … < a_r = 1`. Cells are half-open `[a_{s-1}, a_s)` except
//! the last cell on each axis, which is closed on the right, so every point of
//! the cube belongs to exactly one cell.
//!
//! Cells are addressed by a multi-index `(s_1, …, s_n)` and by a linear index
//! with axis 0 the slowest-varying coordinate. Linear order is therefore the
//! lexicographic order of multi-indices.

use serde::Serialize;
use thiserror::Error;

/// Two breakpoints closer than this are treated as the same grid line.
pub const BREAKPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("a partition needs at least one axis")]
    NoAxes,
    #[error("axis {axis} has fewer than two breakpoints")]
    EmptyAxis { axis: usize },
    #[error("axis {axis} breakpoints must start at 0 and end at 1")]
    EndpointNotZeroOne { axis: usize },
    #[error("axis {axis} breakpoints are not strictly increasing at position {position}")]
    NotStrictlyIncreasing { axis: usize, position: usize },
    #[error("point {0:?} lies outside the unit cube")]
    PointOutsideCube(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("branch of cell {cell} on axis {axis} is not strictly monotone")]
    NonMonotoneBranch { cell: usize, axis: usize },
    #[error("branch of cell {cell} on axis {axis} maps outside [0, 1]")]
    BranchOutOfRange { cell: usize, axis: usize },
    #[error("expected {expected} branch entries, got {got}")]
    BranchCountMismatch { expected: usize, got: usize },
    #[error("partition does not refine the map partition")]
    NotRefining,
}

/// Axis-aligned box `∏ [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Rect { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]).max(0.0)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Intersection, or `None` when it has empty interior.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(Rect { lo, hi })
        } else {
            None
        }
    }

    /// Containment up to [`BREAKPOINT_TOL`].
    pub fn contains_rect(&self, other: &Rect) -> bool {
        (0..self.dim()).all(|i| {
            other.lo[i] >= self.lo[i] - BREAKPOINT_TOL && other.hi[i] <= self.hi[i] + BREAKPOINT_TOL
        })
    }

    /// True when `x` lies strictly inside the box.
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| self.lo[i] < v && v < self.hi[i])
    }
}

/// Derived counts of a partition: `q` cells, `c_t` interior crossing points
/// and the hyperplane complexity `M`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionSummary {
    pub q: usize,
    pub crossing_points: usize,
    pub max_hyperplane_cells: usize,
    pub cells_per_axis: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectPartition {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

impl RectPartition {
    pub fn new(mut axes: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        if axes.is_empty() {
            return Err(GeometryError::NoAxes);
        }
        for (axis, bp) in axes.iter_mut().enumerate() {
            if bp.len() < 2 {
                return Err(GeometryError::EmptyAxis { axis });
            }
            let last = bp.len() - 1;
            if (bp[0] - 0.0).abs() > BREAKPOINT_TOL || (bp[last] - 1.0).abs() > BREAKPOINT_TOL {
                return Err(GeometryError::EndpointNotZeroOne { axis });
            }
            bp[0] = 0.0;
            bp[last] = 1.0;
            for position in 1..bp.len() {
                if !(bp[position] > bp[position - 1]) {
                    return Err(GeometryError::NotStrictlyIncreasing { axis, position });
                }
            }
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (axes[i + 1].len() - 1);
        }
        Ok(RectPartition { axes, strides })
    }

    /// Uniform grid with `cells[i]` equal cells on axis `i`.
    pub fn uniform(cells: &[usize]) -> Result<Self, GeometryError> {
        let axes = cells
            .iter()
            .map(|&r| (0..=r).map(|k| k as f64 / r.max(1) as f64).collect())
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn breakpoints(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn cells_on_axis(&self, axis: usize) -> usize {
        self.axes[axis].len() - 1
    }

    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len() - 1).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.len() - 1).product()
    }

    pub fn width(&self, axis: usize, s: usize) -> f64 {
        self.axes[axis][s + 1] - self.axes[axis][s]
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(s, st)| s * st).sum()
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (i, st) in self.strides.iter().enumerate() {
            out[i] = linear / st;
            linear %= st;
        }
        out
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Cell of coordinate `x` on `axis` under the half-open convention.
    pub fn locate_axis(&self, axis: usize, x: f64) -> usize {
        let bp = &self.axes[axis];
        let k = bp.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(bp.len() - 2)
    }

    pub fn locate(&self, x: &[f64]) -> Result<Vec<usize>, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GeometryError::PointOutsideCube(x.to_vec()));
        }
        Ok((0..self.dim()).map(|i| self.locate_axis(i, x[i])).collect())
    }

    pub fn cell_rect(&self, multi: &[usize]) -> Rect {
        let lo = multi.iter().enumerate().map(|(i, &s)| self.axes[i][s]).collect();
        let hi = multi.iter().enumerate().map(|(i, &s)| self.axes[i][s + 1]).collect();
        Rect { lo, hi }
    }

    pub fn cell_volume(&self, linear: usize) -> f64 {
        self.multi_index(linear)
            .iter()
            .enumerate()
            .map(|(i, &s)| self.width(i, s))
            .product()
    }

    /// Every breakpoint of `coarser` is (up to tolerance) a breakpoint of `self`.
    pub fn refines(&self, coarser: &RectPartition) -> bool {
        self.dim() == coarser.dim()
            && (0..self.dim()).all(|i| {
                coarser.axes[i].iter().all(|&b| {
                    let k = self.axes[i].partition_point(|&a| a < b - BREAKPOINT_TOL);
                    k < self.axes[i].len() && (self.axes[i][k] - b).abs() <= BREAKPOINT_TOL
                })
            })
    }

    /// Coarsest common refinement (union of breakpoints, per axis).
    pub fn common_refinement<'a, I>(parts: I) -> Result<RectPartition, GeometryError>
    where
        I: IntoIterator<Item = &'a RectPartition>,
    {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(GeometryError::NoAxes)?;
        let mut axes = first.axes.clone();
        for p in iter {
            if p.dim() != first.dim() {
                return Err(GeometryError::DimensionMismatch {
                    expected: first.dim(),
                    got: p.dim(),
                });
            }
            for (i, bp) in p.axes.iter().enumerate() {
                axes[i] = merge_breakpoints(&axes[i], bp);
            }
        }
        RectPartition::new(axes)
    }

    /// Uniform grid with `cells[i]` cells on axis `i`, with the breakpoints of
    /// `part` inserted so that the result refines it.
    pub fn refining(part: &RectPartition, cells: &[usize]) -> Result<RectPartition, GeometryError> {
        let uni = RectPartition::uniform(cells)?;
        if uni.dim() != part.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: part.dim(),
                got: uni.dim(),
            });
        }
        let axes = (0..part.dim())
            .map(|i| merge_breakpoints(&part.axes[i], &uni.axes[i]))
            .collect();
        RectPartition::new(axes)
    }

    pub fn summary(&self) -> PartitionSummary {
        partition_stats(self)
    }
}

/// Sorted union of two breakpoint lists; values within [`BREAKPOINT_TOL`] of
/// an entry of `primary` collapse onto it.
pub fn merge_breakpoints(primary: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut all: Vec<(f64, bool)> = primary
        .iter()
        .map(|&v| (v, true))
        .chain(extra.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(all.len());
    for (v, prim) in all {
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= BREAKPOINT_TOL => {
                if prim && !last.1 {
                    *last = (v, true);
                }
            }
            _ => out.push((v, prim)),
        }
    }
    out.into_iter().map(|(v, _)| v).collect()
}

pub fn validate_partition(axes: Vec<Vec<f64>>) -> Result<PartitionSummary, GeometryError> {
    Ok(partition_stats(&RectPartition::new(axes)?))
}

/// Crossing points are counted by enumerating the vertex lattice; `M` by
/// sweeping a hyperplane `x_d = z` over every cell midline of every axis.
pub fn partition_stats(part: &RectPartition) -> PartitionSummary {
    let n = part.dim();
    let r = part.cells_per_axis();

    // vertex lattice has (r_i + 1) points per axis; interior ones avoid 0 and r_i
    let lattice: usize = r.iter().map(|&ri| ri + 1).product();
    let mut crossing_points = 0;
    for mut v in 0..lattice {
        let mut interior = true;
        for i in (0..n).rev() {
            let k = v % (r[i] + 1);
            v /= r[i] + 1;
            if k == 0 || k == r[i] {
                interior = false;
            }
        }
        if interior {
            crossing_points += 1;
        }
    }

    let q = part.cell_count();
    let mut max_hits = 0;
    for d in 0..n {
        for s in 0..r[d] {
            let z = 0.5 * (part.axes[d][s] + part.axes[d][s + 1]);
            let hits = (0..q)
                .filter(|&c| {
                    let m = part.multi_index(c);
                    part.axes[d][m[d]] < z && z < part.axes[d][m[d] + 1]
                })
                .count();
            max_hits = max_hits.max(hits);
        }
    }

    PartitionSummary {
        q,
        crossing_points,
        max_hyperplane_cells: max_hits,
        cells_per_axis: r,
    }
}

/// `x ↦ slope · x + intercept` on one axis of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct AffineBranch {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineBranch {
    pub fn new(slope: f64, intercept: f64) -> Self {
        AffineBranch { slope, intercept }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        (y - self.intercept) / self.slope
    }

    /// Image of `[lo, hi]` as an ordered interval.
    pub fn image(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.apply(lo), self.apply(hi));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// `self` after `first`.
    pub fn after(&self, first: &AffineBranch) -> AffineBranch {
        AffineBranch {
            slope: self.slope * first.slope,
            intercept: self.slope * first.intercept + self.intercept,
        }
    }
}

/// Per-axis minimal expansion `γ_i` and their product `γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionProfile {
    pub per_axis: Vec<f64>,
    pub product: f64,
}

/// Piecewise-affine Jabłoński map: on cell `B_s` the `i`-th output coordinate
/// is `φ_{i,s}(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JablonskiMap {
    partition: RectPartition,
    // indexed [cell * dim + axis]
    branches: Vec<AffineBranch>,
}

impl JablonskiMap {
    /// `branches[cell][axis]`, cells in linear order.
    pub fn new(
        partition: RectPartition,
        branches: Vec<Vec<AffineBranch>>,
    ) -> Result<Self, GeometryError> {
        let n = partition.dim();
        let q = partition.cell_count();
        if branches.len() != q {
            return Err(GeometryError::BranchCountMismatch {
                expected: q,
                got: branches.len(),
            });
        }
        let mut flat = Vec::with_capacity(q * n);
        for cell_branches in branches {
            if cell_branches.len() != n {
                return Err(GeometryError::BranchCountMismatch {
                    expected: n,
                    got: cell_branches.len(),
                });
            }
            flat.extend(cell_branches);
        }
        let map = JablonskiMap {
            partition,
            branches: flat,
        };
        map.check_branches()?;
        Ok(map)
    }

    /// Map whose branch on axis `i` depends only on the axis-cell `s_i`;
    /// `per_axis[i][s]` is that branch.
    pub fn product(
        partition: RectPartition,
        per_axis: Vec<Vec<AffineBranch>>,
    ) -> Result<Self, GeometryError> {
        let n = partition.dim();
        if per_axis.len() != n {
            return Err(GeometryError::BranchCountMismatch {
                expected: n,
                got: per_axis.len(),
            });
        }
        for (i, b) in per_axis.iter().enumerate() {
            if b.len() != partition.cells_on_axis(i) {
                return Err(GeometryError::BranchCountMismatch {
                    expected: partition.cells_on_axis(i),
                    got: b.len(),
                });
            }
        }
        let branches = (0..partition.cell_count())
            .map(|c| {
                let m = partition.multi_index(c);
                (0..n).map(|i| per_axis[i][m[i]]).collect()
            })
            .collect();
        Self::new(partition, branches)
    }

    /// `(k_1 x_1 mod 1, …, k_n x_n mod 1)` on the uniform `k_1 × … × k_n` grid.
    pub fn multiply_mod(factors: &[u32]) -> Result<Self, GeometryError> {
        let cells: Vec<usize> = factors.iter().map(|&k| k as usize).collect();
        let partition = RectPartition::uniform(&cells)?;
        let per_axis = factors
            .iter()
            .map(|&k| {
                (0..k)
                    .map(|s| AffineBranch::new(k as f64, -(s as f64)))
                    .collect()
            })
            .collect();
        Self::product(partition, per_axis)
    }

    fn check_branches(&self) -> Result<(), GeometryError> {
        let n = self.dim();
        for cell in 0..self.partition.cell_count() {
            let rect = self.partition.cell_rect(&self.partition.multi_index(cell));
            for axis in 0..n {
                let b = self.branches[cell * n + axis];
                if !(b.slope.is_finite() && b.slope != 0.0 && b.intercept.is_finite()) {
                    return Err(GeometryError::NonMonotoneBranch { cell, axis });
                }
                let (lo, hi) = b.image(rect.lo[axis], rect.hi[axis]);
                // cell edges are only known to BREAKPOINT_TOL
                let tol = BREAKPOINT_TOL * b.slope.abs().max(1.0);
                if lo < -tol || hi > 1.0 + tol {
                    return Err(GeometryError::BranchOutOfRange { cell, axis });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn partition(&self) -> &RectPartition {
        &self.partition
    }

    pub fn branch(&self, cell: usize, axis: usize) -> &AffineBranch {
        &self.branches[cell * self.dim() + axis]
    }

    pub fn cell_branches(&self, cell: usize) -> &[AffineBranch] {
        let n = self.dim();
        &self.branches[cell * n..(cell + 1) * n]
    }

    /// Image point and per-axis derivative at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
        let multi = self.partition.locate(x)?;
        let cell = self.partition.linear_index(&multi);
        let br = self.cell_branches(cell);
        let y = x
            .iter()
            .zip(br)
            .map(|(&xi, b)| b.apply(xi).clamp(0.0, 1.0))
            .collect();
        let d = br.iter().map(|b| b.slope).collect();
        Ok((y, d))
    }

    /// Image of a box lying inside cell `cell`.
    pub fn image_of(&self, cell: usize, rect: &Rect) -> Rect {
        let br = self.cell_branches(cell);
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..self.dim())
            .map(|i| {
                let (a, b) = br[i].image(rect.lo[i], rect.hi[i]);
                (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
            })
            .unzip();
        Rect { lo, hi }
    }

    pub fn min_expansion(&self) -> ExpansionProfile {
        let n = self.dim();
        let per_axis: Vec<f64> = (0..n)
            .map(|i| {
                (0..self.partition.cell_count())
                    .map(|c| self.branch(c, i).slope.abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let product = per_axis.iter().product();
        ExpansionProfile { per_axis, product }
    }

    /// Same map expressed over a finer partition.
    pub fn refine(&self, finer: &RectPartition) -> Result<JablonskiMap, GeometryError> {
        if !finer.refines(&self.partition) {
            return Err(GeometryError::NotRefining);
        }
        let branches = (0..finer.cell_count())
            .map(|c| {
                let mid = finer.cell_rect(&finer.multi_index(c)).midpoint();
                let own = self.partition.linear_index(&self.partition.locate(&mid)?);
                Ok(self.cell_branches(own).to_vec())
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        JablonskiMap::new(finer.clone(), branches)
    }

    /// The composition `next ∘ self` over the partition on which it is
    /// affine: the breakpoints of `self` plus the preimages of the
    /// breakpoints of `next`.
    pub fn then(&self, next: &JablonskiMap) -> Result<JablonskiMap, GeometryError> {
        let n = self.dim();
        if next.dim() != n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: next.dim(),
            });
        }
        let mut axes: Vec<Vec<f64>> = (0..n)
            .map(|i| self.partition.breakpoints(i).to_vec())
            .collect();
        for cell in 0..self.partition.cell_count() {
            let rect = self.partition.cell_rect(&self.partition.multi_index(cell));
            for (i, axis) in axes.iter_mut().enumerate() {
                let b = self.branch(cell, i);
                let (lo, hi) = b.image(rect.lo[i], rect.hi[i]);
                let pre: Vec<f64> = next
                    .partition
                    .breakpoints(i)
                    .iter()
                    .filter(|&&z| z > lo + BREAKPOINT_TOL && z < hi - BREAKPOINT_TOL)
                    .map(|&z| b.inverse(z))
                    .collect();
                if !pre.is_empty() {
                    *axis = merge_breakpoints(axis, &pre);
                }
            }
        }
        let part = RectPartition::new(axes)?;
        let branches = (0..part.cell_count())
            .map(|c| {
                let mid = part.cell_rect(&part.multi_index(c)).midpoint();
                let first = self.partition.linear_index(&self.partition.locate(&mid)?);
                let y: Vec<f64> = mid
                    .iter()
                    .zip(self.cell_branches(first))
                    .map(|(&x, b)| b.apply(x).clamp(0.0, 1.0))
                    .collect();
                let second = next.partition.linear_index(&next.partition.locate(&y)?);
                Ok((0..n)
                    .map(|i| next.branch(second, i).after(self.branch(first, i)))
                    .collect())
            })
            .collect::<Result<Vec<Vec<AffineBranch>>, GeometryError>>()?;
        JablonskiMap::new(part, branches)
    }
}
