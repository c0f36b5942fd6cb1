//! Piecewise-constant functions on tensor grids and their Tonelli–Cesari
//! variation.
//!
//! For a function constant on each open grid cell the line-wise variation
//! along axis `i` is the sum of absolute jumps across interior grid lines; it
//! is integrated against the `(n-1)`-volume of the projected cell. Jumps at the
//! faces of the cube do not count. Total variation is the maximum over axes.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, Rect, RectPartition};

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("target grid does not refine the source grid")]
    NotRefining,
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tensor grid with cached cell volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    part: RectPartition,
    volumes: Vec<f64>,
}

impl Grid {
    pub fn new(part: RectPartition) -> Self {
        let volumes = (0..part.cell_count()).map(|c| part.cell_volume(c)).collect();
        Grid { part, volumes }
    }

    pub fn uniform(cells: &[usize]) -> Result<Self, GeometryError> {
        Ok(Grid::new(RectPartition::uniform(cells)?))
    }

    /// Uniform grid with the breakpoints of `part` merged in.
    pub fn refining(part: &RectPartition, cells: &[usize]) -> Result<Self, GeometryError> {
        Ok(Grid::new(RectPartition::refining(part, cells)?))
    }

    pub fn partition(&self) -> &RectPartition {
        &self.part
    }

    pub fn dim(&self) -> usize {
        self.part.dim()
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volume(&self, cell: usize) -> f64 {
        self.volumes[cell]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, VariationError> {
        if values.len() != grid.len() {
            return Err(VariationError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        GridFunction { grid, values }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let p = grid.partition();
        let values = (0..grid.len())
            .map(|c| f(&p.cell_rect(&p.multi_index(c)).midpoint()))
            .collect();
        GridFunction { grid, values }
    }

    /// Cell averages of the indicator of `rect`.
    pub fn indicator(grid: Arc<Grid>, rect: &Rect) -> Self {
        let p = grid.partition();
        let values = (0..grid.len())
            .map(|c| {
                let cell = p.cell_rect(&p.multi_index(c));
                cell.intersect(rect).map_or(0.0, |r| r.volume() / grid.volume(c))
            })
            .collect();
        GridFunction { grid, values }
    }

    /// Density whose integral over each cell is `masses[c]`.
    pub fn from_masses(grid: Arc<Grid>, masses: &[f64]) -> Self {
        let values = masses
            .iter()
            .zip(grid.volumes())
            .map(|(m, v)| m / v)
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.volumes())
            .map(|(h, v)| h * v)
            .collect()
    }

    /// `∫ f dm`.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.volumes())
            .map(|(h, v)| h * v)
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.volumes())
            .map(|(h, v)| h.abs() * v)
            .sum()
    }

    /// `‖self − other‖₁`; both must live on the same grid.
    pub fn l1_distance(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.volumes())
            .map(|((a, b), v)| (a - b).abs() * v)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    /// Rescaled to unit integral; unchanged when the integral vanishes.
    pub fn normalized(&self) -> GridFunction {
        let m = self.integral();
        if m == 0.0 {
            self.clone()
        } else {
            self.scaled(1.0 / m)
        }
    }

    pub fn value_at(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let p = self.grid.partition();
        Ok(self.values[p.linear_index(&p.locate(x)?)])
    }

    /// Same function on a finer grid.
    pub fn resample(&self, finer: Arc<Grid>) -> Result<GridFunction, VariationError> {
        let coarse = self.grid.partition();
        let fine = finer.partition();
        if !fine.refines(coarse) {
            return Err(VariationError::NotRefining);
        }
        let values = (0..finer.len())
            .map(|c| {
                let mid = fine.cell_rect(&fine.multi_index(c)).midpoint();
                Ok(self.values[coarse.linear_index(&coarse.locate(&mid)?)])
            })
            .collect::<Result<Vec<f64>, GeometryError>>()?;
        Ok(GridFunction {
            grid: finer,
            values,
        })
    }

    /// CSV with header `i0,…,i{n-1},value`, one row per cell in linear order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = self.grid.partition();
        let n = p.dim();
        let header: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (c, v) in self.values.iter().enumerate() {
            for s in p.multi_index(c) {
                write!(w, "{s},")?;
            }
            writeln!(w, "{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: Arc<Grid>, r: R) -> Result<GridFunction, VariationError> {
        let n = grid.dim();
        let mut values = vec![0.0; grid.len()];
        let mut seen = 0;
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            if line_no == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |reason: &str| VariationError::Csv {
                line: line_no + 1,
                reason: reason.to_string(),
            };
            if fields.len() != n + 1 {
                return Err(bad("wrong field count"));
            }
            let multi = fields[..n]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("bad index"))?;
            if multi
                .iter()
                .enumerate()
                .any(|(i, &s)| s >= grid.partition().cells_on_axis(i))
            {
                return Err(bad("index out of range"));
            }
            let v: f64 = fields[n].trim().parse().map_err(|_| bad("bad value"))?;
            values[grid.partition().linear_index(&multi)] = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(VariationError::LengthMismatch {
                expected: grid.len(),
                got: seen,
            });
        }
        Ok(GridFunction { grid, values })
    }
}

/// 17 significant digits, enough for a lossless round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn directional_variation(f: &GridFunction, axis: usize) -> Result<f64, VariationError> {
    let grid = f.grid();
    let p = grid.partition();
    if axis >= p.dim() {
        return Err(VariationError::AxisOutOfRange { axis, dim: p.dim() });
    }
    let stride = p.stride(axis);
    let r = p.cells_on_axis(axis);
    let vals = f.values();
    let mut total = 0.0;
    for c in 0..vals.len() {
        let s = (c / stride) % r;
        if s == 0 {
            continue;
        }
        // (n-1)-volume of the line's cross-section
        let cross = grid.volume(c) / p.width(axis, s);
        total += (vals[c] - vals[c - stride]).abs() * cross;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BvNorm {
    pub l1: f64,
    pub variation: f64,
    pub norm: f64,
}

/// `‖f‖₁`, `V f = max_i V_i f` and `‖f‖_BV = ‖f‖₁ + V f`.
pub fn bv_norm(f: &GridFunction) -> BvNorm {
    let l1 = f.l1_norm();
    let variation = total_variation(f);
    BvNorm {
        l1,
        variation,
        norm: l1 + variation,
    }
}

pub fn total_variation(f: &GridFunction) -> f64 {
    (0..f.grid().dim())
        .map(|i| directional_variation(f, i).expect("axis in range"))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cells: &[usize]) -> Arc<Grid> {
        Arc::new(Grid::uniform(cells).unwrap())
    }

    #[test]
    fn constant_has_zero_variation() {
        let f = GridFunction::constant(grid(&[7, 3]), 2.5);
        assert_eq!(directional_variation(&f, 0).unwrap(), 0.0);
        assert_eq!(directional_variation(&f, 1).unwrap(), 0.0);
        let n = bv_norm(&GridFunction::constant(grid(&[4, 4]), -3.0));
        assert_eq!((n.l1, n.variation, n.norm), (3.0, 0.0, 3.0));
    }

    #[test]
    fn left_half_indicator() {
        let g = grid(&[4, 2]);
        let f = GridFunction::indicator(g, &Rect::new(vec![0.0, 0.0], vec![0.5, 1.0]));
        assert!((directional_variation(&f, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(directional_variation(&f, 1).unwrap(), 0.0);
        let n = bv_norm(&f);
        assert!((n.l1 - 0.5).abs() < 1e-15);
        assert!((n.variation - 1.0).abs() < 1e-15);
        assert!((n.norm - 1.5).abs() < 1e-15);
    }

    #[test]
    fn checkerboard() {
        let f = GridFunction::new(grid(&[2, 2]), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((directional_variation(&f, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((directional_variation(&f, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn axis_out_of_range() {
        let f = GridFunction::constant(grid(&[2]), 1.0);
        assert!(matches!(
            directional_variation(&f, 1),
            Err(VariationError::AxisOutOfRange { axis: 1, dim: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let g = grid(&[3, 2]);
        let f = GridFunction::from_fn(g.clone(), |x| (x[0] * 7.1).sin() / 3.0 + x[1]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i0,i1,value\n0,0,"));
    }
}
