//! Random invariant densities, Lyapunov growth, ACIP counting, basins of
//! physical measures and the rectangle-propagation diagnostic.
//!
//! Densities are handled as mass vectors on the grid, so the L¹ distance of
//! two densities is the ℓ¹ distance of their mass vectors.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::driving::{derive_seed, expansion_integral, sample_window, Driving, SymbolWindow};
use crate::geometry::{GeometryError, Rect, RectPartition};
use crate::transfer::Cocycle;
use crate::variation::{bv_norm, GridFunction};

/// Distance above which an orbit is not attributed to any representative.
pub const UNRESOLVED_DISTANCE: f64 = 0.25;

/// Amplitude of the perturbation added to simulated orbit points.
pub const ORBIT_NOISE: f64 = 1e-9;

/// First Cesàro checkpoint for drivings with more than one active symbol.
pub const RANDOM_S_MIN: usize = 64;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ErgodicError {
    #[error("expansion integral {gamma} is not positive")]
    NotAdmissible { gamma: f64 },
    #[error("window provides {available} symbols on the needed side, {needed} needed")]
    WindowTooShort { needed: usize, available: usize },
    #[error("initial box is not contained in a single partition cell")]
    SeedNotInCell,
    #[error("density family has no entry at offset {0}")]
    MissingOffset(i64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn require_admissible(driving: &Driving) -> Result<(), ErgodicError> {
    let g = expansion_integral(driving);
    if g.admissible {
        Ok(())
    } else {
        Err(ErgodicError::NotAdmissible { gamma: g.gamma })
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `Σ_{k=k_lo}^{k_hi} m P_{t-k} ⋯ P_{t-1}` by a Horner sweep, with `t` the
/// offset. Needs symbols at times `t - k_hi ..= t - 1`.
fn backward_sum(cocycle: &Cocycle, window: &SymbolWindow, offset: i64, m: &[f64], k_lo: usize, k_hi: usize) -> Vec<f64> {
    let mut w = vec![0.0; m.len()];
    for j in (1..=k_hi).rev() {
        if j >= k_lo {
            for (wi, mi) in w.iter_mut().zip(m) {
                *wi += mi;
            }
        }
        w = cocycle.operator(window.at(offset - j as i64)).apply_mass(&w);
    }
    w
}

/// Random invariant densities `h_{σ^t ω}` of one window.
#[derive(Debug, Clone)]
pub struct DensityFamily {
    pub densities: BTreeMap<i64, GridFunction>,
    pub s_used: usize,
    /// `‖H^s − H^{s−1}‖₁` of the Cesàro averages at `s_used`.
    pub increment: f64,
    /// `‖h^s − h^{s−1}‖₁` of the plain backward pushes at `s_used`.
    pub raw_increment: f64,
    pub converged: bool,
}

impl DensityFamily {
    pub fn at(&self, offset: i64) -> Option<&GridFunction> {
        self.densities.get(&offset)
    }
}

/// Cesàro limit `h_ω = lim (1/s) Σ_{k≤s} L_{σ^{-1}ω} ∘ ⋯ ∘ L_{σ^{-k}ω} 1`.
///
/// The increment is examined at `s = s₀, 2s₀, 4s₀, …` and at `s_max`; the
/// first `s` where it drops below `tol` is used. `s₀ = 1` for a single
/// active symbol and [`RANDOM_S_MIN`] otherwise, since a run of past symbols
/// that all fix the uniform density makes the first averages coincide.
/// Running into `s_max` is reported through `converged = false`.
pub fn equivariant_density(
    driving: &Driving,
    cocycle: &Cocycle,
    window: &SymbolWindow,
    s_max: usize,
    tol: f64,
) -> Result<DensityFamily, ErgodicError> {
    require_admissible(driving)?;
    if s_max == 0 {
        return Err(ErgodicError::InvalidArgument("s_max must be positive".into()));
    }
    if window.k_past < s_max {
        return Err(ErgodicError::WindowTooShort {
            needed: s_max,
            available: window.k_past,
        });
    }
    let grid = cocycle.grid().clone();
    let one = grid.volumes().to_vec();

    let active = driving.stationary().iter().filter(|&&p| p > 0.0).count();
    let mut s = if active > 1 { RANDOM_S_MIN.min(s_max) } else { 1 };
    let (avg, inc, raw) = loop {
        let sf = s as f64;
        let avg: Vec<f64> = backward_sum(cocycle, window, 0, &one, 1, s).iter().map(|v| v / sf).collect();
        let last = backward_sum(cocycle, window, 0, &one, s, s);
        let prev_avg: Vec<f64> = if s == 1 {
            one.clone()
        } else {
            avg.iter().zip(&last).map(|(a, l)| (sf * a - l) / (sf - 1.0)).collect()
        };
        let inc = l1(&avg, &prev_avg);
        if inc < tol || s == s_max {
            let before = if s == 1 {
                one.clone()
            } else {
                backward_sum(cocycle, window, 0, &one, s - 1, s - 1)
            };
            break (avg, inc, l1(&last, &before));
        }
        s = (2 * s).min(s_max);
    };
    let converged = inc < tol;
    if !converged {
        log::warn!("Cesàro averages not converged at s = {s}: increment {inc:e} ≥ {tol:e}");
    }
    let sf = s as f64;
    let next: Vec<f64> = backward_sum(cocycle, window, 1, &one, 1, s).iter().map(|v| v / sf).collect();
    let mut densities = BTreeMap::new();
    densities.insert(0, GridFunction::from_masses(grid.clone(), &avg));
    densities.insert(1, GridFunction::from_masses(grid, &next));
    for h in densities.values() {
        debug_assert!((h.integral() - 1.0).abs() < MASS_TOL);
    }
    Ok(DensityFamily {
        densities,
        s_used: s,
        increment: inc,
        raw_increment: raw,
        converged,
    })
}

/// `‖L_ω h_ω − h_{σω}‖₁` for the symbol of the window at time 0.
pub fn equivariance_residual(cocycle: &Cocycle, window: &SymbolWindow, family: &DensityFamily) -> Result<f64, ErgodicError> {
    let h0 = family.at(0).ok_or(ErgodicError::MissingOffset(0))?;
    let h1 = family.at(1).ok_or(ErgodicError::MissingOffset(1))?;
    let pushed = cocycle.operator(window.at(0)).apply_mass(&h0.masses());
    Ok(l1(&pushed, &h1.masses()))
}

/// Starting density for growth-rate estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestDensity {
    Uniform,
    /// Normalised `∏_i (1 + x_i)`.
    Ramp,
}

impl TestDensity {
    pub fn build(self, grid: &std::sync::Arc<crate::variation::Grid>) -> GridFunction {
        match self {
            TestDensity::Uniform => GridFunction::constant(grid.clone(), 1.0),
            TestDensity::Ramp => GridFunction::from_fn(grid.clone(), |x| x.iter().map(|v| 1.0 + v).product()).normalized(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub k: usize,
    pub trials: Vec<f64>,
}

/// Average over trials of `(1/k) log(‖L_ω^{(k)} h₀‖_BV / ‖h₀‖_BV)`.
pub fn lyapunov_max(
    driving: &Driving,
    cocycle: &Cocycle,
    k: usize,
    n_trials: usize,
    seed: u64,
    h0: TestDensity,
) -> Result<LyapunovEstimate, ErgodicError> {
    require_admissible(driving)?;
    if k == 0 || n_trials == 0 {
        return Err(ErgodicError::InvalidArgument("k and n_trials must be positive".into()));
    }
    let h0 = h0.build(cocycle.grid());
    let base = bv_norm(&h0).norm;
    let trials: Vec<f64> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let w = sample_window(driving, derive_seed(seed, t as u64), 0, k);
            let hk = cocycle.apply_symbols(&w.block(0, k).expect("window long enough"), &h0);
            (bv_norm(&hk).norm / base).ln() / k as f64
        })
        .collect();
    Ok(LyapunovEstimate {
        lambda: trials.iter().sum::<f64>() / n_trials as f64,
        k,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountParams {
    pub n_seeds: usize,
    pub n_windows: usize,
    pub k_settle: usize,
    pub cluster_tol: f64,
}

impl Default for CountParams {
    fn default() -> Self {
        CountParams {
            n_seeds: 16,
            n_windows: 4,
            k_settle: 200,
            cluster_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcipCount {
    pub r_hat: usize,
    pub per_window: Vec<usize>,
    /// All windows produced the same number of clusters.
    pub stable: bool,
    pub representatives: Vec<GridFunction>,
    /// Leading exponents of the Ulam cocycle.
    pub exponents: Vec<f64>,
    pub d1_hat: usize,
    /// `r̂ > d̂₁`, which the theory rules out.
    pub discrepancy: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcipCountSummary {
    pub r_hat: usize,
    pub per_window: Vec<usize>,
    pub stable: bool,
    pub exponents: Vec<f64>,
    pub d1_hat: usize,
    pub discrepancy: bool,
    pub representative_masses: Vec<f64>,
}

impl AcipCount {
    pub fn summary(&self) -> AcipCountSummary {
        AcipCountSummary {
            r_hat: self.r_hat,
            per_window: self.per_window.clone(),
            stable: self.stable,
            exponents: self.exponents.clone(),
            d1_hat: self.d1_hat,
            discrepancy: self.discrepancy,
            representative_masses: self.representatives.iter().map(|h| h.integral()).collect(),
        }
    }
}

/// Single grid cells spread on a lattice of `⌈n_seeds^{1/n}⌉` points per axis.
fn seed_cells(cocycle: &Cocycle, n_seeds: usize) -> Vec<usize> {
    let p = cocycle.grid().partition();
    let n = p.dim();
    let mut m: usize = 1;
    while m.pow(n as u32) < n_seeds {
        m += 1;
    }
    (0..n_seeds)
        .map(|j| {
            let mut rem = j;
            let mut multi = vec![0; n];
            for i in (0..n).rev() {
                let li = rem % m;
                rem /= m;
                let x = (li as f64 + 0.5) / m as f64;
                multi[i] = p.locate_axis(i, x);
            }
            p.linear_index(&multi)
        })
        .collect()
}

/// Greedy leader clustering; returns the member lists.
fn cluster(points: &[Vec<f64>], tol: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (j, pt) in points.iter().enumerate() {
        match clusters.iter_mut().find(|c| l1(&points[c[0]], pt) < tol) {
            Some(c) => c.push(j),
            None => clusters.push(vec![j]),
        }
    }
    clusters
}

/// Leading `p` exponents of the cocycle along `symbols`, by repeated QR,
/// averaging over the second half of the run.
pub fn cocycle_spectrum(cocycle: &Cocycle, symbols: &[usize], p: usize, seed: u64) -> Vec<f64> {
    let dim = cocycle.grid().len();
    let p = p.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DMatrix::<f64>::from_fn(dim, p, |_, _| rng.gen_range(-1.0..1.0));
    let mut sums = vec![0.0; p];
    let burn = symbols.len() / 2;
    for (step, &a) in symbols.iter().enumerate() {
        let op = cocycle.operator(a);
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|c| op.apply_mass(q.column(c).as_slice()))
            .collect();
        let m = DMatrix::from_fn(dim, p, |r, c| cols[c][r]);
        let qr = m.qr();
        let r = qr.r();
        if step >= burn {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += r[(i, i)].abs().ln();
            }
        }
        q = qr.q();
    }
    let steps = (symbols.len() - burn).max(1) as f64;
    let mut ex: Vec<f64> = sums.iter().map(|s| s / steps).collect();
    ex.sort_by(|a, b| b.total_cmp(a));
    ex
}

/// Empirical number of ergodic ACIPs.
///
/// Each seed density (one grid cell) is pushed backwards along the window and
/// its pushes `h^k` are averaged over `k_settle/2 < k ≤ k_settle`. Limits
/// within `cluster_tol` in L¹ share a cluster; `r̂` is the most frequent
/// cluster count over windows. Representatives are cluster means of the
/// window-averaged limits.
pub fn count_acips(driving: &Driving, cocycle: &Cocycle, params: CountParams, seed: u64) -> Result<AcipCount, ErgodicError> {
    require_admissible(driving)?;
    let CountParams {
        n_seeds,
        n_windows,
        k_settle,
        cluster_tol,
    } = params;
    if n_seeds == 0 || n_windows == 0 || k_settle < 2 {
        return Err(ErgodicError::InvalidArgument(
            "need at least one seed, one window and k_settle ≥ 2".into(),
        ));
    }
    let grid = cocycle.grid();
    let cells = seed_cells(cocycle, n_seeds);
    let k_lo = k_settle / 2 + 1;
    let span = (k_settle - k_lo + 1) as f64;
    let windows: Vec<SymbolWindow> = (0..n_windows)
        .map(|w| sample_window(driving, derive_seed(seed, w as u64), k_settle, 0))
        .collect();

    let limits: Vec<Vec<Vec<f64>>> = windows
        .par_iter()
        .map(|win| {
            cells
                .par_iter()
                .map(|&c| {
                    let mut m = vec![0.0; grid.len()];
                    m[c] = 1.0;
                    backward_sum(cocycle, win, 0, &m, k_lo, k_settle)
                        .into_iter()
                        .map(|v| v / span)
                        .collect()
                })
                .collect()
        })
        .collect();

    let per_window: Vec<usize> = limits.iter().map(|l| cluster(l, cluster_tol).len()).collect();
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &r in &per_window {
        *freq.entry(r).or_default() += 1;
    }
    let best = freq.values().copied().max().unwrap_or(0);
    let r_hat = freq.iter().find(|(_, &f)| f == best).map_or(0, |(&r, _)| r);
    let stable = freq.len() == 1;

    let averaged: Vec<Vec<f64>> = (0..cells.len())
        .map(|j| {
            let mut acc = vec![0.0; grid.len()];
            for l in &limits {
                for (a, v) in acc.iter_mut().zip(&l[j]) {
                    *a += v / n_windows as f64;
                }
            }
            acc
        })
        .collect();
    let representatives = cluster(&averaged, cluster_tol)
        .into_iter()
        .map(|members| {
            let mut acc = vec![0.0; grid.len()];
            for &j in &members {
                for (a, v) in acc.iter_mut().zip(&averaged[j]) {
                    *a += v;
                }
            }
            let total: f64 = acc.iter().sum();
            let acc: Vec<f64> = acc.iter().map(|v| v / total).collect();
            GridFunction::from_masses(grid.clone(), &acc)
        })
        .collect();

    let symbols = windows[0].block(-(k_settle as i64), k_settle).expect("window long enough");
    let p = (n_seeds.max(r_hat + 1)).min(8);
    let exponents = cocycle_spectrum(cocycle, &symbols, p, derive_seed(seed, u64::MAX));
    let d1_hat = exponents.iter().filter(|l| l.abs() < cluster_tol).count();
    if r_hat > d1_hat {
        log::warn!("empirical count {r_hat} exceeds the number {d1_hat} of neutral exponents");
    }
    Ok(AcipCount {
        r_hat,
        per_window,
        stable,
        representatives,
        exponents,
        d1_hat,
        discrepancy: r_hat > d1_hat,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinEstimate {
    pub n_points: usize,
    pub n_steps: usize,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    pub unresolved: usize,
    pub unresolved_fraction: f64,
}

fn coarse_masses(h: &GridFunction, coarse: &RectPartition) -> Result<Vec<f64>, GeometryError> {
    let p = h.grid().partition();
    let mut out = vec![0.0; coarse.cell_count()];
    for (c, m) in h.masses().into_iter().enumerate() {
        let mid = p.cell_rect(&p.multi_index(c)).midpoint();
        out[coarse.linear_index(&coarse.locate(&mid)?)] += m;
    }
    Ok(out)
}

/// Keeps `y + noise` inside the closure of the cell of `part` holding `y`.
fn jitter(part: &RectPartition, y: &mut [f64], rng: &mut ChaCha8Rng) {
    for (i, yi) in y.iter_mut().enumerate() {
        let s = part.locate_axis(i, *yi);
        let bp = part.breakpoints(i);
        let (lo, hi) = (bp[s], bp[s + 1]);
        let hi = if s + 2 == bp.len() { hi } else { hi - (hi - lo) * 1e-12 };
        *yi = (*yi + ORBIT_NOISE * (rng.gen::<f64>() - 0.5)).clamp(lo, hi);
    }
}

/// Attributes Lebesgue-uniform starting points to the representative nearest
/// to their orbit's occupation histogram.
///
/// Histograms and representatives are compared on the common partition of
/// the driving. Orbit points receive a perturbation of size
/// [`ORBIT_NOISE`] that never leaves the current partition cell.
pub fn basin_estimate(
    driving: &Driving,
    representatives: &[GridFunction],
    n_points: usize,
    n_steps: usize,
    seed: u64,
) -> Result<BasinEstimate, ErgodicError> {
    if n_points == 0 || n_steps == 0 {
        return Err(ErgodicError::InvalidArgument("n_points and n_steps must be positive".into()));
    }
    let coarse = driving.common_partition();
    let reps: Vec<Vec<f64>> = representatives
        .iter()
        .map(|h| coarse_masses(h, coarse))
        .collect::<Result<_, _>>()?;
    let n = driving.dim();
    let point_seed = derive_seed(seed, 0);
    let window_seed = derive_seed(seed, 1);

    let assigned = (0..n_points)
        .into_par_iter()
        .map(|pt| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(point_seed, pt as u64));
            let window = sample_window(driving, derive_seed(window_seed, pt as u64), 0, n_steps);
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut hist = vec![0.0; coarse.cell_count()];
            for t in 0..n_steps {
                let (mut y, _) = driving.map(window.at(t as i64)).evaluate(&x)?;
                jitter(coarse, &mut y, &mut rng);
                hist[coarse.linear_index(&coarse.locate(&y)?)] += 1.0 / n_steps as f64;
                x = y;
            }
            let best = reps
                .iter()
                .enumerate()
                .map(|(r, m)| (r, l1(m, &hist)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            Ok(match best {
                Some((r, d)) if d < UNRESOLVED_DISTANCE => Some(r),
                _ => None,
            })
        })
        .collect::<Result<Vec<Option<usize>>, GeometryError>>()?;

    let mut counts = vec![0; representatives.len()];
    let mut unresolved = 0;
    for a in assigned {
        match a {
            Some(r) => counts[r] += 1,
            None => unresolved += 1,
        }
    }
    let total = n_points as f64;
    Ok(BasinEstimate {
        n_points,
        n_steps,
        fractions: counts.iter().map(|&c| c as f64 / total).collect(),
        counts,
        unresolved,
        unresolved_fraction: unresolved as f64 / total,
    })
}

/// One step `I(s) ↦ I(s+1)` of the propagated box.
#[derive(Debug, Clone, Serialize)]
pub struct PropagationStep {
    pub symbol: usize,
    pub image: Rect,
    /// Crossing points of the next partition inside the open image box.
    pub crossing_points: usize,
    /// Chosen cell of the next partition, as a multi-index.
    pub cell: Vec<usize>,
    pub next: Rect,
    pub volume: f64,
    /// Guaranteed lower bound on `volume` from the previous volume.
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RectangleTrajectory {
    pub initial: Rect,
    pub initial_volume: f64,
    pub steps: Vec<PropagationStep>,
    /// First step (counted from 1) whose image contains a crossing point.
    pub first_crossing: Option<usize>,
}

impl RectangleTrajectory {
    pub fn volumes(&self) -> Vec<f64> {
        std::iter::once(self.initial_volume)
            .chain(self.steps.iter().map(|s| s.volume))
            .collect()
    }
}

fn interior_breakpoints_inside(bp: &[f64], lo: f64, hi: f64) -> usize {
    bp[1..bp.len() - 1].iter().filter(|&&b| lo < b && b < hi).count()
}

/// Pushes the box `I₀` forward, keeping at each step the part of the image
/// inside the cell of the next symbol's partition that holds most of it
/// (lowest index among equal volumes).
pub fn propagate_rectangle(
    driving: &Driving,
    window: &SymbolWindow,
    i0: &Rect,
    max_steps: usize,
) -> Result<RectangleTrajectory, ErgodicError> {
    if window.k_future < max_steps {
        return Err(ErgodicError::WindowTooShort {
            needed: max_steps,
            available: window.k_future,
        });
    }
    let n = driving.dim();
    if i0.dim() != n || i0.volume() <= 0.0 {
        return Err(ErgodicError::SeedNotInCell);
    }
    let mut current = i0.clone();
    let mut cell = {
        let p = driving.native_map(window.at(0)).partition();
        let multi = p.locate(&current.midpoint())?;
        if !p.cell_rect(&multi).contains_rect(&current) {
            return Err(ErgodicError::SeedNotInCell);
        }
        p.linear_index(&multi)
    };
    let mut steps = Vec::with_capacity(max_steps);
    let mut first_crossing = None;
    for s in 0..max_steps {
        let a = window.at(s as i64);
        let f = driving.native_map(a);
        let image = f.image_of(cell, &current);
        let next_part = driving.native_map(window.at(s as i64 + 1)).partition();
        let crossing: usize = (0..n)
            .map(|i| interior_breakpoints_inside(next_part.breakpoints(i), image.lo[i], image.hi[i]))
            .product();
        if crossing > 0 && first_crossing.is_none() {
            first_crossing = Some(s + 1);
        }
        let mut multi = Vec::with_capacity(n);
        for i in 0..n {
            let bp = next_part.breakpoints(i);
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..bp.len() - 1 {
                let ov = image.hi[i].min(bp[j + 1]) - image.lo[i].max(bp[j]);
                if ov > best.1 * (1.0 + 1e-12) && ov > 0.0 {
                    best = (j, ov);
                }
            }
            multi.push(best.0);
        }
        let target = next_part.cell_rect(&multi);
        let next = image.intersect(&target).ok_or(ErgodicError::SeedNotInCell)?;
        let gamma = driving.expansion(a).product;
        let prev = current.volume();
        let floor = if crossing > 0 {
            prev * gamma / (2f64.powi(n as i32 - 1) * (crossing as f64 + 1.0))
        } else {
            prev * gamma / next_part.summary().max_hyperplane_cells as f64
        };
        steps.push(PropagationStep {
            symbol: a,
            image,
            crossing_points: crossing,
            cell: multi.clone(),
            volume: next.volume(),
            next: next.clone(),
            floor,
        });
        cell = next_part.linear_index(&multi);
        current = next;
    }
    Ok(RectangleTrajectory {
        initial_volume: i0.volume(),
        initial: i0.clone(),
        steps,
        first_crossing,
    })
}
