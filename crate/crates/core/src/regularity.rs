//! Lasota–Yorke constants of `N`-step compositions and their numerical check
//! on grid functions.
//!
//! For the `N`-fold composition along a symbol block, `ρ_i` is the largest
//! inverse-branch derivative `|Ψ'|` on axis `i`. With affine branches the
//! distortion term vanishes, so `K_i = ρ_i` and
//! `α₁ = α₂ = max_i 3 ρ_i`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::driving::{derive_seed, expansion_integral, sample_window, Driving, SymbolWindow};
use crate::geometry::{GeometryError, JablonskiMap, Rect};
use crate::transfer::{Cocycle, TransferError};
use crate::variation::{bv_norm, total_variation, Grid, GridFunction};

/// Arithmetic slack allowed when checking the inequality.
pub const SLACK_TOL: f64 = 1e-10;

/// Above this many length-`N` blocks the integral of `log α₁` is estimated by
/// sampling instead of enumeration.
pub const MAX_EXACT_BLOCKS: usize = 4096;

const SAMPLED_BLOCKS: usize = 4096;

/// Blocks whose composed partition could exceed this many cells get the
/// product bound `ρ ≤ ∏ₜ sup 1/|slope|` instead of an explicit composition.
pub const MAX_COMPOSED_CELLS: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum RegularityError {
    #[error("block length must be at least 1")]
    ZeroBlock,
    #[error("window provides {available} future symbols, {needed} needed")]
    WindowTooShort { needed: usize, available: usize },
    #[error("expansion integral {gamma} is not positive")]
    NotAdmissible { gamma: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyConstants {
    pub n_block: usize,
    pub symbols: Vec<usize>,
    pub rho: Vec<f64>,
    pub k: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Composition of the symbols' maps, first symbol applied first.
pub fn compose_block(driving: &Driving, block: &[usize]) -> Result<JablonskiMap, RegularityError> {
    let (&first, rest) = block.split_first().ok_or(RegularityError::ZeroBlock)?;
    let mut f = driving.map(first).clone();
    for &a in rest {
        f = f.then(driving.map(a))?;
    }
    Ok(f)
}

fn inverse_slope_sup(f: &JablonskiMap) -> Vec<f64> {
    let q = f.partition().cell_count();
    (0..f.dim())
        .map(|i| {
            (0..q)
                .map(|c| 1.0 / f.branch(c, i).slope.abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn ly_constants_for_block(driving: &Driving, block: &[usize]) -> Result<LyConstants, RegularityError> {
    if block.is_empty() {
        return Err(RegularityError::ZeroBlock);
    }
    let worst = block.iter().try_fold(1usize, |acc, &a| {
        acc.checked_mul(driving.map(a).partition().cell_count())
            .filter(|&v| v <= MAX_COMPOSED_CELLS)
    });
    let rho = if worst.is_some() {
        inverse_slope_sup(&compose_block(driving, block)?)
    } else {
        block.iter().fold(vec![1.0; driving.dim()], |acc, &a| {
            let r = inverse_slope_sup(driving.map(a));
            acc.iter().zip(&r).map(|(x, y)| x * y).collect()
        })
    };
    // sup δ' = 0 for affine branches
    let k = rho.clone();
    let alpha1 = rho.iter().map(|r| 3.0 * r).fold(0.0, f64::max);
    let alpha2 = k
        .iter()
        .zip(&rho)
        .map(|(k, r)| k + 2.0 * r)
        .fold(0.0, f64::max);
    Ok(LyConstants {
        n_block: block.len(),
        symbols: block.to_vec(),
        rho,
        k,
        alpha1,
        alpha2,
    })
}

/// Constants for the block of symbols at times `0 .. n` of the window.
pub fn ly_constants(driving: &Driving, window: &SymbolWindow, n: usize) -> Result<LyConstants, RegularityError> {
    if n == 0 {
        return Err(RegularityError::ZeroBlock);
    }
    if window.k_future < n {
        return Err(RegularityError::WindowTooShort {
            needed: n,
            available: window.k_future,
        });
    }
    let block = window.block(0, n).expect("checked window length");
    ly_constants_for_block(driving, &block)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogAlphaIntegral {
    pub value: f64,
    /// Standard error when the integral was sampled.
    pub stderr: Option<f64>,
    pub exact: bool,
    pub blocks: usize,
}

/// `∫ log α₁ dP` over length-`n` blocks weighted by the process law.
pub fn integral_log_alpha1(driving: &Driving, n: usize, seed: u64) -> Result<LogAlphaIntegral, RegularityError> {
    if n == 0 {
        return Err(RegularityError::ZeroBlock);
    }
    let k = driving.alphabet_size();
    let total = (k as f64).powi(n as i32);
    if total <= MAX_EXACT_BLOCKS as f64 {
        let blocks: Vec<Vec<usize>> = (0..k.pow(n as u32))
            .map(|mut code| {
                let mut b = vec![0; n];
                for slot in b.iter_mut().rev() {
                    *slot = code % k;
                    code /= k;
                }
                b
            })
            .filter(|b| driving.block_probability(b) > 0.0)
            .collect();
        let terms = blocks
            .par_iter()
            .map(|b| {
                let c = ly_constants_for_block(driving, b)?;
                Ok(driving.block_probability(b) * c.alpha1.ln())
            })
            .collect::<Result<Vec<f64>, RegularityError>>()?;
        Ok(LogAlphaIntegral {
            value: terms.iter().sum(),
            stderr: None,
            exact: true,
            blocks: blocks.len(),
        })
    } else {
        let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut samples = Vec::with_capacity(SAMPLED_BLOCKS);
        for s in 0..SAMPLED_BLOCKS {
            let w = sample_window(driving, derive_seed(seed, s as u64), 0, n);
            let b = w.block(0, n).expect("window long enough");
            let v = match cache.get(&b) {
                Some(v) => *v,
                None => {
                    let v = ly_constants_for_block(driving, &b)?.alpha1.ln();
                    cache.insert(b, v);
                    v
                }
            };
            samples.push(v);
        }
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        Ok(LogAlphaIntegral {
            value: mean,
            stderr: Some((var / m).sqrt()),
            exact: false,
            blocks: cache.len(),
        })
    }
}

/// Deterministic family of test functions on `grid`.
///
/// The first two entries are the constant density and a signed ±1
/// checkerboard; the rest cycle through random nonnegative cell values, box
/// indicators, cosine modulations and ramps, each normalised to unit mass.
pub fn test_densities(grid: &Arc<Grid>, count: usize, seed: u64) -> Vec<GridFunction> {
    let n = grid.dim();
    let p = grid.partition();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let h = match idx {
            0 => GridFunction::constant(grid.clone(), 1.0),
            1 => {
                let vals = (0..grid.len())
                    .map(|c| {
                        if p.multi_index(c).iter().sum::<usize>() % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect();
                GridFunction::new(grid.clone(), vals).expect("grid length")
            }
            _ => match idx % 4 {
                0 => {
                    let vals = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
                    GridFunction::new(grid.clone(), vals).expect("grid length").normalized()
                }
                1 => {
                    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
                        .map(|_| {
                            let a: f64 = rng.gen_range(0.0..0.8);
                            let w: f64 = rng.gen_range(0.05..(1.0 - a));
                            (a, a + w)
                        })
                        .unzip();
                    GridFunction::indicator(grid.clone(), &Rect::new(lo, hi)).normalized()
                }
                2 => {
                    let amp: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.9)).collect();
                    let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(1..6) as f64).collect();
                    GridFunction::from_fn(grid.clone(), |x| {
                        (0..n)
                            .map(|i| 1.0 + amp[i] * (std::f64::consts::TAU * freq[i] * x[i]).cos())
                            .product()
                    })
                    .normalized()
                }
                _ => {
                    let slope: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.9..3.0)).collect();
                    GridFunction::from_fn(grid.clone(), |x| {
                        (0..n).map(|i| 1.0 + slope[i] * x[i]).product()
                    })
                    .normalized()
                }
            },
        };
        out.push(h);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowCheck {
    pub window_seed: u64,
    pub symbols: Vec<usize>,
    pub alpha1: f64,
    pub alpha2: f64,
    /// `α₁ V(h) + α₂ ‖h‖₁ − V(L^{(N)} h)` minimised over test densities.
    pub min_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyReport {
    pub n_block: usize,
    pub gamma: f64,
    pub integral_log_alpha1: LogAlphaIntegral,
    pub integral_negative: bool,
    pub checks: usize,
    pub failures: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    /// Largest `α₂(ω)` over the sampled windows.
    pub max_alpha2: f64,
    pub windows: Vec<WindowCheck>,
    pub all_passed: bool,
}

pub fn verify_ly(
    driving: &Driving,
    n: usize,
    grid: Arc<Grid>,
    n_densities: usize,
    n_windows: usize,
    seed: u64,
) -> Result<LyReport, RegularityError> {
    let cocycle = Cocycle::new(driving, grid)?;
    verify_ly_with(driving, &cocycle, n, n_densities, n_windows, seed)
}

/// Same as [`verify_ly`] with prebuilt operators.
pub fn verify_ly_with(
    driving: &Driving,
    cocycle: &Cocycle,
    n: usize,
    n_densities: usize,
    n_windows: usize,
    seed: u64,
) -> Result<LyReport, RegularityError> {
    let gamma = expansion_integral(driving).gamma;
    if gamma <= 0.0 {
        return Err(RegularityError::NotAdmissible { gamma });
    }
    if n == 0 {
        return Err(RegularityError::ZeroBlock);
    }
    let densities = test_densities(cocycle.grid(), n_densities, derive_seed(seed, u64::MAX));
    let pre: Vec<(f64, f64)> = densities
        .iter()
        .map(|h| {
            let b = bv_norm(h);
            (b.variation, b.l1)
        })
        .collect();

    let per_window = (0..n_windows)
        .into_par_iter()
        .map(|w| {
            let wseed = derive_seed(seed, w as u64);
            let window = sample_window(driving, wseed, 0, n);
            let c = ly_constants(driving, &window, n)?;
            let block = window.block(0, n).expect("window long enough");
            let slacks: Vec<f64> = densities
                .iter()
                .zip(&pre)
                .map(|(h, &(v, l1))| {
                    let out = cocycle.apply_symbols(&block, h);
                    c.alpha1 * v + c.alpha2 * l1 - total_variation(&out)
                })
                .collect();
            Ok((wseed, c, slacks))
        })
        .collect::<Result<Vec<_>, RegularityError>>()?;

    let integral = integral_log_alpha1(driving, n, seed)?;
    let mut windows = Vec::with_capacity(per_window.len());
    let mut all_slacks = Vec::new();
    for (wseed, c, slacks) in per_window {
        let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        windows.push(WindowCheck {
            window_seed: wseed,
            symbols: c.symbols.clone(),
            alpha1: c.alpha1,
            alpha2: c.alpha2,
            min_slack,
            passed: min_slack >= -SLACK_TOL,
        });
        all_slacks.extend(slacks);
    }
    let failures = all_slacks.iter().filter(|&&s| s < -SLACK_TOL).count();
    let checks = all_slacks.len();
    Ok(LyReport {
        n_block: n,
        gamma,
        integral_negative: integral.value < 0.0,
        integral_log_alpha1: integral,
        checks,
        failures,
        min_slack: all_slacks.iter().copied().fold(f64::INFINITY, f64::min),
        mean_slack: if checks > 0 {
            all_slacks.iter().sum::<f64>() / checks as f64
        } else {
            0.0
        },
        max_alpha2: windows.iter().map(|w| w.alpha2).fold(0.0, f64::max),
        all_passed: failures == 0,
        windows,
    })
}
