//! Base dynamics: a stationary two-sided symbol process (i.i.d. or
//! irreducible Markov) that picks one Jabłoński map per time step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{ExpansionProfile, GeometryError, JablonskiMap, PartitionSummary, RectPartition};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrivingError {
    #[error("driving needs at least one symbol")]
    NoSymbols,
    #[error("invalid probabilities: {0}")]
    ProbabilitiesInvalid(String),
    #[error("transition matrix is reducible")]
    NotErgodic,
    #[error("map of symbol {symbol} does not fit the common partition")]
    PartitionMismatch { symbol: usize },
    #[error("expansion integral {gamma} is not positive")]
    NotAdmissible { gamma: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone)]
pub enum LawSpec {
    Iid(Vec<f64>),
    Markov(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct SymbolSpec {
    pub name: String,
    pub map: JablonskiMap,
}

#[derive(Debug, Clone)]
pub struct DrivingSpec {
    pub symbols: Vec<SymbolSpec>,
    pub law: LawSpec,
    /// When absent, the union of the symbols' breakpoints is used.
    pub common_partition: Option<RectPartition>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Iid(Vec<f64>),
    Markov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Symbol {
    name: String,
    native: JablonskiMap,
    common: JablonskiMap,
    summary: PartitionSummary,
    profile: ExpansionProfile,
}

/// A finite-alphabet random Jabłoński map.
///
/// Each symbol keeps the partition it was declared on (used for the partition
/// statistics `q`, `c_t`, `M`) and a copy re-expressed over the common
/// partition shared by all symbols.
#[derive(Debug, Clone)]
pub struct Driving {
    symbols: Vec<Symbol>,
    law: Law,
    stationary: Vec<f64>,
    // reversed kernel for the two-sided Markov extension
    reverse: Option<Vec<Vec<f64>>>,
    common: RectPartition,
}

pub fn build_driving(spec: DrivingSpec) -> Result<Driving, DrivingError> {
    if spec.symbols.is_empty() {
        return Err(DrivingError::NoSymbols);
    }
    let k = spec.symbols.len();
    let n = spec.symbols[0].map.dim();
    for (symbol, s) in spec.symbols.iter().enumerate() {
        if s.map.dim() != n {
            return Err(DrivingError::PartitionMismatch { symbol });
        }
    }
    let common = match spec.common_partition {
        Some(p) => p,
        None => RectPartition::common_refinement(spec.symbols.iter().map(|s| s.map.partition()))?,
    };
    let mut symbols = Vec::with_capacity(k);
    for (idx, s) in spec.symbols.into_iter().enumerate() {
        let refined = s
            .map
            .refine(&common)
            .map_err(|_| DrivingError::PartitionMismatch { symbol: idx })?;
        symbols.push(Symbol {
            summary: s.map.partition().summary(),
            profile: s.map.min_expansion(),
            name: s.name,
            native: s.map,
            common: refined,
        });
    }

    let (law, stationary, reverse) = match spec.law {
        LawSpec::Iid(p) => {
            check_probability_vector(&p, k, "probability vector")?;
            (Law::Iid(p.clone()), p, None)
        }
        LawSpec::Markov(t) => {
            if t.len() != k {
                return Err(DrivingError::ProbabilitiesInvalid(format!(
                    "transition matrix has {} rows for {} symbols",
                    t.len(),
                    k
                )));
            }
            for (a, row) in t.iter().enumerate() {
                check_probability_vector(row, k, &format!("transition row {a}"))?;
            }
            if !irreducible(&t) {
                return Err(DrivingError::NotErgodic);
            }
            let pi = stationary_vector(&t)?;
            let rev = (0..k)
                .map(|a| (0..k).map(|b| pi[b] * t[b][a] / pi[a]).collect())
                .collect();
            (
                Law::Markov {
                    transition: t,
                    stationary: pi.clone(),
                },
                pi,
                Some(rev),
            )
        }
    };

    Ok(Driving {
        symbols,
        law,
        stationary,
        reverse,
        common,
    })
}

fn check_probability_vector(p: &[f64], k: usize, what: &str) -> Result<(), DrivingError> {
    if p.len() != k {
        return Err(DrivingError::ProbabilitiesInvalid(format!(
            "{what} has {} entries for {k} symbols",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DrivingError::ProbabilitiesInvalid(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(DrivingError::ProbabilitiesInvalid(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn reachable_all(t: &[Vec<f64>], forward: bool) -> bool {
    let k = t.len();
    let mut seen = vec![false; k];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..k {
            let w = if forward { t[a][b] } else { t[b][a] };
            if w > 0.0 && !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn irreducible(t: &[Vec<f64>]) -> bool {
    reachable_all(t, true) && reachable_all(t, false)
}

/// Solves `π P = π`, `Σ π = 1`.
fn stationary_vector(t: &[Vec<f64>]) -> Result<Vec<f64>, DrivingError> {
    let k = t.len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = t[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(DrivingError::NotErgodic)?;
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    for j in 0..k {
        let r: f64 = (0..k).map(|i| pi[i] * t[i][j]).sum::<f64>() - pi[j];
        if r.abs() > PROB_TOL {
            return Err(DrivingError::ProbabilitiesInvalid(format!(
                "stationary equation residual {r:e}"
            )));
        }
    }
    Ok(pi)
}

impl Driving {
    pub fn alphabet_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn dim(&self) -> usize {
        self.common.dim()
    }

    pub fn name(&self, a: usize) -> &str {
        &self.symbols[a].name
    }

    /// Map of symbol `a` over its declared partition.
    pub fn native_map(&self, a: usize) -> &JablonskiMap {
        &self.symbols[a].native
    }

    /// Map of symbol `a` over the common partition.
    pub fn map(&self, a: usize) -> &JablonskiMap {
        &self.symbols[a].common
    }

    pub fn common_partition(&self) -> &RectPartition {
        &self.common
    }

    pub fn partition_summary(&self, a: usize) -> &PartitionSummary {
        &self.symbols[a].summary
    }

    pub fn expansion(&self, a: usize) -> &ExpansionProfile {
        &self.symbols[a].profile
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// One-time marginal of the process (`p` or `π`).
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Exact expectation of a per-symbol quantity under the stationary law.
    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.stationary
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| p * f(a))
            .sum()
    }

    /// Probability of observing `block` at consecutive times.
    pub fn block_probability(&self, block: &[usize]) -> f64 {
        let Some((&first, rest)) = block.split_first() else {
            return 1.0;
        };
        match &self.law {
            Law::Iid(p) => block.iter().map(|&a| p[a]).product(),
            Law::Markov {
                transition,
                stationary,
            } => {
                let mut prob = stationary[first];
                let mut prev = first;
                for &a in rest {
                    prob *= transition[prev][a];
                    prev = a;
                }
                prob
            }
        }
    }

    fn next_symbol(&self, prev: usize, u: f64) -> usize {
        match &self.law {
            Law::Iid(p) => categorical(p, u),
            Law::Markov { transition, .. } => categorical(&transition[prev], u),
        }
    }

    fn prev_symbol(&self, next: usize, u: f64) -> usize {
        match &self.reverse {
            None => categorical(&self.stationary, u),
            Some(rev) => categorical(&rev[next], u),
        }
    }
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = a;
            if u < acc {
                return a;
            }
        }
    }
    last_positive
}

/// Uniform variate for time index `t` of the stream keyed by `seed`.
///
/// Each index reads its own position of a ChaCha keystream, so the value does
/// not depend on which other indices were drawn or in which order.
pub fn stream_uniform(seed: u64, t: i64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(if t >= 0 { 0 } else { 1 });
    rng.set_word_pos(2 * u128::from(t.unsigned_abs()));
    rng.gen::<f64>()
}

/// Child seed number `index` of `seed`, for independent sub-experiments.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng.set_word_pos(2 * u128::from(index));
    rng.gen::<u64>()
}

/// Finite two-sided stretch of a sample path, centred at time 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolWindow {
    pub seed: u64,
    pub k_past: usize,
    pub k_future: usize,
    /// Symbols at times `-k_past ..= k_future`.
    pub symbols: Vec<usize>,
}

impl SymbolWindow {
    /// Window with prescribed symbols, `symbols[k_past]` sitting at time 0.
    pub fn from_symbols(symbols: Vec<usize>, k_past: usize) -> Self {
        assert!(k_past < symbols.len(), "time 0 must lie inside the window");
        let k_future = symbols.len() - 1 - k_past;
        SymbolWindow {
            seed: 0,
            k_past,
            k_future,
            symbols,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, t: i64) -> Option<usize> {
        let idx = t + self.k_past as i64;
        if idx < 0 {
            return None;
        }
        self.symbols.get(idx as usize).copied()
    }

    /// Symbol at time `t`; panics outside the window.
    pub fn at(&self, t: i64) -> usize {
        self.get(t)
            .unwrap_or_else(|| panic!("time {t} outside window [-{}, {}]", self.k_past, self.k_future))
    }

    /// Symbols at times `start, start + 1, …, start + len - 1`.
    pub fn block(&self, start: i64, len: usize) -> Option<Vec<usize>> {
        (0..len as i64).map(|j| self.get(start + j)).collect()
    }
}

/// Samples symbols at times `-k_past ..= k_future` of the stationary process.
/// Longer windows with the same seed extend shorter ones.
pub fn sample_window(driving: &Driving, seed: u64, k_past: usize, k_future: usize) -> SymbolWindow {
    let s0 = categorical(driving.stationary(), stream_uniform(seed, 0));
    let mut future = Vec::with_capacity(k_future);
    let mut prev = s0;
    for t in 1..=k_future as i64 {
        prev = driving.next_symbol(prev, stream_uniform(seed, t));
        future.push(prev);
    }
    let mut past = Vec::with_capacity(k_past);
    let mut next = s0;
    for t in 1..=k_past as i64 {
        next = driving.prev_symbol(next, stream_uniform(seed, -t));
        past.push(next);
    }
    past.reverse();
    let mut symbols = past;
    symbols.push(s0);
    symbols.extend(future);
    SymbolWindow {
        seed,
        k_past,
        k_future,
        symbols,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionIntegral {
    pub gamma: f64,
    pub admissible: bool,
}

/// `Γ = Σ_a law(a) · min_i log γ_i(a)`; admissible iff `Γ > 0`.
pub fn expansion_integral(driving: &Driving) -> ExpansionIntegral {
    let gamma = driving.expect(|a| {
        driving
            .expansion(a)
            .per_axis
            .iter()
            .map(|g| g.ln())
            .fold(f64::INFINITY, f64::min)
    });
    ExpansionIntegral {
        gamma,
        admissible: gamma > 0.0,
    }
}

/// Smallest `N ≥ 1` with `N · Γ > log 3`.
pub fn choose_block_n(gamma: f64) -> Result<usize, DrivingError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(DrivingError::NotAdmissible { gamma });
    }
    let log3 = 3f64.ln();
    let mut n = ((log3 / gamma).floor() as usize).max(1);
    while (n as f64) * gamma <= log3 {
        n += 1;
    }
    while n > 1 && ((n - 1) as f64) * gamma > log3 {
        n -= 1;
    }
    Ok(n)
}
