//! Upper bounds on the number of mutually singular ergodic ACIPs.
//!
//! With `δ = ∫ log(γ/M) dP`, the crossing-point bound
//! `r ≤ c / (e^δ / 2^{n−1} − 1)` holds when `δ > (n−1) log 2`, and the
//! hyperplane bound `r ≤ c (log q − log M) / (ḡ − log M)` holds when
//! `ḡ = ∫ log γ dP > log M`.

use std::io::Write;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::driving::{expansion_integral, Driving};
use crate::variation::fmt_f64;

/// Slack allowed in `ḡ ≤ log q` for rounding in the logarithms.
pub const CONSISTENCY_TOL: f64 = 1e-12;

pub const EX53_N: usize = 2;
pub const EX53_M: f64 = 5.0;
pub const EX53_C: f64 = 16.0;
pub const EX53_Q: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("hyperplane complexity M = {m} is not below the cell count q = {q}")]
    MgeqQ { m: f64, q: f64 },
    #[error("invalid range: {0}")]
    RangeInvalid(String),
    #[error("∫ log γ dP = {gbar} exceeds log q = {log_q}")]
    ConsistencyViolation { gbar: f64, log_q: f64 },
}

const FLOOR_SNAP: f64 = 1e-9;

/// A bound on `r`, or the marker that its hypothesis fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Value(f64),
    Inapplicable,
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::Inapplicable => None,
        }
    }

    pub fn is_applicable(self) -> bool {
        matches!(self, Bound::Value(_))
    }

    /// `⌊bound⌋`, the operative bound on an integer count. Values within
    /// rounding of an integer snap to it.
    pub fn floor(self) -> Option<u64> {
        self.value().map(|v| {
            let r = v.round();
            if (v - r).abs() <= FLOOR_SNAP * r.max(1.0) {
                r as u64
            } else {
                v.floor() as u64
            }
        })
    }

    fn csv(self) -> String {
        self.value().map_or_else(|| "NA".to_string(), fmt_f64)
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

pub fn bound_buzzi(n: usize, c: f64, delta: f64) -> Bound {
    let threshold = (n as f64 - 1.0) * std::f64::consts::LN_2;
    if delta > threshold {
        Bound::Value(c / ((delta - threshold).exp() - 1.0))
    } else {
        Bound::Inapplicable
    }
}

pub fn bound_gbp(c: f64, q: f64, m: f64, gbar: f64) -> Result<Bound, BoundsError> {
    if m >= q {
        return Err(BoundsError::MgeqQ { m, q });
    }
    let log_m = m.ln();
    Ok(if gbar > log_m {
        Bound::Value(c * (q.ln() - log_m) / (gbar - log_m))
    } else {
        Bound::Inapplicable
    })
}

/// `δ = Σ_a P(a) log(γ(a)/M(a))`, each symbol with its own partition.
pub fn delta(driving: &Driving) -> f64 {
    driving.expect(|a| {
        let m = driving.partition_summary(a).max_hyperplane_cells as f64;
        (driving.expansion(a).product / m).ln()
    })
}

/// `ḡ = Σ_a P(a) log γ(a)`.
pub fn gbar(driving: &Driving) -> f64 {
    driving.expect(|a| driving.expansion(a).product.ln())
}

pub fn check_consistency(gbar: f64, q: f64) -> Result<(), BoundsError> {
    let log_q = q.ln();
    if gbar > log_q + CONSISTENCY_TOL {
        Err(BoundsError::ConsistencyViolation { gbar, log_q })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub delta: f64,
    pub gbar: f64,
    /// Largest crossing-point count, cell count and hyperplane complexity
    /// over the symbols in the support of the law.
    pub c: usize,
    pub q: usize,
    pub m: usize,
    pub bound_buzzi: Bound,
    pub bound_buzzi_floor: Option<u64>,
    pub bound_gbp: Bound,
    pub bound_gbp_floor: Option<u64>,
    pub buzzi_applicable: bool,
    pub gbp_applicable: bool,
    pub unique_by_buzzi: bool,
    pub unique_by_gbp: bool,
}

impl BoundsReport {
    pub fn applicable(&self) -> Vec<f64> {
        [self.bound_buzzi, self.bound_gbp].iter().filter_map(|b| b.value()).collect()
    }

    /// Smallest applicable bound.
    pub fn min_bound(&self) -> Option<f64> {
        self.applicable().into_iter().reduce(f64::min)
    }
}

pub fn bounds_report(driving: &Driving) -> Result<BoundsReport, BoundsError> {
    let support: Vec<usize> = (0..driving.alphabet_size())
        .filter(|&a| driving.stationary()[a] > 0.0)
        .collect();
    let max_of = |f: &dyn Fn(usize) -> usize| support.iter().map(|&a| f(a)).max().unwrap_or(0);
    let c = max_of(&|a| driving.partition_summary(a).crossing_points);
    let q = max_of(&|a| driving.partition_summary(a).q);
    let m = max_of(&|a| driving.partition_summary(a).max_hyperplane_cells);
    let n = driving.dim();
    let d = delta(driving);
    let g = gbar(driving);
    check_consistency(g, q as f64)?;
    let buzzi = bound_buzzi(n, c as f64, d);
    let gbp = match bound_gbp(c as f64, q as f64, m as f64, g) {
        Ok(b) => b,
        Err(BoundsError::MgeqQ { .. }) => Bound::Inapplicable,
        Err(e) => return Err(e),
    };
    let unique = |b: Bound| b.value().is_some_and(|v| v < 2.0);
    Ok(BoundsReport {
        n,
        delta: d,
        gbar: g,
        c,
        q,
        m,
        bound_buzzi: buzzi,
        bound_buzzi_floor: buzzi.floor(),
        bound_gbp: gbp,
        bound_gbp_floor: gbp.floor(),
        buzzi_applicable: buzzi.is_applicable(),
        gbp_applicable: gbp.is_applicable(),
        unique_by_buzzi: unique(buzzi),
        unique_by_gbp: unique(gbp),
    })
}

/// `∫ log(2^{n−1}(c/r̂ + 1)) dP ≥ δ` at an empirical count `r̂`.
#[derive(Debug, Clone, Serialize)]
pub struct MaryamCheck {
    pub r_hat: usize,
    pub lhs: f64,
    pub delta: f64,
    pub slack: f64,
    pub passed: bool,
}

pub fn maryam_check(driving: &Driving, r_hat: usize) -> MaryamCheck {
    let n = driving.dim() as f64;
    let lhs = driving.expect(|a| {
        let c = driving.partition_summary(a).crossing_points as f64;
        (n - 1.0) * std::f64::consts::LN_2 + (c / r_hat as f64 + 1.0).ln()
    });
    let d = delta(driving);
    MaryamCheck {
        r_hat,
        lhs,
        delta: d,
        slack: lhs - d,
        passed: lhs >= d,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub gamma_integral: f64,
    pub admissible: bool,
    pub gbar: f64,
    pub log_q: f64,
    pub bounds: BoundsReport,
    /// Some applicable bound is below 2.
    pub unique: bool,
    pub maryam: Option<MaryamCheck>,
}

pub fn consistency_report(driving: &Driving, r_hat: Option<usize>) -> Result<ConsistencyReport, BoundsError> {
    let bounds = bounds_report(driving)?;
    let ex = expansion_integral(driving);
    Ok(ConsistencyReport {
        gamma_integral: ex.gamma,
        admissible: ex.admissible,
        gbar: bounds.gbar,
        log_q: (bounds.q as f64).ln(),
        unique: bounds.unique_by_buzzi || bounds.unique_by_gbp,
        maryam: r_hat.filter(|&r| r > 0).map(|r| maryam_check(driving, r)),
        bounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub gamma_product: f64,
    pub bound_buzzi: Bound,
    pub bound_gbp: Bound,
}

/// Both bounds for the 5×5 example with `γ₁γ₂ = gamma_product`.
pub fn example53_row(gamma_product: f64) -> TableRow {
    let d = (gamma_product / EX53_M).ln();
    TableRow {
        gamma_product,
        bound_buzzi: bound_buzzi(EX53_N, EX53_C, d),
        bound_gbp: bound_gbp(EX53_C, EX53_Q, EX53_M, gamma_product.ln()).expect("M < q"),
    }
}

pub fn example53_table(gamma_min: f64, gamma_max: f64, step: f64) -> Result<Vec<TableRow>, BoundsError> {
    if !(gamma_min.is_finite() && gamma_max.is_finite() && step.is_finite()) {
        return Err(BoundsError::RangeInvalid("non-finite argument".into()));
    }
    if step <= 0.0 {
        return Err(BoundsError::RangeInvalid(format!("step {step} must be positive")));
    }
    if gamma_min <= 0.0 || gamma_min > gamma_max {
        return Err(BoundsError::RangeInvalid(format!("need 0 < {gamma_min} ≤ {gamma_max}")));
    }
    if gamma_max > EX53_Q {
        return Err(BoundsError::RangeInvalid(format!(
            "γ₁γ₂ = {gamma_max} exceeds q = {EX53_Q}"
        )));
    }
    let count = ((gamma_max - gamma_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| example53_row(gamma_min + i as f64 * step)).collect())
}

fn example53_gap(g: f64) -> f64 {
    let r = example53_row(g);
    r.bound_buzzi.value().expect("inside the buzzi range") - r.bound_gbp.value().expect("above M")
}

/// Root of `buzzi − gbp` in `[lo, hi] ⊂ (10, 25]` by bisection.
pub fn example53_crossover(lo: f64, hi: f64, tol: f64) -> Result<f64, BoundsError> {
    if !(lo > 2.0 * EX53_M && hi <= EX53_Q && lo < hi) {
        return Err(BoundsError::RangeInvalid(format!("bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let fa = example53_gap(a);
    if fa.signum() == example53_gap(b).signum() {
        return Err(BoundsError::RangeInvalid(format!("no sign change on [{lo}, {hi}]")));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if example53_gap(mid).signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Crossover bracketed by the first sign change between table rows.
pub fn table_crossover(rows: &[TableRow], tol: f64) -> Option<f64> {
    let gaps: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.gamma_product, r.bound_buzzi.value()? - r.bound_gbp.value()?)))
        .collect();
    gaps.windows(2)
        .find(|w| w[0].1.signum() != w[1].1.signum())
        .and_then(|w| example53_crossover(w[0].0, w[1].0, tol).ok())
}

pub fn write_bounds_csv<W: Write>(rows: &[TableRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "gamma_product,bound_buzzi,bound_gbp")?;
    for r in rows {
        writeln!(w, "{},{},{}", fmt_f64(r.gamma_product), r.bound_buzzi.csv(), r.bound_gbp.csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::{build_driving, DrivingSpec, LawSpec, SymbolSpec};
    use crate::geometry::JablonskiMap;

    fn mix(p: f64) -> Driving {
        build_driving(DrivingSpec {
            symbols: vec![
                SymbolSpec { name: "D".into(), map: JablonskiMap::multiply_mod(&[2, 2]).unwrap() },
                SymbolSpec { name: "T".into(), map: JablonskiMap::multiply_mod(&[3, 3]).unwrap() },
            ],
            law: LawSpec::Iid(vec![p, 1.0 - p]),
            common_partition: None,
        })
        .unwrap()
    }

    #[test]
    fn floor_snaps_rounding_noise() {
        assert_eq!(Bound::Value(8.0 - 1e-14).floor(), Some(8));
        assert_eq!(Bound::Value(7.9).floor(), Some(7));
        assert_eq!(Bound::Value(0.5).floor(), Some(0));
        assert_eq!(Bound::Inapplicable.floor(), None);
        // tripling²: c = 4, δ = log 3
        assert_eq!(bound_buzzi(2, 4.0, 3f64.ln()).floor(), Some(8));
    }

    #[test]
    fn deltas() {
        let l2 = 2f64.ln();
        let l3 = 3f64.ln();
        assert!((delta(&mix(0.0)) - l3).abs() < 1e-15);
        assert!((delta(&mix(1.0)) - l2).abs() < 1e-15);
        assert!((delta(&mix(0.5)) - (0.5 * l3 + 0.5 * l2)).abs() < 1e-15);
    }

    #[test]
    fn tripling_bounds() {
        let r = bounds_report(&mix(0.0)).unwrap();
        assert_eq!((r.c, r.q, r.m), (4, 9, 3));
        assert!((r.bound_buzzi.value().unwrap() - 8.0).abs() < 1e-12);
        assert!((r.bound_gbp.value().unwrap() - 4.0).abs() < 1e-12);
        let m = maryam_check(&mix(0.0), 1);
        assert!(m.passed && (m.lhs - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn boundaries() {
        assert_eq!(bound_buzzi(2, 4.0, 2f64.ln()), Bound::Inapplicable);
        assert_eq!(bound_gbp(4.0, 9.0, 3.0, 3f64.ln()).unwrap(), Bound::Inapplicable);
        assert!(matches!(bound_gbp(1.0, 3.0, 3.0, 2.0), Err(BoundsError::MgeqQ { .. })));
        assert!(matches!(
            check_consistency(10f64.ln(), 9.0),
            Err(BoundsError::ConsistencyViolation { .. })
        ));
        assert!(check_consistency(9f64.ln(), 9.0).is_ok());
        assert!(Bound::Value(1.5).value().is_some_and(|v| v < 2.0));
    }

    #[test]
    fn example_rows() {
        let r = example53_row(20.0);
        assert!((r.bound_buzzi.value().unwrap() - 16.0).abs() < 1e-12);
        assert!((r.bound_gbp.value().unwrap() - 16.0 * 5f64.ln() / 4f64.ln()).abs() < 1e-12);
        assert_eq!(example53_row(10.0).bound_buzzi, Bound::Inapplicable);
        assert!(matches!(example53_table(20.0, 26.0, 1.0), Err(BoundsError::RangeInvalid(_))));
        assert!(matches!(example53_table(12.0, 11.0, 1.0), Err(BoundsError::RangeInvalid(_))));
        assert_eq!(example53_table(10.5, 25.0, 0.5).unwrap().len(), 30);
    }
}
