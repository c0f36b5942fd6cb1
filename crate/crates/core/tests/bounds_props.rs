use jablab::bounds::{
    bound_buzzi, bound_gbp, example53_crossover, example53_row, example53_table, table_crossover, Bound,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn buzzi_monotone(n in 1usize..4, c in 1.0f64..50.0, d1 in 0.0f64..4.0, d2 in 0.0f64..4.0, dc in 0.1f64..10.0) {
        let t = (n as f64 - 1.0) * std::f64::consts::LN_2;
        let (lo, hi) = (t + d1.min(d2) + 1e-3, t + d1.max(d2) + 2e-3);
        let a = bound_buzzi(n, c, lo).value().unwrap();
        let b = bound_buzzi(n, c, hi).value().unwrap();
        prop_assert!(b < a);
        prop_assert!(bound_buzzi(n, c + dc, lo).value().unwrap() > a);
        prop_assert_eq!(bound_buzzi(n, c, t), Bound::Inapplicable);
    }

    #[test]
    fn gbp_monotone_with_endpoint(m in 1u32..20, extra in 1u32..30, c in 1.0f64..50.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (m, q) = (m as f64, (m + extra) as f64);
        let span = q.ln() - m.ln();
        let g1 = m.ln() + span * (0.01 + 0.99 * u.min(v));
        let g2 = m.ln() + span * (0.01 + 0.99 * u.max(v));
        prop_assume!(g2 > g1);
        let a = bound_gbp(c, q, m, g1).unwrap().value().unwrap();
        let b = bound_gbp(c, q, m, g2).unwrap().value().unwrap();
        prop_assert!(b < a);
        let at_q = bound_gbp(c, q, m, q.ln()).unwrap().value().unwrap();
        prop_assert!((at_q - c).abs() <= 1e-12 * c);
    }
}

#[test]
fn single_crossover_stable_across_steps() {
    // sign changes of the gap on a fine lattice of (10, 25]
    let gaps: Vec<f64> = (1..=15000)
        .map(|i| {
            let r = example53_row(10.0 + i as f64 * 1e-3);
            r.bound_buzzi.value().unwrap() - r.bound_gbp.value().unwrap()
        })
        .collect();
    let changes = gaps.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    assert_eq!(changes, 1);
    let reference = example53_crossover(10.5, 25.0, 1e-12).unwrap();
    for step in [0.5, 0.25, 0.1, 0.05] {
        let rows = example53_table(10.5, 25.0, step).unwrap();
        let x = table_crossover(&rows, 1e-12).unwrap();
        assert!((x - reference).abs() < 1e-9, "step {step}: {x} vs {reference}");
    }
    // both closed forms agree at the root
    let lhs = 160.0 / (reference - 10.0);
    let rhs = 16.0 * 5f64.ln() / (reference / 5.0).ln();
    assert!((lhs - rhs).abs() < 1e-8);
}
