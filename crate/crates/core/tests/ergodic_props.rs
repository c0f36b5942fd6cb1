mod common;

use jablab::bounds::{bounds_report, delta, maryam_check};
use jablab::driving::sample_window;
use jablab::ergodic::{
    count_acips, equivariance_residual, equivariant_density, propagate_rectangle, CountParams,
};
use jablab::geometry::Rect;
use proptest::prelude::*;
use rand::Rng;

use common::{cocycle_for, rng, spec};

fn assert_probability(h: &jablab::variation::GridFunction) {
    assert!(h.values().iter().all(|&v| v >= 0.0));
    assert!((h.integral() - 1.0).abs() < 1e-9, "mass {}", h.integral());
}

#[test]
fn deterministic_limits_are_fixed_points() {
    for name in ["tripling2", "two_halves", "four_block"] {
        let d = spec(name).driving;
        let co = cocycle_for(&d, 32);
        let w = sample_window(&d, 0, 64, 1);
        let fam = equivariant_density(&d, &co, &w, 64, 1e-12).unwrap();
        let h = fam.at(0).unwrap();
        assert_probability(h);
        let lh = co.operator(0).apply(h);
        assert!(lh.l1_distance(h) < 1e-12, "{name}");
    }
}

#[test]
fn skewed_residual_obeys_cesaro_identity() {
    // ‖L_ω H^s_ω − H^s_{σω}‖₁ = ‖h^{s+1}_{σω} − h^1_{σω}‖₁ / s ≤ 2/s
    let d = spec("skewed_tripling").driving;
    let co = cocycle_for(&d, 64);
    for seed in 1..=12u64 {
        let w = sample_window(&d, seed, 4096, 1);
        let fam = equivariant_density(&d, &co, &w, 4096, 1e-6).unwrap();
        assert!(fam.converged);
        for h in fam.densities.values() {
            assert_probability(h);
        }
        let r = equivariance_residual(&co, &w, &fam).unwrap();
        assert!(r <= 2.0 / fam.s_used as f64 + 1e-12, "seed {seed}: {r} at s = {}", fam.s_used);
    }
    for seed in [3u64, 11] {
        let w = sample_window(&d, seed, 8192, 1);
        let fam = equivariant_density(&d, &co, &w, 8192, 1e-8).unwrap();
        let r = equivariance_residual(&co, &w, &fam).unwrap();
        assert!(r < 1e-3, "seed {seed}: {r}");
    }
}

#[test]
fn perturbed_family_is_detected() {
    let d = spec("doubling_tripling").driving;
    let co = cocycle_for(&d, 64);
    let w = sample_window(&d, 9, 256, 1);
    let mut fam = equivariant_density(&d, &co, &w, 256, 1e-6).unwrap();
    // move mass 0.05 from one box to another: L¹ size 0.1
    let grid = co.grid().clone();
    let mut m = fam.at(1).unwrap().masses();
    let cells = grid.len();
    for c in 0..cells / 8 {
        m[c] += 0.05 / (cells / 8) as f64;
        m[cells - 1 - c] -= 0.05 / (cells / 8) as f64;
    }
    fam.densities.insert(1, jablab::variation::GridFunction::from_masses(grid, &m));
    assert!(equivariance_residual(&co, &w, &fam).unwrap() > 0.05);
}

#[test]
fn counts_respect_bounds_and_exponents() {
    for name in [
        "tripling2",
        "doubling_tripling",
        "markov_swap",
        "two_halves",
        "four_block",
        "skewed_tripling",
        "example53",
    ] {
        let d = spec(name).driving;
        let co = cocycle_for(&d, 32);
        let c = count_acips(&d, &co, CountParams { k_settle: 120, ..Default::default() }, 5).unwrap();
        for h in &c.representatives {
            assert_probability(h);
        }
        assert_eq!(c.discrepancy, c.r_hat > c.d1_hat, "{name}");
        assert!(c.r_hat <= c.d1_hat, "{name}: r̂ {} d̂₁ {}", c.r_hat, c.d1_hat);
        let b = bounds_report(&d).unwrap();
        for bound in b.applicable() {
            assert!(c.r_hat as f64 <= bound, "{name}: {} > {bound}", c.r_hat);
        }
        assert!(maryam_check(&d, c.r_hat).passed, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boxes_grow_until_a_crossing(seed in any::<u64>(), which in 0usize..3) {
        let name = ["tripling2", "doubling_tripling", "example53"][which];
        let d = spec(name).driving;
        prop_assert!(delta(&d) > 0.0);
        let mut g = rng(seed);
        let w = sample_window(&d, seed, 0, 12);
        let p = d.native_map(w.at(0)).partition();
        let x: Vec<f64> = (0..2).map(|_| g.gen::<f64>()).collect();
        let cell = p.cell_rect(&p.locate(&x).unwrap());
        let side: f64 = g.gen_range(0.002..0.05);
        let lo: Vec<f64> = (0..2).map(|i| cell.lo[i] + g.gen::<f64>() * (cell.side(i) * (1.0 - side))).collect();
        let hi: Vec<f64> = (0..2).map(|i| lo[i] + side * cell.side(i)).collect();
        let tr = propagate_rectangle(&d, &w, &Rect::new(lo, hi), 12).unwrap();
        let vols = tr.volumes();
        let until = tr.first_crossing.unwrap_or(tr.steps.len());
        for s in 0..until - 1 {
            prop_assert!(vols[s + 1] > vols[s], "step {}: {} → {}", s + 1, vols[s], vols[s + 1]);
        }
        for st in &tr.steps {
            prop_assert!(st.volume >= st.floor * (1.0 - 1e-12), "{} < floor {}", st.volume, st.floor);
            prop_assert!(st.volume > 0.0);
        }
    }
}

#[test]
fn small_box_in_tripling_hits_within_four_steps() {
    let d = spec("tripling2").driving;
    let w = sample_window(&d, 0, 0, 6);
    let lo = vec![0.4, 0.05];
    let hi = vec![0.4 + 1.0 / 27.0, 0.05 + 1.0 / 27.0];
    let tr = propagate_rectangle(&d, &w, &Rect::new(lo, hi), 6).unwrap();
    assert!(tr.first_crossing.is_some_and(|s| s <= 4), "{:?}", tr.first_crossing);
}
