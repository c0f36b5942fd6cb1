mod common;

use jablab::driving::{
    build_driving, choose_block_n, expansion_integral, sample_window, DrivingSpec, LawSpec, SymbolSpec,
};
use jablab::geometry::JablonskiMap;
use proptest::prelude::*;

const SAMPLE: usize = 100_000;

fn pair(law: LawSpec) -> jablab::driving::Driving {
    build_driving(DrivingSpec {
        symbols: vec![
            SymbolSpec { name: "D".into(), map: JablonskiMap::multiply_mod(&[2, 2]).unwrap() },
            SymbolSpec { name: "T".into(), map: JablonskiMap::multiply_mod(&[3, 3]).unwrap() },
        ],
        law,
        common_partition: None,
    })
    .unwrap()
}

#[test]
fn iid_frequencies_within_three_standard_errors() {
    let p = 0.3;
    let d = pair(LawSpec::Iid(vec![p, 1.0 - p]));
    for seed in [1u64, 2, 3] {
        let w = sample_window(&d, seed, SAMPLE / 2, SAMPLE / 2 - 1);
        let freq = w.symbols.iter().filter(|&&a| a == 0).count() as f64 / w.len() as f64;
        let se = (p * (1.0 - p) / w.len() as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "seed {seed}: {freq}");
    }
}

#[test]
fn markov_frequencies_within_three_standard_errors() {
    let (a, b) = (0.8, 0.6);
    let d = pair(LawSpec::Markov(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]));
    let pi0 = b / (a + b);
    assert!((d.stationary()[0] - pi0).abs() < 1e-12);
    // asymptotic variance of the occupation frequency of a two-state chain
    let var = pi0 * (1.0 - pi0) * (2.0 - a - b) / (a + b);
    for seed in [4u64, 5, 6] {
        let w = sample_window(&d, seed, SAMPLE / 2, SAMPLE / 2 - 1);
        let freq = w.symbols.iter().filter(|&&s| s == 0).count() as f64 / w.len() as f64;
        let se = (var / w.len() as f64).sqrt();
        assert!((freq - pi0).abs() < 3.0 * se, "seed {seed}: {freq} vs {pi0}");
        // transitions out of 0 follow the kernel
        let from0: Vec<_> = w.symbols.windows(2).filter(|p| p[0] == 0).collect();
        let to1 = from0.iter().filter(|p| p[1] == 1).count() as f64 / from0.len() as f64;
        let se_t = (a * (1.0 - a) / from0.len() as f64).sqrt();
        assert!((to1 - a).abs() < 3.0 * se_t);
    }
}

#[test]
fn expansion_integral_is_exact_sum() {
    let d = pair(LawSpec::Markov(vec![vec![0.2, 0.8], vec![0.6, 0.4]]));
    let pi0 = 0.6 / 1.4;
    let expect = pi0 * 2f64.ln() + (1.0 - pi0) * 3f64.ln();
    assert!((expansion_integral(&d).gamma - expect).abs() < 1e-15);
}

proptest! {
    #[test]
    fn block_length_is_minimal(gamma in 1e-3f64..5.0) {
        let n = choose_block_n(gamma).unwrap();
        let log3 = 3f64.ln();
        prop_assert!(n as f64 * gamma > log3);
        prop_assert!((n - 1) as f64 * gamma <= log3);
    }

    #[test]
    fn windows_extend_consistently(seed in any::<u64>(), p in 0.05f64..0.95, kp in 0usize..30, kf in 0usize..30) {
        let d = pair(LawSpec::Iid(vec![p, 1.0 - p]));
        let short = sample_window(&d, seed, kp, kf);
        let long = sample_window(&d, seed, kp + 7, kf + 5);
        for t in -(kp as i64)..=kf as i64 {
            prop_assert_eq!(short.at(t), long.at(t));
        }
    }

    #[test]
    fn markov_windows_respect_support(seed in any::<u64>()) {
        // 0 → 1 always; 1 → 0 or 2; 2 → 0
        let d = build_driving(DrivingSpec {
            symbols: (0..3)
                .map(|i| SymbolSpec { name: format!("{i}"), map: JablonskiMap::multiply_mod(&[2 + i as u32]).unwrap() })
                .collect(),
            law: LawSpec::Markov(vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![1.0, 0.0, 0.0]]),
            common_partition: None,
        })
        .unwrap();
        let w = sample_window(&d, seed, 40, 40);
        let allowed = [[false, true, false], [true, false, true], [true, false, false]];
        for pair in w.symbols.windows(2) {
            prop_assert!(allowed[pair[0]][pair[1]]);
        }
    }
}
