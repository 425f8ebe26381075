mod common;

use common::fd_oscillator_1d;
use proptest::prelude::*;
use whslab::oscillator::*;

/// Lowest `count` eigenvalues of the finite-difference model for `n ≤ 2`, given the
/// 1D spectrum `one`. The 2D stencil is a Kronecker sum, so its spectrum is the
/// pairwise sums of 1D ones.
fn fd_model(one: &[f64], n: usize, k: usize, q: usize, t: f64, count: usize) -> Vec<f64> {
    let sums: Vec<f64> = if n == 1 {
        one.to_vec()
    } else {
        one.iter()
            .flat_map(|a| one.iter().map(move |b| a + b))
            .collect()
    };
    let mut all: Vec<f64> = subsets(n, q)
        .iter()
        .flat_map(|s| {
            let eps = epsilon_shift(n, k, q, s).unwrap() as f64;
            sums.iter().map(move |v| v + t * eps)
        })
        .collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    all
}

#[test]
fn closed_form_matches_finite_differences() {
    let t = 3.0;
    let one = fd_oscillator_1d(t, 8.0, 800, 7);
    for n in 1..=2 {
        for k in 0..=n {
            for q in 0..=n {
                let exact =
                    oscillator_spectrum(&OscillatorModel::new(n, k, q, t).unwrap(), 5).expanded(5);
                let fd = fd_model(&one, n, k, q, t, 5);
                for (e, f) in exact.iter().zip(&fd) {
                    let scale = e.abs().max(2.0 * t);
                    assert!(
                        (e - f).abs() <= 1e-3 * scale,
                        "n={n} k={k} q={q}: {e} vs {f}"
                    );
                }
            }
        }
    }
}

#[test]
fn kernel_dimension_rule() {
    for n in 1..=4 {
        for k in 0..=n {
            for q in 0..=n {
                let s = oscillator_spectrum(&OscillatorModel::new(n, k, q, 2.0).unwrap(), 3);
                assert_eq!(s.kernel_dim(), u64::from(q == k), "n={n} k={k} q={q}");
            }
        }
    }
}

#[test]
fn invalid_models_are_rejected() {
    assert!(OscillatorModel::new(0, 0, 0, 1.0).is_err());
    assert!(OscillatorModel::new(2, 3, 0, 1.0).is_err());
    assert!(OscillatorModel::new(2, 0, 3, 1.0).is_err());
    assert!(OscillatorModel::new(1, 0, 0, 0.0).is_err());
    assert!(OscillatorModel::new(1, 0, 0, f64::NAN).is_err());
}

proptest! {
    #[test]
    fn eigenvalues_lie_on_the_2t_lattice(
        n in 1usize..=4,
        k in 0usize..=4,
        q in 0usize..=4,
        t in 0.1f64..50.0,
    ) {
        prop_assume!(k <= n && q <= n);
        let s = oscillator_spectrum(&OscillatorModel::new(n, k, q, t).unwrap(), 6);
        prop_assert_eq!(s.entries.len(), 6);
        let mut prev = -1.0;
        for &(e, m) in &s.entries {
            let level = e / (2.0 * t);
            prop_assert!(level >= 0.0);
            prop_assert!((level - level.round()).abs() < 1e-9);
            prop_assert!(m >= 1);
            prop_assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn epsilon_is_bounded_below_by_minus_n(n in 1usize..=5, k in 0usize..=5, q in 0usize..=5) {
        prop_assume!(k <= n && q <= n);
        for s in subsets(n, q) {
            let e = epsilon_shift(n, k, q, &s).unwrap();
            prop_assert!(e >= -(n as i64));
            prop_assert_eq!((e + n as i64) % 2, 0);
        }
    }
}
