mod common;

use common::{norm, random_trig_form, random_vector_field};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use whslab::forms::*;
use whslab::manifold::{ClosedOneForm, SampleManifold, ScalarField};

fn tilted_torus(points: usize) -> (Grid, ClosedOneForm) {
    let m = SampleManifold::torus(vec![6.0, 7.0]).unwrap();
    let g = Grid::uniform(&m, points).unwrap();
    let h = ScalarField::from_catalog("torus-tilted", &[0.4], &m).unwrap();
    (g, ClosedOneForm::new(Some(h), vec![0.2, -0.1]).unwrap())
}

#[test]
fn routes_agree_on_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (g, a) = tilted_torus(33);
    for q in 0..=2 {
        for t in [0.0, 1.0, 10.0] {
            let c = WittenOperator::assemble(&g, q, t, &a, Route::Composition).unwrap();
            let d = WittenOperator::assemble(&g, q, t, &a, Route::Direct).unwrap();
            for _ in 0..5 {
                let x = random_trig_form(&g, q, 6, &mut rng).into_data();
                let (yc, yd) = (c.apply(&x), d.apply(&x));
                let diff: Vec<f64> = yc.iter().zip(&yd).map(|(u, v)| u - v).collect();
                assert!(norm(&diff) <= 1e-8 * norm(&yc), "q={q} t={t}");
            }
        }
    }
}

#[test]
fn operator_is_symmetric_and_nonnegative() {
    let g = Grid::uniform(&SampleManifold::standard(2).unwrap(), 16).unwrap();
    let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
    let op =
        WittenOperator::assemble(&g, 1, 2.0, &ClosedOneForm::exact(h), Route::Composition).unwrap();
    let m = op.dense();
    let asym = (&m - m.transpose()).abs().max();
    assert!(asym <= 1e-12 * m.abs().max());
    let eig = nalgebra::SymmetricEigen::new(m);
    assert!(eig.eigenvalues.min() >= -1e-9 * op.norm_estimate());
}

#[test]
fn adjointness_of_deformed_differential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (g, a) = tilted_torus(25);
    let alpha = DiscreteForm::from_closed(&g, &a).unwrap();
    for q in 0..2 {
        for _ in 0..5 {
            let w = random_trig_form(&g, q, 4, &mut rng);
            let e = random_trig_form(&g, q + 1, 4, &mut rng);
            let lhs = inner_product(&g, &witten_d(&g, &w, 2.5, &alpha).unwrap(), &e).unwrap();
            let rhs = inner_product(&g, &w, &codifferential(&g, &e, 2.5, &alpha).unwrap()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "{lhs} {rhs}"
            );
        }
    }
}

#[test]
fn contraction_is_adjoint_to_wedge() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (g, _) = tilted_torus(16);
    let x = random_vector_field(&g, 2, &mut rng);
    let mut xflat = DiscreteForm::zeros(&g, 1).unwrap();
    for (i, c) in x.iter().enumerate() {
        xflat.component_mut(i).copy_from_slice(c);
    }
    for q in 1..=2 {
        let w = random_trig_form(&g, q, 2, &mut rng);
        let e = random_trig_form(&g, q - 1, 2, &mut rng);
        let lhs = inner_product(&g, &interior_product(&x, &w).unwrap(), &e).unwrap();
        let rhs = inner_product(&g, &w, &wedge(&xflat, &e).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

#[test]
fn leibniz_and_product_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = SampleManifold::standard(2).unwrap();
    // products of bandwidth-3 factors stay resolved on 33 points
    let g = Grid::uniform(&m, 33).unwrap();
    let x = random_vector_field(&g, 3, &mut rng);
    for q1 in 0..=2 {
        for q2 in 0..=(2 - q1) {
            let a = random_trig_form(&g, q1, 3, &mut rng);
            let b = random_trig_form(&g, q2, 3, &mut rng);
            let ab = wedge(&a, &b).unwrap();
            if q1 + q2 >= 1 {
                let lhs = interior_product(&x, &ab).unwrap();
                let mut rhs = DiscreteForm::zeros(&g, q1 + q2 - 1).unwrap();
                if q1 >= 1 {
                    rhs.axpy(1.0, &wedge(&interior_product(&x, &a).unwrap(), &b).unwrap())
                        .unwrap();
                }
                if q2 >= 1 {
                    let s = if q1 % 2 == 0 { 1.0 } else { -1.0 };
                    rhs.axpy(s, &wedge(&a, &interior_product(&x, &b).unwrap()).unwrap())
                        .unwrap();
                }
                let mut diff = lhs.clone();
                diff.axpy(-1.0, &rhs).unwrap();
                assert!(diff.max_abs() <= 1e-10 * (1.0 + lhs.max_abs()));
            }
            let lhs = lie_derivative(&g, &x, &ab).unwrap();
            let mut rhs = wedge(&lie_derivative(&g, &x, &a).unwrap(), &b).unwrap();
            rhs.axpy(
                1.0,
                &wedge(&a, &lie_derivative(&g, &x, &b).unwrap()).unwrap(),
            )
            .unwrap();
            let mut diff = lhs.clone();
            diff.axpy(-1.0, &rhs).unwrap();
            assert!(
                diff.max_abs() <= 1e-10 * (1.0 + lhs.max_abs()),
                "q1={q1} q2={q2} {}",
                diff.max_abs()
            );
        }
    }
}

#[test]
fn lie_derivative_of_closed_form_along_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Grid::uniform(&SampleManifold::standard(2).unwrap(), 32).unwrap();
    let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
    let grad = DiscreteForm::from_closed(&g, &ClosedOneForm::exact(h)).unwrap();
    let x = vec![grad.component(0).to_vec(), grad.component(1).to_vec()];
    let f = random_trig_form(&g, 0, 3, &mut rng);
    let w = exterior_d(&g, &f).unwrap();
    let lhs = lie_derivative(&g, &x, &w).unwrap();
    let rhs = exterior_d(&g, &interior_product(&x, &w).unwrap()).unwrap();
    let mut diff = lhs;
    diff.axpy(-1.0, &rhs).unwrap();
    assert!(diff.max_abs() < 1e-11);
}

#[test]
fn kernel_witnesses_on_torus() {
    let g = Grid::uniform(&SampleManifold::standard(2).unwrap(), 64).unwrap();
    let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
    let a = ClosedOneForm::exact(h.clone());
    let t = 5.0;
    let op0 = WittenOperator::assemble(&g, 0, t, &a, Route::Direct).unwrap();
    let f = g.sample(|x| (-t * h.value(x)).exp());
    assert!(norm(&op0.apply(&f)) <= 1e-8 * op0.norm_estimate() * norm(&f));
    let op2 = WittenOperator::assemble(&g, 2, t, &a, Route::Composition).unwrap();
    let v = g.sample(|x| (t * h.value(x)).exp());
    assert!(norm(&op2.apply(&v)) <= 1e-8 * op2.norm_estimate() * norm(&v));
}

#[test]
fn flat_kernel_is_constants() {
    let g = Grid::uniform(&SampleManifold::circle(), 31).unwrap();
    let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
    let op = WittenOperator::assemble(&g, 0, 0.0, &ClosedOneForm::exact(h), Route::Direct).unwrap();
    let eig = nalgebra::SymmetricEigen::new(op.dense());
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pairs[0].0.abs() < 1e-10);
    assert!(pairs[1].0 > 0.5);
    let v = eig.eigenvectors.column(pairs[0].1);
    assert!(v.iter().all(|c| (c - v[0]).abs() < 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deformed_d_squares_to_zero(seed in any::<u64>(), t in 0.0f64..10.0, q in 0usize..=1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = SampleManifold::torus(vec![6.0, 7.0, 5.0]).unwrap();
        let g = Grid::uniform(&m, 16).unwrap();
        let h = ScalarField::from_catalog("cos-sum", &[], &m).unwrap();
        let a = ClosedOneForm::new(Some(h), vec![0.2, -0.1, 0.3]).unwrap();
        let alpha = DiscreteForm::from_closed(&g, &a).unwrap();
        let w = random_trig_form(&g, q, 2, &mut rng);
        let dd = witten_d(&g, &witten_d(&g, &w, t, &alpha).unwrap(), t, &alpha).unwrap();
        let scale = 1.0 + t * t;
        prop_assert!(dd.max_abs() <= 1e-11 * scale * (1.0 + w.max_abs()));
    }

    #[test]
    fn star_star_is_graded_sign(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::uniform(&SampleManifold::standard(n).unwrap(), 16).unwrap();
        for q in 0..=n {
            let w = random_trig_form(&g, q, 1, &mut rng);
            let ss = hodge_star(&hodge_star(&w));
            let s = if q * (n - q) % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!(ss.data().iter().zip(w.data()).all(|(a, b)| *a == s * b));
        }
    }

    #[test]
    fn codifferential_is_adjoint(seed in any::<u64>(), t in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, a) = tilted_torus(20);
        let alpha = DiscreteForm::from_closed(&g, &a).unwrap();
        for q in 0..2 {
            let w = random_trig_form(&g, q, 3, &mut rng);
            let e = random_trig_form(&g, q + 1, 3, &mut rng);
            let lhs = inner_product(&g, &witten_d(&g, &w, t, &alpha).unwrap(), &e).unwrap();
            let rhs = inner_product(&g, &w, &codifferential(&g, &e, t, &alpha).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
