mod common;

use std::f64::consts::PI;

use common::{catalog, random_trig_form};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use whslab::error::Error;
use whslab::forms::{inner_product, DiscreteForm, Grid};
use whslab::manifold::{find_critical_points, CriticalPoint, SampleManifold, ScalarField};
use whslab::morse::*;
use whslab::whs::*;

fn complex_for(h: &ScalarField) -> MorseComplex {
    let pts = find_critical_points(h, 64, 1e-10).unwrap();
    build_morse_complex(
        h,
        &pts,
        &OrientationChoice::standard(&pts),
        &FlowOptions::default(),
    )
    .unwrap()
}

fn circle_cos() -> ScalarField {
    ScalarField::from_catalog("cos-sum", &[], &SampleManifold::circle()).unwrap()
}

/// `cos 2x + 0.3 sin x + cos y`: a product with nonzero incidence numbers.
fn product_field() -> ScalarField {
    let t2 = SampleManifold::standard(2).unwrap();
    ScalarField::from_catalog(
        "trig",
        &[0.0, 1.0, 2.0, 0.0, 1.0, 0.3, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        &t2,
    )
    .unwrap()
}

#[test]
fn zero_cells_evaluate() {
    let h = circle_cos();
    let cx = complex_for(&h);
    let grid = Grid::uniform(h.manifold(), 64).unwrap();
    let f = |x: &[f64]| (2.0 * x[0]).sin() + 0.5;
    let omega = DiscreteForm::scalar(&grid, f);
    let min = cx.generators[0][0];
    let cell = build_unstable_cell(
        &h,
        &cx.points,
        min,
        &cx.orientation,
        &CellOptions::default(),
    )
    .unwrap();
    let v = integrate_over_unstable_cell(&grid, &omega, &cell).unwrap();
    assert!((v - f(&cx.points[min].coords)).abs() < 1e-12);
}

#[test]
fn circle_arc_length_carries_orientation() {
    let h = circle_cos();
    let cx = complex_for(&h);
    let grid = Grid::uniform(h.manifold(), 64).unwrap();
    let dtheta = DiscreteForm::from_data(&grid, 1, vec![1.0; 64]).unwrap();
    let max = cx.generators[1][0];
    for orient in [cx.orientation.clone(), cx.orientation.flipped(max)] {
        let cell =
            build_unstable_cell(&h, &cx.points, max, &orient, &CellOptions::default()).unwrap();
        let v = integrate_over_unstable_cell(&grid, &dtheta, &cell).unwrap();
        let expected = 2.0 * PI * orient.frame_sign(max);
        assert!((v - expected).abs() < 1e-8, "{v} vs {expected}");
    }
}

#[test]
fn torus_top_cell_has_full_volume() {
    let (_, h) = catalog().remove(2);
    let cx = complex_for(&h);
    let grid = Grid::uniform(h.manifold(), 32).unwrap();
    let max = cx.generators[2][0];
    let cell = build_unstable_cell(
        &h,
        &cx.points,
        max,
        &cx.orientation,
        &CellOptions::default(),
    )
    .unwrap();
    assert_eq!(cell.truncated, 0);
    let dvol = DiscreteForm::top(&grid, |_| 1.0);
    let v = integrate_over_unstable_cell(&grid, &dvol, &cell).unwrap();
    let expected = 4.0 * PI * PI * cx.orientation.frame_sign(max);
    assert!((v - expected).abs() < 1e-7, "{v}");
    assert!(matches!(
        integrate_over_unstable_cell(&grid, &DiscreteForm::scalar(&grid, |_| 1.0), &cell),
        Err(Error::DegreeMismatch { .. })
    ));
}

#[test]
fn short_flow_time_is_reported() {
    let h = circle_cos();
    let cx = complex_for(&h);
    let opts = CellOptions {
        t_cell: 2.0,
        ..CellOptions::default()
    };
    let r = build_unstable_cell(&h, &cx.points, cx.generators[1][0], &cx.orientation, &opts);
    assert!(matches!(r, Err(Error::CellNotConverged { .. })));
}

fn chain_map_worst(h: &ScalarField, grid_points: usize, forms: usize, seed: u64) -> f64 {
    let cx = complex_for(h);
    let grid = Grid::uniform(h.manifold(), grid_points).unwrap();
    let cells = build_cells(h, &cx.points, &cx.orientation, &CellOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for q in 1..=cx.dim() {
        for _ in 0..forms {
            let omega = random_trig_form(&grid, q - 1, 3, &mut rng);
            worst = worst.max(int_chain_map_check(&grid, &omega, &cx, &cells).unwrap());
        }
    }
    worst
}

#[test]
fn chain_map_on_catalog() {
    for (name, h) in catalog() {
        let worst = chain_map_worst(&h, 32, 5, 3);
        assert!(worst <= CHAIN_TOL, "{name}: {worst:e}");
    }
}

#[test]
fn chain_map_with_nonzero_incidence() {
    let h = product_field();
    let cx = complex_for(&h);
    assert!(cx.incidence[2].iter().flatten().any(|&v| v != 0));
    assert!(cx.incidence[1].iter().flatten().any(|&v| v != 0));
    let worst = chain_map_worst(&h, 32, 3, 9);
    assert!(worst <= CHAIN_TOL, "{worst:e}");
}

/// `⟨γ G, G⟩ / (‖γ G‖ ‖G‖)` for the full model Gaussian `G` on the grid.
fn model_overlap(grid: &Grid, p: &CriticalPoint, w: &DiscreteForm, t: f64) -> f64 {
    let m = grid.manifold();
    let g: Vec<f64> = (0..grid.len())
        .map(|flat| {
            let d = m.displacement(&p.coords, &grid.point(flat));
            let quad: f64 = p
                .hess_eigs
                .iter()
                .zip(&p.hess_vecs)
                .map(|(l, v)| l.abs() * v.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum();
            (-0.5 * t * quad).exp()
        })
        .collect();
    let vol = grid.cell_volume();
    let wn: f64 = (0..w.num_components())
        .map(|c| w.component(c).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>();
    let profile: Vec<f64> = (0..grid.len())
        .map(|k| {
            (0..w.num_components())
                .map(|c| w.component(c)[k].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let dot: f64 = profile.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * vol;
    dot / ((wn * vol).sqrt() * (g.iter().map(|v| v * v).sum::<f64>() * vol).sqrt())
}

#[test]
fn quasimodes_are_orthonormal_and_approach_the_model() {
    for (name, h) in catalog() {
        let cx = complex_for(&h);
        let n = h.manifold().dim();
        let grid = Grid::uniform(h.manifold(), if n == 1 { 255 } else { 95 }).unwrap();
        let eta = default_eta(&h, &cx.points);
        for q in 0..=n {
            let gens = &cx.generators[q];
            let forms: Vec<DiscreteForm> = gens
                .iter()
                .map(|&y| {
                    build_cutoff_quasimode(&grid, &h, &cx.points, y, &cx.orientation, 20.0, eta)
                        .unwrap()
                })
                .collect();
            for (a, wa) in forms.iter().enumerate() {
                for (b, wb) in forms.iter().enumerate() {
                    let ip = inner_product(&grid, wa, wb).unwrap();
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - expected).abs() < 1e-8, "{name} q={q}: {ip}");
                }
                let overlap = model_overlap(&grid, &cx.points[gens[a]], wa, 20.0);
                assert!(overlap >= 1.0 - 1e-6, "{name} q={q}: overlap {overlap}");
            }
        }
    }
}

#[test]
fn overlapping_supports_are_rejected() {
    let h = circle_cos();
    let cx = complex_for(&h);
    let grid = Grid::uniform(h.manifold(), 64).unwrap();
    let r = build_cutoff_quasimode(&grid, &h, &cx.points, 0, &cx.orientation, 5.0, 2.0);
    assert!(matches!(r, Err(Error::SupportOverlap { .. })));
}

fn setup_for(h: &ScalarField) -> WhsSetup {
    let n = h.manifold().dim();
    let grid = Grid::uniform(h.manifold(), if n == 1 { 255 } else { 95 }).unwrap();
    WhsSetup::new(grid, h.clone(), complex_for(h), &CellOptions::default()).unwrap()
}

#[test]
fn r_matches_kernel_witness_on_circle() {
    let h = circle_cos();
    let setup = setup_for(&h);
    let t = 10.0;
    let small = setup.small_subspace(0, t).unwrap();
    let cx = &setup.complex;
    let jr = build_j_r(
        &setup.grid,
        &h,
        &cx.points,
        &cx.generators[0],
        &cx.orientation,
        t,
        setup.eta,
        &small,
    )
    .unwrap();
    let mut witness = DiscreteForm::scalar(&setup.grid, |x| (-t * h.value(x)).exp());
    let norm = inner_product(&setup.grid, &witness, &witness)
        .unwrap()
        .sqrt();
    witness.scale(1.0 / norm);
    let overlap = inner_product(&setup.grid, &jr.r[0], &witness).unwrap();
    assert!(overlap >= 0.999, "{overlap}");
    let g = inner_product(&setup.grid, &jr.j[0], &jr.j[0]).unwrap();
    assert!((g - 1.0).abs() < 1e-8);
}

#[test]
fn projection_residual_decays_for_double_well() {
    let (_, h) = catalog().remove(1);
    let setup = setup_for(&h);
    let cx = &setup.complex;
    let residual = |t: f64| {
        let small = setup.small_subspace(0, t).unwrap();
        let jr = build_j_r(
            &setup.grid,
            &h,
            &cx.points,
            &cx.generators[0],
            &cx.orientation,
            t,
            setup.eta,
            &small,
        )
        .unwrap();
        for a in 0..jr.r.len() {
            for b in 0..jr.r.len() {
                let ip = inner_product(&setup.grid, &jr.r[a], &jr.r[b]).unwrap();
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        jr.residual
    };
    assert!(residual(12.0) < residual(6.0));
}

#[test]
fn scaling_examples() {
    let h = circle_cos();
    let cx = complex_for(&h);
    let gens: Vec<&CriticalPoint> = cx.points.iter().collect();
    let s = scaling_matrix(1, 0, PI, &gens, ScalingConvention::TOverPi).unwrap();
    for (v, p) in s.iter().zip(&gens) {
        assert!((v - (-PI * p.value).exp()).abs() < 1e-12 * v);
    }
    let s = scaling_matrix(2, 1, 3.0, &gens, ScalingConvention::PiOverT).unwrap();
    assert!((s[0] - (-3.0 * gens[0].value).exp()).abs() < 1e-12 * s[0]);
    // larger critical value, smaller entry
    let low = scaling_matrix(1, 0, 4.0, &gens[..1], ScalingConvention::PiOverT).unwrap()[0];
    let high = scaling_matrix(1, 0, 4.0, &gens[1..], ScalingConvention::PiOverT).unwrap()[0];
    assert!(gens[0].value < gens[1].value && low > high);
}

#[test]
fn circle_comparison_converges_like_one_over_t() {
    let setup = setup_for(&circle_cos());
    let b = whs_compare(&setup, None, &[5.0, 10.0, 20.0]).unwrap();
    assert!(b[0].deviation > b[1].deviation && b[1].deviation > b[2].deviation);
    let ratio = b[0].deviation / b[2].deviation;
    assert!((2.0..=8.0).contains(&ratio), "{ratio}");
    for d in b.iter().flat_map(|x| &x.degrees) {
        assert!(d.localized && d.determinant.abs() > 0.5);
    }
}

#[test]
fn torus_degree_one_is_near_identity() {
    let setup = setup_for(&catalog().remove(2).1);
    let b = whs_compare(&setup, Some(&[1]), &[12.0]).unwrap();
    let d = &b[0].degrees[0];
    assert_eq!(d.l_matrix.len(), 2);
    assert!(d.deviation <= 0.2, "{}", d.deviation);
    assert!(d.localized);
}

#[test]
fn double_well_tends_to_the_hessian_limit() {
    let (_, h) = catalog().remove(1);
    let setup = setup_for(&h);
    let b = whs_compare(&setup, None, &[6.0, 12.0]).unwrap();
    for q in 0..2 {
        let (a, c) = (&b[0].degrees[q], &b[1].degrees[q]);
        assert!(c.limit_deviation < a.limit_deviation, "q={q}");
        for (ma, mc) in a.exterior_mass.iter().zip(&c.exterior_mass) {
            assert!(mc < ma);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn circle_stokes_for_random_functions(c in proptest::collection::vec(-1.0f64..1.0, 6)) {
        let h = circle_cos();
        let cx = complex_for(&h);
        let grid = Grid::uniform(h.manifold(), 32).unwrap();
        let cells = build_cells(&h, &cx.points, &cx.orientation, &CellOptions::default()).unwrap();
        let f = DiscreteForm::scalar(&grid, |x| {
            (0..3).map(|k| c[2 * k] * ((k + 1) as f64 * x[0]).cos() + c[2 * k + 1] * ((k + 1) as f64 * x[0]).sin()).sum()
        });
        prop_assert!(int_chain_map_check(&grid, &f, &cx, &cells).unwrap() <= CHAIN_TOL);
    }
}
