mod common;

use std::f64::consts::PI;

use common::{catalog, exact};
use whslab::forms::{Grid, Route, WittenOperator};
use whslab::manifold::{count_by_index, find_critical_points, SampleManifold, ScalarField};
use whslab::morse::*;
use whslab::spectra::eigensolve;

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

#[test]
fn torus_flow_reaches_minimum() {
    let h =
        ScalarField::from_catalog("cos-sum", &[], &SampleManifold::standard(2).unwrap()).unwrap();
    let pts = find_critical_points(&h, 32, 1e-10).unwrap();
    let tr = shoot(
        &h,
        &pts,
        &[0.1, PI],
        Direction::Forward,
        Capture::SinksOnly,
        &FlowOptions::default(),
    )
    .unwrap();
    let end = &tr.path.last().unwrap().1;
    assert!((end[0] - PI).abs() < 1e-3 && (end[1] - PI).abs() < 1e-3);
    assert_eq!(pts[tr.limit.point].index, 0);
}

#[test]
fn circle_orbits_cancel() {
    let (_, h) = catalog().remove(0);
    let pts = find_critical_points(&h, 32, 1e-10).unwrap();
    let o = OrientationChoice::standard(&pts);
    let orbits = connecting_orbits(&h, &pts, 1, 0, &o, &FlowOptions::default()).unwrap();
    assert_eq!(orbits.len(), 2);
    assert_eq!(orbits[0].sign + orbits[1].sign, 0);
    assert_ne!(orbits[0].shift, orbits[1].shift);
}

#[test]
fn catalog_complexes_and_betti_numbers() {
    let expected = [vec![1, 1], vec![1, 1], vec![1, 2, 1]];
    for ((name, h), betti) in catalog().into_iter().zip(expected) {
        let c = complex_for(&h);
        assert_eq!(c.boundary_squared_defect(), 0);
        assert_eq!(cohomology(&c), betti, "{name}");
        let m = c.counts();
        assert!(check_morse_inequalities(&m, &betti).unwrap().all_hold());
    }
}

#[test]
fn expected_incidence_patterns() {
    let cats = catalog();
    let c = complex_for(&cats[0].1);
    assert_eq!(c.incidence[1], vec![vec![0]]);
    let c = complex_for(&cats[2].1);
    assert!(c.incidence.iter().flatten().flatten().all(|&v| v == 0));
    assert_eq!(
        c.orbits
            .iter()
            .filter(|o| c.points[o.upper].index == 2)
            .count(),
        4
    );
    let c = complex_for(&cats[1].1);
    assert_eq!(integer_rank(&c.incidence[1]), 1);
    assert!(c.incidence[1].iter().flatten().all(|v| v.abs() == 1));
}

#[test]
fn tilted_torus_complex() {
    let h = ScalarField::from_catalog(
        "torus-tilted",
        &[0.3],
        &SampleManifold::standard(2).unwrap(),
    )
    .unwrap();
    let c = complex_for(&h);
    assert_eq!(c.boundary_squared_defect(), 0);
    assert_eq!(cohomology(&c), vec![1, 2, 1]);
}

#[test]
fn flipping_one_orientation_negates_its_row_and_column() {
    let (_, h) = catalog().remove(2);
    let pts = find_critical_points(&h, 64, 1e-10).unwrap();
    let opts = FlowOptions::default();
    let base = OrientationChoice::standard(&pts);
    let c0 = build_morse_complex(&h, &pts, &base, &opts).unwrap();
    let saddle = c0.generators[1][0];
    let c1 = build_morse_complex(&h, &pts, &base.flipped(saddle), &opts).unwrap();
    // compare raw orbit signs since all incidence numbers vanish here
    assert_eq!(c0.orbits.len(), c1.orbits.len());
    for a in &c0.orbits {
        let b = c1
            .orbits
            .iter()
            .find(|b| (b.upper, b.lower, &b.shift) == (a.upper, a.lower, &a.shift))
            .unwrap();
        let touches = a.upper == saddle || a.lower == saddle;
        assert_eq!(a.sign, if touches { -b.sign } else { b.sign });
    }
    assert_eq!(cohomology(&c0), cohomology(&c1));

    let (_, dw) = catalog().remove(1);
    let pts = find_critical_points(&dw, 64, 1e-10).unwrap();
    let base = OrientationChoice::standard(&pts);
    let c0 = build_morse_complex(&dw, &pts, &base, &opts).unwrap();
    let top = c0.generators[1][1];
    let c1 = build_morse_complex(&dw, &pts, &base.flipped(top), &opts).unwrap();
    for (r, row) in c0.incidence[1].iter().enumerate() {
        let s = if c0.generators[1][r] == top { -1 } else { 1 };
        assert_eq!(
            row.iter().map(|v| s * v).collect::<Vec<_>>(),
            c1.incidence[1][r]
        );
    }
}

#[test]
fn orbit_count_parity_is_resolution_independent() {
    let h = ScalarField::from_catalog(
        "torus-tilted",
        &[0.3],
        &SampleManifold::standard(2).unwrap(),
    )
    .unwrap();
    let pts = find_critical_points(&h, 64, 1e-10).unwrap();
    let o = OrientationChoice::standard(&pts);
    let count = |m: usize| {
        let opts = FlowOptions {
            scan_directions: m,
            ..Default::default()
        };
        orbits_from(&h, &pts, pts.len() - 1, &o, &opts)
            .unwrap()
            .len()
    };
    assert_eq!(count(64) % 2, count(256) % 2);
}

#[test]
fn betti_numbers_match_flat_harmonic_forms() {
    for (name, h) in catalog() {
        let c = complex_for(&h);
        let betti = cohomology(&c);
        let n = h.manifold().dim();
        let grid = Grid::uniform(h.manifold(), if n == 1 { 255 } else { 31 }).unwrap();
        for q in 0..=n {
            let op = WittenOperator::assemble(&grid, q, 0.0, &exact(&h), Route::Direct).unwrap();
            let spec = eigensolve(&op, betti[q] + 2).unwrap();
            let kernel = spec.eigenvalues.iter().filter(|&&v| v < 1e-8).count();
            assert_eq!(kernel, betti[q], "{name} q={q}");
        }
        assert_eq!(count_by_index(&c.points, n), c.counts());
    }
}
