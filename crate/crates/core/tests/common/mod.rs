#![allow(dead_code)]

use rand::Rng;
use whslab::forms::{DiscreteForm, Grid, Layout};
use whslab::manifold::{find_critical_points, ClosedOneForm, SampleManifold, ScalarField};

/// Random real trigonometric polynomial with wavenumbers up to `kmax` per axis.
pub fn random_trig_fn(
    n: usize,
    periods: &[f64],
    kmax: i32,
    rng: &mut impl Rng,
) -> impl Fn(&[f64]) -> f64 {
    let mut terms = Vec::new();
    let mut k = vec![-kmax; n];
    loop {
        terms.push((
            k.clone(),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ));
        let mut a = 0;
        loop {
            if a == n {
                break;
            }
            k[a] += 1;
            if k[a] <= kmax {
                break;
            }
            k[a] = -kmax;
            a += 1;
        }
        if a == n {
            break;
        }
    }
    let w: Vec<f64> = periods.iter().map(|l| std::f64::consts::TAU / l).collect();
    move |x: &[f64]| {
        terms
            .iter()
            .map(|(k, c, ph)| {
                let arg: f64 = k
                    .iter()
                    .zip(&w)
                    .zip(x)
                    .map(|((&ki, wi), xi)| ki as f64 * wi * xi)
                    .sum();
                c * (arg + ph).cos()
            })
            .sum()
    }
}

pub fn random_trig_form(grid: &Grid, q: usize, kmax: i32, rng: &mut impl Rng) -> DiscreteForm {
    let n = grid.dim();
    let periods = grid.manifold().periods().to_vec();
    let comps = Layout::new(n, q).len();
    let data = (0..comps)
        .flat_map(|_| grid.sample(random_trig_fn(n, &periods, kmax, rng)))
        .collect();
    DiscreteForm::from_data(grid, q, data).unwrap()
}

pub fn random_vector_field(grid: &Grid, kmax: i32, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let periods = grid.manifold().periods().to_vec();
    (0..grid.dim())
        .map(|_| grid.sample(random_trig_fn(grid.dim(), &periods, kmax, rng)))
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The three catalog configurations: circle cos, circle double well, torus cos-sum.
pub fn catalog() -> Vec<(&'static str, ScalarField)> {
    let s1 = SampleManifold::circle();
    let t2 = SampleManifold::standard(2).unwrap();
    vec![
        (
            "circle-cos",
            ScalarField::from_catalog("cos-sum", &[], &s1).unwrap(),
        ),
        (
            "circle-double-well",
            ScalarField::from_catalog("circle-double-well", &[0.3], &s1).unwrap(),
        ),
        (
            "torus-cos-sum",
            ScalarField::from_catalog("cos-sum", &[], &t2).unwrap(),
        ),
    ]
}

pub fn exact(h: &ScalarField) -> ClosedOneForm {
    ClosedOneForm::exact(h.clone())
}

/// `2 ∫|h'|` from the higher minimum to the nearest maximum, by midpoint quadrature.
pub fn barrier_oracle(h: &ScalarField) -> f64 {
    let pts = find_critical_points(h, 64, 1e-10).unwrap();
    let higher_min = pts
        .iter()
        .filter(|p| p.index == 0)
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .unwrap();
    let x0 = higher_min.coords[0];
    let maxima: Vec<f64> = pts
        .iter()
        .filter(|p| p.index == 1)
        .map(|p| p.coords[0])
        .collect();
    let mut best = f64::INFINITY;
    for &m in &maxima {
        let d = h.manifold().displacement(&[x0], &[m])[0];
        let steps = 200_000;
        let dx = d / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| h.gradient(&[x0 + (i as f64 + 0.5) * dx])[0].abs() * dx.abs())
            .sum();
        best = best.min(integral);
    }
    2.0 * best
}

/// Lowest `count` eigenvalues of the finite-difference `−f'' + t²x² f` on `[−half, half]`
/// with Dirichlet ends and `points` interior nodes.
pub fn fd_oscillator_1d(t: f64, half: f64, points: usize, count: usize) -> Vec<f64> {
    let h = 2.0 * half / (points + 1) as f64;
    let mut m = nalgebra::DMatrix::<f64>::zeros(points, points);
    for i in 0..points {
        let x = -half + (i + 1) as f64 * h;
        m[(i, i)] = 2.0 / (h * h) + t * t * x * x;
        if i + 1 < points {
            m[(i, i + 1)] = -1.0 / (h * h);
            m[(i + 1, i)] = -1.0 / (h * h);
        }
    }
    let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(f64::total_cmp);
    e.truncate(count);
    e
}
