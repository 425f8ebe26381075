//! Flat model manifolds, the closed-form scalar field catalog, closed 1-forms and
//! critical point search.
//!
//! Every field is a real trigonometric polynomial in the angular coordinates
//! `θ_i = 2π x_i / L_i`, so values, gradients and Hessians are exact.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat torus `R^n / (L_1 Z × … × L_n Z)`; `n = 1` is the circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleManifold {
    periods: Vec<f64>,
}

impl SampleManifold {
    pub fn torus(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::InvalidArgument(
                "manifold dimension must be >= 1".into(),
            ));
        }
        if periods.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "periods must be positive, got {periods:?}"
            )));
        }
        Ok(Self { periods })
    }

    /// The torus with all periods `2π`.
    pub fn standard(n: usize) -> Result<Self> {
        Self::torus(vec![2.0 * PI; n])
    }

    pub fn circle() -> Self {
        Self {
            periods: vec![2.0 * PI],
        }
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn min_period(&self) -> f64 {
        self.periods.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Canonical representative in `[0, L_i)` per axis.
    pub fn canonical(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.periods)
            .map(|(&xi, &l)| {
                let r = xi.rem_euclid(l);
                // rem_euclid can round up to exactly l
                if r >= l {
                    0.0
                } else {
                    r
                }
            })
            .collect()
    }

    /// Integer lattice translate of an unwrapped point, `floor(x_i / L_i)`.
    pub fn lattice_shift(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.periods)
            .map(|(&xi, &l)| (xi / l).floor() as i64)
            .collect()
    }

    /// Minimal-image displacement `b - a`.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.periods)
            .map(|((&ai, &bi), &l)| {
                let d = (bi - ai).rem_euclid(l);
                if d > 0.5 * l {
                    d - l
                } else {
                    d
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrigKind {
    Cos,
    Sin,
}

/// One term `coef · cos(k·θ)` or `coef · sin(k·θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub kind: TrigKind,
    pub coef: f64,
    pub freq: Vec<i32>,
}

/// Real trigonometric polynomial on a flat torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    wavenumbers: Vec<f64>,
    terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn new(manifold: &SampleManifold, terms: Vec<TrigTerm>) -> Result<Self> {
        let n = manifold.dim();
        if let Some(t) = terms.iter().find(|t| t.freq.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "trig term frequency {:?} has length != dimension {n}",
                t.freq
            )));
        }
        let wavenumbers = manifold.periods().iter().map(|l| 2.0 * PI / l).collect();
        Ok(Self { wavenumbers, terms })
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    fn phase(&self, term: &TrigTerm, x: &[f64]) -> f64 {
        term.freq
            .iter()
            .zip(&self.wavenumbers)
            .zip(x)
            .map(|((&k, &w), &xi)| k as f64 * w * xi)
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = self.phase(t, x);
                match t.kind {
                    TrigKind::Cos => t.coef * p.cos(),
                    TrigKind::Sin => t.coef * p.sin(),
                }
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut g = vec![0.0; n];
        for t in &self.terms {
            let p = self.phase(t, x);
            // d/dp of the term
            let dp = match t.kind {
                TrigKind::Cos => -t.coef * p.sin(),
                TrigKind::Sin => t.coef * p.cos(),
            };
            for i in 0..n {
                g[i] += dp * t.freq[i] as f64 * self.wavenumbers[i];
            }
        }
        g
    }

    /// Row-major `n × n` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut h = vec![0.0; n * n];
        for t in &self.terms {
            let p = self.phase(t, x);
            let d2p = match t.kind {
                TrigKind::Cos => -t.coef * p.cos(),
                TrigKind::Sin => -t.coef * p.sin(),
            };
            let w: Vec<f64> = (0..n)
                .map(|i| t.freq[i] as f64 * self.wavenumbers[i])
                .collect();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += d2p * w[i] * w[j];
                }
            }
        }
        h
    }

    /// Largest absolute frequency along each axis.
    pub fn bandwidth(&self) -> Vec<u32> {
        let n = self.wavenumbers.len();
        (0..n)
            .map(|i| {
                self.terms
                    .iter()
                    .map(|t| t.freq[i].unsigned_abs())
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// A periodic Morse-function candidate from the fixed catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    name: String,
    params: Vec<f64>,
    manifold: SampleManifold,
    poly: TrigPoly,
}

impl ScalarField {
    /// Catalog lookup. Names:
    /// - `cos-sum`: `Σ cos θ_i`
    /// - `circle-double-well` (circle only): `cos 2θ + c sin θ`, `c` defaults to 0.3
    /// - `torus-tilted` (2-torus only): `cos θ₁ + cos θ₂ + c cos θ₁ cos θ₂`, `c` defaults to 0.3
    /// - `trig`: user coefficients, flattened groups `(kind, coef, k_1..k_n)` with
    ///   kind 0 for cosine and 1 for sine.
    pub fn from_catalog(name: &str, params: &[f64], manifold: &SampleManifold) -> Result<Self> {
        let n = manifold.dim();
        let term = |kind, coef, freq: Vec<i32>| TrigTerm { kind, coef, freq };
        let unit = |i: usize, k: i32| {
            let mut f = vec![0; n];
            f[i] = k;
            f
        };
        let terms = match name {
            "cos-sum" => {
                expect_params(name, params, 0)?;
                (0..n)
                    .map(|i| term(TrigKind::Cos, 1.0, unit(i, 1)))
                    .collect()
            }
            "circle-double-well" => {
                if n != 1 {
                    return Err(Error::InvalidArgument(format!("{name} needs the circle")));
                }
                let c = optional_param(name, params, 0.3)?;
                vec![
                    term(TrigKind::Cos, 1.0, vec![2]),
                    term(TrigKind::Sin, c, vec![1]),
                ]
            }
            "torus-tilted" => {
                if n != 2 {
                    return Err(Error::InvalidArgument(format!("{name} needs the 2-torus")));
                }
                let c = optional_param(name, params, 0.3)?;
                // cos a cos b = (cos(a+b) + cos(a-b)) / 2
                vec![
                    term(TrigKind::Cos, 1.0, vec![1, 0]),
                    term(TrigKind::Cos, 1.0, vec![0, 1]),
                    term(TrigKind::Cos, 0.5 * c, vec![1, 1]),
                    term(TrigKind::Cos, 0.5 * c, vec![1, -1]),
                ]
            }
            "trig" => {
                let group = n + 2;
                if params.is_empty() || params.len() % group != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "trig field needs groups of {group} numbers (kind, coef, k_1..k_{n})"
                    )));
                }
                params
                    .chunks(group)
                    .map(|g| {
                        let kind = match g[0] as i64 {
                            0 => TrigKind::Cos,
                            1 => TrigKind::Sin,
                            other => {
                                return Err(Error::InvalidArgument(format!(
                                    "trig kind {other} not in {{0,1}}"
                                )))
                            }
                        };
                        let freq = g[2..].iter().map(|&k| k.round() as i32).collect();
                        Ok(term(kind, g[1], freq))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            other => return Err(Error::InvalidArgument(format!("unknown field `{other}`"))),
        };
        Ok(Self {
            name: name.to_string(),
            params: params.to_vec(),
            manifold: manifold.clone(),
            poly: TrigPoly::new(manifold, terms)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn manifold(&self) -> &SampleManifold {
        &self.manifold
    }

    pub fn poly(&self) -> &TrigPoly {
        &self.poly
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.poly.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.poly.gradient(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.poly.hessian(x)
    }

    /// Laplacian `Σ ∂²h/∂x_i²`.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let h = self.hessian(x);
        (0..n).map(|i| h[i * n + i]).sum()
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.params.is_empty() {
            let p: Vec<String> = self.params.iter().map(|v| v.to_string()).collect();
            write!(f, ":{}", p.join(","))?;
        }
        Ok(())
    }
}

fn expect_params(name: &str, params: &[f64], count: usize) -> Result<()> {
    if params.len() != count {
        return Err(Error::InvalidArgument(format!(
            "{name} takes {count} parameters, got {}",
            params.len()
        )));
    }
    Ok(())
}

fn optional_param(name: &str, params: &[f64], default: f64) -> Result<f64> {
    match params {
        [] => Ok(default),
        [c] => Ok(*c),
        _ => Err(Error::InvalidArgument(format!(
            "{name} takes at most one parameter"
        ))),
    }
}

/// Closed 1-form `α = dh + Σ c_i dx_i`; closed by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedOneForm {
    exact: Option<ScalarField>,
    harmonic: Vec<f64>,
}

impl ClosedOneForm {
    pub fn new(exact: Option<ScalarField>, harmonic: Vec<f64>) -> Result<Self> {
        if let Some(h) = &exact {
            if h.manifold().dim() != harmonic.len() {
                return Err(Error::ShapeMismatch(format!(
                    "harmonic part has {} coefficients on a {}-manifold",
                    harmonic.len(),
                    h.manifold().dim()
                )));
            }
        }
        if harmonic.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "harmonic coefficients must be finite".into(),
            ));
        }
        Ok(Self { exact, harmonic })
    }

    pub fn exact(h: ScalarField) -> Self {
        let n = h.manifold().dim();
        Self {
            exact: Some(h),
            harmonic: vec![0.0; n],
        }
    }

    pub fn harmonic_only(harmonic: Vec<f64>) -> Self {
        Self {
            exact: None,
            harmonic,
        }
    }

    pub fn dim(&self) -> usize {
        self.harmonic.len()
    }

    pub fn potential(&self) -> Option<&ScalarField> {
        self.exact.as_ref()
    }

    pub fn harmonic(&self) -> &[f64] {
        &self.harmonic
    }

    pub fn is_exact(&self) -> bool {
        self.harmonic.iter().all(|&c| c == 0.0)
    }

    /// Components `α_i(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut a = self.harmonic.clone();
        if let Some(h) = &self.exact {
            for (ai, gi) in a.iter_mut().zip(h.gradient(x)) {
                *ai += gi;
            }
        }
        a
    }

    /// Row-major `∂_j α_i`, the Hessian of the exact part.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        match &self.exact {
            Some(h) => h.hessian(x),
            None => vec![0.0; self.dim() * self.dim()],
        }
    }

    /// Antisymmetric part of the Jacobian; zero for every representable form.
    pub fn closedness_defect(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let j = self.jacobian(x);
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..a {
                worst = worst.max((j[a * n + b] - j[b * n + a]).abs());
            }
        }
        worst
    }
}

/// Nondegenerate zero of `grad h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Canonical representative in `[0, L_i)`.
    pub coords: Vec<f64>,
    pub value: f64,
    pub index: usize,
    /// Ascending.
    pub hess_eigs: Vec<f64>,
    /// Unit eigenvectors matching `hess_eigs`, first nonzero coordinate positive.
    pub hess_vecs: Vec<Vec<f64>>,
}

impl CriticalPoint {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Unstable directions (negative Hessian eigenvalues), in eigenvalue order.
    pub fn unstable_dirs(&self) -> &[Vec<f64>] {
        &self.hess_vecs[..self.index]
    }

    pub fn stable_dirs(&self) -> &[Vec<f64>] {
        &self.hess_vecs[self.index..]
    }
}

#[derive(Clone, Debug)]
pub struct CriticalSearch {
    pub scan_resolution: usize,
    pub grad_tol: f64,
    pub degeneracy_tol: f64,
    /// Absolute merge distance; `None` means `1e-6 · min(periods)`.
    pub merge_tol: Option<f64>,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        Self {
            scan_resolution: 64,
            grad_tol: 1e-10,
            degeneracy_tol: 1e-6,
            merge_tol: None,
        }
    }
}

pub fn find_critical_points(
    field: &ScalarField,
    scan_resolution: usize,
    grad_tol: f64,
) -> Result<Vec<CriticalPoint>> {
    find_critical_points_with(
        field,
        &CriticalSearch {
            scan_resolution,
            grad_tol,
            ..Default::default()
        },
    )
}

/// Grid scan for local minima of `|grad h|²`, Newton polishing, periodic dedup and
/// Hessian classification. Output is sorted by index, then by coordinates.
pub fn find_critical_points_with(
    field: &ScalarField,
    opts: &CriticalSearch,
) -> Result<Vec<CriticalPoint>> {
    let manifold = field.manifold();
    let n = manifold.dim();
    let res = opts.scan_resolution;
    if res < 16 {
        return Err(Error::InvalidArgument(format!(
            "scan_resolution {res} < 16"
        )));
    }
    let merge_tol = opts.merge_tol.unwrap_or(1e-6 * manifold.min_period());
    let total = res.pow(n as u32);
    let step: Vec<f64> = manifold.periods().iter().map(|l| l / res as f64).collect();

    let point_of = |flat: usize| -> Vec<f64> {
        let idx = unflatten(flat, res, n);
        idx.iter().zip(&step).map(|(&i, &s)| i as f64 * s).collect()
    };
    let gsq: Vec<f64> = (0..total)
        .map(|f| field.gradient(&point_of(f)).iter().map(|g| g * g).sum())
        .collect();

    let mut seeds = Vec::new();
    for flat in 0..total {
        let idx = unflatten(flat, res, n);
        let is_min = neighbours(&idx, res).all(|nb| gsq[flatten(&nb, res)] >= gsq[flat]);
        if is_min {
            seeds.push(point_of(flat));
        }
    }

    let mut found: Vec<Vec<f64>> = seeds
        .iter()
        .filter_map(|s| newton_polish(field, s, opts.grad_tol))
        .map(|x| manifold.canonical(&x))
        .collect();
    found.sort_by(|a, b| lex_cmp(a, b));

    let mut unique: Vec<Vec<f64>> = Vec::new();
    for x in found {
        if let Some(u) = unique.iter().find(|u| manifold.distance(u, &x) < merge_tol) {
            let (hu, hx) = (field.value(u), field.value(&x));
            if (hu - hx).abs() > 1e-8 * (1.0 + hu.abs()) {
                return Err(Error::ScanTooCoarse { a: u.clone(), b: x });
            }
            continue;
        }
        unique.push(x);
    }

    let mut points = unique
        .into_iter()
        .map(|x| classify(field, x, opts.degeneracy_tol))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.index
            .cmp(&b.index)
            .then_with(|| lex_cmp(&a.coords, &b.coords))
    });
    Ok(points)
}

/// Builds a `CriticalPoint` at `x`, which must already be a zero of the gradient.
pub fn classify(field: &ScalarField, x: Vec<f64>, degeneracy_tol: f64) -> Result<CriticalPoint> {
    let n = x.len();
    let (eigs, vecs) = sym_eigen(&field.hessian(&x), n);
    let min_abs = eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if min_abs <= degeneracy_tol {
        return Err(Error::DegenerateCritical {
            coords: x,
            min_abs_eig: min_abs,
        });
    }
    let index = eigs.iter().filter(|&&e| e < 0.0).count();
    Ok(CriticalPoint {
        value: field.value(&x),
        coords: x,
        index,
        hess_eigs: eigs,
        hess_vecs: vecs,
    })
}

/// Ascending eigenpairs of a row-major symmetric matrix, eigenvector signs normalized.
pub(crate) fn sym_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigs = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            if let Some(&first) = v.iter().find(|c| c.abs() > 1e-12) {
                if first < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
            v
        })
        .collect();
    (eigs, vecs)
}

/// Damped Newton on `grad h = 0`; returns `None` if it fails to converge.
fn newton_polish(field: &ScalarField, seed: &[f64], grad_tol: f64) -> Option<Vec<f64>> {
    let n = seed.len();
    let mut x = seed.to_vec();
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut g = field.gradient(&x);
    for _ in 0..100 {
        let gn = norm(&g);
        if gn < grad_tol {
            // one extra step is harmless and tightens the residual further
            if let Some(dx) = newton_step(field, &x, &g, n) {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
                let gt = field.gradient(&trial);
                if norm(&gt) <= gn {
                    return Some(trial);
                }
            }
            return Some(x);
        }
        let dx = newton_step(field, &x, &g, n)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
            let gt = field.gradient(&trial);
            if norm(&gt) < gn || lambda < 1e-6 {
                x = trial;
                g = gt;
                break;
            }
            lambda *= 0.5;
        }
    }
    (norm(&g) < grad_tol).then_some(x)
}

fn newton_step(field: &ScalarField, x: &[f64], g: &[f64], n: usize) -> Option<Vec<f64>> {
    let h = DMatrix::from_row_slice(n, n, &field.hessian(x));
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    h.lu().solve(&rhs).map(|d| d.iter().copied().collect())
}

/// `m_q = #{x : index(x) = q}` for `q = 0..=dim`.
pub fn count_by_index(points: &[CriticalPoint], dim: usize) -> Vec<usize> {
    let mut m = vec![0; dim + 1];
    for p in points {
        m[p.index] += 1;
    }
    m
}

/// `Σ (-1)^q m_q`.
pub fn euler_characteristic(counts: &[usize]) -> i64 {
    counts
        .iter()
        .enumerate()
        .map(|(q, &m)| if q % 2 == 0 { m as i64 } else { -(m as i64) })
        .sum()
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn unflatten(mut flat: usize, res: usize, n: usize) -> Vec<usize> {
    let mut idx = vec![0; n];
    for a in (0..n).rev() {
        idx[a] = flat % res;
        flat /= res;
    }
    idx
}

fn flatten(idx: &[usize], res: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * res + i)
}

fn neighbours(idx: &[usize], res: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    let n = idx.len();
    let count = 3usize.pow(n as u32);
    (0..count)
        .filter(move |&c| c != (count - 1) / 2)
        .map(move |mut c| {
            let mut nb = idx.to_vec();
            for v in nb.iter_mut() {
                let off = (c % 3) as isize - 1;
                c /= 3;
                *v = ((*v as isize + off).rem_euclid(res as isize)) as usize;
            }
            nb
        })
}
