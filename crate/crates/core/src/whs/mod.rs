//! The integration map on unstable cells, cutoff Gaussian quasi-modes, the isometry
//! `R(t)` onto the small eigenspace, and the comparison `L(t) = S(t)∘Int∘e^{th}`.

mod cell;

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cell::{build_unstable_cell, CellOptions, UnstableCell};

use crate::error::{Error, Result};
use crate::forms::{
    exterior_d, inner_product, DiscreteForm, Grid, Layout, Route, TrigInterpolant, WittenOperator,
};
use crate::manifold::{ClosedOneForm, CriticalPoint, ScalarField};
use crate::morse::{min_separation, MorseComplex, OrientationChoice};
use crate::spectra::{small_subspace_with, EigenOptions, SmallSubspace, SMALL_THRESHOLD};

pub const CHAIN_TOL: f64 = 1e-6;
/// Largest admissible condition number of `JᵗJ` after projection.
pub const GRAM_CONDITION_LIMIT: f64 = 1e8;
/// Nodes where `e^{t(h(z) − h(x))}` falls below this are skipped in `L(t)`.
const NEGLIGIBLE_WEIGHT: f64 = 1e-18;

/// Pointwise values of a grid form through trigonometric interpolation.
#[derive(Clone, Debug)]
pub struct FormEvaluator {
    components: Vec<TrigInterpolant>,
}

impl FormEvaluator {
    pub fn new(grid: &Grid, omega: &DiscreteForm) -> Self {
        let components = (0..omega.num_components())
            .map(|c| TrigInterpolant::new(grid, omega.component(c)))
            .collect();
        Self { components }
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// `Int(ω)(x) = ∫_{Ŵ_x^-} ω`.
pub fn integrate_over_unstable_cell(
    grid: &Grid,
    omega: &DiscreteForm,
    cell: &UnstableCell,
) -> Result<f64> {
    if omega.degree() != cell.index {
        return Err(Error::DegreeMismatch {
            q: omega.degree(),
            k: cell.index,
        });
    }
    let ev = FormEvaluator::new(grid, omega);
    Ok(cell.integrate(&|z: &[f64]| ev.eval(z)))
}

/// Cells of every critical point, in the order of `points`.
pub fn build_cells(
    field: &ScalarField,
    points: &[CriticalPoint],
    orient: &OrientationChoice,
    opts: &CellOptions,
) -> Result<Vec<UnstableCell>> {
    (0..points.len())
        .map(|x| build_unstable_cell(field, points, x, orient, opts))
        .collect()
}

/// `max_x |Int(dω)(x) − Σ_y I(x,y) Int(ω)(y)|` over generators `x` of degree `deg ω + 1`.
pub fn int_chain_map_check(
    grid: &Grid,
    omega: &DiscreteForm,
    complex: &MorseComplex,
    cells: &[UnstableCell],
) -> Result<f64> {
    let q = omega.degree() + 1;
    if q > complex.dim() {
        return Err(Error::TopDegree(omega.degree()));
    }
    let d_omega = exterior_d(grid, omega)?;
    let lower: Vec<f64> = complex.generators[q - 1]
        .iter()
        .map(|&y| integrate_over_unstable_cell(grid, omega, &cells[y]))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (r, &x) in complex.generators[q].iter().enumerate() {
        let lhs = integrate_over_unstable_cell(grid, &d_omega, &cells[x])?;
        let rhs: f64 = complex.incidence[q][r]
            .iter()
            .zip(&lower)
            .map(|(&i, v)| i as f64 * v)
            .sum();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `0.4 ×` the smallest distance between critical points.
pub fn default_eta(field: &ScalarField, points: &[CriticalPoint]) -> f64 {
    0.4 * min_separation(field, points)
}

pub fn check_supports(field: &ScalarField, points: &[CriticalPoint], eta: f64) -> Result<()> {
    let distance = min_separation(field, points);
    if 2.0 * eta >= distance {
        return Err(Error::SupportOverlap { eta, distance });
    }
    Ok(())
}

/// Smooth step from 1 on `[0, η/2]` to 0 on `[η, ∞)`.
pub fn cutoff(eta: f64, u: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let s = (eta - u) / (0.5 * eta);
    if s >= 1.0 {
        1.0
    } else if s <= 0.0 {
        0.0
    } else {
        f(s) / (f(s) + f(1.0 - s))
    }
}

/// `∫ γ_η(|d|)² exp(−t Σ_i |λ_i| (v_i·d)²) dd` over `R^n`, `n ≤ 2`.
fn cutoff_gaussian_mass(y: &CriticalPoint, t: f64, eta: f64) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(16).expect("positive"));
    let pairs = rule.as_node_weight_pairs();
    let lam: Vec<f64> = y.hess_eigs.iter().map(|l| l.abs()).collect();
    let panels = 24;
    let mut total = 0.0;
    for k in 0..panels {
        let (a, b) = (
            eta * k as f64 / panels as f64,
            eta * (k + 1) as f64 / panels as f64,
        );
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, w) in pairs {
            let rho = mid + half * x;
            let g2 = cutoff(eta, rho).powi(2);
            total += half
                * w
                * g2
                * match lam.len() {
                    1 => 2.0 * (-t * lam[0] * rho * rho).exp(),
                    _ => {
                        let m = 256;
                        let ring: f64 = (0..m)
                            .map(|j| {
                                let phi = std::f64::consts::TAU * j as f64 / m as f64;
                                (-t * rho
                                    * rho
                                    * (lam[0] * phi.cos().powi(2) + lam[1] * phi.sin().powi(2)))
                                .exp()
                            })
                            .sum();
                        rho * ring * std::f64::consts::TAU / m as f64
                    }
                };
        }
    }
    total
}

/// Coefficient of each layout component in `e_1∧…∧e_q` for the frame `e`.
fn frame_components(n: usize, frame: &[Vec<f64>]) -> Vec<f64> {
    let q = frame.len();
    let layout = Layout::new(n, q);
    (0..layout.len())
        .map(|c| {
            let idx = layout.indices(c);
            let m = DMatrix::from_fn(q, q, |a, b| frame[a][idx[b]]);
            if q == 0 {
                1.0
            } else {
                m.determinant()
            }
        })
        .collect()
}

/// The cutoff Gaussian `ω̄_{y,t}`: the ground state of the Hessian model at `y`, cut
/// off at radius `η`, along the unstable frame of `y`, normalized in `L²`.
pub fn build_cutoff_quasimode(
    grid: &Grid,
    field: &ScalarField,
    points: &[CriticalPoint],
    y: usize,
    orient: &OrientationChoice,
    t: f64,
    eta: f64,
) -> Result<DiscreteForm> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    check_supports(field, points, eta)?;
    let p = &points[y];
    let n = grid.dim();
    let beta = cutoff_gaussian_mass(p, t, eta).sqrt();
    let comps = frame_components(n, &orient.frames[y]);
    let m = grid.manifold();
    let profile: Vec<f64> = (0..grid.len())
        .map(|flat| {
            let d = m.displacement(&p.coords, &grid.point(flat));
            let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= eta {
                return 0.0;
            }
            let quad: f64 = p
                .hess_eigs
                .iter()
                .zip(&p.hess_vecs)
                .map(|(l, v)| l.abs() * v.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum();
            cutoff(eta, r) * (-0.5 * t * quad).exp() / beta
        })
        .collect();
    let data = comps
        .iter()
        .flat_map(|c| profile.iter().map(move |v| c * v))
        .collect();
    DiscreteForm::from_data(grid, p.index, data)
}

/// `J(t)`, `R(t) = Ĵ(ĴᵗĴ)^{−1/2}` with `Ĵ = P_sm J`, and `‖P_sm J − J‖`.
#[derive(Clone, Debug)]
pub struct JR {
    pub q: usize,
    pub t: f64,
    pub generators: Vec<usize>,
    pub j: Vec<DiscreteForm>,
    pub r: Vec<DiscreteForm>,
    /// Small-basis coordinates of `P_sm J`, `dim × m_q`.
    pub projection: DMatrix<f64>,
    pub residual: f64,
    pub gram_condition: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn build_j_r(
    grid: &Grid,
    field: &ScalarField,
    points: &[CriticalPoint],
    generators: &[usize],
    orient: &OrientationChoice,
    t: f64,
    eta: f64,
    small: &SmallSubspace,
) -> Result<JR> {
    if generators.is_empty() {
        return Err(Error::InvalidArgument(
            "no generators in this degree".into(),
        ));
    }
    let j: Vec<DiscreteForm> = generators
        .iter()
        .map(|&y| build_cutoff_quasimode(grid, field, points, y, orient, t, eta))
        .collect::<Result<_>>()?;
    let (k, m) = (small.dim(), j.len());
    let mut c = DMatrix::zeros(k, m);
    for a in 0..k {
        for b in 0..m {
            c[(a, b)] = inner_product(grid, &small.basis[a], &j[b])?;
        }
    }
    let gram = c.transpose() * &c;
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > GRAM_CONDITION_LIMIT {
        return Err(Error::SingularGram(condition));
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let coef = &c * inv_sqrt;
    let mut r = Vec::with_capacity(m);
    for b in 0..m {
        let mut u = DiscreteForm::zeros(grid, small.q)?;
        for a in 0..k {
            u.axpy(coef[(a, b)], &small.basis[a])?;
        }
        r.push(u);
    }
    let mut jj = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            jj[(a, b)] = inner_product(grid, &j[a], &j[b])?;
        }
    }
    let defect = SymmetricEigen::new(jj - gram)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v));
    Ok(JR {
        q: small.q,
        t,
        generators: generators.to_vec(),
        j,
        r,
        projection: c,
        residual: defect.max(0.0).sqrt(),
        gram_condition: condition,
    })
}

/// Base of the power factor in `S(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingConvention {
    /// `(π/t)^{(n−2q)/4} e^{−th(x)}`.
    #[default]
    PiOverT,
    /// `(t/π)^{(n−2q)/4} e^{−th(x)}`.
    TOverPi,
}

impl FromStr for ScalingConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi-over-t" => Ok(Self::PiOverT),
            "t-over-pi" => Ok(Self::TOverPi),
            other => Err(Error::Config(format!(
                "unknown scaling convention `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ScalingConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PiOverT => "pi-over-t",
            Self::TOverPi => "t-over-pi",
        })
    }
}

/// The power factor of `S(t)` without the exponential.
pub fn scaling_power(n: usize, q: usize, t: f64, convention: ScalingConvention) -> f64 {
    let base = match convention {
        ScalingConvention::PiOverT => std::f64::consts::PI / t,
        ScalingConvention::TOverPi => t / std::f64::consts::PI,
    };
    base.powf((n as f64 - 2.0 * q as f64) / 4.0)
}

/// Diagonal of `S^q(t)` over the given generators.
pub fn scaling_matrix(
    n: usize,
    q: usize,
    t: f64,
    generators: &[&CriticalPoint],
    convention: ScalingConvention,
) -> Result<Vec<f64>> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    let p = scaling_power(n, q, t, convention);
    Ok(generators
        .iter()
        .map(|g| p * (-t * g.value).exp())
        .collect())
}

/// Limit of the diagonal of `L(t)R(t)` for a generator whose Hessian is not the
/// unit model: `Π_stable |λ|^{1/4} Π_unstable |λ|^{−1/4}`, times the ratio of the chosen
/// power factor to `(π/t)^{(n−2q)/4}`.
pub fn model_limit(p: &CriticalPoint, t: f64, convention: ScalingConvention) -> f64 {
    let n = p.dim();
    let hess: f64 = p
        .hess_eigs
        .iter()
        .map(|&l| l.abs().powf(0.25 * l.signum()))
        .product();
    hess * scaling_power(n, p.index, t, convention)
        / scaling_power(n, p.index, t, ScalingConvention::PiOverT)
}

/// Everything needed to evaluate `L(t)` for one field.
#[derive(Clone, Debug)]
pub struct WhsSetup {
    pub grid: Grid,
    pub field: ScalarField,
    pub complex: MorseComplex,
    pub cells: Vec<UnstableCell>,
    pub eta: f64,
    pub convention: ScalingConvention,
    pub eigen: EigenOptions,
}

impl WhsSetup {
    pub fn new(
        grid: Grid,
        field: ScalarField,
        complex: MorseComplex,
        cell_opts: &CellOptions,
    ) -> Result<Self> {
        let cells = build_cells(&field, &complex.points, &complex.orientation, cell_opts)?;
        let eta = default_eta(&field, &complex.points);
        Ok(Self {
            grid,
            field,
            complex,
            cells,
            eta,
            convention: ScalingConvention::default(),
            eigen: EigenOptions::default(),
        })
    }

    pub fn small_subspace(&self, q: usize, t: f64) -> Result<SmallSubspace> {
        let alpha = ClosedOneForm::exact(self.field.clone());
        let op = WittenOperator::assemble(&self.grid, q, t, &alpha, Route::Direct)?;
        small_subspace_with(&op, SMALL_THRESHOLD, &self.eigen)
    }
}

/// One degree of the comparison at one `t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhsDegree {
    pub q: usize,
    pub t: f64,
    pub generators: Vec<usize>,
    pub small_eigenvalues: Vec<f64>,
    /// `Int(e^{th} U_y)(x)`, rows `x`, columns `y`.
    pub int_matrix: Vec<Vec<f64>>,
    pub scaling: Vec<f64>,
    /// `L(t)R(t)`.
    pub l_matrix: Vec<Vec<f64>>,
    /// Spectral norm of `L(t)R(t) − Id`.
    pub deviation: f64,
    /// Per generator, the value `model_limit` predicts for the diagonal of `L(t)R(t)`.
    pub model_limit: Vec<f64>,
    /// Spectral norm of `L(t)R(t) − diag(model_limit)`.
    pub limit_deviation: f64,
    pub determinant: f64,
    pub projection_residual: f64,
    /// `L²` norm of `U_y` outside the `η`-ball at `y`.
    pub exterior_mass: Vec<f64>,
    /// Pointwise sup of `|U_y|` outside the `η`-ball.
    pub exterior_sup: Vec<f64>,
    /// Pointwise sup of `|U_y − ω̄_y|` inside the `η`-ball.
    pub interior_sup: Vec<f64>,
    /// `|U_y|` peaks nearer to `y` than to any other generator.
    pub localized: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhsBundle {
    pub t: f64,
    pub degrees: Vec<WhsDegree>,
    /// Largest deviation over the degrees.
    pub deviation: f64,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0f64, |a, &v| a.max(v))
}

pub fn whs_degree(setup: &WhsSetup, q: usize, t: f64) -> Result<WhsDegree> {
    let points = &setup.complex.points;
    let orient = &setup.complex.orientation;
    let grid = &setup.grid;
    let generators = setup.complex.generators[q].clone();
    let small = setup.small_subspace(q, t)?;
    let jr = build_j_r(
        grid,
        &setup.field,
        points,
        &generators,
        orient,
        t,
        setup.eta,
        &small,
    )?;
    let n = grid.dim();
    let m = generators.len();
    let power = scaling_power(n, q, t, setup.convention);
    let evals: Vec<FormEvaluator> = jr.r.iter().map(|u| FormEvaluator::new(grid, u)).collect();

    let mut int_matrix = vec![vec![0.0; m]; m];
    let mut l = DMatrix::zeros(m, m);
    for (row, &x) in generators.iter().enumerate() {
        let hx = points[x].value;
        for (col, ev) in evals.iter().enumerate() {
            // e^{t(h(z) − h(x))} ≤ 1 on the unstable cell of x
            let field = &setup.field;
            let rel = setup.cells[x].integrate(&|z: &[f64]| {
                let f = (t * (field.value(z) - hx)).exp();
                if f < NEGLIGIBLE_WEIGHT {
                    return vec![0.0; ev.len()];
                }
                ev.eval(z).into_iter().map(|u| f * u).collect()
            });
            int_matrix[row][col] = (t * hx).exp() * rel;
            l[(row, col)] = power * rel;
        }
    }
    let deviation = spectral_norm(&(&l - DMatrix::identity(m, m)));
    let limit: Vec<f64> = generators
        .iter()
        .map(|&g| model_limit(&points[g], t, setup.convention))
        .collect();
    let limit_deviation =
        spectral_norm(&(&l - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(limit.clone()))));
    let determinant = l.determinant();

    let manifold = grid.manifold();
    let vol = grid.cell_volume();
    let mut exterior_mass = Vec::with_capacity(m);
    let mut exterior_sup = Vec::with_capacity(m);
    let mut interior_sup = Vec::with_capacity(m);
    let mut localized = true;
    for (b, &y) in generators.iter().enumerate() {
        let (u, w) = (&jr.r[b], &jr.j[b]);
        let (mut mass, mut sup, mut inner) = (0.0f64, 0.0f64, 0.0f64);
        let (mut peak, mut peak_at) = (-1.0, 0);
        for flat in 0..grid.len() {
            let norm2: f64 = (0..u.num_components())
                .map(|c| u.component(c)[flat].powi(2))
                .sum();
            if norm2 > peak {
                peak = norm2;
                peak_at = flat;
            }
            let z = grid.point(flat);
            if manifold.distance(&points[y].coords, &z) > setup.eta {
                mass += norm2 * vol;
                sup = sup.max(norm2.sqrt());
            } else {
                let diff: f64 = (0..u.num_components())
                    .map(|c| (u.component(c)[flat] - w.component(c)[flat]).powi(2))
                    .sum();
                inner = inner.max(diff.sqrt());
            }
        }
        let z = grid.point(peak_at);
        let nearest = generators
            .iter()
            .min_by(|&&a, &&c| {
                manifold
                    .distance(&points[a].coords, &z)
                    .total_cmp(&manifold.distance(&points[c].coords, &z))
            })
            .copied();
        localized &= nearest == Some(y);
        exterior_mass.push(mass.sqrt());
        exterior_sup.push(sup);
        interior_sup.push(inner);
    }

    let gens: Vec<&CriticalPoint> = generators.iter().map(|&g| &points[g]).collect();
    Ok(WhsDegree {
        q,
        t,
        generators,
        small_eigenvalues: small.eigenvalues.clone(),
        int_matrix,
        scaling: scaling_matrix(n, q, t, &gens, setup.convention)?,
        l_matrix: (0..m)
            .map(|r| (0..m).map(|c| l[(r, c)]).collect())
            .collect(),
        deviation,
        model_limit: limit,
        limit_deviation,
        determinant,
        projection_residual: jr.residual,
        exterior_mass,
        exterior_sup,
        interior_sup,
        localized,
    })
}

/// The comparison over the requested degrees (all nonempty degrees if `None`) and every `t`.
pub fn whs_compare(
    setup: &WhsSetup,
    degrees: Option<&[usize]>,
    t_grid: &[f64],
) -> Result<Vec<WhsBundle>> {
    let qs: Vec<usize> = match degrees {
        Some(d) => d.to_vec(),
        None => (0..=setup.complex.dim())
            .filter(|&q| !setup.complex.generators[q].is_empty())
            .collect(),
    };
    t_grid
        .par_iter()
        .map(|&t| {
            let degrees = qs
                .iter()
                .map(|&q| whs_degree(setup, q, t))
                .collect::<Result<Vec<_>>>()?;
            let deviation = degrees.iter().fold(0.0f64, |a, d| a.max(d.deviation));
            Ok(WhsBundle {
                t,
                degrees,
                deviation,
            })
        })
        .collect()
}
