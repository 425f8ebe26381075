//! Lowest eigenpairs of deformed Laplacians, the small cluster, and gap sweeps.

mod lobpcg;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{dot, DiscreteForm, Grid, Route, WittenOperator};
use crate::manifold::ClosedOneForm;

/// Eigenvalues below this are "small".
pub const SMALL_THRESHOLD: f64 = 1.0;
/// Small eigenvalues at or below this count as kernel and are left out of decay fits.
pub const KERNEL_FLOOR: f64 = 1e-20;

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub seed: u64,
    /// Residual bound relative to the operator norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Operators up to this size are diagonalized densely.
    pub dense_limit: usize,
    /// Recompute the small cluster from `d(t)` and `δ(t)` singular values.
    pub refine: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            tol: 1e-8,
            max_iter: 1500,
            dense_limit: 700,
            refine: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub q: usize,
    pub t: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `L²`-orthonormal.
    pub eigenvectors: Vec<DiscreteForm>,
    /// `‖Δv − λv‖` for unit `v`.
    pub residuals: Vec<f64>,
    pub operator_norm: f64,
}

impl SpectrumResult {
    pub fn worst_relative_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(*r)) / self.operator_norm
    }
}

/// `k` smallest eigenpairs.
pub fn eigensolve(op: &WittenOperator, k: usize) -> Result<SpectrumResult> {
    eigensolve_with(op, k, &EigenOptions::default())
}

pub fn eigensolve_with(
    op: &WittenOperator,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    let size = op.size();
    if k == 0 || k > size {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={size}"
        )));
    }
    let norm = op.norm_estimate();
    let (mut values, mut vectors) = if size <= opts.dense_limit {
        dense_lowest(op, k)
    } else {
        iterative_lowest(op, k, norm, opts)?
    };
    if opts.refine {
        refine_small(op, &mut values, &mut vectors);
    }
    let mut residuals = Vec::with_capacity(k);
    for (j, &lam) in values.iter().enumerate() {
        let v = vectors.column(j);
        let mut r = op.apply(v.as_slice());
        r.iter_mut().zip(v.iter()).for_each(|(a, b)| *a -= lam * b);
        residuals.push(dot(&r, &r).sqrt());
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > opts.tol * norm {
        return Err(Error::NoConvergence {
            iterations: 0,
            worst_residual: worst,
        });
    }
    let scale = 1.0 / op.grid().cell_volume().sqrt();
    let eigenvectors = (0..k)
        .map(|j| {
            let data = vectors.column(j).iter().map(|v| v * scale).collect();
            DiscreteForm::from_data(op.grid(), op.degree(), data).expect("operator size")
        })
        .collect();
    Ok(SpectrumResult {
        q: op.degree(),
        t: op.t(),
        eigenvalues: values,
        eigenvectors,
        residuals,
        operator_norm: norm,
    })
}

fn dense_lowest(op: &WittenOperator, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let m = op.dense();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut v = DMatrix::zeros(op.size(), k);
    for (j, &i) in order[..k].iter().enumerate() {
        v.column_mut(j).copy_from(&eig.eigenvectors.column(i));
    }
    (order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(), v)
}

fn iterative_lowest(
    op: &WittenOperator,
    k: usize,
    norm: f64,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let grid = op.grid();
    let points = grid.len();
    let shift = preconditioner_shift(op);
    let apply = |x: &[f64]| op.apply(x);
    let precondition = |r: &[f64]| {
        r.chunks(points)
            .flat_map(|c| grid.shifted_inverse_laplacian(c, shift))
            .collect::<Vec<f64>>()
    };
    let problem = lobpcg::Problem {
        size: op.size(),
        apply: &apply,
        precondition: &precondition,
    };
    let settings = lobpcg::Settings {
        wanted: k,
        block: k + (k / 2).max(3),
        seed: opts.seed,
        max_iter: opts.max_iter,
        tol: 0.5 * opts.tol * norm,
        polish_tol: 1e-13 * norm,
        polish_below: SMALL_THRESHOLD,
    };
    let sol = lobpcg::solve(&problem, &settings)?;
    Ok((sol.values, sol.vectors))
}

/// Mean of `t²|α|²` over the grid, at least 1.
fn preconditioner_shift(op: &WittenOperator) -> f64 {
    let a = op.alpha_grid().data();
    let points = op.grid().len();
    let mean = dot(a, a) / points as f64;
    (op.t() * op.t() * mean).max(1.0)
}

/// Replaces eigenvalues below the small threshold by squared singular values of the
/// stacked `[d(t)V; δ(t)V]`, which resolves them far below the round-off level of `Δ`.
fn refine_small(op: &WittenOperator, values: &mut [f64], vectors: &mut DMatrix<f64>) {
    let small: Vec<usize> = (0..values.len())
        .filter(|&j| values[j] < SMALL_THRESHOLD)
        .collect();
    if small.is_empty() {
        return;
    }
    let cols: Vec<(Vec<f64>, Vec<f64>)> = small
        .iter()
        .map(|&j| {
            let v = vectors.column(j);
            (
                op.d(v.as_slice()).unwrap_or_default(),
                op.delta(v.as_slice()).unwrap_or_default(),
            )
        })
        .collect();
    let rows = cols[0].0.len() + cols[0].1.len();
    if rows == 0 {
        return;
    }
    let b = DMatrix::from_fn(rows, small.len(), |i, j| {
        let (d, e) = &cols[j];
        if i < d.len() {
            d[i]
        } else {
            e[i - d.len()]
        }
    });
    let svd = b.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..small.len()).collect();
    order.sort_by(|&a, &c| svd.singular_values[a].total_cmp(&svd.singular_values[c]));
    let old: Vec<Vec<f64>> = small
        .iter()
        .map(|&j| vectors.column(j).iter().copied().collect())
        .collect();
    for (slot, &s) in order.iter().enumerate() {
        let target = small[slot];
        values[target] = svd.singular_values[s].powi(2);
        let mut col = vec![0.0; vectors.nrows()];
        for (c, v) in old.iter().enumerate() {
            let w = vt[(s, c)];
            col.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
        }
        vectors.column_mut(target).copy_from_slice(&col);
    }
}

/// Small eigenvalues plus the first one at or above the threshold.
#[derive(Clone, Debug)]
pub struct SmallCluster {
    pub small: Vec<f64>,
    pub first_large: f64,
    /// Largest small over first large.
    pub ratio: f64,
    pub spectrum: SpectrumResult,
}

/// Solves for growing `k` until an eigenvalue at or above `threshold` appears.
pub fn small_cluster(
    op: &WittenOperator,
    threshold: f64,
    opts: &EigenOptions,
) -> Result<SmallCluster> {
    let mut k = 4.min(op.size());
    loop {
        let spec = eigensolve_with(op, k, opts)?;
        if let Some(pos) = spec.eigenvalues.iter().position(|&v| v >= threshold) {
            let small = spec.eigenvalues[..pos].to_vec();
            let first_large = spec.eigenvalues[pos];
            let ratio = small.last().map_or(0.0, |s| s.max(0.0) / first_large);
            return Ok(SmallCluster {
                small,
                first_large,
                ratio,
                spectrum: spec,
            });
        }
        if k == op.size() {
            return Err(Error::GapNotOpen {
                ratio: f64::INFINITY,
            });
        }
        k = (2 * k).min(op.size());
    }
}

/// Gap is open when the largest small eigenvalue is below this fraction of the first large one.
pub const GAP_RATIO: f64 = 1e-3;

/// Number of eigenvalues below `threshold`, after checking the gap is open.
pub fn small_count(op: &WittenOperator, threshold: f64) -> Result<usize> {
    let c = small_cluster(op, threshold, &EigenOptions::default())?;
    if c.ratio >= GAP_RATIO {
        return Err(Error::GapNotOpen { ratio: c.ratio });
    }
    Ok(c.small.len())
}

/// Orthonormal eigenbasis of the small cluster.
#[derive(Clone, Debug)]
pub struct SmallSubspace {
    pub q: usize,
    pub t: f64,
    pub eigenvalues: Vec<f64>,
    pub basis: Vec<DiscreteForm>,
}

impl SmallSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

pub fn small_subspace(op: &WittenOperator, threshold: f64) -> Result<SmallSubspace> {
    small_subspace_with(op, threshold, &EigenOptions::default())
}

pub fn small_subspace_with(
    op: &WittenOperator,
    threshold: f64,
    opts: &EigenOptions,
) -> Result<SmallSubspace> {
    let c = small_cluster(op, threshold, opts)?;
    if c.ratio >= GAP_RATIO {
        return Err(Error::GapNotOpen { ratio: c.ratio });
    }
    let m = c.small.len();
    Ok(SmallSubspace {
        q: op.degree(),
        t: op.t(),
        eigenvalues: c.small,
        basis: c.spectrum.eigenvectors.into_iter().take(m).collect(),
    })
}

/// Worst `‖(I − P_{q+1}) d(t)ω‖ / ‖d(t)ω‖` over the degree-`q` small basis, skipping
/// images below the round-off floor. `None` if every image is below it.
pub fn leakage(
    grid: &Grid,
    op_q: &WittenOperator,
    lower: &SmallSubspace,
    upper: &SmallSubspace,
) -> Option<f64> {
    let vol = grid.cell_volume();
    let floor = 1e-9 * op_q.norm_estimate().sqrt();
    let mut worst: Option<f64> = None;
    for w in &lower.basis {
        let dw = op_q.d(w.data())?;
        let norm = (vol * dot(&dw, &dw)).sqrt();
        if norm <= floor {
            continue;
        }
        let mut rest = dw.clone();
        for u in &upper.basis {
            let c = vol * dot(u.data(), &dw);
            rest.iter_mut().zip(u.data()).for_each(|(r, b)| *r -= c * b);
        }
        let ratio = (vol * dot(&rest, &rest)).sqrt() / norm;
        worst = Some(worst.map_or(ratio, |x: f64| x.max(ratio)));
    }
    worst
}

/// Least-squares line `y = intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub q: usize,
    pub t_grid: Vec<f64>,
    pub small: Vec<Vec<f64>>,
    pub first_large: Vec<f64>,
    /// Fit of `log λ` for the largest small eigenvalue above the kernel floor.
    pub decay: Option<LinearFit>,
    /// Fit of the first large eigenvalue against `t`.
    pub growth: Option<LinearFit>,
}

impl GapReport {
    pub fn small_count(&self) -> usize {
        self.small.first().map_or(0, Vec::len)
    }

    /// Largest small eigenvalue above the kernel floor, per `t`.
    pub fn tunnelling(&self) -> Vec<Option<f64>> {
        self.small
            .iter()
            .map(|s| {
                s.iter()
                    .copied()
                    .filter(|&v| v > KERNEL_FLOOR)
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |x| x.max(v))))
            })
            .collect()
    }
}

pub fn gap_sweep(
    grid: &Grid,
    alpha: &ClosedOneForm,
    q: usize,
    t_grid: &[f64],
    opts: &EigenOptions,
) -> Result<GapReport> {
    if t_grid.len() < 4 || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "t grid must be ascending with at least 4 values".into(),
        ));
    }
    let clusters = t_grid
        .par_iter()
        .map(|&t| {
            let op = WittenOperator::assemble(grid, q, t, alpha, Route::Direct)?;
            small_cluster(&op, SMALL_THRESHOLD, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = clusters.iter().map(|c| c.small.len()).collect();
    if counts.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::ClusterCardinalityChanged { counts });
    }
    let mut report = GapReport {
        q,
        t_grid: t_grid.to_vec(),
        small: clusters.iter().map(|c| c.small.clone()).collect(),
        first_large: clusters.iter().map(|c| c.first_large).collect(),
        decay: None,
        growth: None,
    };
    let (ts, logs): (Vec<f64>, Vec<f64>) = report
        .tunnelling()
        .iter()
        .zip(t_grid)
        .filter_map(|(v, &t)| v.map(|v| (t, v.ln())))
        .unzip();
    report.decay = linear_fit(&ts, &logs);
    report.growth = linear_fit(t_grid, &report.first_large);
    Ok(report)
}
