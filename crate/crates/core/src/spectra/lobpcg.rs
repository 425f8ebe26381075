//! Block preconditioned conjugate gradient eigensolver for the lowest eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) struct Problem<'a> {
    pub size: usize,
    pub apply: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub precondition: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

pub(crate) struct Settings {
    pub wanted: usize,
    pub block: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Absolute residual bound for every wanted pair.
    pub tol: f64,
    /// Tighter absolute bound for wanted pairs below `polish_below`.
    pub polish_tol: f64,
    pub polish_below: f64,
}

pub(crate) struct Solution {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn apply_block(p: &Problem, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let y = (p.apply)(m.column(j).as_slice());
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// Orthonormal basis of the column span, dropping numerically dependent directions.
fn orthonormalize(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = s.clone();
    for mut c in s.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let mut basis = s;
    // two passes recover the accuracy lost to squaring the condition number
    for _ in 0..2 {
        let gram = basis.transpose() * &basis;
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 1e-12 * top)
            .collect();
        let mut t = DMatrix::zeros(basis.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let scale = 1.0 / eig.eigenvalues[i].sqrt();
            t.column_mut(c)
                .copy_from(&(eig.eigenvectors.column(i) * scale));
        }
        basis = &basis * t;
    }
    basis
}

fn ritz(
    s: &DMatrix<f64>,
    as_: &DMatrix<f64>,
    count: usize,
) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let g = s.transpose() * as_;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let count = count.min(order.len());
    let mut c = DMatrix::zeros(s.ncols(), count);
    for (j, &i) in order[..count].iter().enumerate() {
        c.column_mut(j).copy_from(&eig.eigenvectors.column(i));
    }
    let values = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    (values, s * &c, as_ * &c)
}

pub(crate) fn solve(p: &Problem, set: &Settings) -> Result<Solution> {
    let b = set.block.min(p.size);
    let mut rng = ChaCha8Rng::seed_from_u64(set.seed);
    let x0 = DMatrix::from_fn(p.size, b, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = orthonormalize(&x0);
    let ax0 = apply_block(p, &x0);
    let (mut theta, mut x, mut ax) = ritz(&x0, &ax0, b);
    let mut prev: Option<DMatrix<f64>> = None;
    let mut best_small = f64::INFINITY;
    let mut stalled = 0;
    let mut residuals = vec![f64::INFINITY; b];
    for _ in 0..set.max_iter {
        let mut r = ax.clone();
        for j in 0..x.ncols() {
            let mut col = r.column_mut(j);
            col.axpy(-theta[j], &x.column(j), 1.0);
            residuals[j] = col.norm();
        }
        let wanted = set.wanted.min(x.ncols());
        let base_ok = residuals[..wanted].iter().all(|&r| r <= set.tol);
        let small_worst = (0..wanted)
            .filter(|&j| theta[j] < set.polish_below)
            .map(|j| residuals[j])
            .fold(0.0, f64::max);
        if small_worst == 0.0 {
            best_small = f64::INFINITY;
            stalled = 0;
        } else if small_worst < 0.9 * best_small {
            best_small = small_worst;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if base_ok && (small_worst <= set.polish_tol || stalled >= 15) {
            return Ok(Solution {
                values: theta[..wanted].to_vec(),
                vectors: x.columns(0, wanted).into_owned(),
            });
        }
        let mut w = DMatrix::zeros(p.size, r.ncols());
        for j in 0..r.ncols() {
            let z = (p.precondition)(r.column(j).as_slice());
            w.column_mut(j).copy_from_slice(&z);
        }
        let mut blocks = vec![x.clone(), w];
        if let Some(pm) = &prev {
            blocks.push(pm.clone());
        }
        let cols: usize = blocks.iter().map(|m| m.ncols()).sum();
        let mut s = DMatrix::zeros(p.size, cols);
        let mut at = 0;
        for m in &blocks {
            s.columns_mut(at, m.ncols()).copy_from(m);
            at += m.ncols();
        }
        let s = orthonormalize(&s);
        let as_ = apply_block(p, &s);
        let (t_new, x_new, ax_new) = ritz(&s, &as_, b);
        // new direction: the part of the update orthogonal to the old block
        let overlap = x.transpose() * &x_new;
        let pm = &x_new - &x * overlap;
        prev = Some(orthonormalize(&pm));
        theta = t_new;
        x = x_new;
        ax = ax_new;
    }
    let wanted = set.wanted.min(x.ncols());
    Err(Error::NoConvergence {
        iterations: set.max_iter,
        worst_residual: residuals[..wanted].iter().copied().fold(0.0, f64::max),
    })
}
