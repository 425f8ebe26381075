use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{codifferential, dot, witten_d, DiscreteForm, Grid, Layout};
use crate::error::{Error, Result};
use crate::manifold::ClosedOneForm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// `δ(t) d(t) + d(t) δ(t)`.
    Composition,
    /// `-Σ∂² + t(-div α + 2 D_H) + t²|α|²` with `D_H` the derivation induced by `∇α`.
    Direct,
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composition" => Ok(Route::Composition),
            "direct" => Ok(Route::Direct),
            other => Err(Error::InvalidArgument(format!("unknown route `{other}`"))),
        }
    }
}

/// One nonzero entry of the zeroth-order derivation term.
#[derive(Clone, Copy, Debug)]
struct DerivTerm {
    src: usize,
    dst: usize,
    sign: f64,
    /// `∂_row α_col` selects the Hessian entry.
    row: usize,
    col: usize,
}

/// Matrix-free deformed Hodge Laplacian on degree-`q` forms, acting on stacked
/// component data.
pub struct WittenOperator {
    grid: Grid,
    q: usize,
    t: f64,
    alpha: ClosedOneForm,
    route: Route,
    alpha_grid: DiscreteForm,
    potential: Vec<f64>,
    jacobian: Vec<f64>,
    terms: Vec<DerivTerm>,
    norm: OnceLock<f64>,
}

impl std::fmt::Debug for WittenOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WittenOperator")
            .field("grid", &self.grid)
            .field("q", &self.q)
            .field("t", &self.t)
            .field("route", &self.route)
            .finish()
    }
}

impl WittenOperator {
    pub fn assemble(
        grid: &Grid,
        q: usize,
        t: f64,
        alpha: &ClosedOneForm,
        route: Route,
    ) -> Result<Self> {
        let n = grid.dim();
        if q > n {
            return Err(Error::InvalidArgument(format!(
                "degree {q} exceeds dimension {n}"
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
        }
        let alpha_grid = DiscreteForm::from_closed(grid, alpha)?;
        let points = grid.len();
        let mut potential = vec![0.0; points];
        let mut jacobian = vec![0.0; points * n * n];
        let mut defect: f64 = 0.0;
        for p in 0..points {
            let x = grid.point(p);
            let a = alpha.eval(&x);
            let jac = alpha.jacobian(&x);
            defect = defect.max(alpha.closedness_defect(&x));
            let div: f64 = (0..n).map(|i| jac[i * n + i]).sum();
            potential[p] = t * t * a.iter().map(|v| v * v).sum::<f64>() - t * div;
            jacobian[p * n * n..(p + 1) * n * n].copy_from_slice(&jac);
        }
        if defect > 1e-12 {
            return Err(Error::NonClosedForm(defect));
        }
        Ok(Self {
            grid: grid.clone(),
            q,
            t,
            alpha: alpha.clone(),
            route,
            alpha_grid,
            potential,
            jacobian,
            terms: derivation_terms(n, q),
            norm: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn alpha(&self) -> &ClosedOneForm {
        &self.alpha
    }

    pub fn route(&self) -> Route {
        self.route
    }

    /// Sampled `α`.
    pub fn alpha_grid(&self) -> &DiscreteForm {
        &self.alpha_grid
    }

    /// Length of a stacked vector.
    pub fn size(&self) -> usize {
        Layout::new(self.grid.dim(), self.q).len() * self.grid.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let form = DiscreteForm::from_data(&self.grid, self.q, x.to_vec())
            .expect("vector length matches operator");
        match self.route {
            Route::Composition => self.apply_composition(&form),
            Route::Direct => self.apply_direct(&form),
        }
        .into_data()
    }

    pub fn apply_form(&self, omega: &DiscreteForm) -> Result<DiscreteForm> {
        if omega.degree() != self.q || omega.data().len() != self.size() {
            return Err(Error::ShapeMismatch("form does not match operator".into()));
        }
        Ok(match self.route {
            Route::Composition => self.apply_composition(omega),
            Route::Direct => self.apply_direct(omega),
        })
    }

    /// `d(t)` on a stacked degree-`q` vector; `None` at top degree.
    pub fn d(&self, x: &[f64]) -> Option<Vec<f64>> {
        let form = DiscreteForm::from_data(&self.grid, self.q, x.to_vec()).ok()?;
        witten_d(&self.grid, &form, self.t, &self.alpha_grid)
            .ok()
            .map(DiscreteForm::into_data)
    }

    /// `δ(t)` on a stacked degree-`q` vector; `None` at degree zero.
    pub fn delta(&self, x: &[f64]) -> Option<Vec<f64>> {
        let form = DiscreteForm::from_data(&self.grid, self.q, x.to_vec()).ok()?;
        codifferential(&self.grid, &form, self.t, &self.alpha_grid)
            .ok()
            .map(DiscreteForm::into_data)
    }

    fn apply_composition(&self, omega: &DiscreteForm) -> DiscreteForm {
        let (g, t, a) = (&self.grid, self.t, &self.alpha_grid);
        let mut out = DiscreteForm::zeros(g, self.q).expect("degree checked");
        if let Ok(dw) = witten_d(g, omega, t, a) {
            out.axpy(1.0, &codifferential(g, &dw, t, a).expect("degree >= 1"))
                .expect("same shape");
        }
        if let Ok(cw) = codifferential(g, omega, t, a) {
            out.axpy(1.0, &witten_d(g, &cw, t, a).expect("degree < n"))
                .expect("same shape");
        }
        out
    }

    fn apply_direct(&self, omega: &DiscreteForm) -> DiscreteForm {
        let n = self.grid.dim();
        let points = self.grid.len();
        let mut out = omega.clone();
        for c in 0..omega.num_components() {
            let lap = self.grid.flat_laplacian(omega.component(c));
            let comp = out.component_mut(c);
            for ((o, l), v) in comp.iter_mut().zip(&lap).zip(&self.potential) {
                *o = -l + v * *o;
            }
        }
        let two_t = 2.0 * self.t;
        if two_t != 0.0 {
            for term in &self.terms {
                let src = omega.component(term.src);
                let w = two_t * term.sign;
                let dst = &mut out.data_mut()[term.dst * points..(term.dst + 1) * points];
                for p in 0..points {
                    dst[p] += w * self.jacobian[p * n * n + term.row * n + term.col] * src[p];
                }
            }
        }
        out
    }

    /// Largest eigenvalue estimate by power iteration from a fixed seed.
    pub fn norm_estimate(&self) -> f64 {
        *self.norm.get_or_init(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut x: Vec<f64> = (0..self.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut est = 0.0;
            for _ in 0..40 {
                let nx = dot(&x, &x).sqrt();
                x.iter_mut().for_each(|v| *v /= nx);
                let y = self.apply(&x);
                est = dot(&y, &y).sqrt();
                x = y;
            }
            est
        })
    }

    /// Dense matrix built column by column.
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.size();
        let mut mat = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            mat.column_mut(j).copy_from_slice(&col);
        }
        mat
    }

    /// Coordinate-list text dump, one `row col value` line per entry above `tol`.
    pub fn write_coo(&self, path: &Path, tol: f64) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = self.size();
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > tol {
                    writeln!(out, "{i} {j} {v:.17e}")?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Nonzero entries of the derivation `D_H` extending a matrix `H` from 1-forms to
/// `q`-forms: `D_H dx_I = Σ_r dx_{i_1} ∧ … ∧ (Σ_m H_{m i_r} dx_m) ∧ … ∧ dx_{i_q}`.
fn derivation_terms(n: usize, q: usize) -> Vec<DerivTerm> {
    let layout = Layout::new(n, q);
    let mut terms = Vec::new();
    for (src, &mask) in layout.masks().iter().enumerate() {
        for j in (0..n).filter(|&j| mask >> j & 1 == 1) {
            for m in 0..n {
                if m == j {
                    terms.push(DerivTerm {
                        src,
                        dst: src,
                        sign: 1.0,
                        row: m,
                        col: j,
                    });
                } else if mask >> m & 1 == 0 {
                    let (lo, hi) = (j.min(m), j.max(m));
                    let between =
                        (mask & ((1u32 << hi) - 1) & !((1u32 << (lo + 1)) - 1)).count_ones();
                    let sign = if between % 2 == 0 { 1.0 } else { -1.0 };
                    let dst = layout.position(mask & !(1 << j) | 1 << m);
                    terms.push(DerivTerm {
                        src,
                        dst,
                        sign,
                        row: m,
                        col: j,
                    });
                }
            }
        }
    }
    terms
}
