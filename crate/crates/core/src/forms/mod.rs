//! Differential forms on periodic collocation grids.
//!
//! A degree-`q` form on an `n`-torus is stored as `C(n,q)` real grid arrays, one per
//! increasing index subset `I` (lexicographic order), stacked component-major. Grid
//! arrays are row-major with the last axis fastest. Derivatives are Fourier spectral.

mod interp;
mod operator;

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::manifold::{ClosedOneForm, SampleManifold};

pub use interp::TrigInterpolant;
pub use operator::{Route, WittenOperator};

/// Uniform periodic grid with cached FFT plans.
#[derive(Clone)]
pub struct Grid {
    manifold: SampleManifold,
    shape: Vec<usize>,
    axes: Vec<Axis>,
}

#[derive(Clone)]
struct Axis {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `i k w` per FFT bin, Nyquist zeroed.
    first: Vec<Complex64>,
    /// `-(k w)²` per FFT bin, Nyquist zeroed so that it equals `first²`.
    second: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("periods", &self.manifold.periods())
            .field("shape", &self.shape)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.manifold == other.manifold && self.shape == other.shape
    }
}

/// Signed wavenumber of FFT bin `j`, `None` for the Nyquist bin of an even grid.
pub(crate) fn wavenumber(j: usize, n: usize) -> Option<i64> {
    if 2 * j < n {
        Some(j as i64)
    } else if 2 * j == n {
        None
    } else {
        Some(j as i64 - n as i64)
    }
}

impl Grid {
    pub fn new(manifold: &SampleManifold, shape: &[usize]) -> Result<Self> {
        if shape.len() != manifold.dim() {
            return Err(Error::ShapeMismatch(format!(
                "grid shape {shape:?} on a {}-manifold",
                manifold.dim()
            )));
        }
        if let Some(&s) = shape.iter().find(|&&s| s < 16) {
            return Err(Error::InvalidArgument(format!(
                "grid needs >= 16 points per axis, got {s}"
            )));
        }
        let mut planner = FftPlanner::new();
        let axes = shape
            .iter()
            .zip(manifold.periods())
            .map(|(&n, &l)| {
                let w = 2.0 * std::f64::consts::PI / l;
                let ks: Vec<Option<i64>> = (0..n).map(|j| wavenumber(j, n)).collect();
                Axis {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                    first: ks
                        .iter()
                        .map(|k| Complex64::new(0.0, k.map_or(0.0, |k| k as f64 * w)))
                        .collect(),
                    second: ks
                        .iter()
                        .map(|k| k.map_or(0.0, |k| -(k as f64 * w).powi(2)))
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            manifold: manifold.clone(),
            shape: shape.to_vec(),
            axes,
        })
    }

    /// Same number of points on every axis.
    pub fn uniform(manifold: &SampleManifold, points: usize) -> Result<Self> {
        Self::new(manifold, &vec![points; manifold.dim()])
    }

    pub fn manifold(&self) -> &SampleManifold {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.manifold
            .periods()
            .iter()
            .zip(&self.shape)
            .map(|(l, &n)| l / n as f64)
            .collect()
    }

    /// Quadrature weight of every node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = flat;
        for a in (0..self.dim()).rev() {
            idx[a] = rest % self.shape[a];
            rest /= self.shape[a];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .zip(self.spacing())
            .map(|(&i, h)| i as f64 * h)
            .collect()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Applies a diagonal Fourier multiplier along one axis.
    fn along_axis(&self, data: &[f64], axis: usize, mult: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let n = self.shape[axis];
        let stride = self.stride(axis);
        let outer = self.len() / (n * stride);
        let ax = &self.axes[axis];
        let scale = 1.0 / n as f64;
        let mut out = vec![0.0; data.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![
            Complex64::new(0.0, 0.0);
            ax.forward
                .get_inplace_scratch_len()
                .max(ax.inverse.get_inplace_scratch_len())
        ];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(data[base + j * stride], 0.0);
                }
                ax.forward.process_with_scratch(&mut buf, &mut scratch);
                for (j, b) in buf.iter_mut().enumerate() {
                    *b *= mult(j) * scale;
                }
                ax.inverse.process_with_scratch(&mut buf, &mut scratch);
                for (j, b) in buf.iter().enumerate() {
                    out[base + j * stride] = b.re;
                }
            }
        }
        out
    }

    /// Spectral `∂/∂x_axis`.
    pub fn derivative(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let m = &self.axes[axis].first;
        self.along_axis(data, axis, |j| m[j])
    }

    /// Spectral `∂²/∂x_axis²`, identical to applying `derivative` twice.
    pub fn second_derivative(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let m = &self.axes[axis].second;
        self.along_axis(data, axis, |j| Complex64::new(m[j], 0.0))
    }

    /// `Σ ∂²/∂x_a²` on one scalar array.
    pub fn flat_laplacian(&self, data: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        for a in 0..self.dim() {
            for (o, v) in out.iter_mut().zip(self.second_derivative(data, a)) {
                *o += v;
            }
        }
        out
    }

    /// Inverse of `-Σ∂² + shift` on one scalar array; `shift > 0`.
    pub fn shifted_inverse_laplacian(&self, data: &[f64], shift: f64) -> Vec<f64> {
        let mut out = data.to_vec();
        let spectrum = self.fft_nd(&out, false);
        let mut spec = spectrum;
        for (flat, c) in spec.iter_mut().enumerate() {
            let idx = self.index(flat);
            let sym: f64 = idx
                .iter()
                .enumerate()
                .map(|(a, &j)| -self.axes[a].second[j])
                .sum();
            *c /= sym + shift;
        }
        let back = self.fft_nd_complex(spec, true);
        for (o, b) in out.iter_mut().zip(back) {
            *o = b.re;
        }
        out
    }

    /// Unnormalized n-dimensional DFT of a real array.
    pub(crate) fn fft_nd(&self, data: &[f64], inverse: bool) -> Vec<Complex64> {
        self.fft_nd_complex(
            data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            inverse,
        )
    }

    /// n-dimensional DFT; the inverse includes the `1/N` normalization.
    pub(crate) fn fft_nd_complex(&self, mut buf: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
        for axis in 0..self.dim() {
            let n = self.shape[axis];
            let stride = self.stride(axis);
            let outer = self.len() / (n * stride);
            let ax = &self.axes[axis];
            let plan = if inverse { &ax.inverse } else { &ax.forward };
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = buf[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, l) in line.iter().enumerate() {
                        buf[base + j * stride] = *l;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / self.len() as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
        }
        buf
    }
}

/// Index subsets of `{0..n-1}` of size `q` as bitmasks, lexicographic.
#[derive(Clone, Debug)]
pub struct Layout {
    n: usize,
    q: usize,
    masks: Vec<u32>,
    position: Vec<usize>,
}

impl Layout {
    pub fn new(n: usize, q: usize) -> Self {
        let masks: Vec<u32> = crate::oscillator::subsets(n, q)
            .iter()
            .map(|s| s.iter().fold(0u32, |m, &i| m | 1 << (i - 1)))
            .collect();
        let mut position = vec![usize::MAX; 1 << n];
        for (p, &m) in masks.iter().enumerate() {
            position[m as usize] = p;
        }
        Self {
            n,
            q,
            masks,
            position,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    pub fn position(&self, mask: u32) -> usize {
        self.position[mask as usize]
    }

    /// 0-based indices of a component.
    pub fn indices(&self, component: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.masks[component] >> i & 1 == 1)
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.q
    }
}

/// `(-1)^{#{j ∈ mask : j < i}}`: the sign of moving `dx_i` past the lower part of `dx_I`.
pub(crate) fn insertion_sign(mask: u32, i: usize) -> f64 {
    if (mask & ((1u32 << i) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `dx_I ∧ dx_J = sign · dx_{I∪J}` for disjoint `I`, `J`.
pub(crate) fn merge_sign(a: u32, b: u32) -> f64 {
    let mut inversions = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sampled degree-`q` form.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteForm {
    n: usize,
    q: usize,
    points: usize,
    data: Vec<f64>,
}

impl DiscreteForm {
    pub fn zeros(grid: &Grid, q: usize) -> Result<Self> {
        let n = grid.dim();
        if q > n {
            return Err(Error::InvalidArgument(format!(
                "degree {q} exceeds dimension {n}"
            )));
        }
        let len = Layout::new(n, q).len() * grid.len();
        Ok(Self {
            n,
            q,
            points: grid.len(),
            data: vec![0.0; len],
        })
    }

    /// Stacked component-major data.
    pub fn from_data(grid: &Grid, q: usize, data: Vec<f64>) -> Result<Self> {
        let mut f = Self::zeros(grid, q)?;
        if data.len() != f.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                f.data.len(),
                data.len()
            )));
        }
        f.data = data;
        Ok(f)
    }

    /// One closure per component, in lexicographic order.
    pub fn from_fns(grid: &Grid, q: usize, fns: &[&dyn Fn(&[f64]) -> f64]) -> Result<Self> {
        let layout = Layout::new(grid.dim(), q);
        if fns.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "need {} component functions, got {}",
                layout.len(),
                fns.len()
            )));
        }
        let data = fns.iter().flat_map(|f| grid.sample(f)).collect();
        Self::from_data(grid, q, data)
    }

    pub fn scalar(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            n: grid.dim(),
            q: 0,
            points: grid.len(),
            data: grid.sample(f),
        }
    }

    /// `f dx_1 ∧ … ∧ dx_n`.
    pub fn top(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            n: grid.dim(),
            q: grid.dim(),
            points: grid.len(),
            data: grid.sample(f),
        }
    }

    /// Components of a closed 1-form sampled at the nodes.
    pub fn from_closed(grid: &Grid, alpha: &ClosedOneForm) -> Result<Self> {
        if alpha.dim() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "1-form on {} dims, grid has {}",
                alpha.dim(),
                grid.dim()
            )));
        }
        let mut f = Self::zeros(grid, 1)?;
        for p in 0..grid.len() {
            for (i, a) in alpha.eval(&grid.point(p)).into_iter().enumerate() {
                f.data[i * grid.len() + p] = a;
            }
        }
        Ok(f)
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n, self.q)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c * self.points..(c + 1) * self.points]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.points..(c + 1) * self.points]
    }

    pub fn num_components(&self) -> usize {
        self.data.len() / self.points
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.q != other.q || self.points != other.points {
            return Err(Error::ShapeMismatch(format!(
                "degree {} on {} points vs degree {} on {} points",
                self.q, self.points, other.q, other.points
            )));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.n != grid.dim() || self.points != grid.len() {
            return Err(Error::ShapeMismatch(
                "form does not live on this grid".into(),
            ));
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: f64, x: &Self) -> Result<()> {
        self.same_shape(x)?;
        self.data
            .iter_mut()
            .zip(&x.data)
            .for_each(|(y, x)| *y += a * x);
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// Pointwise multiplication by a function.
    pub fn mul_pointwise(&mut self, f: &[f64]) {
        for c in 0..self.num_components() {
            self.component_mut(c)
                .iter_mut()
                .zip(f)
                .for_each(|(v, g)| *v *= g);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn exterior_d(grid: &Grid, omega: &DiscreteForm) -> Result<DiscreteForm> {
    omega.check_grid(grid)?;
    let (n, q) = (omega.n, omega.q);
    if q == n {
        return Err(Error::TopDegree(q));
    }
    let src = Layout::new(n, q);
    let dst = Layout::new(n, q + 1);
    let mut out = DiscreteForm::zeros(grid, q + 1)?;
    for (c, &mask) in src.masks().iter().enumerate() {
        for i in (0..n).filter(|&i| mask >> i & 1 == 0) {
            let d = grid.derivative(omega.component(c), i);
            let sign = insertion_sign(mask, i);
            let target = out.component_mut(dst.position(mask | 1 << i));
            target.iter_mut().zip(&d).for_each(|(t, v)| *t += sign * v);
        }
    }
    Ok(out)
}

/// Pointwise `a ∧ b`.
pub fn wedge(a: &DiscreteForm, b: &DiscreteForm) -> Result<DiscreteForm> {
    if a.n != b.n || a.points != b.points {
        return Err(Error::ShapeMismatch(
            "wedge of forms on different grids".into(),
        ));
    }
    let n = a.n;
    let q = a.q + b.q;
    if q > n {
        return Ok(DiscreteForm {
            n,
            q,
            points: a.points,
            data: vec![],
        });
    }
    let (la, lb, lc) = (a.layout(), b.layout(), Layout::new(n, q));
    let mut out = DiscreteForm {
        n,
        q,
        points: a.points,
        data: vec![0.0; lc.len() * a.points],
    };
    for (ca, &ma) in la.masks().iter().enumerate() {
        for (cb, &mb) in lb.masks().iter().enumerate() {
            if ma & mb != 0 {
                continue;
            }
            let sign = merge_sign(ma, mb);
            let pos = lc.position(ma | mb);
            let (xa, xb) = (a.component(ca), b.component(cb));
            let target = &mut out.data[pos * a.points..(pos + 1) * a.points];
            for ((t, u), v) in target.iter_mut().zip(xa).zip(xb) {
                *t += sign * u * v;
            }
        }
    }
    Ok(out)
}

/// Flat-metric Hodge star, `⋆dx_I = sign(I, I^c) dx_{I^c}`.
pub fn hodge_star(omega: &DiscreteForm) -> DiscreteForm {
    let n = omega.n;
    let full = (1u32 << n) - 1;
    let src = omega.layout();
    let dst = Layout::new(n, n - omega.q);
    let mut out = DiscreteForm {
        n,
        q: n - omega.q,
        points: omega.points,
        data: vec![0.0; omega.data.len()],
    };
    for (c, &mask) in src.masks().iter().enumerate() {
        let comp = full & !mask;
        let sign = merge_sign(mask, comp);
        let pos = dst.position(comp);
        out.component_mut(pos)
            .iter_mut()
            .zip(omega.component(c))
            .for_each(|(o, v)| *o = sign * v);
    }
    out
}

/// `d(t)ω = dω + t α∧ω`, with `alpha` the sampled 1-form.
pub fn witten_d(
    grid: &Grid,
    omega: &DiscreteForm,
    t: f64,
    alpha: &DiscreteForm,
) -> Result<DiscreteForm> {
    let mut out = exterior_d(grid, omega)?;
    if t != 0.0 {
        out.axpy(t, &wedge(alpha, omega)?)?;
    }
    Ok(out)
}

/// `δ(t) = (-1)^{n(q+1)+1} ⋆ d(-t) ⋆` on `q`-forms, the formal adjoint of `d(t)`.
pub fn codifferential(
    grid: &Grid,
    omega: &DiscreteForm,
    t: f64,
    alpha: &DiscreteForm,
) -> Result<DiscreteForm> {
    let (n, q) = (omega.n, omega.q);
    if q == 0 {
        return Err(Error::BottomDegree);
    }
    let mut out = hodge_star(&witten_d(grid, &hodge_star(omega), -t, alpha)?);
    if (n * (q + 1) + 1) % 2 == 1 {
        out.scale(-1.0);
    }
    Ok(out)
}

/// `ι_X ω` for a vector field given as `n` grid arrays.
pub fn interior_product(x: &[Vec<f64>], omega: &DiscreteForm) -> Result<DiscreteForm> {
    let (n, q) = (omega.n, omega.q);
    if q == 0 {
        return Err(Error::BottomDegree);
    }
    if x.len() != n || x.iter().any(|c| c.len() != omega.points) {
        return Err(Error::ShapeMismatch("vector field shape".into()));
    }
    let src = omega.layout();
    let dst = Layout::new(n, q - 1);
    let mut out = DiscreteForm {
        n,
        q: q - 1,
        points: omega.points,
        data: vec![0.0; dst.len() * omega.points],
    };
    for (c, &mask) in src.masks().iter().enumerate() {
        for i in (0..n).filter(|&i| mask >> i & 1 == 1) {
            let sign = insertion_sign(mask, i);
            let pos = dst.position(mask & !(1 << i));
            let target = &mut out.data[pos * omega.points..(pos + 1) * omega.points];
            for ((t, xi), w) in target.iter_mut().zip(&x[i]).zip(omega.component(c)) {
                *t += sign * xi * w;
            }
        }
    }
    Ok(out)
}

/// Cartan formula `L_X = d ι_X + ι_X d`.
pub fn lie_derivative(grid: &Grid, x: &[Vec<f64>], omega: &DiscreteForm) -> Result<DiscreteForm> {
    let (n, q) = (omega.n, omega.q);
    let mut out = DiscreteForm::zeros(grid, q)?;
    if q > 0 {
        out.axpy(1.0, &exterior_d(grid, &interior_product(x, omega)?)?)?;
    }
    if q < n {
        out.axpy(1.0, &interior_product(x, &exterior_d(grid, omega)?)?)?;
    }
    Ok(out)
}

/// `L²` inner product with the flat volume.
pub fn inner_product(grid: &Grid, a: &DiscreteForm, b: &DiscreteForm) -> Result<f64> {
    a.same_shape(b)?;
    a.check_grid(grid)?;
    Ok(grid.cell_volume() * dot(&a.data, &b.data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ScalarField;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn t2(points: usize) -> Grid {
        Grid::uniform(&SampleManifold::standard(2).unwrap(), points).unwrap()
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid::uniform(&SampleManifold::circle(), 32).unwrap();
        let f = DiscreteForm::scalar(&g, |x| x[0].sin());
        let df = exterior_d(&g, &f).unwrap();
        for p in 0..g.len() {
            assert_abs_diff_eq!(df.data()[p], g.point(p)[0].cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn constant_is_closed_and_top_degree_errors() {
        let g = t2(16);
        let f = DiscreteForm::scalar(&g, |_| 3.0);
        assert!(exterior_d(&g, &f).unwrap().max_abs() < 1e-14);
        let top = DiscreteForm::top(&g, |x| x[0]);
        assert!(matches!(exterior_d(&g, &top), Err(Error::TopDegree(2))));
    }

    #[test]
    fn y_only_one_form_is_closed() {
        let g = t2(17);
        let w = DiscreteForm::from_fns(&g, 1, &[&|_| 0.0, &|x| (2.0 * x[1]).cos() + x[1].sin()])
            .unwrap();
        assert!(exterior_d(&g, &w).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn star_signs_in_two_dimensions() {
        let g = t2(16);
        let dx = DiscreteForm::from_fns(&g, 1, &[&|_| 1.0, &|_| 0.0]).unwrap();
        let s = hodge_star(&dx);
        assert_eq!(s.component(0)[0], 0.0);
        assert_eq!(s.component(1)[0], 1.0);
        let dy = DiscreteForm::from_fns(&g, 1, &[&|_| 0.0, &|_| 1.0]).unwrap();
        let s = hodge_star(&dy);
        assert_eq!(s.component(0)[0], -1.0);
        let one = DiscreteForm::scalar(&g, |_| 1.0);
        assert_eq!(hodge_star(&one).degree(), 2);
        assert_eq!(hodge_star(&one).data()[0], 1.0);
    }

    #[test]
    fn star_signs_on_circle() {
        let g = Grid::uniform(&SampleManifold::circle(), 16).unwrap();
        let one = DiscreteForm::scalar(&g, |_| 1.0);
        let s = hodge_star(&one);
        assert_eq!((s.degree(), s.data()[0]), (1, 1.0));
        let back = hodge_star(&s);
        assert_eq!((back.degree(), back.data()[0]), (0, 1.0));
    }

    #[test]
    fn star_star_sign_table_up_to_four() {
        for n in 1..=4usize {
            let m = SampleManifold::standard(n).unwrap();
            let g = Grid::uniform(&m, 16).unwrap();
            for q in 0..=n {
                let mut f = DiscreteForm::zeros(&g, q).unwrap();
                for (i, v) in f.data_mut().iter_mut().enumerate() {
                    *v = (i as f64 * 0.37).sin();
                }
                let ss = hodge_star(&hodge_star(&f));
                let sign = if q * (n - q) % 2 == 0 { 1.0 } else { -1.0 };
                for (a, b) in ss.data().iter().zip(f.data()) {
                    assert_eq!(*a, sign * b);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_codifferential() {
        let g = Grid::uniform(&SampleManifold::circle(), 64).unwrap();
        let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
        let alpha = DiscreteForm::from_closed(&g, &ClosedOneForm::exact(h)).unwrap();
        let t = 1.7;
        let w = DiscreteForm::top(&g, |x| (2.0 * x[0]).sin() + 0.5);
        let got = codifferential(&g, &w, t, &alpha).unwrap();
        for p in 0..g.len() {
            let x = g.point(p)[0];
            // -g' + t h' g with h = cos
            let expect = -2.0 * (2.0 * x).cos() + t * (-x.sin()) * ((2.0 * x).sin() + 0.5);
            assert_abs_diff_eq!(got.data()[p], expect, epsilon = 1e-12);
        }
        let f = DiscreteForm::scalar(&g, |_| 1.0);
        assert!(matches!(
            codifferential(&g, &f, t, &alpha),
            Err(Error::BottomDegree)
        ));
    }

    #[test]
    fn volume_form_is_coclosed() {
        let g = t2(16);
        let alpha = DiscreteForm::zeros(&g, 1).unwrap();
        let vol = hodge_star(&DiscreteForm::scalar(&g, |_| 1.0));
        assert!(codifferential(&g, &vol, 0.0, &alpha).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn witten_d_kills_ground_state() {
        let g = Grid::uniform(&SampleManifold::circle(), 128).unwrap();
        let h = ScalarField::from_catalog("cos-sum", &[], g.manifold()).unwrap();
        let alpha = DiscreteForm::from_closed(&g, &ClosedOneForm::exact(h)).unwrap();
        let t = 3.0;
        let f = DiscreteForm::scalar(&g, |x| (-t * x[0].cos()).exp());
        assert!(witten_d(&g, &f, t, &alpha).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn witten_d_is_conjugated_d() {
        let g = t2(48);
        let h = ScalarField::from_catalog("torus-tilted", &[0.3], g.manifold()).unwrap();
        let alpha = DiscreteForm::from_closed(&g, &ClosedOneForm::exact(h.clone())).unwrap();
        let t = 0.8;
        let w = DiscreteForm::from_fns(
            &g,
            1,
            &[&|x| x[0].sin() * x[1].cos(), &|x| (x[0] + 2.0 * x[1]).cos()],
        )
        .unwrap();
        let lhs = witten_d(&g, &w, t, &alpha).unwrap();
        let mut conj = w.clone();
        let eth = g.sample(|x| (t * h.value(x)).exp());
        conj.mul_pointwise(&eth);
        let mut rhs = exterior_d(&g, &conj).unwrap();
        rhs.mul_pointwise(&eth.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
        let mut diff = lhs;
        diff.axpy(-1.0, &rhs).unwrap();
        assert!(diff.max_abs() < 1e-10);
    }

    #[test]
    fn interior_product_basics() {
        let g = t2(16);
        let f = DiscreteForm::top(&g, |x| 1.0 + x[0]);
        let ex = vec![vec![1.0; g.len()], vec![0.0; g.len()]];
        let r = interior_product(&ex, &f).unwrap();
        assert_eq!(r.component(0)[5], 0.0);
        assert_eq!(r.component(1)[5], f.data()[5]);
        let x = vec![g.sample(|p| p[0].cos()), g.sample(|p| p[1].sin())];
        let twice = interior_product(&x, &interior_product(&x, &f).unwrap()).unwrap();
        assert!(twice.max_abs() < 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let g = t2(16);
        let one = DiscreteForm::scalar(&g, |_| 1.0);
        assert_abs_diff_eq!(
            inner_product(&g, &one, &one).unwrap(),
            4.0 * PI * PI,
            epsilon = 1e-12
        );
        let dx = DiscreteForm::from_fns(&g, 1, &[&|_| 1.0, &|_| 0.0]).unwrap();
        let dy = DiscreteForm::from_fns(&g, 1, &[&|_| 0.0, &|_| 1.0]).unwrap();
        assert_eq!(inner_product(&g, &dx, &dy).unwrap(), 0.0);
        assert!(matches!(
            inner_product(&g, &one, &dx),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn lie_derivative_of_function() {
        let g = t2(32);
        let f = DiscreteForm::scalar(&g, |x| x[0].sin() * x[1].sin());
        let x = vec![g.sample(|p| p[1].cos()), vec![2.0; g.len()]];
        let l = lie_derivative(&g, &x, &f).unwrap();
        for p in 0..g.len() {
            let z = g.point(p);
            let expect = z[1].cos() * z[0].cos() * z[1].sin() + 2.0 * z[0].sin() * z[1].cos();
            assert_abs_diff_eq!(l.data()[p], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn shifted_inverse_undoes_operator() {
        let g = Grid::new(&SampleManifold::torus(vec![3.0, 5.0]).unwrap(), &[17, 20]).unwrap();
        let f = g.sample(|x| (2.0 * PI * x[0] / 3.0).sin() + (4.0 * PI * x[1] / 5.0).cos());
        let u = g.shifted_inverse_laplacian(&f, 2.0);
        let lap = g.flat_laplacian(&u);
        for ((a, b), c) in u.iter().zip(&lap).zip(&f) {
            assert_abs_diff_eq!(-b + 2.0 * a, *c, epsilon = 1e-12);
        }
    }
}
