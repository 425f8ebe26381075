use rustfft::num_complex::Complex64;

use super::{wavenumber, Grid};

/// Exact trigonometric interpolant of grid data, evaluable anywhere.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    /// Per axis, `2π k / L` for every bin.
    freqs: Vec<Vec<f64>>,
    /// Retained `(bin index per axis, coefficient)`.
    coeffs: Vec<(Vec<u32>, Complex64)>,
}

impl TrigInterpolant {
    pub fn new(grid: &Grid, data: &[f64]) -> Self {
        let spec = grid.fft_nd(data, false);
        let scale = 1.0 / grid.len() as f64;
        let total: f64 = spec.iter().map(|c| c.norm()).sum::<f64>() * scale;
        let coeffs = spec
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() * scale > 1e-16 * total)
            .map(|(flat, c)| {
                (
                    grid.index(flat).into_iter().map(|j| j as u32).collect(),
                    c * scale,
                )
            })
            .collect();
        let freqs = grid
            .shape()
            .iter()
            .zip(grid.manifold().periods())
            .map(|(&n, &l)| {
                let w = 2.0 * std::f64::consts::PI / l;
                // the Nyquist bin is read as a cosine through the real part
                (0..n)
                    .map(|j| wavenumber(j, n).unwrap_or(n as i64 / 2) as f64 * w)
                    .collect()
            })
            .collect();
        Self { freqs, coeffs }
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let phases: Vec<Vec<Complex64>> = self
            .freqs
            .iter()
            .zip(x)
            .map(|(f, &xi)| {
                f.iter()
                    .map(|k| Complex64::from_polar(1.0, k * xi))
                    .collect()
            })
            .collect();
        self.coeffs
            .iter()
            .map(|(idx, c)| {
                let mut z = *c;
                for (a, &j) in idx.iter().enumerate() {
                    z *= phases[a][j as usize];
                }
                z.re
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::SampleManifold;

    #[test]
    fn reproduces_band_limited_function_off_grid() {
        let m = SampleManifold::torus(vec![2.0, 3.0]).unwrap();
        let w = |x: &[f64]| {
            let (a, b) = (
                std::f64::consts::PI * x[0],
                2.0 * std::f64::consts::PI * x[1] / 3.0,
            );
            (3.0 * a).sin() * b.cos() + 0.2 * (a - 2.0 * b).cos() + 1.0
        };
        for shape in [[16, 17], [17, 16]] {
            let g = Grid::new(&m, &shape).unwrap();
            let it = TrigInterpolant::new(&g, &g.sample(w));
            for x in [[0.123, 2.7], [1.9, 0.01]] {
                assert!((it.eval(&x) - w(&x)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn matches_nodes_with_nyquist_content() {
        let g = Grid::uniform(&SampleManifold::circle(), 16).unwrap();
        let data: Vec<f64> = (0..16)
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } * 0.5 + j as f64 * 0.01)
            .collect();
        let it = TrigInterpolant::new(&g, &data);
        for (p, v) in data.iter().enumerate() {
            assert!((it.eval(&g.point(p)) - v).abs() < 1e-13);
        }
    }
}
