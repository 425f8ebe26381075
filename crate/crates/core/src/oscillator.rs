//! Model Witten Laplacians on `R^n`: the harmonic oscillator on `q`-forms around a
//! nondegenerate critical point of index `k`,
//!
//! `Δ_{q,k}(t) = -Σ ∂_i² + t² |x|² + t M_{q,k}`,
//!
//! with `M_{q,k}` diagonal in the basis `dx_I`, entry `ε_I^{q,k}`.
//! Index subsets are 1-based throughout this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub n: usize,
    pub k: usize,
    pub q: usize,
    pub t: f64,
}

impl OscillatorModel {
    pub fn new(n: usize, k: usize, q: usize, t: f64) -> Result<Self> {
        if n == 0 || k > n || q > n {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= k, q <= n and n >= 1, got n={n} k={k} q={q}"
            )));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t must be positive, got {t}"
            )));
        }
        Ok(Self { n, k, q, t })
    }
}

/// Sorted `(eigenvalue, multiplicity)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpectrum {
    pub entries: Vec<(f64, u64)>,
}

impl OscillatorSpectrum {
    pub fn kernel_dim(&self) -> u64 {
        self.entries
            .iter()
            .filter(|(e, _)| *e == 0.0)
            .map(|(_, m)| m)
            .sum()
    }

    /// Eigenvalues repeated by multiplicity, truncated to `count`.
    pub fn expanded(&self, count: usize) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|&(e, m)| std::iter::repeat(e).take(m as usize))
            .take(count)
            .collect()
    }
}

/// `ε_I^{q,k} = -n + 2k - 2q + 4 #{j : i_j ≥ k+1}` for a 1-based increasing subset `I`.
pub fn epsilon_shift(n: usize, k: usize, q: usize, subset: &[usize]) -> Result<i64> {
    if subset.len() != q {
        return Err(Error::ShapeMismatch(format!(
            "subset {subset:?} has size != q = {q}"
        )));
    }
    if subset.iter().any(|&i| i == 0 || i > n) || subset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "subset {subset:?} is not increasing in 1..={n}"
        )));
    }
    let above = subset.iter().filter(|&&i| i > k).count() as i64;
    Ok(-(n as i64) + 2 * k as i64 - 2 * q as i64 + 4 * above)
}

/// Lowest `count` distinct eigenvalues with multiplicities.
///
/// In units of `2t` the eigenvalues are `s + k - q + 2c(I)`, where `s = |m|` has
/// multiplicity `C(s+n-1, n-1)` and `c(I)` counts entries of `I` above `k`.
pub fn oscillator_spectrum(model: &OscillatorModel, count: usize) -> OscillatorSpectrum {
    let OscillatorModel { n, k, q, t } = *model;
    let bases: Vec<i64> = subsets(n, q)
        .iter()
        .map(|s| (k as i64 - q as i64) + 2 * s.iter().filter(|&&i| i > k).count() as i64)
        .collect();
    let lowest = *bases.iter().min().expect("at least one subset");
    let entries = (0..count as i64)
        .map(|j| {
            let level = lowest + j;
            let mult = bases
                .iter()
                .filter(|&&b| b <= level)
                .map(|&b| binomial((level - b) as u64 + n as u64 - 1, n as u64 - 1))
                .sum();
            (2.0 * t * level as f64, mult)
        })
        .collect();
    OscillatorSpectrum { entries }
}

/// Normalized kernel element of `Δ_{q,q}(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub n: usize,
    pub t: f64,
    /// `(t/π)^{n/4}`.
    pub constant: f64,
    /// `a` in `e^{-a|x|²}`, equal to `t/2`.
    pub exponent: f64,
    /// `{1..q}`.
    pub components: Vec<usize>,
}

impl GroundState {
    /// Coefficient of `dx_1 ∧ … ∧ dx_q` at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.constant * (-self.exponent * r2).exp()
    }
}

pub fn ground_state_form(model: &OscillatorModel) -> Result<GroundState> {
    if model.q != model.k {
        return Err(Error::DegreeMismatch {
            q: model.q,
            k: model.k,
        });
    }
    Ok(GroundState {
        n: model.n,
        t: model.t,
        constant: (model.t / std::f64::consts::PI).powf(model.n as f64 / 4.0),
        exponent: model.t / 2.0,
        components: (1..=model.q).collect(),
    })
}

/// All increasing 1-based subsets of `{1..n}` of size `q`, lexicographic.
pub fn subsets(n: usize, q: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            if n - i + 1 < left {
                break;
            }
            cur.push(i);
            rec(i + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, q, &mut Vec::new(), &mut out);
    out
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_shift(1, 0, 0, &[]).unwrap(), -1);
        assert_eq!(epsilon_shift(2, 1, 1, &[1]).unwrap(), -2);
        assert_eq!(epsilon_shift(2, 1, 1, &[2]).unwrap(), 2);
        assert_eq!(epsilon_shift(2, 2, 2, &[1, 2]).unwrap(), -2);
        assert!(epsilon_shift(2, 1, 1, &[3]).is_err());
        assert!(epsilon_shift(2, 1, 2, &[2, 1]).is_err());
    }

    #[test]
    fn epsilon_lower_bound_only_attained_at_q_eq_k() {
        for n in 1..=4 {
            for k in 0..=n {
                for q in 0..=n {
                    for s in subsets(n, q) {
                        let e = epsilon_shift(n, k, q, &s).unwrap();
                        assert!(e >= -(n as i64));
                        if e == -(n as i64) {
                            assert_eq!(q, k);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn spectrum_examples() {
        let s = oscillator_spectrum(&OscillatorModel::new(1, 0, 0, 1.0).unwrap(), 3);
        assert_eq!(s.entries, vec![(0.0, 1), (2.0, 1), (4.0, 1)]);
        let s = oscillator_spectrum(&OscillatorModel::new(1, 1, 0, 1.0).unwrap(), 2);
        assert_eq!(s.entries, vec![(2.0, 1), (4.0, 1)]);
        let s = oscillator_spectrum(&OscillatorModel::new(2, 1, 1, 1.0).unwrap(), 1);
        assert_eq!(s.entries, vec![(0.0, 1)]);
    }

    #[test]
    fn spectrum_matches_brute_force_enumeration() {
        for n in 1..=3 {
            for k in 0..=n {
                for q in 0..=n {
                    let t = 1.5;
                    let got = oscillator_spectrum(&OscillatorModel::new(n, k, q, t).unwrap(), 4);
                    let mut all: Vec<i64> = Vec::new();
                    let bound = 12;
                    for s in subsets(n, q) {
                        let eps = epsilon_shift(n, k, q, &s).unwrap();
                        for_each_multi_index(n, bound, |m| {
                            all.push(m.iter().map(|&mi| 2 * mi as i64 + 1).sum::<i64>() + eps)
                        });
                    }
                    all.sort();
                    for &(e, mult) in &got.entries {
                        let level = (e / t).round() as i64;
                        assert_eq!((e / (2.0 * t)).fract(), 0.0);
                        let brute = all.iter().filter(|&&v| v == level).count() as u64;
                        assert_eq!(brute, mult, "n={n} k={k} q={q} level={level}");
                    }
                    assert_eq!(got.kernel_dim(), u64::from(q == k));
                }
            }
        }
    }

    fn for_each_multi_index(n: usize, bound: usize, mut f: impl FnMut(&[usize])) {
        let mut m = vec![0; n];
        loop {
            f(&m);
            let mut i = 0;
            loop {
                if i == n {
                    return;
                }
                m[i] += 1;
                if m[i] <= bound {
                    break;
                }
                m[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn ground_state_examples() {
        let g = ground_state_form(&OscillatorModel::new(1, 0, 0, 1.0).unwrap()).unwrap();
        assert!((g.constant - std::f64::consts::PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(g.exponent, 0.5);
        assert!(g.components.is_empty());
        let g = ground_state_form(&OscillatorModel::new(2, 1, 1, 4.0).unwrap()).unwrap();
        assert!((g.constant - (4.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(g.exponent, 2.0);
        assert_eq!(g.components, vec![1]);
        assert!(matches!(
            ground_state_form(&OscillatorModel::new(2, 1, 0, 1.0).unwrap()),
            Err(Error::DegreeMismatch { q: 0, k: 1 })
        ));
    }

    #[test]
    fn ground_state_has_unit_norm() {
        for (n, t) in [(1, 0.7), (2, 3.0), (3, 9.0)] {
            let g = ground_state_form(&OscillatorModel::new(n, n - 1, n - 1, t).unwrap()).unwrap();
            // separable: the squared norm is the n-th power of a 1D integral
            let half = 12.0 / t.sqrt();
            let m = 4000;
            let h = 2.0 * half / m as f64;
            let one_d: f64 = (0..=m)
                .map(|i| {
                    let x = -half + i as f64 * h;
                    let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                    w * (-2.0 * g.exponent * x * x).exp()
                })
                .sum::<f64>()
                * h;
            let norm2 = g.constant.powi(2) * one_d.powi(n as i32);
            assert!((norm2 - 1.0).abs() < 1e-8, "n={n} t={t} norm2={norm2}");
        }
    }
}
