//! Gradient flow shooting, signed connecting orbits, the Morse complex and its
//! cohomology, and the Morse inequalities.
//!
//! Trajectories run in unwrapped coordinates on `R^n`; a capture records the critical
//! point together with the lattice translate it was reached at, so two orbits ending
//! at the same point from different sides stay distinguishable.

mod linalg;

use serde::{Deserialize, Serialize};

pub use linalg::{integer_rank, matmul};

use crate::error::{Error, Result};
use crate::manifold::{CriticalPoint, ScalarField};
use crate::ode::{integrate, OdeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Along `-grad h`.
    Forward,
    /// Along `+grad h`.
    Backward,
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub rtol: f64,
    /// `None` means `1e-4 · min(periods)`.
    pub capture_radius: Option<f64>,
    pub max_time: f64,
    /// Angular resolution of the index-2 direction scan.
    pub scan_directions: usize,
    pub angle_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            capture_radius: None,
            max_time: 1e3,
            scan_directions: 256,
            angle_tol: 1e-10,
        }
    }
}

impl FlowOptions {
    pub fn capture_radius(&self, field: &ScalarField) -> f64 {
        self.capture_radius
            .unwrap_or(1e-4 * field.manifold().min_period())
    }
}

/// Which critical points may end a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Capture {
    Any,
    /// Minima for forward flow, maxima for backward flow.
    SinksOnly,
}

/// Critical point reached at a lattice translate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Landing {
    pub point: usize,
    pub shift: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Vec<f64>,
    pub direction: Direction,
    pub limit: Landing,
    /// Unwrapped samples `(time, point)`.
    pub path: Vec<(f64, Vec<f64>)>,
    pub arrival_distance: f64,
}

/// Nearest lattice translate of `p` to `x`, as `(distance, shift)`.
pub(crate) fn nearest_translate(field: &ScalarField, p: &[f64], x: &[f64]) -> (f64, Vec<i64>) {
    let periods = field.manifold().periods();
    let shift: Vec<i64> = x
        .iter()
        .zip(p)
        .zip(periods)
        .map(|((xi, pi), l)| ((xi - pi) / l).round() as i64)
        .collect();
    let d2: f64 = x
        .iter()
        .zip(p)
        .zip(periods)
        .zip(&shift)
        .map(|(((xi, pi), l), &s)| (xi - pi - s as f64 * l).powi(2))
        .sum();
    (d2.sqrt(), shift)
}

pub fn translate(field: &ScalarField, p: &[f64], shift: &[i64]) -> Vec<f64> {
    p.iter()
        .zip(field.manifold().periods())
        .zip(shift)
        .map(|((pi, l), &s)| pi + s as f64 * l)
        .collect()
}

/// Integrates the gradient flow from `start` until it enters the capture ball of an
/// admissible critical point.
pub fn shoot(
    field: &ScalarField,
    points: &[CriticalPoint],
    start: &[f64],
    direction: Direction,
    capture: Capture,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let n = field.manifold().dim();
    let radius = opts.capture_radius(field);
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let sink_index = match direction {
        Direction::Forward => 0,
        Direction::Backward => n,
    };
    let admissible: Vec<usize> = (0..points.len())
        .filter(|&i| capture == Capture::Any || points[i].index == sink_index)
        .collect();
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        for (o, g) in out.iter_mut().zip(field.gradient(y)) {
            *o = sign * g;
        }
    };
    let mut path = Vec::new();
    let mut landing: Option<(Landing, f64)> = None;
    let mut observer = |t: f64, y: &[f64]| {
        path.push((t, y.to_vec()));
        for &i in &admissible {
            let (d, shift) = nearest_translate(field, &points[i].coords, y);
            if d < radius {
                landing = Some((Landing { point: i, shift }, d));
                return true;
            }
        }
        false
    };
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: 1e-12,
        h_init: 1e-3,
        h_max: 0.5,
        max_steps: 5_000_000,
    };
    integrate(&rhs, 0.0, start, opts.max_time, &ode, &mut observer);
    match landing {
        Some((limit, arrival_distance)) => Ok(Trajectory {
            start: start.to_vec(),
            direction,
            limit,
            path,
            arrival_distance,
        }),
        None => Err(Error::NoCapture {
            max_time: opts.max_time,
        }),
    }
}

/// Ordered unstable frame per critical point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationChoice {
    pub frames: Vec<Vec<Vec<f64>>>,
}

impl OrientationChoice {
    /// Unstable Hessian eigenvectors in eigenvalue order, first nonzero coordinate positive.
    pub fn standard(points: &[CriticalPoint]) -> Self {
        Self {
            frames: points.iter().map(|p| p.unstable_dirs().to_vec()).collect(),
        }
    }

    /// Reverses the orientation at one critical point.
    pub fn flipped(&self, point: usize) -> Self {
        let mut out = self.clone();
        if let Some(v) = out.frames[point].first_mut() {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        out
    }

    /// `±1`, the orientation of a full-dimensional frame relative to the coordinates.
    pub fn frame_sign(&self, point: usize) -> f64 {
        let f = &self.frames[point];
        match f.len() {
            1 if f[0].len() == 1 => f[0][0].signum(),
            2 => (f[0][0] * f[1][1] - f[0][1] * f[1][0]).signum(),
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectingOrbit {
    pub upper: usize,
    pub lower: usize,
    /// Lattice translate of `lower` the orbit ends at, relative to `upper`'s representative.
    pub shift: Vec<i64>,
    pub sign: i64,
    /// Unstable direction of `upper` the orbit leaves along.
    pub exit: Vec<f64>,
    /// Forward from `upper` for index one; backward from `lower` for index two.
    pub trajectory: Trajectory,
}

fn check_dim(field: &ScalarField) -> Result<usize> {
    let n = field.manifold().dim();
    if n > 2 {
        return Err(Error::InvalidArgument(format!(
            "trajectory counting needs dimension <= 2, got {n}"
        )));
    }
    Ok(n)
}

fn seed_radius(field: &ScalarField, opts: &FlowOptions) -> f64 {
    2.0 * opts.capture_radius(field)
}

/// All orbits from `x` (index `k ≥ 1`) down to critical points of index `k − 1`.
pub fn orbits_from(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &FlowOptions,
) -> Result<Vec<ConnectingOrbit>> {
    check_dim(field)?;
    match points[x].index {
        0 => Ok(vec![]),
        1 => index_one_orbits(field, points, x, orient, opts),
        2 => index_two_orbits(field, points, x, orient, opts),
        k => Err(Error::InvalidArgument(format!("index {k} not supported"))),
    }
}

/// Orbits from `x` to `y`, with `index(x) = index(y) + 1`.
pub fn connecting_orbits(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    y: usize,
    orient: &OrientationChoice,
    opts: &FlowOptions,
) -> Result<Vec<ConnectingOrbit>> {
    if points[x].index != points[y].index + 1 {
        return Err(Error::InvalidArgument(
            "connecting orbits need adjacent indices".into(),
        ));
    }
    Ok(orbits_from(field, points, x, orient, opts)?
        .into_iter()
        .filter(|o| o.lower == y)
        .collect())
}

fn index_one_orbits(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &FlowOptions,
) -> Result<Vec<ConnectingOrbit>> {
    let u = &orient.frames[x][0];
    let r = seed_radius(field, opts);
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let exit: Vec<f64> = u.iter().map(|c| sign * c).collect();
        let start: Vec<f64> = points[x]
            .coords
            .iter()
            .zip(&exit)
            .map(|(p, e)| p + r * e)
            .collect();
        let traj = shoot(
            field,
            points,
            &start,
            Direction::Forward,
            Capture::Any,
            opts,
        )?;
        let lower = traj.limit.point;
        if points[lower].index != 0 {
            return Err(Error::NonTransversal(format!(
                "unstable ray of point {x} ends at point {lower} of index {}",
                points[lower].index
            )));
        }
        out.push(ConnectingOrbit {
            upper: x,
            lower,
            shift: traj.limit.shift.clone(),
            sign: sign as i64,
            exit,
            trajectory: traj,
        });
    }
    Ok(out)
}

// stable branches of each saddle traced backward; maxima attract the reversed flow
fn index_two_orbits(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &FlowOptions,
) -> Result<Vec<ConnectingOrbit>> {
    let frame = &orient.frames[x];
    let frame_sign = orient.frame_sign(x);
    let r = seed_radius(field, opts);
    let mut out: Vec<(f64, ConnectingOrbit)> = Vec::new();
    for s in (0..points.len()).filter(|&i| points[i].index == 1) {
        let v = &points[s].stable_dirs()[0];
        for branch in [1.0, -1.0] {
            let start: Vec<f64> = points[s]
                .coords
                .iter()
                .zip(v)
                .map(|(p, c)| p + branch * r * c)
                .collect();
            let traj = shoot(
                field,
                points,
                &start,
                Direction::Backward,
                Capture::Any,
                opts,
            )?;
            let top = traj.limit.point;
            if points[top].index != 2 {
                return Err(Error::NonTransversal(format!(
                    "stable ray of point {s} ends at point {top} of index {}",
                    points[top].index
                )));
            }
            if top != x {
                continue;
            }
            let approach: Vec<f64> = v.iter().map(|c| -branch * c).collect();
            let u = &orient.frames[s][0];
            let det = approach[0] * u[1] - approach[1] * u[0];
            let sign = (frame_sign * det.signum()) as i64;
            let centre = translate(field, &points[x].coords, &traj.limit.shift);
            let last = &traj.path.last().expect("nonempty path").1;
            let d: Vec<f64> = last.iter().zip(&centre).map(|(a, c)| a - c).collect();
            let norm = d.iter().map(|c| c * c).sum::<f64>().sqrt();
            let exit: Vec<f64> = d.iter().map(|c| c / norm).collect();
            let dot = |w: &[f64]| exit.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let phi = dot(&frame[1])
                .atan2(dot(&frame[0]))
                .rem_euclid(std::f64::consts::TAU);
            let shift = traj.limit.shift.iter().map(|k| -k).collect();
            out.push((
                phi,
                ConnectingOrbit {
                    upper: x,
                    lower: s,
                    shift,
                    sign,
                    exit,
                    trajectory: traj,
                },
            ));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out.into_iter().map(|(_, o)| o).collect())
}

/// Angles on the circle `center + radius·(cos φ u1 + sin φ u2)` whose forward orbits
/// reach a saddle, each with its trajectory, in increasing angle.
pub(crate) fn separatrix_scan(
    field: &ScalarField,
    points: &[CriticalPoint],
    center: &[f64],
    u1: &[f64],
    u2: &[f64],
    radius: f64,
    opts: &FlowOptions,
) -> Result<Vec<(f64, Trajectory)>> {
    let seed = |phi: f64| -> Vec<f64> {
        (0..2)
            .map(|i| center[i] + radius * (phi.cos() * u1[i] + phi.sin() * u2[i]))
            .collect()
    };
    // `None`: the orbit never reaches a minimum, so it runs into a saddle
    let sink = |phi: f64| -> Result<Option<Landing>> {
        match shoot(
            field,
            points,
            &seed(phi),
            Direction::Forward,
            Capture::SinksOnly,
            opts,
        ) {
            Ok(t) => Ok(Some(t.limit)),
            Err(Error::NoCapture { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let m = opts.scan_directions;
    // half-step offset keeps symmetric separatrices off the scan nodes
    let angles: Vec<f64> = (0..m)
        .map(|j| (j as f64 + 0.5) * std::f64::consts::TAU / m as f64)
        .collect();
    let fates = angles
        .iter()
        .map(|&a| match sink(a)? {
            Some(l) => Ok(l),
            None => sink(a + 1e3 * opts.angle_tol)?.ok_or(Error::NoCapture {
                max_time: opts.max_time,
            }),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut separatrices: Vec<(f64, Trajectory)> = Vec::new();
    for j in 0..m {
        let (a, b) = (&fates[j], &fates[(j + 1) % m]);
        if a == b {
            continue;
        }
        let mut lo = angles[j];
        let mut hi = if j + 1 == m {
            angles[0] + std::f64::consts::TAU
        } else {
            angles[j + 1]
        };
        while hi - lo > opts.angle_tol {
            let mid = 0.5 * (lo + hi);
            match sink(mid)? {
                Some(l) if l == *a => lo = mid,
                Some(_) => hi = mid,
                None => {
                    lo = mid;
                    hi = mid;
                }
            }
        }
        let mid = 0.5 * (lo + hi);
        let traj = shoot(
            field,
            points,
            &seed(mid),
            Direction::Forward,
            Capture::Any,
            opts,
        )?;
        separatrices.push((mid, traj));
    }
    Ok(separatrices)
}

/// Smallest periodic distance between two distinct critical points.
pub fn min_separation(field: &ScalarField, points: &[CriticalPoint]) -> f64 {
    let m = field.manifold();
    let mut best = m.min_period();
    for i in 0..points.len() {
        for j in 0..i {
            best = best.min(m.distance(&points[i].coords, &points[j].coords));
        }
    }
    best
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorseComplex {
    pub points: Vec<CriticalPoint>,
    /// Per degree, indices into `points` in increasing order.
    pub generators: Vec<Vec<usize>>,
    /// `incidence[q]` has rows `Cr_q` and columns `Cr_{q-1}`; `incidence[0]` is empty.
    pub incidence: Vec<Vec<Vec<i64>>>,
    pub orbits: Vec<ConnectingOrbit>,
    pub orientation: OrientationChoice,
}

impl MorseComplex {
    pub fn dim(&self) -> usize {
        self.generators.len() - 1
    }

    pub fn counts(&self) -> Vec<usize> {
        self.generators.iter().map(Vec::len).collect()
    }

    /// Largest entry of `I_{q+1} · I_q` over all `q`.
    pub fn boundary_squared_defect(&self) -> i64 {
        let mut worst = 0;
        for q in 1..self.dim() {
            for row in matmul(&self.incidence[q + 1], &self.incidence[q]) {
                for v in row {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }
}

pub fn build_morse_complex(
    field: &ScalarField,
    points: &[CriticalPoint],
    orient: &OrientationChoice,
    opts: &FlowOptions,
) -> Result<MorseComplex> {
    let n = check_dim(field)?;
    let generators: Vec<Vec<usize>> = (0..=n)
        .map(|q| {
            (0..points.len())
                .filter(|&i| points[i].index == q)
                .collect()
        })
        .collect();
    let mut orbits = Vec::new();
    for x in 0..points.len() {
        orbits.extend(orbits_from(field, points, x, orient, opts)?);
    }
    let mut incidence = vec![vec![]];
    for q in 1..=n {
        let mut mat = vec![vec![0i64; generators[q - 1].len()]; generators[q].len()];
        for o in orbits.iter().filter(|o| points[o.upper].index == q) {
            let r = generators[q]
                .iter()
                .position(|&g| g == o.upper)
                .expect("generator");
            let c = generators[q - 1]
                .iter()
                .position(|&g| g == o.lower)
                .expect("generator");
            mat[r][c] += o.sign;
        }
        incidence.push(mat);
    }
    let complex = MorseComplex {
        points: points.to_vec(),
        generators,
        incidence,
        orbits,
        orientation: orient.clone(),
    };
    let defect = complex.boundary_squared_defect();
    if defect != 0 {
        return Err(Error::NonTransversal(format!(
            "boundary squared has entry {defect}"
        )));
    }
    Ok(complex)
}

/// Betti numbers `β_q = m_q − rank I_{q+1} − rank I_q`.
pub fn cohomology(complex: &MorseComplex) -> Vec<usize> {
    betti_from_incidence(&complex.counts(), &complex.incidence)
}

pub fn betti_from_incidence(counts: &[usize], incidence: &[Vec<Vec<i64>>]) -> Vec<usize> {
    let n = counts.len() - 1;
    let rank = |q: usize| {
        if q == 0 || q > n {
            0
        } else {
            integer_rank(&incidence[q])
        }
    };
    (0..=n).map(|q| counts[q] - rank(q + 1) - rank(q)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub n: usize,
    /// `(−1)^N Σ_{i≤N} (−1)^i (m_i − β_i)`.
    pub value: i64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub rows: Vec<InequalityRow>,
    pub euler_equal: bool,
    pub weak: bool,
    /// `Σ m_q ≥ Σ β_q`.
    pub total: bool,
}

impl InequalityReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds) && self.euler_equal && self.weak && self.total
    }
}

pub fn check_morse_inequalities(m: &[usize], betti: &[usize]) -> Result<InequalityReport> {
    if m.len() != betti.len() || m.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} counts vs {} Betti numbers",
            m.len(),
            betti.len()
        )));
    }
    let mut rows = Vec::new();
    let mut acc = 0i64;
    for nn in 0..m.len() {
        let term = m[nn] as i64 - betti[nn] as i64;
        acc += if nn % 2 == 0 { term } else { -term };
        let value = if nn % 2 == 0 { acc } else { -acc };
        rows.push(InequalityRow {
            n: nn,
            value,
            holds: value >= 0,
        });
    }
    Ok(InequalityReport {
        euler_equal: acc == 0,
        weak: m.iter().zip(betti).all(|(a, b)| a >= b),
        total: m.iter().sum::<usize>() >= betti.iter().sum::<usize>(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{find_critical_points, SampleManifold};
    use std::f64::consts::PI;

    #[test]
    fn inequality_examples() {
        let r = check_morse_inequalities(&[1, 2, 1], &[1, 2, 1]).unwrap();
        assert!(r.all_hold() && r.rows.iter().all(|row| row.value == 0));
        let r = check_morse_inequalities(&[2, 2], &[1, 1]).unwrap();
        assert_eq!(r.rows[0].value, 1);
        assert_eq!(r.rows[1].value, 0);
        assert!(r.all_hold());
        let r = check_morse_inequalities(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert!(r.all_hold() && r.total);
        let r = check_morse_inequalities(&[1, 1], &[2, 1]).unwrap();
        assert!(!r.all_hold());
    }

    #[test]
    fn zero_complex_cohomology() {
        let b = betti_from_incidence(&[1, 0, 1], &[vec![], vec![], vec![vec![]]]);
        assert_eq!(b, vec![1, 0, 1]);
    }

    #[test]
    fn shoot_down_and_back_on_circle() {
        let h = ScalarField::from_catalog("cos-sum", &[], &SampleManifold::circle()).unwrap();
        let pts = find_critical_points(&h, 32, 1e-10).unwrap();
        let opts = FlowOptions::default();
        let down = shoot(&h, &pts, &[0.01], Direction::Forward, Capture::Any, &opts).unwrap();
        assert_eq!(pts[down.limit.point].index, 0);
        assert!((down.path.last().unwrap().1[0] - PI).abs() < 1e-3);
        let mid = down.path[down.path.len() / 2].1.clone();
        let up = shoot(&h, &pts, &mid, Direction::Backward, Capture::Any, &opts).unwrap();
        assert_eq!(pts[up.limit.point].index, 1);
        assert_eq!(up.limit.shift, vec![0]);
    }
}
