//! Quadrature rules on compactified unstable cells.
//!
//! A cell is stored as a list of nodes (unwrapped points) with one weight per form
//! component, so integrating a form is a weighted sum of its values at the nodes.
//! Nodes come from Gauss-Legendre panels in flow time along trajectories leaving the
//! critical point; the final approach to a minimum is closed by a linearized tail.
//! Next to a separatrix of a top cell the lines crawl past the saddle, so the sliver
//! between the last line and the broken curve through the saddle is swept instead by
//! segments joining points of equal height on the two curves.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::Layout;
use crate::manifold::{CriticalPoint, ScalarField};
use crate::morse::{
    min_separation, nearest_translate, separatrix_scan, shoot, translate, Capture, Direction,
    FlowOptions, OrientationChoice,
};
use crate::ode::{integrate, OdeOptions};

#[derive(Clone, Debug)]
pub struct CellOptions {
    pub flow: FlowOptions,
    /// Half-length of the straight segment through an index-1 point.
    pub segment_radius: f64,
    /// Radius of the flat disc around an index-2 point, as a fraction of the critical spacing.
    pub disc_fraction: f64,
    /// Longest flow time followed along one trajectory.
    pub t_cell: f64,
    /// Distance to a minimum at which the linearized tail takes over.
    pub tail_radius: f64,
    /// Flow-time panel length for unit Hessian rates; divided by the fastest rate.
    pub s_panel: f64,
    pub order: usize,
    /// Geometric ratio of the angular panels toward separatrices.
    pub grading: f64,
    /// Widest angular panel, in radians.
    pub max_angle_panel: f64,
    /// Narrowest angular panel, relative to half the gap between separatrices.
    pub angle_floor: f64,
    /// Closest approach to the saddle of the last line before a separatrix, as a
    /// fraction of the critical spacing; the sliver inside it is closed separately.
    pub corner_distance: f64,
    /// Innermost level offset kept in a corner, relative to its range.
    pub corner_floor: f64,
    pub int_tol: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            flow: FlowOptions::default(),
            segment_radius: 1e-6,
            disc_fraction: 0.25,
            t_cell: 60.0,
            tail_radius: 1e-6,
            s_panel: 1.0,
            order: 8,
            grading: 0.3,
            max_angle_panel: 0.15,
            angle_floor: 1e-6,
            corner_distance: 0.05,
            corner_floor: 1e-9,
            int_tol: 1e-8,
        }
    }
}

/// Quadrature rule for `∫_{Ŵ_x^-} ω` with the orientation of `x`'s unstable frame.
#[derive(Clone, Debug)]
pub struct UnstableCell {
    pub point: usize,
    pub index: usize,
    pub nodes: Vec<Vec<f64>>,
    /// One weight per component of the degree-`index` layout.
    pub weights: Vec<Vec<f64>>,
    pub t_cell: f64,
    /// Trajectories that reached `t_cell` before a minimum.
    pub truncated: usize,
}

impl UnstableCell {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_j Σ_c w_{jc} ω_c(z_j)` for a form given pointwise by its components.
    pub fn integrate(&self, omega: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)) -> f64 {
        self.nodes
            .par_iter()
            .zip(&self.weights)
            .map(|(z, w)| omega(z).iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

fn gauss(order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("positive"));
    rule.as_node_weight_pairs().to_vec()
}

/// Nodes and weights of a Gauss-Legendre rule on `[a, b]`.
fn panel(rule: &[(f64, f64)], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(move |&(x, w)| (mid + half * x, half * w))
}

struct Sample {
    weight: f64,
    z: Vec<f64>,
    zdot: Vec<f64>,
    xi: Vec<f64>,
}

struct Tail {
    sink: Vec<f64>,
    z: Vec<f64>,
    xi: Vec<f64>,
    hess: Vec<f64>,
}

struct Line {
    samples: Vec<Sample>,
    tail: Option<Tail>,
    captured: bool,
}

/// Follows `-grad h` from `start`, carrying the tangent vector `xi` along the
/// linearized flow, and records the state at Gauss-Legendre nodes in time.
fn flow_line(
    field: &ScalarField,
    minima: &[&CriticalPoint],
    near: f64,
    start: &[f64],
    xi0: &[f64],
    t_cell: f64,
    opts: &CellOptions,
    rule: &[(f64, f64)],
) -> Line {
    let n = start.len();
    let rhs = |_s: f64, y: &[f64], out: &mut [f64]| {
        let g = field.gradient(&y[..n]);
        let h = field.hessian(&y[..n]);
        for i in 0..n {
            out[i] = -g[i];
            out[n + i] = -(0..n).map(|j| h[i * n + j] * y[n + j]).sum::<f64>();
        }
    };
    let mut ode = OdeOptions {
        rtol: opts.flow.rtol,
        atol: 1e-12,
        h_init: 1e-3,
        h_max: 0.5,
        max_steps: 1_000_000,
    };
    let mut y: Vec<f64> = start.iter().chain(xi0).copied().collect();
    let mut s = 0.0;
    let mut samples = Vec::new();
    let nearest = |z: &[f64]| -> (f64, Vec<f64>) {
        minima
            .iter()
            .map(|m| {
                let (d, shift) = nearest_translate(field, &m.coords, z);
                (d, translate(field, &m.coords, &shift))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least one minimum")
    };
    let finish = |y: &[f64], captured: bool, samples: Vec<Sample>| -> Line {
        let (d, sink) = nearest(&y[..n]);
        let tail = (d < near).then(|| Tail {
            hess: field.hessian(&sink),
            sink,
            z: y[..n].to_vec(),
            xi: y[n..].to_vec(),
        });
        Line {
            samples,
            tail,
            captured,
        }
    };
    while s < t_cell {
        let b = (s + opts.s_panel).min(t_cell);
        for (node, w) in panel(rule, s, b) {
            let end = integrate(&rhs, s, &y, node, &ode, &mut |_, _| false);
            ode.h_init = end.h_next.abs().max(1e-6);
            y = end.y;
            s = node;
            let zdot = field.gradient(&y[..n]).iter().map(|g| -g).collect();
            samples.push(Sample {
                weight: w,
                z: y[..n].to_vec(),
                zdot,
                xi: y[n..].to_vec(),
            });
        }
        let end = integrate(&rhs, s, &y, b, &ode, &mut |_, _| false);
        ode.h_init = end.h_next.abs().max(1e-6);
        y = end.y;
        s = b;
        if nearest(&y[..n]).0 < opts.tail_radius {
            return finish(&y, true, samples);
        }
    }
    finish(&y, false, samples)
}

fn det2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Builds the cell of `points[x]`, enlarging the flow time by half when some
/// trajectory is cut off, and failing if that moves the integral of a reference form
/// by more than `int_tol`.
pub fn build_unstable_cell(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &CellOptions,
) -> Result<UnstableCell> {
    let cell = build_with_time(field, points, x, orient, opts, opts.t_cell)?;
    if cell.truncated == 0 {
        return Ok(cell);
    }
    let longer = build_with_time(field, points, x, orient, opts, 1.5 * opts.t_cell)?;
    let reference = |_: &[f64]| vec![1.0; Layout::new(field.manifold().dim(), cell.index).len()];
    let change = (longer.integrate(&reference) - cell.integrate(&reference)).abs();
    if change > opts.int_tol {
        return Err(Error::CellNotConverged {
            change,
            tol: opts.int_tol,
        });
    }
    Ok(longer)
}

fn build_with_time(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &CellOptions,
    t_cell: f64,
) -> Result<UnstableCell> {
    let n = field.manifold().dim();
    let p = &points[x];
    if p.index > 2 || n > 2 {
        return Err(Error::InvalidArgument(
            "unstable cells need dimension <= 2".into(),
        ));
    }
    let minima: Vec<&CriticalPoint> = points.iter().filter(|c| c.index == 0).collect();
    let rate = points
        .iter()
        .flat_map(|c| c.hess_eigs.iter())
        .fold(1.0f64, |a, l| a.max(l.abs()));
    let opts = &CellOptions {
        s_panel: opts.s_panel / rate,
        ..opts.clone()
    };
    let near = 0.1 * min_separation(field, points);
    let rule = gauss(opts.order);
    let mut cell = UnstableCell {
        point: x,
        index: p.index,
        nodes: vec![],
        weights: vec![],
        t_cell,
        truncated: 0,
    };
    match p.index {
        0 => {
            cell.nodes.push(p.coords.clone());
            cell.weights.push(vec![1.0]);
        }
        1 => {
            let u = &orient.frames[x][0];
            let r = opts.segment_radius;
            for (sigma, w) in panel(&rule, -r, r) {
                cell.nodes
                    .push(p.coords.iter().zip(u).map(|(c, e)| c + sigma * e).collect());
                cell.weights.push(u.iter().map(|e| w * e).collect());
            }
            for sign in [1.0, -1.0] {
                let start: Vec<f64> = p
                    .coords
                    .iter()
                    .zip(u)
                    .map(|(c, e)| c + sign * r * e)
                    .collect();
                let line = flow_line(
                    field,
                    &minima,
                    near,
                    &start,
                    &vec![0.0; n],
                    t_cell,
                    opts,
                    &rule,
                );
                cell.truncated += usize::from(!line.captured);
                for smp in line.samples {
                    cell.weights
                        .push(smp.zdot.iter().map(|v| sign * smp.weight * v).collect());
                    cell.nodes.push(smp.z);
                }
                if let Some(tail) = line.tail {
                    cell.weights.push(
                        tail.sink
                            .iter()
                            .zip(&tail.z)
                            .map(|(m, z)| sign * (m - z))
                            .collect(),
                    );
                    cell.nodes.push(tail.sink);
                }
            }
        }
        _ => top_cell(
            field, points, x, orient, opts, t_cell, &minima, near, &rule, &mut cell,
        )?,
    }
    Ok(cell)
}

/// Radius of a disc around a source whose boundary the flow crosses outward.
fn disc_radius(field: &ScalarField, points: &[CriticalPoint], x: usize, frac: f64) -> f64 {
    let c = &points[x].coords;
    let mut r = frac * min_separation(field, points);
    for _ in 0..30 {
        let transverse = (0..64).all(|j| {
            let phi = j as f64 * std::f64::consts::TAU / 64.0;
            let d = [r * phi.cos(), r * phi.sin()];
            let z = [c[0] + d[0], c[1] + d[1]];
            let g = field.gradient(&z);
            -(g[0] * d[0] + g[1] * d[1]) > 0.0
        });
        if transverse {
            break;
        }
        r *= 0.5;
    }
    r
}

/// Breakpoints from `a` to `b` refined geometrically toward both ends, down to the
/// relative widths `fa` and `fb`.
fn graded_breaks(a: f64, b: f64, ratio: f64, fa: f64, fb: f64) -> Vec<f64> {
    let half = 0.5 * (b - a);
    let levels = |f: f64| (f.ln() / ratio.ln()).ceil().max(1.0) as i32;
    let mut out = vec![a];
    out.extend((0..=levels(fa)).rev().map(|k| a + half * ratio.powi(k)));
    out.extend((1..=levels(fb)).map(|k| b - half * ratio.powi(k)));
    out.push(b);
    out
}

/// Breakpoints on `[lo, hi]` refined geometrically toward `lo`.
fn one_sided_breaks(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let mut out = vec![lo];
    let mut b = hi;
    let mut inner = Vec::new();
    while b > 2.0 * lo {
        inner.push(b);
        b *= ratio;
    }
    out.extend(inner.into_iter().rev());
    out
}

#[allow(clippy::too_many_arguments)]
fn top_cell(
    field: &ScalarField,
    points: &[CriticalPoint],
    x: usize,
    orient: &OrientationChoice,
    opts: &CellOptions,
    t_cell: f64,
    minima: &[&CriticalPoint],
    near: f64,
    rule: &[(f64, f64)],
    cell: &mut UnstableCell,
) -> Result<()> {
    let tau = std::f64::consts::TAU;
    let c = &points[x].coords;
    let (u1, u2) = (&orient.frames[x][0], &orient.frames[x][1]);
    let sign = orient.frame_sign(x);
    let r0 = disc_radius(field, points, x, opts.disc_fraction);
    let at = |rho: f64, phi: f64| -> Vec<f64> {
        (0..2)
            .map(|i| c[i] + rho * (phi.cos() * u1[i] + phi.sin() * u2[i]))
            .collect()
    };

    // flat disc in polar coordinates of the frame
    let n_phi = 96;
    let radial = 6;
    for k in 0..radial {
        let (a, b) = (
            r0 * k as f64 / radial as f64,
            r0 * (k + 1) as f64 / radial as f64,
        );
        for (rho, w) in panel(rule, a, b) {
            for j in 0..n_phi {
                let phi = j as f64 * tau / n_phi as f64;
                cell.nodes.push(at(rho, phi));
                cell.weights.push(vec![sign * w * rho * tau / n_phi as f64]);
            }
        }
    }

    // flowed annulus, panels graded toward the separatrices
    let mut angles: Vec<f64> = separatrix_scan(field, points, c, u1, u2, r0, &opts.flow)?
        .into_iter()
        .map(|(a, _)| a)
        .collect();
    angles.sort_by(f64::total_cmp);
    let spacing = min_separation(field, points);
    let mut segments: Vec<Vec<f64>> = Vec::new();
    let mut corner_angles: Vec<(f64, f64)> = Vec::new();
    if angles.is_empty() {
        segments.push((0..=16).map(|k| k as f64 * tau / 16.0).collect());
    } else {
        let k = angles.len();
        let gap = |i: usize| {
            if i + 1 < k {
                angles[i + 1] - angles[i]
            } else {
                angles[0] + tau - angles[i]
            }
        };
        // smallest offset whose line still keeps `corner_distance` from the saddle
        let cut = |a: f64, dir: f64, half: f64| -> Result<f64> {
            let mut kept = half * opts.grading;
            let mut eps = kept;
            while eps > half * opts.angle_floor {
                let start = at(r0, a + dir * eps);
                let line = shoot(
                    field,
                    points,
                    &start,
                    Direction::Forward,
                    Capture::SinksOnly,
                    &opts.flow,
                )?;
                if closest_saddle(field, points, &line.path).0 < opts.corner_distance * spacing {
                    break;
                }
                kept = eps;
                eps *= opts.grading;
            }
            Ok(kept)
        };
        let mut after = Vec::with_capacity(k);
        let mut before = Vec::with_capacity(k);
        for i in 0..k {
            after.push(cut(angles[i], 1.0, 0.5 * gap(i))?);
            before.push(cut(angles[i], -1.0, 0.5 * gap((i + k - 1) % k))?);
        }
        for i in 0..k {
            let (a, b) = (
                angles[i] + after[i],
                angles[i] + gap(i) - before[(i + 1) % k],
            );
            let half = 0.5 * (b - a);
            let floor = |eps: f64| (opts.grading.powi(3) * eps / half).clamp(opts.angle_floor, 1.0);
            segments.push(graded_breaks(
                a,
                b,
                opts.grading,
                floor(after[i]),
                floor(before[(i + 1) % k]),
            ));
            corner_angles.push((angles[i], a));
            corner_angles.push((angles[i], angles[i] - before[i]));
        }
    }
    let arc = |phi: f64| -> (Vec<f64>, Vec<f64>) {
        (
            at(r0, phi),
            (0..2)
                .map(|i| r0 * (-phi.sin() * u1[i] + phi.cos() * u2[i]))
                .collect(),
        )
    };
    let polar = |z: &[f64]| -> (f64, f64) {
        let d = [z[0] - c[0], z[1] - c[1]];
        let (a, b) = (d[0] * u1[0] + d[1] * u1[1], d[0] * u2[0] + d[1] * u2[1]);
        (a.hypot(b), b.atan2(a))
    };
    for &(sep, line) in &corner_angles {
        corner(
            field, points, &arc, &polar, c, sep, line, sign, opts, rule, cell,
        )?;
    }
    let phi_nodes: Vec<(f64, f64)> = segments
        .iter()
        .flat_map(|seg| {
            seg.windows(2)
                .flat_map(|wnd| {
                    let parts = ((wnd[1] - wnd[0]) / opts.max_angle_panel).ceil().max(1.0) as usize;
                    let step = (wnd[1] - wnd[0]) / parts as f64;
                    (0..parts)
                        .flat_map(|j| {
                            panel(
                                rule,
                                wnd[0] + j as f64 * step,
                                wnd[0] + (j + 1) as f64 * step,
                            )
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let lines: Vec<(f64, Line)> = phi_nodes
        .par_iter()
        .map(|&(phi, wphi)| {
            let start = at(r0, phi);
            let xi0: Vec<f64> = (0..2)
                .map(|i| r0 * (-phi.sin() * u1[i] + phi.cos() * u2[i]))
                .collect();
            (
                wphi,
                flow_line(field, minima, near, &start, &xi0, t_cell, opts, rule),
            )
        })
        .collect();
    for (wphi, line) in lines {
        cell.truncated += usize::from(!line.captured);
        for smp in line.samples {
            cell.weights
                .push(vec![wphi * smp.weight * det2(&smp.zdot, &smp.xi)]);
            cell.nodes.push(smp.z);
        }
        if let Some(tail) = line.tail {
            let d: Vec<f64> = tail.z.iter().zip(&tail.sink).map(|(z, m)| z - m).collect();
            let h = &tail.hess;
            let hd = [h[0] * d[0] + h[1] * d[1], h[2] * d[0] + h[3] * d[1]];
            let trace = h[0] + h[3];
            cell.weights.push(vec![-wphi * det2(&hd, &tail.xi) / trace]);
            cell.nodes.push(tail.sink);
        }
    }
    Ok(())
}

/// Distance to the nearest saddle translate along a path, that translate, and the
/// path point where it is attained.
fn closest_saddle(
    field: &ScalarField,
    points: &[CriticalPoint],
    path: &[(f64, Vec<f64>)],
) -> (f64, Option<(usize, Vec<f64>, Vec<f64>)>) {
    let mut best = (f64::INFINITY, None);
    for (_, z) in path {
        for (i, p) in points.iter().enumerate().filter(|(_, p)| p.index == 1) {
            let (d, shift) = nearest_translate(field, &p.coords, z);
            if d < best.0 {
                best = (d, Some((i, translate(field, &p.coords, &shift), z.clone())));
            }
        }
    }
    best
}

/// Follows the curve of steepest slope in a parameter `τ` along which the height
/// changes at `rate(τ)`, and returns position and `dz/dτ` at each target in turn.
fn level_trace(
    field: &ScalarField,
    z0: &[f64],
    t0: f64,
    targets: &[f64],
    rate: &dyn Fn(f64) -> f64,
    rtol: f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let rhs = |tau: f64, z: &[f64], out: &mut [f64]| {
        let g = field.gradient(z);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        for (o, v) in out.iter_mut().zip(&g) {
            *o = rate(tau) * v / g2;
        }
    };
    let mut ode = OdeOptions {
        rtol,
        atol: 1e-13,
        h_init: 1e-3,
        h_max: 0.05,
        max_steps: 1_000_000,
    };
    let (mut z, mut t) = (z0.to_vec(), t0);
    targets
        .iter()
        .map(|&target| {
            ode.h_init = ode.h_init.min((target - t).abs()).max(1e-14);
            let end = integrate(&rhs, t, &z, target, &ode, &mut |_, _| false);
            ode.h_init = end.h_next.abs();
            z = end.y;
            t = target;
            let mut dz = vec![0.0; z.len()];
            rhs(t, &z, &mut dz);
            (z.clone(), dz)
        })
        .collect()
}

/// Below this fraction of its parameter range a corner curve is taken as straight
/// through the critical point it ends at; rounding in the gradient dominates there.
const LINEAR_END: f64 = 1e-4;

/// A curve leaving the critical point `centre` with `dz/dτ → slope`, at ascending `taus`.
fn trace_out(
    field: &ScalarField,
    centre: &[f64],
    slope: &[f64],
    lin: f64,
    taus: &[f64],
    rate: &dyn Fn(f64) -> f64,
    rtol: f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let split = taus.partition_point(|&t| t < lin);
    let at = |t: f64| -> Vec<f64> { centre.iter().zip(slope).map(|(c, e)| c + t * e).collect() };
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = taus[..split]
        .iter()
        .map(|&t| (at(t), slope.to_vec()))
        .collect();
    out.extend(level_trace(
        field,
        &at(lin),
        lin,
        &taus[split..],
        rate,
        rtol,
    ));
    out
}

/// A curve from `z0` at `t0` into the critical point `centre`, at descending `taus`.
#[allow(clippy::too_many_arguments)]
fn trace_in(
    field: &ScalarField,
    z0: &[f64],
    t0: f64,
    centre: &[f64],
    lin: f64,
    taus: &[f64],
    rate: &dyn Fn(f64) -> f64,
    rtol: f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let split = taus.partition_point(|&t| t >= lin);
    let mut targets = taus[..split].to_vec();
    targets.push(lin);
    let mut out = level_trace(field, z0, t0, &targets, rate, rtol);
    let end = out.pop().expect("target").0;
    let slope: Vec<f64> = end.iter().zip(centre).map(|(e, c)| (e - c) / lin).collect();
    out.extend(taus[split..].iter().map(|&t| {
        (
            centre.iter().zip(&slope).map(|(c, e)| c + t * e).collect(),
            slope.clone(),
        )
    }));
    out
}

/// Gauss nodes on `[floor·top, top]`, refined toward the lower end.
fn corner_nodes(top: f64, floor: f64, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    one_sided_breaks(top * floor, top, 0.5)
        .windows(2)
        .flat_map(|w| panel(rule, w[0], w[1]).collect::<Vec<_>>())
        .collect()
}

/// Sweeps the sliver between the line leaving the circle at angle `line_angle` and
/// the broken curve through the saddle it passes (up the stable branch to the circle
/// at `sep_angle`, down the unstable one) by straight segments joining points of
/// equal height; near the circle the segments bend onto the arc between the two.
#[allow(clippy::too_many_arguments)]
fn corner(
    field: &ScalarField,
    points: &[CriticalPoint],
    arc: &dyn Fn(f64) -> (Vec<f64>, Vec<f64>),
    polar: &dyn Fn(&[f64]) -> (f64, f64),
    centre: &[f64],
    sep_angle: f64,
    line_angle: f64,
    sign: f64,
    opts: &CellOptions,
    rule: &[(f64, f64)],
    cell: &mut UnstableCell,
) -> Result<()> {
    let rtol = opts.flow.rtol.min(1e-12);
    let start = arc(line_angle).0;
    let line = shoot(
        field,
        points,
        &start,
        Direction::Forward,
        Capture::SinksOnly,
        &opts.flow,
    )?;
    let m = translate(field, &points[line.limit.point].coords, &line.limit.shift);
    let (_, found) = closest_saddle(field, points, &line.path);
    let (si, s, zc) =
        found.ok_or_else(|| Error::NonTransversal("separatrix without a saddle".into()))?;
    let sp = &points[si];
    let toward = |v: &[f64]| -> Vec<f64> {
        let d: f64 = v
            .iter()
            .zip(zc.iter().zip(&s))
            .map(|(a, (z, c))| a * (z - c))
            .sum();
        v.iter().map(|a| a * d.signum()).collect()
    };
    let (v, u) = (toward(&sp.stable_dirs()[0]), toward(&sp.unstable_dirs()[0]));
    let (lu, ls) = (-sp.hess_eigs[0], sp.hess_eigs[1]);

    let branch_start: Vec<f64> = s
        .iter()
        .zip(&u)
        .map(|(c, e)| c + opts.segment_radius * e)
        .collect();
    let branch = shoot(
        field,
        points,
        &branch_start,
        Direction::Forward,
        Capture::SinksOnly,
        &opts.flow,
    )?;
    let end = translate(
        field,
        &points[branch.limit.point].coords,
        &branch.limit.shift,
    );
    if end.iter().zip(&m).any(|(a, b)| (a - b).abs() > 1e-6) {
        return Err(Error::NonTransversal(
            "corner line and saddle branch reach different minima".into(),
        ));
    }
    let sep_top = arc(sep_angle).0;
    let (hs, hm, hp, mut hq) = (
        field.value(&s),
        field.value(&m),
        field.value(&start),
        field.value(&sep_top),
    );
    if hp.min(hq) <= hs {
        return Err(Error::NonTransversal(
            "separatrix line starts below its saddle".into(),
        ));
    }
    let slope = |dir: &[f64], lam: f64| -> Vec<f64> {
        dir.iter().map(|e| (2.0 / lam).sqrt() * e).collect()
    };
    let up_rate = |t: f64| 2.0 * t;
    let down_rate = |t: f64| -2.0 * t;

    // top patch: heights from ha to each curve's start on the circle
    let ha = hs + 0.5 * (hp.min(hq) - hs);
    let top: Vec<(f64, f64)> = (0..4)
        .flat_map(|k| panel(rule, k as f64 / 4.0, (k + 1) as f64 / 4.0).collect::<Vec<_>>())
        .collect();
    let mus: Vec<f64> = top.iter().map(|p| p.0).collect();
    let mut down: Vec<f64> = mus.iter().rev().copied().collect();
    down.push(0.0);
    let line_rate = |_: f64| hp - ha;
    let mut far_t = level_trace(field, &start, 1.0, &down, &line_rate, rtol);
    let far_a = far_t.pop().expect("target").0;
    far_t.reverse();

    // above the saddle: height hs + τ²
    let ta = (ha - hs).sqrt();
    let upper = corner_nodes(ta, opts.corner_floor, rule);
    let mut taus: Vec<f64> = upper.iter().map(|p| p.0).collect();
    let mut down: Vec<f64> = taus.iter().rev().copied().collect();
    down.push(0.0);
    let mut far_u = level_trace(field, &far_a, ta, &down, &up_rate, rtol);
    let at_saddle_level = far_u.pop().expect("target").0;
    far_u.reverse();
    taus.push(ta);
    let mut near_u = trace_out(
        field,
        &s,
        &slope(&v, ls),
        LINEAR_END * ta,
        &taus,
        &up_rate,
        rtol,
    );
    let near_a = near_u.pop().expect("target").0;
    // height at which the traced separatrix meets the circle
    let (radius, _) = polar(&sep_top);
    for _ in 0..6 {
        let q = level_trace(field, &near_a, 0.0, &[1.0], &|_| hq - ha, rtol)
            .pop()
            .expect("target")
            .0;
        let (rho, _) = polar(&q);
        // dρ/dh along the curve is (∇h · r̂) / |∇h|²
        let g = field.gradient(&q);
        let radial: f64 = g
            .iter()
            .zip(q.iter().zip(centre))
            .map(|(a, (z, o))| a * (z - o) / rho)
            .sum();
        hq += (radius - rho) * g.iter().map(|v| v * v).sum::<f64>() / radial;
        if (radius - rho).abs() < 1e-14 * radius {
            break;
        }
    }
    let sep_rate = |_: f64| hq - ha;
    let near_t = level_trace(field, &near_a, 0.0, &mus, &sep_rate, rtol);
    let sep_end = level_trace(
        field,
        &near_t.last().expect("node").0,
        *mus.last().expect("node"),
        &[1.0],
        &sep_rate,
        rtol,
    );
    let (_, raw) = polar(&sep_end[0].0);
    let sep_angle =
        raw + std::f64::consts::TAU * ((sep_angle - raw) / std::f64::consts::TAU).round();

    // below the saddle: height hs − τ² down to the midpoint, then hm + τ²
    let mid = 0.5 * (hs + hm);
    let t1 = (hs - mid).sqrt();
    let lower = corner_nodes(t1, opts.corner_floor, rule);
    let mut taus: Vec<f64> = lower.iter().map(|p| p.0).collect();
    taus.push(t1);
    let mut far_l = level_trace(field, &at_saddle_level, 0.0, &taus, &down_rate, rtol);
    let mut near_l = trace_out(
        field,
        &s,
        &slope(&u, lu),
        LINEAR_END * t1,
        &taus,
        &down_rate,
        rtol,
    );
    let (far_mid, near_mid) = (
        far_l.pop().expect("target").0,
        near_l.pop().expect("target").0,
    );

    let t2 = (mid - hm).sqrt();
    let sink = corner_nodes(t2, opts.corner_floor, rule);
    let up: Vec<f64> = sink.iter().rev().map(|p| p.0).collect();
    let mut far_m = trace_in(
        field,
        &far_mid,
        t2,
        &m,
        LINEAR_END * t2,
        &up,
        &up_rate,
        rtol,
    );
    let mut near_m = trace_in(
        field,
        &near_mid,
        t2,
        &m,
        LINEAR_END * t2,
        &up,
        &up_rate,
        rtol,
    );
    far_m.reverse();
    near_m.reverse();

    // chord from the separatrix start to the line start, bent onto the arc as μ → 1
    let (p0, p1) = (arc(sep_angle).0, start.clone());
    let lam_rule: Vec<(f64, f64)> = panel(rule, 0.0, 1.0).collect();
    let pieces = [
        (&top, &near_t, &far_t, true),
        (&upper, &near_u, &far_u, false),
        (&lower, &near_l, &far_l, false),
        (&sink, &near_m, &far_m, false),
    ];
    for (nodes, near, far, bent) in pieces {
        let mut piece: Vec<(Vec<f64>, f64)> = Vec::new();
        for (&(mu, wt), ((z0, d0), (z1, d1))) in nodes.iter().zip(near.iter().zip(far.iter())) {
            for &(lam, wl) in &lam_rule {
                let mut z: Vec<f64> = z0.iter().zip(z1).map(|(a, b)| a + lam * (b - a)).collect();
                let mut dmu: Vec<f64> = d0.iter().zip(d1).map(|(a, b)| a + lam * (b - a)).collect();
                let mut dlam: Vec<f64> = z1.iter().zip(z0).map(|(a, b)| a - b).collect();
                if bent {
                    let (a, da) = arc(sep_angle + lam * (line_angle - sep_angle));
                    for i in 0..2 {
                        let chord = p0[i] + lam * (p1[i] - p0[i]);
                        z[i] += mu * (a[i] - chord);
                        dmu[i] += a[i] - chord;
                        dlam[i] += mu * ((line_angle - sep_angle) * da[i] - (p1[i] - p0[i]));
                    }
                }
                piece.push((z, wt * wl * det2(&dmu, &dlam)));
            }
        }
        let orient = piece.iter().map(|p| p.1).sum::<f64>().signum();
        for (z, w) in piece {
            cell.nodes.push(z);
            cell.weights.push(vec![sign * orient * w]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_breaks_cover_interval_monotonically() {
        let b = graded_breaks(1.0, 2.0, 0.3, 1e-12, 1e-3);
        assert!((b[0] - 1.0).abs() < 1e-9 && (b[b.len() - 1] - 2.0).abs() < 1e-9);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let rule = gauss(8);
        let v: f64 = panel(&rule, 0.0, 2.0).map(|(x, w)| w * x.powi(7)).sum();
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }
}
