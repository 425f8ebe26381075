//! Adaptive Dormand-Prince 5(4) integrator.

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_max: 1.0,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OdeEnd {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    /// The observer asked to stop before `t_end`.
    pub stopped: bool,
    /// Step size that would have been tried next.
    pub h_next: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction). The observer sees
/// every accepted state and may return `true` to stop early.
pub fn integrate(
    f: &dyn Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    observer: &mut dyn FnMut(f64, &[f64]) -> bool,
) -> OdeEnd {
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init.min(opts.h_max);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0]);
    if observer(t, &y) {
        return OdeEnd {
            t,
            y,
            steps: 0,
            stopped: true,
            h_next: h,
        };
    }
    let mut steps = 0;
    while dir * (t_end - t) > 0.0 && steps < opts.max_steps {
        let last = h >= (t_end - t).abs();
        let step = if last { (t_end - t).abs() } else { h };
        let hs = dir * step;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += hs * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let (_, rest) = k.split_at_mut(s);
            f(t + C[s] * hs, &tmp, &mut rest[0]);
            if s == 6 {
                y_new.copy_from_slice(&tmp);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * hs;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        steps += 1;
        if err <= 1.0 {
            t = if last { t_end } else { t + hs };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h = (step * grow).min(opts.h_max);
            }
            if observer(t, &y) {
                return OdeEnd {
                    t,
                    y,
                    steps,
                    stopped: true,
                    h_next: h,
                };
            }
        } else {
            h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    OdeEnd {
        t,
        y,
        steps,
        stopped: false,
        h_next: h,
    }
}
