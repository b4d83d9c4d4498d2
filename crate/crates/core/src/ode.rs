//! Dormand–Prince 5(4) integrator with dense output, and a fixed-step variant.

use crate::error::{Error, Result};
use crate::geometry::Vector;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: crate::tolerances::ODE_RTOL,
            atol: crate::tolerances::ODE_ATOL,
            h_init: None,
            h_min: 1e-14,
            max_steps: 200_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        OdeOptions { rtol, atol, ..Default::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
struct DenseStep {
    t0: f64,
    h: f64,
    r: [Vector; 5],
}

/// Piecewise quartic interpolant of an integrated trajectory.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    steps: Vec<DenseStep>,
    pub t_start: f64,
    pub t_end: f64,
    pub y_end: Vector,
    pub n_rhs: usize,
}

impl DenseSolution {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Interpolated state at t (clamped to the integration interval).
    pub fn eval(&self, t: f64) -> Vector {
        let forward = self.t_end >= self.t_start;
        let idx = self
            .steps
            .partition_point(|s| if forward { s.t0 + s.h <= t } else { s.t0 + s.h >= t })
            .min(self.steps.len() - 1);
        let s = &self.steps[idx];
        let th = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        &s.r[0] + (&s.r[1] + (&s.r[2] + (&s.r[3] + &s.r[4] * th1) * th) * th1) * th
    }
}

fn err_norm(y: &Vector, y1: &Vector, e: &Vector, rtol: f64, atol: f64) -> f64 {
    let n = y.len() as f64;
    let mut s = 0.0;
    for i in 0..y.len() {
        let sc = atol + rtol * y[i].abs().max(y1[i].abs());
        let r = e[i] / sc;
        s += r * r;
    }
    (s / n).sqrt()
}

/// Integrates y' = f(t, y) from t0 to t1 (either direction).
/// An error returned by `f` makes the step shrink; it is propagated once the step underflows.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &Vector, opts: &OdeOptions) -> Result<DenseSolution>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let span = t1 - t0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut n_rhs = 0usize;
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y)?;
    n_rhs += 1;
    let mut steps = Vec::new();
    if span == 0.0 {
        steps.push(DenseStep {
            t0,
            h: 1.0,
            r: [y.clone(), y.clone() * 0.0, y.clone() * 0.0, y.clone() * 0.0, y.clone() * 0.0],
        });
        return Ok(DenseSolution { steps, t_start: t0, t_end: t1, y_end: y, n_rhs });
    }

    let mut h = match opts.h_init {
        Some(h) => h.abs().min(span.abs()),
        None => {
            let d0 = err_norm(&y, &y, &y, opts.rtol, opts.atol);
            let d1 = err_norm(&y, &y, &k1, opts.rtol, opts.atol);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(span.abs()).max(1e-10 * span.abs())
        }
    };
    let mut last_err = None;
    let mut n_steps = 0usize;
    let mut fac_old: f64 = 1e-4;

    while dir * (t1 - t) > 1e-14 * span.abs().max(1.0) {
        if n_steps >= opts.max_steps {
            return Err(Error::StepFailure { t, reason: "maximum number of steps exceeded".into() });
        }
        n_steps += 1;
        if h < opts.h_min * span.abs().max(1.0) {
            return Err(last_err.unwrap_or(Error::StepFailure {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            }));
        }
        if dir * (t + dir * h - t1) > 0.0 {
            h = (t1 - t).abs();
        }
        let hs = dir * h;
        let stage = |f: &mut F, tt: f64, yy: Vector| -> Result<Vector> { f(tt, &yy) };

        let attempt = (|| -> Result<(Vector, Vector, [Vector; 6])> {
            let k2 = stage(&mut f, t + C2 * hs, &y + &k1 * (hs * A21))?;
            let k3 = stage(&mut f, t + C3 * hs, &y + (&k1 * A31 + &k2 * A32) * hs)?;
            let k4 = stage(&mut f, t + C4 * hs, &y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs)?;
            let k5 = stage(
                &mut f,
                t + C5 * hs,
                &y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs,
            )?;
            let k6 = stage(
                &mut f,
                t + hs,
                &y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs,
            )?;
            let y1 = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hs;
            let k7 = stage(&mut f, t + hs, y1.clone())?;
            Ok((y1, k7.clone(), [k2, k3, k4, k5, k6, k7]))
        })();
        n_rhs += 6;

        let (y1, k7, ks) = match attempt {
            Ok(v) => v,
            Err(e) => {
                // repeated failures this close means the solution really leaves the domain
                if h < 1e-8 * span.abs().max(1.0) {
                    return Err(e);
                }
                last_err = Some(e);
                h *= 0.25;
                continue;
            }
        };
        let [_k2, k3, k4, k5, k6, _] = &ks;
        let e = (&k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + &k7 * E7) * hs;
        let err = err_norm(&y, &y1, &e, opts.rtol, opts.atol);
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            let ydiff = &y1 - &y;
            let bspl = &k1 * hs - &ydiff;
            let r4 = &ydiff - &k7 * hs - &bspl;
            let r5 = (&k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + &k7 * D7) * hs;
            steps.push(DenseStep { t0: t, h: hs, r: [y.clone(), ydiff, bspl, r4, r5] });
            t += hs;
            y = y1;
            k1 = k7;
            last_err = None;
            // PI step-size control
            let fac11 = err.max(1e-16).powf(0.2 - 0.04 * 0.75);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);
            h /= fac;
        } else {
            let fac11 = err.powf(0.2 - 0.04 * 0.75);
            h /= (fac11 / 0.9).min(5.0);
        }
    }
    Ok(DenseSolution { steps, t_start: t0, t_end: t1, y_end: y, n_rhs })
}

/// Fixed-step fifth-order Dormand–Prince propagation (no error control).
/// The result is a smooth function of y0, which finite differences in y0 rely on.
pub fn rk5_fixed<F>(f: F, t0: f64, t1: f64, y0: &Vector, n_steps: usize) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let n = n_steps.max(1);
    let hs = (t1 - t0) / n as f64;
    let mut y = y0.clone();
    let mut t = t0;
    for _ in 0..n {
        let k1 = f(t, &y)?;
        let k2 = f(t + C2 * hs, &(&y + &k1 * (hs * A21)))?;
        let k3 = f(t + C3 * hs, &(&y + (&k1 * A31 + &k2 * A32) * hs))?;
        let k4 = f(t + C4 * hs, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs))?;
        let k5 = f(t + C5 * hs, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs))?;
        let k6 = f(
            t + hs,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs),
        )?;
        y += (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hs;
        t += hs;
    }
    Ok(y)
}

/// States and derivatives at every node of `grid`, propagated by fixed fifth-order steps
/// with `sub` sub-steps per grid interval. Suitable for cubic Hermite interpolation.
pub fn rk5_grid<F>(f: F, grid: &[f64], y0: &Vector, sub: usize) -> Result<(Vec<Vector>, Vec<Vector>)>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let mut ys = Vec::with_capacity(grid.len());
    let mut ds = Vec::with_capacity(grid.len());
    let mut y = y0.clone();
    ds.push(f(grid[0], &y)?);
    ys.push(y.clone());
    for w in grid.windows(2) {
        y = rk5_fixed(&f, w[0], w[1], &y, sub)?;
        ds.push(f(w[1], &y)?);
        ys.push(y.clone());
    }
    Ok((ys, ds))
}

/// Cubic Hermite interpolation of grid states with their derivatives.
pub fn hermite_eval(grid: &[f64], ys: &[Vector], ds: &[Vector], t: f64) -> Vector {
    let i = grid.partition_point(|&g| g <= t).clamp(1, grid.len() - 1) - 1;
    let h = grid[i + 1] - grid[i];
    let s = (t - grid[i]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    &ys[i] * (2.0 * s3 - 3.0 * s2 + 1.0)
        + &ds[i] * ((s3 - 2.0 * s2 + s) * h)
        + &ys[i + 1] * (-2.0 * s3 + 3.0 * s2)
        + &ds[i + 1] * ((s3 - s2) * h)
}
