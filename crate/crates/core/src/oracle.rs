//! Brute-force cross-checks: direct minimisation of the penalised energy over horizontal
//! polylines, and finite-difference families of brachistochrones and constrained curves.

use serde::Serialize;

use crate::bvp::ObserverWorldline;
use crate::curves::{cumulative_integral, uniform_grid, Curve, FieldAlongCurve};
use crate::dynamics::{
    conformal_energy, horizontal_unit, initial_velocity, integrate_from_velocity,
    BrachistochroneSolution, IntegrationConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{ConformalGeometry, SpacetimeModel, Vector};
use crate::transform::{deform_curve, lift_g};

/// χ(s) = e^s − 1 − s − s²/2.
pub fn chi(s: f64) -> f64 {
    s.exp_m1() - s - 0.5 * s * s
}

fn chi_prime(s: f64) -> f64 {
    s.exp_m1() - s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyConfig {
    pub epsilon: f64,
}

impl PenaltyConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParams(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        Ok(PenaltyConfig { epsilon })
    }

    /// χ_ε(s) = χ(s − 1/ε) for s ≥ 1/ε, zero below the cutoff.
    pub fn chi_eps(&self, s: f64) -> f64 {
        let c = 1.0 / self.epsilon;
        if s >= c {
            chi(s - c)
        } else {
            0.0
        }
    }

    pub fn chi_eps_prime(&self, s: f64) -> f64 {
        let c = 1.0 / self.epsilon;
        if s >= c {
            chi_prime(s - c)
        } else {
            0.0
        }
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { epsilon: 1e-2 }
    }
}

/// Ψ_k = ⟨Y,Y⟩ + k².
pub fn psi_k(model: &SpacetimeModel, x: &Vector, k: f64) -> Result<f64> {
    let psi = model.yy(x)? + k * k;
    if psi == 0.0 {
        return Err(Error::OutsideUk { coords: x.iter().copied().collect(), margin: 0.0 });
    }
    Ok(psi)
}

/// E_φ(w) + ∫ χ_ε(1/Ψ_k²) dt with the same quadrature for both terms.
pub fn penalized_energy(cg: &ConformalGeometry, w: &Curve, pc: &PenaltyConfig) -> Result<f64> {
    let e = conformal_energy(&cg.model, cg.k, w)?;
    let mut vals = Vec::with_capacity(w.grid.len());
    let mut any = false;
    for x in &w.points {
        let psi = psi_k(&cg.model, x, cg.k)?;
        let v = pc.chi_eps(1.0 / (psi * psi));
        any |= v != 0.0;
        vals.push(v);
    }
    if !any {
        return Ok(e);
    }
    Ok(e + crate::curves::integrate(&w.grid, &vals))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleOptions {
    pub max_iter: usize,
    /// Target for the projected preconditioned gradient (max-norm of a unit step).
    pub tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_iter: 20_000, tol: 1e-7 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteCandidate {
    #[serde(skip)]
    pub polyline: Curve,
    #[serde(rename = "T_estimate")]
    pub t_estimate: f64,
    pub constraint_penalty: f64,
    pub energy: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
    /// Relative mismatch of the analytic gradient against central differences at the start.
    pub gradient_check: f64,
    /// Energies of the accepted iterates.
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

impl DiscreteCandidate {
    pub fn to_csv(&self) -> String {
        format!(
            "# T_estimate={:.16e} energy={:.16e} constraint_penalty={:.16e}\n{}",
            self.t_estimate,
            self.energy,
            self.constraint_penalty,
            self.polyline.to_csv()
        )
    }
}

/// Polyline energy with midpoint quadrature; returns (raw energy, penalty).
struct Discrete<'a> {
    cg: &'a ConformalGeometry,
    pc: PenaltyConfig,
    n: usize,
}

impl<'a> Discrete<'a> {
    fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn energy(&self, x: &[Vector]) -> Result<(f64, f64)> {
        let dt = self.dt();
        let mut raw = 0.0;
        let mut pen = 0.0;
        for i in 0..self.n {
            let mid = (&x[i] + &x[i + 1]) * 0.5;
            let v = (&x[i + 1] - &x[i]) / dt;
            raw += 0.5 * v.dot(&(self.cg.metric(&mid)? * &v)) * dt;
            let psi = psi_k(&self.cg.model, &mid, self.cg.k)?;
            pen += self.pc.chi_eps(1.0 / (psi * psi)) * dt;
        }
        Ok((raw, pen))
    }

    fn total(&self, x: &[Vector]) -> Result<f64> {
        let (r, p) = self.energy(x)?;
        Ok(if p == 0.0 { r } else { r + p })
    }

    /// Gradient with respect to every node; the entry for node 0 is left at zero.
    fn gradient(&self, x: &[Vector]) -> Result<Vec<Vector>> {
        let dt = self.dt();
        let m = self.cg.model.m;
        let mut g = vec![Vector::zeros(m); self.n + 1];
        for i in 0..self.n {
            let mid = (&x[i] + &x[i + 1]) * 0.5;
            let v = (&x[i + 1] - &x[i]) / dt;
            let h = self.cg.metric(&mid)?;
            let hv = &h * &v;
            let dh = self.cg.metric_derivatives(&mid)?;
            let mut gmid = Vector::from_iterator(m, dh.iter().map(|d| 0.5 * v.dot(&(d * &v)) * dt));
            let psi = psi_k(&self.cg.model, &mid, self.cg.k)?;
            let cp = self.pc.chi_eps_prime(1.0 / (psi * psi));
            if cp != 0.0 {
                let dpsi = self.cg.model.yy_gradient(&mid)?;
                gmid += dpsi * (cp * (-2.0 / (psi * psi * psi)) * dt);
            }
            g[i] += &gmid * 0.5 - &hv;
            g[i + 1] += &gmid * 0.5 + &hv;
        }
        g[0].fill(0.0);
        Ok(g)
    }
}

/// Solves (Δt⁻¹·tridiag(−1,2,−1) + Δt·I) y = b with Dirichlet conditions at both ends.
fn h1_solve(b: &[f64], dt: f64) -> Vec<f64> {
    let n = b.len();
    if n == 0 {
        return Vec::new();
    }
    let off = -1.0 / dt;
    let mut diag = vec![2.0 / dt + dt; n];
    let mut rhs = b.to_vec();
    for i in 1..n {
        let w = off / diag[i - 1];
        diag[i] -= w * off;
        rhs[i] -= w * rhs[i - 1];
    }
    let mut y = vec![0.0; n];
    y[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = (rhs[i] - off * y[i + 1]) / diag[i];
    }
    y
}

/// Endpoint on the γ orbit (keeping the current unwrapped chart copy), then horizontal
/// segments rebuilt from p, then the endpoint once more.
fn project(model: &SpacetimeModel, gamma: &ObserverWorldline, x: &[Vector]) -> Result<Vec<Vector>> {
    let n = x.len() - 1;
    let snap = |z: &Vector| -> Result<Vector> {
        let (s, _) = gamma.quotient_residual(model, z)?;
        let base = gamma.point(model, s)?;
        Ok(z - model.displacement(&base, z))
    };
    let mut raw = x.to_vec();
    raw[n] = snap(&raw[n])?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(raw[0].clone());
    for i in 0..n {
        let mut v = &raw[i + 1] - &raw[i];
        let base = v.clone();
        for _ in 0..3 {
            let mid = &out[i] + &v * 0.5;
            let y = model.killing(&mid)?;
            let c = model.dot(&mid, &base, &y)? / model.yy(&mid)?;
            v = &base - y * c;
        }
        let next = &out[i] + v;
        model.check(&next)?;
        out.push(next);
    }
    out[n] = snap(&out[n])?;
    Ok(out)
}

fn max_diff(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

fn preconditioned(cg: &ConformalGeometry, x: &[Vector], g: &[Vector]) -> Result<Vec<Vector>> {
    let n = x.len() - 1;
    let m = cg.model.m;
    let dt = 1.0 / n as f64;
    // the final node only slides along the orbit, which the projection supplies
    let mut hg = Vec::with_capacity(n - 1);
    for i in 1..n {
        let h = cg.metric(&x[i])?;
        hg.push(h.lu().solve(&g[i]).ok_or(Error::DegenerateKilling(0.0))?);
    }
    let mut out = vec![Vector::zeros(m); n + 1];
    for a in 0..m {
        let b: Vec<f64> = hg.iter().map(|v| v[a]).collect();
        for (i, y) in h1_solve(&b, dt).into_iter().enumerate() {
            out[i + 1][a] = y;
        }
    }
    Ok(out)
}

fn step(x: &[Vector], d: &[Vector], alpha: f64) -> Vec<Vector> {
    x.iter().zip(d).map(|(a, b)| a - b * alpha).collect()
}

/// Largest relative mismatch between the analytic gradient and central differences over a
/// few fixed node coordinates.
fn gradient_check(disc: &Discrete, x: &[Vector]) -> Result<f64> {
    let g = disc.gradient(x)?;
    let gmax = g.iter().map(|v| v.amax()).fold(0.0, f64::max).max(1e-300);
    let m = disc.cg.model.m;
    let n = disc.n;
    let mut worst: f64 = 0.0;
    for &i in &[1, n / 3, n / 2, n - 1, n] {
        for a in 0..m {
            let h = 1e-6 * (1.0 + x[i][a].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i][a] += h;
            xm[i][a] -= h;
            let fd = (disc.total(&xp)? - disc.total(&xm)?) / (2.0 * h);
            worst = worst.max((fd - g[i][a]).abs() / gmax);
        }
    }
    Ok(worst)
}

/// Minimises the penalised energy over horizontal polylines with N segments from p to γ.
pub fn discrete_minimize(
    cg: &ConformalGeometry,
    p: &Vector,
    gamma: &ObserverWorldline,
    n: usize,
    init: &Curve,
    pc: &PenaltyConfig,
    opts: &OracleOptions,
) -> Result<DiscreteCandidate> {
    let model = &cg.model;
    if n < 4 {
        return Err(Error::GridTooCoarse(n));
    }
    if (&init.points[0] - p).amax() > 1e-9 * (1.0 + p.amax()) {
        return Err(Error::ConstraintViolated("initial curve must start at p".into()));
    }
    let disc = Discrete { cg, pc: *pc, n };
    let grid = uniform_grid(init.t_start(), init.t_end(), n);
    let mut x: Vec<Vector> = grid.iter().map(|&t| init.eval(t).0).collect();
    x[0] = p.clone();
    x = project(model, gamma, &x)?;
    let gcheck = gradient_check(&disc, &x)?;
    if gcheck > 1e-6 {
        log::warn!("oracle gradient disagrees with finite differences ({gcheck:e})");
    }
    let mut e = disc.total(&x)?;
    let mut history = vec![e];
    let mut alpha: f64 = 1.0;
    let mut stationarity = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let g = disc.gradient(&x)?;
        let d = preconditioned(cg, &x, &g)?;
        stationarity = match project(model, gamma, &step(&x, &d, 1.0)) {
            Ok(y) => max_diff(&y, &x),
            Err(_) => f64::INFINITY,
        };
        if stationarity < opts.tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            if let Ok(y) = project(model, gamma, &step(&x, &d, alpha)) {
                if let Ok(ey) = disc.total(&y) {
                    if ey < e {
                        x = y;
                        e = ey;
                        history.push(e);
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        alpha = (alpha * 2.0).min(1.0);
    }
    if stationarity > 1e3 * opts.tol {
        return Err(Error::Stalled(iterations));
    }
    let (raw, pen) = disc.energy(&x)?;
    let dt = disc.dt();
    let vels: Vec<Vector> = (0..=n)
        .map(|i| {
            if i == 0 {
                (&x[1] - &x[0]) / dt
            } else if i == n {
                (&x[n] - &x[n - 1]) / dt
            } else {
                (&x[i + 1] - &x[i - 1]) / (2.0 * dt)
            }
        })
        .collect();
    Ok(DiscreteCandidate {
        polyline: Curve::new(grid, x, vels)?,
        t_estimate: (2.0 * raw).sqrt(),
        constraint_penalty: pen,
        energy: raw + pen,
        iterations,
        stationarity,
        converged: stationarity < opts.tol,
        gradient_check: gcheck,
        energy_history: history,
    })
}

/// Chart straight line from p to the anchor, as a starting curve.
pub fn straight_initial_curve(model: &SpacetimeModel, p: &Vector, anchor: &Vector, n: usize) -> Result<Curve> {
    let d = model.displacement(p, anchor);
    Curve::from_fn(0.0, 1.0, n, |t| (p + &d * t, d.clone()))
}

// ---------------------------------------------------------------------------------------------
// Finite-difference families

/// Perturbation of the launch data (horizontal direction, travel time) at fixed p.
#[derive(Clone, Debug)]
pub struct InitialPerturbation {
    pub du: Vector,
    pub dt: f64,
}

fn launch_direction(model: &SpacetimeModel, sol: &BrachistochroneSolution) -> Result<Vector> {
    horizontal_unit(model, &sol.sigma.points[0], &sol.sigma.velocities[0])
}

fn family_config(sol: &BrachistochroneSolution) -> IntegrationConfig {
    IntegrationConfig { rtol: 1e-12, atol: 1e-12, n_grid: sol.sigma.n() }
}

/// Brachistochrones from p with launch data (u + s·du, T + s·dT) for each s; s = 0 returns sol.
pub fn fd_variation_family(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    pert: &InitialPerturbation,
    s_values: &[f64],
) -> Result<Vec<BrachistochroneSolution>> {
    let p = &sol.sigma.points[0];
    let u = launch_direction(model, sol)?;
    let cfg = family_config(sol);
    s_values
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return Ok(sol.clone());
            }
            let tt = sol.travel_time + s * pert.dt;
            let v0 = initial_velocity(model, sol.k, p, &(&u + &pert.du * s), tt)?;
            integrate_from_velocity(model, sol.k, tt, p, &v0, &cfg)
        })
        .collect()
}

/// Central difference (σ_s − σ_{−s})/2s of a launch-data family, with its component derivative.
pub fn fd_bjacobi_field(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    pert: &InitialPerturbation,
    s: f64,
) -> Result<FieldAlongCurve> {
    let fam = fd_variation_family(model, sol, pert, &[s, -s])?;
    Ok(central_difference(&fam[0].sigma, &fam[1].sigma, s))
}

fn central_difference(a: &Curve, b: &Curve, s: f64) -> FieldAlongCurve {
    let vals = a.points.iter().zip(&b.points).map(|(x, y)| (x - y) / (2.0 * s)).collect();
    let ders = a.velocities.iter().zip(&b.velocities).map(|(x, y)| (x - y) / (2.0 * s)).collect();
    FieldAlongCurve::with_derivative(a.grid.clone(), vals, ders)
}

/// h-length of a curve (fourth-order quadrature of the h-speed).
pub fn conformal_length(cg: &ConformalGeometry, w: &Curve) -> Result<f64> {
    let sp: Vec<f64> = w
        .points
        .iter()
        .zip(&w.velocities)
        .map(|(x, v)| Ok(v.dot(&(cg.metric(x)? * v)).sqrt()))
        .collect::<Result<_>>()?;
    Ok(*cumulative_integral(&w.grid, &sp).last().unwrap())
}

/// Reparametrisation of w on the same grid with constant h-speed.
pub fn constant_speed_reparametrization(cg: &ConformalGeometry, w: &Curve) -> Result<Curve> {
    let speed = |t: f64| -> Result<f64> {
        let (x, v) = w.eval(t);
        Ok(v.dot(&(cg.metric(&x)? * &v)).sqrt())
    };
    let sp: Vec<f64> = w.grid.iter().map(|&t| speed(t)).collect::<Result<_>>()?;
    let ell = cumulative_integral(&w.grid, &sp);
    let total = *ell.last().unwrap();
    let (a, b) = (w.t_start(), w.t_end());
    // arc length from grid node i to t by three-point Gauss–Legendre
    let partial = |i: usize, t: f64| -> Result<f64> {
        let t0 = w.grid[i];
        let hh = t - t0;
        if hh == 0.0 {
            return Ok(0.0);
        }
        let r = (0.6f64).sqrt();
        let mut acc = 0.0;
        for (xi, wi) in [(-r, 5.0 / 9.0), (0.0, 8.0 / 9.0), (r, 5.0 / 9.0)] {
            acc += wi * speed(t0 + 0.5 * hh * (1.0 + xi))?;
        }
        Ok(0.5 * hh * acc)
    };
    let mut points = Vec::with_capacity(w.grid.len());
    let mut vels = Vec::with_capacity(w.grid.len());
    for &u in &w.grid {
        let target = total * (u - a) / (b - a);
        let i = match ell.iter().position(|&l| l > target) {
            Some(0) => 0,
            Some(j) => j - 1,
            None => w.grid.len() - 2,
        };
        let mut t = w.grid[i] + (target - ell[i]) / sp[i].max(1e-300);
        t = t.clamp(w.grid[i], w.grid[i + 1]);
        for _ in 0..50 {
            let f = ell[i] + partial(i, t)? - target;
            let dtt = f / speed(t)?.max(1e-300);
            t = (t - dtt).clamp(a, b);
            if dtt.abs() < 1e-15 {
                break;
            }
        }
        let (x, v) = w.eval(t);
        let s = speed(t)?;
        points.push(x);
        vels.push(v * (total / ((b - a) * s.max(1e-300))));
    }
    Curve::new(w.grid.clone(), points, vels)
}

/// One member of a constrained family: σ_s = G(reparam(D(w + s·X))).
/// w is horizontal from p to γ; X must vanish at the start and be tangent to γ at the end.
pub fn constrained_member(
    cg: &ConformalGeometry,
    w: &Curve,
    x: &FieldAlongCurve,
    s: f64,
) -> Result<(BrachistochroneSolution, f64)> {
    x.check_host(w)?;
    let dx = x.component_derivative();
    let points: Vec<Vector> = w.points.iter().zip(&x.values).map(|(p, v)| p + v * s).collect();
    let vels: Vec<Vector> = w.velocities.iter().zip(&dx).map(|(p, v)| p + v * s).collect();
    let c = Curve::new(w.grid.clone(), points, vels)?;
    let horiz = deform_curve(&cg.model, &c)?.w;
    let length = conformal_length(cg, &horiz)?;
    let flat = constant_speed_reparametrization(cg, &horiz)?;
    let mut sol = lift_g(&cg.model, cg.k, &flat)?;
    sol.travel_time = length;
    Ok((sol, length))
}

/// A constrained variation of σ0 = G(reparam(D(w))) by central differences of the family:
/// returns (σ0, ζ, [T(σ_{−s}), T(σ0), T(σ_s)]).
pub fn fd_constrained_variation(
    cg: &ConformalGeometry,
    w: &Curve,
    x: &FieldAlongCurve,
    s: f64,
) -> Result<(BrachistochroneSolution, FieldAlongCurve, [f64; 3])> {
    let (sp, fp) = constrained_member(cg, w, x, s)?;
    let (s0, f0) = constrained_member(cg, w, x, 0.0)?;
    let (sm, fm) = constrained_member(cg, w, x, -s)?;
    let zeta = central_difference(&sp.sigma, &sm.sigma, s);
    Ok((s0, zeta, [fm, f0, fp]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_is_flat_at_cutoff() {
        let pc = PenaltyConfig::new(0.5).unwrap();
        assert_eq!(pc.chi_eps(1.9), 0.0);
        assert_eq!(pc.chi_eps(2.0), 0.0);
        assert!(pc.chi_eps(2.1) > 0.0 && pc.chi_eps(2.1) < 1e-3);
        assert!(chi(1e-3).abs() < 1e-9);
    }

    #[test]
    fn h1_solve_inverts_operator() {
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let dt = 0.25;
        let y = h1_solve(&b, dt);
        let n = b.len();
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { y[i - 1] };
            let d = 2.0 / dt + dt;
            let right = if i + 1 == n { 0.0 } else { y[i + 1] };
            let r = d * y[i] - (left + right) / dt;
            assert!((r - b[i]).abs() < 1e-12);
        }
    }
}
