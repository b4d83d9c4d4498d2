//! The brachistochrone equation, its constrained initial data, conservation monitors,
//! and geodesics of the conformal metric φ_k·g_R.

use std::sync::Arc;

use serde::Serialize;

use crate::curves::{differentiate, uniform_grid, Curve};
use crate::error::{Error, Result};
use crate::geometry::{conformal_geometry, Event, SpacetimeModel, Tangent, Vector};
use crate::ode::{dopri5, DenseSolution, OdeOptions};
use crate::tolerances::{GRID_N, ODE_ATOL, ODE_RTOL, TOL_HORIZONTAL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegrationConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Number of grid intervals of the output curve.
    pub n_grid: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig { rtol: ODE_RTOL, atol: ODE_ATOL, n_grid: GRID_N }
    }
}

impl IntegrationConfig {
    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions::with_tol(self.rtol, self.atol)
    }
}

/// A brachistochrone σ on [0,1] with its travel time T and energy k.
#[derive(Clone, Debug)]
pub struct BrachistochroneSolution {
    pub sigma: Curve,
    pub travel_time: f64,
    pub k: f64,
    /// max_t |⟨σ̇,Y⟩ + kT|
    pub residual_conservation_y: f64,
    /// max_t |⟨σ̇,σ̇⟩ + T²|
    pub residual_conservation_speed: f64,
    /// max-norm of the brachistochrone equation evaluated on the stored samples
    pub residual_ode: f64,
    /// Continuous extension of the integration, state (x, ẋ), when the curve came from the integrator.
    pub dense: Option<Arc<DenseSolution>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub n_grid: usize,
    pub max_y: f64,
    pub max_speed: f64,
    pub l2_y: f64,
    pub l2_speed: f64,
}

/// Coordinate acceleration ẍ of the brachistochrone equation
/// ∇_σ̇σ̇ = −(2k²η/P) σ̇ − (2kT/q) ∇_σ̇Y + (2kTη/P) Y,
/// with q = ⟨Y,Y⟩, η = ⟨∇_σ̇Y,Y⟩, P = q(k²+q).
pub fn brachistochrone_acceleration(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    x: &Vector,
    v: &Vector,
) -> Result<Vector> {
    let g = model.metric(x)?;
    let y = model.killing(x)?;
    let q = y.dot(&(&g * &y));
    if !(q < 0.0) {
        return Err(Error::DegenerateKilling(q));
    }
    let margin = k * k + q;
    if !(margin > 0.0) {
        return Err(Error::OutsideUk { coords: x.iter().copied().collect(), margin });
    }
    let gam = model.christoffel(x)?;
    let dy = model.nabla_killing(x)? * v;
    let eta = dy.dot(&(&g * &y));
    let p = q * margin;
    let alpha = 2.0 * k * k * eta / p;
    let beta = 2.0 * k * t_travel / q;
    let c = -2.0 * k * t_travel * eta / p;
    let cov = -(v * alpha + &dy * beta + &y * c);
    Ok(cov - gam.contract(v, v))
}

/// Returns (σ̇, σ̈) for the state (σ, σ̇).
pub fn brachistochrone_rhs(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    state: (&Event, &Tangent),
) -> Result<(Tangent, Tangent)> {
    let (x, v) = state;
    let a = brachistochrone_acceleration(model, k, t_travel, &x.coords, &v.components)?;
    Ok((v.clone(), Tangent { base: x.clone(), components: a }))
}

/// g_R-normalised horizontal part of a seed direction.
pub fn horizontal_unit(model: &SpacetimeModel, p: &Vector, seed: &Vector) -> Result<Vector> {
    let h = model.horizontal_part(p, seed)?;
    let gr = model.riemannian_metric(p)?;
    let n2 = h.dot(&(&gr * &h));
    let scale = seed.dot(&(&gr * seed)).sqrt();
    if !(n2.sqrt() > 1e-12 * scale.max(1e-300)) {
        return Err(Error::ZeroSeed);
    }
    Ok(h / n2.sqrt())
}

/// σ̇(0) = (T/√−q)(k·Ŷ + √(k²+q)·u), the unique initial velocity with ⟨σ̇,Y⟩ = −kT and
/// ⟨σ̇,σ̇⟩ = −T² whose horizontal direction is u.
pub fn initial_velocity(
    model: &SpacetimeModel,
    k: f64,
    p: &Vector,
    u: &Vector,
    t_travel: f64,
) -> Result<Vector> {
    if !(t_travel > 0.0) {
        return Err(Error::ConstraintViolated(format!("travel time must be positive, got {t_travel}")));
    }
    let q = model.yy(p)?;
    let margin = k * k + q;
    if !(margin > 0.0) {
        return Err(Error::OutsideUk { coords: p.iter().copied().collect(), margin });
    }
    let u = horizontal_unit(model, p, u)?;
    let y = model.killing(p)?;
    let sq = (-q).sqrt();
    let yhat = y / sq;
    Ok((yhat * k + u * margin.sqrt()) * (t_travel / sq))
}

fn residuals_on(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    pts: &[Vector],
    vels: &[Vector],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ry = Vec::with_capacity(pts.len());
    let mut rs = Vec::with_capacity(pts.len());
    for (x, v) in pts.iter().zip(vels) {
        let g = model.metric(x)?;
        let y = model.killing(x)?;
        let gv = &g * v;
        ry.push((gv.dot(&y) + k * t_travel).abs());
        rs.push((gv.dot(v) + t_travel * t_travel).abs());
    }
    Ok((ry, rs))
}

/// max-norm over nodes of dv/dt − a(x,v), with dv/dt from fourth-order differences.
pub fn ode_residual(model: &SpacetimeModel, k: f64, t_travel: f64, c: &Curve) -> Result<f64> {
    let dv = differentiate(&c.grid, &c.velocities, 4);
    let mut r: f64 = 0.0;
    for i in 0..c.grid.len() {
        let a = brachistochrone_acceleration(model, k, t_travel, &c.points[i], &c.velocities[i])?;
        r = r.max((&dv[i] - a).amax());
    }
    Ok(r)
}

/// Wraps an already sampled curve as a solution candidate, filling in the residual fields.
pub fn solution_from_curve(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    sigma: Curve,
) -> Result<BrachistochroneSolution> {
    let (ry, rs) = residuals_on(model, k, t_travel, &sigma.points, &sigma.velocities)?;
    let residual_ode = ode_residual(model, k, t_travel, &sigma)?;
    Ok(BrachistochroneSolution {
        travel_time: t_travel,
        k,
        residual_conservation_y: ry.iter().copied().fold(0.0, f64::max),
        residual_conservation_speed: rs.iter().copied().fold(0.0, f64::max),
        residual_ode,
        sigma,
        dense: None,
    })
}

fn split_state(s: &Vector, m: usize) -> (Vector, Vector) {
    (s.rows(0, m).into_owned(), s.rows(m, m).into_owned())
}

/// Integrates the brachistochrone equation from (x0, v0) with a given T over [0,1].
pub fn integrate_from_velocity(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    x0: &Vector,
    v0: &Vector,
    config: &IntegrationConfig,
) -> Result<BrachistochroneSolution> {
    let m = model.m;
    let mut y0 = Vector::zeros(2 * m);
    y0.rows_mut(0, m).copy_from(x0);
    y0.rows_mut(m, m).copy_from(v0);
    let rhs = |_t: f64, s: &Vector| -> Result<Vector> {
        let (x, v) = split_state(s, m);
        let a = brachistochrone_acceleration(model, k, t_travel, &x, &v)?;
        let mut out = Vector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&v);
        out.rows_mut(m, m).copy_from(&a);
        Ok(out)
    };
    let dense = dopri5(rhs, 0.0, 1.0, &y0, &config.ode_options())?;
    let sigma = sample_dense(&dense, m, config.n_grid)?;
    let mut sol = solution_from_curve(model, k, t_travel, sigma)?;
    sol.dense = Some(Arc::new(dense));
    Ok(sol)
}

fn sample_dense(dense: &DenseSolution, m: usize, n: usize) -> Result<Curve> {
    let grid = uniform_grid(0.0, 1.0, n);
    let (points, vels) = grid
        .iter()
        .map(|&t| {
            let s = if t == 1.0 { dense.y_end.clone() } else { dense.eval(t) };
            split_state(&s, m)
        })
        .unzip();
    Curve::new(grid, points, vels)
}

/// Integrates the brachistochrone launched from p in horizontal direction u with travel time T.
pub fn integrate_brachistochrone(
    model: &SpacetimeModel,
    k: f64,
    p: &Event,
    u: &Tangent,
    t_travel: f64,
    config: &IntegrationConfig,
) -> Result<BrachistochroneSolution> {
    let v0 = initial_velocity(model, k, &p.coords, &u.components, t_travel)?;
    integrate_from_velocity(model, k, t_travel, &p.coords, &v0, config)
}

/// Recomputes both conservation residuals on a grid twice as fine as the stored one.
pub fn conservation_report(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
) -> Result<ConservationReport> {
    let n = 2 * sol.sigma.n();
    let m = model.m;
    let (pts, vels): (Vec<Vector>, Vec<Vector>) = match &sol.dense {
        Some(d) => uniform_grid(0.0, 1.0, n)
            .iter()
            .map(|&t| split_state(&if t == 1.0 { d.y_end.clone() } else { d.eval(t) }, m))
            .unzip(),
        None => {
            let c = crate::curves::resample_curve(&sol.sigma, n)?;
            (c.points, c.velocities)
        }
    };
    let (ry, rs) = residuals_on(model, sol.k, sol.travel_time, &pts, &vels)?;
    let l2 = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    Ok(ConservationReport {
        n_grid: n,
        max_y: ry.iter().copied().fold(0.0, f64::max),
        max_speed: rs.iter().copied().fold(0.0, f64::max),
        l2_y: l2(&ry),
        l2_speed: l2(&rs),
    })
}

/// Geodesic of φ_k·g_R from a horizontal initial velocity, sampled on [0,1].
pub fn integrate_conformal_geodesic(
    model: &SpacetimeModel,
    k: f64,
    q: &Event,
    v: &Tangent,
    config: &IntegrationConfig,
) -> Result<Curve> {
    let cg = conformal_geometry(model, k)?;
    let x0 = &q.coords;
    let v0 = &v.components;
    cg.phi(x0)?;
    let g = model.metric(x0)?;
    let y = model.killing(x0)?;
    let gr = model.riemannian_metric(x0)?;
    let speed = v0.dot(&(&gr * v0)).sqrt();
    let ynorm = y.dot(&(&gr * &y)).sqrt();
    if speed == 0.0 {
        return Err(Error::ZeroSeed);
    }
    let vy = v0.dot(&(&g * &y));
    if vy.abs() > 1e-8 * speed * ynorm {
        return Err(Error::NotHorizontal(vy.abs()));
    }
    let m = model.m;
    let mut y0 = Vector::zeros(2 * m);
    y0.rows_mut(0, m).copy_from(x0);
    y0.rows_mut(m, m).copy_from(v0);
    let rhs = |_t: f64, s: &Vector| -> Result<Vector> {
        let (x, v) = split_state(s, m);
        let gam = cg.christoffel(&x)?;
        let mut out = Vector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&v);
        out.rows_mut(m, m).copy_from(&(-gam.contract(&v, &v)));
        Ok(out)
    };
    let dense = dopri5(rhs, 0.0, 1.0, &y0, &config.ode_options())?;
    sample_dense(&dense, m, config.n_grid)
}

/// max_t |⟨ẇ,Y⟩| and the largest g_R speed along w.
pub fn horizontality(model: &SpacetimeModel, w: &Curve) -> Result<(f64, f64)> {
    let mut hmax: f64 = 0.0;
    let mut smax: f64 = 0.0;
    for (x, v) in w.points.iter().zip(&w.velocities) {
        let g = model.metric(x)?;
        let y = model.killing(x)?;
        let gr = model.riemannian_metric(x)?;
        hmax = hmax.max(v.dot(&(&g * &y)).abs());
        smax = smax.max(v.dot(&(&gr * v)).sqrt());
    }
    Ok((hmax, smax))
}

/// max-norm over nodes of ∇_ẇ[φ_k ẇ] − ½ ∇φ_k ⟨ẇ,ẇ⟩ (Lorentzian connection and gradient).
pub fn geodesic_residual(model: &SpacetimeModel, k: f64, w: &Curve) -> Result<f64> {
    let (hmax, smax) = horizontality(model, w)?;
    if hmax > TOL_HORIZONTAL * smax.max(1e-300) {
        return Err(Error::NotHorizontal(hmax));
    }
    let cg = conformal_geometry(model, k)?;
    let n_nodes = w.grid.len();
    let mut phis = Vec::with_capacity(n_nodes);
    let mut pv = Vec::with_capacity(n_nodes);
    for (x, v) in w.points.iter().zip(&w.velocities) {
        let phi = cg.phi(x)?;
        phis.push(phi);
        pv.push(v * phi);
    }
    let dpv = differentiate(&w.grid, &pv, 4);
    let mut r: f64 = 0.0;
    for i in 0..n_nodes {
        let x = &w.points[i];
        let v = &w.velocities[i];
        let gam = model.christoffel(x)?;
        let ginv = model.inverse_metric(x)?;
        let grad = ginv * cg.phi_gradient(x)?;
        let vv = model.dot(x, v, v)?;
        let res = &dpv[i] + gam.contract(v, &pv[i]) - grad * (0.5 * vv);
        r = r.max(res.amax());
    }
    Ok(r)
}

/// E_φ(w) = ½ ∫ φ_k g_R(ẇ,ẇ) dt.
pub fn conformal_energy(model: &SpacetimeModel, k: f64, w: &Curve) -> Result<f64> {
    let mut vals = Vec::with_capacity(w.grid.len());
    for (x, v) in w.points.iter().zip(&w.velocities) {
        let gr = model.riemannian_metric(x)?;
        vals.push(0.5 * model.conformal_factor(x, k)? * v.dot(&(&gr * v)));
    }
    Ok(crate::curves::integrate(&w.grid, &vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn minkowski_straight_line() {
        let m = models::minkowski3();
        let k = 2f64.sqrt();
        let p = Event::new(&[0.0, 0.0, 0.0]);
        let u = Tangent::new(&p, &[1.0, 0.0, 0.0]);
        let sol = integrate_brachistochrone(&m, k, &p, &u, 1.0, &IntegrationConfig::default()).unwrap();
        for (i, &t) in sol.sigma.grid.iter().enumerate() {
            let x = &sol.sigma.points[i];
            assert!((x[0] - t).abs() < 1e-12 && x[1].abs() < 1e-12 && (x[2] - k * t).abs() < 1e-12);
        }
        assert!(sol.residual_conservation_y < 1e-10 && sol.residual_conservation_speed < 1e-10);
    }

    #[test]
    fn initial_velocity_satisfies_constraints() {
        let m = models::rotating_frame(0.3);
        let p = Vector::from_vec(vec![0.4, -0.2, 0.0]);
        let k = 1.5;
        let v = initial_velocity(&m, k, &p, &Vector::from_vec(vec![0.3, 1.0, 0.7]), 2.0).unwrap();
        let y = m.killing(&p).unwrap();
        assert!((m.dot(&p, &v, &y).unwrap() + k * 2.0).abs() < 1e-12);
        assert!((m.dot(&p, &v, &v).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_geodesic_circle_detected() {
        let m = models::einstein_cylinder();
        let th = 1.0f64;
        let w = Curve::from_fn(0.0, 1.0, 200, |t| {
            (
                Vector::from_vec(vec![th, 2.0 * t, 0.0]),
                Vector::from_vec(vec![0.0, 2.0, 0.0]),
            )
        })
        .unwrap();
        assert!(geodesic_residual(&m, 2f64.sqrt(), &w).unwrap() >= 1e-2);
    }
}
