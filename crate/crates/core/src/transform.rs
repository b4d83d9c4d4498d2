//! The deformation D onto horizontal curves, its differential, the left inverse G,
//! and the numerical check of the correspondence between brachistochrones and
//! horizontal geodesics of φ_k·g_R.

use serde::Serialize;

use crate::curves::{cumulative_integral, differentiate, Curve, FieldAlongCurve};
use crate::dynamics::{
    conformal_energy, geodesic_residual, horizontality, solution_from_curve,
    BrachistochroneSolution,
};
use crate::error::{Error, Result};
use crate::geometry::{Matrix, SpacetimeModel, Vector};
use crate::ode::rk5_fixed;
use crate::tolerances::TOL_TANGENT;

/// Largest flow-parameter increment of one fixed Runge–Kutta step.
const FLOW_STEP: f64 = 1e-2;
/// Base-point step for the Richardson-extrapolated differential of the flow.
const FLOW_FD_STEP: f64 = 1e-3;

/// ψ(x, s): the point reached from x after flowing for parameter s along Y.
pub fn killing_flow(model: &SpacetimeModel, x: &Vector, s: f64) -> Result<Vector> {
    model.check(x)?;
    if s == 0.0 {
        return Ok(x.clone());
    }
    if let Some(i) = model.killing_coordinate {
        let mut out = x.clone();
        out[i] += s;
        if !model.in_domain(&out) {
            return Err(Error::FlowEscape(x.iter().copied().collect()));
        }
        return Ok(out);
    }
    let n = (s.abs() / FLOW_STEP).ceil().max(1.0) as usize;
    let out = rk5_fixed(
        |_, y| {
            if model.in_domain(y) {
                model.killing(y)
            } else {
                Err(Error::FlowEscape(x.iter().copied().collect()))
            }
        },
        0.0,
        s,
        x,
        n,
    )?;
    if !model.in_domain(&out) {
        return Err(Error::FlowEscape(x.iter().copied().collect()));
    }
    Ok(out)
}

fn flow_jacobian_at_step(model: &SpacetimeModel, x: &Vector, s: f64, h: f64) -> Result<Matrix> {
    let m = model.m;
    let mut jac = Matrix::zeros(m, m);
    for j in 0..m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (killing_flow(model, &xp, s)? - killing_flow(model, &xm, s)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// dψ(x, s) as a matrix: central differences in the base point with one Richardson step.
pub fn killing_flow_differential(model: &SpacetimeModel, x: &Vector, s: f64) -> Result<Matrix> {
    if s == 0.0 {
        return Ok(Matrix::identity(model.m, model.m));
    }
    let d1 = flow_jacobian_at_step(model, x, s, FLOW_FD_STEP)?;
    let d2 = flow_jacobian_at_step(model, x, s, 0.5 * FLOW_FD_STEP)?;
    Ok((d2 * 4.0 - d1) / 3.0)
}

/// A curve slid along the Killing flow: w(t) = ψ(c(t), τ(t)).
#[derive(Clone, Debug)]
pub struct Deformation {
    pub w: Curve,
    pub tau: Vec<f64>,
    /// dψ(c(t_i), τ(t_i)) per node.
    pub jacobians: Vec<Matrix>,
}

/// Applies w = ψ(c, τ) with τ' = −⟨ċ,Y⟩/⟨Y,Y⟩, τ(t_start) = 0. No constraint check.
pub fn deform_curve(model: &SpacetimeModel, c: &Curve) -> Result<Deformation> {
    let n_nodes = c.grid.len();
    let mut dtau = Vec::with_capacity(n_nodes);
    for (x, v) in c.points.iter().zip(&c.velocities) {
        let y = model.killing(x)?;
        let q = model.yy(x)?;
        dtau.push(-model.dot(x, v, &y)? / q);
    }
    let tau = cumulative_integral(&c.grid, &dtau);
    let mut points = Vec::with_capacity(n_nodes);
    let mut vels = Vec::with_capacity(n_nodes);
    let mut jacobians = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &c.points[i];
        let y = model.killing(x)?;
        let jac = killing_flow_differential(model, x, tau[i])?;
        points.push(killing_flow(model, x, tau[i])?);
        vels.push(&jac * (&c.velocities[i] + y * dtau[i]));
        jacobians.push(jac);
    }
    Ok(Deformation { w: Curve::new(c.grid.clone(), points, vels)?, tau, jacobians })
}

fn check_constraints(sol: &BrachistochroneSolution) -> Result<()> {
    let kt = sol.k * sol.travel_time;
    let t2 = sol.travel_time * sol.travel_time;
    if !(sol.travel_time > 0.0) {
        return Err(Error::ConstraintViolated("travel time must be positive".into()));
    }
    if sol.residual_conservation_y > TOL_TANGENT * (1.0 + kt)
        || sol.residual_conservation_speed > TOL_TANGENT * (1.0 + t2)
    {
        return Err(Error::ConstraintViolated(format!(
            "conservation residuals {:e}, {:e}",
            sol.residual_conservation_y, sol.residual_conservation_speed
        )));
    }
    Ok(())
}

/// D(σ): the horizontal curve obtained by sliding σ along the Killing flow.
pub fn deform_d(model: &SpacetimeModel, sol: &BrachistochroneSolution) -> Result<Curve> {
    check_constraints(sol)?;
    Ok(deform_curve(model, &sol.sigma)?.w)
}

/// G(w): lifts a horizontal curve through w(t) ↦ ψ(w(t), h_w(t)), h_w' = −kT/⟨Y,Y⟩,
/// T = √(φ_k g_R(ẇ(0),ẇ(0))). Constraints are reported a posteriori in the residual fields.
pub fn lift_g(model: &SpacetimeModel, k: f64, w: &Curve) -> Result<BrachistochroneSolution> {
    let (hmax, smax) = horizontality(model, w)?;
    if hmax > crate::tolerances::TOL_HORIZONTAL * smax.max(1e-300) {
        return Err(Error::NotHorizontal(hmax));
    }
    let x0 = &w.points[0];
    let v0 = &w.velocities[0];
    let gr0 = model.riemannian_metric(x0)?;
    let t_travel = (model.conformal_factor(x0, k)? * v0.dot(&(&gr0 * v0))).sqrt();
    let n_nodes = w.grid.len();
    let mut dh = Vec::with_capacity(n_nodes);
    for x in &w.points {
        model.conformal_factor(x, k)?;
        dh.push(-k * t_travel / model.yy(x)?);
    }
    let h = cumulative_integral(&w.grid, &dh);
    let mut points = Vec::with_capacity(n_nodes);
    let mut vels = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &w.points[i];
        let y = model.killing(x)?;
        let jac = killing_flow_differential(model, x, h[i])?;
        points.push(killing_flow(model, x, h[i])?);
        vels.push(jac * (&w.velocities[i] + y * dh[i]));
    }
    let sigma = Curve::new(w.grid.clone(), points, vels)?;
    solution_from_curve(model, k, t_travel, sigma)
}

/// The differential of D on a curve c with constants (k, T): returns
/// dψ(c, τ_c)[ζ + τ_ζ Y] with τ_ζ = −∫ (C_ζ⟨Y,Y⟩ + 2kT⟨∇_ζY,Y⟩)/⟨Y,Y⟩², integrated from the
/// first grid node. Used on [0,1] for dD and on [t0,1] for the maps L_{t0}.
pub fn deformation_differential(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    c: &Curve,
    zeta: &FieldAlongCurve,
) -> Result<FieldAlongCurve> {
    zeta.check_host(c)?;
    let rep = crate::variation::constraint_report_on(model, k, t_travel, c, zeta)?;
    let scale = (1.0 + rep.field_scale) * (1.0 + k * t_travel);
    if rep.residual_y > TOL_TANGENT * scale || rep.residual_speed > TOL_TANGENT * scale {
        return Err(Error::ConstraintViolated(format!(
            "tangent-space residuals {:e}, {:e}",
            rep.residual_y, rep.residual_speed
        )));
    }
    let cz = rep.c_zeta;
    let def = deform_curve(model, c)?;
    let n_nodes = c.grid.len();
    let mut integrand = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &c.points[i];
        let y = model.killing(x)?;
        let q = model.yy(x)?;
        let dzy = model.nabla_killing(x)? * &zeta.values[i];
        let e = model.dot(x, &dzy, &y)?;
        integrand.push(-(cz * q + 2.0 * k * t_travel * e) / (q * q));
    }
    let tau_z = cumulative_integral(&c.grid, &integrand);
    let mut values = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let y = model.killing(&c.points[i])?;
        values.push(&def.jacobians[i] * (&zeta.values[i] + y * tau_z[i]));
    }
    let derivative = differentiate(&c.grid, &values, 4);
    Ok(FieldAlongCurve::with_derivative(c.grid.clone(), values, derivative))
}

/// dD(σ)[ζ].
pub fn dd_differential(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    zeta: &FieldAlongCurve,
) -> Result<FieldAlongCurve> {
    deformation_differential(model, sol.k, sol.travel_time, &sol.sigma, zeta)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub geodesic_residual: f64,
    pub energy_value: f64,
    pub energy_vs_half_t2: f64,
    pub roundtrip_error: f64,
    pub horizontality: f64,
}

/// Largest node-wise g_R distance between two curves sampled on the same grid.
pub fn curve_distance(model: &SpacetimeModel, a: &Curve, b: &Curve) -> Result<f64> {
    if a.grid.len() != b.grid.len() {
        return Err(Error::GridMismatch("curves sampled on different grids".into()));
    }
    let mut d: f64 = 0.0;
    for (x, y) in a.points.iter().zip(&b.points) {
        d = d.max(model.riemannian_distance(x, y)?);
    }
    Ok(d)
}

pub fn correspondence_report(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
) -> Result<CorrespondenceReport> {
    let w = deform_d(model, sol)?;
    let gres = geodesic_residual(model, sol.k, &w)?;
    let energy = conformal_energy(model, sol.k, &w)?;
    let back = lift_g(model, sol.k, &w)?;
    let roundtrip = curve_distance(model, &back.sigma, &sol.sigma)?;
    let (hmax, _) = horizontality(model, &w)?;
    Ok(CorrespondenceReport {
        geodesic_residual: gres,
        energy_value: energy,
        energy_vs_half_t2: (energy - 0.5 * sol.travel_time * sol.travel_time).abs(),
        roundtrip_error: roundtrip,
        horizontality: hmax,
    })
}
