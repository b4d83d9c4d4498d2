//! First and second variations: tangent-space constraints, dT, the Hessian of the action F,
//! the index form and Hessian of E_φ, and discretised Morse indices.

use serde::Serialize;

use crate::curves::{cumulative_integral, integrate, Curve, FieldAlongCurve};
use crate::dynamics::{geodesic_residual, BrachistochroneSolution};
use crate::error::{Error, Result};
use crate::geometry::{ConformalGeometry, Event, Matrix, SpacetimeModel, Tangent, Vector};
use crate::tolerances::{EIG_REL, TOL_TANGENT};

/// Relative geodesic-residual threshold used as a precondition for the Riemannian Hessians.
const TOL_GEODESIC: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationConstraintReport {
    pub c_zeta: f64,
    pub residual_y: f64,
    pub residual_speed: f64,
    pub boundary_ok: bool,
    /// max |ζ| + max |∇ζ| in chart components, for relative tolerances.
    pub field_scale: f64,
}

/// λ ≡ 0 and μ(t) = 1/(2(k²+⟨Y,Y⟩)) along σ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangeMultiplierField {
    pub lambda: f64,
    pub mu: Vec<f64>,
}

pub fn lagrange_multipliers(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
) -> Result<LagrangeMultiplierField> {
    let mut mu = Vec::with_capacity(sol.sigma.grid.len());
    for x in &sol.sigma.points {
        let margin = sol.k * sol.k + model.yy(x)?;
        if !(margin > 0.0) {
            return Err(Error::OutsideUk { coords: x.iter().copied().collect(), margin });
        }
        mu.push(0.5 / margin);
    }
    Ok(LagrangeMultiplierField { lambda: 0.0, mu })
}

/// Lorentzian covariant derivative ∇_ċ f using stored or fourth-order component derivatives.
pub fn lorentz_derivative(model: &SpacetimeModel, c: &Curve, f: &FieldAlongCurve) -> Result<Vec<Vector>> {
    f.check_host(c)?;
    let d = f.component_derivative();
    let mut out = Vec::with_capacity(d.len());
    for i in 0..c.grid.len() {
        let gam = model.christoffel(&c.points[i])?;
        out.push(&d[i] + gam.contract(&c.velocities[i], &f.values[i]));
    }
    Ok(out)
}

/// Tangent-space constraint data of ζ along a curve c with constants (k, T).
pub fn constraint_report_on(
    model: &SpacetimeModel,
    k: f64,
    t_travel: f64,
    c: &Curve,
    zeta: &FieldAlongCurve,
) -> Result<VariationConstraintReport> {
    let nz = lorentz_derivative(model, c, zeta)?;
    let n_nodes = c.grid.len();
    let mut f = Vec::with_capacity(n_nodes);
    let mut sp = Vec::with_capacity(n_nodes);
    let mut scale: f64 = 0.0;
    let mut dscale: f64 = 0.0;
    for i in 0..n_nodes {
        let x = &c.points[i];
        let y = model.killing(x)?;
        let dy = model.nabla_killing(x)? * &c.velocities[i];
        f.push(model.dot(x, &nz[i], &y)? - model.dot(x, &zeta.values[i], &dy)?);
        sp.push(model.dot(x, &nz[i], &c.velocities[i])?);
        scale = scale.max(zeta.values[i].amax());
        dscale = dscale.max(nz[i].amax());
    }
    let len = c.t_end() - c.t_start();
    let cz = integrate(&c.grid, &f) / len;
    let residual_y = f.iter().map(|v| (v - cz).abs()).fold(0.0, f64::max);
    let residual_speed =
        sp.iter().map(|v| (v - t_travel * cz / k).abs()).fold(0.0, f64::max);
    let z0 = zeta.values[0].amax();
    let xe = c.points.last().unwrap();
    let ze = zeta.values.last().unwrap();
    let ye = model.killing(xe)?;
    let nu = model.dot(xe, ze, &ye)? / model.yy(xe)?;
    let perp = (ze - ye * nu).amax();
    let tol = 1e-8 * (scale + dscale).max(1e-300);
    Ok(VariationConstraintReport {
        c_zeta: cz,
        residual_y,
        residual_speed,
        boundary_ok: z0 <= tol && perp <= 1e-6 * (scale + dscale).max(1e-300),
        field_scale: scale + dscale,
    })
}

pub fn constraint_residual(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    zeta: &FieldAlongCurve,
) -> Result<VariationConstraintReport> {
    constraint_report_on(model, sol.k, sol.travel_time, &sol.sigma, zeta)
}

fn check_admissible(
    rep: &VariationConstraintReport,
    k: f64,
    t_travel: f64,
) -> Result<()> {
    let scale = (1.0 + rep.field_scale) * (1.0 + k * t_travel);
    if rep.residual_y > TOL_TANGENT * scale || rep.residual_speed > TOL_TANGENT * scale {
        return Err(Error::ConstraintViolated(format!(
            "tangent-space residuals {:e} (Y), {:e} (speed)",
            rep.residual_y, rep.residual_speed
        )));
    }
    Ok(())
}

/// dT(σ)[ζ] = −C_ζ/k.
pub fn travel_time_differential(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    zeta: &FieldAlongCurve,
) -> Result<f64> {
    let rep = constraint_residual(model, sol, zeta)?;
    check_admissible(&rep, sol.k, sol.travel_time)?;
    Ok(-rep.c_zeta / sol.k)
}

fn check_critical(sol: &BrachistochroneSolution) -> Result<()> {
    let scale = 1.0 + sol.travel_time * sol.travel_time;
    if sol.residual_ode > TOL_GEODESIC * scale {
        return Err(Error::NotCritical(format!("equation residual {:e}", sol.residual_ode)));
    }
    Ok(())
}

/// Quadratic form of the Hessian of F = −½T² at a brachistochrone, for C_ζ = 0:
/// ∫ q/(k²+q)[⟨∇ζ,∇ζ⟩ + ⟨R(ζ,σ̇)ζ,σ̇⟩] + 2kT ∫ [⟨∇ζ,∇_ζY⟩ + ⟨R(ζ,σ̇)ζ,Y⟩]/(k²+q)
/// + q/(k²+q) a² ⟨∇_YY, σ̇⟩ at t=1, where ζ(1) = aY.
fn hessian_f_quadratic(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    z: &FieldAlongCurve,
    nz: &[Vector],
) -> Result<f64> {
    let c = &sol.sigma;
    let k = sol.k;
    let tt = sol.travel_time;
    let n_nodes = c.grid.len();
    let mut vals = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &c.points[i];
        let v = &c.velocities[i];
        let zi = &z.values[i];
        let g = model.metric(x)?;
        let y = model.killing(x)?;
        let q = y.dot(&(&g * &y));
        let margin = k * k + q;
        let rz = model.curvature(x)?.apply(zi, v, zi);
        let dzy = model.nabla_killing(x)? * zi;
        let gn = &g * &nz[i];
        let grz = &g * &rz;
        let a = q / margin * (gn.dot(&nz[i]) + grz.dot(v));
        let b = 2.0 * k * tt * (gn.dot(&dzy) + grz.dot(&y)) / margin;
        vals.push(a + b);
    }
    let xe = c.points.last().unwrap();
    let ye = model.killing(xe)?;
    let qe = model.yy(xe)?;
    let ae = model.dot(xe, z.values.last().unwrap(), &ye)? / qe;
    let yy = model.nabla_killing(xe)? * &ye;
    let boundary = qe / (k * k + qe) * ae * ae * model.dot(xe, &yy, c.velocities.last().unwrap())?;
    Ok(integrate(&c.grid, &vals) + boundary)
}

/// H^F(σ)[z1, z2] by polarisation of the quadratic form.
pub fn hessian_f_eval(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    z1: &FieldAlongCurve,
    z2: &FieldAlongCurve,
) -> Result<f64> {
    check_critical(sol)?;
    for z in [z1, z2] {
        let rep = constraint_residual(model, sol, z)?;
        check_admissible(&rep, sol.k, sol.travel_time)?;
    }
    let plus = z1.lin_comb(1.0, z2, 1.0);
    let minus = z1.lin_comb(1.0, z2, -1.0);
    let np = lorentz_derivative(model, &sol.sigma, &plus)?;
    let nm = lorentz_derivative(model, &sol.sigma, &minus)?;
    Ok(0.25
        * (hessian_f_quadratic(model, sol, &plus, &np)?
            - hessian_f_quadratic(model, sol, &minus, &nm)?))
}

/// h, Γ^k(ẇ,·) and the symmetrised h·R^k(ẇ,·)ẇ at one node.
#[derive(Clone, Debug)]
pub struct ConformalNode {
    pub h: Matrix,
    pub a: Matrix,
    pub hm: Matrix,
}

pub fn conformal_node(cg: &ConformalGeometry, x: &Vector, v: &Vector) -> Result<ConformalNode> {
    let h = cg.metric(x)?;
    let a = cg.christoffel(x)?.along(v);
    let m = cg.curvature(x)?.jacobi_operator(v);
    let hm = &h * m;
    let hm = (&hm + hm.transpose()) * 0.5;
    Ok(ConformalNode { h, a, hm })
}

/// Relative geodesic check used by the Riemannian Hessians.
pub fn check_geodesic(cg: &ConformalGeometry, w: &Curve) -> Result<()> {
    let r = geodesic_residual(&cg.model, cg.k, w)?;
    let mut e: f64 = 0.0;
    for (x, v) in w.points.iter().zip(&w.velocities) {
        e = e.max(cg.metric(x)?.quadratic_form(v));
    }
    if r > TOL_GEODESIC * (1.0 + e) {
        return Err(Error::NotGeodesic(r));
    }
    Ok(())
}

trait Quadratic {
    fn quadratic_form(&self, v: &Vector) -> f64;
}

impl Quadratic for Matrix {
    fn quadratic_form(&self, v: &Vector) -> f64 {
        v.dot(&(self * v))
    }
}

fn conformal_nodes(cg: &ConformalGeometry, w: &Curve) -> Result<Vec<ConformalNode>> {
    w.points.iter().zip(&w.velocities).map(|(x, v)| conformal_node(cg, x, v)).collect()
}

fn index_form_with(
    nodes: &[ConformalNode],
    w: &Curve,
    v1: &FieldAlongCurve,
    v2: &FieldAlongCurve,
) -> Result<f64> {
    v1.check_host(w)?;
    v2.check_host(w)?;
    let d1 = v1.component_derivative();
    let d2 = v2.component_derivative();
    let vals: Vec<f64> = (0..w.grid.len())
        .map(|i| {
            let nd = &nodes[i];
            let n1 = &d1[i] + &nd.a * &v1.values[i];
            let n2 = &d2[i] + &nd.a * &v2.values[i];
            n1.dot(&(&nd.h * n2)) + v1.values[i].dot(&(&nd.hm * &v2.values[i]))
        })
        .collect();
    Ok(integrate(&w.grid, &vals))
}

/// I(V1,V2) = ∫ h(∇^k V1, ∇^k V2) + h(R^k(ẇ,V1)ẇ, V2), h = φ_k g_R.
pub fn index_form(
    cg: &ConformalGeometry,
    w: &Curve,
    v1: &FieldAlongCurve,
    v2: &FieldAlongCurve,
) -> Result<f64> {
    check_geodesic(cg, w)?;
    let nodes = conformal_nodes(cg, w)?;
    index_form_with(&nodes, w, v1, v2)
}

/// Coefficient a with V = a·Y at a point of γ, or NotTangentToGamma. `scale` is the size of
/// the whole field, so that a vanishing endpoint value is accepted.
fn gamma_coefficient(model: &SpacetimeModel, x: &Vector, v: &Vector, scale: f64) -> Result<f64> {
    let y = model.killing(x)?;
    let a = model.dot(x, v, &y)? / model.yy(x)?;
    let res = (v - &y * a).amax();
    if res > 1e-6 * (v.amax() + y.amax() * a.abs()) + 1e-9 * scale {
        return Err(Error::NotTangentToGamma(res));
    }
    Ok(a)
}

/// Riemannian Hessian of E_φ for w running from γ (t=0) to p (t=1):
/// I(V1,V2) − a1·a2·h(∇^k_Y Y, ẇ(0)) with V_i(0) = a_i·Y.
pub fn hessian_e_eval(
    cg: &ConformalGeometry,
    w: &Curve,
    v1: &FieldAlongCurve,
    v2: &FieldAlongCurve,
) -> Result<f64> {
    check_geodesic(cg, w)?;
    let nodes = conformal_nodes(cg, w)?;
    hessian_e_with(cg, &nodes, w, v1, v2)
}

fn hessian_e_with(
    cg: &ConformalGeometry,
    nodes: &[ConformalNode],
    w: &Curve,
    v1: &FieldAlongCurve,
    v2: &FieldAlongCurve,
) -> Result<f64> {
    let x0 = &w.points[0];
    let a1 = gamma_coefficient(&cg.model, x0, &v1.values[0], v1.max_norm())?;
    let a2 = gamma_coefficient(&cg.model, x0, &v2.values[0], v2.max_norm())?;
    let y = cg.model.killing(x0)?;
    let yy = cg.nabla_killing(x0)? * &y;
    let boundary = a1 * a2 * yy.dot(&(&nodes[0].h * &w.velocities[0]));
    Ok(index_form_with(nodes, w, v1, v2)? - boundary)
}

/// Hessian of E_φ for many pairs on the same curve, sharing the per-node geometry.
pub struct HessianEvaluator<'a> {
    cg: &'a ConformalGeometry,
    w: &'a Curve,
    nodes: Vec<ConformalNode>,
}

impl<'a> HessianEvaluator<'a> {
    pub fn new(cg: &'a ConformalGeometry, w: &'a Curve) -> Result<Self> {
        check_geodesic(cg, w)?;
        Ok(HessianEvaluator { cg, w, nodes: conformal_nodes(cg, w)? })
    }

    pub fn eval(&self, v1: &FieldAlongCurve, v2: &FieldAlongCurve) -> Result<f64> {
        hessian_e_with(self.cg, &self.nodes, self.w, v1, v2)
    }
}

fn phi_hessian(cg: &ConformalGeometry, x: &Vector) -> Result<Matrix> {
    let m = cg.model.m;
    let h = 1e-4;
    let mut out = Matrix::zeros(m, m);
    for j in 0..m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (cg.phi_gradient(&xp)? - cg.phi_gradient(&xm)?) / (2.0 * h);
        out.set_column(j, &col);
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// Quadratic part of the Lorentzian expression, w from p (t=0) to γ (t=1).
fn hessian_e_lorentz_quadratic(cg: &ConformalGeometry, w: &Curve, v: &FieldAlongCurve) -> Result<f64> {
    let model = &cg.model;
    let nv = lorentz_derivative(model, w, v)?;
    let n_nodes = w.grid.len();
    let mut vals = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &w.points[i];
        let wd = &w.velocities[i];
        let vi = &v.values[i];
        let g = model.metric(x)?;
        let phi = cg.phi(x)?;
        let dphi = cg.phi_gradient(x)?;
        let gam = model.christoffel(x)?;
        let hess = phi_hessian(cg, x)? - Matrix::from_fn(cg.model.m, cg.model.m, |a, b| {
            (0..cg.model.m).map(|c| gam.get(c, a, b) * dphi[c]).sum::<f64>()
        });
        let rv = model.curvature(x)?.apply(vi, wd, vi);
        let gn = &g * &nv[i];
        let term = phi * (gn.dot(&nv[i]) + rv.dot(&(&g * wd)))
            + 2.0 * dphi.dot(vi) * gn.dot(wd)
            + 0.5 * hess.quadratic_form(vi) * wd.dot(&(&g * wd));
        vals.push(term);
    }
    let xe = w.points.last().unwrap();
    let a = gamma_coefficient(model, xe, v.values.last().unwrap(), v.max_norm())?;
    let y = model.killing(xe)?;
    let yy = model.nabla_killing(xe)? * &y;
    let boundary = cg.phi(xe)? * a * a * model.dot(xe, &yy, w.velocities.last().unwrap())?;
    Ok(integrate(&w.grid, &vals) + boundary)
}

/// The Hessian of E_φ through Lorentzian data, valid for horizontal-tangent variations.
/// Inputs use the same orientation as [`hessian_e_eval`] (γ at t=0).
pub fn hessian_e_lorentzian(
    cg: &ConformalGeometry,
    w: &Curve,
    v1: &FieldAlongCurve,
    v2: &FieldAlongCurve,
) -> Result<f64> {
    check_geodesic(cg, w)?;
    let wr = w.reversed();
    let p = v1.lin_comb(1.0, v2, 1.0).reversed();
    let m = v1.lin_comb(1.0, v2, -1.0).reversed();
    Ok(0.25 * (hessian_e_lorentz_quadratic(cg, &wr, &p)? - hessian_e_lorentz_quadratic(cg, &wr, &m)?))
}

/// Residual of the horizontal tangent condition ⟨∇_ẇV,Y⟩ + ⟨ẇ,∇_VY⟩ along w.
pub fn horizontal_tangent_residual(model: &SpacetimeModel, w: &Curve, v: &FieldAlongCurve) -> Result<f64> {
    let nv = lorentz_derivative(model, w, v)?;
    let mut r: f64 = 0.0;
    for i in 0..w.grid.len() {
        let x = &w.points[i];
        let y = model.killing(x)?;
        let vy = model.nabla_killing(x)? * &v.values[i];
        r = r.max((model.dot(x, &nv[i], &y)? + model.dot(x, &w.velocities[i], &vy)?).abs());
    }
    Ok(r)
}

/// Completes X to a horizontal-tangent field V = X + fY with f' = −(⟨∇X,Y⟩ + ⟨ẇ,∇_XY⟩)/⟨Y,Y⟩,
/// f(t_start) = f0.
pub fn make_horizontal_tangent(
    model: &SpacetimeModel,
    w: &Curve,
    x_field: &FieldAlongCurve,
    f0: f64,
) -> Result<FieldAlongCurve> {
    let nx = lorentz_derivative(model, w, x_field)?;
    let dx = x_field.component_derivative();
    let n_nodes = w.grid.len();
    let mut fp = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &w.points[i];
        let y = model.killing(x)?;
        let xy = model.nabla_killing(x)? * &x_field.values[i];
        fp.push(-(model.dot(x, &nx[i], &y)? + model.dot(x, &w.velocities[i], &xy)?) / model.yy(x)?);
    }
    let f: Vec<f64> = cumulative_integral(&w.grid, &fp).into_iter().map(|v| v + f0).collect();
    let mut values = Vec::with_capacity(n_nodes);
    let mut der = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = &w.points[i];
        let y = model.killing(x)?;
        let dy = model.killing_jacobian(x)? * &w.velocities[i];
        values.push(&x_field.values[i] + &y * f[i]);
        der.push(&dx[i] + &y * fp[i] + dy * f[i]);
    }
    Ok(FieldAlongCurve::with_derivative(w.grid.clone(), values, der))
}

/// ν1·ν2·⟨∇_YY, n⟩ for v_i = ν_i·Y at a point of the observer worldline.
pub fn second_fundamental_form_gamma(
    model: &SpacetimeModel,
    q: &Event,
    n: &Tangent,
    v1: &Tangent,
    v2: &Tangent,
) -> Result<f64> {
    let x = &q.coords;
    let nu1 = gamma_coefficient(model, x, &v1.components, 0.0)?;
    let nu2 = gamma_coefficient(model, x, &v2.components, 0.0)?;
    let y = model.killing(x)?;
    let ny = model.dot(x, &n.components, &y)?;
    let gr = model.riemannian_metric(x)?;
    let scale = n.components.dot(&(&gr * &n.components)).sqrt() * y.dot(&(&gr * &y)).sqrt();
    if ny.abs() > 1e-8 * scale.max(1e-300) {
        return Err(Error::NotNormal(ny.abs()));
    }
    let yy = model.nabla_killing(x)? * &y;
    Ok(nu1 * nu2 * model.dot(x, &yy, &n.components)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConditions {
    /// V(γ-end) ∥ Y and V(p-end) = 0.
    Full,
    /// Additionally tangent to the horizontal curves.
    Horizontal,
    /// Additionally h(V, ẇ) = 0.
    Perpendicular,
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianMatrix {
    pub basis: String,
    #[serde(skip)]
    pub entries: Matrix,
    pub eigenvalues: Vec<f64>,
    pub n_negative: usize,
    pub n_zero: usize,
    pub eps_eig: f64,
}

impl HessianMatrix {
    fn from_matrix(basis: String, entries: Matrix) -> Self {
        let eig = entries.clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (n_negative, n_zero, eps) = count_inertia(&ev, EIG_REL);
        HessianMatrix { basis, entries, eigenvalues: ev, n_negative, n_zero, eps_eig: eps }
    }

    /// Recounts with a different relative threshold.
    pub fn inertia_at(&self, rel: f64) -> (usize, usize) {
        let (n, z, _) = count_inertia(&self.eigenvalues, rel);
        (n, z)
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.entries.nrows() {
            let row: Vec<String> =
                (0..self.entries.ncols()).map(|j| format!("{:.16e}", self.entries[(i, j)])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

fn count_inertia(ev: &[f64], rel: f64) -> (usize, usize, f64) {
    let scale = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let eps = rel * scale;
    let n_neg = ev.iter().filter(|&&x| x < -eps).count();
    let n_zero = ev.iter().filter(|&&x| x.abs() <= eps).count();
    (n_neg, n_zero, eps)
}

/// Orthonormal basis of the null space of c (rows are constraints).
fn null_space(c: &Matrix, ncols: usize) -> Matrix {
    if c.nrows() == 0 {
        return Matrix::identity(ncols, ncols);
    }
    let mut rows = c.clone();
    for i in 0..rows.nrows() {
        let n = rows.row(i).norm();
        if n > 0.0 {
            let r = rows.row(i) / n;
            rows.set_row(i, &r);
        }
    }
    let mut sq = Matrix::zeros(ncols.max(rows.nrows()), ncols);
    sq.view_mut((0, 0), (rows.nrows(), ncols)).copy_from(&rows);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax.max(1e-300))
        .collect();
    let mut z = Matrix::zeros(ncols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        z.set_column(j, &vt.row(i).transpose());
    }
    z
}

/// Galerkin matrix of the Hessian of E_φ on continuous piecewise-linear chart-frame fields.
///
/// w runs from γ (t=0) to p (t=1). The coarse mesh has `n_basis` elements; integrals use a
/// fine grid with eight sub-intervals per element. The γ node carries a single degree of
/// freedom along Y, the p node none. Horizontal and perpendicular conditions are imposed as
/// linear constraints and the matrix is restricted to their null space.
pub fn assemble_hessian(
    cg: &ConformalGeometry,
    w: &Curve,
    bc: BoundaryConditions,
    n_basis: usize,
) -> Result<HessianMatrix> {
    check_geodesic(cg, w)?;
    if n_basis < 2 {
        return Err(Error::GridTooCoarse(n_basis));
    }
    let model = &cg.model;
    let m = model.m;
    let sub = 8usize;
    let n_fine = n_basis * sub;
    let (a, b) = (w.t_start(), w.t_end());
    let coarse: Vec<f64> = crate::curves::uniform_grid(a, b, n_basis);
    let fine = crate::curves::uniform_grid(a, b, n_fine);
    let samples: Vec<(Vector, Vector)> = fine.iter().map(|&t| w.eval(t)).collect();
    let nodes: Vec<ConformalNode> =
        samples.iter().map(|(x, v)| conformal_node(cg, x, v)).collect::<Result<_>>()?;

    let full_dim = (n_basis + 1) * m;
    let mut hfull = Matrix::zeros(full_dim, full_dim);
    let eye = Matrix::identity(m, m);
    for e in 0..n_basis {
        let delta = coarse[e + 1] - coarse[e];
        let mut local = Matrix::zeros(2 * m, 2 * m);
        for s in 0..sub {
            let i0 = e * sub + s;
            let hstep = fine[i0 + 1] - fine[i0];
            for (i, wt) in [(i0, 0.5 * hstep), (i0 + 1, 0.5 * hstep)] {
                let lam = (fine[i] - coarse[e]) / delta;
                let nd = &nodes[i];
                let mut bm = Matrix::zeros(m, 2 * m);
                bm.view_mut((0, 0), (m, m)).copy_from(&(&nd.a * (1.0 - lam) - &eye / delta));
                bm.view_mut((0, m), (m, m)).copy_from(&(&nd.a * lam + &eye / delta));
                let mut cm = Matrix::zeros(m, 2 * m);
                cm.view_mut((0, 0), (m, m)).copy_from(&(&eye * (1.0 - lam)));
                cm.view_mut((0, m), (m, m)).copy_from(&(&eye * lam));
                local += (bm.transpose() * &nd.h * &bm + cm.transpose() * &nd.hm * &cm) * wt;
            }
        }
        let off = e * m;
        let mut view = hfull.view_mut((off, off), (2 * m, 2 * m));
        view += &local;
    }

    // reduced dofs: a (γ node along Y), then m per interior node
    let red_dim = 1 + (n_basis - 1) * m;
    let mut p = Matrix::zeros(full_dim, red_dim);
    let x0 = &samples[0].0;
    let y0 = model.killing(x0)?;
    p.view_mut((0, 0), (m, 1)).copy_from(&y0);
    for j in 1..n_basis {
        p.view_mut((j * m, 1 + (j - 1) * m), (m, m)).copy_from(&eye);
    }
    let mut hred = p.transpose() * &hfull * &p;
    let yy = cg.nabla_killing(x0)? * &y0;
    hred[(0, 0)] -= yy.dot(&(&nodes[0].h * &samples[0].1));
    hred = (&hred + hred.transpose()) * 0.5;

    let mut rows: Vec<Vector> = Vec::new();
    if bc != BoundaryConditions::Full {
        // ⟨∇_ẇV,Y⟩ + ⟨ẇ,∇_VY⟩ = 0 at element midpoints
        for e in 0..n_basis {
            let tm = 0.5 * (coarse[e] + coarse[e + 1]);
            let delta = coarse[e + 1] - coarse[e];
            let (x, v) = w.eval(tm);
            let g = model.metric(&x)?;
            let y = model.killing(&x)?;
            let gam = model.christoffel(&x)?;
            let kmat = model.nabla_killing(&x)?;
            let gy = &g * &y;
            let gv = &g * &v;
            // functional of (V_e, V_{e+1}): ⟨(V1−V0)/Δ + A(V0+V1)/2, Y⟩ + ⟨ẇ, K(V0+V1)/2⟩
            let amat = gam.along(&v);
            let common = amat.transpose() * &gy * 0.5 + kmat.transpose() * &gv * 0.5;
            let r0 = -&gy / delta + &common;
            let r1 = &gy / delta + &common;
            let mut row_full = Vector::zeros(full_dim);
            row_full.rows_mut(e * m, m).copy_from(&r0);
            row_full.rows_mut((e + 1) * m, m).copy_from(&r1);
            rows.push(p.transpose() * row_full);
        }
    }
    if bc == BoundaryConditions::Perpendicular {
        for j in 0..n_basis {
            let nd = &nodes[j * sub];
            let hv = &nd.h * &samples[j * sub].1;
            let mut row_full = Vector::zeros(full_dim);
            row_full.rows_mut(j * m, m).copy_from(&hv);
            let r = p.transpose() * row_full;
            if r.amax() > 0.0 {
                rows.push(r);
            }
        }
    }
    let label = format!("{:?}", bc).to_lowercase();
    let basis = format!(
        "P1 chart-frame hat functions, {n_basis} elements, {sub} quadrature sub-intervals per element, boundary conditions: {label}"
    );
    if rows.is_empty() {
        return Ok(HessianMatrix::from_matrix(basis, hred));
    }
    let mut cmat = Matrix::zeros(rows.len(), red_dim);
    for (i, r) in rows.iter().enumerate() {
        cmat.set_row(i, &r.transpose());
    }
    let z = null_space(&cmat, red_dim);
    let hz = z.transpose() * hred * &z;
    Ok(HessianMatrix::from_matrix(basis, (&hz + hz.transpose()) * 0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct IndexTriple {
    pub full: usize,
    pub horizontal: usize,
    pub perpendicular: usize,
}

/// Morse indices of the Hessian of E_φ on the full, horizontal and perpendicular spaces.
pub fn restricted_index_report(
    cg: &ConformalGeometry,
    w: &Curve,
    n_basis: usize,
) -> Result<IndexTriple> {
    let mut out = [0usize; 3];
    for (i, bc) in [BoundaryConditions::Full, BoundaryConditions::Horizontal, BoundaryConditions::Perpendicular]
        .into_iter()
        .enumerate()
    {
        let h = assemble_hessian(cg, w, bc, n_basis)?;
        if h.n_zero > 0 {
            return Err(Error::FocalEndpoint(h.n_zero));
        }
        out[i] = h.n_negative;
    }
    Ok(IndexTriple { full: out[0], horizontal: out[1], perpendicular: out[2] })
}
