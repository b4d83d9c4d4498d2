//! Jacobi fields of φ_k·g_R, b-Jacobi fields of the brachistochrone equation,
//! γ-focal and b-focal points, and the maps L_{t0}.

use serde::Serialize;

use crate::curves::{differentiate, uniform_grid, Curve, FieldAlongCurve};
use crate::dynamics::{brachistochrone_acceleration, BrachistochroneSolution};
use crate::error::{Error, Result};
use crate::geometry::{conformal_geometry, ConformalGeometry, Matrix, SpacetimeModel, Vector};
use crate::ode::{hermite_eval, rk5_grid};
use crate::tolerances::{BFOCAL_SVD_REL, FOCAL_SVD_REL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobiKind {
    BJacobi,
    RiemannianGamma,
    Riemannian,
}

#[derive(Clone, Debug)]
pub struct JacobiFieldData {
    /// The field with its component derivative d/dt.
    pub field: FieldAlongCurve,
    /// Covariant derivative along the curve (Lorentzian for b-Jacobi, ∇^k otherwise).
    pub derivative: FieldAlongCurve,
    /// C_V for b-Jacobi fields, 0 otherwise.
    pub c_v: f64,
    /// Largest drift of C_V (b-Jacobi) or of the condition-2 quantity (γ-Jacobi).
    pub conserved_drift: f64,
    pub kind: JacobiKind,
}

/// Fixed-step sub-steps per grid interval so that one step moves at most `max_move` in the chart.
fn substeps(h: f64, v: &Vector, max_move: f64) -> usize {
    ((h * v.amax() / max_move).ceil() as usize).max(1)
}

/// Layout of the coupled Riemannian transport state:
/// x, v, then (J_i, W_i = ∇^k J_i) for each field, then parallel vectors E_j.
struct Transport<'a> {
    cg: &'a ConformalGeometry,
    m: usize,
    n_fields: usize,
    n_frame: usize,
}

impl<'a> Transport<'a> {
    fn len(&self) -> usize {
        self.m * (2 + 2 * self.n_fields + self.n_frame)
    }

    fn rhs(&self, s: &Vector) -> Result<Vector> {
        let m = self.m;
        let x = s.rows(0, m).into_owned();
        let v = s.rows(m, m).into_owned();
        let gam = self.cg.christoffel(&x)?;
        let mut out = Vector::zeros(self.len());
        out.rows_mut(0, m).copy_from(&v);
        out.rows_mut(m, m).copy_from(&(-gam.contract(&v, &v)));
        let av = gam.along(&v);
        if self.n_fields > 0 {
            let jop = self.cg.curvature(&x)?.jacobi_operator(&v);
            for f in 0..self.n_fields {
                let o = m * (2 + 2 * f);
                let j = s.rows(o, m).into_owned();
                let w = s.rows(o + m, m).into_owned();
                out.rows_mut(o, m).copy_from(&(&w - &av * &j));
                out.rows_mut(o + m, m).copy_from(&(&jop * &j - &av * &w));
            }
        }
        for e in 0..self.n_frame {
            let o = m * (2 + 2 * self.n_fields + e);
            let ev = s.rows(o, m).into_owned();
            out.rows_mut(o, m).copy_from(&(-(&av * ev)));
        }
        Ok(out)
    }

    fn pack(&self, x: &Vector, v: &Vector, fields: &[(Vector, Vector)], frame: &[Vector]) -> Vector {
        let m = self.m;
        let mut s = Vector::zeros(self.len());
        s.rows_mut(0, m).copy_from(x);
        s.rows_mut(m, m).copy_from(v);
        for (f, (j, w)) in fields.iter().enumerate() {
            s.rows_mut(m * (2 + 2 * f), m).copy_from(j);
            s.rows_mut(m * (3 + 2 * f), m).copy_from(w);
        }
        for (e, ev) in frame.iter().enumerate() {
            s.rows_mut(m * (2 + 2 * self.n_fields + e), m).copy_from(ev);
        }
        s
    }

    fn run(&self, grid: &[f64], s0: &Vector) -> Result<(Vec<Vector>, Vec<Vector>)> {
        let m = self.m;
        let h = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let sub = substeps(h, &s0.rows(m, m).into_owned(), 5e-3);
        rk5_grid(|_, s| self.rhs(s), grid, s0, sub)
    }
}

/// Solves ∇^k∇^k J = R^k(ẇ,J)ẇ along the geodesic through (w(0), ẇ(0)); outputs on w's grid.
/// `dj0` is the covariant derivative ∇^k J at the start.
pub fn integrate_rjacobi(
    cg: &ConformalGeometry,
    w: &Curve,
    j0: &Vector,
    dj0: &Vector,
) -> Result<JacobiFieldData> {
    Ok(integrate_rjacobi_many(cg, w, &[(j0.clone(), dj0.clone())])?.remove(0))
}

/// As [`integrate_rjacobi`] for several initial data sharing one integration.
pub fn integrate_rjacobi_many(
    cg: &ConformalGeometry,
    w: &Curve,
    inits: &[(Vector, Vector)],
) -> Result<Vec<JacobiFieldData>> {
    let m = cg.model.m;
    let tr = Transport { cg, m, n_fields: inits.len(), n_frame: 0 };
    let s0 = tr.pack(&w.points[0], &w.velocities[0], inits, &[]);
    let (ys, ds) = tr.run(&w.grid, &s0)?;
    let mut out = Vec::with_capacity(inits.len());
    for f in 0..inits.len() {
        let o = m * (2 + 2 * f);
        let vals: Vec<Vector> = ys.iter().map(|s| s.rows(o, m).into_owned()).collect();
        let der: Vec<Vector> = ds.iter().map(|s| s.rows(o, m).into_owned()).collect();
        let cov: Vec<Vector> = ys.iter().map(|s| s.rows(o + m, m).into_owned()).collect();
        let cov_d: Vec<Vector> = ds.iter().map(|s| s.rows(o + m, m).into_owned()).collect();
        out.push(JacobiFieldData {
            field: FieldAlongCurve::with_derivative(w.grid.clone(), vals, der),
            derivative: FieldAlongCurve::with_derivative(w.grid.clone(), cov, cov_d),
            c_v: 0.0,
            conserved_drift: 0.0,
            kind: JacobiKind::Riemannian,
        });
    }
    Ok(out)
}

/// max-norm of ∇^k∇^k J − R^k(ẇ,J)ẇ with fourth-order differences of the sampled field.
pub fn jacobi_residual(cg: &ConformalGeometry, w: &Curve, j: &FieldAlongCurve) -> Result<f64> {
    j.check_host(w)?;
    let dj = j.component_derivative();
    let mut nj = Vec::with_capacity(w.grid.len());
    for i in 0..w.grid.len() {
        let gam = cg.christoffel(&w.points[i])?;
        nj.push(&dj[i] + gam.contract(&w.velocities[i], &j.values[i]));
    }
    let dnj = differentiate(&w.grid, &nj, 4);
    let mut r: f64 = 0.0;
    for i in 0..w.grid.len() {
        let x = &w.points[i];
        let v = &w.velocities[i];
        let gam = cg.christoffel(x)?;
        let nnj = &dnj[i] + gam.contract(v, &nj[i]);
        let rj = cg.curvature(x)?.jacobi_operator(v) * &j.values[i];
        r = r.max((nnj - rj).amax());
    }
    Ok(r)
}

/// ⟨∇_ẇJ,Y⟩ + ⟨ẇ,∇_JY⟩ with the Lorentzian connection, node-wise.
pub fn condition_two(model: &SpacetimeModel, w: &Curve, j: &FieldAlongCurve) -> Result<Vec<f64>> {
    let nj = crate::variation::lorentz_derivative(model, w, j)?;
    let mut out = Vec::with_capacity(w.grid.len());
    for i in 0..w.grid.len() {
        let x = &w.points[i];
        let y = model.killing(x)?;
        let jy = model.nabla_killing(x)? * &j.values[i];
        out.push(model.dot(x, &nj[i], &y)? + model.dot(x, &w.velocities[i], &jy)?);
    }
    Ok(out)
}

/// Initial data of the γ-Jacobi basis: (Y, ∇^k_ẇ Y) and (0, e_j) for a g_R-orthonormal
/// horizontal frame e_j at w(0).
fn gamma_initial_data(cg: &ConformalGeometry, w: &Curve) -> Result<Vec<(Vector, Vector)>> {
    let model = &cg.model;
    let x0 = &w.points[0];
    let v0 = &w.velocities[0];
    let gr = model.riemannian_metric(x0)?;
    let y = model.killing(x0)?;
    let c = v0.dot(&(&gr * &y));
    let scale = v0.dot(&(&gr * v0)).sqrt() * y.dot(&(&gr * &y)).sqrt();
    if c.abs() > 1e-6 * scale.max(1e-300) {
        return Err(Error::NotOrthogonalStart(c));
    }
    let m = model.m;
    let mut inits = vec![(y.clone(), cg.nabla_killing(x0)? * v0)];
    for e in model.horizontal_frame(x0)? {
        inits.push((Vector::zeros(m), e));
    }
    Ok(inits)
}

/// The m γ-Jacobi fields along w (w starts on γ): J(0) ∥ Y and condition 2 at t = 0.
pub fn gamma_jacobi_basis(cg: &ConformalGeometry, w: &Curve) -> Result<Vec<JacobiFieldData>> {
    let inits = gamma_initial_data(cg, w)?;
    let mat = Matrix::from_fn(2 * cg.model.m, inits.len(), |r, c| {
        if r < cg.model.m {
            inits[c].0[r]
        } else {
            inits[c].1[r - cg.model.m]
        }
    });
    let smin = mat.singular_values().min();
    if smin <= 1e-8 {
        return Err(Error::FrameDegenerate(smin));
    }
    let mut fields = integrate_rjacobi_many(cg, w, &inits)?;
    for f in fields.iter_mut() {
        f.kind = JacobiKind::RiemannianGamma;
        let c2 = condition_two(&cg.model, w, &f.field)?;
        f.conserved_drift = c2.iter().map(|x| x.abs()).fold(0.0, f64::max);
    }
    Ok(fields)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FocalPoint {
    pub t: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Parameter 0 on the observer worldline, 1 at the event p.
    GammaToP,
    /// Parameter 0 at the event p, 1 on the observer worldline.
    PToGamma,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FocalReport {
    pub orientation: Orientation,
    pub focal_list: Vec<FocalPoint>,
    pub geometric_index: usize,
    /// (t, normalised determinant) samples.
    pub determinant_trace: Vec<(f64, f64)>,
}

impl FocalReport {
    /// The same focal points with the parameter reversed, t ↦ 1 − t.
    pub fn reversed(&self) -> FocalReport {
        let orientation = match self.orientation {
            Orientation::GammaToP => Orientation::PToGamma,
            Orientation::PToGamma => Orientation::GammaToP,
        };
        let mut focal_list: Vec<FocalPoint> = self
            .focal_list
            .iter()
            .map(|f| FocalPoint { t: 1.0 - f.t, multiplicity: f.multiplicity })
            .collect();
        focal_list.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        let mut determinant_trace: Vec<(f64, f64)> =
            self.determinant_trace.iter().map(|&(t, d)| (1.0 - t, d)).collect();
        determinant_trace.reverse();
        FocalReport { orientation, focal_list, geometric_index: self.geometric_index, determinant_trace }
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("t,det\n");
        for (t, d) in &self.determinant_trace {
            s.push_str(&format!("{:.16e},{:.16e}\n", t, d));
        }
        s
    }
}

/// Matrix (h(J_i, E_j)) with each field scaled by its largest h-norm over the scan, from a
/// packed transport state.
struct FocalSampler<'a> {
    tr: Transport<'a>,
    grid: Vec<f64>,
    ys: Vec<Vector>,
    ds: Vec<Vector>,
    scales: Vec<f64>,
}

impl<'a> FocalSampler<'a> {
    fn matrix(&self, t: f64) -> Result<Matrix> {
        let m = self.tr.m;
        let s = hermite_eval(&self.grid, &self.ys, &self.ds, t);
        let x = s.rows(0, m).into_owned();
        let h = self.tr.cg.metric(&x)?;
        let mut out = Matrix::zeros(m, m);
        for i in 0..self.tr.n_fields {
            let j = s.rows(m * (2 + 2 * i), m).into_owned();
            let hj = &h * &j;
            let nrm = self.scales[i];
            for e in 0..self.tr.n_frame {
                let ev = s.rows(m * (2 + 2 * self.tr.n_fields + e), m).into_owned();
                out[(i, e)] = hj.dot(&ev) / nrm;
            }
        }
        Ok(out)
    }

    fn det(&self, t: f64) -> Result<f64> {
        Ok(self.matrix(t)?.determinant())
    }

    fn ratio(&self, t: f64) -> Result<f64> {
        let sv = self.matrix(t)?.singular_values();
        Ok(sv.min() / sv.max().max(1e-300))
    }

    fn multiplicity(&self, t: f64) -> Result<usize> {
        let sv = self.matrix(t)?.singular_values();
        let smax = sv.max();
        Ok(sv.iter().filter(|&&s| s < FOCAL_SVD_REL * smax).count().max(1))
    }
}

/// Root of a sign change in [a, b] by bisection.
fn bisect(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a)?;
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let c = 0.5 * (a + b);
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc > 0.0) == (fa > 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    Ok(0.5 * (a + b))
}

/// Minimiser of a unimodal function on [a, b] by golden-section search.
fn golden(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

/// Scan step of the focal search.
const SCAN_STEP: f64 = 1e-3;

/// Zeros in (0,1] of t ↦ det(h(J_i,E_j)) for the γ-Jacobi basis J_i and an h-parallel frame E_j.
/// w runs from γ (t=0) to p (t=1); the report uses that orientation.
pub fn focal_points(cg: &ConformalGeometry, w: &Curve) -> Result<FocalReport> {
    let model = &cg.model;
    let m = model.m;
    let inits = gamma_initial_data(cg, w)?;
    let x0 = &w.points[0];
    let h0 = cg.metric(x0)?;
    // h-orthonormal frame at w(0): normalised Y plus the horizontal frame
    let y0 = model.killing(x0)?;
    let mut frame = vec![&y0 / y0.dot(&(&h0 * &y0)).sqrt()];
    for e in model.horizontal_frame(x0)? {
        frame.push(&e / e.dot(&(&h0 * &e)).sqrt());
    }
    let tr = Transport { cg, m, n_fields: m, n_frame: m };
    let s0 = tr.pack(x0, &w.velocities[0], &inits, &frame);
    let n_scan = ((w.t_end() - w.t_start()) / SCAN_STEP).round() as usize;
    let grid = uniform_grid(w.t_start(), w.t_end(), n_scan);
    let (ys, ds) = tr.run(&grid, &s0)?;
    let mut scales = vec![0f64; m];
    for s in &ys {
        let x = s.rows(0, m).into_owned();
        let h = cg.metric(&x)?;
        for (i, sc) in scales.iter_mut().enumerate() {
            let j = s.rows(m * (2 + 2 * i), m).into_owned();
            *sc = sc.max(j.dot(&(&h * &j)).sqrt());
        }
    }
    let scales = scales.into_iter().map(|s| s.max(1e-300)).collect();
    let sampler = FocalSampler { tr, grid: grid.clone(), ys, ds, scales };

    // parallel frame must stay orthonormal
    let xe = sampler.ys.last().unwrap().rows(0, m).into_owned();
    let he = cg.metric(&xe)?;
    let mut gram = Matrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let ea = sampler.ys.last().unwrap().rows(m * (2 + 2 * m + a), m).into_owned();
            let eb = sampler.ys.last().unwrap().rows(m * (2 + 2 * m + b), m).into_owned();
            gram[(a, b)] = ea.dot(&(&he * eb));
        }
    }
    let dev = (gram - Matrix::identity(m, m)).amax();
    if dev > 1e-6 {
        return Err(Error::FrameDegenerate(dev));
    }

    let dets: Vec<f64> = grid.iter().map(|&t| sampler.det(t)).collect::<Result<_>>()?;
    let ratios: Vec<f64> = grid.iter().map(|&t| sampler.ratio(t)).collect::<Result<_>>()?;
    let trace: Vec<(f64, f64)> = grid.iter().copied().zip(dets.iter().copied()).collect();
    let det_f = |t: f64| sampler.det(t);
    let ratio_f = |t: f64| sampler.ratio(t);

    let mut found: Vec<f64> = Vec::new();
    for i in 1..n_scan {
        if dets[i] == 0.0 || (dets[i] > 0.0) != (dets[i + 1] > 0.0) {
            found.push(bisect(&det_f, grid[i], grid[i + 1], 1e-12)?);
        }
    }
    // even-multiplicity zeros: interior minima of the singular-value ratio
    for i in 2..n_scan {
        if ratios[i] < ratios[i - 1] && ratios[i] <= ratios[i + 1] {
            if found.iter().any(|&t| (t - grid[i]).abs() < 3.0 * SCAN_STEP) {
                continue;
            }
            let (t, r) = golden(&ratio_f, grid[i - 1], grid[i + 1], 1e-10)?;
            if r < FOCAL_SVD_REL {
                found.push(t);
            }
        }
    }
    // arrival end
    let te = w.t_end();
    if ratios[n_scan] < FOCAL_SVD_REL && !found.iter().any(|&t| (t - te).abs() < 3.0 * SCAN_STEP) {
        found.push(te);
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut focal_list = Vec::with_capacity(found.len());
    for t in found {
        focal_list.push(FocalPoint { t, multiplicity: sampler.multiplicity(t)? });
    }
    let geometric_index = focal_list.iter().map(|f| f.multiplicity).sum();
    Ok(FocalReport {
        orientation: Orientation::GammaToP,
        focal_list,
        geometric_index,
        determinant_trace: trace,
    })
}

// ---------------------------------------------------------------------------------------------
// b-Jacobi fields

/// ∇_σ̇∇_σ̇V from the linearised brachistochrone equation, given the state and C_V.
#[allow(clippy::too_many_arguments)]
fn bjacobi_second_derivative(
    model: &SpacetimeModel,
    k: f64,
    tt: f64,
    c_v: f64,
    x: &Vector,
    v: &Vector,
    vv: &Vector,
    wv: &Vector,
) -> Result<Vector> {
    let g = model.metric(x)?;
    let y = model.killing(x)?;
    let gy = &g * &y;
    let q = y.dot(&gy);
    let margin = k * k + q;
    if !(margin > 0.0) {
        return Err(Error::OutsideUk { coords: x.iter().copied().collect(), margin });
    }
    let gam = model.christoffel(x)?;
    let kmat = model.nabla_killing(x)?;
    let riem = model.curvature(x)?;
    // V' and the covariant derivative of Z = ∇_V Y along σ
    let vdot = wv - gam.contract(v, vv);
    let z = &kmat * vv;
    let dk = model.nabla_killing_directional(x, v)?;
    let nz = &dk * vv + &kmat * &vdot + gam.contract(v, &z);
    let dy = &kmat * v;
    let eta = dy.dot(&gy);
    let zeta = z.dot(&gy);

    let rvv = riem.apply(v, vv, v);
    let rvy = riem.apply(v, vv, &y);
    let coef = 2.0 * k * tt / (q * q);
    let mix = v * (2.0 * k * k) - &y * (2.0 * k * tt);
    let p = q * margin;

    // the six groups of the linearised equation
    let g1 = (&nz * q - &rvy * q - &dy * (2.0 * zeta)) * coef;
    let g2 = &dy * (-2.0 * c_v / q);
    let g3 = &mix * ((nz.dot(&gy) + z.dot(&(&g * &dy))) / p);
    let g4 = &mix * ((-4.0 * eta * q * zeta - 2.0 * k * k * eta * zeta) / (p * p));
    let g5 = (&y * c_v - &z * (k * tt) + wv * (k * k)) * (2.0 * eta / p);
    Ok(rvv - g1 - g2 - g3 - g4 - g5)
}

/// Integrates a b-Jacobi field along the brachistochrone through (x0, v0) with constants (k, T),
/// on `grid`, from V(grid[0]) = v_init with covariant derivative w_init.
#[allow(clippy::too_many_arguments)]
fn integrate_bjacobi_on(
    model: &SpacetimeModel,
    k: f64,
    tt: f64,
    x0: &Vector,
    v0: &Vector,
    grid: &[f64],
    v_init: &Vector,
    w_init: &Vector,
) -> Result<(Vec<Vector>, Vec<Vector>, JacobiFieldData)> {
    let m = model.m;
    let y0 = model.killing(x0)?;
    let dy0 = model.nabla_killing(x0)? * v0;
    let c_v = model.dot(x0, w_init, &y0)? - model.dot(x0, v_init, &dy0)?;
    let ic = -tt * c_v + k * model.dot(x0, w_init, v0)?;
    let scale = (1.0 + k * tt) * (1.0 + v_init.amax() + w_init.amax()) * (1.0 + v0.amax());
    if ic.abs() > 1e-8 * scale {
        return Err(Error::InitialConditionViolated(ic));
    }
    let rhs = |_t: f64, s: &Vector| -> Result<Vector> {
        let x = s.rows(0, m).into_owned();
        let v = s.rows(m, m).into_owned();
        let vv = s.rows(2 * m, m).into_owned();
        let wv = s.rows(3 * m, m).into_owned();
        let gam = model.christoffel(&x)?;
        let acc = brachistochrone_acceleration(model, k, tt, &x, &v)?;
        let nnv = bjacobi_second_derivative(model, k, tt, c_v, &x, &v, &vv, &wv)?;
        let mut out = Vector::zeros(4 * m);
        out.rows_mut(0, m).copy_from(&v);
        out.rows_mut(m, m).copy_from(&acc);
        out.rows_mut(2 * m, m).copy_from(&(&wv - gam.contract(&v, &vv)));
        out.rows_mut(3 * m, m).copy_from(&(nnv - gam.contract(&v, &wv)));
        Ok(out)
    };
    let mut s0 = Vector::zeros(4 * m);
    s0.rows_mut(0, m).copy_from(x0);
    s0.rows_mut(m, m).copy_from(v0);
    s0.rows_mut(2 * m, m).copy_from(v_init);
    s0.rows_mut(3 * m, m).copy_from(w_init);
    let h = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let sub = substeps(h, v0, 5e-3);
    let (ys, ds) = rk5_grid(rhs, grid, &s0, sub)?;
    let vals: Vec<Vector> = ys.iter().map(|s| s.rows(2 * m, m).into_owned()).collect();
    let der: Vec<Vector> = ds.iter().map(|s| s.rows(2 * m, m).into_owned()).collect();
    let cov: Vec<Vector> = ys.iter().map(|s| s.rows(3 * m, m).into_owned()).collect();
    let mut drift: f64 = 0.0;
    for s in &ys {
        let x = s.rows(0, m).into_owned();
        let v = s.rows(m, m).into_owned();
        let y = model.killing(&x)?;
        let dy = model.nabla_killing(&x)? * &v;
        let c = model.dot(&x, &s.rows(3 * m, m).into_owned(), &y)?
            - model.dot(&x, &s.rows(2 * m, m).into_owned(), &dy)?;
        drift = drift.max((c - c_v).abs());
    }
    let pts: Vec<Vector> = ys.iter().map(|s| s.rows(0, m).into_owned()).collect();
    let vels: Vec<Vector> = ys.iter().map(|s| s.rows(m, m).into_owned()).collect();
    let data = JacobiFieldData {
        field: FieldAlongCurve::with_derivative(grid.to_vec(), vals, der),
        derivative: FieldAlongCurve::new(grid.to_vec(), cov),
        c_v,
        conserved_drift: drift,
        kind: JacobiKind::BJacobi,
    };
    Ok((pts, vels, data))
}

/// b-Jacobi field along sol.sigma from V(0) = v0_field with ∇_σ̇V(0) = dv0.
pub fn integrate_bjacobi(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    v0_field: &Vector,
    dv0: &Vector,
) -> Result<JacobiFieldData> {
    let c = &sol.sigma;
    let (_, _, data) = integrate_bjacobi_on(
        model,
        sol.k,
        sol.travel_time,
        &c.points[0],
        &c.velocities[0],
        &c.grid,
        v0_field,
        dv0,
    )?;
    Ok(data)
}

/// Admissible covariant initial derivatives at a zero of a b-Jacobi field at σ(s0):
/// e_j + β_j Y with β_j = k⟨e_j,σ̇⟩/(T(⟨Y,Y⟩+k²)), for a g_R-orthonormal horizontal frame e_j.
pub fn bjacobi_zero_start_data(
    model: &SpacetimeModel,
    k: f64,
    tt: f64,
    x: &Vector,
    v: &Vector,
) -> Result<Vec<Vector>> {
    let y = model.killing(x)?;
    let q = model.yy(x)?;
    model
        .horizontal_frame(x)?
        .into_iter()
        .map(|e| {
            let beta = k * model.dot(x, &e, v)? / (tt * (q + k * k));
            Ok(e + &y * beta)
        })
        .collect()
}

/// Endpoint map of b-Jacobi fields vanishing at s0: horizontal g_R-frame components of V(1).
pub fn bjacobi_endpoint_matrix(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    s0: f64,
    n_grid: usize,
) -> Result<Matrix> {
    let (x0, v0) = sol.sigma.eval(s0);
    let grid = uniform_grid(s0, sol.sigma.t_end(), n_grid.max(8));
    let starts = bjacobi_zero_start_data(model, sol.k, sol.travel_time, &x0, &v0)?;
    let zero = Vector::zeros(model.m);
    let mut cols = Vec::with_capacity(starts.len());
    let mut frame_at_end: Option<(Vec<Vector>, Matrix)> = None;
    for wv in &starts {
        let (pts, _, data) =
            integrate_bjacobi_on(model, sol.k, sol.travel_time, &x0, &v0, &grid, &zero, wv)?;
        let xe = pts.last().unwrap();
        if frame_at_end.is_none() {
            frame_at_end = Some((model.horizontal_frame(xe)?, model.riemannian_metric(xe)?));
        }
        let (frame, gr) = frame_at_end.as_ref().unwrap();
        let ve = data.field.values.last().unwrap();
        let hv = model.horizontal_part(xe, ve)?;
        cols.push(Vector::from_iterator(frame.len(), frame.iter().map(|e| e.dot(&(gr * &hv)))));
    }
    Ok(Matrix::from_columns(&cols))
}

/// (determinant, σ_min/σ_max) of the b-side endpoint map at s0.
pub fn bjacobi_endpoint_indicator(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    s0: f64,
    n_grid: usize,
) -> Result<(f64, f64)> {
    let a = bjacobi_endpoint_matrix(model, sol, s0, n_grid)?;
    let sv = a.clone().singular_values();
    Ok((a.determinant(), sv.min() / sv.max().max(1e-300)))
}

/// Independent b-side scan for b-focal points in [0,1) (σ orientation), by sign changes and
/// minima of the endpoint map indicator of fields vanishing at s0.
pub fn bfocal_scan(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    n_scan: usize,
    n_grid: usize,
) -> Result<Vec<FocalPoint>> {
    let grid = uniform_grid(0.0, 1.0, n_scan);
    // s0 = 1 is excluded: fields vanishing there are trivially on γ
    let pts: Vec<f64> = grid[..n_scan].to_vec();
    let vals: Vec<(f64, f64)> = pts
        .iter()
        .map(|&s| bjacobi_endpoint_indicator(model, sol, s, n_grid))
        .collect::<Result<_>>()?;
    let det_f = |s: f64| Ok(bjacobi_endpoint_indicator(model, sol, s, n_grid)?.0);
    let ratio_f = |s: f64| Ok(bjacobi_endpoint_indicator(model, sol, s, n_grid)?.1);
    let step = 1.0 / n_scan as f64;
    let mut found: Vec<f64> = Vec::new();
    for i in 0..pts.len() - 1 {
        if (vals[i].0 > 0.0) != (vals[i + 1].0 > 0.0) {
            found.push(bisect(&det_f, pts[i], pts[i + 1], 1e-9)?);
        }
    }
    for i in 1..pts.len() - 1 {
        if vals[i].1 < vals[i - 1].1 && vals[i].1 <= vals[i + 1].1 {
            if found.iter().any(|&t| (t - pts[i]).abs() < 3.0 * step) {
                continue;
            }
            let (t, r) = golden(&ratio_f, pts[i - 1], pts[i + 1], 1e-9)?;
            if r < BFOCAL_SVD_REL {
                found.push(t);
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(found.len());
    for t in found {
        let a = bjacobi_endpoint_matrix(model, sol, t, n_grid)?;
        let sv = a.singular_values();
        let smax = sv.max();
        let mult = sv.iter().filter(|&&s| s < BFOCAL_SVD_REL * smax).count().max(1);
        out.push(FocalPoint { t, multiplicity: mult });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BFocalReport {
    /// Focal points in the σ orientation (p at t = 0).
    pub report: FocalReport,
    /// σ_min/σ_max of the b-side endpoint map at each reported parameter.
    pub confirmation_ratios: Vec<f64>,
    pub confirmed: bool,
}

/// b-focal points of a brachistochrone: focal points of O(D(σ)) pulled back by t ↦ 1 − t, each
/// confirmed by the b-side endpoint map.
pub fn bfocal_points(model: &SpacetimeModel, sol: &BrachistochroneSolution) -> Result<BFocalReport> {
    let cg = conformal_geometry(model, sol.k)?;
    let w = crate::transform::deform_d(model, sol)?.reversed();
    let riem = focal_points(&cg, &w)?;
    let report = riem.reversed();
    let mut ratios = Vec::with_capacity(report.focal_list.len());
    for f in &report.focal_list {
        if f.t <= 0.0 {
            // a focal point at the departure event: the endpoint map at s0 = 0
            ratios.push(bjacobi_endpoint_indicator(model, sol, 0.0, sol.sigma.n())?.1);
        } else {
            ratios.push(bjacobi_endpoint_indicator(model, sol, f.t, sol.sigma.n())?.1);
        }
    }
    let confirmed = ratios.iter().all(|&r| r < BFOCAL_SVD_REL);
    Ok(BFocalReport { report, confirmation_ratios: ratios, confirmed })
}

/// L_{t0}[ζ] for ζ sampled on [t0, 1]: returns the host curve ψ(σ, τ^{t0}_σ) and the field
/// dψ(σ, τ^{t0}_σ)[ζ + τ^{t0}_ζ Y].
pub fn map_l_with_host(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    t0: f64,
    zeta: &FieldAlongCurve,
) -> Result<(Curve, FieldAlongCurve)> {
    if (zeta.grid[0] - t0).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!("field starts at {} instead of {t0}", zeta.grid[0])));
    }
    let c = if zeta.is_hosted_on(&sol.sigma) {
        sol.sigma.clone()
    } else {
        let (points, velocities) = zeta.grid.iter().map(|&t| sol.sigma.eval(t)).unzip();
        Curve::new(zeta.grid.clone(), points, velocities)?
    };
    let field = crate::transform::deformation_differential(model, sol.k, sol.travel_time, &c, zeta)?;
    let host = crate::transform::deform_curve(model, &c)?.w;
    Ok((host, field))
}

pub fn map_l(
    model: &SpacetimeModel,
    sol: &BrachistochroneSolution,
    t0: f64,
    zeta: &FieldAlongCurve,
) -> Result<FieldAlongCurve> {
    Ok(map_l_with_host(model, sol, t0, zeta)?.1)
}
