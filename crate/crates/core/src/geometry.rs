//! Chart-level Lorentzian geometry: metric, Killing field, connection, curvature,
//! the auxiliary Riemannian metric g_R and the conformal metric φ_k·g_R.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tolerances::FD_STEP;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

type MetricFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type FieldFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type ChristoffelFn = dyn Fn(&Vector) -> Christoffel + Send + Sync;
type DomainFn = dyn Fn(&Vector) -> bool + Send + Sync;

/// A point of the chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub coords: Vector,
}

impl Event {
    pub fn new(coords: &[f64]) -> Self {
        Event { coords: Vector::from_column_slice(coords) }
    }
}

/// A tangent vector with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub base: Event,
    pub components: Vector,
}

impl Tangent {
    pub fn new(base: &Event, components: &[f64]) -> Self {
        Tangent { base: base.clone(), components: Vector::from_column_slice(components) }
    }
}

/// Connection coefficients Γ^a_{bc}, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    m: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(m: usize) -> Self {
        Christoffel { m, data: vec![0.0; m * m * m] }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.m + b) * self.m + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.m + b) * self.m + c] = v;
    }

    /// Sets Γ^a_{bc} and Γ^a_{cb}.
    pub fn set_sym(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.set(a, b, c, v);
        self.set(a, c, b, v);
    }

    /// Γ(v,w)^a = Γ^a_{bc} v^b w^c.
    pub fn contract(&self, v: &Vector, w: &Vector) -> Vector {
        let m = self.m;
        let mut out = Vector::zeros(m);
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                if v[b] == 0.0 {
                    continue;
                }
                let row = (a * m + b) * m;
                let mut t = 0.0;
                for c in 0..m {
                    t += self.data[row + c] * w[c];
                }
                s += v[b] * t;
            }
            out[a] = s;
        }
        out
    }

    /// Matrix A with A w = Γ(v, w).
    pub fn along(&self, v: &Vector) -> Matrix {
        let m = self.m;
        let mut out = Matrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    out[(a, c)] += self.get(a, b, c) * v[b];
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    fn combine(a: &Christoffel, alpha: f64, b: &Christoffel, beta: f64) -> Christoffel {
        Christoffel {
            m: a.m,
            data: a.data.iter().zip(&b.data).map(|(x, y)| alpha * x + beta * y).collect(),
        }
    }
}

/// Riemann tensor R^a_{bcd} with R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z,
/// so that (R(X,Y)Z)^a = R^a_{bcd} Z^b X^c Y^d.
#[derive(Clone, Debug, PartialEq)]
pub struct Riemann {
    m: usize,
    data: Vec<f64>,
}

impl Riemann {
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.m;
        self.data[((a * m + b) * m + c) * m + d]
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// R(x,y)z.
    pub fn apply(&self, x: &Vector, y: &Vector, z: &Vector) -> Vector {
        let m = self.m;
        let mut out = Vector::zeros(m);
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    let zx = z[b] * x[c];
                    if zx == 0.0 {
                        continue;
                    }
                    for d in 0..m {
                        s += self.get(a, b, c, d) * zx * y[d];
                    }
                }
            }
            out[a] = s;
        }
        out
    }

    /// Matrix M with M y = R(v, y) v.
    pub fn jacobi_operator(&self, v: &Vector) -> Matrix {
        let m = self.m;
        let mut out = Matrix::zeros(m, m);
        for a in 0..m {
            for d in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    for c in 0..m {
                        s += self.get(a, b, c, d) * v[b] * v[c];
                    }
                }
                out[(a, d)] = s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Builds R^a_{bcd} = ∂_cΓ^a_{db} − ∂_dΓ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}
    /// from Γ and its partial derivatives dgamma[e] = ∂_eΓ.
    pub fn from_connection(gamma: &Christoffel, dgamma: &[Christoffel]) -> Riemann {
        let m = gamma.m;
        let mut data = vec![0.0; m * m * m * m];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let mut r = dgamma[c].get(a, d, b) - dgamma[d].get(a, c, b);
                        for e in 0..m {
                            r += gamma.get(a, c, e) * gamma.get(e, d, b)
                                - gamma.get(a, d, e) * gamma.get(e, c, b);
                        }
                        data[((a * m + b) * m + c) * m + d] = r;
                    }
                }
            }
        }
        Riemann { m, data }
    }
}

/// Γ^a_{bc} = ½ g^{ad}(∂_b g_dc + ∂_c g_db − ∂_d g_bc).
pub fn christoffel_from_metric(ginv: &Matrix, dg: &[Matrix]) -> Christoffel {
    let m = ginv.nrows();
    let mut lowered = vec![0.0; m * m * m];
    for d in 0..m {
        for b in 0..m {
            for c in b..m {
                let v = 0.5 * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                lowered[(d * m + b) * m + c] = v;
                lowered[(d * m + c) * m + b] = v;
            }
        }
    }
    let mut out = Christoffel::zeros(m);
    for a in 0..m {
        for b in 0..m {
            for c in b..m {
                let mut s = 0.0;
                for d in 0..m {
                    s += ginv[(a, d)] * lowered[(d * m + b) * m + c];
                }
                out.set_sym(a, b, c, s);
            }
        }
    }
    out
}

/// A stationary Lorentzian metric on a single coordinate chart, with its Killing field.
#[derive(Clone)]
pub struct SpacetimeModel {
    pub name: String,
    pub m: usize,
    pub params: BTreeMap<String, f64>,
    pub fd_step: f64,
    /// Period of each coordinate, if the chart identifies it (e.g. an azimuth).
    pub periods: Vec<Option<f64>>,
    /// Set when Y = ∂_i for this coordinate index, so the flow is a translation.
    pub killing_coordinate: Option<usize>,
    metric_fn: Arc<MetricFn>,
    killing_fn: Arc<FieldFn>,
    christoffel_fn: Option<Arc<ChristoffelFn>>,
    domain_fn: Arc<DomainFn>,
}

impl fmt::Debug for SpacetimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpacetimeModel")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("params", &self.params)
            .field("analytic_christoffels", &self.christoffel_fn.is_some())
            .finish()
    }
}

impl SpacetimeModel {
    pub fn new(
        name: &str,
        m: usize,
        metric: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        killing: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        domain: impl Fn(&Vector) -> bool + Send + Sync + 'static,
    ) -> Self {
        SpacetimeModel {
            name: name.to_string(),
            m,
            params: BTreeMap::new(),
            fd_step: FD_STEP,
            periods: vec![None; m],
            killing_coordinate: None,
            metric_fn: Arc::new(metric),
            killing_fn: Arc::new(killing),
            christoffel_fn: None,
            domain_fn: Arc::new(domain),
        }
    }

    pub fn with_christoffels(
        mut self,
        f: impl Fn(&Vector) -> Christoffel + Send + Sync + 'static,
    ) -> Self {
        self.christoffel_fn = Some(Arc::new(f));
        self
    }

    pub fn without_christoffels(mut self) -> Self {
        self.christoffel_fn = None;
        self
    }

    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        self.periods = periods;
        self
    }

    pub fn with_killing_coordinate(mut self, i: usize) -> Self {
        self.killing_coordinate = Some(i);
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn has_analytic_christoffels(&self) -> bool {
        self.christoffel_fn.is_some()
    }

    pub fn in_domain(&self, q: &Vector) -> bool {
        q.len() == self.m && q.iter().all(|x| x.is_finite()) && (self.domain_fn)(q)
    }

    pub fn check(&self, q: &Vector) -> Result<()> {
        if q.len() != self.m {
            return Err(Error::Dimension { expected: self.m, got: q.len() });
        }
        if !self.in_domain(q) {
            return Err(Error::OutOfChart(q.iter().copied().collect()));
        }
        Ok(())
    }

    fn check_stencil(&self, q: &Vector, h: f64) -> Result<()> {
        self.check(q)?;
        for i in 0..self.m {
            for s in [-1.0, 1.0] {
                let mut p = q.clone();
                p[i] += s * h;
                if !self.in_domain(&p) {
                    return Err(Error::StencilOutOfChart(q.iter().copied().collect()));
                }
            }
        }
        Ok(())
    }

    pub fn metric(&self, q: &Vector) -> Result<Matrix> {
        self.check(q)?;
        Ok((self.metric_fn)(q))
    }

    pub fn inverse_metric(&self, q: &Vector) -> Result<Matrix> {
        let g = self.metric(q)?;
        g.try_inverse().ok_or_else(|| Error::OutOfChart(q.iter().copied().collect()))
    }

    pub fn killing(&self, q: &Vector) -> Result<Vector> {
        self.check(q)?;
        Ok((self.killing_fn)(q))
    }

    pub fn dot(&self, q: &Vector, v: &Vector, w: &Vector) -> Result<f64> {
        let g = self.metric(q)?;
        Ok(v.dot(&(&g * w)))
    }

    /// ⟨Y,Y⟩ at q, rejecting a non-timelike Killing field.
    pub fn yy(&self, q: &Vector) -> Result<f64> {
        let g = self.metric(q)?;
        let y = (self.killing_fn)(q);
        let n = y.dot(&(&g * &y));
        if !(n < 0.0) {
            return Err(Error::DegenerateKilling(n));
        }
        Ok(n)
    }

    /// Coordinate gradient ∂_c⟨Y,Y⟩.
    pub fn yy_gradient(&self, q: &Vector) -> Result<Vector> {
        let g = self.metric(q)?;
        let y = self.killing(q)?;
        let dg = self.metric_derivatives(q)?;
        let dy = self.killing_jacobian(q)?;
        let gy = &g * &y;
        let mut out = Vector::zeros(self.m);
        for c in 0..self.m {
            out[c] = y.dot(&(&dg[c] * &y)) + 2.0 * gy.dot(&dy.column(c));
        }
        Ok(out)
    }

    /// Partial derivatives ∂_c g_ab; exact from metric compatibility when
    /// analytic Christoffels are present, central differences otherwise.
    pub fn metric_derivatives(&self, q: &Vector) -> Result<Vec<Matrix>> {
        if let Some(cf) = &self.christoffel_fn {
            let g = self.metric(q)?;
            let gam = cf(q);
            let m = self.m;
            let mut out = vec![Matrix::zeros(m, m); m];
            for c in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        let mut s = 0.0;
                        for d in 0..m {
                            s += g[(a, d)] * gam.get(d, b, c) + g[(b, d)] * gam.get(d, a, c);
                        }
                        out[c][(a, b)] = s;
                    }
                }
            }
            Ok(out)
        } else {
            self.metric_derivatives_fd(q)
        }
    }

    pub fn metric_derivatives_fd(&self, q: &Vector) -> Result<Vec<Matrix>> {
        let h = self.fd_step;
        self.check_stencil(q, h)?;
        let mut out = Vec::with_capacity(self.m);
        for c in 0..self.m {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += h;
            qm[c] -= h;
            out.push(((self.metric_fn)(&qp) - (self.metric_fn)(&qm)) / (2.0 * h));
        }
        Ok(out)
    }

    /// ∂_b Y^a as a matrix (row a, column b), by central differences.
    pub fn killing_jacobian(&self, q: &Vector) -> Result<Matrix> {
        let h = self.fd_step;
        self.check_stencil(q, h)?;
        let mut out = Matrix::zeros(self.m, self.m);
        for b in 0..self.m {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[b] += h;
            qm[b] -= h;
            let col = ((self.killing_fn)(&qp) - (self.killing_fn)(&qm)) / (2.0 * h);
            out.set_column(b, &col);
        }
        Ok(out)
    }

    pub fn christoffel(&self, q: &Vector) -> Result<Christoffel> {
        match &self.christoffel_fn {
            Some(cf) => {
                self.check(q)?;
                Ok(cf(q))
            }
            None => self.christoffel_fd(q),
        }
    }

    /// Christoffels from central differences of the metric components.
    pub fn christoffel_fd(&self, q: &Vector) -> Result<Christoffel> {
        let ginv = self.inverse_metric(q)?;
        let dg = self.metric_derivatives_fd(q)?;
        Ok(christoffel_from_metric(&ginv, &dg))
    }

    /// Matrix K with ∇_v Y = K v, i.e. K^a_b = ∂_b Y^a + Γ^a_{bc} Y^c.
    pub fn nabla_killing(&self, q: &Vector) -> Result<Matrix> {
        let y = self.killing(q)?;
        let gam = self.christoffel(q)?;
        let mut k = self.killing_jacobian(q)?;
        let m = self.m;
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for c in 0..m {
                    s += gam.get(a, b, c) * y[c];
                }
                k[(a, b)] += s;
            }
        }
        Ok(k)
    }

    /// Partial derivatives ∂_eΓ by central differences of `christoffel`.
    pub fn christoffel_partials(&self, q: &Vector) -> Result<Vec<Christoffel>> {
        let h = self.fd_step;
        self.check_stencil(q, h)?;
        let mut out = Vec::with_capacity(self.m);
        for e in 0..self.m {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[e] += h;
            qm[e] -= h;
            let gp = self.christoffel(&qp)?;
            let gm = self.christoffel(&qm)?;
            out.push(Christoffel::combine(&gp, 0.5 / h, &gm, -0.5 / h));
        }
        Ok(out)
    }

    /// Directional derivative v^e ∂_eΓ by a central difference along v.
    pub fn christoffel_directional(&self, q: &Vector, v: &Vector) -> Result<Christoffel> {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(Christoffel::zeros(self.m));
        }
        let h = self.fd_step;
        let dir = v / nv;
        let qp = q + &dir * h;
        let qm = q - &dir * h;
        if !self.in_domain(&qp) || !self.in_domain(&qm) {
            return Err(Error::StencilOutOfChart(q.iter().copied().collect()));
        }
        let gp = self.christoffel(&qp)?;
        let gm = self.christoffel(&qm)?;
        Ok(Christoffel::combine(&gp, 0.5 * nv / h, &gm, -0.5 * nv / h))
    }

    /// Directional derivative of the matrix of ∇Y along v.
    pub fn nabla_killing_directional(&self, q: &Vector, v: &Vector) -> Result<Matrix> {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(Matrix::zeros(self.m, self.m));
        }
        let h = self.fd_step;
        let dir = v / nv;
        let qp = q + &dir * h;
        let qm = q - &dir * h;
        Ok((self.nabla_killing(&qp)? - self.nabla_killing(&qm)?) * (0.5 * nv / h))
    }

    pub fn curvature(&self, q: &Vector) -> Result<Riemann> {
        let gam = self.christoffel(q)?;
        let dgam = self.christoffel_partials(q)?;
        Ok(Riemann::from_connection(&gam, &dgam))
    }

    /// g_R = g − 2 Y♭⊗Y♭ / ⟨Y,Y⟩.
    pub fn riemannian_metric(&self, q: &Vector) -> Result<Matrix> {
        let g = self.metric(q)?;
        let y = self.killing(q)?;
        let yf = &g * &y;
        let n = y.dot(&yf);
        if !(n < 0.0) {
            return Err(Error::DegenerateKilling(n));
        }
        Ok(&g - (&yf * yf.transpose()) * (2.0 / n))
    }

    /// Removes the Y-component: v − ⟨v,Y⟩/⟨Y,Y⟩ Y.
    pub fn horizontal_part(&self, q: &Vector, v: &Vector) -> Result<Vector> {
        let g = self.metric(q)?;
        let y = self.killing(q)?;
        let n = y.dot(&(&g * &y));
        Ok(v - &y * (v.dot(&(&g * &y)) / n))
    }

    /// k² + ⟨Y,Y⟩ > 0.
    pub fn in_uk(&self, q: &Vector, k: f64) -> Result<bool> {
        Ok(k * k + self.yy(q)? > 0.0)
    }

    /// φ_k = −⟨Y,Y⟩ / (k² + ⟨Y,Y⟩).
    pub fn conformal_factor(&self, q: &Vector, k: f64) -> Result<f64> {
        let n = self.yy(q)?;
        let margin = k * k + n;
        if !(margin > 0.0) {
            return Err(Error::OutsideUk { coords: q.iter().copied().collect(), margin });
        }
        Ok(-n / margin)
    }

    /// Chart displacement from a to b, reduced modulo coordinate periods.
    pub fn displacement(&self, a: &Vector, b: &Vector) -> Vector {
        let mut d = b - a;
        for (i, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    }

    /// g_R-length of the reduced displacement measured at a.
    pub fn riemannian_distance(&self, a: &Vector, b: &Vector) -> Result<f64> {
        let d = self.displacement(a, b);
        let gr = self.riemannian_metric(a)?;
        Ok(d.dot(&(&gr * &d)).max(0.0).sqrt())
    }

    /// A g_R-orthonormal basis of Y^⊥ at q, built by Gram–Schmidt from the
    /// coordinate vectors with the one most aligned with Y left out.
    pub fn horizontal_frame(&self, q: &Vector) -> Result<Vec<Vector>> {
        let gr = self.riemannian_metric(q)?;
        let y = self.killing(q)?;
        let skip = (0..self.m)
            .max_by(|&i, &j| y[i].abs().partial_cmp(&y[j].abs()).unwrap())
            .unwrap_or(0);
        let ynorm = y.dot(&(&gr * &y)).sqrt();
        let yhat = &y / ynorm;
        let mut frame: Vec<Vector> = Vec::with_capacity(self.m - 1);
        for i in (0..self.m).filter(|&i| i != skip) {
            let mut e = Vector::zeros(self.m);
            e[i] = 1.0;
            let c = yhat.dot(&(&gr * &e));
            e -= &yhat * c;
            for f in &frame {
                let c = f.dot(&(&gr * &e));
                e -= f * c;
            }
            let n = e.dot(&(&gr * &e)).sqrt();
            if n < 1e-12 {
                return Err(Error::FrameDegenerate(n));
            }
            frame.push(e / n);
        }
        Ok(frame)
    }
}

/// The conformal Riemannian metric h = φ_k·g_R together with its connection and curvature.
#[derive(Clone, Debug)]
pub struct ConformalGeometry {
    pub model: SpacetimeModel,
    pub k: f64,
}

impl ConformalGeometry {
    pub fn phi(&self, q: &Vector) -> Result<f64> {
        self.model.conformal_factor(q, self.k)
    }

    /// Coordinate gradient ∂_c φ_k = −k² ∂_c⟨Y,Y⟩ / (k²+⟨Y,Y⟩)².
    pub fn phi_gradient(&self, q: &Vector) -> Result<Vector> {
        let n = self.model.yy(q)?;
        self.phi(q)?;
        let dq = self.model.yy_gradient(q)?;
        let k2 = self.k * self.k;
        Ok(dq * (-k2 / ((k2 + n) * (k2 + n))))
    }

    /// h_ab = φ_k (g_R)_ab.
    pub fn metric(&self, q: &Vector) -> Result<Matrix> {
        Ok(self.model.riemannian_metric(q)? * self.phi(q)?)
    }

    /// ∂_c h_ab, assembled from ∂g, ∂Y and the product rule.
    pub fn metric_derivatives(&self, q: &Vector) -> Result<Vec<Matrix>> {
        let model = &self.model;
        let m = model.m;
        let g = model.metric(q)?;
        let y = model.killing(q)?;
        let dg = model.metric_derivatives(q)?;
        let dy = model.killing_jacobian(q)?;
        let om = &g * &y;
        let n = y.dot(&om);
        if !(n < 0.0) {
            return Err(Error::DegenerateKilling(n));
        }
        let phi = self.phi(q)?;
        let k2 = self.k * self.k;
        let gr = &g - (&om * om.transpose()) * (2.0 / n);
        let mut out = Vec::with_capacity(m);
        for c in 0..m {
            let dyc = dy.column(c).into_owned();
            let dom = &dg[c] * &y + &g * &dyc;
            let dn = y.dot(&(&dg[c] * &y)) + 2.0 * om.dot(&dyc);
            let dgr = &dg[c] - (&dom * om.transpose() + &om * dom.transpose()) * (2.0 / n)
                + (&om * om.transpose()) * (2.0 * dn / (n * n));
            let dphi = -k2 * dn / ((k2 + n) * (k2 + n));
            out.push(&gr * dphi + dgr * phi);
        }
        Ok(out)
    }

    pub fn christoffel(&self, q: &Vector) -> Result<Christoffel> {
        let h = self.metric(q)?;
        let hinv = h.try_inverse().ok_or_else(|| Error::OutOfChart(q.iter().copied().collect()))?;
        let dh = self.metric_derivatives(q)?;
        Ok(christoffel_from_metric(&hinv, &dh))
    }

    /// Christoffels of h from central differences of the assembled h components.
    pub fn christoffel_fd(&self, q: &Vector) -> Result<Christoffel> {
        let hstep = self.model.fd_step;
        let h = self.metric(q)?;
        let hinv = h.try_inverse().ok_or_else(|| Error::OutOfChart(q.iter().copied().collect()))?;
        let mut dh = Vec::with_capacity(self.model.m);
        for c in 0..self.model.m {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += hstep;
            qm[c] -= hstep;
            dh.push((self.metric(&qp)? - self.metric(&qm)?) / (2.0 * hstep));
        }
        Ok(christoffel_from_metric(&hinv, &dh))
    }

    pub fn christoffel_partials(&self, q: &Vector) -> Result<Vec<Christoffel>> {
        let h = self.model.fd_step;
        let mut out = Vec::with_capacity(self.model.m);
        for e in 0..self.model.m {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[e] += h;
            qm[e] -= h;
            let gp = self.christoffel(&qp)?;
            let gm = self.christoffel(&qm)?;
            out.push(Christoffel::combine(&gp, 0.5 / h, &gm, -0.5 / h));
        }
        Ok(out)
    }

    pub fn curvature(&self, q: &Vector) -> Result<Riemann> {
        let gam = self.christoffel(q)?;
        let dgam = self.christoffel_partials(q)?;
        Ok(Riemann::from_connection(&gam, &dgam))
    }

    /// ∇^{k}_v Y as a matrix acting on v.
    pub fn nabla_killing(&self, q: &Vector) -> Result<Matrix> {
        let y = self.model.killing(q)?;
        let gam = self.christoffel(q)?;
        let mut k = self.model.killing_jacobian(q)?;
        let m = self.model.m;
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for c in 0..m {
                    s += gam.get(a, b, c) * y[c];
                }
                k[(a, b)] += s;
            }
        }
        Ok(k)
    }
}

// Free-function forms of the chart operations.

pub fn metric_eval(model: &SpacetimeModel, q: &Event, v: &Tangent, w: &Tangent) -> Result<f64> {
    model.dot(&q.coords, &v.components, &w.components)
}

pub fn killing_eval(model: &SpacetimeModel, q: &Event) -> Result<Tangent> {
    Ok(Tangent { base: q.clone(), components: model.killing(&q.coords)? })
}

pub fn connection_coeffs(model: &SpacetimeModel, q: &Event) -> Result<Christoffel> {
    if !model.has_analytic_christoffels() {
        model.check_stencil(&q.coords, model.fd_step)?;
    }
    model.christoffel(&q.coords)
}

pub fn curvature_tensor(model: &SpacetimeModel, q: &Event) -> Result<Riemann> {
    model.curvature(&q.coords)
}

pub fn riemannian_metric_eval(
    model: &SpacetimeModel,
    q: &Event,
    v: &Tangent,
    w: &Tangent,
) -> Result<f64> {
    let gr = model.riemannian_metric(&q.coords)?;
    Ok(v.components.dot(&(&gr * &w.components)))
}

pub fn conformal_factor(model: &SpacetimeModel, q: &Event, k: f64) -> Result<f64> {
    model.conformal_factor(&q.coords, k)
}

pub fn uk_membership(model: &SpacetimeModel, q: &Event, k: f64) -> Result<bool> {
    model.in_uk(&q.coords, k)
}

pub fn conformal_geometry(model: &SpacetimeModel, k: f64) -> Result<ConformalGeometry> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParams(format!("energy constant k must be positive, got {k}")));
    }
    Ok(ConformalGeometry { model: model.clone(), k })
}
