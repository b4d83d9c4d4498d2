//! Sampled curves, vector fields along them, covariant differentiation and quadrature.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Event, SpacetimeModel, Tangent, Vector};

/// A curve sampled on a strictly increasing grid, with positions and velocities per node.
///
/// Curves normally live on [0,1]; sub-intervals [t0,1] are allowed for restricted problems.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Vec<Vector>,
}

/// A vector field along a curve. `derivative` holds d/dt of the components when known exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldAlongCurve {
    pub grid: Vec<f64>,
    pub values: Vec<Vector>,
    pub derivative: Option<Vec<Vector>>,
}

pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 5 {
        return Err(Error::GridTooCoarse(grid.len().saturating_sub(1)));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::MalformedCurve("grid is not strictly increasing".into()));
    }
    Ok(())
}

impl Curve {
    pub fn new(grid: Vec<f64>, points: Vec<Vector>, velocities: Vec<Vector>) -> Result<Self> {
        check_grid(&grid)?;
        if points.len() != grid.len() || velocities.len() != grid.len() {
            return Err(Error::MalformedCurve("node count mismatch".into()));
        }
        let m = points[0].len();
        if points.iter().chain(velocities.iter()).any(|v| v.len() != m) {
            return Err(Error::MalformedCurve("inconsistent dimension".into()));
        }
        Ok(Curve { grid, points, velocities })
    }

    /// Samples t ↦ (x(t), ẋ(t)) on a uniform grid of n intervals over [a,b].
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> (Vector, Vector)) -> Result<Self> {
        let grid = uniform_grid(a, b, n);
        let (points, velocities) = grid.iter().map(|&t| f(t)).unzip();
        Curve::new(grid, points, velocities)
    }

    /// Checks that every node lies in the model's chart.
    pub fn check_in(&self, model: &SpacetimeModel) -> Result<()> {
        for p in &self.points {
            model.check(p)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn t_start(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn event(&self, i: usize) -> Event {
        Event { coords: self.points[i].clone() }
    }

    pub fn tangent(&self, i: usize) -> Tangent {
        Tangent { base: self.event(i), components: self.velocities[i].clone() }
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.grid.partition_point(|&g| g <= t);
        i.clamp(1, self.grid.len() - 1) - 1
    }

    /// Cubic Hermite interpolation of position and velocity at t.
    pub fn eval(&self, t: f64) -> (Vector, Vector) {
        let i = self.locate(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (p0, p1) = (&self.points[i], &self.points[i + 1]);
        let (m0, m1) = (&self.velocities[i] * h, &self.velocities[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let x = p0 * h00 + &m0 * h10 + p1 * h01 + &m1 * h11;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let v = (p0 * d00 + &m0 * d10 + p1 * d01 + &m1 * d11) / h;
        (x, v)
    }

    /// Direction-reversed curve t ↦ c(a+b−t), velocities negated.
    pub fn reversed(&self) -> Curve {
        let (a, b) = (self.t_start(), self.t_end());
        Curve {
            grid: self.grid.iter().rev().map(|&t| a + b - t).collect(),
            points: self.points.iter().rev().cloned().collect(),
            velocities: self.velocities.iter().rev().map(|v| -v).collect(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        let h = (self.t_end() - self.t_start()) / self.n() as f64;
        self.grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-12 * h.max(1.0))
    }

    /// Serialises as CSV with columns t, q_1..q_m, v_1..v_m.
    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let mut s = String::from("t");
        for i in 1..=m {
            let _ = write!(s, ",q_{i}");
        }
        for i in 1..=m {
            let _ = write!(s, ",v_{i}");
        }
        s.push('\n');
        for i in 0..self.grid.len() {
            let _ = write!(s, "{:.16e}", self.grid[i]);
            for x in self.points[i].iter().chain(self.velocities[i].iter()) {
                let _ = write!(s, ",{:.16e}", x);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Curve> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::MalformedCurve("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 3 || (cols - 1) % 2 != 0 {
            return Err(Error::MalformedCurve(format!("bad header '{header}'")));
        }
        let m = (cols - 1) / 2;
        let (mut grid, mut points, mut vels) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::MalformedCurve(format!("bad number: {e}")))?;
            if vals.len() != cols {
                return Err(Error::MalformedCurve("ragged row".into()));
            }
            grid.push(vals[0]);
            points.push(Vector::from_column_slice(&vals[1..=m]));
            vels.push(Vector::from_column_slice(&vals[m + 1..]));
        }
        Curve::new(grid, points, vels)
    }
}

impl FieldAlongCurve {
    pub fn new(grid: Vec<f64>, values: Vec<Vector>) -> Self {
        FieldAlongCurve { grid, values, derivative: None }
    }

    pub fn with_derivative(grid: Vec<f64>, values: Vec<Vector>, derivative: Vec<Vector>) -> Self {
        FieldAlongCurve { grid, values, derivative: Some(derivative) }
    }

    pub fn zeros(host: &Curve) -> Self {
        let z = vec![Vector::zeros(host.dim()); host.grid.len()];
        FieldAlongCurve { grid: host.grid.clone(), values: z.clone(), derivative: Some(z) }
    }

    /// Samples f(t) = (value, d/dt value) on the host grid.
    pub fn from_fn(host: &Curve, f: impl Fn(usize, f64) -> (Vector, Vector)) -> Self {
        let (values, derivative) = host.grid.iter().enumerate().map(|(i, &t)| f(i, t)).unzip();
        FieldAlongCurve { grid: host.grid.clone(), values, derivative: Some(derivative) }
    }

    pub fn is_hosted_on(&self, c: &Curve) -> bool {
        self.grid.len() == c.grid.len()
            && self.grid.iter().zip(&c.grid).all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    pub fn check_host(&self, c: &Curve) -> Result<()> {
        if self.is_hosted_on(c) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "field has {} nodes, curve has {}",
                self.grid.len(),
                c.grid.len()
            )))
        }
    }

    /// Component derivative d/dt: stored values when present, fourth-order differences otherwise.
    pub fn component_derivative(&self) -> Vec<Vector> {
        match &self.derivative {
            Some(d) => d.clone(),
            None => differentiate(&self.grid, &self.values, 4),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        FieldAlongCurve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * a).collect(),
            derivative: self.derivative.as_ref().map(|d| d.iter().map(|v| v * a).collect()),
        }
    }

    /// a·self + b·other; derivatives are kept only when both are present.
    pub fn lin_comb(&self, a: f64, other: &FieldAlongCurve, b: f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x * a + y * b).collect();
        let derivative = match (&self.derivative, &other.derivative) {
            (Some(d1), Some(d2)) => Some(d1.iter().zip(d2).map(|(x, y)| x * a + y * b).collect()),
            _ => None,
        };
        FieldAlongCurve { grid: self.grid.clone(), values, derivative }
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn reversed(&self) -> Self {
        let (a, b) = (self.grid[0], *self.grid.last().unwrap());
        FieldAlongCurve {
            grid: self.grid.iter().rev().map(|&t| a + b - t).collect(),
            values: self.values.iter().rev().cloned().collect(),
            derivative: self.derivative.as_ref().map(|d| d.iter().rev().map(|v| -v).collect()),
        }
    }
}

/// Derivative at x0 of the Lagrange basis polynomials through xs.
pub fn lagrange_derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let mut p = 1.0 / (xs[j] - xs[k]);
            for l in 0..n {
                if l != j && l != k {
                    p *= (x0 - xs[l]) / (xs[j] - xs[l]);
                }
            }
            s += p;
        }
        w[j] = s;
    }
    w
}

fn stencil(i: usize, n_nodes: usize, width: usize) -> std::ops::Range<usize> {
    let half = width / 2;
    let start = i.saturating_sub(half).min(n_nodes - width);
    start..start + width
}

/// Node-wise derivative of sampled vectors by polynomial differentiation.
/// `order` 2 uses three-point stencils, 4 uses five-point stencils; both are one-sided at the ends.
pub fn differentiate(grid: &[f64], values: &[Vector], order: usize) -> Vec<Vector> {
    let width = if order >= 4 { 5 } else { 3 };
    let n_nodes = grid.len();
    (0..n_nodes)
        .map(|i| {
            let r = stencil(i, n_nodes, width);
            let w = lagrange_derivative_weights(grid[i], &grid[r.clone()]);
            let mut d = Vector::zeros(values[i].len());
            for (wj, j) in w.iter().zip(r) {
                d += &values[j] * *wj;
            }
            d
        })
        .collect()
}

pub fn differentiate_scalar(grid: &[f64], values: &[f64], order: usize) -> Vec<f64> {
    let vs: Vec<Vector> = values.iter().map(|&x| Vector::from_element(1, x)).collect();
    differentiate(grid, &vs, order).into_iter().map(|v| v[0]).collect()
}

/// Cumulative integral ∫_{t_0}^{t_i} f, exact for cubics: each interval integrates the
/// cubic through the four nearest nodes (two-point Gauss rule).
pub fn cumulative_integral(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n_nodes = grid.len();
    let mut out = vec![0.0; n_nodes];
    if n_nodes < 2 {
        return out;
    }
    let g = 0.5 / 3f64.sqrt();
    for i in 0..n_nodes - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let h = b - a;
        let r = if n_nodes >= 4 { stencil_interval(i, n_nodes) } else { 0..n_nodes };
        let xs = &grid[r.clone()];
        let mut s = 0.0;
        for gp in [0.5 - g, 0.5 + g] {
            let x = a + gp * h;
            for (jj, j) in r.clone().enumerate() {
                s += 0.5 * h * lagrange_value(x, xs, jj) * values[j];
            }
        }
        out[i + 1] = out[i] + s;
    }
    out
}

fn stencil_interval(i: usize, n_nodes: usize) -> std::ops::Range<usize> {
    let start = i.saturating_sub(1).min(n_nodes - 4);
    start..start + 4
}

fn lagrange_value(x: f64, xs: &[f64], j: usize) -> f64 {
    let mut p = 1.0;
    for (l, &xl) in xs.iter().enumerate() {
        if l != j {
            p *= (x - xl) / (xs[j] - xl);
        }
    }
    p
}

/// ∫ f over the whole grid with the fourth-order rule of [`cumulative_integral`].
pub fn integrate(grid: &[f64], values: &[f64]) -> f64 {
    *cumulative_integral(grid, values).last().unwrap_or(&0.0)
}

/// Composite trapezoid rule.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2).zip(values.windows(2)).map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1])).sum()
}

/// Node-wise ∇_ċ f = df/dt + Γ(ċ, f). Uses stored derivative data when present and
/// second-order differences otherwise.
pub fn covariant_derivative_along(
    model: &SpacetimeModel,
    c: &Curve,
    f: &FieldAlongCurve,
) -> Result<FieldAlongCurve> {
    covariant_derivative_along_order(model, c, f, 2)
}

/// As [`covariant_derivative_along`] with a selectable difference order (2 or 4).
pub fn covariant_derivative_along_order(
    model: &SpacetimeModel,
    c: &Curve,
    f: &FieldAlongCurve,
    order: usize,
) -> Result<FieldAlongCurve> {
    if c.n() < 4 {
        return Err(Error::GridTooCoarse(c.n()));
    }
    f.check_host(c)?;
    let d = match &f.derivative {
        Some(d) => d.clone(),
        None => differentiate(&c.grid, &f.values, order),
    };
    let mut out = Vec::with_capacity(d.len());
    for i in 0..c.grid.len() {
        let gam = model.christoffel(&c.points[i])?;
        out.push(&d[i] + gam.contract(&c.velocities[i], &f.values[i]));
    }
    Ok(FieldAlongCurve::new(c.grid.clone(), out))
}

/// Composite trapezoid of weight·⟨f,g⟩.
pub fn field_integral(
    model: &SpacetimeModel,
    c: &Curve,
    f: &FieldAlongCurve,
    g: &FieldAlongCurve,
    weight: &[f64],
) -> Result<f64> {
    f.check_host(c)?;
    g.check_host(c)?;
    if weight.len() != c.grid.len() {
        return Err(Error::GridMismatch("weight length differs from grid".into()));
    }
    let mut vals = Vec::with_capacity(c.grid.len());
    for i in 0..c.grid.len() {
        vals.push(weight[i] * model.dot(&c.points[i], &f.values[i], &g.values[i])?);
    }
    Ok(trapezoid(&c.grid, &vals))
}

/// Cubic Hermite resampling onto a uniform grid of n intervals over the same parameter range.
pub fn resample_curve(c: &Curve, n: usize) -> Result<Curve> {
    if n < 4 {
        return Err(Error::GridTooCoarse(n));
    }
    let (a, b) = (c.t_start(), c.t_end());
    if n == c.n() && c.is_uniform() {
        return Ok(c.clone());
    }
    Curve::from_fn(a, b, n, |t| c.eval(t))
}

/// Restriction of c to [t0, t_end], resampled on a uniform grid of n intervals.
pub fn restrict_curve(c: &Curve, t0: f64, n: usize) -> Result<Curve> {
    if n < 4 {
        return Err(Error::GridTooCoarse(n));
    }
    Curve::from_fn(t0, c.t_end(), n, |t| c.eval(t))
}

/// Cubic Hermite resampling of a field onto another grid.
pub fn resample_field(f: &FieldAlongCurve, grid: &[f64]) -> FieldAlongCurve {
    let d = f.component_derivative();
    let host = Curve { grid: f.grid.clone(), points: f.values.clone(), velocities: d };
    let (values, derivative) = grid.iter().map(|&t| host.eval(t)).unzip();
    FieldAlongCurve { grid: grid.to_vec(), values, derivative: Some(derivative) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use std::f64::consts::PI;

    #[test]
    fn sin_squared_integral() {
        let grid = uniform_grid(0.0, 1.0, 200);
        let v: Vec<f64> = grid.iter().map(|t| (PI * t).sin().powi(2)).collect();
        assert!((trapezoid(&grid, &v) - 0.5).abs() < 1e-4);
        assert!((integrate(&grid, &v) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn cumulative_integral_exact_for_cubics() {
        let grid: Vec<f64> = (0..=7).map(|i| (i as f64 / 7.0).powf(1.3)).collect();
        let v: Vec<f64> = grid.iter().map(|t| 1.0 + t - 2.0 * t * t + 3.0 * t * t * t).collect();
        let c = cumulative_integral(&grid, &v);
        for (i, &t) in grid.iter().enumerate() {
            let exact = t + t * t / 2.0 - 2.0 * t.powi(3) / 3.0 + 0.75 * t.powi(4);
            assert!((c[i] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn fourth_order_derivative_exact_for_quartics() {
        let grid = uniform_grid(0.0, 1.0, 10);
        let v: Vec<f64> = grid.iter().map(|t| t.powi(4) - t).collect();
        let d = differentiate_scalar(&grid, &v, 4);
        for (i, &t) in grid.iter().enumerate() {
            assert!((d[i] - (4.0 * t.powi(3) - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn resample_straight_line_and_identity() {
        let c = Curve::from_fn(0.0, 1.0, 37, |t| {
            (Vector::from_vec(vec![t, 2.0 * t, -t]), Vector::from_vec(vec![1.0, 2.0, -1.0]))
        })
        .unwrap();
        let r = resample_curve(&c, 100).unwrap();
        for (i, &t) in r.grid.iter().enumerate() {
            assert!((r.points[i][1] - 2.0 * t).abs() < 1e-12);
        }
        let same = resample_curve(&r, 100).unwrap();
        assert_eq!(same, r);
    }

    #[test]
    fn flat_constant_field_has_zero_derivative() {
        let m = models::minkowski3();
        let c = Curve::from_fn(0.0, 1.0, 20, |t| {
            (Vector::from_vec(vec![t, 0.0, 1.4 * t]), Vector::from_vec(vec![1.0, 0.0, 1.4]))
        })
        .unwrap();
        let f = FieldAlongCurve::new(c.grid.clone(), vec![Vector::from_vec(vec![1.0, 2.0, 3.0]); 21]);
        let d = covariant_derivative_along(&m, &c, &f).unwrap();
        assert!(d.max_norm() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let c = Curve::from_fn(0.0, 1.0, 8, |t| {
            (Vector::from_vec(vec![t.sin(), t]), Vector::from_vec(vec![t.cos(), 1.0]))
        })
        .unwrap();
        let back = Curve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
    }
}
