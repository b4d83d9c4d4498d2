//! Concrete stationary spacetimes used as fixtures.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Christoffel, Matrix, SpacetimeModel, Vector};

/// Model name plus parameters, as read from a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        ModelSpec { name: name.to_string(), params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

pub const MODEL_NAMES: [&str; 5] =
    ["minkowski3", "minkowski4", "einstein_cylinder", "static_well", "rotating_frame"];

fn take_params(
    spec: &ModelSpec,
    allowed: &[(&str, f64)],
) -> Result<BTreeMap<String, f64>> {
    for key in spec.params.keys() {
        if !allowed.iter().any(|(k, _)| k == key) {
            return Err(Error::InvalidParams(format!(
                "model '{}' has no parameter '{}'",
                spec.name, key
            )));
        }
    }
    let mut out = BTreeMap::new();
    for (k, default) in allowed {
        let v = spec.params.get(*k).copied().unwrap_or(*default);
        if !v.is_finite() {
            return Err(Error::InvalidParams(format!("parameter '{k}' must be finite")));
        }
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

pub fn make_model(spec: &ModelSpec) -> Result<SpacetimeModel> {
    match spec.name.as_str() {
        "minkowski3" => {
            take_params(spec, &[])?;
            Ok(minkowski3())
        }
        "minkowski4" => {
            take_params(spec, &[])?;
            Ok(minkowski4())
        }
        "einstein_cylinder" => {
            take_params(spec, &[])?;
            Ok(einstein_cylinder())
        }
        "static_well" => {
            let p = take_params(spec, &[("a", 1.0)])?;
            let a = p["a"];
            if a < 0.0 {
                return Err(Error::InvalidParams(format!("static_well needs a >= 0, got {a}")));
            }
            Ok(static_well(a))
        }
        "rotating_frame" => {
            let p = take_params(spec, &[("omega", 0.3)])?;
            let w = p["omega"];
            if !(0.0..0.5).contains(&w) {
                return Err(Error::InvalidParams(format!(
                    "rotating_frame needs 0 <= omega < 0.5 so that r < 2 stays inside the light cylinder, got {w}"
                )));
            }
            Ok(rotating_frame(w))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn bounded(q: &Vector, bound: f64) -> bool {
    q.iter().all(|x| x.abs() < bound)
}

/// dx² + dy² − dz², Y = ∂z.
pub fn minkowski3() -> SpacetimeModel {
    SpacetimeModel::new(
        "minkowski3",
        3,
        |_| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, -1.0])),
        |_| Vector::from_vec(vec![0.0, 0.0, 1.0]),
        |q| bounded(q, 1e6),
    )
    .with_christoffels(|_| Christoffel::zeros(3))
    .with_killing_coordinate(2)
}

/// dx² + dy² + dz² − dt², Y = ∂t.
pub fn minkowski4() -> SpacetimeModel {
    SpacetimeModel::new(
        "minkowski4",
        4,
        |_| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 1.0, -1.0])),
        |_| Vector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
        |q| bounded(q, 1e6),
    )
    .with_christoffels(|_| Christoffel::zeros(4))
    .with_killing_coordinate(3)
}

/// −dt² + dθ² + sin²θ dφ² in coordinates (θ, φ, t), Y = ∂t.
pub fn einstein_cylinder() -> SpacetimeModel {
    SpacetimeModel::new(
        "einstein_cylinder",
        3,
        |q| {
            let s = q[0].sin();
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, s * s, -1.0]))
        },
        |_| Vector::from_vec(vec![0.0, 0.0, 1.0]),
        |q| q[0] >= 0.1 && q[0] <= PI - 0.1 && bounded(q, 1e6),
    )
    .with_christoffels(|q| {
        let (s, c) = q[0].sin_cos();
        let mut g = Christoffel::zeros(3);
        g.set(0, 1, 1, -s * c);
        g.set_sym(1, 0, 1, c / s);
        g
    })
    .with_periods(vec![None, Some(2.0 * PI), None])
    .with_killing_coordinate(2)
}

/// dx² + dy² − (1 + a x²) dt², Y = ∂t.
pub fn static_well(a: f64) -> SpacetimeModel {
    let mut params = BTreeMap::new();
    params.insert("a".to_string(), a);
    SpacetimeModel::new(
        "static_well",
        3,
        move |q| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, -(1.0 + a * q[0] * q[0])])),
        |_| Vector::from_vec(vec![0.0, 0.0, 1.0]),
        |q| bounded(q, 1e3),
    )
    .with_christoffels(move |q| {
        let x = q[0];
        let mut g = Christoffel::zeros(3);
        g.set_sym(2, 2, 0, a * x / (1.0 + a * x * x));
        g.set(0, 2, 2, a * x);
        g
    })
    .with_params(params)
    .with_killing_coordinate(2)
}

fn rotating_metric(w: f64, q: &Vector) -> Matrix {
    let (x, y) = (q[0], q[1]);
    let mut g = Matrix::identity(3, 3);
    g[(2, 2)] = -(1.0 - w * w * (x * x + y * y));
    g[(0, 2)] = -w * y;
    g[(2, 0)] = -w * y;
    g[(1, 2)] = w * x;
    g[(2, 1)] = w * x;
    g
}

/// Flat spacetime seen from a frame rotating at angular velocity ω, coordinates (x, y, t):
/// dx² + dy² − (1 − ω²r²) dt² + 2ω(x dy − y dx) dt, Y = ∂t. Chart restricted to r < 2.
pub fn rotating_frame(w: f64) -> SpacetimeModel {
    let mut params = BTreeMap::new();
    params.insert("omega".to_string(), w);
    SpacetimeModel::new(
        "rotating_frame",
        3,
        move |q| rotating_metric(w, q),
        |_| Vector::from_vec(vec![0.0, 0.0, 1.0]),
        move |q| {
            let r2 = q[0] * q[0] + q[1] * q[1];
            r2 < 4.0 && w * w * r2 < 1.0 && bounded(q, 1e6)
        },
    )
    .with_christoffels(move |q| {
        let (x, y) = (q[0], q[1]);
        // lowered symbols Γ_{d,bc}
        let mut low = [[[0.0f64; 3]; 3]; 3];
        let w2 = w * w;
        low[0][2][2] = -w2 * x;
        low[1][2][2] = -w2 * y;
        low[2][2][0] = w2 * x;
        low[2][0][2] = w2 * x;
        low[2][2][1] = w2 * y;
        low[2][1][2] = w2 * y;
        low[0][2][1] = -w;
        low[0][1][2] = -w;
        low[1][2][0] = w;
        low[1][0][2] = w;
        let ginv = rotating_metric(w, q).try_inverse().expect("rotating metric invertible in chart");
        let mut g = Christoffel::zeros(3);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut s = 0.0;
                    for d in 0..3 {
                        s += ginv[(a, d)] * low[d][b][c];
                    }
                    g.set(a, b, c, s);
                }
            }
        }
        g
    })
    .with_params(params)
    .with_killing_coordinate(2)
}
