use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use brachisto::geometry::{conformal_geometry, SpacetimeModel, Vector};
use brachisto::models::{self, make_model, ModelSpec, MODEL_NAMES};
use brachisto::transform::killing_flow;
use brachisto::Error;

fn model(i: usize) -> SpacetimeModel {
    match i {
        0 => models::minkowski3(),
        1 => models::minkowski4(),
        2 => models::einstein_cylinder(),
        3 => models::static_well(0.8),
        _ => models::rotating_frame(0.3),
    }
}

/// Maps unit-box samples into a comfortable part of the chart.
fn point(m: &SpacetimeModel, raw: &[f64; 4]) -> Vector {
    let mut q = Vector::from_iterator(m.m, raw.iter().take(m.m).map(|r| 0.8 * r));
    if m.name == "einstein_cylinder" {
        q[0] = PI / 2.0 + 1.2 * raw[0];
        q[1] = PI * raw[1];
    }
    q
}

fn vector(m: &SpacetimeModel, raw: &[f64; 4]) -> Vector {
    Vector::from_iterator(m.m, raw.iter().take(m.m).copied())
}

fn unit() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn riemannian_metric_is_positive(i in 0usize..5, q in unit(), v in unit()) {
        let m = model(i);
        let x = point(&m, &q);
        let v = vector(&m, &v);
        let gr = m.riemannian_metric(&x).unwrap();
        let n = v.dot(&(&gr * &v));
        prop_assert!(n > 0.0 || v.norm() == 0.0);
        prop_assert!(gr.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn killing_field_is_antisymmetric(i in 0usize..5, q in unit(), a in unit(), b in unit()) {
        let m = model(i);
        let x = point(&m, &q);
        let (v, w) = (vector(&m, &a), vector(&m, &b));
        let ny = m.nabla_killing(&x).unwrap();
        let s = m.dot(&x, &(&ny * &v), &w).unwrap() + m.dot(&x, &(&ny * &w), &v).unwrap();
        prop_assert!(s.abs() <= 1e-6 * (1.0 + v.norm() * w.norm()));
    }

    #[test]
    fn norm_of_y_is_constant_on_flow_lines(i in 0usize..5, q in unit(), s in -0.3..0.3f64) {
        let m = model(i);
        let x = point(&m, &q);
        let y = killing_flow(&m, &x, s).unwrap();
        prop_assert!((m.yy(&x).unwrap() - m.yy(&y).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn flow_is_an_isometry(i in 0usize..5, q in unit(), a in unit(), s in -0.5..0.5f64) {
        let m = model(i);
        let x = point(&m, &q);
        let v = vector(&m, &a);
        let d = brachisto::transform::killing_flow_differential(&m, &x, s).unwrap();
        let y = killing_flow(&m, &x, s).unwrap();
        let before = m.dot(&x, &v, &v).unwrap();
        let after = m.dot(&y, &(&d * &v), &(&d * &v)).unwrap();
        prop_assert!((before - after).abs() < 1e-7 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn first_bianchi_identity(i in 0usize..5, q in unit(), a in unit(), b in unit(), c in unit()) {
        let m = model(i);
        let x = point(&m, &q);
        let (u, v, w) = (vector(&m, &a), vector(&m, &b), vector(&m, &c));
        let r = m.curvature(&x).unwrap();
        let s = r.apply(&u, &v, &w) + r.apply(&v, &w, &u) + r.apply(&w, &u, &v);
        prop_assert!(s.amax() < 1e-6);
    }

    #[test]
    fn analytic_connection_matches_metric(i in 0usize..5, q in unit()) {
        let m = model(i);
        let x = point(&m, &q);
        let a = m.christoffel(&x).unwrap();
        let f = m.christoffel_fd(&x).unwrap();
        prop_assert!(a.max_abs_diff(&f) < 1e-7);
    }

    #[test]
    fn conformal_curvature_is_antisymmetric(i in 0usize..5, q in unit(), a in unit(), b in unit(), c in unit()) {
        let m = model(i);
        let cg = conformal_geometry(&m, 2.0).unwrap();
        let x = point(&m, &q);
        let (u, v, w) = (vector(&m, &a), vector(&m, &b), vector(&m, &c));
        let r = cg.curvature(&x).unwrap();
        prop_assert!((r.apply(&u, &v, &w) + r.apply(&v, &u, &w)).amax() < 1e-9);
    }
}

#[test]
fn conformal_factor_of_unit_killing_field() {
    // ⟨Y,Y⟩ = −1 gives φ_k = 1/(k²−1)
    let m = models::einstein_cylinder();
    let x = Vector::from_vec(vec![1.0, 0.4, 2.0]);
    assert_relative_eq!(m.conformal_factor(&x, 2.0).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
    assert_relative_eq!(m.conformal_factor(&x, 2f64.sqrt()).unwrap(), 1.0, epsilon = 1e-14);
    assert!(m.in_uk(&x, 2.0).unwrap());
    assert!(!m.in_uk(&x, 0.9).unwrap());
}

#[test]
fn cylinder_conformal_metric_is_a_round_sphere() {
    // for k = √2, h = dθ² + sin²θ dφ² on the horizontal block: the unit sphere
    let m = models::einstein_cylinder();
    let cg = conformal_geometry(&m, 2f64.sqrt()).unwrap();
    let x = Vector::from_vec(vec![1.1, 0.3, 0.0]);
    let (e1, e2) = (Vector::from_vec(vec![1.0, 0.0, 0.0]), Vector::from_vec(vec![0.0, 1.0, 0.0]));
    let h = cg.metric(&x).unwrap();
    let r = cg.curvature(&x).unwrap();
    let num = (h.clone() * r.apply(&e1, &e2, &e2)).dot(&e1);
    let den = (&h * &e1).dot(&e1) * (&h * &e2).dot(&e2) - (&h * &e1).dot(&e2).powi(2);
    assert_relative_eq!(num / den, 1.0, epsilon = 1e-6);
}

#[test]
fn flat_models_have_no_curvature() {
    for m in [models::minkowski3(), models::minkowski4()] {
        let x = Vector::from_element(m.m, 0.3);
        assert_eq!(m.christoffel(&x).unwrap().max_abs(), 0.0);
        assert_eq!(m.curvature(&x).unwrap().max_abs(), 0.0);
    }
}

#[test]
fn static_well_has_nonzero_killing_derivative() {
    let m = models::static_well(1.0);
    let x = Vector::from_vec(vec![0.5, 0.0, 0.0]);
    assert!(m.nabla_killing(&x).unwrap().amax() > 0.1);
    let r = models::rotating_frame(0.3);
    assert!(r.nabla_killing(&x).unwrap().amax() > 0.1);
}

#[test]
fn registry_builds_every_model() {
    for name in MODEL_NAMES {
        let m = make_model(&ModelSpec::new(name)).unwrap();
        assert_eq!(m.name, name);
    }
    assert!(matches!(make_model(&ModelSpec::new("schwarzschild")), Err(Error::UnknownModel(_))));
    assert!(matches!(
        make_model(&ModelSpec::new("static_well").with_param("b", 1.0)),
        Err(Error::InvalidParams(_))
    ));
    assert!(matches!(
        make_model(&ModelSpec::new("rotating_frame").with_param("omega", 0.7)),
        Err(Error::InvalidParams(_))
    ));
}

#[test]
fn points_outside_the_chart_are_rejected() {
    let m = models::einstein_cylinder();
    assert!(matches!(m.metric(&Vector::from_vec(vec![0.01, 0.0, 0.0])), Err(Error::OutOfChart(_))));
    let r = models::rotating_frame(0.3);
    assert!(r.metric(&Vector::from_vec(vec![2.5, 0.0, 0.0])).is_err());
}
