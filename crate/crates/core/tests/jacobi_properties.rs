use std::f64::consts::PI;

use proptest::prelude::*;

use brachisto::curves::{Curve, FieldAlongCurve};
use brachisto::dynamics::{integrate_brachistochrone, BrachistochroneSolution, IntegrationConfig};
use brachisto::geometry::{conformal_geometry, Event, SpacetimeModel, Tangent, Vector};
use brachisto::jacobi::{
    bfocal_points, bjacobi_zero_start_data, focal_points, gamma_jacobi_basis, integrate_bjacobi, integrate_rjacobi,
    jacobi_residual, map_l, Orientation,
};
use brachisto::models;
use brachisto::oracle::{fd_bjacobi_field, InitialPerturbation};
use brachisto::transform::dd_differential;
use brachisto::Error;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn well_solution() -> (SpacetimeModel, BrachistochroneSolution) {
    let m = models::static_well(1.0);
    let p = Event::new(&[0.3, -0.2, 0.0]);
    let u = Tangent::new(&p, &[0.4f64.cos(), 0.4f64.sin(), 0.0]);
    let cfg = IntegrationConfig { rtol: 1e-12, atol: 1e-12, n_grid: 400 };
    let sol = integrate_brachistochrone(&m, 1.7, &p, &u, 1.2, &cfg).unwrap();
    (m, sol)
}

/// Projects w0 onto the admissible set ⟨W, kσ̇ − TY⟩ + T⟨V, ∇_σ̇Y⟩ = 0 at σ(0).
fn admissible(m: &SpacetimeModel, sol: &BrachistochroneSolution, vv: &Vector, w0: &Vector) -> Vector {
    let x = &sol.sigma.points[0];
    let s = &sol.sigma.velocities[0];
    let y = m.killing(x).unwrap();
    let dy = m.nabla_killing(x).unwrap() * s;
    let a = s * sol.k - &y * sol.travel_time;
    let rhs = m.dot(x, w0, &a).unwrap() + sol.travel_time * m.dot(x, vv, &dy).unwrap();
    w0 - &a * (rhs / m.dot(x, &a, &a).unwrap())
}

fn equator(l: f64) -> Curve {
    Curve::from_fn(0.0, 1.0, 400, |t| (v(&[PI / 2.0, l * t, 0.0]), v(&[0.0, l, 0.0]))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bjacobi_fields_superpose(a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64),
                                c1 in -2.0..2.0f64, c2 in -2.0..2.0f64) {
        let (m, sol) = well_solution();
        let (v1, v2) = (v(&a), v(&b));
        let w1 = admissible(&m, &sol, &v1, &v2);
        let w2 = admissible(&m, &sol, &v2, &v1);
        let j1 = integrate_bjacobi(&m, &sol, &v1, &w1).unwrap();
        let j2 = integrate_bjacobi(&m, &sol, &v2, &w2).unwrap();
        let j = integrate_bjacobi(&m, &sol, &(&v1 * c1 + &v2 * c2), &(&w1 * c1 + &w2 * c2)).unwrap();
        let comb = j1.field.lin_comb(c1, &j2.field, c2);
        let err = j.field.values.iter().zip(&comb.values).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9 * (1.0 + j.field.max_norm()));
        prop_assert!(j.conserved_drift < 1e-6);
    }

    #[test]
    fn rjacobi_fields_superpose(a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64), c in -2.0..2.0f64) {
        let m = models::einstein_cylinder();
        let cg = conformal_geometry(&m, 2f64.sqrt()).unwrap();
        let w = equator(2.0);
        let (x, y) = (v(&a), v(&b));
        let j1 = integrate_rjacobi(&cg, &w, &x, &y).unwrap();
        let j2 = integrate_rjacobi(&cg, &w, &y, &x).unwrap();
        let j = integrate_rjacobi(&cg, &w, &(&x + &y * c), &(&y + &x * c)).unwrap();
        let comb = j1.field.lin_comb(1.0, &j2.field, c);
        let err = j.field.values.iter().zip(&comb.values).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9 * (1.0 + j.field.max_norm()));
    }
}

#[test]
fn zero_data_gives_zero_field() {
    let (m, sol) = well_solution();
    let z = Vector::zeros(3);
    let j = integrate_bjacobi(&m, &sol, &z, &z).unwrap();
    assert_eq!(j.field.max_norm(), 0.0);
}

#[test]
fn inadmissible_data_is_rejected() {
    let (m, sol) = well_solution();
    let r = integrate_bjacobi(&m, &sol, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0]));
    assert!(matches!(r, Err(Error::InitialConditionViolated(_))));
}

#[test]
fn bjacobi_field_matches_launch_family() {
    let (m, sol) = well_solution();
    let pert = InitialPerturbation { du: v(&[-0.4f64.sin(), 0.4f64.cos(), 0.0]), dt: 0.3 };
    let fd = fd_bjacobi_field(&m, &sol, &pert, 1e-5).unwrap();
    let x0 = &sol.sigma.points[0];
    let gam = m.christoffel(x0).unwrap();
    let w0 = &fd.derivative.as_ref().unwrap()[0] + gam.contract(&sol.sigma.velocities[0], &fd.values[0]);
    let j = integrate_bjacobi(&m, &sol, &fd.values[0], &w0).unwrap();
    let err = j.field.values.iter().zip(&fd.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    assert!(err < 1e-3 * fd.max_norm(), "relative error {}", err / fd.max_norm());
    assert!(j.conserved_drift < 1e-6);
}

#[test]
fn zero_start_data_is_admissible() {
    let (m, sol) = well_solution();
    let x = &sol.sigma.points[0];
    let s = &sol.sigma.velocities[0];
    let z = Vector::zeros(3);
    for w in bjacobi_zero_start_data(&m, sol.k, sol.travel_time, x, s).unwrap() {
        assert!(integrate_bjacobi(&m, &sol, &z, &w).is_ok());
    }
}

#[test]
fn flat_jacobi_fields_never_refocus() {
    let m = models::minkowski3();
    let p = Event::new(&[0.0, 0.0, 0.0]);
    let u = Tangent::new(&p, &[1.0, 0.3, 0.0]);
    let sol = integrate_brachistochrone(&m, 1.5, &p, &u, 1.0, &IntegrationConfig::default()).unwrap();
    let r = bfocal_points(&m, &sol).unwrap();
    assert!(r.report.focal_list.is_empty());
    assert_eq!(r.report.geometric_index, 0);
    assert_eq!(r.report.orientation, Orientation::PToGamma);
}

#[test]
fn sphere_jacobi_field_is_a_sine() {
    // on the unit sphere a field vanishing at the start is sin(s)·normal, s = arc length
    let m = models::einstein_cylinder();
    let cg = conformal_geometry(&m, 2f64.sqrt()).unwrap();
    let l = 2.5;
    let w = equator(l);
    let j = integrate_rjacobi(&cg, &w, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap();
    for (i, &t) in w.grid.iter().enumerate() {
        let f = &j.field.values[i];
        assert!((f[0] - (l * t).sin() / l).abs() < 1e-9);
        assert!(f[1].abs() < 1e-12 && f[2].abs() < 1e-12);
    }
}

#[test]
fn killing_field_is_a_jacobi_field() {
    let m = models::static_well(1.0);
    let cg = conformal_geometry(&m, 2.0).unwrap();
    let w = brachisto::dynamics::integrate_conformal_geodesic(
        &m,
        2.0,
        &Event::new(&[0.2, 0.1, 0.0]),
        &Tangent::new(&Event::new(&[0.2, 0.1, 0.0]), &[0.5, 0.7, 0.0]),
        &IntegrationConfig::default(),
    )
    .unwrap();
    let y = FieldAlongCurve::from_fn(&w, |_, _| (v(&[0.0, 0.0, 1.0]), v(&[0.0, 0.0, 0.0])));
    assert!(jacobi_residual(&cg, &w, &y).unwrap() < 1e-6);
}

#[test]
fn gamma_basis_has_model_dimension() {
    for (m, k) in [(models::minkowski4(), 1.5), (models::static_well(1.0), 2.0), (models::rotating_frame(0.3), 1.6)] {
        let cg = conformal_geometry(&m, k).unwrap();
        let q = Event::new(&vec![0.1; m.m]);
        let mut dir = vec![0.0; m.m];
        dir[0] = 0.6;
        dir[1] = 0.5;
        let d = m.horizontal_part(&q.coords, &v(&dir)).unwrap();
        let w = brachisto::dynamics::integrate_conformal_geodesic(
            &m,
            k,
            &q,
            &Tangent::new(&q, d.as_slice()),
            &IntegrationConfig::default(),
        )
        .unwrap();
        let basis = gamma_jacobi_basis(&cg, &w).unwrap();
        assert_eq!(basis.len(), m.m);
        for b in &basis {
            assert!(b.conserved_drift < 1e-6, "{}: drift {}", m.name, b.conserved_drift);
        }
    }
}

#[test]
fn minkowski_gamma_basis_is_affine() {
    let m = models::minkowski3();
    let cg = conformal_geometry(&m, 2.0).unwrap();
    let w = Curve::from_fn(0.0, 1.0, 100, |t| (v(&[t, 0.5 * t, 0.0]), v(&[1.0, 0.5, 0.0]))).unwrap();
    let basis = gamma_jacobi_basis(&cg, &w).unwrap();
    // the first field is the constant Y, the others t·e_j
    for (i, &t) in w.grid.iter().enumerate() {
        assert!((&basis[0].field.values[i] - v(&[0.0, 0.0, 1.0])).amax() < 1e-12);
        for b in &basis[1..] {
            let e = &b.derivative.values[0];
            assert!((&b.field.values[i] - e * t).amax() < 1e-12);
        }
    }
}

#[test]
fn sphere_focal_points() {
    let m = models::einstein_cylinder();
    let cg = conformal_geometry(&m, 2f64.sqrt()).unwrap();
    let l = 1.4 * PI;
    let r = focal_points(&cg, &equator(l)).unwrap();
    assert_eq!(r.geometric_index, 1);
    assert!((r.focal_list[0].t - PI / l).abs() < 1e-6);
    let l = 2.6 * PI;
    let r = focal_points(&cg, &equator(l)).unwrap();
    assert_eq!(r.geometric_index, 2);
    assert!((r.focal_list[1].t - 2.0 * PI / l).abs() < 1e-6);
    // an arc shorter than π has none
    assert_eq!(focal_points(&cg, &equator(3.0)).unwrap().geometric_index, 0);
    // tilted start is not orthogonal to γ
    let tilted = Curve::from_fn(0.0, 1.0, 100, |t| (v(&[PI / 2.0, t, 0.3 * t]), v(&[0.0, 1.0, 0.3]))).unwrap();
    assert!(matches!(focal_points(&cg, &tilted), Err(Error::NotOrthogonalStart(_))));
}

#[test]
fn map_l_at_start_is_the_deformation_differential() {
    let (m, sol) = well_solution();
    let pert = InitialPerturbation { du: v(&[0.2, -0.5, 0.0]), dt: 0.1 };
    let zeta = fd_bjacobi_field(&m, &sol, &pert, 1e-5).unwrap();
    let a = map_l(&m, &sol, 0.0, &zeta).unwrap();
    let b = dd_differential(&m, &sol, &zeta).unwrap();
    let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn map_l_preserves_a_zero_at_its_start() {
    let (m, sol) = well_solution();
    let x = &sol.sigma.points[0];
    let s = &sol.sigma.velocities[0];
    let w = &bjacobi_zero_start_data(&m, sol.k, sol.travel_time, x, s).unwrap()[0];
    let j = integrate_bjacobi(&m, &sol, &Vector::zeros(3), w).unwrap();
    let out = map_l(&m, &sol, 0.0, &j.field).unwrap();
    assert!(out.values[0].amax() < 1e-12);
    assert!(out.max_norm() > 1e-3);
}

#[test]
fn map_l_rejects_fields_outside_the_tangent_space() {
    let (m, sol) = well_solution();
    let t0 = 0.25;
    let grid = brachisto::curves::uniform_grid(t0, 1.0, 150);
    let zeta = FieldAlongCurve::with_derivative(
        grid.clone(),
        grid.iter().map(|&t| v(&[(t - t0) * 0.4, (t - t0).powi(2), 0.0])).collect(),
        grid.iter().map(|&t| v(&[0.4, 2.0 * (t - t0), 0.0])).collect(),
    );
    assert!(matches!(map_l(&m, &sol, t0, &zeta), Err(Error::ConstraintViolated(_))));
}
