use proptest::prelude::*;

use brachisto::bvp::ObserverWorldline;
use brachisto::curves::Curve;
use brachisto::dynamics::conformal_energy;
use brachisto::geometry::{conformal_geometry, Event, Vector};
use brachisto::models;
use brachisto::oracle::{chi, discrete_minimize, penalized_energy, psi_k, straight_initial_curve, OracleOptions, PenaltyConfig};
use brachisto::Error;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

proptest! {
    #[test]
    fn chi_is_convex_and_nonnegative(s in 0.0..20.0f64, h in 1e-3..1.0f64) {
        prop_assert!(chi(s) >= 0.0);
        prop_assert!(chi(s + h) >= chi(s));
        prop_assert!(chi(s + h) + chi((s - h).max(0.0)) >= 2.0 * chi(s) - 1e-12 * chi(s + h));
    }

    #[test]
    fn penalty_vanishes_below_the_cutoff(eps in 1e-3..1.0f64, frac in 0.0..1.0f64) {
        let pc = PenaltyConfig::new(eps).unwrap();
        prop_assert_eq!(pc.chi_eps(frac / eps), 0.0);
        prop_assert!(pc.chi_eps(1.0 / eps + 1.0) > 0.0);
    }
}

#[test]
fn chi_vanishes_to_third_order() {
    assert_eq!(chi(0.0), 0.0);
    let s = 1e-2;
    assert!((chi(s) / s.powi(3) - 1.0 / 6.0).abs() < 1e-3);
}

#[test]
fn epsilon_outside_unit_interval_is_rejected() {
    for e in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(matches!(PenaltyConfig::new(e), Err(Error::InvalidParams(_))));
    }
    assert!(PenaltyConfig::new(1.0).is_ok());
}

#[test]
fn penalty_is_inert_away_from_the_boundary() {
    let m = models::static_well(1.0);
    let cg = conformal_geometry(&m, 1.7).unwrap();
    let w = straight_initial_curve(&m, &v(&[0.2, -0.1, 0.0]), &v(&[0.9, 0.5, 0.0]), 100).unwrap();
    let bare = conformal_energy(&m, 1.7, &w).unwrap();
    let pen = penalized_energy(&cg, &w, &PenaltyConfig::default()).unwrap();
    assert_eq!(bare.to_bits(), pen.to_bits());
}

#[test]
fn penalty_grows_near_the_boundary() {
    // Ψ_k = k² − 1 on the cylinder; k close to 1 puts every point near ∂U_k
    let m = models::einstein_cylinder();
    let k = 1.05;
    let psi = psi_k(&m, &v(&[1.5, 0.0, 0.0]), k).unwrap();
    assert!((psi - (k * k - 1.0)).abs() < 1e-12);
    let cg = conformal_geometry(&m, k).unwrap();
    let w = Curve::from_fn(0.0, 1.0, 50, |t| (v(&[1.5, t, 0.0]), v(&[0.0, 1.0, 0.0]))).unwrap();
    let pc = PenaltyConfig::new(0.1).unwrap();
    assert!(penalized_energy(&cg, &w, &pc).unwrap() > conformal_energy(&m, k, &w).unwrap());
}

#[test]
fn flat_oracle_recovers_the_closed_form() {
    let m = models::minkowski3();
    let k = 1.5;
    let cg = conformal_geometry(&m, k).unwrap();
    let p = v(&[0.0, 0.0, 0.0]);
    let gamma = ObserverWorldline::new(&m, &Event::new(&[1.0, 0.0, 0.0])).unwrap();
    // a bent start so the descent has work to do
    let init = Curve::from_fn(0.0, 1.0, 40, |t| {
        (v(&[t, 0.3 * (std::f64::consts::PI * t).sin(), 0.0]), v(&[1.0, 0.3 * std::f64::consts::PI * (std::f64::consts::PI * t).cos(), 0.0]))
    })
    .unwrap();
    let c = discrete_minimize(&cg, &p, &gamma, 40, &init, &PenaltyConfig::default(), &OracleOptions::default()).unwrap();
    assert!(c.converged);
    assert!(c.gradient_check < 1e-6);
    assert_eq!(c.constraint_penalty, 0.0);
    assert!(c.energy_history.windows(2).all(|e| e[1] < e[0]));
    assert!((c.t_estimate - 1.0 / (k * k - 1.0).sqrt()).abs() < 1e-6);
}

#[test]
fn oracle_rejects_coarse_grids_and_wrong_starts() {
    let m = models::minkowski3();
    let cg = conformal_geometry(&m, 1.5).unwrap();
    let gamma = ObserverWorldline::new(&m, &Event::new(&[1.0, 0.0, 0.0])).unwrap();
    let p = v(&[0.0, 0.0, 0.0]);
    let init = straight_initial_curve(&m, &p, &gamma.anchor, 20).unwrap();
    let opts = OracleOptions::default();
    let pc = PenaltyConfig::default();
    assert!(matches!(discrete_minimize(&cg, &p, &gamma, 3, &init, &pc, &opts), Err(Error::GridTooCoarse(3))));
    let other = v(&[0.1, 0.0, 0.0]);
    assert!(discrete_minimize(&cg, &other, &gamma, 20, &init, &pc, &opts).is_err());
}
