//! Acceptance battery. Runs every criterion in sequence, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brachisto::bvp::{
    multistart_survey, shoot, ObserverWorldline, ParityStatus, ShootingConfig,
    ShootingProblem, SurveyOptions,
};
use brachisto::curves::{resample_curve, Curve, FieldAlongCurve};
use brachisto::dynamics::{
    conservation_report, integrate_brachistochrone, BrachistochroneSolution, IntegrationConfig,
};
use brachisto::geometry::{conformal_geometry, ConformalGeometry, Event, SpacetimeModel, Tangent, Vector};
use brachisto::jacobi::{bfocal_points, bfocal_scan, focal_points, jacobi_residual, map_l_with_host};
use brachisto::models;
use brachisto::oracle::{
    discrete_minimize, fd_bjacobi_field, fd_constrained_variation, constrained_member, InitialPerturbation,
    OracleOptions, PenaltyConfig,
};
use brachisto::transform::{correspondence_report, curve_distance, dd_differential, deform_d};
use brachisto::variation::{
    assemble_hessian, hessian_e_eval, hessian_f_eval, restricted_index_report, travel_time_differential,
    BoundaryConditions,
};

type Outcome = Result<(bool, String), String>;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

struct Launch {
    model: SpacetimeModel,
    k: f64,
    p: Vec<f64>,
    u: Vec<f64>,
    tt: f64,
}

/// 20 seeded launches per model, kept well inside each chart and U_k.
fn random_launches() -> Vec<Launch> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let specs: Vec<(SpacetimeModel, f64)> = vec![
        (models::minkowski3(), 1.5),
        (models::minkowski4(), 1.5),
        (models::einstein_cylinder(), 2f64.sqrt()),
        (models::static_well(1.0), 2.5),
        (models::rotating_frame(0.3), 1.5),
    ];
    let mut out = Vec::new();
    for (model, k) in specs {
        for _ in 0..20 {
            let m = model.m;
            let mut p: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.4..0.4)).collect();
            if model.name == "einstein_cylinder" {
                p[0] = rng.gen_range(1.2..1.9);
                p[1] = rng.gen_range(-PI..PI);
            }
            let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tt = rng.gen_range(0.3..0.6);
            out.push(Launch { model: model.clone(), k, p, u, tt });
        }
    }
    out
}

fn launch(l: &Launch, cfg: &IntegrationConfig) -> brachisto::Result<BrachistochroneSolution> {
    let p = Event::new(&l.p);
    let u = Tangent::new(&p, &l.u);
    integrate_brachistochrone(&l.model, l.k, &p, &u, l.tt, cfg)
}

fn conservation() -> Outcome {
    let coarse = IntegrationConfig { rtol: 1e-10, atol: 1e-10, ..Default::default() };
    let tight = IntegrationConfig { rtol: 1e-11, atol: 1e-11, ..Default::default() };
    let mut ok = true;
    let mut detail = Vec::new();
    let launches = random_launches();
    for chunk in launches.chunks(20) {
        let (mut c_max, mut t_max) = (0.0f64, 0.0f64);
        for l in chunk {
            let a = launch(l, &coarse).map_err(|e| e.to_string())?;
            let b = launch(l, &tight).map_err(|e| e.to_string())?;
            let ra = conservation_report(&l.model, &a).map_err(|e| e.to_string())?;
            let rb = conservation_report(&l.model, &b).map_err(|e| e.to_string())?;
            c_max = c_max.max(ra.max_y.max(ra.max_speed));
            t_max = t_max.max(rb.max_y.max(rb.max_speed));
        }
        // residuals already at the roundoff floor cannot shrink further
        let shrinks = t_max <= c_max / 5.0 || t_max < 1e-13;
        ok &= c_max < 1e-8 && shrinks;
        detail.push(format!("{} {:.1e}->{:.1e}", chunk[0].model.name, c_max, t_max));
    }
    Ok((ok, detail.join(", ")))
}

fn first_variation() -> Outcome {
    let cfg = IntegrationConfig::default();
    let (mut geo, mut en, mut rt) = (0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    for l in random_launches() {
        let sol = launch(&l, &cfg).map_err(|e| e.to_string())?;
        let r = correspondence_report(&l.model, &sol).map_err(|e| e.to_string())?;
        let scale = 1.0 + l.tt * l.tt;
        ok &= r.geodesic_residual < 1e-6 && r.energy_vs_half_t2 < 1e-8 * scale && r.roundtrip_error < 1e-7;
        geo = geo.max(r.geodesic_residual);
        en = en.max(r.energy_vs_half_t2 / scale);
        rt = rt.max(r.roundtrip_error);
    }
    Ok((ok, format!("100 launches: geodesic {geo:.1e}, energy {en:.1e}, round trip {rt:.1e}")))
}

fn minkowski_problem(k: f64) -> brachisto::Result<ShootingProblem> {
    let model = models::minkowski3();
    let gamma = ObserverWorldline::new(&model, &Event::new(&[1.0, 0.0, 0.0]))?;
    ShootingProblem::new(model, &Event::new(&[0.0, 0.0, 0.0]), gamma, k, ShootingConfig::default())
}

fn cylinder_problem() -> brachisto::Result<ShootingProblem> {
    let model = models::einstein_cylinder();
    let gamma = ObserverWorldline::new(&model, &Event::new(&[PI / 2.0, PI / 2.0, 0.0]))?;
    ShootingProblem::new(model, &Event::new(&[PI / 2.0, 0.0, 0.0]), gamma, 2f64.sqrt(), ShootingConfig::default())
}

fn flat_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for k in [2f64.sqrt(), 2.0, 3.0] {
        let pr = minkowski_problem(k).map_err(|e| e.to_string())?;
        let sol = shoot(&pr, &v(&[0.3, 1.0, 0.0]), 2.0).map_err(|e| e.to_string())?;
        worst = worst.max((sol.travel_time - 1.0 / (k * k - 1.0).sqrt()).abs());
    }
    Ok((worst < 1e-8, format!("max |T - 1/sqrt(k^2-1)| = {worst:.1e}")))
}

/// Critical brachistochrones from p = (0.2, −0.1, 0) to the worldline through (0.9, 0.5, 0).
fn variation_fixtures() -> brachisto::Result<Vec<(ConformalGeometry, BrachistochroneSolution, Curve)>> {
    let mut out = Vec::new();
    for (model, k) in [
        (models::minkowski3(), 1.6),
        (models::static_well(1.0), 1.7),
        (models::rotating_frame(0.3), 1.5),
    ] {
        let gamma = ObserverWorldline::new(&model, &Event::new(&[0.9, 0.5, 0.0]))?;
        let pr = ShootingProblem::new(model.clone(), &Event::new(&[0.2, -0.1, 0.0]), gamma, k, ShootingConfig::default())?;
        let sol = shoot(&pr, &v(&[0.7, 0.6, 0.0]), 1.0)?;
        let cg = conformal_geometry(&model, k)?;
        let w = deform_d(&model, &sol)?;
        out.push((cg, sol, w));
    }
    Ok(out)
}

/// X = (0.3 sin jπt, −0.2 t sin jπt, 0) plus c·t·Y, admissible on any horizontal curve from p to γ.
fn mode_field(host: &Curve, j: usize, c: f64) -> FieldAlongCurve {
    let f = j as f64 * PI;
    FieldAlongCurve::from_fn(host, |_, t| {
        let s = (f * t).sin();
        let ds = f * (f * t).cos();
        (v(&[0.3 * s, -0.2 * s * t, c * t]), v(&[0.3 * ds, -0.2 * (ds * t + s), c]))
    })
}

fn bent_base(cg: &ConformalGeometry, w: &Curve) -> brachisto::Result<Curve> {
    let bend = FieldAlongCurve::from_fn(w, |_, t| {
        let s = (PI * t).sin();
        let ds = PI * (PI * t).cos();
        (v(&[-0.1 * s, 0.15 * s, 0.0]), v(&[-0.1 * ds, 0.15 * ds, 0.0]))
    });
    let (bsol, _) = constrained_member(cg, w, &bend, 1.0)?;
    deform_d(&cg.model, &bsol)
}

const TEN_FIELDS: [(usize, usize); 10] = [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (1, 4), (2, 1), (2, 2), (2, 3)];

fn travel_time_derivative() -> Outcome {
    let fx = variation_fixtures().map_err(|e| e.to_string())?;
    let (mut rel, mut crit) = (0.0f64, 0.0f64);
    for (mi, j) in TEN_FIELDS {
        let (cg, _, w) = &fx[mi];
        let wb = bent_base(cg, w).map_err(|e| e.to_string())?;
        let h = 1e-4;
        let (s0, zeta, tv) = fd_constrained_variation(cg, &wb, &mode_field(&wb, j, 0.0), h).map_err(|e| e.to_string())?;
        let fd = (tv[2] - tv[0]) / (2.0 * h);
        let an = travel_time_differential(&cg.model, &s0, &zeta).map_err(|e| e.to_string())?;
        rel = rel.max((fd - an).abs() / fd.abs());
        let (c0, zc, _) = fd_constrained_variation(cg, w, &mode_field(w, j, 0.0), h).map_err(|e| e.to_string())?;
        let at_crit = travel_time_differential(&cg.model, &c0, &zc).map_err(|e| e.to_string())?;
        crit = crit.max(at_crit.abs());
    }
    Ok((rel < 1e-4 && crit < 1e-7, format!("10 fields: max rel err {rel:.1e}, max |dT| at critical {crit:.1e}")))
}

fn hessian_of_f() -> Outcome {
    let fx = variation_fixtures().map_err(|e| e.to_string())?;
    let mut rel = 0.0f64;
    for (mi, j) in TEN_FIELDS {
        let (cg, _, w) = &fx[mi];
        let h = 1e-3;
        let (c0, zeta, tv) = fd_constrained_variation(cg, w, &mode_field(w, j, 0.0), h).map_err(|e| e.to_string())?;
        let f = |t: f64| -0.5 * t * t;
        let fd2 = (f(tv[2]) - 2.0 * f(tv[1]) + f(tv[0])) / (h * h);
        let hf = hessian_f_eval(&cg.model, &c0, &zeta, &zeta).map_err(|e| e.to_string())?;
        rel = rel.max((hf - fd2).abs() / fd2.abs());
    }
    Ok((rel < 1e-3, format!("10 fields: max rel err {rel:.1e}")))
}

fn second_variation() -> Outcome {
    let fx = variation_fixtures().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for (cg, _, w) in &fx {
        for _ in 0..10 {
            let coef: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = rng.gen_range(-0.5..0.5);
            let x = FieldAlongCurve::from_fn(w, |_, t| {
                let (mut val, mut der) = (v(&[0.0, 0.0, c * t]), v(&[0.0, 0.0, c]));
                for j in 0..3 {
                    let f = (j + 1) as f64 * PI;
                    let (s, ds) = ((f * t).sin(), f * (f * t).cos());
                    val[0] += 0.2 * coef[2 * j] * s;
                    val[1] += 0.2 * coef[2 * j + 1] * s;
                    der[0] += 0.2 * coef[2 * j] * ds;
                    der[1] += 0.2 * coef[2 * j + 1] * ds;
                }
                (val, der)
            });
            let (c0, zeta, _) = fd_constrained_variation(cg, w, &x, 1e-4).map_err(|e| e.to_string())?;
            let hf = hessian_f_eval(&cg.model, &c0, &zeta, &zeta).map_err(|e| e.to_string())?;
            let dz = dd_differential(&cg.model, &c0, &zeta).map_err(|e| e.to_string())?;
            let wc = deform_d(&cg.model, &c0).map_err(|e| e.to_string())?;
            let he = hessian_e_eval(cg, &wc.reversed(), &dz.reversed(), &dz.reversed()).map_err(|e| e.to_string())?;
            worst = worst.max((hf + he).abs() / (hf.abs() + he.abs()));
        }
    }
    Ok((worst < 1e-5, format!("30 fields: max |H_F + H_E| / scale = {worst:.1e}")))
}

/// Short, long and double-wrap arcs on the cylinder (arc lengths π/2, 3π/2, 5π/2).
fn cylinder_arcs() -> brachisto::Result<Vec<BrachistochroneSolution>> {
    let pr = cylinder_problem()?;
    [([0.1, 1.0, 0.0], 1.0), ([0.1, -1.0, 0.0], 4.0), ([0.0, 1.0, 0.0], 8.0)]
        .iter()
        .map(|(u, t)| shoot(&pr, &v(u), *t))
        .collect()
}

fn morse_index_pair() -> Outcome {
    let model = models::einstein_cylinder();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut cases: Vec<(SpacetimeModel, BrachistochroneSolution, usize)> = Vec::new();
    let pr = minkowski_problem(2f64.sqrt()).map_err(|e| e.to_string())?;
    cases.push((pr.model.clone(), shoot(&pr, &v(&[0.3, 1.0, 0.0]), 2.0).map_err(|e| e.to_string())?, 0));
    for (sol, expected) in cylinder_arcs().map_err(|e| e.to_string())?.into_iter().zip([0, 1, 2]) {
        cases.push((model.clone(), sol, expected));
    }
    for (m, sol, expected) in &cases {
        let cg = conformal_geometry(m, sol.k).map_err(|e| e.to_string())?;
        let w = deform_d(m, sol).map_err(|e| e.to_string())?.reversed();
        let h50 = assemble_hessian(&cg, &w, BoundaryConditions::Full, 50).map_err(|e| e.to_string())?;
        let h100 = assemble_hessian(&cg, &w, BoundaryConditions::Full, 100).map_err(|e| e.to_string())?;
        let geo = focal_points(&cg, &w).map_err(|e| e.to_string())?.geometric_index;
        ok &= h50.n_zero == 0
            && h100.n_zero == 0
            && h50.n_negative == *expected
            && h100.n_negative == *expected
            && geo == *expected;
        detail.push(format!(
            "{} T={:.4}: morse {}/{} geometric {}",
            m.name, sol.travel_time, h50.n_negative, h100.n_negative, geo
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn restricted_indices() -> Outcome {
    let model = models::einstein_cylinder();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut cases: Vec<(SpacetimeModel, BrachistochroneSolution)> = Vec::new();
    let pr = minkowski_problem(2f64.sqrt()).map_err(|e| e.to_string())?;
    cases.push((pr.model.clone(), shoot(&pr, &v(&[0.3, 1.0, 0.0]), 2.0).map_err(|e| e.to_string())?));
    for sol in cylinder_arcs().map_err(|e| e.to_string())? {
        cases.push((model.clone(), sol));
    }
    for (m, sol) in &cases {
        let cg = conformal_geometry(m, sol.k).map_err(|e| e.to_string())?;
        let w = deform_d(m, sol).map_err(|e| e.to_string())?.reversed();
        let t = restricted_index_report(&cg, &w, 50).map_err(|e| e.to_string())?;
        ok &= t.full == t.horizontal && t.horizontal == t.perpendicular;
        detail.push(format!("({},{},{})", t.full, t.horizontal, t.perpendicular));
    }
    Ok((ok, format!("index triples {}", detail.join(" "))))
}

fn jacobi_correspondence() -> Outcome {
    // map_L of finite-difference b-Jacobi fields
    let model = models::static_well(1.0);
    let k = 1.7;
    let p = Event::new(&[0.3, -0.2, 0.0]);
    let u = Tangent::new(&p, &[0.4f64.cos(), 0.4f64.sin(), 0.0]);
    let cfg = IntegrationConfig { rtol: 1e-12, atol: 1e-12, n_grid: 400 };
    let sol = integrate_brachistochrone(&model, k, &p, &u, 1.2, &cfg).map_err(|e| e.to_string())?;
    let cg = conformal_geometry(&model, k).map_err(|e| e.to_string())?;
    let mut res = 0.0f64;
    for pert in [
        InitialPerturbation { du: v(&[-0.4f64.sin(), 0.4f64.cos(), 0.0]), dt: 0.0 },
        InitialPerturbation { du: v(&[0.0, 0.0, 0.0]), dt: 1.0 },
        InitialPerturbation { du: v(&[0.3, -0.5, 0.0]), dt: 0.2 },
    ] {
        let zeta = fd_bjacobi_field(&model, &sol, &pert, 1e-5).map_err(|e| e.to_string())?;
        let (host, lz) = map_l_with_host(&model, &sol, 0.0, &zeta).map_err(|e| e.to_string())?;
        res = res.max(jacobi_residual(&cg, &host, &lz).map_err(|e| e.to_string())?);
    }

    // focal parameters: Riemannian side pulled back vs. direct b-side scan
    let cyl = models::einstein_cylinder();
    let mut dt_max = 0.0f64;
    let mut ok = res < 1e-3;
    let mut counts = Vec::new();
    for sol in cylinder_arcs().map_err(|e| e.to_string())?.into_iter().skip(1) {
        let rep = bfocal_points(&cyl, &sol).map_err(|e| e.to_string())?;
        let scan = bfocal_scan(&cyl, &sol, 50, 200).map_err(|e| e.to_string())?;
        ok &= rep.confirmed && scan.len() == rep.report.focal_list.len();
        for (a, b) in rep.report.focal_list.iter().zip(&scan) {
            dt_max = dt_max.max((a.t - b.t).abs());
            ok &= a.multiplicity == b.multiplicity;
        }
        counts.push(format!("{}/{}", rep.report.focal_list.len(), scan.len()));
    }
    ok &= dt_max < 1e-4;
    Ok((
        ok,
        format!("map_L Jacobi residual {res:.1e}; focal counts {}; max |dt| {dt_max:.1e}", counts.join(" ")),
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (pr, guess) in [
        (minkowski_problem(2f64.sqrt()).map_err(|e| e.to_string())?, 1.0),
        (cylinder_problem().map_err(|e| e.to_string())?, PI / 2.0),
    ] {
        let model = &pr.model;
        let d = model.displacement(&pr.p, &pr.gamma.anchor);
        let sol = shoot(&pr, &d, guess).map_err(|e| e.to_string())?;
        let cg = conformal_geometry(model, pr.k).map_err(|e| e.to_string())?;
        let p0 = pr.p.clone();
        // a bent start so the minimiser has work to do
        let init = Curve::from_fn(0.0, 1.0, 200, |t| {
            let mut x = &p0 + &d * t;
            x[0] += 0.2 * (PI * t).sin();
            (x, d.clone())
        })
        .map_err(|e| e.to_string())?;
        let c = discrete_minimize(&cg, &pr.p, &pr.gamma, 200, &init, &PenaltyConfig::default(), &OracleOptions::default())
            .map_err(|e| e.to_string())?;
        let w = resample_curve(&deform_d(model, &sol).map_err(|e| e.to_string())?, 200).map_err(|e| e.to_string())?;
        let dist = curve_distance(model, &w, &c.polyline).map_err(|e| e.to_string())?;
        let dt = (c.t_estimate - sol.travel_time).abs();
        ok &= dt < 1e-3 && dist < 1e-3;
        detail.push(format!("{}: |dT| {dt:.1e}, distance {dist:.1e}", model.name));
    }
    Ok((ok, detail.join("; ")))
}

fn parity() -> Outcome {
    let pr = minkowski_problem(2f64.sqrt()).map_err(|e| e.to_string())?;
    let flat = multistart_survey(&pr, &SurveyOptions::new(16, (0.2, 5.0), 7)).map_err(|e| e.to_string())?;
    let pr = cylinder_problem().map_err(|e| e.to_string())?;
    // (0.2, 3π) covers one full wrap: arcs of length π/2, 3π/2 and 5π/2
    let j = 1;
    let cyl = multistart_survey(&pr, &SurveyOptions::new(64, (0.2, 3.0 * PI), 7)).map_err(|e| e.to_string())?;
    let count_ok = cyl.count == 2 * j + 1 || cyl.count == 2 * j + 2;
    let flag_ok = matches!(cyl.parity_status, ParityStatus::Odd | ParityStatus::EvenTruncated);
    let ok = flat.count == 1 && flat.parity_status == ParityStatus::Odd && count_ok && flag_ok;
    let ts: Vec<String> = cyl.solutions.iter().map(|s| format!("{:.4}π", s.travel_time / PI)).collect();
    Ok((
        ok,
        format!(
            "minkowski {} ({:?}); cylinder {} ({:?}) at T = {}",
            flat.count,
            flat.parity_status,
            cyl.count,
            cyl.parity_status,
            ts.join(", ")
        ),
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("cylinder.json");
    std::fs::write(
        &cfg,
        r#"{"model":{"name":"einstein_cylinder"},"k":1.4142135623730951,
            "p":[1.5707963267948966,0,0],"gamma_anchor":[1.5707963267948966,1.5707963267948966,0],
            "survey":{"n_starts":32,"seed":1,"T_bracket":[0.2,9.42477796076938]}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_brachisto"))
            .args(["survey", "--seed", "7", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Ok((false, format!("survey run {run} exited with {status}")));
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let n = outputs[0].len();
    Ok((outputs[0] == outputs[1], format!("{n} output files compared byte for byte")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("conservation laws and convergence", conservation),
        ("brachistochrones map to horizontal geodesics", first_variation),
        ("flat closed-form travel time", flat_closed_form),
        ("travel-time derivative identity", travel_time_derivative),
        ("Hessian of F against finite differences", hessian_of_f),
        ("second variation identity", second_variation),
        ("Morse index equals geometric index", morse_index_pair),
        ("restricted index triples agree", restricted_indices),
        ("Jacobi field correspondence and focal agreement", jacobi_correspondence),
        ("discrete minimiser agrees with shooting", oracle_equivalence),
        ("solution count parity", parity),
        ("survey output is deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{:2}] {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

