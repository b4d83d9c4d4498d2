//! Shooting from an event p to an observer worldline γ, and multi-start surveys.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::resample_curve;
use crate::dynamics::{
    conservation_report, initial_velocity, integrate_from_velocity, BrachistochroneSolution,
    IntegrationConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{conformal_geometry, Event, SpacetimeModel, Tangent, Vector};
use crate::jacobi::bfocal_points;
use crate::tolerances::{COMPARE_N, DEDUP_DISTANCE, TOL_BVP};
use crate::transform::{correspondence_report, curve_distance, deform_d, killing_flow};
use crate::variation::{assemble_hessian, BoundaryConditions};

/// The integral curve of Y through `anchor`.
#[derive(Clone, Debug)]
pub struct ObserverWorldline {
    pub anchor: Vector,
}

impl ObserverWorldline {
    pub fn new(model: &SpacetimeModel, anchor: &Event) -> Result<Self> {
        model.yy(&anchor.coords)?;
        Ok(ObserverWorldline { anchor: anchor.coords.clone() })
    }

    pub fn point(&self, model: &SpacetimeModel, s: f64) -> Result<Vector> {
        killing_flow(model, &self.anchor, s)
    }

    /// Flow parameter s* of the point of γ closest to x in the quotient by Y, and the
    /// g_R-frame components of the horizontal displacement from γ(s*) to x.
    pub fn quotient_residual(&self, model: &SpacetimeModel, x: &Vector) -> Result<(f64, Vector)> {
        let mut s = 0.0;
        let mut base = self.anchor.clone();
        for _ in 0..100 {
            let gr = model.riemannian_metric(&base)?;
            let y = model.killing(&base)?;
            let d = model.displacement(&base, x);
            let ds = y.dot(&(&gr * &d)) / y.dot(&(&gr * &y));
            s += ds;
            base = self.point(model, s)?;
            if ds.abs() <= 1e-14 * (1.0 + s.abs()) {
                break;
            }
        }
        let gr = model.riemannian_metric(&base)?;
        let d = model.displacement(&base, x);
        let frame = model.horizontal_frame(&base)?;
        Ok((s, Vector::from_iterator(frame.len(), frame.iter().map(|e| e.dot(&(&gr * &d))))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShootingConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Shots with T above this are rejected.
    pub t_max: f64,
    pub integration: IntegrationConfig,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig { tol: TOL_BVP, max_iter: 40, t_max: 1e3, integration: IntegrationConfig::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ShootingProblem {
    pub model: SpacetimeModel,
    pub p: Vector,
    pub gamma: ObserverWorldline,
    pub k: f64,
    pub config: ShootingConfig,
}

impl ShootingProblem {
    pub fn new(
        model: SpacetimeModel,
        p: &Event,
        gamma: ObserverWorldline,
        k: f64,
        config: ShootingConfig,
    ) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidParams(format!("k must be positive, got {k}")));
        }
        let q = model.yy(&p.coords)?;
        if !(k * k + q > 0.0) {
            return Err(Error::OutsideUk { coords: p.coords.iter().copied().collect(), margin: k * k + q });
        }
        let qa = model.yy(&gamma.anchor)?;
        if !(k * k + qa > 0.0) {
            return Err(Error::OutsideUk { coords: gamma.anchor.iter().copied().collect(), margin: k * k + qa });
        }
        let (_, r) = gamma.quotient_residual(&model, &p.coords)?;
        if r.norm() <= 1e-6 {
            return Err(Error::InvalidParams("p lies on the observer worldline".into()));
        }
        Ok(ShootingProblem { model, p: p.coords.clone(), gamma, k, config })
    }

    fn frame(&self) -> Result<Vec<Vector>> {
        self.model.horizontal_frame(&self.p)
    }

    fn direction(&self, frame: &[Vector], c: &Vector) -> Vector {
        frame.iter().zip(c.iter()).fold(Vector::zeros(self.model.m), |acc, (e, ci)| acc + e * *ci)
    }

    /// Frame coefficients of the g_R-unit horizontal part of a seed.
    fn coefficients(&self, frame: &[Vector], seed: &Vector) -> Result<Vector> {
        let u = crate::dynamics::horizontal_unit(&self.model, &self.p, seed)?;
        let gr = self.model.riemannian_metric(&self.p)?;
        let c = Vector::from_iterator(frame.len(), frame.iter().map(|e| e.dot(&(&gr * &u))));
        Ok(&c / c.norm())
    }

    fn shot(&self, frame: &[Vector], c: &Vector, tt: f64) -> Result<(BrachistochroneSolution, Vector, f64)> {
        if !(tt > 0.0 && tt <= self.config.t_max) {
            return Err(Error::ConstraintViolated(format!("travel time {tt} outside (0, {}]", self.config.t_max)));
        }
        let u = self.direction(frame, c);
        let v0 = initial_velocity(&self.model, self.k, &self.p, &u, tt)?;
        let sol = integrate_from_velocity(&self.model, self.k, tt, &self.p, &v0, &self.config.integration)?;
        let (s, r) = self.gamma.quotient_residual(&self.model, sol.sigma.points.last().unwrap())?;
        Ok((sol, r, s))
    }
}

/// v₀ on the constraint manifold from the g_R-normalised horizontal part of a seed.
pub fn sample_initial_velocity(
    model: &SpacetimeModel,
    p: &Event,
    k: f64,
    t_travel: f64,
    u_seed: &Tangent,
) -> Result<Tangent> {
    let v = initial_velocity(model, k, &p.coords, &u_seed.components, t_travel)?;
    Ok(Tangent { base: p.clone(), components: v })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShootDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    /// Flow parameter of the arrival point on γ.
    pub arrival_flow: f64,
}

/// Orthonormal basis of the tangent space of the unit sphere at c.
fn sphere_tangent_basis(c: &Vector) -> Vec<Vector> {
    let n = c.len();
    let mut out: Vec<Vector> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        e -= c * c[i];
        for f in &out {
            let d = f.dot(&e);
            e -= f * d;
        }
        let nn = e.norm();
        if nn > 1e-6 {
            out.push(e / nn);
        }
        if out.len() == n - 1 {
            break;
        }
    }
    out
}

fn on_sphere(c: &Vector, basis: &[Vector], a: &[f64]) -> Vector {
    let mut x = c.clone();
    for (b, ai) in basis.iter().zip(a) {
        x += b * *ai;
    }
    let n = x.norm();
    x / n
}

/// Solves the boundary value problem from a guess (seed direction, T).
pub fn shoot(problem: &ShootingProblem, u_guess: &Vector, t_guess: f64) -> Result<BrachistochroneSolution> {
    Ok(shoot_with_diagnostics(problem, u_guess, t_guess)?.0)
}

pub fn shoot_with_diagnostics(
    problem: &ShootingProblem,
    u_guess: &Vector,
    t_guess: f64,
) -> Result<(BrachistochroneSolution, ShootDiagnostics)> {
    let frame = problem.frame()?;
    let dim = frame.len();
    let mut c = problem.coefficients(&frame, u_guess)?;
    let mut tt = t_guess;
    let (mut sol, mut r, mut s_star) = problem.shot(&frame, &c, tt)?;
    for iter in 0..problem.config.max_iter {
        let rn = r.norm();
        if rn < problem.config.tol * (1.0 + tt) {
            return Ok((sol, ShootDiagnostics { iterations: iter, residual: rn, arrival_flow: s_star }));
        }
        // far from any solution after many damped steps: give up early
        if iter >= 20 && rn > 1e-3 * (1.0 + tt) {
            return Err(Error::NoConvergence { iterations: iter, residual: rn });
        }
        // Jacobian in the re-centred chart (sphere tangent coordinates, T)
        let basis = sphere_tangent_basis(&c);
        let mut jac = crate::geometry::Matrix::zeros(dim, dim);
        let ha = 1e-6;
        for (j, _) in basis.iter().enumerate() {
            let mut a = vec![0.0; basis.len()];
            a[j] = ha;
            let rp = problem.shot(&frame, &on_sphere(&c, &basis, &a), tt)?.1;
            a[j] = -ha;
            let rm = problem.shot(&frame, &on_sphere(&c, &basis, &a), tt)?.1;
            jac.set_column(j, &((rp - rm) / (2.0 * ha)));
        }
        let ht = 1e-6 * tt.max(1.0);
        let rp = problem.shot(&frame, &c, tt + ht)?.1;
        let rm = problem.shot(&frame, &c, tt - ht)?.1;
        jac.set_column(dim - 1, &((rp - rm) / (2.0 * ht)));

        let svd = jac.svd(true, true);
        let step = svd.solve(&(-&r), 1e-14 * svd.singular_values.max()).map_err(|_| {
            Error::NoConvergence { iterations: iter, residual: rn }
        })?;
        // keep steps moderate: at most 0.5 rad in direction and half of T
        let ang = step.rows(0, dim - 1).norm();
        let mut lam: f64 = 1.0;
        if ang > 0.5 {
            lam = lam.min(0.5 / ang);
        }
        if step[dim - 1].abs() > 0.5 * tt {
            lam = lam.min(0.5 * tt / step[dim - 1].abs());
        }
        let mut accepted = false;
        for _ in 0..20 {
            let a: Vec<f64> = (0..dim - 1).map(|i| lam * step[i]).collect();
            let c_new = on_sphere(&c, &basis, &a);
            let t_new = tt + lam * step[dim - 1];
            if let Ok((s2, r2, ss2)) = problem.shot(&frame, &c_new, t_new) {
                if r2.norm() < rn {
                    c = c_new;
                    tt = t_new;
                    sol = s2;
                    r = r2;
                    s_star = ss2;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: iter, residual: rn });
        }
    }
    let rn = r.norm();
    if rn < problem.config.tol * (1.0 + tt) {
        return Ok((sol, ShootDiagnostics { iterations: problem.config.max_iter, residual: rn, arrival_flow: s_star }));
    }
    Err(Error::NoConvergence { iterations: problem.config.max_iter, residual: rn })
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SolutionResiduals {
    pub conservation_y: f64,
    pub conservation_speed: f64,
    pub ode: f64,
    pub geodesic: f64,
    pub energy_vs_half_t2: f64,
    pub roundtrip: f64,
    pub endpoint: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurveyEntry {
    #[serde(skip)]
    pub solution: BrachistochroneSolution,
    #[serde(rename = "T")]
    pub travel_time: f64,
    pub index_morse: Option<usize>,
    pub index_geometric: Option<usize>,
    pub residuals: SolutionResiduals,
    pub curve_ref: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityStatus {
    /// Odd count, as predicted for a complete nondegenerate count.
    Odd,
    /// Even count, but converged shots beyond the bracket show the count is truncated.
    EvenTruncated,
    /// Even count with no sign of truncation.
    EvenInconsistent,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurveyResult {
    pub seed: u64,
    pub n_starts: usize,
    pub t_bracket: (f64, f64),
    pub dedup_threshold: f64,
    pub n_failed: usize,
    pub n_out_of_bracket: usize,
    pub count: usize,
    pub parity: usize,
    pub parity_status: ParityStatus,
    pub solutions: Vec<SurveyEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurveyOptions {
    pub n_starts: usize,
    pub t_bracket: (f64, f64),
    pub seed: u64,
    pub dedup_threshold: f64,
    /// Elements for the Hessian used to count the Morse index.
    pub n_basis: usize,
}

impl SurveyOptions {
    pub fn new(n_starts: usize, t_bracket: (f64, f64), seed: u64) -> Self {
        SurveyOptions { n_starts, t_bracket, seed, dedup_threshold: DEDUP_DISTANCE, n_basis: 50 }
    }
}

/// Morse and geometric index of a critical curve, counted on O(D(σ)).
pub fn solution_indices(model: &SpacetimeModel, sol: &BrachistochroneSolution, n_basis: usize) -> (Option<usize>, Option<usize>) {
    let morse = (|| -> Result<Option<usize>> {
        let cg = conformal_geometry(model, sol.k)?;
        let w = deform_d(model, sol)?.reversed();
        let h = assemble_hessian(&cg, &w, BoundaryConditions::Full, n_basis)?;
        Ok(if h.n_zero == 0 { Some(h.n_negative) } else { None })
    })();
    let geometric = bfocal_points(model, sol).map(|r| r.report.geometric_index);
    let morse = match morse {
        Ok(v) => v,
        Err(e) => {
            log::warn!("morse index unavailable: {e}");
            None
        }
    };
    let geometric = match geometric {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("geometric index unavailable: {e}");
            None
        }
    };
    (morse, geometric)
}

pub fn solution_residuals(problem: &ShootingProblem, sol: &BrachistochroneSolution) -> Result<SolutionResiduals> {
    let cons = conservation_report(&problem.model, sol)?;
    let corr = correspondence_report(&problem.model, sol)?;
    let (_, r) = problem.gamma.quotient_residual(&problem.model, sol.sigma.points.last().unwrap())?;
    Ok(SolutionResiduals {
        conservation_y: cons.max_y,
        conservation_speed: cons.max_speed,
        ode: sol.residual_ode,
        geodesic: corr.geodesic_residual,
        energy_vs_half_t2: corr.energy_vs_half_t2,
        roundtrip: corr.roundtrip_error,
        endpoint: r.norm(),
    })
}

/// Deterministic multi-start survey. Starts are drawn sequentially from the seed and shot in
/// parallel; results are sorted by T and deduplicated by sup g_R distance.
pub fn multistart_survey(problem: &ShootingProblem, opts: &SurveyOptions) -> Result<SurveyResult> {
    if opts.n_starts == 0 {
        return Err(Error::InvalidParams("n_starts must be at least 1".into()));
    }
    let (t_lo, t_hi) = opts.t_bracket;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidParams(format!("bad T bracket ({t_lo}, {t_hi})")));
    }
    let frame = problem.frame()?;
    let dim = frame.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.n_starts);
    while starts.len() < opts.n_starts {
        let c = Vector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-1.0..1.0)));
        let n = c.norm();
        if n < 1e-3 || n > 1.0 {
            continue;
        }
        let tt: f64 = rng.gen_range(t_lo..t_hi);
        starts.push((problem.direction(&frame, &(c / n)), tt));
    }

    let outcomes: Vec<Result<BrachistochroneSolution>> =
        starts.par_iter().map(|(u, tt)| shoot(problem, u, *tt)).collect();

    let mut n_failed = 0;
    let mut n_out = 0;
    let mut found: Vec<BrachistochroneSolution> = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(sol) if sol.travel_time >= t_lo && sol.travel_time <= t_hi => found.push(sol),
            Ok(sol) => {
                log::info!("start {i}: converged to T = {} outside the bracket, discarded", sol.travel_time);
                n_out += 1;
            }
            Err(e) => {
                log::info!("start {i}: {e}");
                n_failed += 1;
            }
        }
    }
    found.sort_by(|a, b| a.travel_time.partial_cmp(&b.travel_time).unwrap());
    let mut unique: Vec<(BrachistochroneSolution, crate::curves::Curve)> = Vec::new();
    for sol in found {
        let cs = resample_curve(&sol.sigma, COMPARE_N)?;
        let mut dup = false;
        for (_, cu) in &unique {
            if curve_distance(&problem.model, &cs, cu)? <= opts.dedup_threshold {
                dup = true;
                break;
            }
        }
        if !dup {
            unique.push((sol, cs));
        }
    }

    let entries: Vec<SurveyEntry> = unique
        .into_par_iter()
        .enumerate()
        .map(|(i, (sol, _))| -> Result<SurveyEntry> {
            let (morse, geometric) = solution_indices(&problem.model, &sol, opts.n_basis);
            let residuals = solution_residuals(problem, &sol)?;
            Ok(SurveyEntry {
                travel_time: sol.travel_time,
                solution: sol,
                index_morse: morse,
                index_geometric: geometric,
                residuals,
                curve_ref: format!("solution_{i:03}.csv"),
            })
        })
        .collect::<Result<_>>()?;

    let count = entries.len();
    let parity_status = if count % 2 == 1 {
        ParityStatus::Odd
    } else if n_out > 0 {
        ParityStatus::EvenTruncated
    } else {
        ParityStatus::EvenInconsistent
    };
    Ok(SurveyResult {
        seed: opts.seed,
        n_starts: opts.n_starts,
        t_bracket: opts.t_bracket,
        dedup_threshold: opts.dedup_threshold,
        n_failed,
        n_out_of_bracket: n_out,
        count,
        parity: count % 2,
        parity_status,
        solutions: entries,
    })
}
