//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line with
//! its wall time and the pinned tolerances, then asserts.

use std::time::{Duration, Instant};

use expander_lab::dynamics::*;
use expander_lab::exponents::*;
use expander_lab::profile::{shoot_profile, tail_exponent};
use expander_lab::semigroup::*;
use expander_lab::spectral::*;
use expander_lab::RadialGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let within = elapsed <= limit;
    let status = if ok && within { "PASS" } else { "FAIL" };
    println!(
        "[{status}] criterion {id}: {name} — {detail}; {:.2}s (limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its time limit");
}

#[test]
fn criterion_1_exponents() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut ok = (3..=10).all(|d| derived_exponents(d, 2.0).unwrap().p_jl == CriticalPower::Infinite);
    for d in 11..=20 {
        let df = f64::from(d);
        let formula = 1.0 + 4.0 / (df - 4.0 - 2.0 * (df - 1.0).sqrt());
        let got = derived_exponents(d, 2.0).unwrap().p_jl.finite().unwrap();
        worst = worst.max(((got - formula) / formula).abs());
    }
    ok &= worst <= 1e-12;
    report(
        1,
        "exponent suite",
        ok,
        start.elapsed(),
        Duration::from_secs(1),
        format!("p_jl infinite for d=3..10, max rel dev {worst:.1e} (tol 1e-12) for d=11..20"),
    );
}

#[test]
fn criterion_2_profiles() {
    let start = Instant::now();
    let grid = RadialGrid::default();
    let doubled = grid.doubled().unwrap();
    let (mut worst_defect, mut worst_tail, mut worst_ell) = (0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    for (d, p) in [(5, 3.0), (3, 2.0), (11, 7.0)] {
        let params = derived_exponents(d, p).unwrap();
        for alpha in [0.5, 1.0, 2.0] {
            let a = shoot_profile(alpha, &params, &grid).unwrap();
            let b = shoot_profile(alpha, &params, &doubled).unwrap();
            let defect = a.residual_max / (1.0 + a.max_abs_u);
            let target = -2.0 / (p - 1.0);
            let tail = tail_exponent(&a).map_or(f64::INFINITY, |s| ((s - target) / target).abs());
            let unc = a.ell_uncertainty.max(b.ell_uncertainty);
            let ell = (a.ell - b.ell).abs() / unc.max(f64::MIN_POSITIVE);
            worst_defect = worst_defect.max(defect);
            worst_tail = worst_tail.max(tail);
            worst_ell = worst_ell.max(ell);
            ok &= defect <= 1e-6 && tail <= 0.02 && ell <= 1.0;
        }
    }
    report(
        2,
        "profile suite",
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        format!(
            "defect/(1+max|u|) {worst_defect:.1e} (tol 1e-6), tail exponent rel dev {worst_tail:.2e} (tol 0.02), \
             |Δℓ| under rho_max doubling {worst_ell:.2} x uncertainty (tol 1)"
        ),
    );
}

#[test]
fn criterion_3_spectral_cross_validation() {
    let cases: [(u32, f64, f64); 12] = [
        (5, 3.0, 0.5),
        (5, 3.0, 1.0),
        (5, 3.0, 2.0),
        (5, 3.0, 10.0),
        (3, 2.0, 0.3),
        (3, 2.0, 0.5),
        (3, 2.0, 1.0),
        (3, 2.0, 2.0),
        (11, 7.0, 0.5),
        (11, 7.0, 1.0),
        (11, 7.0, 2.0),
        (4, 2.0, 1.5),
    ];
    let start = Instant::now();
    let grid = RadialGrid::default();
    let mut worst = 0.0f64;
    let mut ok = true;
    let mut indexing = true;
    for (d, p, alpha) in cases {
        let params = derived_exponents(d, p).unwrap();
        let shoot = top_eigenpair(alpha, &params, &grid).unwrap();
        let matrix = matrix_top_eigenvalue(alpha, &params, &grid).unwrap();
        let diff = (shoot.lambda - matrix).abs();
        let tol = (1e-4 * matrix.abs()).max(1e-6);
        worst = worst.max(diff / tol);
        ok &= diff <= tol;
        indexing &= shoot.zero_count == 0;
        let spec = positive_spectrum(alpha, &params, &grid).unwrap();
        indexing &= spec.len() == neutral_zero_count(alpha, &params, &grid).unwrap();
        indexing &= spec.iter().enumerate().all(|(k, e)| e.zero_count == k);
    }
    report(
        3,
        "spectral cross-validation",
        ok && indexing,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "12 cases, max |shoot - matrix| = {worst:.2e} x tol (tol 1e-4 rel, 1e-6 abs); Sturm indexing {}",
            if indexing { "exact" } else { "MISMATCH" }
        ),
    );
}

#[test]
fn criterion_4_alpha_star() {
    let start = Instant::now();
    let grid = RadialGrid::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, p) in [(5, 3.0), (3, 2.0)] {
        let params = derived_exponents(d, p).unwrap();
        let res = find_alpha_star(&params, (0.1, 50.0), 1e-6, &grid).unwrap();
        match res.alpha_star {
            Some(star) => {
                let width = res.bracket.1 - res.bracket.0;
                let lam = top_eigenvalue(star, &params, grid.rho_max()).unwrap();
                ok &= width <= 1e-6 && lam.abs() <= 1e-4;
                parts.push(format!("({d},{p}) alpha*={star:.7} width {width:.1e} lambda_top {lam:.1e}"));
            }
            None => {
                ok = false;
                parts.push(format!("({d},{p}) no alpha*"));
            }
        }
    }
    let beyond = derived_exponents(11, 7.0).unwrap();
    let res = find_alpha_star(&beyond, (0.1, 50.0), 1e-6, &grid).unwrap();
    ok &= res.alpha_star.is_none();
    parts.push(format!("(11,7) transition found: {}", res.alpha_star.is_some()));
    report(
        4,
        "alpha* dichotomy",
        ok,
        start.elapsed(),
        Duration::from_secs(60),
        format!("{} (tol: width 1e-6, |lambda_top| 1e-4)", parts.join("; ")),
    );
}

#[test]
fn criterion_5_semigroup() {
    let start = Instant::now();
    let params = derived_exponents(5, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut law = 0.0f64;
    for _ in 0..50 {
        let g = GaussianDatum::new(rng.gen_range(0.1..3.0), rng.gen_range(0.05..20.0)).unwrap();
        let (t1, t2) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let two = apply_s0_gaussian(t1, apply_s0_gaussian(t2, g, &params).unwrap(), &params).unwrap();
        let one = apply_s0_gaussian(t1 + t2, g, &params).unwrap();
        law = law
            .max(((two.variance - one.variance) / one.variance).abs())
            .max(((two.amplitude - one.amplitude) / one.amplitude).abs());
    }

    let wide = GaussianDatum::new(1.0, 1e12).unwrap();
    let taus: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let mut growth = 0.0f64;
    let mut signs = true;
    for eta in [1.0, 2.0, params.q_c, 2.0 * params.q_c] {
        let slope = growth_exponent_fit(wide, eta, &taus, &params).unwrap().slope;
        let target = params.scaling_rate(eta);
        growth = growth.max((slope - target).abs());
        signs &= if eta < params.q_c { slope < 0.0 } else if eta > params.q_c { slope > 0.0 } else { true };
    }

    let grid = RadialGrid::uniform(10.0, 0.025).unwrap();
    let g = GaussianDatum::new(1.0, 1.0).unwrap();
    let f = g.sample(&grid);
    let mut quad = 0.0f64;
    for tau in [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0] {
        let out = apply_s0(tau, &f, &params).unwrap();
        let exact = apply_s0_gaussian(tau, g, &params).unwrap();
        for (r, v) in grid.nodes().iter().zip(&out.values) {
            quad = quad.max((v - exact.eval(*r)).abs() / exact.amplitude);
        }
    }
    report(
        5,
        "semigroup suite",
        law <= 1e-12 && growth <= 1e-3 && signs && quad <= 1e-6,
        start.elapsed(),
        Duration::from_secs(10),
        format!(
            "semigroup law {law:.1e} (tol 1e-12), growth exponent dev {growth:.1e} (tol 1e-3), sign flip at q_c {}, \
             quadrature vs closed form {quad:.1e} (tol 1e-6)",
            if signs { "ok" } else { "WRONG" }
        ),
    );
}

#[test]
fn criterion_6_dynamics() {
    let start = Instant::now();
    let params = derived_exponents(5, 3.0).unwrap();
    let grid = RadialGrid::default();
    let ux = select_unstable_expander(&params, 0.125, &grid).unwrap();
    let base = PotentialField::new(ux.profile.clone());
    let opts = EvolveOptions::default();

    let v0 = EvolutionState::from_profile(0.0, &ux.profile, 1.0).unwrap();
    let log = evolve_similarity(&v0, 5.0, &params, opts, Some(&ux.profile.u)).unwrap();
    let drift = log.rows.iter().fold(0.0f64, |m, r| m.max(r.dist_ref));
    let drift_tol = 1e-5 * (1.0 + ux.profile.max_abs_u);

    let w0 = EvolutionState::new(0.0, grid.clone(), ux.eigenfunction.f.clone()).unwrap();
    let lin = linearized_evolve(&w0, &base, 5.0, opts).unwrap();
    let rate = lin.growth_rate(Norm::L2w, 0.0, 5.0).unwrap().slope;

    let robin = profile_robin(&ux.profile);
    let tangency = |a: f64| {
        let psi0 = EvolutionState::new(0.0, grid.clone(), ux.eigenfunction.f.iter().map(|f| a * f).collect())
            .unwrap()
            .with_robin(robin);
        let nl = evolve_perturbation(&psi0, &base, 1.0, opts).unwrap().final_state.v;
        let li = linearized_evolve(&psi0, &base, 1.0, opts).unwrap().final_state.v;
        nl.iter().zip(&li).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let (t1, t2, t3) = (tangency(0.02), tangency(0.01), tangency(0.005));
    let tangency_ratios = [t1 / t2, t2 / t3];
    let tangency_ok = tangency_ratios.iter().all(|r| (3.0..=5.0).contains(r));

    let bump = EvolutionState::new(0.0, grid.clone(), grid.nodes().iter().map(|r| 2.0 * (-r * r).exp()).collect())
        .unwrap();
    let run = |dt: f64| {
        let o = EvolveOptions { dtau: dt, ..opts };
        evolve_similarity(&bump, 0.5, &params, o, None).unwrap().final_state.v
    };
    let (a, b, c) = (run(0.05), run(0.025), run(0.0125));
    let sup = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let richardson = sup(&a, &b) / sup(&b, &c);

    let ok = drift <= drift_tol
        && (rate - ux.lambda_bar).abs() <= 1e-3
        && tangency_ok
        && (richardson - 4.0).abs() <= 0.3;
    report(
        6,
        "dynamics suite",
        ok,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "static drift {drift:.1e} (tol {drift_tol:.2e}), growth {rate:.6} vs lambda_bar {:.6} (tol 1e-3), \
             tangency ratios {:.3}/{:.3} (expect 4, bounded in [3,5]), Richardson ratio {richardson:.3} (tol 4 ± 0.3)",
            ux.lambda_bar, tangency_ratios[0], tangency_ratios[1]
        ),
    );
}

#[test]
fn criterion_7_nonuniqueness_demo() {
    let start = Instant::now();
    let params = derived_exponents(5, 3.0).unwrap();
    let rep = nonuniqueness_demo(&params, DemoConfig::default()).unwrap();
    let c = &rep.checks;
    report(
        7,
        "non-uniqueness demo (d=5, p=3, q=2, r=10)",
        rep.pass,
        start.elapsed(),
        Duration::from_secs(300),
        format!(
            "slack {:.4} (> 0), lower-bound min ratio {:.3} (> 0.5), slope {:.4} vs predicted {:.4} \
             (rel dev {:.3}, tol 0.10), R² {:.5} (tol 0.99), decades {:.2} (tol 2)",
            c.feasibility.value,
            c.lower_bound.value,
            rep.fitted_slope,
            rep.predicted_slope,
            ((rep.fitted_slope - rep.predicted_slope) / rep.predicted_slope).abs(),
            c.slope_r_squared.value,
            c.decades.value
        ),
    );
}

#[test]
fn criterion_8_inequalities() {
    let start = Instant::now();
    let sweep = sweep_remainder_bounds(100_000, DEFAULT_SEED);
    report(
        8,
        "inequality suite",
        sweep.pass(),
        start.elapsed(),
        Duration::from_secs(5),
        format!(
            "1e5 samples, seed {:#x}: taylor violations {}, contraction violations {} (tol 0); \
             max lhs/rhs {:.3} / {:.3}",
            sweep.seed,
            sweep.taylor_violations,
            sweep.contraction_violations,
            sweep.taylor_max_ratio,
            sweep.contraction_max_ratio
        ),
    );
}
