use std::sync::OnceLock;

use expander_lab::banded::BandMatrix;
use expander_lab::dynamics::*;
use expander_lab::exponents::derived_exponents;
use expander_lab::profile::shoot_profile;
use expander_lab::spectral::{select_unstable_expander, PotentialField, UnstableExpander};
use expander_lab::{Error, ProblemParams, RadialGrid};

struct Setup {
    params: ProblemParams,
    grid: RadialGrid,
    ux: UnstableExpander,
    potential: PotentialField,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let params = derived_exponents(5, 3.0).unwrap();
        let grid = RadialGrid::default();
        let ux = select_unstable_expander(&params, 0.125, &grid).unwrap();
        let potential = PotentialField::new(ux.profile.clone());
        Setup { params, grid, ux, potential }
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `⟨f, g⟩` in `L²(ρ^{d-1} e^{ρ²/4})` by the trapezoidal rule.
fn weighted_dot(f: &[f64], g: &[f64], grid: &RadialGrid, d: u32) -> f64 {
    let x = grid.nodes();
    let h = x[1] - x[0];
    let w = |i: usize| x[i].powi(d as i32 - 1) * (0.25 * x[i] * x[i]).exp();
    let n = x.len();
    (1..n).map(|i| 0.5 * h * (w(i - 1) * f[i - 1] * g[i - 1] + w(i) * f[i] * g[i])).sum()
}

#[test]
fn static_profile_single_step() {
    let s = setup();
    for dtau in [0.01, 0.005] {
        let v0 = EvolutionState::from_profile(0.0, &s.ux.profile, 1.0).unwrap();
        let v1 = step_imex(&v0, dtau, &s.params, None).unwrap();
        let drift = sup_diff(&v1.v, &v0.v);
        assert!(drift <= 1e-8 * dtau, "drift {drift:e} at dtau {dtau}");
    }
}

#[test]
fn static_profile_over_five_units() {
    let s = setup();
    let v0 = EvolutionState::from_profile(0.0, &s.ux.profile, 1.0).unwrap();
    let log = evolve_similarity(&v0, 5.0, &s.params, EvolveOptions::default(), Some(&s.ux.profile.u)).unwrap();
    let drift = log.rows.iter().fold(0.0f64, |m, r| m.max(r.dist_ref));
    assert!(drift <= 1e-5 * (1.0 + s.ux.profile.max_abs_u), "drift {drift:e}");
    assert!(log.rows.windows(2).all(|w| w[1].tau > w[0].tau));
}

#[test]
fn zero_data_stay_zero() {
    let s = setup();
    let zero = EvolutionState::new(0.0, s.grid.clone(), vec![0.0; s.grid.len()]).unwrap();
    let log = evolve_similarity(&zero, 1.0, &s.params, EvolveOptions::default(), None).unwrap();
    assert!(log.rows.iter().all(|r| r.l1 == 0.0 && r.dist_ref == 0.0));
    let lin = linearized_evolve(&zero, &s.potential, 1.0, EvolveOptions::default()).unwrap();
    assert!(lin.final_state.v.iter().all(|&x| x == 0.0));
    let pert = evolve_perturbation(&zero, &s.potential, 1.0, EvolveOptions::default()).unwrap();
    assert!(pert.final_state.v.iter().all(|&x| x == 0.0));
}

#[test]
fn eigenmode_growth_rate() {
    let s = setup();
    let w0 = EvolutionState::new(0.0, s.grid.clone(), s.ux.eigenfunction.f.clone()).unwrap();
    let log = linearized_evolve(&w0, &s.potential, 5.0, EvolveOptions::default()).unwrap();
    let fit = log.growth_rate(Norm::L2w, 0.0, 5.0).unwrap();
    assert!((fit.slope - s.ux.lambda_bar).abs() <= 1e-3, "{} vs {}", fit.slope, s.ux.lambda_bar);
    // the mode keeps its shape
    let scale = (s.ux.lambda_bar * 5.0).exp();
    let shape = sup_diff(&log.final_state.v, &w0.v.iter().map(|f| scale * f).collect::<Vec<_>>());
    assert!(shape < 1e-4 * scale, "shape drift {shape:e}");
}

#[test]
fn projected_data_decay_at_second_eigenvalue() {
    let s = setup();
    let d = s.params.d;
    let f = &s.ux.eigenfunction.f;
    let bump: Vec<f64> = s.grid.nodes().iter().map(|r| (-r * r).exp()).collect();
    let c = weighted_dot(&bump, f, &s.grid, d) / weighted_dot(f, f, &s.grid, d);
    let w: Vec<f64> = bump.iter().zip(f).map(|(b, f)| b - c * f).collect();
    let w0 = EvolutionState::new(0.0, s.grid.clone(), w).unwrap();
    let log = linearized_evolve(&w0, &s.potential, 5.0, EvolveOptions::default()).unwrap();
    let fit = log.growth_rate(Norm::L2w, 2.0, 5.0).unwrap();
    assert!(fit.slope <= s.ux.second_eigenvalue + 1e-2, "{} vs {}", fit.slope, s.ux.second_eigenvalue);
}

#[test]
fn perturbation_is_quadratically_tangent_to_linearization() {
    let s = setup();
    let f = &s.ux.eigenfunction.f;
    let discrepancy = |a: f64| {
        let psi0 = EvolutionState::new(0.0, s.grid.clone(), f.iter().map(|x| a * x).collect())
            .unwrap()
            .with_robin(profile_robin(&s.ux.profile));
        let opts = EvolveOptions::default();
        let pert = evolve_perturbation(&psi0, &s.potential, 1.0, opts).unwrap();
        let lin = linearized_evolve(&psi0, &s.potential, 1.0, opts).unwrap();
        sup_diff(&pert.final_state.v, &lin.final_state.v)
    };
    let (d1, d2, d3) = (discrepancy(0.02), discrepancy(0.01), discrepancy(0.005));
    for ratio in [d1 / d2, d2 / d3] {
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }
}

#[test]
fn richardson_ratio_full_flow() {
    // bump data, three step sizes; second-order scheme gives ratio 4
    let s = setup();
    let v0: Vec<f64> = s.grid.nodes().iter().map(|r| 2.0 * (-r * r).exp()).collect();
    let state = EvolutionState::new(0.0, s.grid.clone(), v0).unwrap();
    let run = |dt: f64| {
        let opts = EvolveOptions { dtau: dt, ..EvolveOptions::default() };
        evolve_similarity(&state, 0.5, &s.params, opts, None).unwrap().final_state.v
    };
    let (a, b, c) = (run(0.05), run(0.025), run(0.0125));
    let ratio = sup_diff(&a, &b) / sup_diff(&b, &c);
    assert!((ratio - 4.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn manufactured_solution_is_second_order() {
    // w = e^{μτ} φ solves w_τ = A w + e^{μτ}(μφ - Aφ) exactly on the grid
    let s = setup();
    let mu = 0.5;
    let phi: Vec<f64> = s.grid.nodes().iter().map(|r| (1.0 + r * r) * (-r * r).exp()).collect();
    let robin = profile_robin(&s.ux.profile);
    let a = linear_operator(&s.params, &s.grid, Some(&s.potential.v), robin).unwrap();
    let aphi = a.matvec(&phi);
    let n = phi.len() - 1;
    let base: Vec<f64> = phi.iter().zip(&aphi).map(|(p, q)| mu * p - q).collect();
    let error = |dt: f64| {
        let st = ImexStepper::new(&s.params, &s.grid, Some(&s.potential.v), Nonlinearity::Linear, dt, robin).unwrap();
        let steps = (1.0 / dt).round() as usize;
        let mut v = phi.clone();
        for k in 0..steps {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            let s0: Vec<f64> = base.iter().map(|b| (mu * t0).exp() * b).collect();
            let s1: Vec<f64> = base.iter().map(|b| (mu * t1).exp() * b).collect();
            v = st.step_with_source(&v, &s0, &s1, (mu * t1).exp() * aphi[n]);
        }
        let exact: Vec<f64> = phi.iter().map(|p| mu.exp() * p).collect();
        sup_diff(&v, &exact)
    };
    let (e1, e2, e3) = (error(0.1), error(0.05), error(0.025));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((ratio - 4.0).abs() <= 0.3, "ratio {ratio}");
    }
}

#[test]
fn single_linear_step_error_is_cubic() {
    // discrete top eigenvector by inverse iteration on the pencil (A, M),
    // M = identity without the boundary row
    let s = setup();
    let robin = profile_robin(&s.ux.profile);
    let a = linear_operator(&s.params, &s.grid, Some(&s.potential.v), robin).unwrap();
    let n = a.size() - 1;
    let sigma = s.ux.lambda_bar + 1e-3;
    let mut shifted = BandMatrix::zeros(n + 1, 6, 3);
    for r in 0..=n {
        for c in r.saturating_sub(6)..=(r + 3).min(n) {
            shifted.add(r, c, a.get(r, c) - if r == c && r < n { sigma } else { 0.0 });
        }
    }
    let lu = shifted.factor().unwrap();
    let mut x = s.ux.eigenfunction.f.clone();
    let mut lambda = 0.0;
    for _ in 0..30 {
        let mut y = x.clone();
        y[n] = 0.0;
        lu.solve_in_place(&mut y);
        let k = y.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        lambda = sigma + x.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m }) / k;
        x = y.iter().map(|v| v / k).collect();
    }
    assert!((lambda - s.ux.lambda_bar).abs() < 1e-6, "discrete {lambda} vs {}", s.ux.lambda_bar);
    let rel = |dt: f64| {
        let st = ImexStepper::new(&s.params, &s.grid, Some(&s.potential.v), Nonlinearity::Linear, dt, robin).unwrap();
        let next = st.step(&x).unwrap();
        let g = (lambda * dt).exp();
        sup_diff(&next, &x.iter().map(|v| g * v).collect::<Vec<_>>()) / g
    };
    let (e1, e2) = (rel(0.4), rel(0.2));
    assert!((e1 / e2 - 8.0).abs() < 0.5, "ratio {}", e1 / e2);
}

#[test]
fn larger_datum_departs_monotonically() {
    let s = setup();
    let d = s.params.d;
    let mut state = EvolutionState::from_profile(0.0, &s.ux.profile, 1.5).unwrap();
    let u = &s.ux.profile.u;
    let dist = |v: &[f64]| {
        let e: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
        weighted_dot(&e, &e, &s.grid, d).sqrt()
    };
    let mut last = dist(&state.v);
    let mut steps = 0;
    while state.tau < 2.0 && state.v.iter().all(|x| x.abs() < BLOW_UP_THRESHOLD) {
        let cap = STABILITY_FACTOR / (3.0 * state.v.iter().fold(0.0f64, |m, x| m.max(x * x)));
        let dt = DEFAULT_DTAU.min(cap);
        state = step_imex(&state, dt, &s.params, None).unwrap();
        let now = dist(&state.v);
        assert!(now >= last * (1.0 - 1e-12), "distance fell from {last} to {now} at tau {}", state.tau);
        last = now;
        steps += 1;
    }
    assert!(steps > 5);
}

#[test]
fn supercritical_datum_blows_up() {
    let s = setup();
    let v0 = EvolutionState::from_profile(0.0, &s.ux.profile, 1.5).unwrap();
    let log = evolve_similarity(&v0, 5.0, &s.params, EvolveOptions::default(), None).unwrap();
    assert!(log.blow_up.is_some());
}

#[test]
fn ancient_branch_with_zero_seed() {
    let s = setup();
    let opts = AncientOptions { epsilon: Some(0.0), tau0: -4.0, tau1: -2.0, ..AncientOptions::default() };
    let b = ancient_branch(&s.potential, &s.ux.eigenfunction, s.ux.lambda_bar, opts).unwrap();
    assert!(b.psi_lr.iter().all(|&x| x == 0.0));
    assert!(b.log.final_state.v.iter().all(|&x| x == 0.0));
}

#[test]
fn ancient_branch_bounds_and_time_translation() {
    let s = setup();
    let lam = s.ux.lambda_bar;
    let auto = ancient_branch(&s.potential, &s.ux.eigenfunction, lam, AncientOptions::default()).unwrap();
    assert!(auto.lower_bound_holds, "min ratio {}", auto.lower_bound_min_ratio);
    assert!(auto.delta_ok, "delta {:?} < {}", auto.delta, auto.delta_required);
    assert_eq!(auto.taus.first().copied(), Some(-12.0));
    assert!((auto.taus.last().unwrap() + 2.0).abs() < 1e-9);

    // ψ_{ε/2}(τ) ≈ ψ_ε(τ - ln 2/λ̄); the unseeded quadratic correction makes
    // the mismatch first order in the seed amplitude
    let run = |e: f64| {
        let opts = AncientOptions { epsilon: Some(e), ..AncientOptions::default() };
        ancient_branch(&s.potential, &s.ux.eigenfunction, lam, opts).unwrap()
    };
    let shift = std::f64::consts::LN_2 / lam;
    let at = |b: &AncientBranch, tau: f64| {
        let k = b.taus.partition_point(|&t| t < tau).clamp(1, b.taus.len() - 1);
        let (t0, t1) = (b.taus[k - 1], b.taus[k]);
        let w = (tau - t0) / (t1 - t0);
        (1.0 - w) * b.psi_lr[k - 1] + w * b.psi_lr[k]
    };
    let mismatch = |eps: f64| {
        let (full, half) = (run(eps), run(0.5 * eps));
        [-4.0, -3.0, -2.0]
            .iter()
            .map(|&tau| (at(&half, tau) / at(&full, tau - shift) - 1.0).abs())
            .fold(0.0f64, f64::max)
    };
    let small = mismatch(0.05 * auto.epsilon);
    let smaller = mismatch(0.025 * auto.epsilon);
    assert!(small < 5e-3, "mismatch {small}");
    assert!((small / smaller - 2.0).abs() < 0.3, "mismatch ratio {}", small / smaller);
}

#[test]
fn oversized_seed_is_rejected() {
    let s = setup();
    let opts = AncientOptions { epsilon: Some(1e3), ..AncientOptions::default() };
    match ancient_branch(&s.potential, &s.ux.eigenfunction, s.ux.lambda_bar, opts) {
        Err(Error::Amplitude { suggested_epsilon, .. }) => assert!(suggested_epsilon < 1e3),
        other => panic!("expected an amplitude error, got {:?}", other.map(|b| b.epsilon)),
    }
}

#[test]
fn stability_cap_error() {
    let s = setup();
    let v0 = EvolutionState::from_profile(0.0, &s.ux.profile, 10.0).unwrap();
    assert!(matches!(step_imex(&v0, 0.01, &s.params, None), Err(Error::StabilityCap { .. })));
}

#[test]
fn physical_norm_scaling() {
    let params = derived_exponents(5, 3.0).unwrap();
    for tau in [-3.0, 0.0, 2.5] {
        let (t, n) = to_physical_norm(1.7, tau, params.q_c, &params);
        assert!((t - f64::exp(tau)).abs() < 1e-15 * t);
        assert!((n - 1.7).abs() < 1e-14);
    }
    // r > q_c: the norm of a static profile grows as t -> 0 with slope -(1/(p-1) - d/(2r))
    let (t1, n1) = to_physical_norm(1.0, -10.0, 10.0, &params);
    let (t2, n2) = to_physical_norm(1.0, -5.0, 10.0, &params);
    let slope = (n2.ln() - n1.ln()) / (t2.ln() - t1.ln());
    assert!((slope + 0.25).abs() < 1e-12);
    // q < q_c: vanishes as t -> 0
    assert!(to_physical_norm(1.0, -20.0, 2.0, &params).1 < 1e-3);
}

#[test]
fn demo_preconditions() {
    let beyond = derived_exponents(11, 7.0).unwrap();
    let cfg = DemoConfig::default();
    assert!(matches!(nonuniqueness_demo(&beyond, cfg), Err(Error::NoUnstableExpander { .. })));
    let params = derived_exponents(5, 3.0).unwrap();
    let at_qc = DemoConfig { q: params.q_c, ..DemoConfig::default() };
    assert!(matches!(nonuniqueness_demo(&params, at_qc), Err(Error::Domain(_))));
}

#[test]
fn resampling_a_profile_between_grids() {
    let params = derived_exponents(3, 2.0).unwrap();
    let fine = RadialGrid::uniform(12.0, 0.01).unwrap();
    let coarse = RadialGrid::uniform(12.0, 0.04).unwrap();
    let a = shoot_profile(0.8, &params, &fine).unwrap();
    let b = shoot_profile(0.8, &params, &coarse).unwrap();
    let back = resample_cubic(&b.u, &coarse, &fine).unwrap();
    assert!(sup_diff(&back, &a.u) < 1e-6);
}
