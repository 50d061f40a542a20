//! Time evolution of `v_τ = L_0 v + |v|^{p-1} v` in similarity variables,
//! `L_0 v = v'' + ((d-1)/ρ + ρ/2) v' + v/(p-1)`.
//!
//! Space: sixth-order finite differences on a uniform grid, even reflection
//! at the origin and a Robin condition `v' + β v = 0` at `ρ_max`. The default
//! `β = m/ρ_max`, `m = 2/(p-1)`, holds for every profile tail `ℓ ρ^{-m}` to
//! leading order only; since the drift `(ρ/2) ∂_ρ` carries boundary data
//! inward, states built from a profile use its exact log-derivative instead.
//! Gaussian-decaying perturbations barely see the condition. Time: Crank–Nicolson
//! for the linear part, including a frozen potential when one is supplied,
//! and a Heun predictor–corrector for the explicit nonlinearity. A discrete
//! steady state is an exact fixed point of the step.

use serde::Serialize;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{domain, Error, Result};
use crate::exponents::{check_feasibility, signed_pow, ProblemParams};
use crate::fd::fornberg;
use crate::fit::{line_fit, LineFit};
use crate::grid::RadialGrid;
use crate::semigroup::truncated_lq_norm;
use crate::profile::ExpanderProfile;
use crate::spectral::{matrix_top_eigenvalue, select_unstable_expander, weighted_l2, EigenPair, PotentialField};

pub const DEFAULT_DTAU: f64 = 0.01;
pub const BLOW_UP_THRESHOLD: f64 = 1e6;
/// Explicit steps must satisfy `dtau <= STABILITY_FACTOR / sup |∂N/∂v|`.
pub const STABILITY_FACTOR: f64 = 0.5;

// stencil half-width
const S: usize = 3;
const KL: usize = 2 * S;
const KU: usize = S;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionState {
    pub tau: f64,
    pub grid: RadialGrid,
    pub v: Vec<f64>,
    /// Robin coefficient `β` in `v' + β v = 0` at `ρ_max`; `m/ρ_max` if unset.
    pub robin: Option<f64>,
}

impl EvolutionState {
    pub fn new(tau: f64, grid: RadialGrid, v: Vec<f64>) -> Result<Self> {
        if v.len() != grid.len() {
            return domain(format!("{} values on a grid of {} nodes", v.len(), grid.len()));
        }
        if grid.step().is_none() {
            return domain("time stepping needs a uniform grid");
        }
        if v.iter().any(|x| !x.is_finite()) {
            return domain("initial data has non-finite values");
        }
        Ok(EvolutionState { tau, grid, v, robin: None })
    }

    pub fn with_robin(mut self, beta: f64) -> Self {
        self.robin = Some(beta);
        self
    }

    /// `scale · U` on the profile grid, with the profile's tail log-derivative
    /// as the Robin coefficient.
    pub fn from_profile(tau: f64, profile: &ExpanderProfile, scale: f64) -> Result<Self> {
        let v = profile.u.iter().map(|u| scale * u).collect();
        Ok(EvolutionState::new(tau, profile.grid.clone(), v)?.with_robin(profile_robin(profile)))
    }

    fn robin_or_default(&self, params: &ProblemParams) -> f64 {
        self.robin.unwrap_or(params.tail_power() / self.grid.rho_max())
    }
}

/// `-U'(ρ_max) / U(ρ_max)`, which is `m/ρ + 2κ/ρ³ + O(ρ^{-5})` with
/// `κ = m(m + 2 - d) + ℓ^{p-1}`.
pub fn profile_robin(profile: &ExpanderProfile) -> f64 {
    let n = profile.u.len() - 1;
    let (u, du) = (profile.u[n], profile.du[n]);
    if u != 0.0 {
        -du / u
    } else {
        profile.params.tail_power() / profile.grid.rho_max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `|v|^{p-1} v`.
    Full,
    /// The linearized flow: no explicit term.
    Linear,
    /// `N(Ū + ψ) - N(Ū) - p|Ū|^{p-1} ψ` about the stored `Ū`.
    Remainder(Vec<f64>),
}

impl Nonlinearity {
    fn eval(&self, p: f64, v: &[f64]) -> Vec<f64> {
        match self {
            Nonlinearity::Full => v.iter().map(|&x| signed_pow(x, p)).collect(),
            Nonlinearity::Linear => vec![0.0; v.len()],
            Nonlinearity::Remainder(base) => v
                .iter()
                .zip(base)
                .map(|(&psi, &u)| {
                    signed_pow(u + psi, p) - signed_pow(u, p) - p * u.abs().powf(p - 1.0) * psi
                })
                .collect(),
        }
    }

    /// `sup |∂N/∂v|` along `v`.
    fn lipschitz(&self, p: f64, v: &[f64]) -> f64 {
        match self {
            Nonlinearity::Full => v.iter().fold(0.0f64, |m, x| m.max(p * x.abs().powf(p - 1.0))),
            Nonlinearity::Linear => 0.0,
            Nonlinearity::Remainder(base) => v.iter().zip(base).fold(0.0f64, |m, (&psi, &u)| {
                m.max(p * ((u + psi).abs().powf(p - 1.0) - u.abs().powf(p - 1.0)).abs())
            }),
        }
    }
}

/// `L_0 + V` on rows `0..n` of the grid and the Robin condition
/// `v' + β v = 0` on row `n` (the last node), as a band matrix.
pub fn linear_operator(
    params: &ProblemParams,
    grid: &RadialGrid,
    potential: Option<&[f64]>,
    robin: f64,
) -> Result<BandMatrix> {
    let Some(h) = grid.step() else {
        return domain("time stepping needs a uniform grid");
    };
    let x = grid.nodes();
    let n = x.len() - 1;
    if n < 4 * S {
        return domain("grid too small for the seven-point stencil");
    }
    if let Some(v) = potential {
        if v.len() != x.len() {
            return domain(format!("potential has {} values on a grid of {} nodes", v.len(), x.len()));
        }
    }
    let pot = |i: usize| potential.map_or(0.0, |v| v[i]);
    let d = params.dim();
    let c = params.inv_pm1();
    let mut a = BandMatrix::zeros(n + 1, KL, KU);

    let offsets: Vec<f64> = (0..=2 * S).map(|k| k as f64 - S as f64).collect();
    let w = fornberg(0.0, &offsets, 2);
    let w1: Vec<f64> = w[1].iter().map(|c| c / h).collect();
    let w2: Vec<f64> = w[2].iter().map(|c| c / (h * h)).collect();

    // at the origin the drift term doubles the Laplacian: L v = d v'' + v/(p-1)
    for k in 0..=2 * S {
        let j = (k as isize - S as isize).unsigned_abs();
        a.add(0, j, d * w2[k]);
    }
    a.add(0, 0, c + pot(0));

    for i in 1..=n - S {
        let drift = (d - 1.0) / x[i] + 0.5 * x[i];
        for k in 0..=2 * S {
            let j = (i + k) as isize - S as isize;
            a.add(i, j.unsigned_abs(), w2[k] + drift * w1[k]);
        }
        a.add(i, i, c + pot(i));
    }

    let tail = &x[n - 2 * S..=n];
    for i in n - S + 1..n {
        let w = fornberg(x[i], tail, 2);
        let drift = (d - 1.0) / x[i] + 0.5 * x[i];
        for k in 0..=2 * S {
            a.add(i, n - 2 * S + k, w[2][k] + drift * w[1][k]);
        }
        a.add(i, i, c + pot(i));
    }

    let w = fornberg(x[n], tail, 1);
    for k in 0..=2 * S {
        a.add(n, n - 2 * S + k, w[1][k]);
    }
    a.add(n, n, robin);
    Ok(a)
}

/// One Crank–Nicolson / Heun step of fixed size, with the factorization of
/// the implicit matrix cached.
#[derive(Debug, Clone)]
pub struct ImexStepper {
    p: f64,
    dtau: f64,
    op: BandMatrix,
    lu: BandLu,
    nonlinearity: Nonlinearity,
}

fn implicit_matrix(op: &BandMatrix, dtau: f64) -> Result<BandLu> {
    let n = op.size() - 1;
    let mut m = BandMatrix::zeros(n + 1, KL, KU);
    for r in 0..=n {
        for c in r.saturating_sub(KL)..=(r + KU).min(n) {
            let a = op.get(r, c);
            if r == n {
                m.add(r, c, a);
            } else {
                m.add(r, c, -0.5 * dtau * a + if r == c { 1.0 } else { 0.0 });
            }
        }
    }
    m.factor()
}

impl ImexStepper {
    pub fn new(
        params: &ProblemParams,
        grid: &RadialGrid,
        potential: Option<&[f64]>,
        nonlinearity: Nonlinearity,
        dtau: f64,
        robin: f64,
    ) -> Result<Self> {
        if !(dtau > 0.0 && dtau.is_finite()) {
            return domain(format!("dtau = {dtau} must be positive"));
        }
        if let Nonlinearity::Remainder(base) = &nonlinearity {
            if base.len() != grid.len() {
                return domain("remainder base does not match the grid");
            }
        }
        let op = linear_operator(params, grid, potential, robin)?;
        let lu = implicit_matrix(&op, dtau)?;
        Ok(ImexStepper { p: params.p, dtau, op, lu, nonlinearity })
    }

    pub fn dtau(&self) -> f64 {
        self.dtau
    }

    pub fn operator(&self) -> &BandMatrix {
        &self.op
    }

    pub fn set_dtau(&mut self, dtau: f64) -> Result<()> {
        if dtau != self.dtau {
            self.lu = implicit_matrix(&self.op, dtau)?;
            self.dtau = dtau;
        }
        Ok(())
    }

    /// Largest admissible step at `v`.
    pub fn stability_limit(&self, v: &[f64]) -> f64 {
        let lip = self.nonlinearity.lipschitz(self.p, v);
        if lip > 0.0 {
            STABILITY_FACTOR / lip
        } else {
            f64::INFINITY
        }
    }

    fn explicit_part(&self, v: &[f64]) -> Vec<f64> {
        let av = self.op.matvec(v);
        let n = v.len() - 1;
        let mut b: Vec<f64> = v.iter().zip(&av).map(|(x, a)| x + 0.5 * self.dtau * a).collect();
        b[n] = 0.0;
        b
    }

    pub fn step(&self, v: &[f64]) -> Result<Vec<f64>> {
        let limit = self.stability_limit(v);
        if self.dtau > limit {
            return Err(Error::StabilityCap { dtau: self.dtau, suggested: limit });
        }
        let n = v.len() - 1;
        let base = self.explicit_part(v);
        let n0 = self.nonlinearity.eval(self.p, v);
        let mut pred = base.clone();
        for i in 0..n {
            pred[i] += self.dtau * n0[i];
        }
        self.lu.solve_in_place(&mut pred);
        if self.nonlinearity == Nonlinearity::Linear {
            return Ok(pred);
        }
        let n1 = self.nonlinearity.eval(self.p, &pred);
        let mut next = base;
        for i in 0..n {
            next[i] += 0.5 * self.dtau * (n0[i] + n1[i]);
        }
        self.lu.solve_in_place(&mut next);
        Ok(next)
    }

    /// Linear step with a source treated by the trapezoidal rule; `boundary`
    /// is the right-hand side of the Robin row at the new time.
    pub fn step_with_source(&self, v: &[f64], s_now: &[f64], s_next: &[f64], boundary: f64) -> Vec<f64> {
        let n = v.len() - 1;
        let mut b = self.explicit_part(v);
        for i in 0..n {
            b[i] += 0.5 * self.dtau * (s_now[i] + s_next[i]);
        }
        b[n] = boundary;
        self.lu.solve_in_place(&mut b);
        b
    }
}

/// One step of the full flow, or of the linearized flow about a frozen
/// potential when one is supplied.
pub fn step_imex(
    state: &EvolutionState,
    dtau: f64,
    params: &ProblemParams,
    frozen: Option<&PotentialField>,
) -> Result<EvolutionState> {
    let (potential, nonlinearity) = match frozen {
        Some(pf) => (Some(pf.v.as_slice()), Nonlinearity::Linear),
        None => (None, Nonlinearity::Full),
    };
    let robin = state.robin_or_default(params);
    let stepper = ImexStepper::new(params, &state.grid, potential, nonlinearity, dtau, robin)?;
    let v = stepper.step(&state.v)?;
    Ok(EvolutionState { tau: state.tau + dtau, grid: state.grid.clone(), v, robin: state.robin })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolveOptions {
    /// Upper bound for the step; steps shrink further under the stability cap.
    pub dtau: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { dtau: DEFAULT_DTAU, q: 2.0, r: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    Lq,
    Lr,
    Lpr,
    L2w,
    DistRef,
}

/// Norms over the computational ball `ρ <= ρ_max`; `dist_ref` is the sup
/// distance to the reference field (to zero when there is none).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub tau: f64,
    pub t: f64,
    pub l1: f64,
    pub lq: f64,
    pub lr: f64,
    pub lpr: f64,
    pub l2w: f64,
    pub dist_ref: f64,
}

impl LogRow {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.l1,
            Norm::Lq => self.lq,
            Norm::Lr => self.lr,
            Norm::Lpr => self.lpr,
            Norm::L2w => self.l2w,
            Norm::DistRef => self.dist_ref,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryLog {
    pub d: u32,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub rows: Vec<LogRow>,
    /// Similarity time at which `sup |v|` first exceeded the blow-up threshold.
    pub blow_up: Option<f64>,
    #[serde(skip)]
    pub final_state: EvolutionState,
}

impl TrajectoryLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,t,l1,lq,lr,lpr,l2w,dist_ref\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.tau, r.t, r.l1, r.lq, r.lr, r.lpr, r.l2w, r.dist_ref
            ));
        }
        s
    }

    /// Least-squares slope of `ln ‖·‖` against `τ` on `[from, to]`.
    pub fn growth_rate(&self, norm: Norm, from: f64, to: f64) -> Result<LineFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.tau >= from && r.tau <= to && r.get(norm) > 0.0)
            .map(|r| (r.tau, r.get(norm).ln()))
            .unzip();
        line_fit(&x, &y)
    }
}

struct Recorder<'a> {
    params: &'a ProblemParams,
    grid: &'a RadialGrid,
    opts: EvolveOptions,
    reference: Option<&'a [f64]>,
}

impl Recorder<'_> {
    fn row(&self, tau: f64, v: &[f64]) -> LogRow {
        let d = self.params.d;
        let norm = |g: f64| truncated_lq_norm(self.grid, v, g, d);
        let dist_ref = match self.reference {
            Some(r) => v.iter().zip(r).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
            None => v.iter().fold(0.0f64, |m, a| m.max(a.abs())),
        };
        LogRow {
            tau,
            t: tau.exp(),
            l1: norm(1.0),
            lq: norm(self.opts.q),
            lr: norm(self.opts.r),
            lpr: norm(self.params.p * self.opts.r),
            l2w: weighted_l2(v, self.grid, d),
            dist_ref,
        }
    }
}

fn check_options(opts: &EvolveOptions, tau0: f64, tau1: f64) -> Result<()> {
    if !(opts.dtau > 0.0 && opts.dtau.is_finite()) {
        return domain(format!("dtau = {} must be positive", opts.dtau));
    }
    if !(opts.q >= 1.0 && opts.r >= 1.0) {
        return domain("norm exponents q and r must be at least 1");
    }
    if !(tau1 >= tau0) {
        return domain(format!("end time {tau1} precedes start time {tau0}"));
    }
    Ok(())
}

/// Steps `state` to `tau1`, recording every step and handing each new field
/// to `observe`, which may abort the run with an error.
fn run(
    mut stepper: ImexStepper,
    state: &EvolutionState,
    tau1: f64,
    params: &ProblemParams,
    opts: EvolveOptions,
    reference: Option<&[f64]>,
    mut observe: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<TrajectoryLog> {
    check_options(&opts, state.tau, tau1)?;
    let rec = Recorder { params, grid: &state.grid, opts, reference };
    let mut tau = state.tau;
    let mut v = state.v.clone();
    let mut rows = vec![rec.row(tau, &v)];
    let mut blow_up = None;
    let slack = 1e-9 * opts.dtau;
    while tau < tau1 - slack {
        let dt = opts.dtau.min(tau1 - tau).min(stepper.stability_limit(&v));
        if dt < 1e-14 * (1.0 + tau.abs()) {
            blow_up = Some(tau);
            break;
        }
        stepper.set_dtau(dt)?;
        v = stepper.step(&v)?;
        tau = if tau1 - tau - dt <= slack { tau1 } else { tau + dt };
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(sup <= BLOW_UP_THRESHOLD) {
            blow_up = Some(tau);
            if sup.is_finite() {
                rows.push(rec.row(tau, &v));
            }
            break;
        }
        observe(tau, &v)?;
        rows.push(rec.row(tau, &v));
    }
    Ok(TrajectoryLog {
        d: params.d,
        p: params.p,
        q: opts.q,
        r: opts.r,
        rows,
        blow_up,
        final_state: EvolutionState { tau, grid: state.grid.clone(), v, robin: state.robin },
    })
}

/// The full flow from `v0` to `tau1`, stopping early at blow-up.
pub fn evolve_similarity(
    v0: &EvolutionState,
    tau1: f64,
    params: &ProblemParams,
    opts: EvolveOptions,
    reference: Option<&[f64]>,
) -> Result<TrajectoryLog> {
    if let Some(r) = reference {
        if r.len() != v0.v.len() {
            return domain("reference does not match the grid");
        }
    }
    let robin = v0.robin_or_default(params);
    let stepper = ImexStepper::new(params, &v0.grid, None, Nonlinearity::Full, opts.dtau, robin)?;
    run(stepper, v0, tau1, params, opts, reference, |_, _| Ok(()))
}

fn check_potential(pf: &PotentialField, grid: &RadialGrid) -> Result<()> {
    if pf.v.len() != grid.len() || pf.profile.grid.rho_max() != grid.rho_max() {
        return domain("potential and state live on different grids");
    }
    Ok(())
}

/// `w_τ = L_ᾱ w` with the potential of `potential` frozen.
pub fn linearized_evolve(
    w0: &EvolutionState,
    potential: &PotentialField,
    tau1: f64,
    opts: EvolveOptions,
) -> Result<TrajectoryLog> {
    check_potential(potential, &w0.grid)?;
    let params = &potential.profile.params;
    let robin = w0.robin_or_default(params);
    let stepper = ImexStepper::new(params, &w0.grid, Some(&potential.v), Nonlinearity::Linear, opts.dtau, robin)?;
    run(stepper, w0, tau1, params, opts, None, |_, _| Ok(()))
}

/// `ψ_τ = L_ᾱ ψ + N(Ū + ψ) - N(Ū) - N'(Ū) ψ` about the profile of `base`.
pub fn evolve_perturbation(
    psi0: &EvolutionState,
    base: &PotentialField,
    tau1: f64,
    opts: EvolveOptions,
) -> Result<TrajectoryLog> {
    perturbation_run(psi0, base, tau1, opts, |_, _| Ok(()))
}

fn perturbation_run(
    psi0: &EvolutionState,
    base: &PotentialField,
    tau1: f64,
    opts: EvolveOptions,
    observe: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<TrajectoryLog> {
    check_potential(base, &psi0.grid)?;
    let params = &base.profile.params;
    let nl = Nonlinearity::Remainder(base.profile.u.clone());
    let robin = psi0.robin_or_default(params);
    let stepper = ImexStepper::new(params, &psi0.grid, Some(&base.v), nl, opts.dtau, robin)?;
    run(stepper, psi0, tau1, params, opts, None, observe)
}

/// `(t, ‖u(t)‖_{L^γ})` from a similarity norm at `τ = ln t`:
/// `‖u(t)‖_γ = t^{-(1/(p-1) - d/(2γ))} ‖v(τ)‖_γ`.
pub fn to_physical_norm(sim_norm: f64, tau: f64, gamma: f64, params: &ProblemParams) -> (f64, f64) {
    (tau.exp(), (-tau * params.scaling_rate(gamma)).exp() * sim_norm)
}

/// Four-point Lagrange interpolation from one grid onto another; zero
/// outside the source grid.
pub fn resample_cubic(values: &[f64], from: &RadialGrid, to: &RadialGrid) -> Result<Vec<f64>> {
    if values.len() != from.len() {
        return domain(format!("{} values on a grid of {} nodes", values.len(), from.len()));
    }
    let x = from.nodes();
    let n = x.len();
    Ok(to
        .nodes()
        .iter()
        .map(|&r| {
            if r > x[n - 1] {
                return 0.0;
            }
            let j = x.partition_point(|&s| s <= r).clamp(1, n - 1) - 1;
            let start = j.saturating_sub(1).min(n - 4);
            (start..start + 4)
                .map(|a| {
                    let w: f64 = (start..start + 4)
                        .filter(|&b| b != a)
                        .map(|b| (r - x[b]) / (x[a] - x[b]))
                        .product();
                    w * values[a]
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AncientOptions {
    pub tau0: f64,
    pub tau1: f64,
    pub dtau: f64,
    pub q: f64,
    pub r: f64,
    /// Seed amplitude; when absent, the linear prediction at `τ1` is held to
    /// 1% of `Ū` in both `L¹` and `L^{pr}` (over the computational ball).
    pub epsilon: Option<f64>,
    pub max_halvings: usize,
}

impl Default for AncientOptions {
    fn default() -> Self {
        AncientOptions { tau0: -12.0, tau1: -2.0, dtau: DEFAULT_DTAU, q: 2.0, r: 10.0, epsilon: None, max_halvings: 8 }
    }
}

/// A perturbation `ψ` seeded at `τ0` on the unstable mode and tracked to
/// `τ1`, with the two estimates that make it an ancient solution:
/// `‖ψ‖_r > ½ ε e^{λ̄τ} ‖f‖_r` and `‖ψ - ε e^{λ̄τ} f‖_r <= C e^{(λ̄+δ)τ}`.
#[derive(Debug, Clone, Serialize)]
pub struct AncientBranch {
    pub epsilon: f64,
    pub halvings: usize,
    pub lambda_bar: f64,
    /// `min_τ ‖ψ(τ)‖_r / (ε e^{λ̄τ} ‖f‖_r)`; the lower bound needs `> 0.5`.
    pub lower_bound_min_ratio: f64,
    pub lower_bound_holds: bool,
    /// Fit of `ln ‖ψ - ε e^{λ̄τ} f‖_r` against `τ` from `τ0 + 1` on.
    pub residual_fit: Option<LineFit>,
    pub delta: Option<f64>,
    pub delta_required: f64,
    pub delta_ok: bool,
    pub taus: Vec<f64>,
    pub psi_lr: Vec<f64>,
    pub residual_lr: Vec<f64>,
    pub log: TrajectoryLog,
}

pub fn ancient_branch(
    base: &PotentialField,
    mode: &EigenPair,
    lambda_bar: f64,
    opts: AncientOptions,
) -> Result<AncientBranch> {
    let grid = &base.profile.grid;
    let params = &base.profile.params;
    if mode.f.len() != grid.len() {
        return domain("eigenfunction and profile live on different grids");
    }
    if !(opts.tau1 > opts.tau0) {
        return domain(format!("tau1 = {} must exceed tau0 = {}", opts.tau1, opts.tau0));
    }
    let (d, r) = (params.d, opts.r);
    let mode_r = truncated_lq_norm(grid, &mode.f, r, d);
    let delta_required = 0.5 * (params.p - 1.0).min(1.0) * lambda_bar;
    let evolve_opts = EvolveOptions { dtau: opts.dtau, q: opts.q, r };

    let (mut epsilon, auto) = match opts.epsilon {
        Some(e) if !(e >= 0.0 && e.is_finite()) => return domain(format!("epsilon = {e} must be non-negative")),
        Some(e) => (e, false),
        None => {
            let ratio = |g: f64| truncated_lq_norm(grid, &base.profile.u, g, d) / truncated_lq_norm(grid, &mode.f, g, d);
            let scale = ratio(1.0).min(ratio(params.p * r));
            (0.01 * scale / (lambda_bar * opts.tau1).exp(), true)
        }
    };

    let mut halvings = 0;
    loop {
        let seed: Vec<f64> = mode.f.iter().map(|f| epsilon * (lambda_bar * opts.tau0).exp() * f).collect();
        let psi0 = EvolutionState::new(opts.tau0, grid.clone(), seed)?.with_robin(profile_robin(&base.profile));
        let mut taus = vec![opts.tau0];
        let mut psi_lr = vec![epsilon * (lambda_bar * opts.tau0).exp() * mode_r];
        let mut residual_lr = vec![0.0];
        let mut min_ratio: f64 = if epsilon > 0.0 { 1.0 } else { 0.0 };
        let outcome = perturbation_run(&psi0, base, opts.tau1, evolve_opts, |tau, psi| {
            let lin: f64 = epsilon * (lambda_bar * tau).exp();
            let norm = truncated_lq_norm(grid, psi, r, d);
            let diff: Vec<f64> = psi.iter().zip(&mode.f).map(|(a, f)| a - lin * f).collect();
            taus.push(tau);
            psi_lr.push(norm);
            residual_lr.push(truncated_lq_norm(grid, &diff, r, d));
            if epsilon > 0.0 {
                let ratio = norm / (lin * mode_r);
                min_ratio = min_ratio.min(ratio);
                if !(ratio > 0.5) {
                    return Err(Error::Amplitude { tau, suggested_epsilon: 0.5 * epsilon });
                }
            }
            Ok(())
        });
        let log = match outcome {
            Ok(log) if log.blow_up.is_none() => log,
            Ok(log) => {
                let tau = log.blow_up.unwrap_or(opts.tau1);
                if auto && halvings < opts.max_halvings {
                    epsilon *= 0.5;
                    halvings += 1;
                    continue;
                }
                return Err(Error::Amplitude { tau, suggested_epsilon: 0.5 * epsilon });
            }
            Err(Error::Amplitude { .. }) if auto && halvings < opts.max_halvings => {
                epsilon *= 0.5;
                halvings += 1;
                continue;
            }
            Err(e) => return Err(e),
        };

        let (x, y): (Vec<f64>, Vec<f64>) = taus
            .iter()
            .zip(&residual_lr)
            .filter(|(t, res)| **t >= opts.tau0 + 1.0 && **res > 0.0)
            .map(|(t, res)| (*t, res.ln()))
            .unzip();
        let residual_fit = if epsilon > 0.0 && x.len() >= 3 { Some(line_fit(&x, &y)?) } else { None };
        let delta = residual_fit.map(|f| f.slope - lambda_bar);
        return Ok(AncientBranch {
            epsilon,
            halvings,
            lambda_bar,
            lower_bound_min_ratio: min_ratio,
            lower_bound_holds: epsilon > 0.0 && min_ratio > 0.5,
            residual_fit,
            delta,
            delta_required,
            delta_ok: delta.is_some_and(|dl| dl >= delta_required),
            taus,
            psi_lr,
            residual_lr,
            log,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemoConfig {
    pub q: f64,
    pub r: f64,
    pub epsilon: Option<f64>,
    pub tau0: f64,
    pub tau1: f64,
    pub dtau: f64,
    pub rho_max: f64,
    pub drho: f64,
    /// Window for the linearized growth-rate check.
    pub growth_window: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            q: 2.0,
            r: 10.0,
            epsilon: None,
            tau0: -12.0,
            tau1: -2.0,
            dtau: DEFAULT_DTAU,
            rho_max: 16.0,
            drho: 0.01,
            growth_window: 5.0,
        }
    }
}

/// A measured quantity against its target; `pass` records the comparison
/// stated next to each check in [`DemoChecks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn within(value: f64, target: f64, tolerance: f64) -> Self {
        Check { value, target, tolerance, pass: (value - target).abs() <= tolerance }
    }

    fn at_least(value: f64, target: f64) -> Self {
        Check { value, target, tolerance: 0.0, pass: value >= target }
    }

    fn at_most(value: f64, target: f64) -> Self {
        Check { value, target, tolerance: 0.0, pass: value <= target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemoChecks {
    /// Matrix top eigenvalue against `λ̄`, relative tolerance 1e-4.
    pub eigenvalue_agreement: Check,
    /// `1/(p-1) - d/(2r) - λ̄ > 0`.
    pub feasibility: Check,
    /// `sup_τ sup_ρ |v(τ) - Ū|` for `v(τ0) = Ū`, at most `1e-5 (1 + sup|Ū|)`.
    pub static_drift: Check,
    /// Growth rate of the linearized flow from the unstable mode, `λ̄ ± 1e-3`.
    pub growth_rate: Check,
    /// Lower bound ratio, above 0.5.
    pub lower_bound: Check,
    /// Residual exponent `δ` at least `½ min(p-1, 1) λ̄`.
    pub residual_exponent: Check,
    /// Log–log slope of `‖u_1 - u_2‖_{L^r}(t)`, within 10% of prediction.
    pub separation_slope: Check,
    /// Coefficient of determination of that fit, at least 0.99.
    pub slope_r_squared: Check,
    /// Decades of physical time covered, at least 2.
    pub decades: Check,
}

impl DemoChecks {
    pub fn all_pass(&self) -> bool {
        [
            self.eigenvalue_agreement,
            self.feasibility,
            self.static_drift,
            self.growth_rate,
            self.lower_bound,
            self.residual_exponent,
            self.separation_slope,
            self.slope_r_squared,
            self.decades,
        ]
        .iter()
        .all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub d: u32,
    pub p: f64,
    pub q_c: f64,
    pub alpha_star: f64,
    pub alpha_bar: f64,
    pub lambda_bar: f64,
    pub lambda_bar_matrix: f64,
    pub second_eigenvalue: f64,
    pub eps_target: f64,
    pub ell_bar: f64,
    pub epsilon: f64,
    pub epsilon_halvings: usize,
    pub predicted_slope: f64,
    pub fitted_slope: f64,
    pub checks: DemoChecks,
    /// `(t, ‖u_1(t) - u_2(t)‖_{L^r})` along the window.
    pub separation: Vec<(f64, f64)>,
    pub pass: bool,
}

impl DemoReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Two distinct solutions with the same singular initial datum: the static
/// expander `Ū` and `Ū + ψ` along its ancient unstable branch, compared in
/// physical variables.
pub fn nonuniqueness_demo(params: &ProblemParams, config: DemoConfig) -> Result<DemoReport> {
    if !params.p_jl.exceeds(params.p) {
        return Err(Error::NoUnstableExpander { p: params.p });
    }
    if !(params.p > params.p_fujita) {
        return domain(format!("p = {} must exceed the Fujita exponent {}", params.p, params.p_fujita));
    }
    let (q, r) = (config.q, config.r);
    check_feasibility(params, 0.0, q, r)?;
    let bound = params.scaling_rate(r);
    if !(bound > 0.0) {
        return Err(Error::Infeasible(format!("1/(p-1) - d/(2r) = {bound} leaves no room for an unstable mode")));
    }
    if !(config.tau1 > config.tau0) {
        return domain(format!("tau1 = {} must exceed tau0 = {}", config.tau1, config.tau0));
    }
    let grid = RadialGrid::uniform(config.rho_max, config.drho)?;
    let eps_target = 0.5 * bound;
    let ux = select_unstable_expander(params, eps_target, &grid)?;
    let lambda_bar = ux.lambda_bar;
    let feas = check_feasibility(params, lambda_bar, q, r)?;
    let lambda_bar_matrix = matrix_top_eigenvalue(ux.alpha_bar, params, &grid)?;
    let alpha_star = ux.alpha_star.alpha_star.unwrap_or(f64::NAN);
    let ubar = ux.profile.u.clone();
    let sup_u = ux.profile.max_abs_u;
    let ell_bar = ux.profile.ell;
    let robin = profile_robin(&ux.profile);
    let v1 = EvolutionState::from_profile(config.tau0, &ux.profile, 1.0)?;
    let potential = PotentialField::new(ux.profile);

    let opts = EvolveOptions { dtau: config.dtau, q, r };
    let static_log = evolve_similarity(&v1, config.tau1, params, opts, Some(&ubar))?;
    let drift = static_log.rows.iter().fold(0.0f64, |m, row| m.max(row.dist_ref));

    let w0 = EvolutionState::new(0.0, grid.clone(), ux.eigenfunction.f.clone())?.with_robin(robin);
    let lin_log = linearized_evolve(&w0, &potential, config.growth_window, opts)?;
    let growth = lin_log.growth_rate(Norm::L2w, 0.0, config.growth_window)?;

    let branch = ancient_branch(
        &potential,
        &ux.eigenfunction,
        lambda_bar,
        AncientOptions {
            tau0: config.tau0,
            tau1: config.tau1,
            dtau: config.dtau,
            q,
            r,
            epsilon: config.epsilon,
            ..AncientOptions::default()
        },
    )?;

    let separation: Vec<(f64, f64)> = branch
        .taus
        .iter()
        .zip(&branch.psi_lr)
        .map(|(&tau, &n)| to_physical_norm(n, tau, r, params))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        separation.iter().filter(|(_, n)| *n > 0.0).map(|(t, n)| (t.ln(), n.ln())).unzip();
    let fit = line_fit(&lx, &ly)?;
    let predicted_slope = -(bound - lambda_bar);

    let checks = DemoChecks {
        eigenvalue_agreement: Check::within(lambda_bar_matrix, lambda_bar, 1e-4 * lambda_bar.abs()),
        feasibility: Check { value: feas.slack, target: 0.0, tolerance: 0.0, pass: feas.satisfied },
        static_drift: Check::at_most(drift, 1e-5 * (1.0 + sup_u)),
        growth_rate: Check::within(growth.slope, lambda_bar, 1e-3),
        lower_bound: Check { value: branch.lower_bound_min_ratio, target: 0.5, tolerance: 0.0, pass: branch.lower_bound_holds },
        residual_exponent: Check::at_least(branch.delta.unwrap_or(f64::NEG_INFINITY), branch.delta_required),
        separation_slope: Check::within(fit.slope, predicted_slope, 0.1 * predicted_slope.abs()),
        slope_r_squared: Check::at_least(fit.r_squared, 0.99),
        decades: Check::at_least((config.tau1 - config.tau0) / std::f64::consts::LN_10, 2.0),
    };
    let pass = checks.all_pass();
    Ok(DemoReport {
        config,
        d: params.d,
        p: params.p,
        q_c: params.q_c,
        alpha_star,
        alpha_bar: ux.alpha_bar,
        lambda_bar,
        lambda_bar_matrix,
        second_eigenvalue: ux.second_eigenvalue,
        eps_target,
        ell_bar,
        epsilon: branch.epsilon,
        epsilon_halvings: branch.halvings,
        predicted_slope,
        fitted_slope: fit.slope,
        checks,
        separation,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derived_exponents;

    #[test]
    fn operator_is_exact_on_quartics() {
        // v = 1 + ρ² + ρ⁴: L_0 v has closed form, and the stencils are exact
        // on quartics away from the boundary rows
        let params = derived_exponents(5, 3.0).unwrap();
        let grid = RadialGrid::uniform(10.0, 0.05).unwrap();
        let a = linear_operator(&params, &grid, None, 0.1).unwrap();
        let x = grid.nodes();
        let v: Vec<f64> = x.iter().map(|r| 1.0 + r * r + r.powi(4)).collect();
        let av = a.matvec(&v);
        let d = 5.0;
        for i in 0..x.len() - 2 {
            let r = x[i];
            let exact = 2.0 * d + 4.0 * (d + 2.0) * r * r + r * r * (1.0 + 2.0 * r * r) + 0.5 * v[i];
            assert!((av[i] - exact).abs() < 1e-8 * (1.0 + exact.abs()), "row {i}: {} vs {exact}", av[i]);
        }
    }

    #[test]
    fn zero_is_fixed() {
        let params = derived_exponents(3, 2.0).unwrap();
        let grid = RadialGrid::uniform(10.0, 0.05).unwrap();
        let s = EvolutionState::new(0.0, grid.clone(), vec![0.0; grid.len()]).unwrap();
        let next = step_imex(&s, 0.01, &params, None).unwrap();
        assert!(next.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stability_cap_rejects_large_steps() {
        let params = derived_exponents(3, 2.0).unwrap();
        let grid = RadialGrid::uniform(10.0, 0.05).unwrap();
        let s = EvolutionState::new(0.0, grid.clone(), vec![10.0; grid.len()]).unwrap();
        // sup |∂N/∂v| = 2 * 10 = 20, cap 0.025
        match step_imex(&s, 0.05, &params, None) {
            Err(Error::StabilityCap { suggested, .. }) => assert!((suggested - 0.025).abs() < 1e-12),
            other => panic!("expected a stability-cap error, got {other:?}"),
        }
    }

    #[test]
    fn resample_reproduces_cubics() {
        let a = RadialGrid::uniform(10.0, 0.05).unwrap();
        let b = RadialGrid::uniform(10.0, 0.03).unwrap();
        let v: Vec<f64> = a.nodes().iter().map(|r| r * r * r - r).collect();
        let w = resample_cubic(&v, &a, &b).unwrap();
        for (r, x) in b.nodes().iter().zip(&w) {
            assert!((x - (r * r * r - r)).abs() < 1e-9);
        }
    }
}
