//! Spectrum of `L_α f = f'' + ((d-1)/ρ + ρ/2) f' + (1/(p-1) + V_α) f` in
//! `L²(ρ^{d-1} e^{ρ²/4} dρ)`, with `V_α = p|U_α|^{p-1}`.
//!
//! Shooting works on the Prüfer variables `f = R sin θ`, `f' = s R cos θ`
//! integrated together with the profile, so no stored profile is needed and
//! the exponentially separated branches never meet in raw form. The number of
//! zeros of the regular solution on `(0, ρ_max]` equals the number of
//! eigenvalues above `λ`. A finite-volume discretization of the symmetrized
//! operator serves as an independent check.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exponents::{signed_pow, ProblemParams};
use crate::grid::RadialGrid;
use crate::ode::{integrate, Tolerances};
use crate::profile::{sample_profile, series_coefficients, shoot_profile, start_radius, ExpanderProfile, DEFAULT_RHO0};
use crate::quadrature::simpson;
use crate::tridiag::SymTridiagonal;

#[derive(Debug, Clone, Serialize)]
pub struct PotentialField {
    pub profile: ExpanderProfile,
    pub v: Vec<f64>,
    pub sup_norm: f64,
}

impl PotentialField {
    pub fn new(profile: ExpanderProfile) -> Self {
        let v = profile.potential();
        let sup_norm = v.iter().fold(0.0f64, |m, x| m.max(*x));
        PotentialField { profile, v, sup_norm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shooting,
    Matrix,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Shooting => "shooting",
            Method::Matrix => "matrix",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub rho: Vec<f64>,
    /// Normalized by `f(0) = 1`.
    pub f: Vec<f64>,
    pub l2w_norm: f64,
    pub zero_count: usize,
    /// Phase mismatch where the forward and backward runs are joined.
    pub match_residual: f64,
    pub method: Method,
}

impl EigenPair {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,f\n");
        for (r, f) in self.rho.iter().zip(&self.f) {
            s.push_str(&format!("{r},{f}\n"));
        }
        s
    }
}

/// Phase state at `ρ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEnd {
    pub theta: f64,
    pub ln_r: f64,
    /// Zeros of the regular solution on `(0, ρ_max]`.
    pub zero_count: usize,
    /// Mismatch with the decaying branch, `-(f' - g f)/sqrt(g² + s²)` with
    /// `g` the asymptotic logarithmic derivative; smooth in `λ`.
    pub miss: f64,
}

/// Regular solution of `(L_α - λ) f = 0` in Prüfer form.
#[derive(Debug, Clone)]
pub struct Shooter {
    pub params: ProblemParams,
    pub alpha: f64,
    pub rho_max: f64,
    pub rho0: f64,
    s: f64,
}

impl Shooter {
    pub fn new(alpha: f64, params: &ProblemParams, rho_max: f64) -> Result<Self> {
        Shooter::with_start(alpha, params, rho_max, start_radius(alpha, params, DEFAULT_RHO0))
    }

    pub fn with_start(alpha: f64, params: &ProblemParams, rho_max: f64, rho0: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return domain(format!("shooting value alpha = {alpha} must be non-negative"));
        }
        if !(rho_max > 1.0) {
            return domain(format!("rho_max = {rho_max} is too small"));
        }
        let s = (1.0 + params.inv_pm1() + params.p * alpha.powf(params.p - 1.0)).sqrt();
        Ok(Shooter { params: *params, alpha, rho_max, rho0, s })
    }

    fn initial_state(&self, lambda: f64) -> [f64; 4] {
        let (d, p, a) = (self.params.dim(), self.params.p, self.alpha);
        let (c2, c4) = series_coefficients(a, &self.params);
        let v0 = p * a.powf(p - 1.0);
        let v2 = if a > 0.0 { p * (p - 1.0) * a.powf(p - 2.0) * c2 } else { 0.0 };
        let k0 = self.params.inv_pm1() + v0 - lambda;
        let b2 = -k0 / (2.0 * d);
        let b4 = -(b2 + k0 * b2 + v2) / (4.0 * d + 8.0);
        let r = self.rho0;
        let r2 = r * r;
        let u = a + c2 * r2 + c4 * r2 * r2;
        let du = 2.0 * c2 * r + 4.0 * c4 * r2 * r;
        let f = 1.0 + b2 * r2 + b4 * r2 * r2;
        let df = 2.0 * b2 * r + 4.0 * b4 * r2 * r;
        let theta = (self.s * f).atan2(df);
        let ln_r = (f * f + (df / self.s).powi(2)).sqrt().ln();
        [u, du, theta, ln_r]
    }

    fn rhs(&self, lambda: f64) -> impl Fn(f64, &[f64; 4]) -> [f64; 4] + '_ {
        let params = self.params;
        let s = self.s;
        let (d, p) = (params.dim(), params.p);
        move |rho, y| {
            let a = (d - 1.0) / rho + 0.5 * rho;
            let b = params.inv_pm1() + p * y[0].abs().powf(p - 1.0) - lambda;
            let (sn, cs) = y[2].sin_cos();
            [
                y[1],
                -a * y[1] - y[0] * params.inv_pm1() - signed_pow(y[0], p),
                s * cs * cs + (b / s) * sn * sn + a * sn * cs,
                (s - b / s) * sn * cs - a * cs * cs,
            ]
        }
    }

    fn run(&self, lambda: f64, outputs: &[f64]) -> Result<Vec<[f64; 4]>> {
        integrate(self.rhs(lambda), self.rho0, self.initial_state(lambda), outputs, &Tolerances::default())
    }

    /// Logarithmic derivative of the decaying branch at `ρ`, to `O(ρ^{-3})`.
    fn decaying_log_derivative(&self, lambda: f64, rho: f64) -> f64 {
        -0.5 * rho + 2.0 * (-lambda - 0.5 * self.params.dim() + self.params.inv_pm1()) / rho
    }

    pub fn phase_end(&self, lambda: f64) -> Result<PhaseEnd> {
        let y = self.run(lambda, &[self.rho_max])?[0];
        let (theta, ln_r) = (y[2], y[3]);
        let g = self.decaying_log_derivative(lambda, self.rho_max);
        let (sn, cs) = theta.sin_cos();
        let miss = ln_r.exp() * (g * sn - self.s * cs) / (g * g + self.s * self.s).sqrt();
        Ok(PhaseEnd {
            theta,
            ln_r,
            zero_count: (theta / PI).floor().max(0.0) as usize,
            miss,
        })
    }

    pub fn zero_count(&self, lambda: f64) -> Result<usize> {
        Ok(self.phase_end(lambda)?.zero_count)
    }

    /// Regular solution at `lambda` sampled on `grid`, with `f(0) = 1`,
    /// by forward integration only.
    pub fn solution(&self, lambda: f64, grid: &RadialGrid) -> Result<Vec<f64>> {
        let nodes = grid.nodes();
        let split = nodes.iter().position(|&r| r > self.rho0).unwrap_or(nodes.len());
        let ys = self.run(lambda, &nodes[split..])?;
        let mut f = vec![1.0; split];
        f.extend(ys.iter().map(|y| y[3].exp() * y[2].sin()));
        Ok(f)
    }

    /// Radius beyond which forward shooting is swamped by the growing
    /// branch: their ratio `~ ρ^{4λ+d-2} e^{ρ²/4}` reaches `e^{4}` there.
    fn matching_radius(&self, lambda: f64) -> f64 {
        let k = 4.0 * lambda + self.params.dim() - 2.0;
        let excess = |r: f64| 0.25 * r * r + k * r.ln() - 4.0;
        if excess(self.rho_max) <= 0.0 {
            return self.rho_max;
        }
        let (mut lo, mut hi) = (1.0, self.rho_max);
        if excess(lo) > 0.0 {
            return lo;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Eigenfunction at an eigenvalue `lambda`: forward from the origin up to
    /// the matching radius, backward from `ρ_max` on the decaying branch
    /// beyond it. Returns the samples (`f(0) = 1`) and the phase mismatch
    /// `|sin(θ_fwd - θ_bwd)|` at the junction.
    pub fn eigenfunction(&self, lambda: f64, grid: &RadialGrid) -> Result<(Vec<f64>, f64)> {
        let nodes = grid.nodes();
        let n = nodes.len();
        let split = nodes.iter().position(|&r| r > self.rho0).unwrap_or(n);
        let fwd = self.run(lambda, &nodes[split..])?;
        let state = |i: usize| -> [f64; 4] {
            if i < split {
                let (c2, _) = series_coefficients(self.alpha, &self.params);
                [self.alpha + c2 * nodes[i] * nodes[i], 2.0 * c2 * nodes[i], PI / 2.0, 0.0]
            } else {
                fwd[i - split]
            }
        };
        let mut f: Vec<f64> = (0..n)
            .map(|i| if i < split { 1.0 } else { fwd[i - split][3].exp() * fwd[i - split][2].sin() })
            .collect();
        let rho_m = self.matching_radius(lambda);
        let im = nodes.partition_point(|&r| r <= rho_m).saturating_sub(1).max(split);
        if im + 1 >= n {
            return Ok((f, 0.0));
        }

        // backward run in x = -ρ, profile taken from the forward samples
        let (d, p, s) = (self.params.dim(), self.params.p, self.s);
        let inv = self.params.inv_pm1();
        let u_at = |rho: f64| -> f64 {
            let j = nodes.partition_point(|&r| r <= rho).clamp(1, n - 1) - 1;
            let (a, b) = (state(j), state(j + 1));
            let h = nodes[j + 1] - nodes[j];
            let t = (rho - nodes[j]) / h;
            let (t2, t3) = (t * t, t * t * t);
            (2.0 * t3 - 3.0 * t2 + 1.0) * a[0]
                + (t3 - 2.0 * t2 + t) * h * a[1]
                + (-2.0 * t3 + 3.0 * t2) * b[0]
                + (t3 - t2) * h * b[1]
        };
        let rhs = |x: f64, y: &[f64; 2]| -> [f64; 2] {
            let rho = -x;
            let a = (d - 1.0) / rho + 0.5 * rho;
            let b = inv + p * u_at(rho).abs().powf(p - 1.0) - lambda;
            let (sn, cs) = y[0].sin_cos();
            [
                -(s * cs * cs + (b / s) * sn * sn + a * sn * cs),
                -((s - b / s) * sn * cs - a * cs * cs),
            ]
        };
        let g = self.decaying_log_derivative(lambda, self.rho_max);
        let y0 = [s.atan2(g), (1.0 + (g / s).powi(2)).sqrt().ln()];
        let xs: Vec<f64> = nodes[im..].iter().rev().map(|r| -r).collect();
        let bwd = integrate(rhs, -self.rho_max, y0, &xs, &Tolerances::default())?;
        let junction = bwd[bwd.len() - 1];
        let fm = state(im);
        let dtheta = fm[2] - junction[0];
        let scale = (fm[3] - junction[1]).exp() * dtheta.cos();
        for (k, y) in bwd.iter().enumerate() {
            let i = n - 1 - k;
            if i > im {
                f[i] = scale * y[1].exp() * y[0].sin();
            }
        }
        Ok((f, dtheta.sin().abs()))
    }

    /// Largest `λ` needed: above it the solution has no zero.
    fn upper_bound(&self) -> Result<f64> {
        let mut hi = self.params.inv_pm1() + self.params.p * self.alpha.powf(self.params.p - 1.0) + 1.0;
        for _ in 0..60 {
            if self.zero_count(hi)? == 0 {
                return Ok(hi);
            }
            hi = 2.0 * hi + 1.0;
        }
        Err(Error::BadBracket("no eigenvalue-free upper bound found".into()))
    }

    /// `λ` with at least `k + 1` zeros, below `start`.
    fn lower_bound(&self, k: usize, start: f64) -> Result<f64> {
        let mut step = 1.0;
        let mut lo = start - step;
        for _ in 0..40 {
            if self.zero_count(lo)? > k {
                return Ok(lo);
            }
            step *= 2.0;
            lo = start - step;
        }
        Err(Error::BadBracket(format!("eigenvalue index {k} not bracketed from below")))
    }

    /// Narrows `(lo, hi)` with `count(lo) > k >= count(hi)` by bisection
    /// on the zero count until `hi - lo <= width`.
    fn isolate(&self, k: usize, mut lo: f64, mut hi: f64, width: f64) -> Result<(f64, f64)> {
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.zero_count(mid)? > k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, hi))
    }

    /// Root of the miss function in a bracket holding exactly one eigenvalue.
    fn refine(&self, mut lo: f64, mut hi: f64) -> Result<f64> {
        let mut flo = self.phase_end(lo)?.miss;
        let mut fhi = self.phase_end(hi)?.miss;
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        if flo * fhi > 0.0 {
            return Err(Error::EmptyBracket { lo, hi });
        }
        // Illinois variant of regula falsi; (lo, hi) need not stay ordered
        for _ in 0..100 {
            let x = hi - fhi * (hi - lo) / (fhi - flo);
            let fx = self.phase_end(x)?.miss;
            if fx == 0.0 {
                return Ok(x);
            }
            if fx * fhi < 0.0 {
                lo = hi;
                flo = fhi;
            } else {
                flo *= 0.5;
            }
            hi = x;
            fhi = fx;
            if (hi - lo).abs() <= 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(if flo.abs() < fhi.abs() { lo } else { hi })
    }

    /// The `k`-th largest eigenvalue (`k = 0` is the top one).
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        let hi = self.upper_bound()?;
        let lo = self.lower_bound(k, hi.min(0.0))?;
        let (lo, hi) = self.isolate(k, lo, hi, 1e-8)?;
        match self.refine(lo, hi) {
            Ok(l) => Ok(l),
            // fall back to pure count bisection
            Err(_) => {
                let (lo, hi) = self.isolate(k, lo, hi, 1e-14)?;
                Ok(0.5 * (lo + hi))
            }
        }
    }
}

fn count_sign_changes(f: &[f64]) -> usize {
    let mut last = 0.0;
    let mut n = 0;
    for &v in f {
        if v != 0.0 {
            if last != 0.0 && v.signum() != last {
                n += 1;
            }
            last = v.signum();
        }
    }
    n
}

/// `‖f‖` in `L²(ρ^{d-1} e^{ρ²/4})` on a uniform grid.
pub fn weighted_l2(f: &[f64], grid: &RadialGrid, d: u32) -> f64 {
    let h = grid.step().unwrap_or_else(|| grid.rho_max() / (grid.len() - 1) as f64);
    let dm1 = f64::from(d) - 1.0;
    let vals: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(f)
        .map(|(&r, &v)| if r == 0.0 { 0.0 } else { v * v * (dm1 * r.ln() + 0.25 * r * r).exp() })
        .collect();
    simpson(&vals, h).sqrt()
}

fn eigenpair(shooter: &Shooter, lambda: f64, grid: &RadialGrid) -> Result<EigenPair> {
    let (f, match_residual) = shooter.eigenfunction(lambda, grid)?;
    Ok(EigenPair {
        lambda,
        match_residual,
        rho: grid.nodes().to_vec(),
        l2w_norm: weighted_l2(&f, grid, shooter.params.d),
        zero_count: count_sign_changes(&f),
        f,
        method: Method::Shooting,
    })
}

pub fn neutral_zero_count(alpha: f64, params: &ProblemParams, grid: &RadialGrid) -> Result<usize> {
    Shooter::new(alpha, params, grid.rho_max())?.zero_count(0.0)
}

/// Eigenpair in a bracket that must contain exactly one eigenvalue.
pub fn eigenvalue_shoot(
    alpha: f64,
    params: &ProblemParams,
    grid: &RadialGrid,
    lambda_bracket: (f64, f64),
) -> Result<EigenPair> {
    let (lo, hi) = lambda_bracket;
    if !(lo < hi) {
        return Err(Error::BadBracket(format!("empty lambda interval ({lo}, {hi})")));
    }
    let shooter = Shooter::new(alpha, params, grid.rho_max())?;
    let (clo, chi) = (shooter.zero_count(lo)?, shooter.zero_count(hi)?);
    match clo.saturating_sub(chi) {
        0 => return Err(Error::EmptyBracket { lo, hi }),
        1 => {}
        n => {
            return Err(Error::BadBracket(format!(
                "({lo}, {hi}) contains {n} eigenvalues; exactly one is required"
            )))
        }
    }
    let (a, b) = shooter.isolate(chi, lo, hi, 1e-8 * (1.0 + lo.abs().max(hi.abs())))?;
    let lambda = match shooter.refine(a, b) {
        Ok(l) => l,
        Err(_) => {
            let (a, b) = shooter.isolate(chi, a, b, 1e-14)?;
            0.5 * (a + b)
        }
    };
    eigenpair(&shooter, lambda, grid)
}

/// The largest eigenvalue with its eigenfunction.
pub fn top_eigenpair(alpha: f64, params: &ProblemParams, grid: &RadialGrid) -> Result<EigenPair> {
    let shooter = Shooter::new(alpha, params, grid.rho_max())?;
    let lambda = shooter.eigenvalue(0)?;
    eigenpair(&shooter, lambda, grid)
}

pub fn top_eigenvalue(alpha: f64, params: &ProblemParams, rho_max: f64) -> Result<f64> {
    Shooter::new(alpha, params, rho_max)?.eigenvalue(0)
}

/// All positive eigenvalues, descending.
pub fn positive_spectrum(alpha: f64, params: &ProblemParams, grid: &RadialGrid) -> Result<Vec<EigenPair>> {
    if !(alpha > 0.0) {
        return domain(format!("alpha = {alpha} must be positive"));
    }
    let shooter = Shooter::new(alpha, params, grid.rho_max())?;
    let n = shooter.zero_count(0.0)?;
    let hi = if n > 0 { shooter.upper_bound()? } else { 0.0 };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = shooter.isolate(k, 0.0, hi, 1e-8)?;
        let lambda = match shooter.refine(a, b) {
            Ok(l) => l,
            Err(_) => {
                let (a, b) = shooter.isolate(k, a, b, 1e-14)?;
                0.5 * (a + b)
            }
        };
        out.push(eigenpair(&shooter, lambda, grid)?);
    }
    Ok(out)
}

pub const MATRIX_MAX_SPACING: f64 = 0.05;
pub const MATRIX_CUTOFF: f64 = -1.0;

fn assemble(params: &ProblemParams, h: f64, n: usize, v: &[f64]) -> SymTridiagonal {
    let dm1 = params.dim() - 1.0;
    let ln_w = |r: f64| dm1 * r.ln() + 0.25 * r * r;
    let centre = |i: usize| (i as f64 + 0.5) * h;
    let h2 = h * h;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n {
        let lw = ln_w(centre(i));
        let right = (ln_w((i + 1) as f64 * h) - lw).exp();
        let left = if i == 0 { 0.0 } else { (ln_w(i as f64 * h) - lw).exp() };
        // Dirichlet at rho_max through the mirrored ghost value
        let right = if i + 1 == n { 2.0 * right } else { right };
        diag[i] = -(left + right) / h2 + params.inv_pm1() + v[i];
        if i + 1 < n {
            off[i] = (ln_w((i + 1) as f64 * h) - 0.5 * (lw + ln_w(centre(i + 1)))).exp() / h2;
        }
    }
    SymTridiagonal::new(diag, off)
}

/// Second-order symmetric matrices on spacings `h` and `h/2`, combined by
/// Richardson extrapolation. `potential(ρ)` must be defined at the centres.
fn matrix_pair(
    params: &ProblemParams,
    rho_max: f64,
    h: f64,
    potential: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(SymTridiagonal, SymTridiagonal)> {
    let n = (rho_max / h).round() as usize;
    let h = rho_max / n as f64;
    // all centres of both matrices lie on the h/4 lattice
    let lattice: Vec<f64> = (1..4 * n).map(|j| j as f64 * 0.25 * h).collect();
    let v = potential(&lattice)?;
    let coarse: Vec<f64> = (0..n).map(|i| v[4 * i + 1]).collect();
    let fine: Vec<f64> = (0..2 * n).map(|i| v[2 * i]).collect();
    Ok((assemble(params, h, n, &coarse), assemble(params, h / 2.0, 2 * n, &fine)))
}

fn richardson_spectrum(coarse: &SymTridiagonal, fine: &SymTridiagonal, cutoff: f64) -> Vec<f64> {
    let count = fine.eigenvalues_above(cutoff - 0.5).len().max(1);
    (0..count)
        .map(|k| (4.0 * fine.kth_largest(k) - coarse.kth_largest(k)) / 3.0)
        .filter(|l| *l > cutoff)
        .collect()
}

fn check_matrix_grid(grid: &RadialGrid) -> Result<f64> {
    let h = grid
        .step()
        .ok_or_else(|| Error::Domain("matrix spectrum requires a uniform grid".into()))?;
    if h > MATRIX_MAX_SPACING {
        return Err(Error::Resolution { spacing: h, max: MATRIX_MAX_SPACING });
    }
    Ok(h)
}

/// Eigenvalues above `cutoff` (default use: [`MATRIX_CUTOFF`]), descending.
pub fn matrix_spectrum(alpha: f64, params: &ProblemParams, grid: &RadialGrid, cutoff: f64) -> Result<Vec<f64>> {
    let h = check_matrix_grid(grid)?;
    let p = params.p;
    let (c, f) = matrix_pair(params, grid.rho_max(), h, &|rhos| {
        Ok(sample_profile(alpha, params, rhos)?
            .into_iter()
            .map(|(u, _)| p * u.abs().powf(p - 1.0))
            .collect())
    })?;
    Ok(richardson_spectrum(&c, &f, cutoff))
}

/// Largest matrix eigenvalue, whatever its sign.
pub fn matrix_top_eigenvalue(alpha: f64, params: &ProblemParams, grid: &RadialGrid) -> Result<f64> {
    let h = check_matrix_grid(grid)?;
    let p = params.p;
    let (c, f) = matrix_pair(params, grid.rho_max(), h, &|rhos| {
        Ok(sample_profile(alpha, params, rhos)?
            .into_iter()
            .map(|(u, _)| p * u.abs().powf(p - 1.0))
            .collect())
    })?;
    Ok((4.0 * f.kth_largest(0) - c.kth_largest(0)) / 3.0)
}

/// Matrix spectrum with an arbitrary potential (`V ≡ 0` gives `L_0`).
pub fn matrix_spectrum_with(
    params: &ProblemParams,
    grid: &RadialGrid,
    potential: impl Fn(f64) -> f64,
    cutoff: f64,
) -> Result<Vec<f64>> {
    let h = check_matrix_grid(grid)?;
    let (c, f) = matrix_pair(params, grid.rho_max(), h, &|rhos| Ok(rhos.iter().map(|&r| potential(r)).collect()))?;
    Ok(richardson_spectrum(&c, &f, cutoff))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaStarResult {
    pub alpha_star: Option<f64>,
    pub bracket: (f64, f64),
    pub zero_count_lo: usize,
    pub zero_count_hi: usize,
    pub tolerance: f64,
    /// `(α, zero count)` on the coarse scan of the search interval.
    pub scan: Vec<(f64, usize)>,
    /// Every change of the zero count between adjacent scan points.
    pub transitions: Vec<(f64, f64, usize, usize)>,
    /// Set when the count is not monotone along the scan.
    pub non_monotone: bool,
}

const ALPHA_SCAN_POINTS: usize = 96;

pub fn find_alpha_star(
    params: &ProblemParams,
    bracket: (f64, f64),
    tol: f64,
    grid: &RadialGrid,
) -> Result<AlphaStarResult> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return domain(format!("need 0 < lo < hi and tol > 0, got ({lo}, {hi}), tol = {tol}"));
    }
    let rho_max = grid.rho_max();
    let count = |a: f64| Shooter::new(a, params, rho_max)?.zero_count(0.0);
    let c_lo = count(lo)?;
    if c_lo != 0 {
        return Err(Error::BadBracket(format!(
            "zero count at alpha = {lo} is already {c_lo}"
        )));
    }
    // geometric scan: the transition scale varies strongly with (d, p)
    let ratio = (hi / lo).powf(1.0 / (ALPHA_SCAN_POINTS - 1) as f64);
    let alphas: Vec<f64> = (0..ALPHA_SCAN_POINTS)
        .map(|i| if i + 1 == ALPHA_SCAN_POINTS { hi } else { lo * ratio.powi(i as i32) })
        .collect();
    let counts: Vec<usize> = alphas.par_iter().map(|&a| count(a)).collect::<Result<_>>()?;
    let scan: Vec<(f64, usize)> = alphas.iter().copied().zip(counts.iter().copied()).collect();
    let transitions: Vec<(f64, f64, usize, usize)> = scan
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| (w[0].0, w[1].0, w[0].1, w[1].1))
        .collect();
    let non_monotone = scan.windows(2).any(|w| w[1].1 < w[0].1);

    let first = scan.windows(2).position(|w| w[0].1 == 0 && w[1].1 > 0);
    let Some(i) = first else {
        return Ok(AlphaStarResult {
            alpha_star: None,
            bracket,
            zero_count_lo: 0,
            zero_count_hi: counts[counts.len() - 1],
            tolerance: tol,
            scan,
            transitions,
            non_monotone,
        });
    };
    let (mut a, mut b) = (scan[i].0, scan[i + 1].0);
    let mut c_hi = scan[i + 1].1;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let c = count(mid)?;
        if c == 0 {
            a = mid;
        } else {
            b = mid;
            c_hi = c;
        }
    }
    Ok(AlphaStarResult {
        alpha_star: Some(0.5 * (a + b)),
        bracket: (a, b),
        zero_count_lo: 0,
        zero_count_hi: c_hi,
        tolerance: tol,
        scan,
        transitions,
        non_monotone,
    })
}

pub const DEFAULT_ALPHA_BRACKET: (f64, f64) = (0.1, 50.0);
pub const DEFAULT_ALPHA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct UnstableExpander {
    pub alpha_star: AlphaStarResult,
    pub alpha_bar: f64,
    pub lambda_bar: f64,
    pub eps_target: f64,
    #[serde(skip)]
    pub profile: ExpanderProfile,
    #[serde(skip)]
    pub eigenfunction: EigenPair,
    /// `sup |V_ᾱ - V_{α*}|` on the grid.
    pub potential_gap: f64,
    /// Number of positive eigenvalues at `ᾱ` and the next eigenvalue below
    /// `λ̄`; a simple, isolated top eigenvalue has count 1 and a clear gap.
    pub positive_count: usize,
    pub second_eigenvalue: f64,
}

/// Picks `ᾱ` in `(α*, 1.1 α*]` with `0 < λ_top(ᾱ) < eps_target`, aiming at
/// `0.9 eps_target` by golden-section search.
pub fn select_unstable_expander(
    params: &ProblemParams,
    eps_target: f64,
    grid: &RadialGrid,
) -> Result<UnstableExpander> {
    if !params.p_jl.exceeds(params.p) {
        return Err(Error::NoUnstableExpander { p: params.p });
    }
    if !(eps_target > 0.0) {
        return domain(format!("eps_target = {eps_target} must be positive"));
    }
    let star = find_alpha_star(params, DEFAULT_ALPHA_BRACKET, 1e-9, grid)?;
    let Some(alpha_star) = star.alpha_star else {
        return Err(Error::NoUnstableExpander { p: params.p });
    };
    let rho_max = grid.rho_max();
    let target = 0.9 * eps_target;
    let lam = |a: f64| top_eigenvalue(a, params, rho_max);

    let a_lo = star.bracket.1;
    let a_hi = alpha_star * 1.1;
    let alpha_bar = if lam(a_hi)? <= target {
        a_hi
    } else {
        let obj = |a: f64| -> Result<f64> { Ok((lam(a)? - target).powi(2)) };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (a_lo, a_hi);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (obj(x1)?, obj(x2)?);
        while b - a > 1e-10 * alpha_star {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = obj(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = obj(x2)?;
            }
        }
        0.5 * (a + b)
    };

    let shooter = Shooter::new(alpha_bar, params, rho_max)?;
    let lambda_bar = shooter.eigenvalue(0)?;
    if !(lambda_bar > 0.0 && lambda_bar < eps_target) {
        return Err(Error::Infeasible(format!(
            "selected alpha = {alpha_bar} has top eigenvalue {lambda_bar} outside (0, {eps_target})"
        )));
    }
    let eigenfunction = eigenpair(&shooter, lambda_bar, grid)?;
    let positive_count = shooter.zero_count(0.0)?;
    let second_eigenvalue = shooter.eigenvalue(1)?;
    let profile = shoot_profile(alpha_bar, params, grid)?;
    let star_profile = shoot_profile(alpha_star, params, grid)?;
    let potential_gap = profile
        .potential()
        .iter()
        .zip(star_profile.potential())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(UnstableExpander {
        alpha_star: star,
        alpha_bar,
        lambda_bar,
        eps_target,
        profile,
        eigenfunction,
        potential_gap,
        positive_count,
        second_eigenvalue,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub alpha: f64,
    pub lambda: f64,
    pub zero_count: Option<usize>,
    pub method: Method,
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("alpha,lambda,zero_count,method\n");
    for r in rows {
        let zc = r.zero_count.map(|z| z.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", r.alpha, r.lambda, zc, r.method.as_str()));
    }
    s
}
