//! Shooting for the radial expander profile
//!
//! ```text
//! U'' + ((d-1)/ρ + ρ/2) U' + U/(p-1) + |U|^{p-1} U = 0,   U(0) = α, U'(0) = 0
//! ```
//!
//! and extraction of the tail constant `ℓ(α) = lim ρ^{2/(p-1)} U(ρ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exponents::{signed_pow, ProblemParams};
use crate::fit::least_squares;
use crate::grid::RadialGrid;
use crate::ode::{integrate, Tolerances};

pub const DEFAULT_RHO0: f64 = 1e-4;

/// Taylor coefficients `c2`, `c4` of `U = α + c2 ρ² + c4 ρ⁴ + …`.
pub fn series_coefficients(alpha: f64, params: &ProblemParams) -> (f64, f64) {
    let (d, p) = (params.dim(), params.p);
    let c2 = -(alpha * params.inv_pm1() + signed_pow(alpha, p)) / (2.0 * d);
    let c4 = -c2 * (1.0 + params.inv_pm1() + p * alpha.abs().powf(p - 1.0)) / (4.0 * d + 8.0);
    (c2, c4)
}

/// Start radius: the requested `rho0`, shrunk when the core of the profile
/// (length scale `(α^{p-1} + 1/(p-1))^{-1/2}`) is narrower.
pub fn start_radius(alpha: f64, params: &ProblemParams, rho0: f64) -> f64 {
    let core = (alpha.abs().powf(params.p - 1.0) + params.inv_pm1()).powf(-0.5);
    rho0.min(1e-3 * core)
}

pub fn series_start(alpha: f64, params: &ProblemParams, rho0: f64) -> Result<(f64, f64)> {
    if !(alpha >= 0.0) {
        return domain(format!("shooting value alpha = {alpha} must be non-negative"));
    }
    if !(rho0 > 0.0 && rho0 < 0.1) {
        return domain(format!("start radius rho0 = {rho0} must lie in (0, 0.1)"));
    }
    let (c2, c4) = series_coefficients(alpha, params);
    let r2 = rho0 * rho0;
    Ok((alpha + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * rho0 + 4.0 * c4 * r2 * rho0))
}

/// Right-hand side of the profile ODE as a first-order system.
#[inline]
pub(crate) fn profile_rhs(params: &ProblemParams, rho: f64, u: f64, du: f64) -> f64 {
    let a = (params.dim() - 1.0) / rho + 0.5 * rho;
    -a * du - u * params.inv_pm1() - signed_pow(u, params.p)
}

/// `(U, U')` at the ascending radii `rhos` (all `> 0` or `0` itself).
pub fn sample_profile(alpha: f64, params: &ProblemParams, rhos: &[f64]) -> Result<Vec<(f64, f64)>> {
    if alpha == 0.0 {
        return Ok(vec![(0.0, 0.0); rhos.len()]);
    }
    let rho0 = start_radius(alpha, params, DEFAULT_RHO0);
    let (u0, du0) = series_start(alpha, params, rho0)?;
    let split = rhos.iter().position(|&r| r > rho0).unwrap_or(rhos.len());
    let mut out: Vec<(f64, f64)> = rhos[..split]
        .iter()
        .map(|&r| {
            let (c2, c4) = series_coefficients(alpha, params);
            let r2 = r * r;
            (alpha + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * r + 4.0 * c4 * r2 * r)
        })
        .collect();
    let ys = integrate(
        |rho, y: &[f64; 2]| [y[1], profile_rhs(params, rho, y[0], y[1])],
        rho0,
        [u0, du0],
        &rhos[split..],
        &Tolerances::default(),
    )?;
    out.extend(ys.into_iter().map(|y| (y[0], y[1])));
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpanderProfile {
    pub alpha: f64,
    pub params: ProblemParams,
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub ell: f64,
    pub ell_uncertainty: f64,
    /// Largest pointwise ODE defect on interior nodes.
    pub residual_max: f64,
    pub max_abs_u: f64,
    /// Radii (linearly interpolated) where `U` changes sign.
    pub zero_crossings: Vec<f64>,
}

pub fn shoot_profile(alpha: f64, params: &ProblemParams, grid: &RadialGrid) -> Result<ExpanderProfile> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return domain(format!("shooting value alpha = {alpha} must be non-negative"));
    }
    let samples = sample_profile(alpha, params, grid.nodes())?;
    let (u, du): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let max_abs_u = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_crossings = grid
        .nodes()
        .windows(2)
        .zip(u.windows(2))
        .filter(|(_, w)| w[0] * w[1] < 0.0)
        .map(|(r, w)| r[0] + (r[1] - r[0]) * w[0] / (w[0] - w[1]))
        .collect();
    let mut profile = ExpanderProfile {
        alpha,
        params: *params,
        grid: grid.clone(),
        u,
        du,
        ell: 0.0,
        ell_uncertainty: 0.0,
        residual_max: 0.0,
        max_abs_u,
        zero_crossings,
    };
    profile.residual_max = ode_defect(&profile);
    let (ell, unc) = estimate_ell(&profile)?;
    profile.ell = ell;
    profile.ell_uncertainty = unc;
    Ok(profile)
}

/// Pointwise ODE defect with `U''` from a sixth-order central difference of
/// the sampled `U'`; max over nodes with a full stencil.
pub fn ode_defect(profile: &ExpanderProfile) -> f64 {
    const W: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let rho = profile.grid.nodes();
    let n = rho.len();
    let uniform = profile.grid.step();
    let mut worst = 0.0f64;
    for i in 3..n.saturating_sub(3) {
        let d2 = match uniform {
            Some(h) => (0..7).map(|k| W[k] * profile.du[i + k - 3]).sum::<f64>() / h,
            None => {
                let w = crate::fd::fornberg(rho[i], &rho[i - 3..=i + 3], 1);
                (0..7).map(|k| w[1][k] * profile.du[i + k - 3]).sum::<f64>()
            }
        };
        let defect = d2 - profile_rhs(&profile.params, rho[i], profile.u[i], profile.du[i]);
        worst = worst.max(defect.abs());
    }
    worst
}

const WINDOWS: [(f64, f64); 2] = [(0.7, 0.85), (0.85, 1.0)];

/// Intercept and rms residual of `ρ^m U ≈ a + b ρ^{-2}` over `[lo, hi]·ρ_max`.
fn tail_window_fit(profile: &ExpanderProfile, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let m = profile.params.tail_power();
    let rmax = profile.grid.rho_max();
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    for (r, u) in profile.grid.nodes().iter().zip(&profile.u) {
        if *r >= lo * rmax && *r <= hi * rmax {
            rows.push([1.0, r.powi(-2)]);
            ys.push(r.powf(m) * u);
        }
    }
    let (c, res) = least_squares(&rows, &ys)?;
    Ok((c[0], res))
}

/// `ℓ` from the last tail window and the discrepancy to the preceding one.
pub fn estimate_ell(profile: &ExpanderProfile) -> Result<(f64, f64)> {
    if profile.max_abs_u == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (l1, r1) = tail_window_fit(profile, WINDOWS[0].0, WINDOWS[0].1)?;
    let (l2, r2) = tail_window_fit(profile, WINDOWS[1].0, WINDOWS[1].1)?;
    let uncertainty = (l2 - l1).abs();
    let residual = r1.max(r2);
    let floor = 64.0 * f64::EPSILON * l2.abs().max(1e-300);
    if residual > 10.0 * uncertainty.max(floor) || !l2.is_finite() {
        return Err(Error::TailNotResolved { residual, uncertainty });
    }
    Ok((l2, uncertainty))
}

/// Power-law exponent `s` in `|U| ≈ c ρ^s (1 + k ρ^{-2})` over
/// `[ρ_max/2, ρ_max]`; `None` if `U` vanishes there.
pub fn tail_exponent(profile: &ExpanderProfile) -> Option<f64> {
    let rmax = profile.grid.rho_max();
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    for (r, u) in profile.grid.nodes().iter().zip(&profile.u) {
        if *r >= 0.5 * rmax {
            if *u == 0.0 {
                return None;
            }
            rows.push([1.0, r.ln(), r.powi(-2)]);
            ys.push(u.abs().ln());
        }
    }
    let sign = profile.u.last()?.signum();
    if profile.u.iter().rev().take(rows.len()).any(|v| v.signum() != sign) {
        return None;
    }
    least_squares(&rows, &ys).ok().map(|(c, _)| c[1])
}

impl ExpanderProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,u,du\n");
        for ((r, u), du) in self.grid.nodes().iter().zip(&self.u).zip(&self.du) {
            s.push_str(&format!("{r},{u},{du}\n"));
        }
        s
    }

    /// `p |U|^{p-1}` on the grid.
    pub fn potential(&self) -> Vec<f64> {
        let p = self.params.p;
        self.u.iter().map(|u| p * u.abs().powf(p - 1.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllRow {
    pub alpha: f64,
    pub ell: Option<f64>,
    pub uncertainty: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllSweep {
    pub rows: Vec<EllRow>,
    /// Largest `|ℓ(α_{i+1}) - ℓ(α_i)|` between adjacent successful rows.
    pub max_jump: f64,
}

impl EllSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,ell,uncertainty,residual,error\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.alpha,
                opt(r.ell),
                opt(r.uncertainty),
                opt(r.residual),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        s
    }
}

pub fn sweep_ell(alphas: &[f64], params: &ProblemParams, grid: &RadialGrid) -> Result<EllSweep> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return domain(format!("sweep values must be positive, got {a}"));
    }
    let rows: Vec<EllRow> = alphas
        .par_iter()
        .map(|&alpha| match shoot_profile(alpha, params, grid) {
            Ok(p) => EllRow {
                alpha,
                ell: Some(p.ell),
                uncertainty: Some(p.ell_uncertainty),
                residual: Some(p.residual_max),
                error: None,
            },
            Err(e) => EllRow {
                alpha,
                ell: None,
                uncertainty: None,
                residual: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let max_jump = rows
        .windows(2)
        .filter_map(|w| Some((w[1].ell? - w[0].ell?).abs()))
        .fold(0.0, f64::max);
    Ok(EllSweep { rows, max_jump })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derived_exponents;

    #[test]
    fn c2_identity() {
        let params = derived_exponents(5, 3.0).unwrap();
        for k in 0..10 {
            let alpha = 0.3 + 0.7 * k as f64;
            let (c2, _) = series_coefficients(alpha, &params);
            let r = c2 * 10.0 + alpha / 2.0 + alpha.powi(3);
            assert!(r.abs() <= 1e-14 * (1.0 + alpha.powi(3)));
        }
        let (c2, _) = series_coefficients(1.0, &params);
        assert!((c2 + 0.15).abs() < 1e-15);
    }

    #[test]
    fn zero_start_and_negative_alpha() {
        let params = derived_exponents(5, 3.0).unwrap();
        assert_eq!(series_start(0.0, &params, 1e-4).unwrap(), (0.0, 0.0));
        assert!(series_start(-1.0, &params, 1e-4).is_err());
        let prof = shoot_profile(0.0, &params, &RadialGrid::default()).unwrap();
        assert!(prof.u.iter().chain(&prof.du).all(|v| *v == 0.0));
        assert_eq!((prof.ell, prof.ell_uncertainty), (0.0, 0.0));
    }
}
