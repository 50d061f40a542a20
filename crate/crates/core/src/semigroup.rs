//! The free similarity semigroup `S_0(τ)`: heat flow for time `e^τ - 1`
//! followed by the rescaling `v(τ, ρ) = e^{τ/(p-1)} u(e^τ, e^{τ/2} ρ)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exponents::ProblemParams;
use crate::fit::{line_fit, LineFit};
use crate::grid::RadialGrid;
use crate::quadrature::{simpson, sphere_area, GaussLegendre};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialFunction {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    /// Power-law decay exponent used to extrapolate beyond `ρ_max`.
    pub tail_exponent: Option<f64>,
}

impl RadialFunction {
    pub fn new(grid: RadialGrid, values: Vec<f64>, tail_exponent: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("{} values on a grid of {} nodes", values.len(), grid.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("radial function has non-finite values");
        }
        Ok(RadialFunction { grid, values, tail_exponent })
    }

    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialFunction { grid: grid.clone(), values, tail_exponent: None }
    }

    /// Quintic Lagrange interpolation on the six nearest nodes; zero beyond
    /// `ρ_max`.
    pub fn eval(&self, rho: f64) -> f64 {
        let x = self.grid.nodes();
        let n = x.len();
        if rho > x[n - 1] || rho < 0.0 {
            return 0.0;
        }
        let j = x.partition_point(|&r| r <= rho).clamp(1, n - 1) - 1;
        let start = j.saturating_sub(2).min(n - 6);
        let mut s = 0.0;
        for a in start..start + 6 {
            let mut w = 1.0;
            for b in start..start + 6 {
                if a != b {
                    w *= (rho - x[b]) / (x[a] - x[b]);
                }
            }
            s += w * self.values[a];
        }
        s
    }
}

/// `∫_0^{ρ_max} |f|^γ ρ^{d-1} dρ` on the grid (Simpson when uniform).
pub fn radial_power_integral(grid: &RadialGrid, values: &[f64], gamma: f64, d: u32) -> f64 {
    let dm1 = f64::from(d) - 1.0;
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(values)
        .map(|(&r, &v)| if r == 0.0 { 0.0 } else { v.abs().powf(gamma) * r.powf(dm1) })
        .collect();
    match grid.step() {
        Some(h) => simpson(&integrand, h),
        None => grid
            .nodes()
            .windows(2)
            .zip(integrand.windows(2))
            .map(|(r, v)| 0.5 * (r[1] - r[0]) * (v[0] + v[1]))
            .sum(),
    }
}

/// `‖f‖_{L^γ(R^d)}` restricted to the ball of radius `ρ_max`.
pub fn truncated_lq_norm(grid: &RadialGrid, values: &[f64], gamma: f64, d: u32) -> f64 {
    (sphere_area(d - 1) * radial_power_integral(grid, values, gamma, d)).powf(1.0 / gamma)
}

/// `‖f‖_{L^γ(R^d)}` of a radial function.
pub fn lq_norm(f: &RadialFunction, gamma: f64, d: u32) -> Result<f64> {
    if !(gamma >= 1.0) {
        return domain(format!("Lebesgue exponent gamma = {gamma} must be at least 1"));
    }
    let mut integral = radial_power_integral(&f.grid, &f.values, gamma, d);
    if let Some(s) = f.tail_exponent {
        let k = gamma * s + f64::from(d);
        if k >= 0.0 {
            return Err(Error::DivergentNorm { gamma, tail_exponent: s, dimension: d });
        }
        let rmax = f.grid.rho_max();
        let last = f.values[f.values.len() - 1].abs();
        integral += last.powf(gamma) * rmax.powf(f64::from(d)) / (-k);
    }
    Ok((sphere_area(d - 1) * integral).powf(1.0 / gamma))
}

/// `A exp(-ρ² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianDatum {
    pub amplitude: f64,
    pub variance: f64,
}

impl GaussianDatum {
    pub fn new(amplitude: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return domain(format!("variance {variance} must be positive"));
        }
        Ok(GaussianDatum { amplitude, variance })
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.amplitude * (-rho * rho / (2.0 * self.variance)).exp()
    }

    pub fn lq_norm(&self, eta: f64, d: u32) -> f64 {
        let d = f64::from(d);
        self.amplitude.abs() * (2.0 * PI * self.variance / eta).powf(d / (2.0 * eta))
    }

    pub fn sample(&self, grid: &RadialGrid) -> RadialFunction {
        RadialFunction::from_fn(grid, |r| self.eval(r))
    }
}

/// Closed form of `S_0(τ)` on a Gaussian.
pub fn apply_s0_gaussian(tau: f64, g: GaussianDatum, params: &ProblemParams) -> Result<GaussianDatum> {
    if !(tau >= 0.0) {
        return domain(format!("tau = {tau} must be non-negative"));
    }
    let decay = (-tau).exp();
    let variance = 2.0 + (g.variance - 2.0) * decay;
    let amplitude = g.amplitude
        * (tau * (params.inv_pm1() - 0.5 * params.dim())).exp()
        * (g.variance / variance).powf(0.5 * params.dim());
    Ok(GaussianDatum { amplitude, variance })
}

const ANGULAR_TOL: f64 = 1e-8;
const MAX_ANGULAR_ORDER: usize = 1024;

struct AngularRules {
    rules: Vec<GaussLegendre>,
}

impl AngularRules {
    fn new() -> Self {
        let mut rules = Vec::new();
        let mut n = 8;
        while n <= MAX_ANGULAR_ORDER {
            rules.push(GaussLegendre::new(n));
            n *= 2;
        }
        AngularRules { rules }
    }

    /// `∫_0^π exp(-c (1 - cos θ)) sin^{d-2} θ dθ` with `c = rs/(2a)`.
    fn integral(&self, c: f64, d: u32) -> Result<f64> {
        let k = (d - 2) as i32;
        let theta_c = if c <= 20.0 { PI } else { (1.0 - 40.0 / c).acos() };
        let f = |t: f64| (-c * (1.0 - t.cos())).exp() * t.sin().powi(k);
        let mut prev = self.rules[0].integrate(0.0, theta_c, f);
        for rule in &self.rules[1..] {
            let cur = rule.integrate(0.0, theta_c, f);
            if (cur - prev).abs() <= ANGULAR_TOL * cur.abs() {
                return Ok(cur);
            }
            prev = cur;
        }
        let last = self.rules[self.rules.len() - 1].integrate(0.0, theta_c, f);
        Err(Error::Quadrature { achieved: ((last - prev) / last).abs() })
    }
}

/// `S_0(τ) f` by radial quadrature of the heat kernel, sampled on the grid
/// of `f`.
pub fn apply_s0(tau: f64, f: &RadialFunction, params: &ProblemParams) -> Result<RadialFunction> {
    if !(tau > 0.0) {
        return domain(format!("tau = {tau} must be positive"));
    }
    let d = params.d;
    let a = tau.exp_m1();
    let rules = AngularRules::new();
    let gl = GaussLegendre::new(8);
    let smax = f.grid.rho_max();
    let width = 40.0f64.sqrt() * 2.0 * a.sqrt();
    let panel = a.sqrt().min(0.5);
    let norm = (4.0 * PI * a).powf(-0.5 * f64::from(d)) * sphere_area(d - 2);
    let scale = (0.5 * tau).exp();
    let pref = (tau * params.inv_pm1()).exp();
    let dm1 = f64::from(d) - 1.0;

    let values: Vec<f64> = f
        .grid
        .nodes()
        .par_iter()
        .map(|&rho| -> Result<f64> {
            let r = scale * rho;
            let lo = (r - width).max(0.0);
            let hi = (r + width).min(smax);
            if hi <= lo {
                return Ok(0.0);
            }
            let panels = ((hi - lo) / panel).ceil().max(1.0) as usize;
            let step = (hi - lo) / panels as f64;
            let mut total = 0.0;
            for k in 0..panels {
                let (p0, p1) = (lo + k as f64 * step, lo + (k + 1) as f64 * step);
                let c = 0.5 * (p0 + p1);
                let hw = 0.5 * (p1 - p0);
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let s = c + hw * x;
                    let fs = f.eval(s);
                    if fs == 0.0 {
                        continue;
                    }
                    let ang = rules.integral(r * s / (2.0 * a), d)?;
                    total += w * hw * fs * s.powf(dm1) * (-(r - s).powi(2) / (4.0 * a)).exp() * ang;
                }
            }
            Ok(pref * norm * total)
        })
        .collect::<Result<_>>()?;
    Ok(RadialFunction { grid: f.grid.clone(), values, tail_exponent: None })
}

/// Datum for the smoothing check: closed-form Gaussian or sampled function.
#[derive(Debug, Clone)]
pub enum SmoothingDatum {
    Gaussian(GaussianDatum),
    Sampled(RadialFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub eta: f64,
    pub eta_prime: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub tau_list: Vec<f64>,
    /// Max over data of the normalized ratio, per `τ`.
    pub ratios: Vec<f64>,
    /// Largest ratio over the coarse half of the `τ` samples.
    #[serde(rename = "fitted_M")]
    pub fitted_m: f64,
    pub pass: bool,
}

impl SmoothingReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const DEFAULT_SMOOTHING_TAUS: [f64; 10] = [
    0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125, 0.0009765625,
];

/// Normalized smoothing ratio
/// `‖S_0(τ)u‖_{η'} · a(τ)^{(d/2)(1/η-1/η')} · e^{-(1/(p-1)-d/(2η))τ} / ‖u‖_η`
/// for both exponent pairs; `τ_list` is scanned from coarse to fine.
pub fn verify_smoothing(
    eta: f64,
    eta_prime: f64,
    gamma: f64,
    gamma_prime: f64,
    samples: &[SmoothingDatum],
    tau_list: &[f64],
    params: &ProblemParams,
) -> Result<SmoothingReport> {
    if !(eta >= 1.0 && gamma >= 1.0 && eta <= eta_prime && gamma <= gamma_prime) {
        return domain("need 1 <= eta <= eta' and 1 <= gamma <= gamma'");
    }
    let gap_eta = 1.0 / eta - 1.0 / eta_prime;
    let gap_gamma = 1.0 / gamma - 1.0 / gamma_prime;
    if (gap_eta - gap_gamma).abs() > 1e-12 {
        return domain(format!(
            "exponent relation violated: 1/eta - 1/eta' = {gap_eta} but 1/gamma - 1/gamma' = {gap_gamma}"
        ));
    }
    if tau_list.is_empty() || tau_list.iter().any(|t| !(*t > 0.0 && *t <= 2.0)) {
        return domain("tau samples must lie in (0, 2]");
    }
    let d = params.d;
    let ratio = |tau: f64, lo: f64, hi: f64, before: f64, after: f64| {
        after * tau.exp_m1().powf(0.5 * params.dim() * (1.0 / lo - 1.0 / hi))
            * (-params.scaling_rate(lo) * tau).exp()
            / before
    };
    let mut ratios = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let mut worst = 0.0f64;
        for datum in samples {
            let pairs = [(eta, eta_prime), (gamma, gamma_prime)];
            match datum {
                SmoothingDatum::Gaussian(g) => {
                    let out = apply_s0_gaussian(tau, *g, params)?;
                    for (lo, hi) in pairs {
                        worst = worst.max(ratio(tau, lo, hi, g.lq_norm(lo, d), out.lq_norm(hi, d)));
                    }
                }
                SmoothingDatum::Sampled(f) => {
                    let out = apply_s0(tau, f, params)?;
                    for (lo, hi) in pairs {
                        worst = worst.max(ratio(tau, lo, hi, lq_norm(f, lo, d)?, lq_norm(&out, hi, d)?));
                    }
                }
            }
        }
        ratios.push(worst);
    }
    let half = ratios.len().div_ceil(2);
    let fitted_m = ratios[..half].iter().copied().fold(0.0, f64::max);
    let pass = ratios.iter().all(|r| r.is_finite()) && ratios[half..].iter().all(|r| *r <= 10.0 * fitted_m);
    Ok(SmoothingReport {
        eta,
        eta_prime,
        gamma,
        gamma_prime,
        tau_list: tau_list.to_vec(),
        ratios,
        fitted_m,
        pass,
    })
}

/// Log-slope of `τ ↦ ‖S_0(τ) g‖_{L^η}` over the given times.
pub fn growth_exponent_fit(g: GaussianDatum, eta: f64, taus: &[f64], params: &ProblemParams) -> Result<LineFit> {
    let logs = taus
        .iter()
        .map(|&t| Ok(apply_s0_gaussian(t, g, params)?.lq_norm(eta, params.d).ln()))
        .collect::<Result<Vec<f64>>>()?;
    line_fit(taus, &logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derived_exponents;

    #[test]
    fn identity_at_zero() {
        let params = derived_exponents(5, 3.0).unwrap();
        let g = GaussianDatum::new(1.3, 0.7).unwrap();
        assert_eq!(apply_s0_gaussian(0.0, g, &params).unwrap(), g);
    }

    #[test]
    fn gaussian_norm_formula() {
        let grid = RadialGrid::uniform(12.0, 0.005).unwrap();
        let g = GaussianDatum::new(2.0, 0.5).unwrap();
        let f = g.sample(&grid);
        for eta in [1.0, 2.0, 3.5] {
            let a = lq_norm(&f, eta, 5).unwrap();
            assert!((a / g.lq_norm(eta, 5) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn divergent_tail() {
        let grid = RadialGrid::default();
        let f = RadialFunction::new(grid.clone(), grid.nodes().iter().map(|r| 1.0 / (1.0 + r)).collect(), Some(-1.0)).unwrap();
        assert!(matches!(lq_norm(&f, 2.0, 3), Err(Error::DivergentNorm { .. })));
        assert!(lq_norm(&f, 4.0, 3).is_ok());
    }
}
