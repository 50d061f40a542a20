//! Critical exponents of the power nonlinearity heat equation, regime
//! classification, the eigenvalue-smallness feasibility test and the two
//! elementary remainder inequalities used for the nonlinear term.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{domain, Result};

/// Seed used by the randomized inequality sweep unless the caller supplies one.
pub const DEFAULT_SEED: u64 = 0x5EED_2024;

/// `sign(v) |v|^p`, the odd power nonlinearity for real `p`.
#[inline]
pub fn signed_pow(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(p)
    }
}

/// An exponent that may be `+inf`. Kept as a tagged value so that regime
/// tests never compare against a sentinel float.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub enum CriticalPower {
    Finite(f64),
    Infinite,
}

impl CriticalPower {
    pub fn is_finite(self) -> bool {
        matches!(self, CriticalPower::Finite(_))
    }

    /// `true` when `p` lies strictly below this exponent.
    pub fn exceeds(self, p: f64) -> bool {
        match self {
            CriticalPower::Finite(v) => p < v,
            CriticalPower::Infinite => true,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            CriticalPower::Finite(v) => Some(v),
            CriticalPower::Infinite => None,
        }
    }
}

impl Serialize for CriticalPower {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CriticalPower::Finite(v) => s.serialize_f64(*v),
            CriticalPower::Infinite => s.serialize_str("inf"),
        }
    }
}

impl fmt::Display for CriticalPower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriticalPower::Finite(v) => write!(f, "{v}"),
            CriticalPower::Infinite => f.write_str("inf"),
        }
    }
}

/// Position of `p` relative to the Fujita, energy-critical and
/// Joseph-Lundgren exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `p <= 1 + 2/d`.
    #[serde(rename = "below-fujita")]
    BelowFujita,
    /// `1 + 2/d < p < p_c`: rapidly decaying expanders exist.
    #[serde(rename = "subcritical")]
    Subcritical,
    /// `p_c <= p < p_JL` (the energy-critical power included).
    #[serde(rename = "energy-supercritical")]
    EnergySupercritical,
    /// `p >= p_JL`: no linearly unstable radial expander.
    #[serde(rename = "beyond-JL")]
    BeyondJosephLundgren,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::BelowFujita => "below-fujita",
            Regime::Subcritical => "subcritical",
            Regime::EnergySupercritical => "energy-supercritical",
            Regime::BeyondJosephLundgren => "beyond-JL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    pub d: u32,
    pub p: f64,
    /// Scaling-critical Lebesgue exponent `d(p-1)/2`.
    pub q_c: f64,
    pub p_fujita: f64,
    /// Energy-critical power `1 + 4/(d-2)`.
    pub p_c: f64,
    pub p_jl: CriticalPower,
    pub regime: Regime,
}

impl ProblemParams {
    pub fn dim(&self) -> f64 {
        f64::from(self.d)
    }

    /// `1/(p-1)`, the constant part of the similarity generator.
    pub fn inv_pm1(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }

    /// Power-law decay rate `2/(p-1)` of expander tails.
    pub fn tail_power(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    /// Growth exponent `1/(p-1) - d/(2 gamma)` of the free flow in `L^gamma`;
    /// also the scaling exponent between similarity and physical norms.
    pub fn scaling_rate(&self, gamma: f64) -> f64 {
        self.inv_pm1() - self.dim() / (2.0 * gamma)
    }

    /// `1 + 2/d < p < p_JL`.
    pub fn in_nonuniqueness_range(&self) -> bool {
        self.p > self.p_fujita && self.p_jl.exceeds(self.p)
    }
}

/// Joseph-Lundgren exponent; infinite for `3 <= d <= 10`.
pub fn joseph_lundgren(d: u32) -> CriticalPower {
    if d <= 10 {
        CriticalPower::Infinite
    } else {
        let d = f64::from(d);
        CriticalPower::Finite(1.0 + 4.0 / (d - 4.0 - 2.0 * (d - 1.0).sqrt()))
    }
}

/// The power `d/(d-2)` at which `q_c = p`.
pub fn doubly_critical_power(d: u32) -> f64 {
    let d = f64::from(d);
    d / (d - 2.0)
}

pub fn derived_exponents(d: u32, p: f64) -> Result<ProblemParams> {
    if d < 3 {
        return domain(format!("dimension d = {d} must be at least 3"));
    }
    if !(p.is_finite() && p > 1.0) {
        return domain(format!("power p = {p} must be a finite number > 1"));
    }
    let df = f64::from(d);
    let p_fujita = 1.0 + 2.0 / df;
    let p_c = 1.0 + 4.0 / (df - 2.0);
    let p_jl = joseph_lundgren(d);
    let regime = if p <= p_fujita {
        Regime::BelowFujita
    } else if p < p_c {
        Regime::Subcritical
    } else if p_jl.exceeds(p) {
        Regime::EnergySupercritical
    } else {
        Regime::BeyondJosephLundgren
    };
    Ok(ProblemParams {
        d,
        p,
        q_c: df * (p - 1.0) / 2.0,
        p_fujita,
        p_c,
        p_jl,
        regime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityCheck {
    pub lambda_bar: f64,
    pub q: f64,
    pub r: f64,
    /// `1/(p-1) - d/(2r) - lambda_bar`.
    pub slack: f64,
    pub satisfied: bool,
}

/// Tests `0 < lambda_bar < 1/(p-1) - d/(2r)` for the exponent pair
/// `1 <= q < q_c < r`.
pub fn check_feasibility(
    params: &ProblemParams,
    lambda_bar: f64,
    q: f64,
    r: f64,
) -> Result<FeasibilityCheck> {
    if !(q >= 1.0) {
        return domain(format!("q = {q} must be at least 1"));
    }
    if !(q < params.q_c) {
        return domain(format!("q = {q} must be below q_c = {}", params.q_c));
    }
    if !(r > params.q_c) {
        return domain(format!("r = {r} must exceed q_c = {}", params.q_c));
    }
    let bound = params.scaling_rate(r);
    let slack = bound - lambda_bar;
    Ok(FeasibilityCheck {
        lambda_bar,
        q,
        r,
        slack,
        satisfied: lambda_bar > 0.0 && lambda_bar < bound,
    })
}

/// Left and right side of a remainder inequality, with a bound on the
/// floating-point error committed while evaluating `lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderGap {
    pub lhs: f64,
    pub rhs: f64,
    pub rounding: f64,
}

impl RemainderGap {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.rounding
    }
}

const ROUNDING_FACTOR: f64 = 16.0 * f64::EPSILON;

/// First-order Taylor remainder of `n(v) = |v|^{p-1} v` at `x` in direction `y`,
/// against its bound (`p|y|^p` for `p <= 2`, a second-order bound otherwise).
pub fn taylor_remainder_gap(x: f64, y: f64, p: f64) -> RemainderGap {
    let a = signed_pow(x + y, p);
    let b = signed_pow(x, p);
    let c = p * x.abs().powf(p - 1.0) * y;
    let lhs = (a - b - c).abs();
    let rhs = if p <= 2.0 {
        p * y.abs().powf(p)
    } else {
        0.5 * p * (p - 1.0) * 2f64.powf(p - 3.0).max(1.0)
            * (x.abs().powf(p - 2.0) * y * y + y.abs().powf(p))
    };
    RemainderGap {
        lhs,
        rhs,
        rounding: ROUNDING_FACTOR * (a.abs() + b.abs() + c.abs()),
    }
}

/// Difference of two remainders at `x` (directions `y` and `z`) against the
/// Lipschitz-type bound.
pub fn contraction_remainder_gap(x: f64, y: f64, z: f64, p: f64) -> RemainderGap {
    let a = signed_pow(x + y, p);
    let b = signed_pow(x + z, p);
    let c = p * x.abs().powf(p - 1.0) * (y - z);
    let lhs = (a - b - c).abs();
    let dyz = (y - z).abs();
    let rhs = if p <= 2.0 {
        p * (y.abs().powf(p - 1.0) + z.abs().powf(p - 1.0)) * dyz
    } else {
        p * (p - 1.0)
            * 3f64.powf(p - 3.0).max(1.0)
            * (y.abs() + z.abs())
            * (x.abs().powf(p - 2.0) + y.abs().powf(p - 2.0) + z.abs().powf(p - 2.0))
            * dyz
    };
    RemainderGap {
        lhs,
        rhs,
        rounding: ROUNDING_FACTOR * (a.abs() + b.abs() + c.abs()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalitySweep {
    pub seed: u64,
    pub samples: usize,
    pub taylor_violations: usize,
    pub contraction_violations: usize,
    /// Largest observed `lhs / rhs` for each inequality (ignoring `rhs = 0`).
    pub taylor_max_ratio: f64,
    pub contraction_max_ratio: f64,
}

impl InequalitySweep {
    pub fn pass(&self) -> bool {
        self.taylor_violations == 0 && self.contraction_violations == 0
    }
}

fn sample_real(rng: &mut ChaCha8Rng) -> f64 {
    // half uniform on [-4, 4], half log-uniform magnitude over 1e-3..1e1
    if rng.gen_bool(0.5) {
        rng.gen_range(-4.0..4.0)
    } else {
        let mag = 10f64.powf(rng.gen_range(-3.0..1.0));
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    }
}

/// Randomized check of both remainder inequalities with `p` in `(1, 6]`.
pub fn sweep_remainder_bounds(samples: usize, seed: u64) -> InequalitySweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = InequalitySweep {
        seed,
        samples,
        taylor_violations: 0,
        contraction_violations: 0,
        taylor_max_ratio: 0.0,
        contraction_max_ratio: 0.0,
    };
    for _ in 0..samples {
        let p = 6.0 - rng.gen_range(0.0..5.0);
        let (x, y, z) = (sample_real(&mut rng), sample_real(&mut rng), sample_real(&mut rng));

        let t = taylor_remainder_gap(x, y, p);
        if !t.holds() {
            out.taylor_violations += 1;
        }
        if t.rhs > 0.0 {
            out.taylor_max_ratio = out.taylor_max_ratio.max(t.lhs / t.rhs);
        }
        let c = contraction_remainder_gap(x, y, z, p);
        if !c.holds() {
            out.contraction_violations += 1;
        }
        if c.rhs > 0.0 {
            out.contraction_max_ratio = out.contraction_max_ratio.max(c.lhs / c.rhs);
        }
    }
    out
}
