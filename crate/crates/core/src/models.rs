//! Coefficient catalog.
//!
//! The volatility state follows `dU = a(t, Y) dt + √ε c(t, Y) dB` with
//! `Y = ΓU`, and the log-price drifts with `b(t, Y)` and diffuses with
//! `σ(t, Y)`. Families are named and parameterized so a model can be
//! written to and read back from a text config.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `(a, c)` for the reflecting volatility driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum VolDynamics {
    ReflectedOu { q: f64, m: f64, xi: f64 },
    ReflectedBmDrift { a: f64, xi: f64 },
}

impl VolDynamics {
    pub fn reflected_ou(q: f64, m: f64, xi: f64) -> Result<Self> {
        if !(xi.is_finite() && xi > 0.0) {
            return Err(invalid(format!("xi must be positive, got {xi}")));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(invalid(format!("q must be nonnegative, got {q}")));
        }
        if !(m.is_finite() && m >= 0.0) {
            return Err(invalid(format!("m must be nonnegative, got {m}")));
        }
        Ok(Self::ReflectedOu { q, m, xi })
    }

    pub fn reflected_bm_drift(a: f64, xi: f64) -> Result<Self> {
        if !(xi.is_finite() && xi > 0.0) {
            return Err(invalid(format!("xi must be positive, got {xi}")));
        }
        if !(a.is_finite() && a >= 0.0) {
            return Err(invalid(format!("drift a must be nonnegative, got {a}")));
        }
        Ok(Self::ReflectedBmDrift { a, xi })
    }

    #[inline]
    fn a(&self, x: f64) -> f64 {
        match *self {
            Self::ReflectedOu { q, m, .. } => q * (m - x),
            Self::ReflectedBmDrift { a, .. } => a,
        }
    }

    #[inline]
    fn c(&self) -> f64 {
        match *self {
            Self::ReflectedOu { xi, .. } | Self::ReflectedBmDrift { xi, .. } => xi,
        }
    }

    fn lipschitz_hint(&self) -> f64 {
        match *self {
            Self::ReflectedOu { q, .. } => q,
            Self::ReflectedBmDrift { .. } => 0.0,
        }
    }

    fn growth_hint(&self) -> f64 {
        match *self {
            Self::ReflectedOu { q, m, xi } => (q * m + q).max(xi) * 2.0,
            Self::ReflectedBmDrift { a, xi } => a.max(xi) * 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `a = q(m − x)`, `c = ξ`, `b = μ`, `σ = x⁺`.
    ReflectedOu { q: f64, m: f64, xi: f64, mu: f64 },
    /// `a = const`, `c = ξ`, `b = μ`, `σ = x⁺`.
    ReflectedBmDrift { a: f64, xi: f64, mu: f64 },
    /// Black–Scholes: `σ = σ₀`, `b = r`; the volatility state is inert.
    ConstantVol { sigma0: f64, r: f64 },
    /// `σ = exp(x − k)` over one of the reflected drivers.
    ExponentialVol { k: f64, mu: f64, dynamics: VolDynamics },
}

/// The four coefficient functions plus regularity metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub family: Family,
    pub c_strictly_positive: bool,
    pub sigma_strictly_positive: bool,
    pub lipschitz_constant_hint: f64,
    pub growth_constant_hint: f64,
}

pub fn make_reflected_ou(q: f64, m: f64, xi: f64, mu: f64) -> Result<CoefficientSet> {
    let dynamics = VolDynamics::reflected_ou(q, m, xi)?;
    check_finite("mu", mu)?;
    Ok(CoefficientSet {
        family: Family::ReflectedOu { q, m, xi, mu },
        c_strictly_positive: true,
        sigma_strictly_positive: false,
        lipschitz_constant_hint: dynamics.lipschitz_hint(),
        growth_constant_hint: dynamics.growth_hint(),
    })
}

pub fn make_reflected_bm_drift(drift_a: f64, xi: f64, mu: f64) -> Result<CoefficientSet> {
    let dynamics = VolDynamics::reflected_bm_drift(drift_a, xi)?;
    check_finite("mu", mu)?;
    Ok(CoefficientSet {
        family: Family::ReflectedBmDrift { a: drift_a, xi, mu },
        c_strictly_positive: true,
        sigma_strictly_positive: false,
        lipschitz_constant_hint: dynamics.lipschitz_hint(),
        growth_constant_hint: dynamics.growth_hint(),
    })
}

pub fn make_constant_vol(sigma0: f64, r: f64) -> Result<CoefficientSet> {
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(invalid(format!("sigma0 must be positive, got {sigma0}")));
    }
    check_finite("r", r)?;
    Ok(CoefficientSet {
        family: Family::ConstantVol { sigma0, r },
        c_strictly_positive: true,
        sigma_strictly_positive: true,
        lipschitz_constant_hint: 0.0,
        growth_constant_hint: 2.0,
    })
}

pub fn make_exponential_vol(k: f64, mu: f64, dynamics: VolDynamics) -> Result<CoefficientSet> {
    check_finite("k", k)?;
    check_finite("mu", mu)?;
    // re-run the parameter checks in case the dynamics were built by hand
    match dynamics {
        VolDynamics::ReflectedOu { q, m, xi } => VolDynamics::reflected_ou(q, m, xi)?,
        VolDynamics::ReflectedBmDrift { a, xi } => VolDynamics::reflected_bm_drift(a, xi)?,
    };
    Ok(CoefficientSet {
        family: Family::ExponentialVol { k, mu, dynamics },
        c_strictly_positive: true,
        sigma_strictly_positive: true,
        lipschitz_constant_hint: dynamics.lipschitz_hint(),
        growth_constant_hint: dynamics.growth_hint(),
    })
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

impl CoefficientSet {
    #[inline]
    pub fn a(&self, _t: f64, x: f64) -> f64 {
        match self.family {
            Family::ReflectedOu { q, m, .. } => q * (m - x),
            Family::ReflectedBmDrift { a, .. } => a,
            Family::ConstantVol { .. } => 0.0,
            Family::ExponentialVol { dynamics, .. } => dynamics.a(x),
        }
    }

    #[inline]
    pub fn c(&self, _t: f64, _x: f64) -> f64 {
        match self.family {
            Family::ReflectedOu { xi, .. } | Family::ReflectedBmDrift { xi, .. } => xi,
            Family::ConstantVol { .. } => 1.0,
            Family::ExponentialVol { dynamics, .. } => dynamics.c(),
        }
    }

    #[inline]
    pub fn b(&self, _t: f64, _x: f64) -> f64 {
        match self.family {
            Family::ReflectedOu { mu, .. }
            | Family::ReflectedBmDrift { mu, .. }
            | Family::ExponentialVol { mu, .. } => mu,
            Family::ConstantVol { r, .. } => r,
        }
    }

    #[inline]
    pub fn sigma(&self, _t: f64, x: f64) -> f64 {
        match self.family {
            Family::ReflectedOu { .. } | Family::ReflectedBmDrift { .. } => x.max(0.0),
            Family::ConstantVol { sigma0, .. } => sigma0,
            Family::ExponentialVol { k, .. } => (x - k).exp(),
        }
    }

    /// The asset drift when it does not depend on `(t, x)`; every catalog
    /// family has one.
    pub fn constant_drift(&self) -> Option<f64> {
        Some(self.b(0.0, 0.0))
    }

    /// `σ(t, x) = x⁺`, the volatility map of the reflected families.
    pub fn is_reflected_sns(&self) -> bool {
        matches!(self.family, Family::ReflectedOu { .. } | Family::ReflectedBmDrift { .. })
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::ReflectedOu { .. } => "reflected_ou",
            Family::ReflectedBmDrift { .. } => "reflected_bm_drift",
            Family::ConstantVol { .. } => "constant_vol",
            Family::ExponentialVol { .. } => "exponential_vol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub lipschitz_estimate: f64,
    pub growth_estimate: f64,
    pub lipschitz_hint: f64,
    pub growth_hint: f64,
    pub lipschitz_violation: bool,
    pub growth_violation: bool,
}

impl ValidationReport {
    pub fn violation(&self) -> bool {
        self.lipschitz_violation || self.growth_violation
    }
}

/// Sampling check of the local Lipschitz and sublinear growth conditions on
/// `[0, horizon] × [0, box_radius]`. An estimate more than twice its hint is
/// flagged. This is a sanity check, not a proof.
pub fn validate_coefficients(
    cs: &CoefficientSet,
    horizon: f64,
    box_radius: f64,
    grid_points: usize,
) -> Result<ValidationReport> {
    if !(box_radius.is_finite() && box_radius > 0.0) {
        return Err(invalid(format!("box_radius must be positive, got {box_radius}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if grid_points < 2 {
        return Err(invalid("grid_points must be at least 2"));
    }
    let n_t = grid_points.min(16);
    let xs: Vec<f64> = (0..grid_points)
        .map(|i| box_radius * i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut lipschitz = 0.0_f64;
    let mut growth = 0.0_f64;
    let mut ac = vec![(0.0, 0.0); grid_points];
    for it in 0..n_t {
        let t = horizon * it as f64 / (n_t - 1).max(1) as f64;
        for (slot, &x) in ac.iter_mut().zip(&xs) {
            let (a, c, b, s) = (cs.a(t, x), cs.c(t, x), cs.b(t, x), cs.sigma(t, x));
            if !(a.is_finite() && c.is_finite() && b.is_finite() && s.is_finite()) {
                return Err(invalid(format!(
                    "{} coefficients are not finite at (t={t}, x={x})",
                    cs.family_name()
                )));
            }
            if s < 0.0 {
                return Err(invalid(format!("sigma is negative at (t={t}, x={x})")));
            }
            *slot = (a, c);
            growth = growth.max((a.abs() + c.abs()) / (1.0 + x));
        }
        for i in 0..grid_points {
            for j in i + 1..grid_points {
                let dx = xs[j] - xs[i];
                let d = (ac[j].0 - ac[i].0).abs() + (ac[j].1 - ac[i].1).abs();
                lipschitz = lipschitz.max(d / dx);
            }
        }
    }
    let lipschitz_hint = cs.lipschitz_constant_hint;
    let growth_hint = cs.growth_constant_hint;
    Ok(ValidationReport {
        lipschitz_estimate: lipschitz,
        growth_estimate: growth,
        lipschitz_hint,
        growth_hint,
        lipschitz_violation: lipschitz > 2.0 * lipschitz_hint + 1e-12,
        growth_violation: growth > 2.0 * growth_hint + 1e-12,
    })
}

/// A coefficient set together with initial data, correlation and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub coefficients: CoefficientSet,
    pub y0: f64,
    pub s0: f64,
    pub rho: f64,
    pub r: f64,
    pub horizon: f64,
}

impl ModelSpec {
    pub fn new(
        coefficients: CoefficientSet,
        y0: f64,
        s0: f64,
        rho: f64,
        r: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(y0.is_finite() && y0 >= 0.0) {
            return Err(invalid(format!("y0 must be nonnegative, got {y0}")));
        }
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(invalid(format!("s0 must be positive, got {s0}")));
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(invalid(format!("rho must lie in (-1, 1), got {rho}")));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(invalid(format!("r must be nonnegative, got {r}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("T must be positive, got {horizon}")));
        }
        Ok(Self { coefficients, y0, s0, rho, r, horizon })
    }

    pub fn x0(&self) -> f64 {
        self.s0.ln()
    }

    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).sqrt()
    }

    /// `b ≡ r`, required by every pricing routine.
    pub fn is_risk_neutral(&self) -> bool {
        self.coefficients
            .constant_drift()
            .is_some_and(|b| (b - self.r).abs() <= 1e-14 * (1.0 + self.r.abs()))
    }

    pub(crate) fn require_risk_neutral(&self) -> Result<()> {
        if self.is_risk_neutral() {
            Ok(())
        } else {
            Err(invalid(format!(
                "pricing requires the risk-neutral drift b = r = {}, model drift is {:?}",
                self.r,
                self.coefficients.constant_drift()
            )))
        }
    }
}
