//! Closed-form deficit analytics for Brownian motion with drift μ and
//! volatility σ: the distribution and mean of D_T = (−min_{t≤T} B_t)⁺,
//! the large-T regime asymptotes, and the normalized deviation from
//! drift-only scaling.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::config::ValidatedConfig;
use crate::error::{Error, Result};
use crate::special::{erf, ln_norm_cdf, norm_cdf, norm_pdf, norm_sf};

/// Below this |a| = |μ|√T/σ the zero-drift limit is used.
const ZERO_DRIFT_A: f64 = 1e-6;
/// Above this exponent e^{−2μz/σ²}Φ(·) is evaluated in log space.
const LOG_SPACE_EXPONENT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSpec {
    /// Drift μ (J/slot).
    pub mu: f64,
    /// Volatility σ > 0 (J/√slot).
    pub sigma: f64,
}

impl DriftSpec {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::validation("mu", format!("{mu} must be finite")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::validation("sigma", format!("{sigma} must be positive")));
        }
        Ok(DriftSpec { mu, sigma })
    }

    /// a = μ√T/σ.
    pub fn scaled_drift(&self, horizon: f64) -> f64 {
        self.mu * horizon.sqrt() / self.sigma
    }
}

/// Per-slot mean and variance of the lumped myopic battery increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MyopicMoments {
    /// μ_B = R̄ − C̄_LB.
    pub mean: f64,
    /// σ_B² = σ_R² + K̄ E[E_LB²].
    pub variance: f64,
}

impl MyopicMoments {
    pub fn drift(&self) -> Result<DriftSpec> {
        DriftSpec::new(self.mean, self.variance.sqrt())
    }
}

pub fn myopic_moments(config: &ValidatedConfig) -> MyopicMoments {
    let lb = config.lower_bound();
    let harvest = &config.config().harvest;
    MyopicMoments {
        mean: harvest.mean - lb.rate,
        variance: harvest.effective_variance() + lb.second_moment,
    }
}

/// σ√(2T/π), the expected deficit at zero drift.
pub fn zero_drift_scale(sigma: f64, horizon: f64) -> f64 {
    sigma * (2.0 * horizon / PI).sqrt()
}

/// P(D_T ≤ z) = Φ((z + μT)/(σ√T)) − e^{−2μz/σ²} Φ((μT − z)/(σ√T)).
pub fn deficit_cdf(z: f64, drift: &DriftSpec, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::domain("deficit_cdf", format!("horizon {horizon} must be positive")));
    }
    if z < 0.0 {
        return Ok(0.0);
    }
    let DriftSpec { mu, sigma } = *drift;
    let spread = sigma * horizon.sqrt();
    let upper = norm_cdf((z + mu * horizon) / spread);
    let exponent = -2.0 * mu * z / (sigma * sigma);
    let reflected_arg = (mu * horizon - z) / spread;
    let reflected = if exponent > LOG_SPACE_EXPONENT {
        (exponent + ln_norm_cdf(reflected_arg)).exp()
    } else {
        exponent.exp() * norm_cdf(reflected_arg)
    };
    Ok((upper - reflected).clamp(0.0, 1.0))
}

/// Smallest z with P(D_T ≤ z) ≥ p, by bisection.
pub fn deficit_quantile(p: f64, drift: &DriftSpec, horizon: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("deficit_quantile", format!("probability {p} outside (0, 1)")));
    }
    let mut lo = 0.0;
    let mut hi = drift.sigma * horizon.sqrt() + (-drift.mu * horizon).max(0.0);
    while deficit_cdf(hi, drift, horizon)? < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deficit_cdf(mid, drift, horizon)? >= p {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(hi)
}

/// E[D_T] = σ√T (φ(a) − a Q(a) + (2Φ(a) − 1)/(2a)), a = μ√T/σ,
/// continuous through a = 0 where it equals σ√(2T/π).
///
/// # Panics
/// If `horizon` is not positive.
pub fn expected_deficit(drift: &DriftSpec, horizon: f64) -> f64 {
    assert!(horizon > 0.0, "horizon must be positive");
    let a = drift.scaled_drift(horizon);
    if a.abs() < ZERO_DRIFT_A {
        return zero_drift_scale(drift.sigma, horizon);
    }
    let bracket = norm_pdf(a) - a * norm_sf(a) + erf(a * FRAC_1_SQRT_2) / (2.0 * a);
    drift.sigma * horizon.sqrt() * bracket
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftRegime {
    /// μ < 0: linear growth.
    Deficit,
    /// μ = 0: √T growth.
    Critical,
    /// μ > 0: bounded.
    Surplus,
}

pub fn regime_of(drift: &DriftSpec) -> DriftRegime {
    if drift.mu < 0.0 {
        DriftRegime::Deficit
    } else if drift.mu > 0.0 {
        DriftRegime::Surplus
    } else {
        DriftRegime::Critical
    }
}

/// Large-T limit of E[D_T] in each drift regime.
pub fn regime_asymptote(drift: &DriftSpec, horizon: f64) -> f64 {
    let DriftSpec { mu, sigma } = *drift;
    match regime_of(drift) {
        DriftRegime::Deficit => mu.abs() * horizon + sigma * sigma / (2.0 * mu.abs()),
        DriftRegime::Surplus => sigma * sigma / (2.0 * mu),
        DriftRegime::Critical => zero_drift_scale(sigma, horizon),
    }
}

/// One point of the deviation-from-drift-only curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationPoint {
    /// κ = μT / (σ√(2T/π)).
    pub kappa: f64,
    /// (E[D_T] − (−μ)⁺T) / (σ√(2T/π)).
    pub deviation: f64,
}

pub fn deviation_curve(drift: &DriftSpec, horizon: f64) -> DeviationPoint {
    let scale = zero_drift_scale(drift.sigma, horizon);
    let drift_only = (-drift.mu).max(0.0) * horizon;
    DeviationPoint {
        kappa: drift.mu * horizon / scale,
        deviation: (expected_deficit(drift, horizon) - drift_only) / scale,
    }
}

/// Drift that produces ratio `kappa` at the given σ and horizon.
pub fn drift_for_kappa(kappa: f64, sigma: f64, horizon: f64) -> f64 {
    kappa * zero_drift_scale(sigma, horizon) / horizon
}
