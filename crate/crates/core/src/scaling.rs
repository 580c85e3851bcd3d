//! Training-compute loss, per-skill capability and the chain-of-thought
//! success model ψ(Ω) = I_p(m, Ω/ω − m + 1), with the minimum token budget
//! that meets a tolerance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ScalingFit;
use crate::special::reg_inc_beta;

/// Token budgets beyond this are treated as unreachable.
pub const MAX_TOKEN_BUDGET: f64 = 1e12;
const BUDGET_REL_WIDTH: f64 = 1e-8;

/// Compute-optimal pretraining loss of an `params`-parameter model.
pub fn chinchilla_loss(params: f64, fit: &ScalingFit) -> Result<f64> {
    if !(params > 0.0) {
        return Err(Error::domain("chinchilla_loss", format!("parameter count {params} must be positive")));
    }
    Ok(fit.l_irr + fit.gamma_coef * params.powf(-fit.gamma_exp))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-skill success rate of a model of size `params` on difficulty `difficulty`.
pub fn capability(difficulty: f64, params: f64, fit: &ScalingFit) -> Result<f64> {
    let loss = chinchilla_loss(params, fit)?;
    Ok(sigmoid(fit.steepness * (difficulty - loss)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapabilityParams {
    /// Per-skill success rate p in [0, 1].
    pub success_rate: f64,
    pub skills: u32,
    pub tokens_per_skill: f64,
}

impl CapabilityParams {
    pub fn new(success_rate: f64, skills: u32, tokens_per_skill: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&success_rate) {
            return Err(Error::validation("success_rate", format!("{success_rate} outside [0, 1]")));
        }
        if skills == 0 {
            return Err(Error::validation("skills", "must be at least 1"));
        }
        if !(tokens_per_skill > 0.0) || !tokens_per_skill.is_finite() {
            return Err(Error::validation("tokens_per_skill", format!("{tokens_per_skill} must be positive")));
        }
        Ok(CapabilityParams {
            success_rate,
            skills,
            tokens_per_skill,
        })
    }

    /// Smallest budget at which ψ can be nonzero, ω(m − 1).
    pub fn token_floor(&self) -> f64 {
        self.tokens_per_skill * (f64::from(self.skills) - 1.0)
    }
}

/// Probability that `tokens` of chain-of-thought complete all skills.
/// Zero at or below the token floor.
pub fn success_prob(params: &CapabilityParams, tokens: f64) -> Result<f64> {
    let m = f64::from(params.skills);
    let b = tokens / params.tokens_per_skill - m + 1.0;
    if !(b > 0.0) {
        return Ok(0.0);
    }
    match params.success_rate {
        p if p <= 0.0 => Ok(0.0),
        p if p >= 1.0 => Ok(1.0),
        p => reg_inc_beta(p, m, b),
    }
}

/// Smallest Ω with ψ(Ω) ≥ 1 − ε.
///
/// Brackets by doubling from ω·m, then bisects to a relative width of 1e-8;
/// the returned value is the upper end of the final bracket.
pub fn min_token_budget(params: &CapabilityParams, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::validation("tolerance", format!("{tolerance} outside (0, 1)")));
    }
    if params.success_rate <= 0.0 {
        return Err(Error::Infeasible(format!(
            "per-skill success rate is 0; no budget reaches 1 - eps = {}",
            1.0 - tolerance
        )));
    }
    let target = 1.0 - tolerance;
    let mut lo = params.token_floor();
    let mut hi = params.tokens_per_skill * f64::from(params.skills);
    while success_prob(params, hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_TOKEN_BUDGET {
            return Err(Error::Infeasible(format!(
                "success rate {} needs more than {MAX_TOKEN_BUDGET:e} tokens to reach {target}",
                params.success_rate
            )));
        }
    }
    while hi - lo > BUDGET_REL_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if success_prob(params, mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
