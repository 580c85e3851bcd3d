//! Token-level energy and latency, and their discretization into per-slot
//! energy profiles.
//!
//! Context starts empty and grows by one per generated token, so total
//! energy and time over a budget of Ω tokens are the quadratics
//! `α Ω + β Ω²` and `a Ω + b Ω²`. Ω is continuous throughout.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelProfile;

/// Energy (J/token) and time (s/token) for one token at context length `context_len`.
pub fn per_token(model: &ModelProfile, context_len: f64) -> (f64, f64) {
    (
        model.energy_per_token + 2.0 * model.energy_per_context * context_len,
        model.time_per_token + 2.0 * model.time_per_context * context_len,
    )
}

pub fn total_energy(model: &ModelProfile, tokens: f64) -> Result<f64> {
    check_tokens("total_energy", tokens)?;
    Ok(model.energy_per_token * tokens + model.energy_per_context * tokens * tokens)
}

pub fn total_time(model: &ModelProfile, tokens: f64) -> Result<f64> {
    check_tokens("total_time", tokens)?;
    Ok(model.time_per_token * tokens + model.time_per_context * tokens * tokens)
}

fn check_tokens(func: &'static str, tokens: f64) -> Result<()> {
    if tokens >= 0.0 && tokens.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("token budget {tokens} must be nonnegative")))
    }
}

/// Token count reached after `elapsed` seconds: the nonnegative root of
/// `a Ω + b Ω² = elapsed`. Negative input is treated as zero.
pub fn invert_time(model: &ModelProfile, elapsed: f64) -> f64 {
    let u = elapsed.max(0.0);
    let a = model.time_per_token;
    let b = model.time_per_context;
    if b == 0.0 {
        return u / a;
    }
    // Rationalized root 2u / (a + √(a² + 4bu)) avoids cancellation when 4bu ≪ a².
    2.0 * u / (a + (a * a + 4.0 * b * u).sqrt())
}

/// Cumulative energy after `elapsed` seconds of generation.
pub fn energy_at_time(model: &ModelProfile, elapsed: f64) -> f64 {
    let tokens = invert_time(model, elapsed);
    model.energy_per_token * tokens + model.energy_per_context * tokens * tokens
}

/// Per-slot energy draw of one task served by one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpenditureProfile {
    /// Index of the serving model in the configuration.
    pub model: usize,
    pub tokens: f64,
    /// Total energy (J).
    pub energy: f64,
    /// Continuous completion time (s).
    pub time: f64,
    /// Per-slot energy; its length is the service time in slots.
    pub per_slot: Vec<f64>,
}

impl ExpenditureProfile {
    pub fn slots(&self) -> usize {
        self.per_slot.len()
    }
}

/// Samples the continuous energy curve at slot boundaries. The last slot is
/// clamped at the completion time so the slots sum to the total energy.
pub fn discretize_profile(
    model_index: usize,
    model: &ModelProfile,
    tokens: f64,
    slot_seconds: f64,
) -> Result<ExpenditureProfile> {
    if !(tokens > 0.0) || !tokens.is_finite() {
        return Err(Error::domain("discretize_profile", format!("token budget {tokens} must be positive")));
    }
    if !(slot_seconds > 0.0) || !slot_seconds.is_finite() {
        return Err(Error::domain("discretize_profile", format!("slot length {slot_seconds} must be positive")));
    }
    let energy = total_energy(model, tokens)?;
    let time = total_time(model, tokens)?;
    let slots = ((time / slot_seconds).ceil() as usize).max(1);

    let mut per_slot = Vec::with_capacity(slots);
    let mut prev = 0.0;
    for u in 1..=slots {
        let cumulative = if u == slots {
            energy
        } else {
            energy_at_time(model, (u as f64 * slot_seconds).min(time))
        };
        per_slot.push(cumulative - prev);
        prev = cumulative;
    }
    Ok(ExpenditureProfile {
        model: model_index,
        tokens,
        energy,
        time,
        per_slot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_coefficients, HardwareSpec, ModelDims, SystemConfig};
    use proptest::prelude::*;

    fn models() -> (ModelProfile, ModelProfile) {
        let hw = HardwareSpec::reference();
        let cfg = SystemConfig::reference();
        (
            derive_coefficients(&cfg.models[0], &hw).unwrap(),
            derive_coefficients(&cfg.models[1], &hw).unwrap(),
        )
    }

    fn unit_model(a: f64, b: f64) -> ModelProfile {
        ModelProfile {
            name: "unit".into(),
            params: 1.0,
            n_layers: 1,
            d_attn: 1,
            energy_per_token: 1.0,
            energy_per_context: 0.5,
            time_per_token: a,
            time_per_context: b,
        }
    }

    #[test]
    fn per_token_at_zero_and_long_context() {
        let (small, _) = models();
        let (e, t) = per_token(&small, 0.0);
        assert!((e - 0.012).abs() < 1e-15 && (t - 3e-4).abs() < 1e-18);
        let (e, t) = per_token(&small, 1000.0);
        assert!((e - (0.012 + 2.0 * 9.8304e-8 * 1000.0)).abs() < 1e-15);
        assert!((t - (3e-4 + 2.0 * 4.9152e-9 * 1000.0)).abs() < 1e-17);
    }

    #[test]
    fn per_token_without_attention_is_flat() {
        let mut m = unit_model(2.0, 0.0);
        m.energy_per_context = 0.0;
        assert_eq!(per_token(&m, 0.0), per_token(&m, 1e6));
    }

    #[test]
    fn reference_totals() {
        let (small, large) = models();
        let e = total_energy(&small, 57_855.0).unwrap();
        let t = total_time(&small, 57_855.0).unwrap();
        assert!((e - 1023.3).abs() / 1023.3 < 1e-3, "{e}");
        assert!((t - 33.81).abs() < 0.01, "{t}");
        let e = total_energy(&large, 3561.0).unwrap();
        assert!((e - 428.6).abs() / 428.6 < 1e-3, "{e}");
        assert_eq!(total_energy(&small, 0.0).unwrap(), 0.0);
        assert_eq!(total_time(&small, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_budget_is_a_domain_error() {
        let (small, _) = models();
        assert!(matches!(total_energy(&small, -1.0), Err(Error::Domain { .. })));
        assert!(matches!(total_time(&small, -1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn invert_time_cases() {
        let (small, _) = models();
        assert_eq!(invert_time(&small, 0.0), 0.0);
        assert!((invert_time(&unit_model(1.0, 1.0), 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(invert_time(&unit_model(2.0, 0.0), 3.0), 1.5);
        for tokens in [1.0, 1e3, 1e5] {
            let back = invert_time(&small, total_time(&small, tokens).unwrap());
            assert!(((back - tokens) / tokens).abs() < 1e-10);
        }
    }

    #[test]
    fn reference_profile_has_34_slots() {
        let (small, large) = models();
        let p = discretize_profile(0, &small, 57_855.0, 1.0).unwrap();
        assert_eq!(p.slots(), 34);
        let sum: f64 = p.per_slot.iter().sum();
        assert!((sum - 1023.3).abs() / 1023.3 < 1e-3);
        assert!(p.per_slot.iter().all(|&e| e >= 0.0));
        assert_eq!(discretize_profile(1, &large, 3561.0, 1.0).unwrap().slots(), 11);
    }

    #[test]
    fn sub_slot_task_fits_in_one_slot() {
        let (small, _) = models();
        let p = discretize_profile(0, &small, 100.0, 1.0).unwrap();
        assert_eq!(p.per_slot, vec![p.energy]);
    }

    #[test]
    fn discretize_rejects_nonpositive_inputs() {
        let (small, _) = models();
        assert!(discretize_profile(0, &small, 0.0, 1.0).is_err());
        assert!(discretize_profile(0, &small, 10.0, 0.0).is_err());
        assert!(discretize_profile(0, &small, 10.0, -1.0).is_err());
    }

    /// Per-slot energy follows the sign of d/dΩ [(α + 2βΩ)/(a + 2bΩ)],
    /// which is sign(βa − αb). Checked against finite differences of the
    /// cumulative energy curve.
    #[test]
    fn per_slot_monotone_in_direction_of_rate_slope() {
        let hw_variants = [
            HardwareSpec::reference(),
            // Compute-heavy: E_comp/BW > E_mem/TP, rate grows with context.
            HardwareSpec {
                e_mem: 1e-13,
                ..HardwareSpec::reference()
            },
        ];
        for hw in hw_variants {
            let m = derive_coefficients(
                &ModelDims {
                    name: "m".into(),
                    params: 1e9,
                    n_layers: 48,
                    d_attn: 2048,
                },
                &hw,
            )
            .unwrap();
            let slope = m.energy_per_context * m.time_per_token - m.time_per_context * m.energy_per_token;
            let p = discretize_profile(0, &m, 60_000.0, 1.0).unwrap();
            let body = &p.per_slot[..p.slots() - 1];
            for w in body.windows(2) {
                if slope > 0.0 {
                    assert!(w[1] >= w[0]);
                } else {
                    assert!(w[1] <= w[0]);
                }
            }
            // Finite-difference rate at the start and end of service.
            let h = 1e-3;
            let r0 = (energy_at_time(&m, 1.0 + h) - energy_at_time(&m, 1.0 - h)) / (2.0 * h);
            let r1 = (energy_at_time(&m, p.time - 1.0 + h) - energy_at_time(&m, p.time - 1.0 - h)) / (2.0 * h);
            assert_eq!((r1 - r0).signum(), slope.signum());
        }
    }

    proptest! {
        #[test]
        fn telescoping_sum_equals_total(
            params in 1e8f64..1e11,
            layers in 1u32..96,
            d_attn in 64u32..8192,
            tokens in 1.0f64..2e5,
            slot in 0.05f64..5.0,
        ) {
            let m = derive_coefficients(
                &ModelDims { name: "p".into(), params, n_layers: layers, d_attn },
                &HardwareSpec::reference(),
            ).unwrap();
            let p = discretize_profile(0, &m, tokens, slot).unwrap();
            let sum: f64 = p.per_slot.iter().sum();
            prop_assert!(((sum - p.energy) / p.energy).abs() < 1e-9);
            prop_assert!(p.per_slot.iter().all(|&e| e >= 0.0));
            prop_assert_eq!(p.slots(), ((p.time / slot).ceil() as usize).max(1));
            let back = invert_time(&m, p.time);
            prop_assert!(((back - tokens) / tokens).abs() < 1e-10);
        }
    }
}
