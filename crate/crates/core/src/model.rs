//! Shared domain types: hardware, hosted models, scaling fit, tasks,
//! arrival and harvest models, and the top-level system configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accelerator characteristics shared by every hosted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    /// Energy per parameter memory access (J).
    pub e_mem: f64,
    /// Energy per floating-point operation (J).
    pub e_comp: f64,
    /// Memory bandwidth (parameters/s).
    pub bandwidth: f64,
    /// Compute throughput (FLOP/s).
    pub throughput: f64,
}

impl HardwareSpec {
    pub fn reference() -> Self {
        HardwareSpec {
            e_mem: 1e-11,
            e_comp: 1e-12,
            bandwidth: 5e12,
            throughput: 2e13,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        positive(&format!("{path}.e_mem"), self.e_mem)?;
        positive(&format!("{path}.e_comp"), self.e_comp)?;
        positive(&format!("{path}.bandwidth"), self.bandwidth)?;
        positive(&format!("{path}.throughput"), self.throughput)
    }
}

/// Architecture of a hosted model as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub name: String,
    /// Parameter count N.
    pub params: f64,
    pub n_layers: u32,
    pub d_attn: u32,
}

/// A hosted model together with its per-token energy and latency coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelProfile {
    pub name: String,
    pub params: f64,
    pub n_layers: u32,
    pub d_attn: u32,
    /// Context-independent energy per token (J/token).
    pub energy_per_token: f64,
    /// Energy per token per unit of context (J/token/token).
    pub energy_per_context: f64,
    /// Context-independent time per token (s/token).
    pub time_per_token: f64,
    /// Time per token per unit of context (s/token/token).
    pub time_per_context: f64,
}

impl ModelProfile {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            name: self.name.clone(),
            params: self.params,
            n_layers: self.n_layers,
            d_attn: self.d_attn,
        }
    }
}

/// Builds a [`ModelProfile`] from raw dimensions:
///
/// ```text
/// energy_per_token   = (E_mem + 2 E_comp) N
/// energy_per_context = E_comp n_layers d_attn
/// time_per_token     = N / BW + 2N / TP
/// time_per_context   = n_layers d_attn / TP
/// ```
pub fn derive_coefficients(dims: &ModelDims, hardware: &HardwareSpec) -> Result<ModelProfile> {
    positive("params", dims.params)?;
    if dims.n_layers == 0 {
        return Err(Error::validation("n_layers", "must be positive"));
    }
    if dims.d_attn == 0 {
        return Err(Error::validation("d_attn", "must be positive"));
    }
    nonnegative("hardware.e_mem", hardware.e_mem)?;
    nonnegative("hardware.e_comp", hardware.e_comp)?;
    positive("hardware.bandwidth", hardware.bandwidth)?;
    positive("hardware.throughput", hardware.throughput)?;

    let n = dims.params;
    let attn = f64::from(dims.n_layers) * f64::from(dims.d_attn);
    Ok(ModelProfile {
        name: dims.name.clone(),
        params: n,
        n_layers: dims.n_layers,
        d_attn: dims.d_attn,
        energy_per_token: (hardware.e_mem + 2.0 * hardware.e_comp) * n,
        energy_per_context: hardware.e_comp * attn,
        time_per_token: n / hardware.bandwidth + 2.0 * n / hardware.throughput,
        time_per_context: attn / hardware.throughput,
    })
}

/// Parametric loss fit in the form of Hoffmann et al. (2022):
/// L(N, D) = E + A/N^alpha + B/D^beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoffmannFit {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub e: f64,
}

impl HoffmannFit {
    pub fn chinchilla() -> Self {
        HoffmannFit {
            a: 406.4,
            b: 410.7,
            alpha: 0.34,
            beta: 0.28,
            e: 1.69,
        }
    }
}

/// Compute-optimal loss L(N) = l_irr + gamma_coef · N^(−gamma_exp) plus the
/// capability sigmoid steepness and tokens per skill attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingFit {
    pub l_irr: f64,
    pub gamma_coef: f64,
    pub gamma_exp: f64,
    pub steepness: f64,
    pub tokens_per_skill: f64,
}

impl ScalingFit {
    /// Collapses a Hoffmann fit onto the compute-optimal frontier:
    /// gamma_exp = alpha, gamma_coef = A (1 + alpha/beta), l_irr = E.
    pub fn from_hoffmann(fit: HoffmannFit, steepness: f64, tokens_per_skill: f64) -> Self {
        ScalingFit {
            l_irr: fit.e,
            gamma_coef: fit.a * (1.0 + fit.alpha / fit.beta),
            gamma_exp: fit.alpha,
            steepness,
            tokens_per_skill,
        }
    }

    pub fn reference() -> Self {
        ScalingFit::from_hoffmann(HoffmannFit::chinchilla(), 5.0, 20.0)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        finite(&format!("{path}.l_irr"), self.l_irr)?;
        positive(&format!("{path}.gamma_coef"), self.gamma_coef)?;
        positive(&format!("{path}.gamma_exp"), self.gamma_exp)?;
        positive(&format!("{path}.steepness"), self.steepness)?;
        positive(&format!("{path}.tokens_per_skill"), self.tokens_per_skill)
    }
}

/// Task difficulty (pretraining-loss units) and number of sequential skills.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub difficulty: f64,
    pub skills: u32,
}

/// Deadline in slots and error tolerance in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub deadline: u64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskInstance {
    pub descriptor: TaskDescriptor,
    pub requirement: Requirement,
    /// Arrival slot t0.
    pub arrival: u64,
    /// Dispatch slot s, set once the router launches the task.
    pub dispatch: Option<u64>,
}

impl TaskInstance {
    pub fn new(descriptor: TaskDescriptor, requirement: Requirement, arrival: u64) -> Self {
        TaskInstance {
            descriptor,
            requirement,
            arrival,
            dispatch: None,
        }
    }

    /// Slots left before the deadline at slot `now`, clamped at zero.
    pub fn slack(&self, now: u64) -> u64 {
        (self.arrival + self.requirement.deadline).saturating_sub(now)
    }
}

/// One entry of the task catalog. A missing deadline is filled in during
/// validation with twice the slowest model's minimum service time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub difficulty: f64,
    pub skills: u32,
    pub tolerance: f64,
    #[serde(default)]
    pub deadline: Option<u64>,
    pub weight: f64,
}

impl CatalogEntry {
    pub fn descriptor(&self) -> TaskDescriptor {
        TaskDescriptor {
            difficulty: self.difficulty,
            skills: self.skills,
        }
    }

    /// Requirement with the deadline resolved; unresolved deadlines read as 0.
    pub fn requirement(&self) -> Requirement {
        Requirement {
            deadline: self.deadline.unwrap_or(0),
            tolerance: self.tolerance,
        }
    }

    pub fn instantiate(&self, arrival: u64) -> TaskInstance {
        TaskInstance::new(self.descriptor(), self.requirement(), arrival)
    }
}

/// Poisson arrivals with i.i.d. task types drawn from a weighted catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalModel {
    /// Mean tasks per slot.
    pub rate: f64,
    pub catalog: Vec<CatalogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarvestKind {
    Constant,
    Gamma,
}

/// Renewable energy harvested per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestModel {
    pub kind: HarvestKind,
    /// Mean harvest per slot (J).
    pub mean: f64,
    /// Variance of the harvest per slot (J²). Ignored for the constant kind.
    #[serde(default)]
    pub variance: f64,
    /// Replace `mean` with the arrival-feasible lower bound rate during
    /// validation, placing the system at zero drift.
    #[serde(default)]
    pub tune_to_critical: bool,
}

impl HarvestModel {
    /// Moment-matched Gamma (shape, scale).
    pub fn gamma_params(&self) -> (f64, f64) {
        (self.mean * self.mean / self.variance, self.variance / self.mean)
    }

    /// Variance actually produced by the sampler.
    pub fn effective_variance(&self) -> f64 {
        match self.kind {
            HarvestKind::Constant => 0.0,
            HarvestKind::Gamma => self.variance,
        }
    }
}

/// Complete simulator configuration, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub hardware: HardwareSpec,
    pub models: Vec<ModelDims>,
    pub scaling: ScalingFit,
    pub arrivals: ArrivalModel,
    pub harvest: HarvestModel,
    /// Slot length Δ (s).
    pub slot_seconds: f64,
    /// Horizon T (slots).
    pub horizon: u64,
    /// Initial battery level B0 (J).
    #[serde(default)]
    pub initial_battery: f64,
    /// Probability of routing to a suboptimal feasible model.
    #[serde(default)]
    pub prediction_error: f64,
    /// Dispatcher energy per routed task (J).
    #[serde(default)]
    pub self_energy: f64,
    /// Dispatcher latency per routed task (slots).
    #[serde(default)]
    pub self_latency: u64,
}

impl SystemConfig {
    /// Two-model reference setup: 1B and 10B parameter models, ten tasks with
    /// difficulty linearly spaced on [1.7, 1.9], Gamma harvest tuned to the
    /// critical regime.
    pub fn reference() -> Self {
        let dims = |name: &str, params: f64| ModelDims {
            name: name.to_string(),
            params,
            n_layers: 48,
            d_attn: 2048,
        };
        let catalog = (0..10)
            .map(|k| {
                let deadline = match k {
                    0 | 9 => Some(100),
                    // Only the large model finishes within 17 slots.
                    4 => Some(17),
                    _ => None,
                };
                CatalogEntry {
                    difficulty: 1.7 + 0.2 * k as f64 / 9.0,
                    skills: 50,
                    tolerance: 0.1,
                    deadline,
                    weight: 0.1,
                }
            })
            .collect();
        SystemConfig {
            hardware: HardwareSpec::reference(),
            models: vec![dims("small", 1e9), dims("large", 1e10)],
            scaling: ScalingFit::reference(),
            arrivals: ArrivalModel { rate: 1.0, catalog },
            harvest: HarvestModel {
                kind: HarvestKind::Gamma,
                mean: 593.5,
                variance: 4e5,
                tune_to_critical: true,
            },
            slot_seconds: 1.0,
            horizon: 10_000,
            initial_battery: 0.0,
            prediction_error: 0.0,
            self_energy: 0.0,
            self_latency: 0,
        }
    }
}

pub(crate) fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must be finite, got {v}")))
    }
}

pub(crate) fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must be positive, got {v}")))
    }
}

pub(crate) fn nonnegative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must be nonnegative, got {v}")))
    }
}
