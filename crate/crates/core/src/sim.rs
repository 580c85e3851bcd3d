//! Monte Carlo harness: samples arrivals and harvests, runs myopic trials,
//! aggregates the deficit over trials and sweeps the prediction error.
//!
//! Each trial owns two ChaCha8 streams derived from (master seed, trial
//! index): one for arrivals and harvest, one for routing. Trials with the
//! same index therefore see identical arrivals and harvest at every error
//! level, and results do not depend on how trials are scheduled.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::battery::{running_deficit, uncontrolled_path};
use crate::config::ValidatedConfig;
use crate::diffusion::{myopic_moments, MyopicMoments};
use crate::dispatch::{distributed_consumption, lumped_consumption, NoisyPolicy};
use crate::error::{Error, Result};
use crate::model::{ArrivalModel, HarvestKind, HarvestModel, TaskInstance};
use crate::regime::{detect_regime, BreakpointReport, DEFAULT_BIC_PENALTY};

pub const DEFAULT_CHECKPOINTS: usize = 40;
const FIRST_CHECKPOINT: u64 = 100;

/// Poisson task counts per slot, each task drawn from the catalog weights.
/// Catalog deadlines must already be resolved.
pub fn sample_arrivals<R: Rng + ?Sized>(
    model: &ArrivalModel,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Vec<TaskInstance>>> {
    if model.rate == 0.0 {
        return Ok(vec![Vec::new(); horizon]);
    }
    let counts = Poisson::new(model.rate)
        .map_err(|e| Error::validation("arrivals.rate", e.to_string()))?;
    let picker = WeightedIndex::new(model.catalog.iter().map(|e| e.weight))
        .map_err(|e| Error::validation("arrivals.catalog", e.to_string()))?;
    Ok((0..horizon)
        .map(|t| {
            let k = counts.sample(rng) as usize;
            (0..k)
                .map(|_| model.catalog[picker.sample(rng)].instantiate(t as u64))
                .collect()
        })
        .collect())
}

/// I.i.d. per-slot harvest; Gamma draws are moment matched.
pub fn sample_harvest<R: Rng + ?Sized>(model: &HarvestModel, horizon: usize, rng: &mut R) -> Result<Vec<f64>> {
    match model.kind {
        HarvestKind::Constant => Ok(vec![model.mean; horizon]),
        HarvestKind::Gamma => {
            if !(model.mean > 0.0 && model.variance > 0.0) {
                return Err(Error::validation(
                    "harvest",
                    format!("Gamma harvest needs positive mean and variance, got {} and {}", model.mean, model.variance),
                ));
            }
            let (shape, scale) = model.gamma_params();
            let dist = Gamma::new(shape, scale).map_err(|e| Error::validation("harvest", e.to_string()))?;
            Ok((0..horizon).map(|_| dist.sample(rng)).collect())
        }
    }
}

/// Roughly geometric grid of `count` slots on [100, horizon], rounded and
/// deduplicated. Short horizons start at slot 1.
pub fn checkpoint_grid(horizon: u64, count: usize) -> Vec<u64> {
    let lo = if horizon > FIRST_CHECKPOINT { FIRST_CHECKPOINT } else { 1 } as f64;
    let hi = horizon as f64;
    let mut grid: Vec<u64> = match count {
        0 => Vec::new(),
        1 => vec![horizon],
        _ => (0..count)
            .map(|i| (lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).round() as u64)
            .collect(),
    };
    grid.iter_mut().for_each(|t| *t = (*t).clamp(1, horizon));
    grid.dedup();
    grid
}

/// D_t at each checkpoint for given harvest and consumption series.
pub fn deficit_checkpoints(harvest: &[f64], consumption: &[f64], initial: f64, checkpoints: &[u64]) -> Result<Vec<f64>> {
    let path = uncontrolled_path(harvest, consumption, initial)?;
    let running = running_deficit(&path);
    checkpoints
        .iter()
        .map(|&t| {
            running.get(t as usize).copied().ok_or_else(|| {
                Error::validation("checkpoints", format!("slot {t} beyond horizon {}", harvest.len()))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsumptionMode {
    /// Full energy charged at dispatch.
    #[default]
    Lumped,
    /// Energy spread over the service slots.
    Distributed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub trial: u64,
    pub error: f64,
    pub checkpoints: Vec<u64>,
    /// Running deficit at each checkpoint.
    pub deficits: Vec<f64>,
    pub final_deficit: f64,
    pub tasks: usize,
    /// Allocations with positive excess over the lower bound.
    pub misroutes: usize,
    /// Σ ΔE over all tasks (J).
    pub total_excess: f64,
}

/// Mean deficit curve at one prediction error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub error: f64,
    pub checkpoints: Vec<u64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over √trials.
    pub stderr: Vec<f64>,
    pub trials: usize,
    /// Mean ΔE per task pooled over trials (J).
    pub mean_excess: f64,
    pub misroute_fraction: f64,
    /// Drift implied by the measured excess, −K̄ (E[ΔE] + self energy).
    pub measured_drift: f64,
    /// 2σ_B²/(πμ²) for the measured drift; absent at zero drift.
    pub analytic_crossing: Option<f64>,
    pub regime: BreakpointReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub seed: u64,
    pub moments: MyopicMoments,
    pub curves: Vec<ErrorCurve>,
}

/// A validated system with a master seed and checkpoint grid.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ValidatedConfig,
    seed: u64,
    checkpoints: Vec<u64>,
    mode: ConsumptionMode,
}

impl Experiment {
    pub fn new(config: ValidatedConfig, seed: u64) -> Self {
        let checkpoints = checkpoint_grid(config.config().horizon, DEFAULT_CHECKPOINTS);
        Experiment {
            config,
            seed,
            checkpoints,
            mode: ConsumptionMode::Lumped,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Result<Self> {
        let horizon = self.config.config().horizon;
        if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("checkpoints", "must be nonempty and strictly increasing"));
        }
        if *checkpoints.last().unwrap() > horizon {
            return Err(Error::validation("checkpoints", format!("must not exceed the horizon {horizon}")));
        }
        self.checkpoints = checkpoints;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: ConsumptionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &ValidatedConfig {
        &self.config
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    fn streams(&self, trial: u64) -> (ChaCha8Rng, ChaCha8Rng) {
        let mut env = ChaCha8Rng::seed_from_u64(self.seed);
        env.set_stream(2 * trial);
        let mut routing = ChaCha8Rng::seed_from_u64(self.seed);
        routing.set_stream(2 * trial + 1);
        (env, routing)
    }

    /// One trial at prediction error `error`. Fails on an infeasible task or
    /// if any allocation breaks its deadline or tolerance.
    pub fn run_trial(&self, error: f64, trial: u64) -> Result<TrialResult> {
        if !(0.0..=1.0).contains(&error) {
            return Err(Error::validation("prediction_error", format!("{error} outside [0, 1]")));
        }
        let cfg = self.config.config();
        let horizon = cfg.horizon as usize;
        let (mut env, routing) = self.streams(trial);
        let arrivals = sample_arrivals(&cfg.arrivals, horizon, &mut env)?;
        let harvest = sample_harvest(&cfg.harvest, horizon, &mut env)?;

        let dispatcher = self.config.dispatcher();
        let mut policy = NoisyPolicy { error, rng: routing };
        let allocations = dispatcher.dispatch_myopic(&arrivals, &mut policy)?;
        for a in &allocations {
            a.check(dispatcher.self_latency())?;
        }
        let consumption = match self.mode {
            ConsumptionMode::Lumped => lumped_consumption(&allocations, horizon),
            ConsumptionMode::Distributed => distributed_consumption(&allocations, horizon),
        };
        let deficits = deficit_checkpoints(&harvest, consumption.as_slice(), cfg.initial_battery, &self.checkpoints)?;
        let path = uncontrolled_path(&harvest, consumption.as_slice(), cfg.initial_battery)?;
        let final_deficit = crate::battery::deficit(&path)?;
        Ok(TrialResult {
            seed: self.seed,
            trial,
            error,
            checkpoints: self.checkpoints.clone(),
            deficits,
            final_deficit,
            tasks: allocations.len(),
            misroutes: allocations.iter().filter(|a| a.excess > 0.0).count(),
            total_excess: allocations.iter().map(|a| a.excess).sum(),
        })
    }

    /// Runs `trials` trials per error level. `threads` caps the worker count;
    /// 1 runs everything on the calling thread. Output is identical for any
    /// thread count.
    pub fn sweep_error(&self, errors: &[f64], trials: usize, threads: usize) -> Result<SweepResult> {
        if trials < 2 {
            return Err(Error::validation("trials", format!("need at least 2, got {trials}")));
        }
        if errors.is_empty() {
            return Err(Error::validation("errors", "at least one prediction error is required"));
        }
        let run = |error: f64| -> Result<Vec<TrialResult>> {
            if threads <= 1 {
                (0..trials as u64).map(|i| self.run_trial(error, i)).collect()
            } else {
                (0..trials as u64).into_par_iter().map(|i| self.run_trial(error, i)).collect()
            }
        };
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let moments = myopic_moments(&self.config);
        let curves = errors
            .iter()
            .map(|&error| {
                let results = match &pool {
                    Some(p) => p.install(|| run(error)),
                    None => run(error),
                }?;
                self.aggregate(error, &results, &moments)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            seed: self.seed,
            moments,
            curves,
        })
    }

    fn aggregate(&self, error: f64, results: &[TrialResult], moments: &MyopicMoments) -> Result<ErrorCurve> {
        let n = results.len() as f64;
        let k = self.checkpoints.len();
        let mut mean = vec![0.0; k];
        for r in results {
            for (m, d) in mean.iter_mut().zip(&r.deficits) {
                *m += d;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let stderr = (0..k)
            .map(|j| {
                let ss: f64 = results.iter().map(|r| (r.deficits[j] - mean[j]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt() / n.sqrt()
            })
            .collect();

        let tasks: usize = results.iter().map(|r| r.tasks).sum();
        let excess: f64 = results.iter().map(|r| r.total_excess).sum();
        let misroutes: usize = results.iter().map(|r| r.misroutes).sum();
        let (mean_excess, misroute_fraction) = if tasks == 0 {
            (0.0, 0.0)
        } else {
            (excess / tasks as f64, misroutes as f64 / tasks as f64)
        };
        let cfg = self.config.config();
        let measured_drift = -cfg.arrivals.rate * (mean_excess + cfg.self_energy);
        let analytic_crossing = (measured_drift != 0.0)
            .then(|| 2.0 * moments.variance / (std::f64::consts::PI * measured_drift * measured_drift));

        let horizons: Vec<f64> = self.checkpoints.iter().map(|&t| t as f64).collect();
        let regime = detect_regime(&horizons, &mean, DEFAULT_BIC_PENALTY, None)?;
        Ok(ErrorCurve {
            error,
            checkpoints: self.checkpoints.clone(),
            mean,
            stderr,
            trials: results.len(),
            mean_excess,
            misroute_fraction,
            measured_drift,
            analytic_crossing,
            regime,
        })
    }
}
