//! Energy-aware routing of reasoning-model tasks under a stochastic
//! renewable supply.
//!
//! A hosted model's per-token energy and latency grow linearly with context,
//! so a task of Ω tokens costs αΩ + βΩ² joules over aΩ + bΩ² seconds. The
//! token budget a task needs comes from a scaling-law capability model, and a
//! myopic dispatcher routes each arriving task to the cheapest model that
//! meets its deadline. The gap between harvested and consumed energy drives a
//! battery whose worst shortfall, the deficit D_T, is what the auxiliary
//! supply must cover. Its expectation grows like √T at zero drift and
//! linearly once misrouting adds a negative drift.
//!
//! ```
//! use ecoroute::{validate_config, SystemConfig, Experiment};
//!
//! let mut cfg = SystemConfig::reference();
//! cfg.horizon = 500;
//! let exp = Experiment::new(validate_config(cfg).unwrap(), 1);
//! let trial = exp.run_trial(0.0, 0).unwrap();
//! assert!(trial.final_deficit >= 0.0);
//! ```

pub mod battery;
pub mod config;
pub mod diffusion;
pub mod dispatch;
pub mod energetics;
pub mod error;
pub mod model;
pub mod regime;
pub mod scaling;
pub mod sim;
pub mod special;
pub mod verify;

pub use battery::{deficit, greedy_controlled, running_deficit, uncontrolled_path, BatteryTrace};
pub use config::{apply_overrides, load_config, parse_config, validate_config, ValidatedConfig};
pub use diffusion::{
    deficit_cdf, deficit_quantile, deviation_curve, expected_deficit, myopic_moments, regime_asymptote,
    DriftSpec, MyopicMoments,
};
pub use dispatch::{
    distributed_consumption, lumped_consumption, min_service_time, Allocation, ConsumptionSeries, Dispatcher,
    LowerBoundPolicy, NoisyPolicy, RoutingPolicy, ServicePlan,
};
pub use energetics::{discretize_profile, ExpenditureProfile};
pub use error::{Error, Result};
pub use model::{
    derive_coefficients, ArrivalModel, CatalogEntry, HardwareSpec, HarvestKind, HarvestModel, ModelDims,
    ModelProfile, Requirement, ScalingFit, SystemConfig, TaskDescriptor, TaskInstance,
};
pub use regime::{detect_regime, BreakpointReport, Verdict};
pub use scaling::{capability, chinchilla_loss, min_token_budget, success_prob, CapabilityParams};
pub use sim::{ConsumptionMode, ErrorCurve, Experiment, SweepResult, TrialResult};
pub use verify::{run_suite, Suite, VerifyOptions, VerifyReport};
