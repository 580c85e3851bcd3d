//! JSON configuration: loading, dotted-path overrides and validation.
//!
//! The document layout is described by `configs/config.schema.json`.
//! Energies are in joules, times in seconds, and deadlines/horizons in
//! integer slots of `slot_seconds` each.

use std::path::Path;

use serde_json::Value;

use crate::dispatch::{Dispatcher, LowerBoundStats};
use crate::error::{Error, Result};
use crate::model::{
    derive_coefficients, nonnegative, positive, HarvestKind, ModelProfile, SystemConfig,
};

/// A configuration whose invariants hold, with derived model profiles,
/// resolved deadlines and a ready dispatcher. Immutable once built.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    config: SystemConfig,
    dispatcher: Dispatcher,
    lower_bound: LowerBoundStats,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn profiles(&self) -> &[ModelProfile] {
        self.dispatcher.models()
    }

    /// C̄_LB and K̄ E[E_LB²] for the configured catalog.
    pub fn lower_bound(&self) -> &LowerBoundStats {
        &self.lower_bound
    }
}

/// Checks every invariant and normalizes the configuration: missing catalog
/// deadlines become twice the slowest model's minimum service time, and a
/// harvest marked `tune_to_critical` gets its mean set to C̄_LB.
pub fn validate_config(mut config: SystemConfig) -> Result<ValidatedConfig> {
    config.hardware.validate("hardware")?;
    if config.models.is_empty() {
        return Err(Error::validation("models", "at least one model is required"));
    }
    let profiles = config
        .models
        .iter()
        .enumerate()
        .map(|(i, dims)| {
            derive_coefficients(dims, &config.hardware).map_err(|e| match e {
                Error::Validation { path, reason } => Error::validation(format!("models.{i}.{path}"), reason),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    config.scaling.validate("scaling")?;
    positive("slot_seconds", config.slot_seconds)?;
    if config.horizon == 0 {
        return Err(Error::validation("horizon", "must be at least one slot"));
    }
    nonnegative("initial_battery", config.initial_battery)?;
    if !(0.0..=1.0).contains(&config.prediction_error) {
        return Err(Error::validation(
            "prediction_error",
            format!("{} outside [0, 1]", config.prediction_error),
        ));
    }
    nonnegative("self_energy", config.self_energy)?;

    let arrivals = &config.arrivals;
    nonnegative("arrivals.rate", arrivals.rate)?;
    if arrivals.catalog.is_empty() {
        return Err(Error::validation("arrivals.catalog", "catalog must not be empty"));
    }
    for (k, e) in arrivals.catalog.iter().enumerate() {
        let path = format!("arrivals.catalog.{k}");
        positive(&format!("{path}.difficulty"), e.difficulty)?;
        if e.skills == 0 {
            return Err(Error::validation(format!("{path}.skills"), "must be at least 1"));
        }
        if !(e.tolerance > 0.0 && e.tolerance < 1.0) {
            return Err(Error::validation(
                format!("{path}.tolerance"),
                format!("{} violates eps in (0,1)", e.tolerance),
            ));
        }
        if e.deadline == Some(0) {
            return Err(Error::validation(format!("{path}.deadline"), "must be a positive number of slots"));
        }
        nonnegative(&format!("{path}.weight"), e.weight)?;
    }
    let weight_sum: f64 = arrivals.catalog.iter().map(|e| e.weight).sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation("arrivals.catalog", format!("weights sum to {weight_sum}, expected 1")));
    }

    let harvest = &config.harvest;
    if !harvest.tune_to_critical {
        nonnegative("harvest.mean", harvest.mean)?;
    }
    nonnegative("harvest.variance", harvest.variance)?;
    if harvest.kind == HarvestKind::Gamma && harvest.variance == 0.0 {
        return Err(Error::validation(
            "harvest.variance",
            "a Gamma harvest needs positive variance; use kind = \"constant\" for a deterministic supply",
        ));
    }

    let dispatcher = Dispatcher::new(
        profiles,
        config.scaling,
        config.slot_seconds,
        config.self_energy,
        config.self_latency,
    )
    .with_catalog(&config.arrivals.catalog)?;

    for k in 0..config.arrivals.catalog.len() {
        if config.arrivals.catalog[k].deadline.is_some() {
            continue;
        }
        let probe = config.arrivals.catalog[k].instantiate(0);
        let slowest = dispatcher
            .plans(&probe)?
            .iter()
            .flatten()
            .map(|p| p.slots)
            .max()
            .ok_or_else(|| {
                Error::Infeasible(format!("arrivals.catalog.{k}: no model reaches the tolerance"))
            })?;
        config.arrivals.catalog[k].deadline = Some(2 * slowest + config.self_latency);
    }

    let lower_bound = dispatcher.lower_bound_stats(&config.arrivals.catalog, config.arrivals.rate)?;
    if config.harvest.tune_to_critical {
        config.harvest.mean = lower_bound.rate;
    }
    if config.harvest.kind == HarvestKind::Gamma && !(config.harvest.mean > 0.0) {
        return Err(Error::validation("harvest.mean", "a Gamma harvest needs a positive mean"));
    }

    Ok(ValidatedConfig {
        config,
        dispatcher,
        lower_bound,
    })
}

/// Parses a JSON document into a raw (unvalidated) configuration.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Applies `key=value` overrides addressed by dotted paths such as
/// `harvest.variance` or `arrivals.catalog.4.deadline`. Values are parsed as
/// JSON, falling back to a plain string. Paths must already exist in the
/// fully-expanded document.
pub fn apply_overrides(config: &SystemConfig, overrides: &[String]) -> Result<SystemConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut doc = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
        let value: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let slot = lookup_mut(&mut doc, key)
            .ok_or_else(|| Error::validation(key, "unknown override key"))?;
        *slot = value;
    }
    serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
}

fn lookup_mut<'a>(doc: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    key.split('.').try_fold(doc, |node, part| match node {
        Value::Object(map) => map.get_mut(part),
        Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_accepted() {
        let v = validate_config(SystemConfig::reference()).unwrap();
        let catalog = &v.config().arrivals.catalog;
        assert!(catalog.iter().all(|e| e.deadline.is_some()));
        assert_eq!(catalog[4].deadline, Some(17));
        assert!((v.config().harvest.mean - v.lower_bound().rate).abs() < 1e-12);
    }

    #[test]
    fn default_deadline_is_twice_the_slowest_model() {
        let v = validate_config(SystemConfig::reference()).unwrap();
        let entry = &v.config().arrivals.catalog[1];
        let plans = v.dispatcher().plans(&entry.instantiate(0)).unwrap();
        let slowest = plans.iter().flatten().map(|p| p.slots).max().unwrap();
        assert_eq!(entry.deadline, Some(2 * slowest));
        assert_eq!(v.dispatcher().feasible_set(&entry.instantiate(0), 0).unwrap().len(), 2);
    }

    #[test]
    fn unit_tolerance_rejected() {
        let mut cfg = SystemConfig::reference();
        cfg.arrivals.catalog[3].tolerance = 1.0;
        match validate_config(cfg) {
            Err(Error::Validation { path, reason }) => {
                assert_eq!(path, "arrivals.catalog.3.tolerance");
                assert!(reason.contains("(0,1)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_gamma_rejected_with_hint() {
        let mut cfg = SystemConfig::reference();
        cfg.harvest.variance = 0.0;
        match validate_config(cfg) {
            Err(Error::Validation { path, reason }) => {
                assert_eq!(path, "harvest.variance");
                assert!(reason.contains("constant"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_paths_in_errors() {
        let mut cfg = SystemConfig::reference();
        cfg.models[1].params = -1.0;
        assert!(matches!(validate_config(cfg), Err(Error::Validation { path, .. }) if path == "models.1.params"));

        let mut cfg = SystemConfig::reference();
        cfg.arrivals.catalog.clear();
        assert!(matches!(validate_config(cfg), Err(Error::Validation { path, .. }) if path == "arrivals.catalog"));

        let mut cfg = SystemConfig::reference();
        cfg.arrivals.catalog[0].weight = 0.5;
        assert!(matches!(validate_config(cfg), Err(Error::Validation { path, .. }) if path == "arrivals.catalog"));

        let mut cfg = SystemConfig::reference();
        cfg.hardware.bandwidth = 0.0;
        assert!(matches!(validate_config(cfg), Err(Error::Validation { path, .. }) if path == "hardware.bandwidth"));

        let mut cfg = SystemConfig::reference();
        cfg.prediction_error = 1.5;
        assert!(matches!(validate_config(cfg), Err(Error::Validation { path, .. }) if path == "prediction_error"));
    }

    #[test]
    fn infeasible_deadline_is_reported() {
        let mut cfg = SystemConfig::reference();
        cfg.arrivals.catalog[0].deadline = Some(2);
        assert!(matches!(validate_config(cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn overrides_replace_existing_paths() {
        let cfg = SystemConfig::reference();
        let out = apply_overrides(
            &cfg,
            &[
                "harvest.variance=1000".into(),
                "arrivals.catalog.4.deadline=30".into(),
                "harvest.kind=constant".into(),
                "horizon=500".into(),
            ],
        )
        .unwrap();
        assert_eq!(out.harvest.variance, 1000.0);
        assert_eq!(out.arrivals.catalog[4].deadline, Some(30));
        assert_eq!(out.harvest.kind, HarvestKind::Constant);
        assert_eq!(out.horizon, 500);
    }

    #[test]
    fn unknown_override_rejected() {
        let cfg = SystemConfig::reference();
        assert!(matches!(
            apply_overrides(&cfg, &["harvest.colour=blue".into()]),
            Err(Error::Validation { .. })
        ));
        assert!(apply_overrides(&cfg, &["models.7.params=1".into()]).is_err());
        assert!(apply_overrides(&cfg, &["horizon".into()]).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = SystemConfig::reference();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        let bad = text.replacen("\"horizon\"", "\"horizen\"", 1);
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
    }
}
