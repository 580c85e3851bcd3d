//! Self-checking invariant suites with machine-readable reports.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::battery::{deficit, greedy_controlled, uncontrolled_path};
use crate::config::ValidatedConfig;
use crate::diffusion::{deficit_cdf, deficit_quantile, deviation_curve, expected_deficit, DriftSpec};
use crate::dispatch::{distributed_consumption, lumped_consumption, LowerBoundPolicy, NoisyPolicy};
use crate::error::{Error, Result};
use crate::sim::{sample_arrivals, sample_harvest};
use crate::special::reg_inc_beta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Thm1,
    LumpedDominance,
    VarianceLemma,
    BetaOracle,
    Donsker,
    Continuity,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Thm1,
        Suite::LumpedDominance,
        Suite::VarianceLemma,
        Suite::BetaOracle,
        Suite::Donsker,
        Suite::Continuity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Thm1 => "thm1",
            Suite::LumpedDominance => "lumped-dominance",
            Suite::VarianceLemma => "variance-lemma",
            Suite::BetaOracle => "beta-oracle",
            Suite::Donsker => "donsker",
            Suite::Continuity => "continuity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
            Error::validation("suite", format!("unknown suite `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Sample sizes for the randomized suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random scenarios for `thm1` and `lumped-dominance`.
    pub scenarios: usize,
    /// Trials for `variance-lemma`.
    pub trials: usize,
    /// Horizon for `variance-lemma`.
    pub variance_horizon: usize,
    /// Random-walk paths and steps for `donsker`.
    pub paths: usize,
    pub steps: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            scenarios: 1_000,
            trials: 10_000,
            variance_horizon: 100,
            paths: 10_000,
            steps: 10_000,
        }
    }
}

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Reported alongside the checks but not gating.
    pub diagnostics: Vec<Check>,
    /// First failing input, when there is one.
    pub counterexample: Option<serde_json::Value>,
}

impl VerifyReport {
    fn new(suite: Suite, checks: Vec<Check>, counterexample: Option<serde_json::Value>) -> Self {
        VerifyReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
            diagnostics: Vec::new(),
            counterexample,
        }
    }
}

pub fn run_suite(suite: Suite, config: &ValidatedConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    match suite {
        Suite::Thm1 => Ok(thm1(options)),
        Suite::LumpedDominance => lumped_dominance(config, options),
        Suite::VarianceLemma => variance_lemma(config, options),
        Suite::BetaOracle => beta_oracle(),
        Suite::Donsker => donsker(options),
        Suite::Continuity => Ok(continuity()),
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Σ G_t against (−min B_t)⁺ on random signed increments.
fn thm1(options: &VerifyOptions) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst = 0.0f64;
    let mut counterexample = None;
    for _ in 0..options.scenarios {
        let len = rng.random_range(1..=500);
        let r: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..100.0)).collect();
        let c: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..100.0)).collect();
        let initial = rng.random_range(0.0..200.0);
        let path = uncontrolled_path(&r, &c, initial).expect("equal lengths");
        let (_, g) = greedy_controlled(&r, &c, initial).expect("equal lengths");
        let d = deficit(&path).expect("nonempty path");
        let injected: f64 = g.iter().sum();
        let err = (injected - d).abs() / d.max(100.0);
        if err > 1e-9 && counterexample.is_none() {
            counterexample = Some(json!({ "harvest": r, "consumption": c, "initial": initial, "injected": injected, "deficit": d }));
        }
        worst = worst.max(err);
    }
    VerifyReport::new(
        Suite::Thm1,
        vec![Check::at_most("max relative error of sum G_t vs deficit", worst, 1e-9)],
        counterexample,
    )
}

/// Distributed battery path stays at or above the lumped one.
fn lumped_dominance(config: &ValidatedConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    let cfg = config.config();
    let dispatcher = config.dispatcher();
    let mut violations = 0usize;
    let mut worst_gap = 0.0f64;
    let mut counterexample = None;
    for i in 0..options.scenarios as u64 {
        let mut rng = stream(options.seed, i);
        let horizon = rng.random_range(20..=300);
        let error = rng.random_range(0.0..=1.0);
        let initial = rng.random_range(0.0..2000.0);
        let arrivals = sample_arrivals(&cfg.arrivals, horizon, &mut rng)?;
        let harvest = sample_harvest(&cfg.harvest, horizon, &mut rng)?;
        let mut policy = NoisyPolicy { error, rng: stream(options.seed ^ 0x5eed, i) };
        let allocations = dispatcher.dispatch_myopic(&arrivals, &mut policy)?;
        let lump = lumped_consumption(&allocations, horizon);
        let dist = distributed_consumption(&allocations, horizon);
        let b_lump = uncontrolled_path(&harvest, lump.as_slice(), initial)?;
        let b_dist = uncontrolled_path(&harvest, dist.as_slice(), initial)?;
        let slack = 1e-9 * lump.total().max(1.0);
        for (t, (d, l)) in b_dist.iter().zip(&b_lump).enumerate() {
            worst_gap = worst_gap.max(d - l);
            if *d < *l - slack {
                violations += 1;
                if counterexample.is_none() {
                    counterexample = Some(json!({ "scenario": i, "slot": t, "distributed": d, "lumped": l }));
                }
            }
        }
    }
    let mut report = VerifyReport::new(
        Suite::LumpedDominance,
        vec![Check::at_most("slots with B_dist < B_lump", violations as f64, 0.0)],
        counterexample,
    );
    report.diagnostics.push(Check::at_most("max B_dist - B_lump (J)", worst_gap, f64::INFINITY));
    Ok(report)
}

/// Sample variance of total lumped consumption against K̄ T E[E²].
fn variance_lemma(config: &ValidatedConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    if options.trials < 2 {
        return Err(Error::validation("trials", "need at least 2"));
    }
    let cfg = config.config();
    let dispatcher = config.dispatcher();
    let horizon = options.variance_horizon;
    let totals = (0..options.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(options.seed, i);
            let arrivals = sample_arrivals(&cfg.arrivals, horizon, &mut rng)?;
            let allocations = dispatcher.dispatch_myopic(&arrivals, &mut LowerBoundPolicy)?;
            Ok(lumped_consumption(&allocations, horizon).total())
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let xi = dispatcher.self_energy();
    let second: f64 = cfg
        .arrivals
        .catalog
        .iter()
        .zip(&config.lower_bound().per_entry)
        .map(|(e, lb)| e.weight * (lb + xi).powi(2))
        .sum();
    let predicted = cfg.arrivals.rate * horizon as f64 * second;
    let rel = ((var - predicted) / predicted).abs();
    let mut report = VerifyReport::new(
        Suite::VarianceLemma,
        vec![Check::at_most("relative error of Var(sum C_t)", rel, 0.05)],
        (rel > 0.05).then(|| json!({ "empirical": var, "predicted": predicted, "trials": options.trials })),
    );
    report.diagnostics.push(Check::at_most("empirical variance (J^2)", var, f64::INFINITY));
    report.diagnostics.push(Check::at_most("predicted variance (J^2)", predicted, f64::INFINITY));
    Ok(report)
}

/// I_x(a, b) for integer a, b via the binomial tail
/// Σ_{j=a}^{a+b−1} C(a+b−1, j) x^j (1−x)^{a+b−1−j}.
pub fn binomial_beta_oracle(x: f64, a: u32, b: u32) -> f64 {
    let n = a + b - 1;
    let mut coef = 1.0;
    let mut sum = 0.0;
    for j in 0..=n {
        if j >= a {
            sum += coef * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
        coef = coef * f64::from(n - j) / f64::from(j + 1);
    }
    sum
}

fn beta_oracle() -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    let mut counterexample = None;
    for a in 1..=20u32 {
        for b in 1..=20u32 {
            for k in 0..=20 {
                let x = 0.05 * f64::from(k);
                let got = reg_inc_beta(x, f64::from(a), f64::from(b))?;
                let want = binomial_beta_oracle(x, a, b);
                let err = (got - want).abs();
                if err > 1e-9 && counterexample.is_none() {
                    counterexample = Some(json!({ "x": x, "a": a, "b": b, "got": got, "oracle": want }));
                }
                worst = worst.max(err);
            }
        }
    }
    Ok(VerifyReport::new(
        Suite::BetaOracle,
        vec![Check::at_most("max |I_x(a,b) - binomial sum|", worst, 1e-9)],
        counterexample,
    ))
}

/// Composite Simpson estimate of ∫₀^∞ P(D_T > z) dz, truncated where the
/// tail is negligible.
pub fn tail_integral(drift: &DriftSpec, horizon: f64, intervals: usize) -> Result<f64> {
    let upper = (-drift.mu * horizon).max(0.0) + 12.0 * drift.sigma * horizon.sqrt();
    let n = intervals + intervals % 2;
    let h = upper / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * (1.0 - deficit_cdf(i as f64 * h, drift, horizon)?);
    }
    Ok(sum * h / 3.0)
}

/// Deficits of `paths` Gaussian random walks with `steps` increments each.
pub fn random_walk_deficits(drift: &DriftSpec, paths: usize, steps: usize, seed: u64) -> Vec<f64> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let (mut level, mut min) = (0.0f64, 0.0f64);
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                level += drift.mu + drift.sigma * z;
                min = min.min(level);
            }
            -min
        })
        .collect()
}

pub const DONSKER_DRIFTS: [(f64, f64); 3] = [(0.0, 1.0), (0.01, 1.0), (-0.01, 1.0)];
pub const DONSKER_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

/// Random-walk deficits against the Brownian closed form, compared in
/// probability: |F_emp(z_q) − q| at the analytic quantiles z_q.
fn donsker(options: &VerifyOptions) -> Result<VerifyReport> {
    let horizon = options.steps as f64;
    let mut checks = Vec::new();
    let mut diagnostics = Vec::new();
    let mut counterexample = None;
    for (k, &(mu, sigma)) in DONSKER_DRIFTS.iter().enumerate() {
        let drift = DriftSpec::new(mu, sigma)?;
        let mut deficits = random_walk_deficits(&drift, options.paths, options.steps, options.seed.wrapping_add(k as u64));
        deficits.sort_by(f64::total_cmp);
        let n = deficits.len() as f64;
        for q in DONSKER_QUANTILES {
            let z = deficit_quantile(q, &drift, horizon)?;
            let below = deficits.partition_point(|&d| d <= z) as f64 / n;
            let err = (below - q).abs();
            if err > 0.02 && counterexample.is_none() {
                counterexample = Some(json!({ "mu": mu, "sigma": sigma, "quantile": q, "z": z, "empirical_cdf": below }));
            }
            checks.push(Check::at_most(format!("mu={mu} q={q}: |F_emp(z_q) - q|"), err, 0.02));
            let idx = ((q * n).ceil() as usize).clamp(1, deficits.len()) - 1;
            diagnostics.push(Check::at_most(
                format!("mu={mu} q={q}: relative quantile gap"),
                ((deficits[idx] - z) / z).abs(),
                f64::INFINITY,
            ));
        }
        let closed = expected_deficit(&drift, horizon);
        let integral = tail_integral(&drift, horizon, 20_000)?;
        checks.push(Check::at_most(
            format!("mu={mu}: expected deficit vs tail integral"),
            ((closed - integral) / closed).abs(),
            1e-3,
        ));
    }
    let mut report = VerifyReport::new(Suite::Donsker, checks, counterexample);
    report.diagnostics = diagnostics;
    Ok(report)
}

/// Expected deficit through μ = 0 and the deviation curve's peak.
fn continuity() -> VerifyReport {
    let mut worst = 0.0f64;
    let mut counterexample = None;
    for (sigma, horizon) in [(1.0, 1.0), (1.0, 100.0), (1.0, 1e4), (894.0, 1e4), (10.0, 1e6)] {
        let base = expected_deficit(&DriftSpec { mu: 0.0, sigma }, horizon);
        for mu in [1e-8, -1e-8] {
            let got = expected_deficit(&DriftSpec { mu, sigma }, horizon);
            let rel = ((got - base) / base).abs();
            if rel > 1e-6 && counterexample.is_none() {
                counterexample = Some(json!({ "mu": mu, "sigma": sigma, "T": horizon, "value": got, "zero_drift": base }));
            }
            worst = worst.max(rel);
        }
    }
    let peak = deviation_curve(&DriftSpec { mu: 0.0, sigma: 1.0 }, 1e4);
    VerifyReport::new(
        Suite::Continuity,
        vec![
            Check::at_most("max relative jump at mu = +-1e-8", worst, 1e-6),
            Check::at_most("|deviation(kappa=0) - 1|", (peak.deviation - 1.0).abs(), 0.0),
        ],
        counterexample,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;
    use crate::model::SystemConfig;

    fn small() -> VerifyOptions {
        VerifyOptions {
            seed: 9,
            scenarios: 50,
            trials: 500,
            variance_horizon: 50,
            paths: 300,
            steps: 400,
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("thm2".parse::<Suite>().is_err());
    }

    #[test]
    fn binomial_oracle_named_values() {
        assert!((binomial_beta_oracle(0.2, 2, 3) - 0.1808).abs() < 1e-14);
        assert!((binomial_beta_oracle(0.5, 2, 2) - 0.5).abs() < 1e-14);
        assert!((binomial_beta_oracle(0.3, 1, 1) - 0.3).abs() < 1e-14);
        assert_eq!(binomial_beta_oracle(0.0, 3, 4), 0.0);
        assert!((binomial_beta_oracle(1.0, 3, 4) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cheap_suites_pass() {
        let v = validate_config(SystemConfig::reference()).unwrap();
        for s in [Suite::Thm1, Suite::LumpedDominance, Suite::BetaOracle, Suite::Continuity] {
            let r = run_suite(s, &v, &small()).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(r.counterexample.is_none());
        }
    }

    #[test]
    fn small_donsker_run_reports_every_check() {
        let v = validate_config(SystemConfig::reference()).unwrap();
        let r = run_suite(Suite::Donsker, &v, &small()).unwrap();
        assert_eq!(r.checks.len(), 12);
        assert_eq!(r.diagnostics.len(), 9);
    }

    #[test]
    fn random_walk_deficits_are_reproducible() {
        let d = DriftSpec::new(0.0, 1.0).unwrap();
        let a = random_walk_deficits(&d, 20, 100, 1);
        assert_eq!(a, random_walk_deficits(&d, 20, 100, 1));
        assert!(a.iter().all(|&x| x >= 0.0));
    }
}
