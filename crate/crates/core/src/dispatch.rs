//! Feasibility, minimum-energy routing, noisy routing and the two myopic
//! consumption processes.
//!
//! Every task is dispatched in its arrival slot. Routing only ever picks a
//! model from the feasible set, so deadlines and tolerances hold by
//! construction.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::energetics::{discretize_profile, ExpenditureProfile};
use crate::error::{Error, Result};
use crate::model::{CatalogEntry, ModelProfile, ScalingFit, TaskDescriptor, TaskInstance};
use crate::scaling::{capability, min_token_budget, success_prob, CapabilityParams};

/// Minimum-energy way to meet a task's tolerance on one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServicePlan {
    pub model: usize,
    /// Minimum token budget Ω*.
    pub tokens: f64,
    /// Minimum service time τ* in slots.
    pub slots: u64,
    /// Minimum energy E* (J).
    pub energy: f64,
    /// ψ(Ω*), at least 1 − ε.
    pub success: f64,
    #[serde(skip)]
    pub profile: Arc<ExpenditureProfile>,
}

/// Computes (Ω*, τ*, E*) for one task on one model.
pub fn min_service_time(
    descriptor: &TaskDescriptor,
    tolerance: f64,
    model_index: usize,
    model: &ModelProfile,
    scaling: &ScalingFit,
    slot_seconds: f64,
) -> Result<ServicePlan> {
    let p = capability(descriptor.difficulty, model.params, scaling)?;
    let params = CapabilityParams::new(p, descriptor.skills, scaling.tokens_per_skill)?;
    let tokens = min_token_budget(&params, tolerance).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("model `{}`: {msg}", model.name)),
        other => other,
    })?;
    let profile = discretize_profile(model_index, model, tokens, slot_seconds)?;
    Ok(ServicePlan {
        model: model_index,
        tokens,
        slots: profile.slots() as u64,
        energy: profile.energy,
        success: success_prob(&params, tokens)?,
        profile: Arc::new(profile),
    })
}

/// A routing decision for one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub task: TaskInstance,
    pub model: usize,
    pub tokens: f64,
    pub slots: u64,
    /// Energy of the chosen allocation (J), excluding dispatcher overhead.
    pub energy: f64,
    /// Energy above the arrival-feasible lower bound (J).
    pub excess: f64,
    /// Dispatcher energy charged in the dispatch slot (J).
    pub self_energy: f64,
    /// ψ at the allocated budget.
    pub success: f64,
    #[serde(skip)]
    pub profile: Arc<ExpenditureProfile>,
}

impl Allocation {
    pub fn dispatch_slot(&self) -> u64 {
        self.task.dispatch.unwrap_or(self.task.arrival)
    }

    /// Checks the deadline s + ξ + τ ≤ t0 + λ and tolerance ψ ≥ 1 − ε.
    pub fn check(&self, self_latency: u64) -> Result<()> {
        let finish = self.dispatch_slot() + self_latency + self.slots;
        let due = self.task.arrival + self.task.requirement.deadline;
        if finish > due {
            return Err(Error::ConstraintViolation(format!(
                "task arriving at slot {} finishes at {finish} after its deadline {due}",
                self.task.arrival
            )));
        }
        let target = 1.0 - self.task.requirement.tolerance;
        if self.success < target {
            return Err(Error::ConstraintViolation(format!(
                "task arriving at slot {} succeeds with probability {} < {target}",
                self.task.arrival, self.success
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PlanKey {
    difficulty: u64,
    skills: u32,
    tolerance: u64,
}

impl PlanKey {
    fn new(descriptor: &TaskDescriptor, tolerance: f64) -> Self {
        PlanKey {
            difficulty: descriptor.difficulty.to_bits(),
            skills: descriptor.skills,
            tolerance: tolerance.to_bits(),
        }
    }
}

/// Per-model plans for one task type; `None` where the model cannot meet the tolerance.
type PlanSet = Vec<Option<Arc<ServicePlan>>>;

/// Routes tasks over a fixed set of hosted models. Plans for catalog task
/// types are computed once up front.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    models: Vec<ModelProfile>,
    scaling: ScalingFit,
    slot_seconds: f64,
    self_energy: f64,
    self_latency: u64,
    plans: HashMap<PlanKey, PlanSet>,
}

/// Arrival-feasible lower bound statistics over a weighted catalog.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundStats {
    /// C̄_LB = K̄ E[E_LB] (J/slot).
    pub rate: f64,
    /// K̄ E[E_LB²] (J²/slot).
    pub second_moment: f64,
    /// E_LB per catalog entry (J).
    pub per_entry: Vec<f64>,
}

impl Dispatcher {
    pub fn new(
        models: Vec<ModelProfile>,
        scaling: ScalingFit,
        slot_seconds: f64,
        self_energy: f64,
        self_latency: u64,
    ) -> Self {
        Dispatcher {
            models,
            scaling,
            slot_seconds,
            self_energy,
            self_latency,
            plans: HashMap::new(),
        }
    }

    /// Precomputes plans for every task type in `catalog`.
    pub fn with_catalog(mut self, catalog: &[CatalogEntry]) -> Result<Self> {
        for entry in catalog {
            let key = PlanKey::new(&entry.descriptor(), entry.tolerance);
            if !self.plans.contains_key(&key) {
                let set = self.compute_plans(&entry.descriptor(), entry.tolerance)?;
                self.plans.insert(key, set);
            }
        }
        Ok(self)
    }

    pub fn models(&self) -> &[ModelProfile] {
        &self.models
    }

    pub fn self_latency(&self) -> u64 {
        self.self_latency
    }

    pub fn self_energy(&self) -> f64 {
        self.self_energy
    }

    fn compute_plans(&self, descriptor: &TaskDescriptor, tolerance: f64) -> Result<PlanSet> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                match min_service_time(descriptor, tolerance, i, m, &self.scaling, self.slot_seconds) {
                    Ok(plan) => Ok(Some(Arc::new(plan))),
                    Err(Error::Infeasible(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }

    fn plans_for(&self, task: &TaskInstance) -> Result<std::borrow::Cow<'_, PlanSet>> {
        let key = PlanKey::new(&task.descriptor, task.requirement.tolerance);
        match self.plans.get(&key) {
            Some(set) => Ok(std::borrow::Cow::Borrowed(set)),
            None => Ok(std::borrow::Cow::Owned(
                self.compute_plans(&task.descriptor, task.requirement.tolerance)?,
            )),
        }
    }

    /// (Ω*, τ*, E*) of `task` on model `model`.
    pub fn min_service_time(&self, task: &TaskInstance, model: usize) -> Result<ServicePlan> {
        let m = self
            .models
            .get(model)
            .ok_or_else(|| Error::validation("model", format!("no model with index {model}")))?;
        min_service_time(
            &task.descriptor,
            task.requirement.tolerance,
            model,
            m,
            &self.scaling,
            self.slot_seconds,
        )
    }

    /// Models whose minimum service time fits the remaining slack at `now`,
    /// after deducting the dispatcher's own latency.
    pub fn feasible_set(&self, task: &TaskInstance, now: u64) -> Result<Vec<usize>> {
        let plans = self.plans_for(task)?;
        Ok(feasible_indices(&plans, self.effective_slack(task, now)))
    }

    fn effective_slack(&self, task: &TaskInstance, now: u64) -> u64 {
        task.slack(now).saturating_sub(self.self_latency)
    }

    /// Arrival-feasible minimum energy E_LB of `task`.
    pub fn lower_bound_energy(&self, task: &TaskInstance) -> Result<f64> {
        let plans = self.plans_for(task)?;
        self.lb_from(&plans, task)
    }

    /// argmin energy over the feasible set; ties go to the smaller model.
    fn cheapest(&self, plans: &PlanSet, feasible: &[usize]) -> Option<usize> {
        feasible.iter().copied().min_by(|&i, &j| {
            let (pi, pj) = (plans[i].as_ref().unwrap(), plans[j].as_ref().unwrap());
            pi.energy
                .total_cmp(&pj.energy)
                .then(self.models[i].params.total_cmp(&self.models[j].params))
                .then(i.cmp(&j))
        })
    }

    fn allocate(&self, task: &TaskInstance, now: u64, plan: &ServicePlan, lower_bound: f64) -> Allocation {
        let mut task = *task;
        task.dispatch = Some(now);
        Allocation {
            task,
            model: plan.model,
            tokens: plan.tokens,
            slots: plan.slots,
            energy: plan.energy,
            excess: (plan.energy - lower_bound).max(0.0),
            self_energy: self.self_energy,
            success: plan.success,
            profile: Arc::clone(&plan.profile),
        }
    }

    /// Minimum-energy feasible model at `now`.
    pub fn route_lb(&self, task: &TaskInstance, now: u64) -> Result<Allocation> {
        let plans = self.plans_for(task)?;
        let feasible = feasible_indices(&plans, self.effective_slack(task, now));
        let best = self.cheapest(&plans, &feasible).ok_or_else(|| infeasible(task, now))?;
        let lower_bound = self.lb_from(&plans, task)?;
        Ok(self.allocate(task, now, plans[best].as_ref().unwrap(), lower_bound))
    }

    fn lb_from(&self, plans: &PlanSet, task: &TaskInstance) -> Result<f64> {
        let at_arrival = feasible_indices(plans, self.effective_slack(task, task.arrival));
        self.cheapest(plans, &at_arrival)
            .map(|i| plans[i].as_ref().unwrap().energy)
            .ok_or_else(|| infeasible(task, task.arrival))
    }

    /// With probability `error` routes to a uniformly chosen feasible model
    /// other than the minimum-energy one; otherwise behaves as [`route_lb`].
    /// Exactly one uniform is drawn per call, plus one index draw on a misroute.
    ///
    /// [`route_lb`]: Dispatcher::route_lb
    pub fn route_noisy<R: Rng + ?Sized>(
        &self,
        task: &TaskInstance,
        now: u64,
        error: f64,
        rng: &mut R,
    ) -> Result<Allocation> {
        let plans = self.plans_for(task)?;
        let feasible = feasible_indices(&plans, self.effective_slack(task, now));
        let best = self.cheapest(&plans, &feasible).ok_or_else(|| infeasible(task, now))?;
        let lower_bound = self.lb_from(&plans, task)?;
        let misroute = rng.random::<f64>() < error;
        let chosen = if misroute && feasible.len() > 1 {
            let others: Vec<usize> = feasible.iter().copied().filter(|&i| i != best).collect();
            others[rng.random_range(0..others.len())]
        } else {
            best
        };
        Ok(self.allocate(task, now, plans[chosen].as_ref().unwrap(), lower_bound))
    }

    /// Routes every arriving task in its arrival slot.
    pub fn dispatch_myopic<P: RoutingPolicy + ?Sized>(
        &self,
        arrivals: &[Vec<TaskInstance>],
        policy: &mut P,
    ) -> Result<Vec<Allocation>> {
        let mut out = Vec::with_capacity(arrivals.iter().map(Vec::len).sum());
        for (t, batch) in arrivals.iter().enumerate() {
            for task in batch {
                out.push(policy.route(self, task, t as u64)?);
            }
        }
        Ok(out)
    }

    /// C̄_LB and its second-moment companion for a weighted catalog.
    /// Fails listing every catalog entry that has no feasible model.
    pub fn lower_bound_stats(&self, catalog: &[CatalogEntry], rate: f64) -> Result<LowerBoundStats> {
        let mut per_entry = Vec::with_capacity(catalog.len());
        let mut bad = Vec::new();
        for (k, entry) in catalog.iter().enumerate() {
            match self.lower_bound_energy(&entry.instantiate(0)) {
                Ok(e) => per_entry.push(e),
                Err(Error::Infeasible(_)) => bad.push(format!(
                    "#{k} (difficulty {}, deadline {:?})",
                    entry.difficulty, entry.deadline
                )),
                Err(e) => return Err(e),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Infeasible(format!("catalog entries without a feasible model: {}", bad.join(", "))));
        }
        let (mean, second) = catalog
            .iter()
            .zip(&per_entry)
            .fold((0.0, 0.0), |(m, s), (entry, &e)| (m + entry.weight * e, s + entry.weight * e * e));
        Ok(LowerBoundStats {
            rate: rate * mean,
            second_moment: rate * second,
            per_entry,
        })
    }

    /// Per-model plans for a task, `None` where the tolerance is unreachable.
    pub fn plans(&self, task: &TaskInstance) -> Result<Vec<Option<ServicePlan>>> {
        Ok(self
            .plans_for(task)?
            .iter()
            .map(|p| p.as_deref().cloned())
            .collect())
    }
}

fn feasible_indices(plans: &PlanSet, slack: u64) -> Vec<usize> {
    plans
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().filter(|p| p.slots <= slack).map(|_| i))
        .collect()
}

fn infeasible(task: &TaskInstance, now: u64) -> Error {
    Error::Infeasible(format!(
        "no model meets tolerance {} for difficulty {} with {} skills within slack {} at slot {now}",
        task.requirement.tolerance,
        task.descriptor.difficulty,
        task.descriptor.skills,
        task.slack(now)
    ))
}

/// A dispatch policy invoked once per arriving task.
pub trait RoutingPolicy {
    fn route(&mut self, dispatcher: &Dispatcher, task: &TaskInstance, now: u64) -> Result<Allocation>;
}

/// Always the arrival-feasible minimum.
#[derive(Debug, Clone, Copy, Default)]
pub struct LowerBoundPolicy;

impl RoutingPolicy for LowerBoundPolicy {
    fn route(&mut self, dispatcher: &Dispatcher, task: &TaskInstance, now: u64) -> Result<Allocation> {
        dispatcher.route_lb(task, now)
    }
}

/// Misroutes with a fixed probability.
#[derive(Debug, Clone)]
pub struct NoisyPolicy<R> {
    pub error: f64,
    pub rng: R,
}

impl<R: Rng> RoutingPolicy for NoisyPolicy<R> {
    fn route(&mut self, dispatcher: &Dispatcher, task: &TaskInstance, now: u64) -> Result<Allocation> {
        dispatcher.route_noisy(task, now, self.error, &mut self.rng)
    }
}

/// Per-slot energy consumption C_t (J).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsumptionSeries(pub Vec<f64>);

impl ConsumptionSeries {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Charges each allocation's full energy (plus dispatcher overhead) in its
/// dispatch slot.
pub fn lumped_consumption(allocations: &[Allocation], horizon: usize) -> ConsumptionSeries {
    let mut c = vec![0.0; horizon];
    for a in allocations {
        let s = a.dispatch_slot() as usize;
        if s < horizon {
            c[s] += a.energy + a.self_energy;
        }
    }
    ConsumptionSeries(c)
}

/// Spreads each allocation over its service slots. Dispatcher overhead is
/// charged in the dispatch slot. Energy past the horizon is dropped.
pub fn distributed_consumption(allocations: &[Allocation], horizon: usize) -> ConsumptionSeries {
    let mut c = vec![0.0; horizon];
    for a in allocations {
        let s = a.dispatch_slot() as usize;
        if s >= horizon {
            continue;
        }
        c[s] += a.self_energy;
        for (u, e) in a.profile.per_slot.iter().enumerate() {
            match c.get_mut(s + u) {
                Some(slot) => *slot += e,
                None => break,
            }
        }
    }
    ConsumptionSeries(c)
}
