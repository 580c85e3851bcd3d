//! Battery dynamics: the unconstrained path, greedy auxiliary injection
//! and the deficit.
//!
//! The battery has no capacity cap and no leakage. The greedy controller
//! injects the least auxiliary energy that keeps the level nonnegative, and
//! its cumulative injection equals the deepest excursion of the unconstrained
//! path below zero.

use serde::Serialize;

use crate::error::{Error, Result};

/// One trial's battery history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryTrace {
    /// Unconstrained level B_t, t = 0..=T (may be negative).
    pub uncontrolled: Vec<f64>,
    /// Controlled level B̃_t, t = 0..=T.
    pub controlled: Vec<f64>,
    /// Auxiliary injections G_t, t = 0..T.
    pub injections: Vec<f64>,
    /// D_T = Σ G_t.
    pub deficit: f64,
}

impl BatteryTrace {
    pub fn simulate(harvest: &[f64], consumption: &[f64], initial: f64) -> Result<Self> {
        let uncontrolled = uncontrolled_path(harvest, consumption, initial)?;
        let (controlled, injections) = greedy_controlled(harvest, consumption, initial)?;
        let deficit = injections.iter().sum();
        Ok(BatteryTrace {
            uncontrolled,
            controlled,
            injections,
            deficit,
        })
    }
}

fn check_lengths(harvest: &[f64], consumption: &[f64]) -> Result<()> {
    if harvest.len() == consumption.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            left: harvest.len(),
            right: consumption.len(),
        })
    }
}

/// B_{t+1} = B_t + R_t − C_t from B_0 = `initial`.
pub fn uncontrolled_path(harvest: &[f64], consumption: &[f64], initial: f64) -> Result<Vec<f64>> {
    check_lengths(harvest, consumption)?;
    let mut path = Vec::with_capacity(harvest.len() + 1);
    let mut level = initial;
    path.push(level);
    for (r, c) in harvest.iter().zip(consumption) {
        level += r - c;
        path.push(level);
    }
    Ok(path)
}

/// Greedy injections G_t = (−(B̃_t + R_t − C_t))⁺. Returns (B̃, G).
pub fn greedy_controlled(harvest: &[f64], consumption: &[f64], initial: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(harvest, consumption)?;
    let mut levels = Vec::with_capacity(harvest.len() + 1);
    let mut injections = Vec::with_capacity(harvest.len());
    let mut level = initial;
    levels.push(level);
    for (r, c) in harvest.iter().zip(consumption) {
        let next = level + r - c;
        let g = (-next).max(0.0);
        injections.push(g);
        level = next + g;
        levels.push(level);
    }
    Ok((levels, injections))
}

/// D_T = (−min_t B_t)⁺ over the whole path.
pub fn deficit(path: &[f64]) -> Result<f64> {
    let min = path
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    Ok((-min).max(0.0))
}

/// Running deficit D_t = (−min_{u≤t} B_u)⁺ for every t; nondecreasing.
pub fn running_deficit(path: &[f64]) -> Vec<f64> {
    let mut min = f64::INFINITY;
    path.iter()
        .map(|&b| {
            min = min.min(b);
            (-min).max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_recursion() {
        let r = [0.0, 0.0];
        let c = [3.0, 1.0];
        assert_eq!(uncontrolled_path(&r, &c, 1.0).unwrap(), vec![1.0, -2.0, -3.0]);
        let (levels, g) = greedy_controlled(&r, &c, 1.0).unwrap();
        assert_eq!(g, vec![2.0, 1.0]);
        assert_eq!(levels, vec![1.0, 0.0, 0.0]);
        assert_eq!(deficit(&[1.0, -2.0, -3.0]).unwrap(), 3.0);
    }

    #[test]
    fn balanced_and_charging_paths() {
        let r = [2.0, 5.0, 1.5];
        assert_eq!(uncontrolled_path(&r, &r, 4.0).unwrap(), vec![4.0; 4]);
        let path = uncontrolled_path(&[3.0; 5], &[0.0; 5], 1.0).unwrap();
        for (t, b) in path.iter().enumerate() {
            assert_eq!(*b, 1.0 + 3.0 * t as f64);
        }
    }

    #[test]
    fn no_injection_when_supply_covers_demand() {
        let (_, g) = greedy_controlled(&[3.0, 2.0, 5.0], &[1.0, 2.0, 4.0], 0.0).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_draw_down_injects_every_slot() {
        let (_, g) = greedy_controlled(&[0.0; 4], &[2.5; 4], 0.0).unwrap();
        assert_eq!(g, vec![2.5; 4]);
    }

    #[test]
    fn deficit_edge_cases() {
        assert_eq!(deficit(&[0.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(deficit(&[0.0]).unwrap(), 0.0);
        assert!(deficit(&[]).is_err());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            uncontrolled_path(&[1.0], &[1.0, 2.0], 0.0),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(greedy_controlled(&[1.0, 1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn running_deficit_is_monotone() {
        let d = running_deficit(&[0.0, -1.0, 2.0, -3.0, -2.0]);
        assert_eq!(d, vec![0.0, 1.0, 1.0, 3.0, 3.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn injections_equal_deficit(
            steps in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..200),
            initial in 0.0f64..100.0,
        ) {
            let (r, c): (Vec<f64>, Vec<f64>) = steps.into_iter().unzip();
            let trace = BatteryTrace::simulate(&r, &c, initial).unwrap();
            let d = deficit(&trace.uncontrolled).unwrap();
            let scale: f64 = c.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((trace.deficit - d).abs() <= 1e-9 * scale);

            let mut injected = 0.0;
            for t in 0..=r.len() {
                prop_assert!(trace.controlled[t] >= 0.0);
                prop_assert!((trace.controlled[t] - trace.uncontrolled[t] - injected).abs() <= 1e-9 * scale);
                if t < r.len() {
                    if trace.injections[t] > 0.0 {
                        prop_assert_eq!(trace.controlled[t + 1], 0.0);
                    }
                    injected += trace.injections[t];
                }
            }
        }
    }
}
