use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream_rng, streams, SimRng};

/// When clients synchronize with the server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncSchedule {
    /// One coin per iteration; synchronize with probability `p`.
    Probabilistic { p: f64 },
    /// Synchronize after exactly `tau` local steps.
    Deterministic { tau: usize },
}

impl SyncSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SyncSchedule::Probabilistic { p } if !(p > 0.0 && p <= 1.0) => {
                Err(invalid(format!("sync probability must lie in (0, 1], got {p}")))
            }
            SyncSchedule::Deterministic { tau: 0 } => Err(invalid("tau must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Local steps per round: `tau`, or `round(1/p)` in probabilistic mode.
    pub fn steps_per_round(&self) -> usize {
        match *self {
            SyncSchedule::Probabilistic { p } => ((1.0 / p).round() as usize).max(1),
            SyncSchedule::Deterministic { tau } => tau,
        }
    }
}

/// The coin stream `c_k` of a run.
#[derive(Debug, Clone)]
pub struct SyncCoins {
    schedule: SyncSchedule,
    rng: SimRng,
}

impl SyncCoins {
    pub fn new(schedule: SyncSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            rng: stream_rng(seed, streams::SYNC_COINS),
        })
    }

    pub fn schedule(&self) -> SyncSchedule {
        self.schedule
    }

    /// Flips the coin for the current iteration. `local_steps` counts the
    /// local steps taken since the last synchronization, including the
    /// current one.
    pub fn flip(&mut self, local_steps: usize) -> bool {
        match self.schedule {
            SyncSchedule::Probabilistic { p } => self.rng.random::<f64>() < p,
            SyncSchedule::Deterministic { tau } => local_steps >= tau,
        }
    }
}

/// Parameters of the log-corrected stepsize
/// `min{gamma_max, ln(max{2, min{a mu^2 K^2 / c1, a mu^3 K^3 / c2}}) / (c3 mu K)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremStepsize {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma_max: f64,
    pub mu: f64,
    /// Iteration horizon `K`.
    pub horizon: u64,
}

/// Evaluates the log-corrected stepsize. A zero `c1` or `c2` makes the
/// corresponding ratio `+inf`; an infinite logarithm saturates at
/// `gamma_max`.
pub fn theorem_stepsize(t: &TheoremStepsize) -> Result<f64> {
    if !(t.mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {}", t.mu)));
    }
    if t.horizon < 1 {
        return Err(invalid("horizon K must be at least 1"));
    }
    if !(t.gamma_max > 0.0) {
        return Err(invalid(format!("gamma_max must be positive, got {}", t.gamma_max)));
    }
    if !(t.c1 >= 0.0 && t.c2 >= 0.0 && t.a >= 0.0) {
        return Err(invalid("a, c1 and c2 must be non-negative"));
    }
    if !(t.c3 > 0.0 && t.c3 <= 1.0) {
        return Err(invalid(format!("c3 must lie in (0, 1], got {}", t.c3)));
    }
    let k = t.horizon as f64;
    let ratio = |num: f64, den: f64| if den == 0.0 { f64::INFINITY } else { num / den };
    let inner = ratio(t.a * t.mu.powi(2) * k.powi(2), t.c1).min(ratio(t.a * t.mu.powi(3) * k.powi(3), t.c2));
    let arg = inner.max(2.0);
    if arg.is_infinite() {
        return Ok(t.gamma_max);
    }
    Ok(t.gamma_max.min(arg.ln() / (t.c3 * t.mu * k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepsizeMode {
    #[default]
    Constant,
    /// Both stepsizes scaled by `1 / (sqrt(k) + 1)` at iteration `k`.
    Decaying,
    /// Constant stepsizes resolved from [`theorem_stepsize`].
    Theorem(TheoremStepsize),
}

/// Local and global stepsizes of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    pub gamma_l: f64,
    pub gamma_g: f64,
    #[serde(default)]
    pub mode: StepsizeMode,
}

impl StepsizeSchedule {
    pub fn constant(gamma_l: f64, gamma_g: f64) -> Self {
        Self {
            gamma_l,
            gamma_g,
            mode: StepsizeMode::Constant,
        }
    }

    pub fn decaying(gamma_l: f64, gamma_g: f64) -> Self {
        Self {
            gamma_l,
            gamma_g,
            mode: StepsizeMode::Decaying,
        }
    }

    /// `gamma_l = gamma_g = theorem_stepsize(params)`.
    pub fn theorem(params: TheoremStepsize) -> Result<Self> {
        let gamma = theorem_stepsize(&params)?;
        Ok(Self {
            gamma_l: gamma,
            gamma_g: gamma,
            mode: StepsizeMode::Theorem(params),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_l", self.gamma_l), ("gamma_g", self.gamma_g)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Multiplier applied to both stepsizes at iteration `k`.
    pub fn factor(&self, k: u64) -> f64 {
        match self.mode {
            StepsizeMode::Decaying => 1.0 / ((k as f64).sqrt() + 1.0),
            StepsizeMode::Constant | StepsizeMode::Theorem(_) => 1.0,
        }
    }

    pub fn local(&self, k: u64) -> f64 {
        self.gamma_l * self.factor(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TheoremStepsize {
        TheoremStepsize {
            a: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 0.25,
            gamma_max: 10.0,
            mu: 1.0,
            horizon: 100,
        }
    }

    #[test]
    fn theorem_stepsize_reference_value() {
        // min{10, ln(min{1e4, 1e6}) / 25}
        let g = theorem_stepsize(&params()).unwrap();
        assert!((g - 0.368_413_614_879_047_4).abs() < 1e-12, "{g}");
    }

    #[test]
    fn theorem_stepsize_saturates() {
        let mut p = params();
        p.gamma_max = 0.01;
        assert_eq!(theorem_stepsize(&p).unwrap(), 0.01);
        p.c1 = 0.0;
        p.c2 = 0.0;
        p.gamma_max = 3.0;
        assert_eq!(theorem_stepsize(&p).unwrap(), 3.0);
    }

    #[test]
    fn theorem_stepsize_floor_at_log_two() {
        let mut p = params();
        p.a = 0.0;
        let g = theorem_stepsize(&p).unwrap();
        assert!((g - 2f64.ln() / 25.0).abs() < 1e-15);
    }

    #[test]
    fn theorem_stepsize_rejects_bad_input() {
        let mut p = params();
        p.mu = 0.0;
        assert!(theorem_stepsize(&p).is_err());
        let mut p = params();
        p.horizon = 0;
        assert!(theorem_stepsize(&p).is_err());
    }

    #[test]
    fn decaying_factor() {
        let s = StepsizeSchedule::decaying(0.1, 0.1);
        assert_eq!(s.local(0), 0.1);
        assert_eq!(s.local(4), 0.1 / 3.0);
        assert_eq!(StepsizeSchedule::constant(0.1, 0.2).local(99), 0.1);
    }

    #[test]
    fn deterministic_coins_fire_every_tau() {
        let mut coins = SyncCoins::new(SyncSchedule::Deterministic { tau: 3 }, 0).unwrap();
        let fired: Vec<bool> = (1..=3).map(|s| coins.flip(s)).collect();
        assert_eq!(fired, vec![false, false, true]);
    }

    #[test]
    fn probabilistic_coins_reproducible() {
        let sched = SyncSchedule::Probabilistic { p: 0.3 };
        let mut a = SyncCoins::new(sched, 9).unwrap();
        let mut b = SyncCoins::new(sched, 9).unwrap();
        let fa: Vec<bool> = (0..100).map(|_| a.flip(1)).collect();
        let fb: Vec<bool> = (0..100).map(|_| b.flip(1)).collect();
        assert_eq!(fa, fb);
        assert!(fa.iter().any(|&c| c) && fa.iter().any(|&c| !c));
    }

    #[test]
    fn schedule_validation() {
        assert!(SyncSchedule::Probabilistic { p: 0.0 }.validate().is_err());
        assert!(SyncSchedule::Probabilistic { p: 1.5 }.validate().is_err());
        assert!(SyncSchedule::Deterministic { tau: 0 }.validate().is_err());
        assert_eq!(SyncSchedule::Probabilistic { p: 0.05 }.steps_per_round(), 20);
        assert!(StepsizeSchedule::constant(-0.1, 0.1).validate().is_err());
    }
}
