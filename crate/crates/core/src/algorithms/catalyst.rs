//! SCAFFOLD-Catalyst-S: a server-level proximal-point loop whose
//! subproblems are solved by SCAFFOLD-S.
//!
//! At meta-iteration `t` every client objective gets the same penalty
//! `(theta/2)|x - xbar^t|^2 - (theta/2)|y - ybar^t|^2`, which raises both the
//! smoothness and the strong convexity-concavity by `theta` and leaves the
//! client differences `G_i - G_j` untouched. The inner run starts at the
//! anchor `zbar^t` and its final server point becomes `zbar^{t+1}`. With
//! exact inner solves the meta-iterates are proximal-point iterates and
//! contract toward `z*` by `1 - mu / (theta + mu)` per meta-iteration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point::SaddlePoint;
use crate::problem::{FederatedProblem, NoisyOracle, QueryNoise, Regularized};

use super::framework::{DirectionRule, RunState};
use super::runner::{drive_framework, AlgorithmConfig, DriveEnd, Recorder, RunOutput};
use super::schedule::SyncCoins;

/// When an inner SCAFFOLD-S run hands its point back to the meta loop.
/// Rules are evaluated at synchronization events only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStop {
    /// Exactly `rounds` communication rounds per meta-iteration.
    FixedRounds { rounds: u64 },
    /// Stop once `|z~ - prox(zbar^t)|^2 <= (mu / (2 (theta + mu)))^2 epsilon`.
    /// Needs an analytic proximal operator.
    ProxDistance { epsilon: f64, max_rounds: u64 },
    /// Stop once the regularized global mapping norm at the server point
    /// has dropped to `rho` times its value at the anchor.
    ObjectiveDecrease { rho: f64, max_rounds: u64 },
}

impl Default for InnerStop {
    fn default() -> Self {
        InnerStop::ObjectiveDecrease {
            rho: 0.1,
            max_rounds: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    #[default]
    Scaffold,
    /// Replace the inner run by the analytic proximal operator (one round
    /// per meta-iteration). Verification only.
    ExactProx,
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalystConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub stop: InnerStop,
    /// Cap on meta-iterations; unbounded (budget-limited) when absent.
    #[serde(default)]
    pub max_meta: Option<u64>,
    #[serde(default)]
    pub solver: InnerSolver,
}

impl Default for CatalystConfig {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            stop: InnerStop::default(),
            max_meta: None,
            solver: InnerSolver::Scaffold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaEnd {
    /// The inner stopping rule fired.
    Converged,
    /// The global round budget ran out inside this meta-iteration.
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaRecord {
    pub t: u64,
    pub anchor: SaddlePoint,
    pub output: SaddlePoint,
    pub inner_rounds: u64,
    pub end: MetaEnd,
    /// Post-hoc `|zbar^{t+1} - prox(zbar^t)|`, when the prox is analytic.
    pub prox_distance: Option<f64>,
}

/// Runs SCAFFOLD-Catalyst-S for `budget` communication rounds. `inner`
/// supplies the SCAFFOLD-S settings (sync schedule, stepsizes, noise,
/// initial point); the anchor broadcast rides with the first round of each
/// inner run.
pub fn scaffold_catalyst_s<P: FederatedProblem>(
    config: &CatalystConfig,
    inner: &AlgorithmConfig,
    problem: &P,
    budget: u64,
    seed: u64,
) -> Result<RunOutput> {
    let theta = config.theta;
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(invalid(format!("theta must be non-negative, got {theta}")));
    }
    if budget < 1 {
        return Err(invalid("budget must be at least one communication round"));
    }
    match config.stop {
        InnerStop::ObjectiveDecrease { rho, .. } if !(rho > 0.0 && rho < 1.0) => {
            return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        InnerStop::FixedRounds { rounds: 0 } => return Err(invalid("fixed inner rounds must be positive")),
        InnerStop::ProxDistance { epsilon, .. } if !(epsilon > 0.0) => {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        _ => {}
    }

    let z0 = inner.init.resolve(problem.primal_dim(), problem.dual_dim())?;
    let mut recorder = Recorder::new(problem, inner, seed)?;

    if config.solver == InnerSolver::ExactProx {
        return exact_prox_loop(config, problem, budget, z0, recorder);
    }

    let n = problem.n_clients();
    let mut coins = SyncCoins::new(inner.sync, seed)?;
    let noise = QueryNoise::new(inner.sigma, seed)?;
    recorder.observe(0, 0, &z0, 0.0, Some(&z0), Some(0), false)?;

    if theta == 0.0 {
        // Unregularized: a single SCAFFOLD-S run on the original objective.
        let mut state = RunState::new(n, z0.clone()).with_control_variate(problem);
        let mut oracle = NoisyOracle::new(problem, noise);
        drive_framework(
            &mut state,
            &mut oracle,
            DirectionRule::Scaffold,
            &mut coins,
            &inner.steps,
            budget,
            &mut recorder,
            Some(0),
            |_| false,
        )?;
        let record = MetaRecord {
            t: 0,
            anchor: z0,
            output: state.server.clone(),
            inner_rounds: state.comm_rounds,
            end: MetaEnd::Budget,
            prox_distance: None,
        };
        let (iterations, rounds) = (state.iteration, state.comm_rounds);
        return recorder.finish(state.server, iterations, rounds, vec![record]);
    }

    let mu = problem.constants().mu;
    let mut noise = Some(noise);
    let mut anchor = z0;
    let mut meta = Vec::new();
    let (mut iterations, mut rounds) = (0u64, 0u64);
    let mut t = 0u64;
    while rounds < budget && config.max_meta.is_none_or(|cap| t < cap) {
        let exact = problem.exact_prox(theta, &anchor).transpose()?;
        let prox_tol = match config.stop {
            InnerStop::ProxDistance { epsilon, .. } => {
                if exact.is_none() {
                    return Err(Error::Config(
                        "prox-distance stopping needs a problem with an analytic proximal operator".into(),
                    ));
                }
                (mu / (2.0 * (theta + mu))).powi(2) * epsilon
            }
            _ => 0.0,
        };

        let reg = Regularized::new(problem, theta, anchor.clone())?;
        let mut state = RunState::new(n, anchor.clone()).with_control_variate(&reg);
        state.iteration = iterations;
        state.comm_rounds = rounds;
        let start_norm = state.control_variate.as_ref().map_or(0.0, SaddlePoint::norm);
        let start_rounds = rounds;
        let stop = config.stop;
        let target = exact.clone();
        let should_stop = move |s: &RunState| {
            let inner_rounds = s.comm_rounds - start_rounds;
            match stop {
                InnerStop::FixedRounds { rounds } => inner_rounds >= rounds,
                InnerStop::ObjectiveDecrease { rho, max_rounds } => {
                    inner_rounds >= max_rounds
                        || s.control_variate.as_ref().map_or(0.0, SaddlePoint::norm) <= rho * start_norm
                }
                InnerStop::ProxDistance { max_rounds, .. } => {
                    inner_rounds >= max_rounds
                        || target
                            .as_ref()
                            .is_some_and(|p| s.server.distance_sq(p) <= prox_tol)
                }
            }
        };

        let mut oracle = NoisyOracle::new(reg, noise.take().expect("noise stream present"));
        let end = drive_framework(
            &mut state,
            &mut oracle,
            DirectionRule::Scaffold,
            &mut coins,
            &inner.steps,
            budget,
            &mut recorder,
            Some(t),
            should_stop,
        )?;
        noise = Some(oracle.into_noise());

        iterations = state.iteration;
        rounds = state.comm_rounds;
        meta.push(MetaRecord {
            t,
            anchor: anchor.clone(),
            output: state.server.clone(),
            inner_rounds: rounds - start_rounds,
            end: match end {
                DriveEnd::Budget => MetaEnd::Budget,
                DriveEnd::Stopped => MetaEnd::Converged,
            },
            prox_distance: exact.as_ref().map(|p| p.distance(&state.server)),
        });
        anchor = state.server;
        t += 1;
    }
    recorder.finish(anchor, iterations, rounds, meta)
}

/// Proximal-point iteration with the analytic prox standing in for the
/// inner solver; one row and one round per meta-iteration.
fn exact_prox_loop<P: FederatedProblem>(
    config: &CatalystConfig,
    problem: &P,
    budget: u64,
    z0: SaddlePoint,
    mut recorder: Recorder<'_, P>,
) -> Result<RunOutput> {
    if !(config.theta > 0.0) {
        return Err(invalid("exact-prox mode needs theta > 0"));
    }
    let steps = match config.max_meta {
        Some(cap) => cap.min(budget),
        None => budget,
    };
    recorder.observe(0, 0, &z0, 0.0, Some(&z0), Some(0), steps == 0)?;
    let mut anchor = z0;
    let mut meta = Vec::new();
    for t in 0..steps {
        let next = problem
            .exact_prox(config.theta, &anchor)
            .ok_or_else(|| Error::Config("problem has no analytic proximal operator".into()))??;
        recorder.observe(t + 1, t + 1, &next, 0.0, Some(&next), Some(t), t + 1 == steps)?;
        meta.push(MetaRecord {
            t,
            anchor: anchor.clone(),
            output: next.clone(),
            inner_rounds: 1,
            end: MetaEnd::Converged,
            prox_distance: Some(0.0),
        });
        anchor = next;
    }
    recorder.finish(anchor, steps, steps, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::runner::{run_algorithm, AlgorithmKind};
    use crate::algorithms::schedule::{StepsizeSchedule, SyncSchedule};
    use crate::problem::GradientOracle;
    use crate::testbed::generate_instance;

    fn inner(gamma: f64) -> AlgorithmConfig {
        AlgorithmConfig::new(
            AlgorithmKind::ScaffoldCatalystS,
            SyncSchedule::Deterministic { tau: 20 },
            StepsizeSchedule::constant(gamma, gamma),
        )
    }

    #[test]
    fn zero_theta_matches_scaffold_trace() {
        let inst = generate_instance(5.0, 6, 5, 1e-5, 4).unwrap();
        let mut cat = inner(0.02);
        cat.catalyst.theta = 0.0;
        let mut plain = cat.clone();
        plain.algorithm = AlgorithmKind::ScaffoldS;
        let a = run_algorithm(&cat, &inst, 30, 9).unwrap();
        let b = run_algorithm(&plain, &inst, 30, 9).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.k, rb.k);
            assert_eq!(ra.comm_rounds, rb.comm_rounds);
            assert_eq!(ra.dist_sq.map(f64::to_bits), rb.dist_sq.map(f64::to_bits));
            assert_eq!(ra.gap.map(f64::to_bits), rb.gap.map(f64::to_bits));
            assert_eq!(ra.drift.to_bits(), rb.drift.to_bits());
            assert_eq!(ra.cv_error.map(f64::to_bits), rb.cv_error.map(f64::to_bits));
        }
        assert_eq!(a.output, b.output);
    }

    #[test]
    fn negative_theta_rejected() {
        let inst = generate_instance(1.0, 3, 3, 1e-5, 4).unwrap();
        let mut cat = inner(0.05);
        cat.catalyst.theta = -1.0;
        assert!(matches!(run_algorithm(&cat, &inst, 10, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exact_prox_meta_iterates_contract() {
        let inst = generate_instance(4.0, 5, 5, 0.01, 2).unwrap();
        let star = inst.optimal_point().unwrap();
        let mu = inst.mu();
        for theta in [mu, inst.beta() - mu] {
            let mut cat = inner(0.05);
            cat.catalyst = CatalystConfig {
                theta,
                solver: InnerSolver::ExactProx,
                ..CatalystConfig::default()
            };
            let out = run_algorithm(&cat, &inst, 20, 0).unwrap();
            let factor = 1.0 - mu / (theta + mu);
            for m in &out.meta {
                let before = m.anchor.distance(&star);
                let after = m.output.distance(&star);
                assert!(after <= factor * before + 1e-9, "theta={theta}: {after} > {factor}*{before}");
            }
        }
    }

    #[test]
    fn meta_loop_accumulates_rounds_and_converges() {
        let inst = generate_instance(5.0, 10, 10, 1e-5, 1).unwrap();
        let cat = inner(0.02);
        let out = run_algorithm(&cat, &inst, 200, 3).unwrap();
        assert_eq!(out.comm_rounds, 200);
        assert!(out.meta.len() > 1);
        let total: u64 = out.meta.iter().map(|m| m.inner_rounds).sum();
        assert_eq!(total, 200);
        for w in out.meta.windows(2) {
            assert_eq!(w[0].output, w[1].anchor);
        }
        let first = out.trace.first().unwrap().dist_sq.unwrap();
        let last = out.trace.last().unwrap().dist_sq.unwrap();
        assert!(last < 1e-3 * first, "{first} -> {last}");
        assert!(out.trace.iter().all(|r| r.meta_t.is_some()));
    }

    #[test]
    fn fixed_rounds_rule_splits_budget_evenly() {
        let inst = generate_instance(2.0, 4, 4, 1e-5, 1).unwrap();
        let mut cat = inner(0.05);
        cat.catalyst.stop = InnerStop::FixedRounds { rounds: 4 };
        let out = run_algorithm(&cat, &inst, 20, 3).unwrap();
        assert_eq!(out.meta.len(), 5);
        assert!(out.meta.iter().all(|m| m.inner_rounds == 4));
        assert_eq!(out.meta.last().unwrap().end, MetaEnd::Budget);
    }

    #[test]
    fn prox_distance_rule_meets_its_target() {
        let inst = generate_instance(5.0, 10, 10, 1e-5, 7).unwrap();
        let mut cat = inner(0.02);
        let mu = inst.mu();
        let theta = 1.0;
        // Target distance 1e-4.
        let epsilon = 1e-8 / (mu / (2.0 * (theta + mu))).powi(2);
        cat.catalyst.stop = InnerStop::ProxDistance { epsilon, max_rounds: 50 };
        cat.catalyst.max_meta = Some(3);
        let out = run_algorithm(&cat, &inst, 500, 3).unwrap();
        assert_eq!(out.meta.len(), 3);
        for m in &out.meta {
            assert_eq!(m.end, MetaEnd::Converged);
            assert!(m.prox_distance.unwrap() <= 1e-4);
        }
    }

    #[test]
    fn regularized_inner_problem_keeps_client_differences() {
        let inst = generate_instance(9.0, 4, 3, 1e-5, 5).unwrap();
        let anchor = SaddlePoint::filled(4, 4, 0.3);
        let reg = Regularized::new(&inst, 2.5, anchor).unwrap();
        let z = SaddlePoint::filled(4, 4, -1.1);
        let plain = inst.client_mapping(0, &z).distance(&inst.client_mapping(2, &z));
        let wrapped = reg.client_mapping(0, &z).distance(&reg.client_mapping(2, &z));
        assert!((plain - wrapped).abs() <= 1e-12);
        let c = reg.constants();
        assert_eq!(c.mu, inst.mu() + 2.5);
        assert_eq!(c.beta, inst.beta() + 2.5);
    }
}
