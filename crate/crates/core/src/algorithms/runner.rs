use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{client_drift, solution_quality, TraceRow};
use crate::point::SaddlePoint;
use crate::problem::{FederatedProblem, GradientOracle, NoisyOracle, QueryNoise};

use super::averaging::AverageAccumulator;
use super::catalyst::{scaffold_catalyst_s, CatalystConfig, MetaRecord};
use super::framework::{framework_step, DirectionRule, RunState};
use super::minibatch::{minibatch_md_round, minibatch_mp_round};
use super::schedule::{StepsizeSchedule, SyncCoins, SyncSchedule};

/// Runs stop with [`Error::Diverged`] once the tracked point is farther
/// than this from the optimum (or from the origin when it is unknown).
pub const DIVERGENCE_RADIUS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    MinibatchMd,
    MinibatchMp,
    FedavgS,
    ScaffoldS,
    ScaffoldCatalystS,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::MinibatchMd,
        AlgorithmKind::MinibatchMp,
        AlgorithmKind::FedavgS,
        AlgorithmKind::ScaffoldS,
        AlgorithmKind::ScaffoldCatalystS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::MinibatchMd => "minibatch-md",
            AlgorithmKind::MinibatchMp => "minibatch-mp",
            AlgorithmKind::FedavgS => "fedavg-s",
            AlgorithmKind::ScaffoldS => "scaffold-s",
            AlgorithmKind::ScaffoldCatalystS => "scaffold-catalyst-s",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm {s:?}; expected one of minibatch-md, minibatch-mp, fedavg-s, scaffold-s, scaffold-catalyst-s"
                ))
            })
    }
}

/// Starting point of a run: every coordinate set to one value, or an
/// explicit point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPoint {
    Constant(f64),
    Point(SaddlePoint),
}

impl Default for InitialPoint {
    fn default() -> Self {
        InitialPoint::Constant(1.0)
    }
}

impl InitialPoint {
    pub fn resolve(&self, primal_dim: usize, dual_dim: usize) -> Result<SaddlePoint> {
        match self {
            InitialPoint::Constant(v) => Ok(SaddlePoint::filled(primal_dim, dual_dim, *v)),
            InitialPoint::Point(z) => {
                z.check_shape(primal_dim, dual_dim)?;
                Ok(z.clone())
            }
        }
    }
}

/// What a run reports as its output point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputRule {
    #[default]
    Last,
    /// Geometric iterate average with weights `(1 - c3 gamma mu)^(1-k)`.
    Weighted { c3: f64 },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub algorithm: AlgorithmKind,
    pub sync: SyncSchedule,
    pub steps: StepsizeSchedule,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub init: InitialPoint,
    #[serde(default)]
    pub catalyst: CatalystConfig,
    #[serde(default)]
    pub output: OutputRule,
    /// Record every `thin`-th row (the final row is always recorded).
    #[serde(default = "one")]
    pub thin: usize,
}

impl AlgorithmConfig {
    pub fn new(algorithm: AlgorithmKind, sync: SyncSchedule, steps: StepsizeSchedule) -> Self {
        Self {
            algorithm,
            sync,
            steps,
            sigma: 0.0,
            init: InitialPoint::default(),
            catalyst: CatalystConfig::default(),
            output: OutputRule::Last,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sync.validate()?;
        self.steps.validate()?;
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if self.algorithm == AlgorithmKind::FedavgS && self.steps.gamma_g != self.steps.gamma_l {
            return Err(Error::Config(format!(
                "fedavg-s uses a single stepsize; got gamma_l = {} and gamma_g = {}",
                self.steps.gamma_l, self.steps.gamma_g
            )));
        }
        if self.algorithm == AlgorithmKind::ScaffoldCatalystS && self.output != OutputRule::Last {
            return Err(Error::Config("weighted output is not defined for catalyst runs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub output: SaddlePoint,
    pub iterations: u64,
    pub comm_rounds: u64,
    /// One entry per catalyst meta-iteration; empty otherwise.
    pub meta: Vec<MetaRecord>,
}

/// Collects trace rows, the optional weighted average, and watches for
/// divergence. Metrics are always taken against the original problem.
pub(crate) struct Recorder<'a, P> {
    problem: &'a P,
    z_star: Option<SaddlePoint>,
    star_maps: Option<Vec<SaddlePoint>>,
    algorithm: &'static str,
    s: Option<f64>,
    seed: u64,
    gamma: f64,
    thin: u64,
    averager: Option<AverageAccumulator>,
    rows: Vec<TraceRow>,
}

impl<'a, P: FederatedProblem> Recorder<'a, P> {
    pub(crate) fn new(problem: &'a P, config: &AlgorithmConfig, seed: u64) -> Result<Self> {
        let z_star = problem.optimum();
        let star_maps = z_star
            .as_ref()
            .map(|star| (0..problem.n_clients()).map(|i| problem.client_mapping(i, star)).collect());
        let averager = match config.output {
            OutputRule::Last => None,
            OutputRule::Weighted { c3 } => {
                let gamma = match config.algorithm {
                    AlgorithmKind::MinibatchMd | AlgorithmKind::MinibatchMp => config.steps.gamma_g,
                    _ => config.steps.gamma_l,
                };
                Some(AverageAccumulator::from_parts(c3, gamma, problem.constants().mu)?)
            }
        };
        Ok(Self {
            problem,
            z_star,
            star_maps,
            algorithm: config.algorithm.name(),
            s: problem.heterogeneity_level(),
            seed,
            gamma: config.steps.gamma_g,
            thin: config.thin as u64,
            averager,
            rows: Vec::new(),
        })
    }

    fn cv_error(&self, z_tilde: &SaddlePoint) -> Option<f64> {
        let maps = self.star_maps.as_ref()?;
        let n = maps.len();
        Some(
            maps.iter()
                .enumerate()
                .map(|(i, m)| self.problem.client_mapping(i, z_tilde).distance_sq(m))
                .sum::<f64>()
                / n as f64,
        )
    }

    /// Observes the point after iteration `k`. The row is kept when `k` is
    /// a multiple of the thinning stride or `force` is set.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn observe(
        &mut self,
        k: u64,
        comm_rounds: u64,
        point: &SaddlePoint,
        drift: f64,
        cv_at: Option<&SaddlePoint>,
        meta_t: Option<u64>,
        force: bool,
    ) -> Result<()> {
        if let Some(acc) = &mut self.averager {
            acc.push(point);
        }
        let distance = match &self.z_star {
            Some(star) => point.distance(star),
            None => point.norm(),
        };
        let diverged = !(distance <= DIVERGENCE_RADIUS);
        if force || diverged || k.is_multiple_of(self.thin) {
            let (dist_sq, gap) = solution_quality(self.problem, point, self.z_star.as_ref());
            let cv_error = cv_at.and_then(|z| self.cv_error(z));
            self.rows.push(TraceRow {
                algorithm: self.algorithm.to_string(),
                s: self.s,
                seed: self.seed,
                gamma: self.gamma,
                k,
                comm_rounds,
                dist_sq,
                gap,
                drift,
                cv_error,
                meta_t,
            });
        }
        if diverged {
            return Err(Error::Diverged {
                iteration: k as usize,
                distance,
                trace: std::mem::take(&mut self.rows),
            });
        }
        Ok(())
    }

    pub(crate) fn finish(
        self,
        last: SaddlePoint,
        iterations: u64,
        comm_rounds: u64,
        meta: Vec<MetaRecord>,
    ) -> Result<RunOutput> {
        let output = match &self.averager {
            Some(acc) => acc.output()?,
            None => last,
        };
        Ok(RunOutput {
            trace: self.rows,
            output,
            iterations,
            comm_rounds,
            meta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DriveEnd {
    Budget,
    Stopped,
}

/// Runs framework iterations until the global round budget is spent or
/// `should_stop` fires at a synchronization.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive_framework<O: GradientOracle, P: FederatedProblem>(
    state: &mut RunState,
    oracle: &mut NoisyOracle<O>,
    rule: DirectionRule,
    coins: &mut SyncCoins,
    steps: &StepsizeSchedule,
    budget: u64,
    recorder: &mut Recorder<'_, P>,
    meta_t: Option<u64>,
    mut should_stop: impl FnMut(&RunState) -> bool,
) -> Result<DriveEnd> {
    loop {
        let out = framework_step(state, oracle, rule, coins, steps)?;
        let mut end = None;
        if out.synchronized {
            if state.comm_rounds >= budget {
                end = Some(DriveEnd::Budget);
            } else if should_stop(state) {
                end = Some(DriveEnd::Stopped);
            }
        }
        let mean = state.mean_point();
        let drift = client_drift(&state.clients, &mean);
        let cv_at = (rule == DirectionRule::Scaffold).then_some(&state.server);
        recorder.observe(
            state.iteration,
            state.comm_rounds,
            &mean,
            drift,
            cv_at,
            meta_t,
            end.is_some(),
        )?;
        if let Some(end) = end {
            return Ok(end);
        }
    }
}

/// Runs one algorithm until `budget` communication rounds are spent.
///
/// Minibatch Mirror-prox spends two rounds per update and stops at the last
/// update that fits in the budget.
pub fn run_algorithm<P: FederatedProblem>(
    config: &AlgorithmConfig,
    problem: &P,
    budget: u64,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    if budget < 1 {
        return Err(invalid("budget must be at least one communication round"));
    }
    match config.algorithm {
        AlgorithmKind::FedavgS => run_framework(config, problem, budget, seed, DirectionRule::FedAvg),
        AlgorithmKind::ScaffoldS => run_framework(config, problem, budget, seed, DirectionRule::Scaffold),
        AlgorithmKind::MinibatchMd | AlgorithmKind::MinibatchMp => run_minibatch(config, problem, budget, seed),
        AlgorithmKind::ScaffoldCatalystS => scaffold_catalyst_s(&config.catalyst, config, problem, budget, seed),
    }
}

fn run_framework<P: FederatedProblem>(
    config: &AlgorithmConfig,
    problem: &P,
    budget: u64,
    seed: u64,
    rule: DirectionRule,
) -> Result<RunOutput> {
    let z0 = config.init.resolve(problem.primal_dim(), problem.dual_dim())?;
    let mut recorder = Recorder::new(problem, config, seed)?;
    let mut coins = SyncCoins::new(config.sync, seed)?;
    let mut oracle = NoisyOracle::new(problem, QueryNoise::new(config.sigma, seed)?);
    let mut state = RunState::new(problem.n_clients(), z0);
    if rule == DirectionRule::Scaffold {
        state = state.with_control_variate(problem);
    }
    let cv_at = (rule == DirectionRule::Scaffold).then_some(&state.server);
    recorder.observe(0, 0, &state.server, 0.0, cv_at, None, false)?;
    drive_framework(
        &mut state,
        &mut oracle,
        rule,
        &mut coins,
        &config.steps,
        budget,
        &mut recorder,
        None,
        |_| false,
    )?;
    let (iterations, rounds) = (state.iteration, state.comm_rounds);
    recorder.finish(state.server, iterations, rounds, Vec::new())
}

fn run_minibatch<P: FederatedProblem>(
    config: &AlgorithmConfig,
    problem: &P,
    budget: u64,
    seed: u64,
) -> Result<RunOutput> {
    let mut z = config.init.resolve(problem.primal_dim(), problem.dual_dim())?;
    let mut recorder = Recorder::new(problem, config, seed)?;
    let mut oracle = NoisyOracle::new(problem, QueryNoise::new(config.sigma, seed)?);
    let tau = config.sync.steps_per_round();
    let gamma = config.steps.gamma_g;
    let per_update = match config.algorithm {
        AlgorithmKind::MinibatchMp => 2,
        _ => 1,
    };
    let mut rounds = 0u64;
    let mut k = 0u64;
    let last_update = budget - budget % per_update;
    recorder.observe(0, 0, &z, 0.0, None, None, last_update == 0)?;
    while rounds + per_update <= budget {
        z = match config.algorithm {
            AlgorithmKind::MinibatchMp => minibatch_mp_round(&z, &mut oracle, tau, gamma)?.next,
            _ => minibatch_md_round(&z, &mut oracle, tau, gamma)?,
        };
        rounds += per_update;
        k += 1;
        recorder.observe(k, rounds, &z, 0.0, None, None, rounds == last_update)?;
    }
    recorder.finish(z, k, rounds, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::generate_instance;

    fn cfg(kind: AlgorithmKind, gamma: f64) -> AlgorithmConfig {
        AlgorithmConfig::new(
            kind,
            SyncSchedule::Deterministic { tau: 20 },
            StepsizeSchedule::constant(gamma, gamma),
        )
    }

    #[test]
    fn algorithm_names_round_trip() {
        for k in AlgorithmKind::ALL {
            assert_eq!(k.name().parse::<AlgorithmKind>().unwrap(), k);
        }
        assert!(matches!("sgd".parse::<AlgorithmKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn budget_is_respected() {
        let inst = generate_instance(2.0, 4, 4, 1e-5, 3).unwrap();
        for kind in AlgorithmKind::ALL {
            let out = run_algorithm(&cfg(kind, 0.05), &inst, 37, 1).unwrap();
            let last = out.trace.last().unwrap().comm_rounds;
            if kind == AlgorithmKind::MinibatchMp {
                assert_eq!(last, 36, "{kind}");
            } else {
                assert_eq!(last, 37, "{kind}");
            }
            assert!(out.trace.windows(2).all(|w| w[0].comm_rounds <= w[1].comm_rounds));
        }
    }

    #[test]
    fn framework_row_count_follows_cadence() {
        let inst = generate_instance(2.0, 4, 4, 1e-5, 3).unwrap();
        let out = run_algorithm(&cfg(AlgorithmKind::ScaffoldS, 0.05), &inst, 10, 1).unwrap();
        assert_eq!(out.trace.len(), 10 * 20 + 1);
        let md = run_algorithm(&cfg(AlgorithmKind::MinibatchMd, 0.05), &inst, 10, 1).unwrap();
        assert_eq!(md.trace.len(), 11);
    }

    #[test]
    fn thinning_keeps_final_row() {
        let inst = generate_instance(2.0, 4, 4, 1e-5, 3).unwrap();
        let mut c = cfg(AlgorithmKind::FedavgS, 0.05);
        c.thin = 7;
        let out = run_algorithm(&c, &inst, 3, 1).unwrap();
        assert_eq!(out.trace.last().unwrap().k, 60);
        assert!(out.trace.iter().all(|r| r.k % 7 == 0 || r.k == 60));
    }

    #[test]
    fn fedavg_rejects_split_stepsizes() {
        let inst = generate_instance(2.0, 4, 4, 1e-5, 3).unwrap();
        let mut c = cfg(AlgorithmKind::FedavgS, 0.05);
        c.steps.gamma_g = 0.1;
        assert!(matches!(run_algorithm(&c, &inst, 3, 1), Err(Error::Config(_))));
        assert!(run_algorithm(&cfg(AlgorithmKind::FedavgS, 0.05), &inst, 0, 1).is_err());
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let inst = generate_instance(10.0, 4, 4, 1e-5, 3).unwrap();
        let err = run_algorithm(&cfg(AlgorithmKind::MinibatchMd, 50.0), &inst, 500, 1).unwrap_err();
        match err {
            Error::Diverged { trace, .. } => assert!(!trace.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weighted_output_differs_from_last_iterate() {
        let inst = generate_instance(1.0, 3, 3, 1e-2, 3).unwrap();
        let mut c = cfg(AlgorithmKind::ScaffoldS, 0.05);
        let last = run_algorithm(&c, &inst, 5, 2).unwrap();
        c.output = OutputRule::Weighted { c3: 0.25 };
        let avg = run_algorithm(&c, &inst, 5, 2).unwrap();
        assert_eq!(last.trace, avg.trace);
        assert_ne!(last.output, avg.output);
        // The average includes the far-away start, so it sits farther out.
        assert!(avg.output.norm() > last.output.norm());
    }
}
