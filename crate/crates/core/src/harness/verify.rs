//! Verification suites.
//!
//! Each check prints as one machine-readable line
//! `status=<pass|fail> check=<name> measured=<value> limit=<value>`; the
//! measured value is compared against the limit in the direction stated by
//! the check. Reference values come from [`super::reference`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::algorithms::{
    framework_step, minibatch_mp_round, run_algorithm, scaffold_s_direction, theorem_stepsize, AlgorithmConfig,
    AlgorithmKind, DirectionRule, InnerSolver, InnerStop, MetaEnd, RunState, StepsizeSchedule, SyncCoins,
    SyncSchedule, TheoremStepsize,
};
use crate::error::{Error, Result};
use crate::point::SaddlePoint;
use crate::problem::{duality_gap, Bilinear, GradientOracle, NoisyOracle, Regularized};
use crate::rng::{standard_normal, stream_rng, streams, SimRng};
use crate::testbed::{generate_instance, ProxQuery, TestbedInstance};

use super::config::ExperimentConfig;
use super::experiment::{run_cells, ExperimentReport};
use super::reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracles,
    Identities,
    Convergence,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 4] = ["oracles", "identities", "convergence", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracles" => Ok(Suite::Oracles),
            "identities" => Ok(Suite::Identities),
            "convergence" => Ok(Suite::Convergence),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite {other:?}; expected one of {}",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `measured <= limit`.
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= limit,
            measured,
            limit,
        }
    }

    /// Passes when `measured > limit`.
    pub fn above(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured > limit,
            measured,
            limit,
        }
    }

    /// A yes/no property, reported as 1 (holds) or 0 against limit 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "status={} check={} measured={:e} limit={:e}",
            if self.passed { "pass" } else { "fail" },
            self.name,
            self.measured,
            self.limit
        )
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Oracles | Suite::All) {
        checks.push(gradient_finite_difference()?);
        checks.extend(analytic_optimum()?);
        checks.extend(prox_oracle()?);
        checks.push(stepsize_formula()?);
    }
    if matches!(suite, Suite::Identities | Suite::All) {
        checks.push(gda_reduction()?);
        checks.push(scaffold_mean_direction()?);
        checks.push(catalyst_heterogeneity_invariance()?);
        checks.push(catalyst_theta_zero()?);
        checks.extend(extragradient_sanity()?);
    }
    if matches!(suite, Suite::Convergence | Suite::All) {
        checks.push(proximal_point_contraction()?);
        checks.push(inner_accuracy()?);
        checks.extend(communication_accounting()?);
        checks.extend(figure_protocol()?);
    }
    Ok(checks)
}

fn gaussian_point(rng: &mut SimRng, dim: usize, scale: f64) -> SaddlePoint {
    let x = (0..dim).map(|_| scale * standard_normal(rng)).collect();
    let y = (0..dim).map(|_| scale * standard_normal(rng)).collect();
    SaddlePoint::new(x, y)
}

/// The 20 instances (d = n = 10, s cycling through 0, 5, 10) used by the
/// oracle checks.
pub fn oracle_instances() -> Result<Vec<TestbedInstance>> {
    (0..20u64)
        .map(|seed| generate_instance([0.0, 5.0, 10.0][seed as usize % 3], 10, 10, 1e-5, seed))
        .collect()
}

/// Largest relative error `|fd - G| / max(|G|, 1)` over every coordinate of
/// every client mapping at random points.
pub fn gradient_finite_difference() -> Result<Check> {
    let start = Instant::now();
    let mut rng = stream_rng(101, streams::SAMPLING);
    let mut worst = 0.0f64;
    for inst in oracle_instances()? {
        let z = gaussian_point(&mut rng, inst.dim(), 1.0);
        for i in 0..inst.n_clients() {
            let g = inst.client_mapping(i, &z);
            // f_i is quadratic, so central differences are exact up to rounding.
            let fd = reference::difference_mapping(|p| inst.client_value(i, p), &z, 1e-3);
            for (a, b) in g.iter().zip(fd.iter()) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    let mut check = Check::at_most("gradient-finite-difference", worst, 1e-5);
    check.passed &= start.elapsed().as_secs_f64() < 5.0;
    Ok(check)
}

pub fn analytic_optimum() -> Result<Vec<Check>> {
    let mut worst_norm = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut all_zero = true;
    for inst in oracle_instances()? {
        let star = inst.optimal_point()?;
        all_zero &= star.iter().all(|v| *v == 0.0);
        worst_norm = worst_norm.max(reference::global_mapping(&inst, &star).norm());
        worst_gap = worst_gap.max(duality_gap(&inst, &star, &star)?.abs());
    }
    Ok(vec![
        Check::at_most("optimum-mapping-norm", worst_norm, 1e-10),
        Check::at_most("optimum-duality-gap", worst_gap, 1e-18),
        Check::holds("optimum-is-origin", all_zero),
    ])
}

/// Stationarity residual of the closed-form prox, its distance to the
/// reference solve, and the worst nonexpansiveness ratio measured against
/// `1 - mu / (theta + mu)`.
pub fn prox_oracle() -> Result<Vec<Check>> {
    let mut rng = stream_rng(202, streams::SAMPLING);
    let mut worst_residual = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for (k, s) in [0.0, 5.0, 10.0].into_iter().enumerate() {
        let inst = generate_instance(s, 10, 10, 1e-5, 300 + k as u64)?;
        let mu = inst.mu();
        for theta in [0.1, 1.0, 10.0] {
            let factor = 1.0 - mu / (theta + mu);
            for _ in 0..100 {
                let a = gaussian_point(&mut rng, 10, 3.0);
                let b = gaussian_point(&mut rng, 10, 3.0);
                let pa = inst.closed_form_prox(&ProxQuery::new(theta, a.clone())?)?;
                let pb = inst.closed_form_prox(&ProxQuery::new(theta, b.clone())?)?;
                let mut residual = reference::global_mapping(&inst, &pa);
                residual.axpy(theta, &(&pa - &a));
                worst_residual = worst_residual.max(residual.norm());
                worst_residual = worst_residual.max(pa.distance(&reference::prox(&inst, theta, &a)));
                worst_excess = worst_excess.max(pa.distance(&pb) / a.distance(&b) - factor);
            }
        }
    }
    Ok(vec![
        Check::at_most("prox-residual", worst_residual, 1e-10),
        Check::at_most("prox-nonexpansive-excess", worst_excess, 1e-9),
    ])
}

/// Library stepsize against log-space reference arithmetic on random tuples
/// and the two saturation edge cases.
pub fn stepsize_formula() -> Result<Check> {
    let mut rng = stream_rng(303, streams::SAMPLING);
    let mut tuples = Vec::new();
    for _ in 0..10 {
        tuples.push(TheoremStepsize {
            a: 10f64.powf(rng.random_range(-2.0..3.0)),
            c1: 10f64.powf(rng.random_range(-3.0..2.0)),
            c2: 10f64.powf(rng.random_range(-3.0..2.0)),
            c3: rng.random_range(0.05..1.0),
            gamma_max: 10f64.powf(rng.random_range(-3.0..0.0)),
            mu: 10f64.powf(rng.random_range(-2.0..0.0)),
            horizon: rng.random_range(1..5000),
        });
    }
    // Saturation: the logarithm exceeds gamma_max.
    tuples.push(TheoremStepsize { a: 1e6, c1: 1e-6, c2: 1e-6, c3: 0.25, gamma_max: 1e-3, mu: 1.0, horizon: 10 });
    // Zero constants: an infinite argument caps at gamma_max.
    tuples.push(TheoremStepsize { a: 1.0, c1: 0.0, c2: 0.0, c3: 0.25, gamma_max: 0.7, mu: 0.5, horizon: 100 });
    let mut worst = 0.0f64;
    for t in &tuples {
        let expected = reference::theorem_stepsize(t.a, t.c1, t.c2, t.c3, t.gamma_max, t.mu, t.horizon);
        worst = worst.max((theorem_stepsize(t)? - expected).abs());
    }
    let saturated = theorem_stepsize(&tuples[10])? == tuples[10].gamma_max
        && theorem_stepsize(&tuples[11])? == tuples[11].gamma_max;
    let mut check = Check::at_most("theorem-stepsize", worst, 1e-12);
    check.passed &= saturated;
    Ok(check)
}

/// FedAvg-S with `p = 1`, `sigma = 0` against standalone GDA: largest
/// per-iterate deviation over 100 iterations.
pub fn gda_reduction() -> Result<Check> {
    let inst = generate_instance(5.0, 10, 10, 1e-5, 7)?;
    let z0 = SaddlePoint::filled(10, 10, 1.0);
    let gamma = 0.05;
    let expected = reference::gda(&inst, &z0, gamma, 100);
    let mut state = RunState::new(inst.n_clients(), z0);
    let mut oracle = NoisyOracle::exact(&inst);
    let mut coins = SyncCoins::new(SyncSchedule::Probabilistic { p: 1.0 }, 3)?;
    let steps = StepsizeSchedule::constant(gamma, gamma);
    let mut worst = 0.0f64;
    for reference_point in &expected[1..] {
        framework_step(&mut state, &mut oracle, DirectionRule::FedAvg, &mut coins, &steps)?;
        worst = worst.max(state.server.distance(reference_point));
    }
    let mut check = Check::at_most("fedavg-p1-matches-gda", worst, 1e-12);
    check.passed &= state.comm_rounds == 100;
    Ok(check)
}

/// The client-mean of SCAFFOLD-S directions at a synchronized state equals
/// the global mapping.
pub fn scaffold_mean_direction() -> Result<Check> {
    let mut rng = stream_rng(404, streams::SAMPLING);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let inst = generate_instance(8.0, 10, 10, 1e-5, 500 + seed)?;
        let z = gaussian_point(&mut rng, 10, 2.0);
        let state = RunState::new(inst.n_clients(), z.clone()).with_control_variate(&inst);
        let mut oracle = NoisyOracle::exact(&inst);
        let dirs = (0..inst.n_clients())
            .map(|i| scaffold_s_direction(&state, &mut oracle, i))
            .collect::<Result<Vec<_>>>()?;
        worst = worst.max(SaddlePoint::mean(&dirs).distance(&reference::global_mapping(&inst, &z)));
    }
    Ok(Check::at_most("scaffold-mean-direction", worst, 1e-12))
}

/// `| |G_i^theta - G_j^theta| - |G_i - G_j| |` over 100 random tuples.
pub fn catalyst_heterogeneity_invariance() -> Result<Check> {
    let mut rng = stream_rng(505, streams::SAMPLING);
    let inst = generate_instance(10.0, 10, 10, 1e-5, 11)?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z = gaussian_point(&mut rng, 10, 2.0);
        let anchor = gaussian_point(&mut rng, 10, 2.0);
        let theta = rng.random_range(0.0..10.0);
        let i = rng.random_range(0..10);
        let j = rng.random_range(0..10);
        let reg = Regularized::new(&inst, theta, anchor)?;
        let wrapped = reg.client_mapping(i, &z).distance(&reg.client_mapping(j, &z));
        let plain = reference::client_mapping(&inst, i, &z).distance(&reference::client_mapping(&inst, j, &z));
        worst = worst.max((wrapped - plain).abs());
    }
    Ok(Check::at_most("catalyst-heterogeneity-invariance", worst, 1e-12))
}

/// A `theta = 0` catalyst run reproduces the plain SCAFFOLD-S trace bit for
/// bit under a shared seed.
pub fn catalyst_theta_zero() -> Result<Check> {
    let inst = generate_instance(5.0, 10, 10, 1e-5, 12)?;
    let mut cat = AlgorithmConfig::new(
        AlgorithmKind::ScaffoldCatalystS,
        SyncSchedule::Probabilistic { p: 0.1 },
        StepsizeSchedule::constant(0.02, 0.02),
    );
    cat.catalyst.theta = 0.0;
    let mut plain = cat.clone();
    plain.algorithm = AlgorithmKind::ScaffoldS;
    let a = run_algorithm(&cat, &inst, 40, 77)?;
    let b = run_algorithm(&plain, &inst, 40, 77)?;
    let same_rows = a.trace.len() == b.trace.len()
        && a.trace.iter().zip(&b.trace).all(|(ra, rb)| {
            ra.k == rb.k
                && ra.comm_rounds == rb.comm_rounds
                && ra.dist_sq.map(f64::to_bits) == rb.dist_sq.map(f64::to_bits)
                && ra.gap.map(f64::to_bits) == rb.gap.map(f64::to_bits)
                && ra.drift.to_bits() == rb.drift.to_bits()
                && ra.cv_error.map(f64::to_bits) == rb.cv_error.map(f64::to_bits)
        });
    Ok(Check::holds("catalyst-theta-zero-trace", same_rows && a.output == b.output))
}

/// One extragradient step on `f = xy` from (1, 1) with step 0.1, then 100
/// iterations of each method.
pub fn extragradient_sanity() -> Result<Vec<Check>> {
    let start = SaddlePoint::new(vec![1.0], vec![1.0]);
    let mut oracle = NoisyOracle::exact(Bilinear);
    let step = minibatch_mp_round(&start, &mut oracle, 1, 0.1)?;
    let deviation = step.next.distance(&SaddlePoint::new(vec![0.89], vec![1.09]));

    let mut mp = start.clone();
    let mut gda = start;
    let (mut mp_decreasing, mut gda_increasing) = (true, true);
    for _ in 0..100 {
        let next = minibatch_mp_round(&mp, &mut oracle, 1, 0.1)?.next;
        mp_decreasing &= next.norm() < mp.norm();
        mp = next;
        let g = Bilinear.mapping(&gda);
        let next = &gda - &(&g * 0.1);
        gda_increasing &= next.norm() > gda.norm();
        gda = next;
    }
    Ok(vec![
        Check::at_most("extragradient-step", deviation, 1e-15),
        Check::holds("extragradient-contracts", mp_decreasing),
        Check::holds("gda-expands", gda_increasing),
    ])
}

/// Exact proximal-point meta-iterations on a `lambda = 0.01` instance:
/// worst `|zbar^{t+1} - z*| / |zbar^t - z*|` minus `1 - mu / (theta + mu)`,
/// for `theta` in `{mu, beta - mu}`.
pub fn proximal_point_contraction() -> Result<Check> {
    let inst = generate_instance(5.0, 10, 10, 0.01, 13)?;
    let star = inst.optimal_point()?;
    let (mu, beta) = (inst.mu(), inst.beta());
    let mut worst = f64::NEG_INFINITY;
    for theta in [mu, beta - mu] {
        let mut config = AlgorithmConfig::new(
            AlgorithmKind::ScaffoldCatalystS,
            SyncSchedule::Deterministic { tau: 20 },
            StepsizeSchedule::constant(0.01, 0.01),
        );
        config.catalyst.theta = theta;
        config.catalyst.solver = InnerSolver::ExactProx;
        let out = run_algorithm(&config, &inst, 40, 1)?;
        let factor = 1.0 - mu / (theta + mu);
        for record in &out.meta {
            let before = record.anchor.distance(&star);
            if before > 1e-150 {
                worst = worst.max(record.output.distance(&star) / before - factor);
            }
        }
    }
    Ok(Check::at_most("proximal-point-contraction-excess", worst, 1e-9))
}

/// With `s = 5`, `theta = 1`, `sigma = 0`: the worst post-hoc distance to
/// the exact prox over the first three meta-iterations, each of which must
/// stop within 50 rounds.
pub fn inner_accuracy() -> Result<Check> {
    let inst = generate_instance(5.0, 10, 10, 1e-5, 14)?;
    let theta = 1.0;
    let target = 1e-4;
    let mu = inst.mu();
    let scale = mu / (2.0 * (theta + mu));
    let mut config = AlgorithmConfig::new(
        AlgorithmKind::ScaffoldCatalystS,
        SyncSchedule::Deterministic { tau: 20 },
        StepsizeSchedule::constant(0.02, 0.02),
    );
    config.catalyst.theta = theta;
    config.catalyst.stop = InnerStop::ProxDistance {
        epsilon: (target / scale).powi(2),
        max_rounds: 50,
    };
    config.catalyst.max_meta = Some(3);
    let out = run_algorithm(&config, &inst, 150, 2)?;
    let mut worst = 0.0f64;
    let mut ok = out.meta.len() == 3;
    for record in &out.meta {
        let prox = inst.closed_form_prox(&ProxQuery::new(theta, record.anchor.clone())?)?;
        worst = worst.max(record.output.distance(&prox));
        ok &= record.end == MetaEnd::Converged && record.inner_rounds <= 50;
    }
    let mut check = Check::at_most("inner-prox-accuracy", worst, target);
    check.passed &= ok;
    Ok(check)
}

/// Relative deviation of the round count from `k p` over `10^4` framework
/// iterations with `p = 0.05`, and the Mirror-prox round cost.
pub fn communication_accounting() -> Result<Vec<Check>> {
    let inst = generate_instance(2.0, 5, 5, 1e-5, 15)?;
    let iterations = 10_000u64;
    let p = 0.05;
    let mut state = RunState::new(inst.n_clients(), SaddlePoint::filled(5, 5, 1.0));
    let mut oracle = NoisyOracle::exact(&inst);
    let mut coins = SyncCoins::new(SyncSchedule::Probabilistic { p }, 0)?;
    let steps = StepsizeSchedule::constant(0.01, 0.01);
    for _ in 0..iterations {
        framework_step(&mut state, &mut oracle, DirectionRule::FedAvg, &mut coins, &steps)?;
    }
    let expected = iterations as f64 * p;
    let deviation = (state.comm_rounds as f64 - expected).abs() / expected;

    let config = AlgorithmConfig::new(
        AlgorithmKind::MinibatchMp,
        SyncSchedule::Deterministic { tau: 20 },
        StepsizeSchedule::constant(0.05, 0.05),
    );
    let out = run_algorithm(&config, &inst, 20, 17)?;
    let two_per_update = out.trace.windows(2).all(|w| w[1].comm_rounds - w[0].comm_rounds == 2)
        && out.comm_rounds == 20
        && out.iterations == 10;
    Ok(vec![
        Check::at_most("sync-rate-relative-deviation", deviation, 0.05),
        Check::holds("mirror-prox-two-rounds-per-update", two_per_update),
    ])
}

/// The experimental protocol at `s` in {0, 10, 15}.
pub fn figure_protocol_config() -> ExperimentConfig {
    ExperimentConfig {
        s_values: vec![0.0, 10.0, 15.0],
        ..ExperimentConfig::default()
    }
}

fn best(report: &ExperimentReport, algorithm: AlgorithmKind, s: f64) -> f64 {
    report
        .summary
        .iter()
        .find(|r| r.algorithm == algorithm.name() && r.s == s)
        .map_or(f64::NAN, |r| r.best_mean_final_dist_sq)
}

/// Checks on the protocol sweep:
/// - every algorithm's best final `dist_sq` at `s = 0` is at most `1e-3` of
///   the initial value;
/// - at `s = 10` and `s = 15` the catalyst variant is no worse than any
///   other algorithm (reported as the worst ratio against the best rival);
/// - the catalyst variant's `s = 15` value is within 10x of its `s = 0`
///   value, while FedAvg-S degrades by more than 10x;
/// - the sweep finishes within five minutes.
pub fn figure_protocol() -> Result<Vec<Check>> {
    let start = Instant::now();
    let config = figure_protocol_config();
    let report = run_cells(&config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let initial = report.results[0].trace[0].dist_sq.unwrap_or(f64::NAN);

    let worst_s0 = AlgorithmKind::ALL
        .iter()
        .map(|&a| best(&report, a, 0.0) / initial)
        .fold(f64::NEG_INFINITY, f64::max);

    let catalyst = AlgorithmKind::ScaffoldCatalystS;
    let mut worst_ratio = f64::NEG_INFINITY;
    for s in [10.0, 15.0] {
        for rival in AlgorithmKind::ALL.into_iter().filter(|a| *a != catalyst) {
            worst_ratio = worst_ratio.max(best(&report, catalyst, s) / best(&report, rival, s));
        }
    }

    let catalyst_growth = best(&report, catalyst, 15.0) / best(&report, catalyst, 0.0);
    let fedavg_growth = best(&report, AlgorithmKind::FedavgS, 15.0) / best(&report, AlgorithmKind::FedavgS, 0.0);

    Ok(vec![
        Check::at_most("protocol-homogeneous-relative-dist-sq", worst_s0, 1e-3),
        Check::at_most("protocol-catalyst-vs-best-rival-ratio", worst_ratio, 1.0),
        Check::at_most("protocol-catalyst-growth-s15-over-s0", catalyst_growth, 10.0),
        Check::above("protocol-fedavg-growth-s15-over-s0", fedavg_growth, 10.0),
        Check::at_most("protocol-runtime-seconds", elapsed, 300.0),
    ])
}

/// Runs a named suite, printing one line per check; returns whether all
/// passed.
pub fn verify(suite: &str) -> Result<bool> {
    let suite: Suite = suite.parse()?;
    let checks = run_suite(suite)?;
    for check in &checks {
        println!("{check}");
    }
    let passed = checks.iter().all(|c| c.passed);
    println!(
        "summary checks={} failed={}",
        checks.len(),
        checks.iter().filter(|c| !c.passed).count()
    );
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(matches!("nope".parse::<Suite>(), Err(Error::Config(_))));
        assert!(matches!(verify("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn check_line_format() {
        let line = Check::at_most("x", 0.5, 1.0).to_string();
        assert_eq!(line, "status=pass check=x measured=5e-1 limit=1e0");
        assert!(!Check::above("y", 1.0, 1.0).passed);
    }

    #[test]
    fn oracle_suite_passes() {
        let checks = run_suite(Suite::Oracles).unwrap();
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn identity_suite_passes() {
        let checks = run_suite(Suite::Identities).unwrap();
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }
}
