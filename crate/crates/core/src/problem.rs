//! Problem abstraction: per-client gradient-mapping oracles, query noise and
//! solution-quality measures.
//!
//! Clients hold local objectives `f_i(x, y)`, convex in `x` and concave in
//! `y`; the global objective is their average. The gradient mapping of a
//! client is `G_i(z) = (grad_x f_i(z), -grad_y f_i(z))`, whose zero is a
//! saddle point, and a step along `-G` is one step of gradient
//! descent-ascent.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::point::SaddlePoint;
use crate::rng::{standard_normal, stream_rng, streams, SimRng};

/// Constants describing a strongly-convex-concave federated problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Strong convexity-concavity modulus.
    pub mu: f64,
    /// Smoothness.
    pub beta: f64,
    pub n_clients: usize,
    /// Standard deviation of gradient-mapping queries.
    pub sigma: f64,
    /// Upper bound on the norm of the optimum, if known. Diagnostic only.
    pub d_bound: Option<f64>,
}

impl ProblemConstants {
    pub fn new(mu: f64, beta: f64, n_clients: usize, sigma: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(invalid(format!("mu must be positive, got {mu}")));
        }
        if !(beta >= mu) {
            return Err(invalid(format!("beta ({beta}) must be at least mu ({mu})")));
        }
        if n_clients == 0 {
            return Err(invalid("at least one client is required"));
        }
        if !(sigma >= 0.0) {
            return Err(invalid(format!("sigma must be non-negative, got {sigma}")));
        }
        Ok(Self {
            mu,
            beta,
            n_clients,
            sigma,
            d_bound: None,
        })
    }

    /// Condition number `beta / mu`.
    pub fn kappa(&self) -> f64 {
        self.beta / self.mu
    }
}

/// Exact first-order access to a federation of local saddle objectives.
///
/// Implementations must be deterministic. Callers are responsible for shape
/// and index validity; [`gradient_mapping`] is the checked entry point.
pub trait GradientOracle {
    fn primal_dim(&self) -> usize;
    fn dual_dim(&self) -> usize;
    fn n_clients(&self) -> usize;

    fn client_value(&self, client: usize, z: &SaddlePoint) -> f64;

    fn client_mapping(&self, client: usize, z: &SaddlePoint) -> SaddlePoint;

    /// Global objective `f = (1/n) sum_i f_i`, summed in ascending client order.
    fn value(&self, z: &SaddlePoint) -> f64 {
        let n = self.n_clients();
        (0..n).map(|i| self.client_value(i, z)).sum::<f64>() / n as f64
    }

    /// Global mapping `G = (1/n) sum_i G_i`, summed in ascending client order.
    fn mapping(&self, z: &SaddlePoint) -> SaddlePoint {
        let n = self.n_clients();
        let mut sum = self.client_mapping(0, z);
        for i in 1..n {
            sum.add_assign(&self.client_mapping(i, z));
        }
        sum.scale(1.0 / n as f64);
        sum
    }
}

/// A gradient oracle with known problem constants and, optionally, analytic
/// access to the optimum and to the minimax proximal operator.
pub trait FederatedProblem: GradientOracle {
    fn constants(&self) -> ProblemConstants;

    /// The heterogeneity knob the instance was generated with, if any.
    fn heterogeneity_level(&self) -> Option<f64> {
        None
    }

    /// The exact saddle point, when available analytically.
    fn optimum(&self) -> Option<SaddlePoint> {
        None
    }

    /// The exact minimax proximal point
    /// `argmin_x argmax_y f(x,y) + (theta/2)|x - xbar|^2 - (theta/2)|y - ybar|^2`,
    /// when available analytically.
    fn exact_prox(&self, _theta: f64, _anchor: &SaddlePoint) -> Option<Result<SaddlePoint>> {
        None
    }
}

impl<P: GradientOracle + ?Sized> GradientOracle for &P {
    fn primal_dim(&self) -> usize {
        (**self).primal_dim()
    }
    fn dual_dim(&self) -> usize {
        (**self).dual_dim()
    }
    fn n_clients(&self) -> usize {
        (**self).n_clients()
    }
    fn client_value(&self, client: usize, z: &SaddlePoint) -> f64 {
        (**self).client_value(client, z)
    }
    fn client_mapping(&self, client: usize, z: &SaddlePoint) -> SaddlePoint {
        (**self).client_mapping(client, z)
    }
    fn value(&self, z: &SaddlePoint) -> f64 {
        (**self).value(z)
    }
    fn mapping(&self, z: &SaddlePoint) -> SaddlePoint {
        (**self).mapping(z)
    }
}

impl<P: FederatedProblem + ?Sized> FederatedProblem for &P {
    fn constants(&self) -> ProblemConstants {
        (**self).constants()
    }
    fn heterogeneity_level(&self) -> Option<f64> {
        (**self).heterogeneity_level()
    }
    fn optimum(&self) -> Option<SaddlePoint> {
        (**self).optimum()
    }
    fn exact_prox(&self, theta: f64, anchor: &SaddlePoint) -> Option<Result<SaddlePoint>> {
        (**self).exact_prox(theta, anchor)
    }
}

fn check_point<P: GradientOracle + ?Sized>(problem: &P, z: &SaddlePoint) -> Result<()> {
    z.check_shape(problem.primal_dim(), problem.dual_dim())
}

fn check_client<P: GradientOracle + ?Sized>(problem: &P, client: usize) -> Result<()> {
    if client >= problem.n_clients() {
        return Err(invalid(format!(
            "client index {client} out of range for {} clients",
            problem.n_clients()
        )));
    }
    Ok(())
}

/// Checked `G_i(z)`. Clients are indexed from zero.
pub fn gradient_mapping<P: GradientOracle + ?Sized>(
    problem: &P,
    client: usize,
    z: &SaddlePoint,
) -> Result<SaddlePoint> {
    check_client(problem, client)?;
    check_point(problem, z)?;
    Ok(problem.client_mapping(client, z))
}

/// Checked `G(z)`.
pub fn global_gradient_mapping<P: GradientOracle + ?Sized>(
    problem: &P,
    z: &SaddlePoint,
) -> Result<SaddlePoint> {
    check_point(problem, z)?;
    Ok(problem.mapping(z))
}

/// Duality gap `f(x, y*) - f(x*, y)` relative to the supplied saddle point.
pub fn duality_gap<P: GradientOracle + ?Sized>(
    problem: &P,
    z: &SaddlePoint,
    z_star: &SaddlePoint,
) -> Result<f64> {
    check_point(problem, z)?;
    check_point(problem, z_star)?;
    let primal = SaddlePoint::new(z.x.clone(), z_star.y.clone());
    let dual = SaddlePoint::new(z_star.x.clone(), z.y.clone());
    Ok(problem.value(&primal) - problem.value(&dual))
}

/// Additive isotropic Gaussian noise for gradient-mapping queries.
///
/// Each coordinate gets standard deviation `sigma / sqrt(m + d)`, so the
/// total variance of one query is `sigma^2`.
#[derive(Debug, Clone)]
pub struct QueryNoise {
    sigma: f64,
    rng: SimRng,
}

impl QueryNoise {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("noise sigma must be non-negative, got {sigma}")));
        }
        Ok(Self {
            sigma,
            rng: stream_rng(seed, streams::QUERY_NOISE),
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            rng: stream_rng(0, streams::QUERY_NOISE),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Adds the mean of `count` independent noise draws to `g`.
    /// A no-op when sigma is zero, so noiseless queries stay bit-exact.
    fn perturb(&mut self, g: &mut SaddlePoint, count: usize) {
        if self.sigma == 0.0 {
            return;
        }
        let sd = self.sigma / (g.dim() as f64).sqrt();
        for v in g.iter_mut() {
            let mut acc = 0.0;
            for _ in 0..count {
                acc += standard_normal(&mut self.rng);
            }
            *v += sd * acc / count as f64;
        }
    }
}

/// A gradient oracle whose client queries return unbiased noisy estimates
/// `G_i(z) + xi` with `E|xi|^2 = sigma^2`.
///
/// The random stream belongs to one run; do not share an oracle between
/// concurrently executing queries.
#[derive(Debug)]
pub struct NoisyOracle<P> {
    problem: P,
    noise: QueryNoise,
}

impl<P: GradientOracle> NoisyOracle<P> {
    pub fn new(problem: P, noise: QueryNoise) -> Self {
        Self { problem, noise }
    }

    pub fn exact(problem: P) -> Self {
        Self::new(problem, QueryNoise::noiseless())
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn sigma(&self) -> f64 {
        self.noise.sigma()
    }

    pub fn into_noise(self) -> QueryNoise {
        self.noise
    }

    /// Fresh noisy query of client `client` at `z`. Unchecked.
    pub fn query(&mut self, client: usize, z: &SaddlePoint) -> SaddlePoint {
        let mut g = self.problem.client_mapping(client, z);
        self.noise.perturb(&mut g, 1);
        g
    }

    /// Mean of `count` independent noisy queries of client `client` at `z`.
    pub fn query_mean(&mut self, client: usize, z: &SaddlePoint, count: usize) -> SaddlePoint {
        let mut g = self.problem.client_mapping(client, z);
        self.noise.perturb(&mut g, count.max(1));
        g
    }

    /// Fresh noise added to an already computed exact mapping value.
    pub fn perturb(&mut self, exact: &SaddlePoint) -> SaddlePoint {
        let mut g = exact.clone();
        self.noise.perturb(&mut g, 1);
        g
    }
}

/// Checked noisy query.
pub fn noisy_gradient_mapping<P: GradientOracle>(
    oracle: &mut NoisyOracle<P>,
    client: usize,
    z: &SaddlePoint,
) -> Result<SaddlePoint> {
    check_client(oracle.problem(), client)?;
    check_point(oracle.problem(), z)?;
    Ok(oracle.query(client, z))
}

/// The catalyst-regularized federation
/// `f_i^theta(z) = f_i(z) + (theta/2)|x - xbar|^2 - (theta/2)|y - ybar|^2`,
/// whose gradient mapping is `G_i(z) + theta (z - zbar)` on both blocks.
#[derive(Debug, Clone)]
pub struct Regularized<P> {
    inner: P,
    theta: f64,
    anchor: SaddlePoint,
}

impl<P: GradientOracle> Regularized<P> {
    pub fn new(inner: P, theta: f64, anchor: SaddlePoint) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(invalid(format!("theta must be non-negative, got {theta}")));
        }
        check_point(&inner, &anchor)?;
        Ok(Self {
            inner,
            theta,
            anchor,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn anchor(&self) -> &SaddlePoint {
        &self.anchor
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn penalty(&self, z: &SaddlePoint) -> f64 {
        let dx: f64 = z
            .x
            .iter()
            .zip(&self.anchor.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let dy: f64 = z
            .y
            .iter()
            .zip(&self.anchor.y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * self.theta * (dx - dy)
    }

    fn add_pull(&self, g: &mut SaddlePoint, z: &SaddlePoint) {
        for ((gv, zv), av) in g.iter_mut().zip(z.iter()).zip(self.anchor.iter()) {
            *gv += self.theta * (zv - av);
        }
    }
}

impl<P: GradientOracle> GradientOracle for Regularized<P> {
    fn primal_dim(&self) -> usize {
        self.inner.primal_dim()
    }
    fn dual_dim(&self) -> usize {
        self.inner.dual_dim()
    }
    fn n_clients(&self) -> usize {
        self.inner.n_clients()
    }

    fn client_value(&self, client: usize, z: &SaddlePoint) -> f64 {
        self.inner.client_value(client, z) + self.penalty(z)
    }

    fn client_mapping(&self, client: usize, z: &SaddlePoint) -> SaddlePoint {
        let mut g = self.inner.client_mapping(client, z);
        self.add_pull(&mut g, z);
        g
    }

    fn mapping(&self, z: &SaddlePoint) -> SaddlePoint {
        let mut g = self.inner.mapping(z);
        self.add_pull(&mut g, z);
        g
    }
}

impl<P: FederatedProblem> FederatedProblem for Regularized<P> {
    fn constants(&self) -> ProblemConstants {
        let c = self.inner.constants();
        ProblemConstants {
            mu: c.mu + self.theta,
            beta: c.beta + self.theta,
            ..c
        }
    }

    fn optimum(&self) -> Option<SaddlePoint> {
        self.inner.exact_prox(self.theta, &self.anchor)?.ok()
    }
}

/// The single-client bilinear problem `f(x, y) = x y` with `G(x, y) = (y, -x)`.
///
/// Monotone but not strongly monotone; plain descent-ascent spirals outward
/// on it while extragradient contracts.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bilinear;

impl GradientOracle for Bilinear {
    fn primal_dim(&self) -> usize {
        1
    }
    fn dual_dim(&self) -> usize {
        1
    }
    fn n_clients(&self) -> usize {
        1
    }
    fn client_value(&self, _client: usize, z: &SaddlePoint) -> f64 {
        z.x[0] * z.y[0]
    }
    fn client_mapping(&self, _client: usize, z: &SaddlePoint) -> SaddlePoint {
        SaddlePoint::new(vec![z.y[0]], vec![-z.x[0]])
    }
}
