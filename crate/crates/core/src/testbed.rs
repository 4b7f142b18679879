//! Quadratic saddle-point formulation of regularized linear regression.
//!
//! Client `i` holds
//!
//! ```text
//! f_i(x, y) = -1/2 [ |y|^2 - b_i^T y + y^T A_i x ] + (lambda/2) |x|^2
//! ```
//!
//! with `A_i = diag(a_i)` and `x, y` in `R^d`. The gradient mapping is
//!
//! ```text
//! G_i(x, y) = ( lambda x - 1/2 A_i y ,  y - 1/2 b_i + 1/2 A_i x )
//! ```
//!
//! Because every `A_i` is diagonal, all linear solves below decouple into
//! independent 2x2 systems, one per coordinate.
//!
//! # File format
//!
//! [`TestbedInstance::save`] writes TOML with the keys `seed`, `s`, `d`, `n`,
//! `lambda`, `centered`, `a` (array of `n` arrays of `d` diagonal entries)
//! and `b` (array of `n` arrays of `d` entries). Floats are written in
//! shortest round-trip form, so a loaded instance is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point::SaddlePoint;
use crate::problem::{FederatedProblem, GradientOracle, ProblemConstants};
use crate::rng::{standard_normal, stream_rng, streams};

/// Default regularization of the experiments.
pub const DEFAULT_LAMBDA: f64 = 1e-5;
pub const DEFAULT_DIM: usize = 10;
pub const DEFAULT_CLIENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedInstance {
    seed: u64,
    s: f64,
    d: usize,
    n: usize,
    lambda: f64,
    /// True when the `b_i` were centered at generation time, so the mean of
    /// the `b_i` is zero in exact arithmetic.
    centered: bool,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    #[serde(skip)]
    a_mean: Vec<f64>,
    #[serde(skip)]
    b_mean: Vec<f64>,
}

/// Anchor and strength of a minimax proximal query.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxQuery {
    pub theta: f64,
    pub anchor: SaddlePoint,
}

impl ProxQuery {
    pub fn new(theta: f64, anchor: SaddlePoint) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(invalid(format!("prox theta must be positive, got {theta}")));
        }
        Ok(Self { theta, anchor })
    }
}

fn column_mean(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    mean
}

/// Draws an instance: `b_i' ~ N(0, s^2 I)`, `b_i = b_i' - mean(b')`,
/// `a_i ~ N(1, s^2 I)` clipped below at 1, `A_i = diag(a_i)`.
///
/// Draw order is all `b'` client-major, then all `a` client-major, from the
/// instance stream of `seed`.
pub fn generate_instance(s: f64, d: usize, n: usize, lambda: f64, seed: u64) -> Result<TestbedInstance> {
    if d == 0 || n == 0 {
        return Err(invalid(format!("d and n must be positive, got d={d}, n={n}")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(invalid(format!("s must be non-negative, got {s}")));
    }

    let mut rng = stream_rng(seed, streams::INSTANCE);
    let raw_b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| s * standard_normal(&mut rng)).collect())
        .collect();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| (1.0 + s * standard_normal(&mut rng)).max(1.0))
                .collect()
        })
        .collect();

    let shift = column_mean(&raw_b, d);
    let b = raw_b
        .into_iter()
        .map(|row| row.iter().zip(&shift).map(|(v, m)| v - m).collect())
        .collect();

    let mut inst = TestbedInstance {
        seed,
        s,
        d,
        n,
        lambda,
        centered: true,
        a,
        b,
        a_mean: Vec::new(),
        b_mean: Vec::new(),
    };
    inst.refresh_means();
    Ok(inst)
}

impl TestbedInstance {
    /// Builds an instance from explicit diagonals and offsets.
    ///
    /// Unlike generated instances, hand-built ones may have arbitrary finite
    /// diagonals and uncentered offsets; the saddle point is then obtained
    /// by solving the stationarity system.
    pub fn from_parts(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        let n = a.len();
        if n == 0 || b.len() != n {
            return Err(invalid(format!(
                "need the same positive number of diagonals and offsets, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let d = a[0].len();
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if a.iter().chain(&b).any(|row| row.len() != d) {
            return Err(invalid("all diagonals and offsets must have the same length"));
        }
        if a.iter().chain(&b).flatten().any(|v| !v.is_finite()) {
            return Err(invalid("instance data must be finite"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let mut inst = Self {
            seed: 0,
            s: 0.0,
            d,
            n,
            lambda,
            centered: false,
            a,
            b,
            a_mean: Vec::new(),
            b_mean: Vec::new(),
        };
        inst.refresh_means();
        Ok(inst)
    }

    fn refresh_means(&mut self) {
        self.a_mean = column_mean(&self.a, self.d);
        self.b_mean = if self.centered {
            vec![0.0; self.d]
        } else {
            column_mean(&self.b, self.d)
        };
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn is_centered(&self) -> bool {
        self.centered
    }
    /// Diagonal of `A_i`.
    pub fn diag(&self, client: usize) -> &[f64] {
        &self.a[client]
    }
    pub fn offset(&self, client: usize) -> &[f64] {
        &self.b[client]
    }
    /// Client mean of the diagonals.
    pub fn mean_diag(&self) -> &[f64] {
        &self.a_mean
    }
    /// Client mean of the offsets (exactly zero for centered instances).
    pub fn mean_offset(&self) -> &[f64] {
        &self.b_mean
    }

    /// `mu = min(lambda, 1)`.
    pub fn mu(&self) -> f64 {
        self.lambda.min(1.0)
    }

    /// `beta = max_i max(sigma_max(A_i / 2), 1, lambda)`.
    pub fn beta(&self) -> f64 {
        self.a
            .iter()
            .flatten()
            .fold(1.0f64.max(self.lambda), |acc, v| acc.max(0.5 * v.abs()))
    }

    /// The unique saddle point of the global objective.
    ///
    /// Centered instances return exactly `(0, 0)`. Otherwise each coordinate
    /// solves `lambda x - a/2 y = 0`, `a/2 x + y = b/2` with `a`, `b` the
    /// client means.
    pub fn optimal_point(&self) -> Result<SaddlePoint> {
        if self.centered {
            return Ok(SaddlePoint::zeros(self.d, self.d));
        }
        let mut z = SaddlePoint::zeros(self.d, self.d);
        for j in 0..self.d {
            let half_a = 0.5 * self.a_mean[j];
            let (x, y) = solve_2x2(
                [[self.lambda, -half_a], [half_a, 1.0]],
                [0.0, 0.5 * self.b_mean[j]],
            )?;
            z.x[j] = x;
            z.y[j] = y;
        }
        Ok(z)
    }

    /// Minimax proximal point of the global objective:
    /// `argmin_x argmax_y f(x,y) + (theta/2)|x - xbar|^2 - (theta/2)|y - ybar|^2`.
    ///
    /// Per coordinate: `(lambda+theta) x - a/2 y = theta xbar`,
    /// `a/2 x + (1+theta) y = b/2 + theta ybar`.
    pub fn closed_form_prox(&self, q: &ProxQuery) -> Result<SaddlePoint> {
        if !(q.theta > 0.0) {
            return Err(invalid(format!("prox theta must be positive, got {}", q.theta)));
        }
        q.anchor.check_shape(self.d, self.d)?;
        let theta = q.theta;
        let mut z = SaddlePoint::zeros(self.d, self.d);
        for j in 0..self.d {
            let half_a = 0.5 * self.a_mean[j];
            let (x, y) = solve_2x2(
                [[self.lambda + theta, -half_a], [half_a, 1.0 + theta]],
                [
                    theta * q.anchor.x[j],
                    0.5 * self.b_mean[j] + theta * q.anchor.y[j],
                ],
            )?;
            z.x[j] = x;
            z.y[j] = y;
        }
        Ok(z)
    }

    /// Max-norm residual of the prox stationarity system at `z`.
    pub fn prox_residual(&self, q: &ProxQuery, z: &SaddlePoint) -> f64 {
        let theta = q.theta;
        (0..self.d)
            .map(|j| {
                let half_a = 0.5 * self.a_mean[j];
                let r1 = (self.lambda + theta) * z.x[j] - half_a * z.y[j] - theta * q.anchor.x[j];
                let r2 = half_a * z.x[j] + (1.0 + theta) * z.y[j]
                    - 0.5 * self.b_mean[j]
                    - theta * q.anchor.y[j];
                r1.abs().max(r2.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Lower estimate of the heterogeneity bound `zeta` restricted to the
    /// ball of the given radius around the origin.
    ///
    /// Client differences `G_i - G_j` are affine, so along any ray the
    /// norm is convex and its maximum over the segment `[0, radius u]` sits
    /// at an endpoint. The estimate evaluates the center and `samples`
    /// random boundary points `radius u_k` (directions drawn from `seed`),
    /// and is therefore non-decreasing in `radius` for a fixed seed. The
    /// unrestricted supremum is infinite whenever the diagonals differ.
    pub fn heterogeneity_estimate(&self, radius: f64, samples: usize, seed: u64) -> Result<f64> {
        if !(radius > 0.0) || samples == 0 {
            return Err(invalid("radius must be positive and samples at least one"));
        }
        let mut rng = stream_rng(seed, streams::SAMPLING);
        let mut points = vec![SaddlePoint::zeros(self.d, self.d)];
        for _ in 0..samples {
            let mut u = SaddlePoint::zeros(self.d, self.d);
            for v in u.iter_mut() {
                *v = standard_normal(&mut rng);
            }
            let norm = u.norm();
            if norm > 0.0 {
                u.scale(radius / norm);
            }
            points.push(u);
        }
        let mut best = 0.0f64;
        for z in &points {
            let maps: Vec<SaddlePoint> = (0..self.n).map(|i| self.client_mapping(i, z)).collect();
            for i in 0..self.n {
                for j in (i + 1)..self.n {
                    best = best.max(maps[i].distance(&maps[j]));
                }
            }
        }
        Ok(best)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut inst: TestbedInstance = toml::from_str(text)?;
        let d = inst.d;
        if inst.n == 0 || d == 0 || inst.a.len() != inst.n || inst.b.len() != inst.n {
            return Err(invalid("instance file has inconsistent n"));
        }
        if inst.a.iter().chain(&inst.b).any(|row| row.len() != d) {
            return Err(invalid("instance file has inconsistent d"));
        }
        if !(inst.lambda > 0.0) {
            return Err(invalid("instance file has non-positive lambda"));
        }
        inst.refresh_means();
        Ok(inst)
    }
}

fn solve_2x2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Result<(f64, f64)> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Numeric(format!("singular stationarity system (det = {det})")));
    }
    let x = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
    let y = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    Ok((x, y))
}

impl GradientOracle for TestbedInstance {
    fn primal_dim(&self) -> usize {
        self.d
    }
    fn dual_dim(&self) -> usize {
        self.d
    }
    fn n_clients(&self) -> usize {
        self.n
    }

    fn client_value(&self, client: usize, z: &SaddlePoint) -> f64 {
        let a = &self.a[client];
        let b = &self.b[client];
        let mut bracket = 0.0;
        let mut reg = 0.0;
        for j in 0..self.d {
            let (x, y) = (z.x[j], z.y[j]);
            bracket += y * y - b[j] * y + y * a[j] * x;
            reg += x * x;
        }
        -0.5 * bracket + 0.5 * self.lambda * reg
    }

    fn client_mapping(&self, client: usize, z: &SaddlePoint) -> SaddlePoint {
        let a = &self.a[client];
        let b = &self.b[client];
        let mut g = SaddlePoint::zeros(self.d, self.d);
        for j in 0..self.d {
            let (x, y) = (z.x[j], z.y[j]);
            g.x[j] = self.lambda * x - 0.5 * a[j] * y;
            g.y[j] = y - 0.5 * b[j] + 0.5 * a[j] * x;
        }
        g
    }
}

impl FederatedProblem for TestbedInstance {
    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            mu: self.mu(),
            beta: self.beta(),
            n_clients: self.n,
            sigma: 0.0,
            d_bound: self.optimal_point().ok().map(|z| z.norm()),
        }
    }

    fn heterogeneity_level(&self) -> Option<f64> {
        Some(self.s)
    }

    fn optimum(&self) -> Option<SaddlePoint> {
        self.optimal_point().ok()
    }

    fn exact_prox(&self, theta: f64, anchor: &SaddlePoint) -> Option<Result<SaddlePoint>> {
        Some(ProxQuery::new(theta, anchor.clone()).and_then(|q| self.closed_form_prox(&q)))
    }
}
