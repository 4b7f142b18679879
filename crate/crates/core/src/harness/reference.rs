//! Reference computations for the verification suites.
//!
//! Everything here is rebuilt from the raw instance data (diagonals,
//! offsets, lambda) or from plain arithmetic, and never calls the oracle
//! implementations it is used to check.

use crate::point::SaddlePoint;
use crate::problem::GradientOracle;
use crate::testbed::TestbedInstance;

/// `f_i(x, y) = -1/2 (|y|^2 - b^T y + y^T diag(a) x) + lambda/2 |x|^2`.
pub fn client_value(inst: &TestbedInstance, client: usize, z: &SaddlePoint) -> f64 {
    let (a, b) = (inst.diag(client), inst.offset(client));
    let mut yy = 0.0;
    let mut by = 0.0;
    let mut yax = 0.0;
    let mut xx = 0.0;
    for j in 0..inst.dim() {
        yy += z.y[j] * z.y[j];
        by += b[j] * z.y[j];
        yax += z.y[j] * a[j] * z.x[j];
        xx += z.x[j] * z.x[j];
    }
    -0.5 * (yy - by + yax) + 0.5 * inst.lambda() * xx
}

/// `G_i = (lambda x - a y / 2, y - b / 2 + a x / 2)`, coordinate by coordinate.
pub fn client_mapping(inst: &TestbedInstance, client: usize, z: &SaddlePoint) -> SaddlePoint {
    let (a, b) = (inst.diag(client), inst.offset(client));
    let lambda = inst.lambda();
    let d = inst.dim();
    let x = (0..d).map(|j| lambda * z.x[j] - 0.5 * a[j] * z.y[j]).collect();
    let y = (0..d).map(|j| z.y[j] - 0.5 * b[j] + 0.5 * a[j] * z.x[j]).collect();
    SaddlePoint::new(x, y)
}

pub fn global_mapping(inst: &TestbedInstance, z: &SaddlePoint) -> SaddlePoint {
    let n = inst.n_clients();
    let parts: Vec<SaddlePoint> = (0..n).map(|i| client_mapping(inst, i, z)).collect();
    let mut out = SaddlePoint::zeros(z.primal_dim(), z.dual_dim());
    for p in &parts {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= n as f64;
    }
    out
}

/// Central difference of `f` along concatenated coordinate `coord`.
pub fn central_difference(f: impl Fn(&SaddlePoint) -> f64, z: &SaddlePoint, coord: usize, h: f64) -> f64 {
    let bump = |delta: f64| {
        let mut p = z.clone();
        if coord < p.x.len() {
            p.x[coord] += delta;
        } else {
            p.y[coord - z.x.len()] += delta;
        }
        f(&p)
    };
    (bump(h) - bump(-h)) / (2.0 * h)
}

/// Finite-difference gradient mapping `(d f / dx, -d f / dy)`.
pub fn difference_mapping(f: impl Fn(&SaddlePoint) -> f64, z: &SaddlePoint, h: f64) -> SaddlePoint {
    let m = z.x.len();
    let x = (0..m).map(|j| central_difference(&f, z, j, h)).collect();
    let y = (0..z.y.len()).map(|j| -central_difference(&f, z, m + j, h)).collect();
    SaddlePoint::new(x, y)
}

/// Plain gradient descent-ascent `z <- z - gamma G(z)`; returns
/// `steps + 1` iterates starting with `z0`.
pub fn gda(inst: &TestbedInstance, z0: &SaddlePoint, gamma: f64, steps: usize) -> Vec<SaddlePoint> {
    let mut out = vec![z0.clone()];
    for _ in 0..steps {
        let z = out.last().expect("non-empty");
        let g = global_mapping(inst, z);
        let x = z.x.iter().zip(&g.x).map(|(a, b)| a - gamma * b).collect();
        let y = z.y.iter().zip(&g.y).map(|(a, b)| a - gamma * b).collect();
        out.push(SaddlePoint::new(x, y));
    }
    out
}

/// The log-corrected stepsize evaluated in log space:
/// `min(gmax, log(max(2, min(a mu^2 K^2 / c1, a mu^3 K^3 / c2))) / (c3 mu K))`.
pub fn theorem_stepsize(a: f64, c1: f64, c2: f64, c3: f64, gamma_max: f64, mu: f64, horizon: u64) -> f64 {
    let k = horizon as f64;
    let log_term = |power: i32, c: f64| {
        if c == 0.0 {
            f64::INFINITY
        } else {
            a.ln() + f64::from(power) * (mu.ln() + k.ln()) - c.ln()
        }
    };
    let log_arg = log_term(2, c1).min(log_term(3, c2)).max(2f64.ln());
    if log_arg.is_infinite() {
        return gamma_max;
    }
    gamma_max.min(log_arg / (c3 * mu * k))
}

/// Solves the per-coordinate prox system of the testbed by Cramer's rule.
pub fn prox(inst: &TestbedInstance, theta: f64, anchor: &SaddlePoint) -> SaddlePoint {
    let d = inst.dim();
    let n = inst.n_clients() as f64;
    let lambda = inst.lambda();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for j in 0..d {
        let a = (0..inst.n_clients()).map(|i| inst.diag(i)[j]).sum::<f64>() / n;
        let b = (0..inst.n_clients()).map(|i| inst.offset(i)[j]).sum::<f64>() / n;
        // [lambda + theta, -a/2; a/2, 1 + theta] (x, y) = (theta xbar, b/2 + theta ybar)
        let (m11, m12, m21, m22) = (lambda + theta, -0.5 * a, 0.5 * a, 1.0 + theta);
        let (r1, r2) = (theta * anchor.x[j], 0.5 * b + theta * anchor.y[j]);
        let det = m11 * m22 - m12 * m21;
        x[j] = (r1 * m22 - m12 * r2) / det;
        y[j] = (m11 * r2 - m21 * r1) / det;
    }
    SaddlePoint::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::generate_instance;

    #[test]
    fn reference_agrees_with_oracle_on_one_instance() {
        let inst = generate_instance(3.0, 4, 3, 1e-2, 5).unwrap();
        let z = SaddlePoint::new(vec![0.3, -1.0, 2.0, 0.1], vec![1.0, 0.5, -0.7, 0.0]);
        for i in 0..3 {
            assert!((client_value(&inst, i, &z) - inst.client_value(i, &z)).abs() < 1e-12);
            assert!(client_mapping(&inst, i, &z).distance(&inst.client_mapping(i, &z)) < 1e-12);
        }
    }

    #[test]
    fn reference_stepsize_example() {
        let v = theorem_stepsize(1.0, 1.0, 1.0, 0.25, 10.0, 1.0, 100);
        assert!((v - (1e4f64).ln() / 25.0).abs() < 1e-15);
        assert_eq!(theorem_stepsize(1.0, 0.0, 0.0, 0.25, 3.0, 1.0, 10), 3.0);
    }
}
