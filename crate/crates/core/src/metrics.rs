//! Per-iteration diagnostics and the trace row schema.

use serde::{Deserialize, Serialize};

use crate::point::SaddlePoint;
use crate::problem::{duality_gap, GradientOracle};

/// One recorded iteration. Field order is the CSV column order:
/// `algorithm,s,seed,gamma,k,comm_rounds,dist_sq,gap,drift,cv_error,meta_t`.
///
/// `gamma` is the nominal stepsize of the run (the global stepsize; for
/// FedAvg-S and SCAFFOLD-S with equal stepsizes it is also the local one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub algorithm: String,
    pub s: Option<f64>,
    pub seed: u64,
    pub gamma: f64,
    pub k: u64,
    pub comm_rounds: u64,
    /// `|z^k - z*|^2`; absent when the optimum is unknown.
    pub dist_sq: Option<f64>,
    /// `Gap*(z^k)`; absent when the optimum is unknown.
    pub gap: Option<f64>,
    /// Client drift `V_k`.
    pub drift: f64,
    /// Control-variate error `sigma_k` (SCAFFOLD-S based runs only).
    pub cv_error: Option<f64>,
    /// Catalyst meta-iteration.
    pub meta_t: Option<u64>,
}

/// `V = (1/n) sum_i |mean - z_i|^2`.
pub fn client_drift(client_points: &[SaddlePoint], mean_point: &SaddlePoint) -> f64 {
    if client_points.is_empty() {
        return 0.0;
    }
    client_points
        .iter()
        .map(|z| z.distance_sq(mean_point))
        .sum::<f64>()
        / client_points.len() as f64
}

/// `sigma_k = (1/n) sum_i |G_i(z_tilde) - G_i(z*)|^2`.
pub fn control_variate_error<P: GradientOracle + ?Sized>(
    problem: &P,
    z_tilde: &SaddlePoint,
    z_star: &SaddlePoint,
) -> f64 {
    let n = problem.n_clients();
    (0..n)
        .map(|i| {
            problem
                .client_mapping(i, z_tilde)
                .distance_sq(&problem.client_mapping(i, z_star))
        })
        .sum::<f64>()
        / n as f64
}

/// Distance and gap of `z` to a known optimum, or `(None, None)`.
pub fn solution_quality<P: GradientOracle + ?Sized>(
    problem: &P,
    z: &SaddlePoint,
    z_star: Option<&SaddlePoint>,
) -> (Option<f64>, Option<f64>) {
    match z_star {
        Some(star) => (
            Some(z.distance_sq(star)),
            duality_gap(problem, z, star).ok(),
        ),
        None => (None, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::generate_instance;
    use crate::problem::FederatedProblem;
    use proptest::prelude::*;

    fn scalar(v: f64) -> SaddlePoint {
        SaddlePoint::new(vec![v], vec![])
    }

    #[test]
    fn drift_of_identical_clients_is_zero() {
        let pts = vec![scalar(3.0); 4];
        assert_eq!(client_drift(&pts, &scalar(3.0)), 0.0);
    }

    #[test]
    fn drift_two_scalars() {
        let pts = vec![scalar(0.0), scalar(2.0)];
        assert_eq!(client_drift(&pts, &SaddlePoint::mean(&pts)), 1.0);
    }

    #[test]
    fn cv_error_vanishes_at_optimum_and_is_lipschitz_bounded() {
        let inst = generate_instance(6.0, 5, 4, 1e-3, 12).unwrap();
        let star = inst.optimal_point().unwrap();
        assert_eq!(control_variate_error(&inst, &star, &star), 0.0);
        let z = SaddlePoint::new(vec![1.0, -2.0, 0.5, 0.0, 3.0], vec![0.1, 0.2, -0.3, 4.0, 1.0]);
        let beta = inst.constants().beta;
        let err = control_variate_error(&inst, &z, &star);
        assert!(err <= (2.0 * beta).powi(2) * z.distance_sq(&star));
    }

    #[test]
    fn cv_error_homogeneous_equals_global() {
        let inst = generate_instance(0.0, 3, 5, 1e-3, 12).unwrap();
        let star = inst.optimal_point().unwrap();
        let z = SaddlePoint::new(vec![1.0, -2.0, 0.5], vec![0.1, 0.2, -0.3]);
        let global = inst.mapping(&z).distance_sq(&inst.mapping(&star));
        assert!((control_variate_error(&inst, &z, &star) - global).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn drift_translation_invariant(
            vals in prop::collection::vec(-10.0..10.0f64, 1..6),
            shift in -5.0..5.0f64,
        ) {
            let pts: Vec<_> = vals.iter().map(|&v| scalar(v)).collect();
            let moved: Vec<_> = vals.iter().map(|&v| scalar(v + shift)).collect();
            let a = client_drift(&pts, &SaddlePoint::mean(&pts));
            let b = client_drift(&moved, &SaddlePoint::mean(&moved));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
