//! Server-side minibatch baselines. Clients never move; each round the
//! server gathers `tau` queries per client at a single point.

use crate::error::{invalid, Result};
use crate::point::SaddlePoint;
use crate::problem::{GradientOracle, NoisyOracle};

/// Mean of `tau * n` noisy queries at `z`: the within-client mean of `tau`
/// queries, then the mean over clients in ascending order.
pub fn minibatch_direction<P: GradientOracle>(
    oracle: &mut NoisyOracle<P>,
    z: &SaddlePoint,
    tau: usize,
) -> SaddlePoint {
    let n = oracle.problem().n_clients();
    let per_client: Vec<SaddlePoint> = (0..n).map(|i| oracle.query_mean(i, z, tau)).collect();
    SaddlePoint::mean(&per_client)
}

/// One Minibatch Mirror Descent round: a single descent-ascent step along
/// the minibatch direction. Costs one communication round.
pub fn minibatch_md_round<P: GradientOracle>(
    server: &SaddlePoint,
    oracle: &mut NoisyOracle<P>,
    tau: usize,
    gamma_g: f64,
) -> Result<SaddlePoint> {
    if tau == 0 {
        return Err(invalid("tau must be at least 1"));
    }
    let g = minibatch_direction(oracle, server, tau);
    let mut next = server.clone();
    next.axpy(-gamma_g, &g);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorProxStep {
    /// Lookahead point `z^{r+1/2}`.
    pub half: SaddlePoint,
    pub next: SaddlePoint,
}

/// One Minibatch Mirror-prox (extragradient) update. Each of the two
/// minibatches costs a communication round, so the call consumes two.
pub fn minibatch_mp_round<P: GradientOracle>(
    server: &SaddlePoint,
    oracle: &mut NoisyOracle<P>,
    tau: usize,
    eta: f64,
) -> Result<MirrorProxStep> {
    if tau == 0 {
        return Err(invalid("tau must be at least 1"));
    }
    let g = minibatch_direction(oracle, server, tau);
    let mut half = server.clone();
    half.axpy(-eta, &g);
    let g_half = minibatch_direction(oracle, &half, tau);
    let mut next = server.clone();
    next.axpy(-eta, &g_half);
    Ok(MirrorProxStep { half, next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Bilinear, QueryNoise};
    use crate::testbed::generate_instance;

    fn pt(x: f64, y: f64) -> SaddlePoint {
        SaddlePoint::new(vec![x], vec![y])
    }

    #[test]
    fn exact_md_round_is_one_gda_step_for_any_tau() {
        let inst = generate_instance(6.0, 4, 5, 1e-5, 1).unwrap();
        let z = SaddlePoint::filled(4, 4, 1.0);
        let mut expected = z.clone();
        expected.axpy(-0.03, &inst.mapping(&z));
        for tau in [1, 7, 20] {
            let mut oracle = NoisyOracle::exact(&inst);
            assert_eq!(minibatch_md_round(&z, &mut oracle, tau, 0.03).unwrap(), expected);
        }
    }

    #[test]
    fn optimum_is_fixed_point() {
        let inst = generate_instance(6.0, 4, 5, 1e-5, 1).unwrap();
        let star = inst.optimal_point().unwrap();
        let mut oracle = NoisyOracle::exact(&inst);
        let next = minibatch_md_round(&star, &mut oracle, 3, 0.1).unwrap();
        assert!(next.distance(&star) < 1e-15);
        let mp = minibatch_mp_round(&star, &mut oracle, 3, 0.1).unwrap();
        assert!(mp.next.distance(&star) < 1e-15);
    }

    #[test]
    fn bilinear_extragradient_reference() {
        let mut oracle = NoisyOracle::exact(Bilinear);
        let step = minibatch_mp_round(&pt(1.0, 1.0), &mut oracle, 1, 0.1).unwrap();
        assert!(step.half.distance(&pt(0.9, 1.1)) < 1e-15);
        assert!(step.next.distance(&pt(0.89, 1.09)) < 1e-15);
        assert!(step.next.norm_sq() < 2.0);
        let gda = minibatch_md_round(&pt(1.0, 1.0), &mut oracle, 1, 0.1).unwrap();
        assert!(gda.distance(&pt(0.9, 1.1)) < 1e-15);
        assert!((gda.norm_sq() - 2.02).abs() < 1e-12);
    }

    #[test]
    fn minibatch_variance_shrinks_with_batch() {
        // Var of the averaged direction should be sigma^2 / (tau n).
        let inst = generate_instance(1.0, 2, 4, 1e-2, 3).unwrap();
        let z = SaddlePoint::filled(2, 2, 0.5);
        let exact = inst.mapping(&z);
        let (sigma, tau, reps) = (2.0, 5, 10_000);
        let mut oracle = NoisyOracle::new(&inst, QueryNoise::new(sigma, 21).unwrap());
        let mut total = 0.0;
        for _ in 0..reps {
            total += minibatch_direction(&mut oracle, &z, tau).distance_sq(&exact);
        }
        let measured = total / reps as f64;
        let expected = sigma * sigma / (tau * 4) as f64;
        assert!((measured / expected - 1.0).abs() < 0.1, "{measured} vs {expected}");
    }

    #[test]
    fn zero_tau_rejected() {
        let mut oracle = NoisyOracle::exact(Bilinear);
        assert!(minibatch_md_round(&pt(1.0, 1.0), &mut oracle, 0, 0.1).is_err());
        assert!(minibatch_mp_round(&pt(1.0, 1.0), &mut oracle, 0, 0.1).is_err());
    }
}
