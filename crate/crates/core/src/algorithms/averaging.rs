use crate::error::{invalid, Result};
use crate::point::SaddlePoint;

/// Weighted iterate average `(1/W_K) sum_k w_k z^k` with geometric weights
/// `w_k = q^(1-k)`, `q = 1 - c3 * gamma * mu`.
///
/// The running sum and weight total are stored divided by the newest
/// weight, so nothing grows with `K`.
#[derive(Debug, Clone)]
pub struct AverageAccumulator {
    decay: f64,
    sum: Option<SaddlePoint>,
    weight: f64,
    count: usize,
}

impl AverageAccumulator {
    /// `decay` is `c3 * gamma * mu`; it must lie in `[0, 1)`.
    pub fn new(decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(invalid(format!("weight decay c3*gamma*mu must lie in [0, 1), got {decay}")));
        }
        Ok(Self {
            decay,
            sum: None,
            weight: 0.0,
            count: 0,
        })
    }

    pub fn from_parts(c3: f64, gamma: f64, mu: f64) -> Result<Self> {
        Self::new(c3 * gamma * mu)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, z: &SaddlePoint) {
        // w_k / w_{k-1} = 1/q, so rescaling the old totals by q normalizes
        // them to the new weight w_k = 1.
        let q = 1.0 - self.decay;
        match &mut self.sum {
            None => self.sum = Some(z.clone()),
            Some(sum) => {
                sum.scale(q);
                sum.add_assign(z);
            }
        }
        self.weight = self.weight * q + 1.0;
        self.count += 1;
    }

    pub fn output(&self) -> Result<SaddlePoint> {
        match &self.sum {
            None => Err(invalid("weighted output of an empty accumulator")),
            Some(sum) => Ok(sum.scaled(1.0 / self.weight)),
        }
    }
}

/// Checked accessor mirroring the accumulator's output.
pub fn weighted_output(acc: &AverageAccumulator) -> Result<SaddlePoint> {
    acc.output()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> SaddlePoint {
        SaddlePoint::new(vec![v], vec![])
    }

    #[test]
    fn zero_decay_is_plain_average() {
        let mut acc = AverageAccumulator::new(0.0).unwrap();
        for v in [1.0, 2.0, 6.0] {
            acc.push(&s(v));
        }
        assert_eq!(acc.output().unwrap(), s(3.0));
    }

    #[test]
    fn constant_sequence_is_fixed() {
        let mut acc = AverageAccumulator::new(0.3).unwrap();
        for _ in 0..50 {
            acc.push(&s(2.5));
        }
        assert!((acc.output().unwrap().x[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn three_point_reference() {
        // c3 = 1/4, gamma*mu = 0.4: w = (0.9, 1, 1/0.9).
        let mut acc = AverageAccumulator::from_parts(0.25, 0.4, 1.0).unwrap();
        for v in [0.0, 1.0, 2.0] {
            acc.push(&s(v));
        }
        let expected = (0.0 * 0.9 + 1.0 + 2.0 / 0.9) / (0.9 + 1.0 + 1.0 / 0.9);
        assert!((acc.output().unwrap().x[0] - expected).abs() < 1e-14);
        assert!((expected - 1.0702).abs() < 1e-4);
    }

    #[test]
    fn long_runs_stay_finite() {
        let mut acc = AverageAccumulator::new(0.5).unwrap();
        for k in 0..10_000 {
            acc.push(&s(k as f64));
        }
        let out = acc.output().unwrap().x[0];
        assert!(out.is_finite() && out > 9_990.0);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(AverageAccumulator::new(0.0).unwrap().output().is_err());
        assert!(AverageAccumulator::new(1.0).is_err());
        assert!(AverageAccumulator::new(-0.1).is_err());
    }
}
