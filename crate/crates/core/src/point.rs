use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A joint primal-dual point `z = (x, y)`.
///
/// All vector arithmetic treats `z` as the concatenation of the two blocks,
/// so `norm_sq(z) = norm_sq(x) + norm_sq(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SaddlePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(primal_dim: usize, dual_dim: usize) -> Self {
        Self::filled(primal_dim, dual_dim, 0.0)
    }

    pub fn filled(primal_dim: usize, dual_dim: usize, value: f64) -> Self {
        Self {
            x: vec![value; primal_dim],
            y: vec![value; dual_dim],
        }
    }

    pub fn primal_dim(&self) -> usize {
        self.x.len()
    }

    pub fn dual_dim(&self) -> usize {
        self.y.len()
    }

    /// Total dimension `m + d`.
    pub fn dim(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn same_shape(&self, other: &SaddlePoint) -> bool {
        self.x.len() == other.x.len() && self.y.len() == other.y.len()
    }

    pub fn check_shape(&self, primal_dim: usize, dual_dim: usize) -> Result<()> {
        if self.x.len() != primal_dim || self.y.len() != dual_dim {
            return Err(invalid(format!(
                "point has dimensions ({}, {}), expected ({primal_dim}, {dual_dim})",
                self.x.len(),
                self.y.len()
            )));
        }
        Ok(())
    }

    /// Iterates over the concatenation `(x, y)`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.x.iter().chain(self.y.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.x.iter_mut().chain(self.y.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &SaddlePoint) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &SaddlePoint) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &SaddlePoint) -> f64 {
        self.distance_sq(other).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &SaddlePoint) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn add_assign(&mut self, other: &SaddlePoint) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> SaddlePoint {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn fill(&mut self, value: f64) {
        for a in self.iter_mut() {
            *a = value;
        }
    }

    /// Arithmetic mean, summing in slice order. Exact when all points are
    /// equal.
    ///
    /// Panics on an empty slice.
    pub fn mean(points: &[SaddlePoint]) -> SaddlePoint {
        let (first, rest) = points.split_first().expect("mean of an empty point set");
        if rest.iter().all(|p| p == first) {
            return first.clone();
        }
        let mut sum = first.clone();
        for p in rest {
            sum.add_assign(p);
        }
        sum.scale(1.0 / points.len() as f64);
        sum
    }
}

impl Add for &SaddlePoint {
    type Output = SaddlePoint;

    fn add(self, rhs: &SaddlePoint) -> SaddlePoint {
        let mut out = self.clone();
        out.add_assign(rhs);
        out
    }
}

impl Sub for &SaddlePoint {
    type Output = SaddlePoint;

    fn sub(self, rhs: &SaddlePoint) -> SaddlePoint {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SaddlePoint {
    type Output = SaddlePoint;

    fn mul(self, rhs: f64) -> SaddlePoint {
        self.scaled(rhs)
    }
}

impl Neg for &SaddlePoint {
    type Output = SaddlePoint;

    fn neg(self) -> SaddlePoint {
        self.scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_is_concatenated() {
        let z = SaddlePoint::new(vec![3.0], vec![4.0, 12.0]);
        assert_eq!(z.norm_sq(), 9.0 + 16.0 + 144.0);
        assert_eq!(z.norm(), 13.0);
        assert_eq!(z.dim(), 3);
    }

    #[test]
    fn shape_check_reports_mismatch() {
        let z = SaddlePoint::zeros(2, 3);
        assert!(z.check_shape(2, 3).is_ok());
        assert!(z.check_shape(3, 2).is_err());
    }

    #[test]
    fn mean_of_two() {
        let a = SaddlePoint::new(vec![0.0], vec![2.0]);
        let b = SaddlePoint::new(vec![2.0], vec![4.0]);
        assert_eq!(SaddlePoint::mean(&[a, b]), SaddlePoint::new(vec![1.0], vec![3.0]));
    }

    fn point(dim: usize) -> impl Strategy<Value = SaddlePoint> {
        (
            prop::collection::vec(-1e3..1e3f64, dim),
            prop::collection::vec(-1e3..1e3f64, dim),
        )
            .prop_map(|(x, y)| SaddlePoint::new(x, y))
    }

    proptest! {
        #[test]
        fn norm_sq_splits_by_block(z in point(4)) {
            let x: f64 = z.x.iter().map(|v| v * v).sum();
            let y: f64 = z.y.iter().map(|v| v * v).sum();
            prop_assert!((z.norm_sq() - (x + y)).abs() <= 1e-9 * (1.0 + x + y));
        }

        #[test]
        fn sub_then_add_recovers(a in point(3), b in point(3)) {
            let back = &(&a - &b) + &b;
            prop_assert!(back.distance(&a) <= 1e-9 * (1.0 + a.norm() + b.norm()));
        }
    }
}
