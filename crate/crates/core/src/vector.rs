//! Dense parameter vectors.
//!
//! Every quantity the optimizers touch (iterates, gradients, residuals,
//! momenta) is a flat `f64` vector of the model dimension. Operations return
//! new vectors; nothing is mutated through a shared reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

/// The two norms the sign compressors are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2_squared: f64,
}

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        ParamVector(data)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.len(),
            });
        }
        Ok(())
    }

    /// `(Σ|v_i|, Σ v_i²)`.
    pub fn norms(&self) -> Norms {
        norms(&self.0)
    }

    pub fn l2_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| c * v).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &ParamVector) -> ParamVector {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn zip_with(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> ParamVector {
        debug_assert_eq!(self.len(), other.len());
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Sum in slice order, then one division by the count.
    pub fn mean_of(vectors: &[ParamVector]) -> Option<ParamVector> {
        let first = vectors.first()?;
        let mut acc = first.0.clone();
        for v in &vectors[1..] {
            for (a, b) in acc.iter_mut().zip(&v.0) {
                *a += b;
            }
        }
        let m = vectors.len() as f64;
        for a in acc.iter_mut() {
            *a /= m;
        }
        Some(ParamVector(acc))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Norms of a raw slice; used per block by the compressors.
pub fn norms(v: &[f64]) -> Norms {
    let mut l1 = 0.0;
    let mut l2_squared = 0.0;
    for x in v {
        l1 += x.abs();
        l2_squared += x * x;
    }
    Norms { l1, l2_squared }
}

/// Sign with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norms_examples() {
        assert_eq!(
            ParamVector::from_vec(vec![0.0, 0.0]).norms(),
            Norms {
                l1: 0.0,
                l2_squared: 0.0
            }
        );
        assert_eq!(
            ParamVector::from_vec(vec![3.0, -1.0]).norms(),
            Norms {
                l1: 4.0,
                l2_squared: 10.0
            }
        );
        assert_eq!(
            ParamVector::from_vec(vec![1.0; 4]).norms(),
            Norms {
                l1: 4.0,
                l2_squared: 4.0
            }
        );
    }

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-2.0), -1.0);
    }

    #[test]
    fn mean_is_sum_then_divide() {
        let vs = vec![
            ParamVector::from_vec(vec![2.0, 0.0]),
            ParamVector::from_vec(vec![0.0, 2.0]),
        ];
        assert_eq!(ParamVector::mean_of(&vs).unwrap().as_slice(), &[1.0, 1.0]);
        assert!(ParamVector::mean_of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn norms_scale_and_permute(
            v in prop::collection::vec(-100.0f64..100.0, 1..40),
            c in -10.0f64..10.0,
            rot in 0usize..40,
        ) {
            let base = norms(&v);
            let scaled = norms(&v.iter().map(|x| c * x).collect::<Vec<_>>());
            prop_assert!((scaled.l1 - c.abs() * base.l1).abs() <= 1e-10 * (1.0 + scaled.l1));
            prop_assert!((scaled.l2_squared - c * c * base.l2_squared).abs()
                <= 1e-10 * (1.0 + scaled.l2_squared));

            let mut p = v.clone();
            p.rotate_left(rot % v.len());
            p.reverse();
            let permuted = norms(&p);
            prop_assert!((permuted.l1 - base.l1).abs() <= 1e-10 * (1.0 + base.l1));
            prop_assert!((permuted.l2_squared - base.l2_squared).abs()
                <= 1e-10 * (1.0 + base.l2_squared));
        }
    }
}
