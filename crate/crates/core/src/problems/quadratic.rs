use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::ParamVector;

use super::{check_positive, GradOracle, Sample};

/// `F(x) = ½xᵀAx − bᵀx` with additive Gaussian gradient noise
/// `ζ ~ N(0, σ²/(d·batch) I)`, so a single-sample gradient has
/// `E‖g − ∇F‖² = σ²`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    sigma: f64,
    smoothness: f64,
    minimizer: DVector<f64>,
}

/// Random SPD quadratic with eigenvalues evenly spaced on `[1, κ]`
/// (so `L = κ`) and `b ~ N(0, I)`.
pub fn make_quadratic(d: usize, condition: f64, sigma: f64, seed: u64) -> Result<Quadratic> {
    check_positive("quadratic dim", d)?;
    if !(condition >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "condition number must be >= 1, got {condition}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise must be >= 0, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let eig = DVector::from_fn(d, |i, _| {
        if d == 1 {
            condition
        } else {
            1.0 + (condition - 1.0) * i as f64 / (d - 1) as f64
        }
    });
    let a: DMatrix<f64> = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    // exact symmetry so that xᵀAx is well defined under rounding
    let a = (&a + a.transpose()) * 0.5;
    let b = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let inv = DVector::from_fn(d, |i, _| 1.0 / eig[i]);
    let minimizer = &q * DMatrix::from_diagonal(&inv) * q.transpose() * &b;
    Ok(Quadratic {
        a,
        b,
        sigma,
        smoothness: condition,
        minimizer,
    })
}

impl Quadratic {
    /// Quadratic from an explicit symmetric positive definite `A` (row-major) and `b`.
    pub fn from_parts(a: Vec<f64>, b: Vec<f64>, sigma: f64) -> Result<Self> {
        let d = b.len();
        check_positive("quadratic dim", d)?;
        if a.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: a.len(),
            });
        }
        let a = DMatrix::from_row_slice(d, d, &a);
        let b = DVector::from_vec(b);
        let eig = a.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidConfig("A must be positive definite".into()));
        }
        let smoothness = eig.eigenvalues.max();
        let minimizer = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("A must be positive definite".into()))?
            .solve(&b);
        Ok(Quadratic {
            a,
            b,
            sigma,
            smoothness,
            minimizer,
        })
    }

    pub fn minimizer(&self) -> ParamVector {
        ParamVector::from_vec(self.minimizer.iter().copied().collect())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `F_* = F(x*)`.
    pub fn optimal_loss(&self) -> f64 {
        self.loss(&self.minimizer())
    }

    fn as_dvec(x: &ParamVector) -> DVector<f64> {
        DVector::from_column_slice(x.as_slice())
    }
}

impl GradOracle for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        let xv = Self::as_dvec(x);
        0.5 * xv.dot(&(&self.a * &xv)) - self.b.dot(&xv)
    }

    fn exact_gradient(&self, x: &ParamVector) -> ParamVector {
        let xv = Self::as_dvec(x);
        let g = &self.a * xv - &self.b;
        ParamVector::from_vec(g.iter().copied().collect())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, batch: usize) -> Sample {
        let d = self.dim();
        if self.sigma == 0.0 {
            return Sample::Noise(ParamVector::zeros(d));
        }
        let std = self.sigma / ((d * batch.max(1)) as f64).sqrt();
        Sample::Noise(ParamVector::from_vec(
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    std * z
                })
                .collect(),
        ))
    }

    fn stochastic_gradient(&self, x: &ParamVector, sample: &Sample) -> ParamVector {
        let g = self.exact_gradient(x);
        match sample {
            Sample::Noise(z) if self.sigma != 0.0 => g.add(z),
            _ => g,
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn natural_partition(&self) -> BlockPartition {
        BlockPartition::single(self.dim()).expect("d >= 1")
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.dim())
    }
}
