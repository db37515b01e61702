use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::ParamVector;

use super::{check_positive, draw_indices, Dataset, GradOracle, Sample};

/// Unregularized binary logistic regression, labels in `{−1, +1}`:
/// `F(w) = (1/n) Σ log(1 + exp(−y_i wᵀa_i))`.
#[derive(Debug, Clone)]
pub struct Logistic {
    data: Dataset,
    smoothness: f64,
}

/// Two Gaussian classes `a ~ N(±μ, I)` with `‖μ‖ = 1`, balanced labels.
pub fn make_logistic(n: usize, features: usize, seed: u64) -> Result<Logistic> {
    Logistic::generate(n, features, 0.5, 1.0, seed)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    pub fn generate(
        n: usize,
        features: usize,
        class_balance: f64,
        separation: f64,
        seed: u64,
    ) -> Result<Self> {
        check_positive("samples", n)?;
        check_positive("features", features)?;
        if !(0.0..=1.0).contains(&class_balance) {
            return Err(Error::InvalidConfig(format!(
                "class_balance must lie in [0, 1], got {class_balance}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mean: Vec<f64> = (0..features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for m in mean.iter_mut() {
            *m *= separation / norm;
        }
        let mut xs = Vec::with_capacity(n * features);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let y = if rng.random::<f64>() < class_balance {
                1.0
            } else {
                -1.0
            };
            for m in &mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                xs.push(y * m + z);
            }
            ys.push(y);
        }
        Self::from_dataset(Dataset::new(features, 1, xs, ys)?)
    }

    pub fn from_dataset(data: Dataset) -> Result<Self> {
        if data.label_width != 1 {
            return Err(Error::Dataset(
                "logistic regression needs one label column".into(),
            ));
        }
        let max_row = (0..data.n)
            .map(|i| data.row(i).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Logistic {
            smoothness: 0.25 * max_row,
            data,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn margin(&self, w: &[f64], i: usize) -> f64 {
        self.data
            .row(i)
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.data.label(i)[0]
    }

    fn batch_gradient(&self, w: &ParamVector, rows: impl Iterator<Item = usize>) -> ParamVector {
        let d = self.data.dim;
        let mut g = vec![0.0; d];
        let mut count = 0usize;
        for i in rows {
            let y = self.data.label(i)[0];
            let coeff = -y * sigmoid(-self.margin(w.as_slice(), i));
            for (gj, aj) in g.iter_mut().zip(self.data.row(i)) {
                *gj += coeff * aj;
            }
            count += 1;
        }
        let c = count.max(1) as f64;
        ParamVector::from_vec(g.into_iter().map(|v| v / c).collect())
    }
}

impl GradOracle for Logistic {
    fn dim(&self) -> usize {
        self.data.dim
    }

    fn loss(&self, w: &ParamVector) -> f64 {
        (0..self.data.n)
            .map(|i| softplus(-self.margin(w.as_slice(), i)))
            .sum::<f64>()
            / self.data.n as f64
    }

    fn exact_gradient(&self, w: &ParamVector) -> ParamVector {
        self.batch_gradient(w, 0..self.data.n)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, batch: usize) -> Sample {
        Sample::Indices(draw_indices(rng, self.data.n, batch))
    }

    fn stochastic_gradient(&self, w: &ParamVector, sample: &Sample) -> ParamVector {
        match sample {
            Sample::Indices(idx) => self.batch_gradient(w, idx.iter().copied()),
            Sample::Noise(_) => self.exact_gradient(w),
        }
    }

    /// `¼ max_i ‖a_i‖²`, an upper bound on the Hessian norm.
    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn natural_partition(&self) -> BlockPartition {
        BlockPartition::single(self.dim()).expect("features >= 1")
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.dim())
    }
}
