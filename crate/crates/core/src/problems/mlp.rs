use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::ParamVector;

use super::{draw_indices, mix, Dataset, GradOracle, Sample};

const MAX_PARAMS: usize = 100_000;

/// Fully connected tanh network with a linear output layer and squared loss
/// `½ mean ‖f(a_i) − y_i‖²`.
///
/// Parameters are laid out per layer as `W` (row-major, `out × in`) then `b`;
/// each of these tensors is one block of the natural partition.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<usize>,
    data: Dataset,
    init_seed: u64,
}

/// Network `layers = [in, hidden.., out]` fitted to a random teacher of the
/// same shape plus small label noise.
pub fn make_mlp(layers: &[usize], n: usize, seed: u64) -> Result<Mlp> {
    validate_layers(layers)?;
    if n == 0 {
        return Err(Error::InvalidConfig("samples must be >= 1".into()));
    }
    let (input, output) = (layers[0], *layers.last().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = Mlp {
        layers: layers.to_vec(),
        data: Dataset::new(input, output, vec![0.0; input], vec![0.0; output])?,
        init_seed: mix(seed, 1),
    };
    let teacher_params = teacher.initial_point().scale(2.0);
    let mut xs = Vec::with_capacity(n * input);
    let mut ys = Vec::with_capacity(n * output);
    for _ in 0..n {
        let a: Vec<f64> = (0..input)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let out = teacher.forward(teacher_params.as_slice(), &a);
        for v in out.last().unwrap() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            ys.push(v + 0.1 * noise);
        }
        xs.extend(a);
    }
    Mlp::new(layers, Dataset::new(input, output, xs, ys)?, mix(seed, 2))
}

fn validate_layers(layers: &[usize]) -> Result<()> {
    if layers.len() < 3 {
        return Err(Error::InvalidConfig(
            "mlp needs at least one hidden layer: [in, hidden.., out]".into(),
        ));
    }
    if layers.contains(&0) {
        return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
    }
    let count: usize = layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
    if count > MAX_PARAMS {
        return Err(Error::InvalidConfig(format!(
            "mlp has {count} parameters, limit is {MAX_PARAMS}"
        )));
    }
    Ok(())
}

impl Mlp {
    pub fn new(layers: &[usize], data: Dataset, init_seed: u64) -> Result<Self> {
        validate_layers(layers)?;
        if data.dim != layers[0] || data.label_width != *layers.last().unwrap() {
            return Err(Error::Dataset(format!(
                "dataset is {}→{}, network is {}→{}",
                data.dim,
                data.label_width,
                layers[0],
                layers.last().unwrap()
            )));
        }
        Ok(Mlp {
            layers: layers.to_vec(),
            data,
            init_seed,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers.windows(2).map(|w| (w[1], w[0]))
    }

    fn param_count(&self) -> usize {
        self.shapes().map(|(o, i)| o * i + o).sum()
    }

    /// Activations of every layer, input included.
    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layers.len() - 1;
        let mut acts = vec![input.to_vec()];
        let mut off = 0;
        for (l, (out, inp)) in self.shapes().enumerate() {
            let w = &params[off..off + out * inp];
            let b = &params[off + out * inp..off + out * inp + out];
            off += out * inp + out;
            let prev = acts.last().unwrap();
            let z: Vec<f64> = (0..out)
                .map(|r| {
                    let row = &w[r * inp..(r + 1) * inp];
                    b[r] + row.iter().zip(prev).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect();
            acts.push(if l + 1 < n_layers {
                z.into_iter().map(f64::tanh).collect()
            } else {
                z
            });
        }
        acts
    }

    fn batch_loss_grad(
        &self,
        params: &ParamVector,
        rows: impl Iterator<Item = usize>,
        want_grad: bool,
    ) -> (f64, ParamVector) {
        let p = params.as_slice();
        let mut grad = vec![0.0; if want_grad { p.len() } else { 0 }];
        let mut loss = 0.0;
        let mut count = 0usize;
        let shapes: Vec<_> = self.shapes().collect();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(o, i) in &shapes {
            offsets.push(off);
            off += o * i + o;
        }
        for r in rows {
            count += 1;
            let acts = self.forward(p, self.data.row(r));
            let out = acts.last().unwrap();
            let mut delta: Vec<f64> = out
                .iter()
                .zip(self.data.label(r))
                .map(|(o, y)| o - y)
                .collect();
            loss += 0.5 * delta.iter().map(|v| v * v).sum::<f64>();
            if !want_grad {
                continue;
            }
            for l in (0..shapes.len()).rev() {
                let (o, i) = shapes[l];
                let base = offsets[l];
                let prev = &acts[l];
                for row in 0..o {
                    let gw = &mut grad[base + row * i..base + (row + 1) * i];
                    for (g, x) in gw.iter_mut().zip(prev) {
                        *g += delta[row] * x;
                    }
                    grad[base + o * i + row] += delta[row];
                }
                if l > 0 {
                    let w = &p[base..base + o * i];
                    delta = (0..i)
                        .map(|c| {
                            let back: f64 = (0..o).map(|row| w[row * i + c] * delta[row]).sum();
                            back * (1.0 - prev[c] * prev[c])
                        })
                        .collect();
                }
            }
        }
        let c = count.max(1) as f64;
        (
            loss / c,
            ParamVector::from_vec(grad.into_iter().map(|g| g / c).collect()),
        )
    }
}

impl GradOracle for Mlp {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss(&self, x: &ParamVector) -> f64 {
        self.batch_loss_grad(x, 0..self.data.n, false).0
    }

    fn exact_gradient(&self, x: &ParamVector) -> ParamVector {
        self.batch_loss_grad(x, 0..self.data.n, true).1
    }

    fn draw(&self, rng: &mut ChaCha8Rng, batch: usize) -> Sample {
        Sample::Indices(draw_indices(rng, self.data.n, batch))
    }

    fn stochastic_gradient(&self, x: &ParamVector, sample: &Sample) -> ParamVector {
        match sample {
            Sample::Indices(idx) => self.batch_loss_grad(x, idx.iter().copied(), true).1,
            Sample::Noise(_) => self.exact_gradient(x),
        }
    }

    /// Not available in closed form; see [`super::estimate_smoothness`].
    fn smoothness(&self) -> Option<f64> {
        None
    }

    fn natural_partition(&self) -> BlockPartition {
        let sizes: Vec<usize> = self.shapes().flat_map(|(o, i)| [o * i, o]).collect();
        BlockPartition::new(&sizes).expect("layer widths >= 1")
    }

    /// Weights `N(0, 1/fan_in)`, biases zero.
    fn initial_point(&self) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let mut out = Vec::with_capacity(self.param_count());
        for (o, i) in self.shapes() {
            let std = 1.0 / (i as f64).sqrt();
            for _ in 0..o * i {
                let z: f64 = StandardNormal.sample(&mut rng);
                out.push(std * z);
            }
            out.extend(std::iter::repeat_n(0.0, o));
        }
        ParamVector::from_vec(out)
    }
}
