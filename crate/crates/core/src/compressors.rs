//! δ-approximate compressors and the diagnostics used to study them.
//!
//! A compressor `C` is δ-approximate when `‖C(x) − x‖² ≤ (1 − δ)‖x‖²`.
//! Every kind here exposes a `v`-independent lower bound on δ through
//! [`CompressorSpec::delta_lower_bound`]; the data-dependent factor of the
//! blockwise sign compressor is [`phi`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::{norms, sign, ParamVector};

/// Tagged description of a compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorSpec {
    Identity,
    /// `‖v‖₁/d · sign(v)` over the whole vector.
    ScaledSign,
    /// Scaled sign applied independently on each block of `partition`.
    BlockwiseScaledSign {
        partition: BlockPartition,
    },
    /// Keep the `k` largest-magnitude coordinates, lowest index first on ties.
    TopK {
        k: usize,
    },
    /// `c·U(v)` where `U` rounds each coordinate stochastically onto
    /// `{−‖v‖₂, +‖v‖₂}` so that `E[U(v)] = v` and `E‖U(v)‖² = d‖v‖²`.
    /// Any `c ∈ (0, 1/d]` yields a `c`-approximate compressor in expectation.
    UnbiasedScaled {
        c: f64,
        seed: u64,
    },
}

impl CompressorSpec {
    /// Unbiased stochastic sign rounding with the largest admissible `c = 1/d`.
    pub fn unbiased_scaled(d: usize, seed: u64) -> Self {
        CompressorSpec::UnbiasedScaled {
            c: 1.0 / d as f64,
            seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CompressorSpec::Identity => "identity",
            CompressorSpec::ScaledSign => "scaled_sign",
            CompressorSpec::BlockwiseScaledSign { .. } => "blockwise_scaled_sign",
            CompressorSpec::TopK { .. } => "top_k",
            CompressorSpec::UnbiasedScaled { .. } => "unbiased_scaled",
        }
    }

    /// Checks that the spec is usable on vectors of length `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::InvalidCompressor("dimension must be >= 1".into()));
        }
        match self {
            CompressorSpec::Identity | CompressorSpec::ScaledSign => Ok(()),
            CompressorSpec::BlockwiseScaledSign { partition } => {
                if partition.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: partition.dim(),
                        got: d,
                    });
                }
                Ok(())
            }
            CompressorSpec::TopK { k } => {
                if *k == 0 || *k > d {
                    return Err(Error::InvalidCompressor(format!(
                        "top_k needs 1 <= k <= d, got k={k}, d={d}"
                    )));
                }
                Ok(())
            }
            CompressorSpec::UnbiasedScaled { c, .. } => {
                let max_c = 1.0 / d as f64;
                if !(*c > 0.0 && *c <= max_c * (1.0 + 1e-12)) {
                    return Err(Error::InvalidCompressor(format!(
                        "unbiased_scaled needs 0 < c <= 1/d = {max_c}, got {c}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Lower bound on δ that holds for every input of length `d`.
    pub fn delta_lower_bound(&self, d: usize) -> f64 {
        match self {
            CompressorSpec::Identity => 1.0,
            CompressorSpec::ScaledSign => 1.0 / d as f64,
            CompressorSpec::BlockwiseScaledSign { partition } => {
                1.0 / partition.max_block_size() as f64
            }
            CompressorSpec::TopK { k } => *k as f64 / d as f64,
            CompressorSpec::UnbiasedScaled { c, .. } => *c,
        }
    }

    /// True when the output is `scale·sign` per block (so it has a 1-bit wire form).
    pub fn is_sign_based(&self) -> bool {
        matches!(
            self,
            CompressorSpec::ScaledSign | CompressorSpec::BlockwiseScaledSign { .. }
        )
    }

    /// Partition used by sign-based kinds (`ScaledSign` is one block).
    pub fn sign_partition(&self, d: usize) -> Option<BlockPartition> {
        match self {
            CompressorSpec::ScaledSign => BlockPartition::single(d).ok(),
            CompressorSpec::BlockwiseScaledSign { partition } => Some(partition.clone()),
            _ => None,
        }
    }

    /// Applies the compressor, drawing rounding noise from `rng` when needed.
    pub fn compress_with<R: Rng + ?Sized>(
        &self,
        v: &ParamVector,
        rng: &mut R,
    ) -> Result<ParamVector> {
        let d = v.len();
        self.validate(d)?;
        let out = match self {
            CompressorSpec::Identity => v.clone(),
            CompressorSpec::ScaledSign => {
                let mut out = vec![0.0; d];
                scaled_sign_into(v.as_slice(), &mut out);
                ParamVector::from_vec(out)
            }
            CompressorSpec::BlockwiseScaledSign { partition } => {
                let mut out = vec![0.0; d];
                for r in partition.ranges() {
                    scaled_sign_into(&v.as_slice()[r.clone()], &mut out[r]);
                }
                ParamVector::from_vec(out)
            }
            CompressorSpec::TopK { k } => top_k(v, *k),
            CompressorSpec::UnbiasedScaled { c, .. } => unbiased_scaled(v, *c, rng),
        };
        Ok(out)
    }
}

fn scaled_sign_into(src: &[f64], dst: &mut [f64]) {
    let scale = norms(src).l1 / src.len() as f64;
    for (o, &x) in dst.iter_mut().zip(src) {
        *o = scale * sign(x);
    }
}

fn top_k(v: &ParamVector, k: usize) -> ParamVector {
    let x = v.as_slice();
    let mut idx: Vec<usize> = (0..x.len()).collect();
    // total order: larger magnitude first, then lower index
    let cmp = |a: &usize, b: &usize| x[*b].abs().total_cmp(&x[*a].abs()).then_with(|| a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    let mut out = vec![0.0; x.len()];
    for &i in &idx[..k] {
        out[i] = x[i];
    }
    ParamVector::from_vec(out)
}

fn unbiased_scaled<R: Rng + ?Sized>(v: &ParamVector, c: f64, rng: &mut R) -> ParamVector {
    let s = v.l2_squared().sqrt();
    if s == 0.0 {
        return ParamVector::zeros(v.len());
    }
    let out = v
        .iter()
        .map(|&x| {
            let p_plus = (0.5 * (1.0 + x / s)).clamp(0.0, 1.0);
            let u: f64 = rng.random();
            let xi = if u < p_plus { 1.0 } else { -1.0 };
            c * s * xi
        })
        .collect();
    ParamVector::from_vec(out)
}

/// Anything that maps a corrected gradient to the vector actually transmitted.
pub trait Compress {
    fn compress(&mut self, v: &ParamVector) -> Result<ParamVector>;
}

/// A compressor spec bound to its own rounding-noise stream.
#[derive(Debug, Clone)]
pub struct Compressor {
    spec: CompressorSpec,
    rng: ChaCha8Rng,
}

impl Compressor {
    /// `stream` separates the noise of different holders (workers, server)
    /// that share one spec.
    pub fn new(spec: CompressorSpec, stream: u64) -> Self {
        let seed = match &spec {
            CompressorSpec::UnbiasedScaled { seed, .. } => *seed,
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Compressor { spec, rng }
    }

    pub fn spec(&self) -> &CompressorSpec {
        &self.spec
    }
}

impl Compress for Compressor {
    fn compress(&mut self, v: &ParamVector) -> Result<ParamVector> {
        self.spec.compress_with(v, &mut self.rng)
    }
}

/// One-shot compression. Stochastic kinds draw from a fresh stream seeded by the spec.
pub fn compress(spec: &CompressorSpec, v: &ParamVector) -> Result<ParamVector> {
    Compressor::new(spec.clone(), 0).compress(v)
}

/// Data-dependent contraction factor of the blockwise sign compressor:
/// `min_b ‖v_b‖₁² / (d_b ‖v_b‖₂²)` over nonzero blocks, or 1 if every block is zero.
pub fn phi(v: &ParamVector, partition: &BlockPartition) -> Result<f64> {
    v.check_len(partition.dim())?;
    let mut best = f64::INFINITY;
    for r in partition.ranges() {
        let n = r.len() as f64;
        let nb = norms(&v.as_slice()[r]);
        if nb.l2_squared > 0.0 {
            best = best.min(nb.l1 * nb.l1 / (n * nb.l2_squared));
        }
    }
    Ok(if best.is_finite() { best } else { 1.0 })
}

/// `1 − ‖C(v) − v‖² / ‖v‖²`.
pub fn empirical_delta(spec: &CompressorSpec, v: &ParamVector) -> Result<f64> {
    let n2 = v.l2_squared();
    if n2 == 0.0 {
        return Err(Error::UndefinedDelta);
    }
    let c = compress(spec, v)?;
    Ok(1.0 - c.sub(v).l2_squared() / n2)
}

/// Per block: population std of `|v_i|` divided by its mean; `None` for an all-zero block.
pub fn coefficient_of_variation(
    v: &ParamVector,
    partition: &BlockPartition,
) -> Result<Vec<Option<f64>>> {
    v.check_len(partition.dim())?;
    Ok(partition
        .ranges()
        .map(|r| {
            let block = &v.as_slice()[r];
            let n = block.len() as f64;
            let mean = block.iter().map(|x| x.abs()).sum::<f64>() / n;
            if mean <= 0.0 {
                return None;
            }
            let var = block.iter().map(|x| (x.abs() - mean).powi(2)).sum::<f64>() / n;
            Some(var.sqrt() / mean)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::make_partition;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec())
    }

    #[test]
    fn identity_passes_through() {
        let out = compress(&CompressorSpec::Identity, &pv(&[5.0, -7.0])).unwrap();
        assert_eq!(out.as_slice(), &[5.0, -7.0]);
    }

    #[test]
    fn scaled_sign_hand_example() {
        let out = compress(&CompressorSpec::ScaledSign, &pv(&[3.0, -1.0])).unwrap();
        assert_eq!(out.as_slice(), &[2.0, -2.0]);
    }

    #[test]
    fn singleton_blocks_are_lossless() {
        let spec = CompressorSpec::BlockwiseScaledSign {
            partition: make_partition(&[1, 1, 1]).unwrap(),
        };
        let out = compress(&spec, &pv(&[3.0, -1.0, 0.5])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -1.0, 0.5]);
    }

    #[test]
    fn zero_block_emits_zero() {
        let spec = CompressorSpec::BlockwiseScaledSign {
            partition: make_partition(&[2, 2]).unwrap(),
        };
        let out = compress(&spec, &pv(&[0.0, 0.0, 1.0, -3.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 2.0, -2.0]);
    }

    #[test]
    fn top_k_selection_and_ties() {
        let out = compress(&CompressorSpec::TopK { k: 1 }, &pv(&[3.0, -1.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0]);
        let out = compress(&CompressorSpec::TopK { k: 2 }, &pv(&[1.0, -2.0, 2.0, 2.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, -2.0, 2.0, 0.0]);
    }

    #[test]
    fn dimension_errors() {
        let spec = CompressorSpec::BlockwiseScaledSign {
            partition: make_partition(&[2, 2]).unwrap(),
        };
        assert!(matches!(
            compress(&spec, &pv(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(compress(&CompressorSpec::TopK { k: 3 }, &pv(&[1.0, 2.0])).is_err());
        assert!(compress(&CompressorSpec::TopK { k: 0 }, &pv(&[1.0, 2.0])).is_err());
        let too_big_c = CompressorSpec::UnbiasedScaled { c: 0.9, seed: 1 };
        assert!(compress(&too_big_c, &pv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn delta_bounds() {
        let spec = CompressorSpec::BlockwiseScaledSign {
            partition: make_partition(&[10; 100]).unwrap(),
        };
        assert_relative_eq!(spec.delta_lower_bound(1000), 0.1);
        assert_eq!(CompressorSpec::TopK { k: 7 }.delta_lower_bound(7), 1.0);
        assert_eq!(CompressorSpec::ScaledSign.delta_lower_bound(4), 0.25);
        assert_eq!(CompressorSpec::Identity.delta_lower_bound(4), 1.0);
        assert_eq!(
            CompressorSpec::unbiased_scaled(8, 0).delta_lower_bound(8),
            0.125
        );
    }

    #[test]
    fn phi_examples() {
        let p = make_partition(&[2]).unwrap();
        assert_relative_eq!(phi(&pv(&[3.0, -1.0]), &p).unwrap(), 0.8, epsilon = 1e-15);
        let singles = make_partition(&[1, 1, 1]).unwrap();
        assert_eq!(phi(&pv(&[3.0, -1.0, 0.2]), &singles).unwrap(), 1.0);
        assert_eq!(phi(&pv(&[0.0, 0.0]), &p).unwrap(), 1.0);
    }

    #[test]
    fn phi_geometric_blocks_is_one() {
        let (b, width, alpha) = (100usize, 3usize, 0.5f64);
        let mut v = Vec::new();
        for blk in 0..b {
            let mag = alpha.powi((b - 1 - blk) as i32);
            for j in 0..width {
                v.push(if (blk + j) % 2 == 0 { mag } else { -mag });
            }
        }
        let p = make_partition(&vec![width; b]).unwrap();
        assert_eq!(phi(&pv(&v), &p).unwrap(), 1.0);
    }

    #[test]
    fn empirical_delta_examples() {
        assert_eq!(
            empirical_delta(&CompressorSpec::Identity, &pv(&[1.0, -4.0])).unwrap(),
            1.0
        );
        assert_relative_eq!(
            empirical_delta(&CompressorSpec::ScaledSign, &pv(&[3.0, -1.0])).unwrap(),
            0.8,
            epsilon = 1e-15
        );
        assert_eq!(
            empirical_delta(&CompressorSpec::ScaledSign, &pv(&[0.0, 0.0])),
            Err(Error::UndefinedDelta)
        );
    }

    #[test]
    fn coefficient_of_variation_examples() {
        let p = make_partition(&[3, 2, 2]).unwrap();
        let cv = coefficient_of_variation(&pv(&[1.0, -1.0, 1.0, 3.0, 1.0, 0.0, 0.0]), &p).unwrap();
        assert_eq!(cv[0], Some(0.0));
        assert_relative_eq!(cv[1].unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(cv[2], None);
    }

    #[test]
    fn unbiased_rounding_is_unbiased_and_c_approximate() {
        let v = pv(&[0.8, -0.3, 0.1, 0.0, -1.2]);
        let d = v.len();
        let spec = CompressorSpec::unbiased_scaled(d, 17);
        let c = 1.0 / d as f64;
        let mut comp = Compressor::new(spec, 3);
        let draws = 100_000;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        let (mut ratio_sum, mut ratio_sq) = (0.0, 0.0);
        let n2 = v.l2_squared();
        for _ in 0..draws {
            let out = comp.compress(&v).unwrap();
            for i in 0..d {
                let u = out[i] / c;
                sum[i] += u;
                sum_sq[i] += u * u;
            }
            let r = out.sub(&v).l2_squared() / n2;
            ratio_sum += r;
            ratio_sq += r * r;
        }
        let n = draws as f64;
        for i in 0..d {
            let mean = sum[i] / n;
            let var = sum_sq[i] / n - mean * mean;
            let se = (var / n).sqrt();
            assert!(
                (mean - v[i]).abs() <= 3.0 * se + 1e-12,
                "coord {i}: {mean} vs {}",
                v[i]
            );
        }
        let mean_r = ratio_sum / n;
        let se_r = ((ratio_sq / n - mean_r * mean_r) / n).sqrt();
        assert!(mean_r <= (1.0 - c) + 3.0 * se_r, "{mean_r} > {}", 1.0 - c);
    }

    fn blockwise_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        prop::collection::vec(1usize..8, 1..8).prop_flat_map(|sizes| {
            let d: usize = sizes.iter().sum();
            (prop::collection::vec(-50.0f64..50.0, d), Just(sizes))
        })
    }

    proptest! {
        #[test]
        fn blockwise_error_matches_per_block_identity((v, sizes) in blockwise_strategy()) {
            let p = make_partition(&sizes).unwrap();
            let v = ParamVector::from_vec(v);
            let spec = CompressorSpec::BlockwiseScaledSign { partition: p.clone() };
            let err = compress(&spec, &v).unwrap().sub(&v).l2_squared();
            let mut predicted = 0.0;
            for r in p.ranges() {
                let nb = norms(&v.as_slice()[r.clone()]);
                if nb.l2_squared > 0.0 {
                    predicted += (1.0 - nb.l1 * nb.l1 / (r.len() as f64 * nb.l2_squared)) * nb.l2_squared;
                }
            }
            prop_assert!((err - predicted).abs() <= 1e-10 * v.l2_squared().max(1e-300));
            let ph = phi(&v, &p).unwrap();
            prop_assert!(ph >= 1.0 / p.max_block_size() as f64 - 1e-12);
            if v.l2_squared() > 0.0 {
                prop_assert!(empirical_delta(&spec, &v).unwrap() >= ph - 1e-12);
            }
        }

        #[test]
        fn sign_kinds_positively_homogeneous(
            v in prop::collection::vec(-10.0f64..10.0, 1..30),
            c in 0.01f64..100.0,
        ) {
            let v = ParamVector::from_vec(v);
            let d = v.len();
            for spec in [CompressorSpec::ScaledSign, CompressorSpec::BlockwiseScaledSign {
                partition: BlockPartition::uniform(d, 3).unwrap(),
            }] {
                let a = compress(&spec, &v.scale(c)).unwrap();
                let b = compress(&spec, &v).unwrap().scale(c);
                for i in 0..d {
                    prop_assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + b[i].abs()));
                }
            }
        }
    }
}
