use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, contiguous, disjoint index ranges covering `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    /// Builds a partition whose block offsets are the prefix sums of `sizes`.
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        if let Some(b) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("block {b} is empty")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &s in sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(BlockPartition {
            sizes: sizes.to_vec(),
            offsets,
        })
    }

    /// One block spanning the whole vector.
    pub fn single(d: usize) -> Result<Self> {
        Self::new(&[d])
    }

    /// Blocks of `block_size` with a shorter tail block if `d` is not a multiple.
    pub fn uniform(d: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || d == 0 {
            return Err(Error::InvalidPartition(
                "uniform partition needs d >= 1 and block size >= 1".into(),
            ));
        }
        let mut sizes = vec![block_size; d / block_size];
        if d % block_size != 0 {
            sizes.push(d % block_size);
        }
        Self::new(&sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets never empty")
    }

    pub fn block(&self, b: usize) -> Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    pub fn min_block_size(&self) -> usize {
        *self.sizes.iter().min().expect("at least one block")
    }

    pub fn max_block_size(&self) -> usize {
        *self.sizes.iter().max().expect("at least one block")
    }
}

/// Free-function form of [`BlockPartition::new`].
pub fn make_partition(sizes: &[usize]) -> Result<BlockPartition> {
    BlockPartition::new(sizes)
}

impl TryFrom<Vec<usize>> for BlockPartition {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        BlockPartition::new(&sizes)
    }
}

impl From<BlockPartition> for Vec<usize> {
    fn from(p: BlockPartition) -> Self {
        p.sizes
    }
}
