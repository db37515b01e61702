use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Row-major feature/label table.
///
/// Binary layout: `u64 n | u64 dim | u64 label_width` (little-endian), then
/// `n` rows of `dim` features followed by `label_width` labels, each an
/// `f64` in little-endian order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub dim: usize,
    pub label_width: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(
        dim: usize,
        label_width: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || label_width == 0 {
            return Err(Error::Dataset("dim and label width must be >= 1".into()));
        }
        let n = features.len() / dim;
        if features.len() != n * dim || labels.len() != n * label_width || n == 0 {
            return Err(Error::Dataset(format!(
                "{} features and {} labels do not form rows of {dim}+{label_width}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            n,
            dim,
            label_width,
            features,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_width..(i + 1) * self.label_width]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for h in [self.n, self.dim, self.label_width] {
            w.write_all(&(h as u64).to_le_bytes())?;
        }
        for i in 0..self.n {
            for v in self.row(i).iter().chain(self.label(i)) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 24 {
            return Err(Error::Dataset("truncated header".into()));
        }
        let word =
            |k: usize| u64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap()) as usize;
        let (n, dim, label_width) = (word(0), word(1), word(2));
        let row = dim + label_width;
        let expected = n
            .checked_mul(row)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(24))
            .ok_or_else(|| Error::Dataset("header sizes overflow".into()))?;
        if buf.len() != expected {
            return Err(Error::Dataset(format!(
                "expected {expected} bytes, found {}",
                buf.len()
            )));
        }
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n * label_width);
        for (j, chunk) in buf[24..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if j % row < dim {
                features.push(v);
            } else {
                labels.push(v);
            }
        }
        Dataset::new(dim, label_width, features, labels)
    }
}
