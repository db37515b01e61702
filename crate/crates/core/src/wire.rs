//! Byte format for blockwise sign messages.
//!
//! ```text
//! header   u32 worker id | u64 iteration | u32 block count     (16 bytes, LE)
//! block b  f32 scale (LE, 4 bytes) | ceil(d_b/8) sign bytes
//! ```
//!
//! Sign bits are packed most-significant bit first, `1` for `+1` and `0` for
//! `−1`; padding bits in the last byte of a block are zero and ignored on
//! decode. Block sizes are not transmitted: both ends share the partition.
//! A stream file is a sequence of messages each preceded by a `u64` LE length.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::vector::{norms, ParamVector};

pub const HEADER_BYTES: usize = 16;
pub const SCALE_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPayload {
    pub scale: f32,
    /// `true` is `+1`.
    pub signs: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub worker: u32,
    pub iteration: u64,
    pub blocks: Vec<BlockPayload>,
}

impl CompressedMessage {
    /// Blockwise scaled-sign compression of `v`, with the scale rounded to `f32`.
    pub fn from_vector(
        v: &ParamVector,
        partition: &BlockPartition,
        worker: u32,
        iteration: u64,
    ) -> Result<Self> {
        v.check_len(partition.dim())?;
        let blocks = partition
            .ranges()
            .map(|r| {
                let block = &v.as_slice()[r.clone()];
                let scale = (norms(block).l1 / r.len() as f64) as f32;
                BlockPayload {
                    scale,
                    signs: block.iter().map(|&x| x >= 0.0).collect(),
                }
            })
            .collect();
        let msg = CompressedMessage {
            worker,
            iteration,
            blocks,
        };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<()> {
        for (b, blk) in self.blocks.iter().enumerate() {
            if !blk.scale.is_finite() || blk.scale < 0.0 {
                return Err(Error::InvalidMessage(format!(
                    "block {b} has scale {}",
                    blk.scale
                )));
            }
        }
        Ok(())
    }

    /// Bits on the wire excluding the 128-bit header: `Σ_b (32 + 8⌈d_b/8⌉)`.
    pub fn payload_bits(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| 8 * (SCALE_BYTES + b.signs.len().div_ceil(8)) as u64)
            .sum()
    }
}

/// Exact encoded length in bytes for a partition, header included.
pub fn encoded_len(partition: &BlockPartition) -> usize {
    HEADER_BYTES
        + partition
            .sizes()
            .iter()
            .map(|&s| SCALE_BYTES + s.div_ceil(8))
            .sum::<usize>()
}

pub fn encode(msg: &CompressedMessage) -> Result<Vec<u8>> {
    if msg.blocks.is_empty() {
        return Err(Error::InvalidMessage("message has no blocks".into()));
    }
    if let Some(b) = msg.blocks.iter().position(|b| b.signs.is_empty()) {
        return Err(Error::InvalidMessage(format!("block {b} has no signs")));
    }
    msg.validate()?;
    let block_count = u32::try_from(msg.blocks.len())
        .map_err(|_| Error::InvalidMessage("too many blocks".into()))?;

    let body: usize = msg
        .blocks
        .iter()
        .map(|b| SCALE_BYTES + b.signs.len().div_ceil(8))
        .sum();
    let mut out = Vec::with_capacity(HEADER_BYTES + body);
    out.extend_from_slice(&msg.worker.to_le_bytes());
    out.extend_from_slice(&msg.iteration.to_le_bytes());
    out.extend_from_slice(&block_count.to_le_bytes());
    for blk in &msg.blocks {
        out.extend_from_slice(&blk.scale.to_le_bytes());
        for chunk in blk.signs.chunks(8) {
            let mut byte = 0u8;
            for (j, &s) in chunk.iter().enumerate() {
                if s {
                    byte |= 0x80 >> j;
                }
            }
            out.push(byte);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], partition: &BlockPartition) -> Result<CompressedMessage> {
    let expected = encoded_len(partition);
    if bytes.len() != expected {
        return Err(Error::MalformedMessage(format!(
            "expected {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let worker = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let iteration = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let block_count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if block_count != partition.num_blocks() {
        return Err(Error::MalformedMessage(format!(
            "header declares {block_count} blocks, partition has {}",
            partition.num_blocks()
        )));
    }
    let mut pos = HEADER_BYTES;
    let mut blocks = Vec::with_capacity(block_count);
    for &size in partition.sizes() {
        let scale = f32::from_le_bytes(bytes[pos..pos + SCALE_BYTES].try_into().unwrap());
        pos += SCALE_BYTES;
        let n_bytes = size.div_ceil(8);
        let packed = &bytes[pos..pos + n_bytes];
        pos += n_bytes;
        let signs = (0..size)
            .map(|j| packed[j / 8] & (0x80 >> (j % 8)) != 0)
            .collect();
        blocks.push(BlockPayload { scale, signs });
    }
    let msg = CompressedMessage {
        worker,
        iteration,
        blocks,
    };
    msg.validate()?;
    Ok(msg)
}

/// Expands a message back to a dense vector: `scale·(±1)` per block.
pub fn reconstruct(msg: &CompressedMessage, partition: &BlockPartition) -> Result<ParamVector> {
    if msg.blocks.len() != partition.num_blocks() {
        return Err(Error::InvalidMessage(format!(
            "{} blocks for a {}-block partition",
            msg.blocks.len(),
            partition.num_blocks()
        )));
    }
    let mut out = Vec::with_capacity(partition.dim());
    for (blk, &size) in msg.blocks.iter().zip(partition.sizes()) {
        if blk.signs.len() != size {
            return Err(Error::InvalidMessage(format!(
                "block has {} signs, expected {size}",
                blk.signs.len()
            )));
        }
        let scale = blk.scale as f64;
        out.extend(blk.signs.iter().map(|&s| if s { scale } else { -scale }));
    }
    Ok(ParamVector::from_vec(out))
}

/// Writes messages with an 8-byte little-endian length prefix each.
pub fn write_stream<W: Write>(mut w: W, messages: &[CompressedMessage]) -> Result<()> {
    for m in messages {
        let bytes = encode(m)?;
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_stream<R: Read>(
    mut r: R,
    partition: &BlockPartition,
) -> Result<Vec<CompressedMessage>> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < data.len() {
        if data.len() - pos < 8 {
            return Err(Error::MalformedMessage("truncated length prefix".into()));
        }
        let len = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        if data.len() - pos < len {
            return Err(Error::MalformedMessage("truncated message".into()));
        }
        out.push(decode(&data[pos..pos + len], partition)?);
        pos += len;
    }
    Ok(out)
}
