//! Bit-packed mixed-precision codebook and its on-disk format.
//!
//! Per node and layer the codebook stores one 32-bit rescaling factor and
//! `d` code bits (bit = 1 means +1; bit `j` of byte `k` is dimension
//! `8k + j`), so a node costs exactly `(L + 1) * (32 + d)` bits of payload.
//!
//! File layout, all little-endian:
//!
//! ```text
//! magic  "SGBH"                      4 bytes
//! version u16 = 1                    2 bytes
//! num_nodes, num_sources, L, d: u32  16 bytes
//! per node, per layer 0..=L:
//!     alpha f32, then ceil(d/8) code bytes
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FinalEmbedding;

pub const CODEBOOK_MAGIC: [u8; 4] = *b"SGBH";
pub const CODEBOOK_VERSION: u16 = 1;

/// Packed final embeddings of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedCodebook {
    num_nodes: usize,
    num_sources: u32,
    layers: usize,
    dim: usize,
    /// `node * (L + 1) + l`
    alphas: Vec<f32>,
    /// segment-major code bytes, `bytes_per_segment` each
    codes: Vec<u8>,
}

/// Exact storage formula: `(|U| + |V|) * (L + 1) * (d + 32)` bits.
pub fn storage_bits(num_sources: u64, num_destinations: u64, layers: u64, dim: u64) -> u64 {
    (num_sources + num_destinations) * (layers + 1) * (dim + 32)
}

/// Packs a +-1 vector into bytes, LSB-first within each byte. Entries are
/// +1 when the value is non-negative. Padding bits stay zero.
pub fn pack_signs(values: &[f64]) -> Vec<u8> {
    let mut bytes = vec![0u8; values.len().div_ceil(8)];
    for (i, &v) in values.iter().enumerate() {
        if v >= 0.0 {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    bytes
}

/// Expands packed code bytes back to +-1 values.
pub fn unpack_signs(bytes: &[u8], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            if bytes[i / 8] >> (i % 8) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

impl PackedCodebook {
    /// Packs a hard-sign final embedding.
    pub fn from_final(fin: &FinalEmbedding) -> Self {
        let segs = fin.num_segments();
        let n = fin.num_nodes();
        let bytes_per_segment = fin.dim().div_ceil(8);
        let mut alphas = Vec::with_capacity(n * segs);
        let mut codes = vec![0u8; n * segs * bytes_per_segment];
        for node in 0..n {
            for l in 0..segs {
                alphas.push(fin.alpha(node, l) as f32);
                let seg = node * segs + l;
                let packed = pack_signs(fin.code_segment(node, l));
                codes[seg * bytes_per_segment..seg * bytes_per_segment + packed.len()]
                    .copy_from_slice(&packed);
            }
        }
        Self {
            num_nodes: n,
            num_sources: fin.num_sources(),
            layers: fin.layers(),
            dim: fin.dim(),
            alphas,
            codes,
        }
    }

    pub fn from_parts(
        num_nodes: usize,
        num_sources: u32,
        layers: usize,
        dim: usize,
        alphas: Vec<f32>,
        codes: Vec<u8>,
    ) -> Self {
        let segs = layers + 1;
        assert_eq!(alphas.len(), num_nodes * segs);
        assert_eq!(codes.len(), num_nodes * segs * dim.div_ceil(8));
        Self {
            num_nodes,
            num_sources,
            layers,
            dim,
            alphas,
            codes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_sources(&self) -> u32 {
        self.num_sources
    }

    pub fn num_destinations(&self) -> u32 {
        self.num_nodes as u32 - self.num_sources
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_segments(&self) -> usize {
        self.layers + 1
    }

    pub fn bytes_per_segment(&self) -> usize {
        self.dim.div_ceil(8)
    }

    pub fn alpha(&self, node: usize, l: usize) -> f32 {
        self.alphas[node * (self.layers + 1) + l]
    }

    pub fn code_bytes(&self, node: usize, l: usize) -> &[u8] {
        let bps = self.bytes_per_segment();
        let seg = node * (self.layers + 1) + l;
        &self.codes[seg * bps..(seg + 1) * bps]
    }

    /// Full float embedding of one node, `(L + 1) * d` entries.
    pub fn unpack_node(&self, node: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.layers + 1) * self.dim);
        for l in 0..=self.layers {
            let alpha = self.alpha(node, l) as f64;
            out.extend(
                unpack_signs(self.code_bytes(node, l), self.dim)
                    .into_iter()
                    .map(|b| alpha * b),
            );
        }
        out
    }

    /// Per-layer +-1 codes of every node, for code-level diagnostics.
    pub fn layer_codes(&self, l: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_nodes * self.dim);
        for node in 0..self.num_nodes {
            out.extend(unpack_signs(self.code_bytes(node, l), self.dim));
        }
        out
    }

    pub fn payload_bytes(&self) -> u64 {
        (self.num_nodes as u64) * (self.layers as u64 + 1) * (4 + self.bytes_per_segment() as u64)
    }
}

pub fn save_codebook(cb: &PackedCodebook, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(22 + cb.payload_bytes() as usize);
    buf.extend_from_slice(&CODEBOOK_MAGIC);
    buf.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(cb.num_nodes as u32).to_le_bytes());
    buf.extend_from_slice(&cb.num_sources.to_le_bytes());
    buf.extend_from_slice(&(cb.layers as u32).to_le_bytes());
    buf.extend_from_slice(&(cb.dim as u32).to_le_bytes());
    let bps = cb.bytes_per_segment();
    for node in 0..cb.num_nodes {
        for l in 0..=cb.layers {
            buf.extend_from_slice(&cb.alpha(node, l).to_le_bytes());
            let seg = node * (cb.layers + 1) + l;
            buf.extend_from_slice(&cb.codes[seg * bps..(seg + 1) * bps]);
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<PackedCodebook> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;

    if buf.len() < 4 || buf[0..4] != CODEBOOK_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if buf.len() < 6 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 22,
            found: buf.len() as u64,
        });
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != CODEBOOK_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            found: version,
            expected: CODEBOOK_VERSION,
        });
    }
    if buf.len() < 22 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 22,
            found: buf.len() as u64,
        });
    }
    let read_u32 = |off: usize| u32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]]);
    let num_nodes = read_u32(6) as usize;
    let num_sources = read_u32(10);
    let layers = read_u32(14) as usize;
    let dim = read_u32(18) as usize;

    let segs = layers + 1;
    let bps = dim.div_ceil(8);
    let expected_payload = num_nodes as u64 * segs as u64 * (4 + bps as u64);
    let found_payload = buf.len() as u64 - 22;
    if found_payload != expected_payload {
        return Err(Error::Truncated {
            path: path.into(),
            expected: expected_payload,
            found: found_payload,
        });
    }

    let mut alphas = Vec::with_capacity(num_nodes * segs);
    let mut codes = vec![0u8; num_nodes * segs * bps];
    let mut off = 22usize;
    for seg in 0..num_nodes * segs {
        alphas.push(f32::from_le_bytes([
            buf[off],
            buf[off + 1],
            buf[off + 2],
            buf[off + 3],
        ]));
        off += 4;
        codes[seg * bps..(seg + 1) * bps].copy_from_slice(&buf[off..off + bps]);
        off += bps;
    }
    Ok(PackedCodebook {
        num_nodes,
        num_sources,
        layers,
        dim,
        alphas,
        codes,
    })
}
