//! Versioned checkpoint container (`.ipbn`).
//!
//! Layout: magic `IPBN`, a little-endian `u32` format version, a length-
//! prefixed UTF-8 JSON header describing shapes and provenance, then the
//! parameter tensors as length-prefixed blocks of little-endian `f64` in
//! declared order (each body layer's weight then bias, then the readout's
//! weight and bias when present). Round trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DenseLayer, MlpParams, NetworkArch, ReadoutLayer};

pub const MAGIC: &[u8; 4] = b"IPBN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutMeta {
    pub n_readouts: usize,
    pub solution_dim: usize,
    /// Which readout the file carries: `training` or `validation`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: NetworkArch,
    pub readout: Option<ReadoutMeta>,
    pub seed: u64,
    pub epoch: usize,
    pub best_loss: f64,
    /// SHA-256 of the recorded loss history, hex-encoded.
    pub loss_digest: String,
    pub created_by: String,
}

fn push_block(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>, len: usize) {
    buf.extend_from_slice(&(len as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a checkpoint into bytes.
pub fn encode(r: &MlpParams, l: Option<&ReadoutLayer>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(meta)
        .map_err(|e| Error::Corrupt(format!("header serialization failed: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for layer in &r.layers {
        push_block(&mut buf, layer.weight.iter().copied(), layer.weight.len());
        push_block(&mut buf, layer.bias.iter().copied(), layer.bias.len());
    }
    if let Some(readout) = l {
        push_block(
            &mut buf,
            readout.weight.iter().copied(),
            readout.weight.len(),
        );
        push_block(&mut buf, readout.bias.iter().copied(), readout.bias.len());
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let len = self.u64_le()? as usize;
        if len != expected {
            return Err(Error::shape(format!(
                "{what}: block holds {len} values, header shapes demand {expected}"
            )));
        }
        let raw = self.take(len * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decode a checkpoint from bytes.
pub fn decode(bytes: &[u8]) -> Result<(MlpParams, Option<ReadoutLayer>, CheckpointMeta)> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Corrupt("bad magic, not an .ipbn file".into()));
    }
    let version = rd.u32_le()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = rd.u64_le()? as usize;
    let header = rd.take(header_len)?;
    let meta: CheckpointMeta = serde_json::from_slice(header)
        .map_err(|e| Error::Corrupt(format!("invalid header JSON: {e}")))?;
    meta.arch.validate().map_err(|_| {
        Error::shape("header arch fails validation".to_string())
    })?;

    let dims = meta.arch.layer_dims();
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weight = rd.block(fan_out * fan_in, "body weight")?;
        let bias = rd.block(fan_out, "body bias")?;
        layers.push(DenseLayer {
            weight: ndarray::Array2::from_shape_vec((fan_out, fan_in), weight)
                .map_err(|e| Error::shape(e.to_string()))?,
            bias: ndarray::Array1::from_vec(bias),
        });
    }
    let readout = match &meta.readout {
        Some(rm) => {
            let cols = rm.n_readouts * rm.solution_dim;
            let weight = rd.block(meta.arch.n_basis * cols, "readout weight")?;
            let bias = rd.block(cols, "readout bias")?;
            Some(ReadoutLayer {
                weight: ndarray::Array2::from_shape_vec((meta.arch.n_basis, cols), weight)
                    .map_err(|e| Error::shape(e.to_string()))?,
                bias: ndarray::Array1::from_vec(bias),
                n_readouts: rm.n_readouts,
                solution_dim: rm.solution_dim,
            })
        }
        None => None,
    };
    if rd.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after parameter blocks",
            bytes.len() - rd.pos
        )));
    }
    let params = MlpParams {
        arch: meta.arch.clone(),
        layers,
    };
    Ok((params, readout, meta))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    r: &MlpParams,
    l: Option<&ReadoutLayer>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(r, l, meta)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(path.display(), e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(MlpParams, Option<ReadoutLayer>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display(), e))?;
    decode(&bytes)
}

/// Hex SHA-256 digest of the concatenated loss history, recorded in the
/// header so a reloaded checkpoint can be traced to its training run.
pub fn loss_history_digest(losses: &[f64]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for v in losses {
        hasher.update(v.to_le_bytes());
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_network;

    fn sample() -> (MlpParams, ReadoutLayer, CheckpointMeta) {
        let arch = NetworkArch::new(2, vec![5, 4], 3).unwrap();
        let r = init_network(&arch, 77).unwrap();
        let l = ReadoutLayer::glorot(3, 2, 1, 78);
        let meta = CheckpointMeta {
            arch,
            readout: Some(ReadoutMeta {
                n_readouts: 2,
                solution_dim: 1,
                kind: "training".into(),
            }),
            seed: 77,
            epoch: 123,
            best_loss: 4.5e-3,
            loss_digest: loss_history_digest(&[1.0, 0.5]),
            created_by: "test".into(),
        };
        (r, l, meta)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (r, l, meta) = sample();
        let bytes = encode(&r, Some(&l), &meta).unwrap();
        let (r2, l2, meta2) = decode(&bytes).unwrap();
        assert_eq!(r, r2);
        assert_eq!(Some(l), l2);
        assert_eq!(meta, meta2);
        // encoding the decoded state reproduces the same bytes
        assert_eq!(bytes, encode(&r2, l2.as_ref(), &meta2).unwrap());
    }

    #[test]
    fn tampered_header_arch_is_rejected_as_shape_mismatch() {
        let (r, l, mut meta) = sample();
        let good = encode(&r, Some(&l), &meta).unwrap();
        meta.arch.hidden_widths = vec![9, 9];
        let bad_header = encode(&r, Some(&l), &meta).unwrap();
        // splice the tampered header onto the original blocks
        let header_len = |b: &[u8]| {
            16 + u64::from_le_bytes(b[8..16].try_into().unwrap()) as usize
        };
        let mut tampered = bad_header[..header_len(&bad_header)].to_vec();
        tampered.extend_from_slice(&good[header_len(&good)..]);
        match decode(&tampered) {
            Err(Error::Shape(_)) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn future_format_version_is_an_explicit_error() {
        let (r, l, meta) = sample();
        let mut bytes = encode(&r, Some(&l), &meta).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        match decode(&bytes) {
            Err(Error::Version { found: 2, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_bad_magic_are_corrupt_errors() {
        let (r, l, meta) = sample();
        let bytes = encode(&r, Some(&l), &meta).unwrap();
        match decode(&bytes[..bytes.len() - 3]) {
            Err(Error::Corrupt(_)) => {}
            other => panic!("expected corrupt error, got {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn body_only_checkpoint_round_trips() {
        let (r, _, mut meta) = sample();
        meta.readout = None;
        let bytes = encode(&r, None, &meta).unwrap();
        let (r2, l2, _) = decode(&bytes).unwrap();
        assert_eq!(r, r2);
        assert!(l2.is_none());
    }
}
