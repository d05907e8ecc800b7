//! Binary checkpoint format.
//!
//! ```text
//! b"TSTCKPT1"
//! u64 LE   header length in bytes
//! [u8]     UTF-8 JSON of the ModelConfig
//! f64 LE   every parameter value, tensors in canonical order, each row-major
//! ```

use std::path::Path;

use super::params::TwoStreamModelParams;
use super::{ModelConfig, NetworkError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TSTCKPT1";

pub fn write_checkpoint(params: &TwoStreamModelParams) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&params.config).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<TwoStreamModelParams> {
    let bad = |m: &str| NetworkError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing TSTCKPT1 magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header = bytes
        .get(16..16usize.saturating_add(header_len))
        .ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
    let config: ModelConfig =
        serde_json::from_str(header).map_err(|e| NetworkError::Checkpoint(format!("header: {e}")))?;
    let mut params = TwoStreamModelParams::zeros(&config)?;
    let body = &bytes[16 + header_len..];
    if body.len() != 8 * params.parameter_count() {
        return Err(NetworkError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * params.parameter_count(),
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    if params.tensors().iter().any(|t| !t.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &TwoStreamModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(params)?).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TwoStreamModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, FusionMode};

    fn params() -> TwoStreamModelParams {
        init_params(&ModelConfig {
            joints: 4,
            t_in: 5,
            t_out: 3,
            hidden: 6,
            depth: 6,
            fusion: FusionMode::NaiveConcat,
            seed: 9,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let p = params();
        let bytes = write_checkpoint(&p).unwrap();
        assert_eq!(&bytes[..8], b"TSTCKPT1");
        assert_eq!(read_checkpoint(&bytes).unwrap(), p);
    }

    #[test]
    fn layout_starts_with_first_p_kernel() {
        let p = params();
        let bytes = write_checkpoint(&p).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let first = f64::from_le_bytes(bytes[16 + header_len..24 + header_len].try_into().unwrap());
        assert_eq!(first, p.p_tst.layers[0].kernel.data()[0]);
        assert_eq!(bytes.len(), 16 + header_len + 8 * p.parameter_count());
    }

    #[test]
    fn corrupt_inputs_fail() {
        let bytes = write_checkpoint(&params()).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 8]).is_err());
        assert!(read_checkpoint(b"TSTCKPT0").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
        let mut bad_header = bytes;
        bad_header[16] = b'#';
        assert!(read_checkpoint(&bad_header).is_err());
    }
}
