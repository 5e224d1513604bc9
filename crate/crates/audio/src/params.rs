//! Model parameter files: one JSON header line, then the weight arrays as
//! raw little-endian f64 in [`ARRAY_NAMES`] order.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uap_core::dsp::FrontendConfig;
use uap_core::model::{Architecture, ModelError, ModelParams, ARRAY_NAMES};
use uap_core::ClassLabel;

use crate::sha256_hex;

pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("params format version {found}, expected {PARAMS_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("weight checksum {found} does not match header {expected}")]
    Checksum { expected: String, found: String },
    #[error("weights truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} trailing bytes after the weights")]
    TrailingBytes { extra: usize },
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub frontend: FrontendConfig,
    pub label_set: Vec<ClassLabel>,
    pub seed: u64,
    /// Array names and lengths, in storage order.
    pub arrays: Vec<(String, usize)>,
    /// SHA-256 of the weight bytes, hex.
    pub checksum: String,
}

pub fn weight_bytes(params: &ModelParams) -> Vec<u8> {
    params
        .arrays()
        .iter()
        .flat_map(|a| a.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

/// Checksum identifying a trained model.
pub fn params_checksum(params: &ModelParams) -> String {
    sha256_hex(&weight_bytes(params))
}

pub fn write_params<W: Write>(mut w: W, params: &ModelParams) -> Result<(), ParamsError> {
    params.validate()?;
    let bytes = weight_bytes(params);
    let header = ParamsHeader {
        format_version: PARAMS_VERSION,
        architecture: params.architecture,
        frontend: params.frontend.clone(),
        label_set: params.labels.clone(),
        seed: params.seed,
        arrays: ARRAY_NAMES
            .iter()
            .zip(params.arrays())
            .map(|(n, a)| ((*n).to_owned(), a.len()))
            .collect(),
        checksum: sha256_hex(&bytes),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_params<R: BufRead>(mut r: R) -> Result<ModelParams, ParamsError> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: serde_json::Value = serde_json::from_slice(&line)?;
    let found = header.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != PARAMS_VERSION {
        return Err(ParamsError::VersionMismatch { found });
    }
    let header: ParamsHeader = serde_json::from_value(header)?;
    let lengths = ModelParams::expected_lengths(&header.architecture, &header.frontend)?;
    let expected = lengths.iter().sum::<usize>() * 8;
    let mut bytes = Vec::with_capacity(expected);
    r.read_to_end(&mut bytes)?;
    if bytes.len() < expected {
        return Err(ParamsError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(ParamsError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let sum = sha256_hex(&bytes);
    if sum != header.checksum {
        return Err(ParamsError::Checksum {
            expected: header.checksum,
            found: sum,
        });
    }
    let mut params = ModelParams::init(header.architecture, header.frontend, header.label_set, header.seed)?;
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for (arr, len) in params.arrays_mut().into_iter().zip(lengths) {
        arr.clear();
        arr.extend(values.by_ref().take(len));
    }
    params.validate()?;
    Ok(params)
}

pub fn save_params(path: impl AsRef<Path>, params: &ModelParams) -> Result<(), ParamsError> {
    let file = std::fs::File::create(path)?;
    write_params(std::io::BufWriter::new(file), params)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams, ParamsError> {
    let file = std::fs::File::open(path)?;
    read_params(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        ModelParams::init(
            Architecture::with_channels(2, 2),
            FrontendConfig::model_a(),
            vec![ClassLabel::Yes, ClassLabel::No],
            5,
        )
        .unwrap()
    }

    fn encoded() -> Vec<u8> {
        let mut buf = Vec::new();
        write_params(&mut buf, &small()).unwrap();
        buf
    }

    #[test]
    fn round_trip() {
        assert_eq!(read_params(&encoded()[..]).unwrap(), small());
    }

    #[test]
    fn corrupted_weight_fails_checksum() {
        let mut buf = encoded();
        let last = buf.len() - 1;
        buf[last] ^= 1;
        assert!(matches!(read_params(&buf[..]), Err(ParamsError::Checksum { .. })));
    }

    #[test]
    fn truncated_and_trailing() {
        let buf = encoded();
        assert!(matches!(read_params(&buf[..buf.len() - 8]), Err(ParamsError::Truncated { .. })));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_params(&long[..]), Err(ParamsError::TrailingBytes { extra: 1 })));
    }

    #[test]
    fn version_mismatch() {
        let buf = encoded();
        let text = String::from_utf8_lossy(&buf);
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            read_params(bumped.as_bytes()),
            Err(ParamsError::VersionMismatch { found: 2 })
        ));
    }
}
