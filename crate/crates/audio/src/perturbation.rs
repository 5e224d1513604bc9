//! Perturbation files: a 16-bit WAV for listening plus a `.wavx` sidecar
//! holding the exact f64 samples behind a JSON header line.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uap_core::attack::{AttackConfig, Norm, Perturbation, UniversalityLevel};

use crate::sha256_hex;
use crate::wav::{save_wav, WavError};

pub const SIDECAR_VERSION: u32 = 1;
pub const SIDECAR_EXT: &str = "wavx";

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error("sidecar format version {found}, expected {SIDECAR_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("sample checksum {found} does not match header {expected}")]
    Checksum { expected: String, found: String },
    #[error("sidecar holds {found} bytes of samples, header promises {expected}")]
    Length { expected: usize, found: usize },
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHeader {
    pub format_version: u32,
    pub p: Norm,
    pub xi: f64,
    pub length: usize,
    /// Checksum of the model the perturbation was crafted on.
    pub model_checksum: String,
    pub level: Option<UniversalityLevel>,
    pub config: AttackConfig,
    /// SHA-256 of the sample bytes, hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFile {
    pub header: SidecarHeader,
    pub values: Vec<f64>,
}

impl PerturbationFile {
    pub fn new(
        perturbation: &Perturbation,
        model_checksum: String,
        level: Option<UniversalityLevel>,
        config: AttackConfig,
    ) -> Self {
        Self {
            header: SidecarHeader {
                format_version: SIDECAR_VERSION,
                p: perturbation.p,
                xi: perturbation.xi,
                length: perturbation.values.len(),
                model_checksum,
                level,
                config,
                checksum: sha256_hex(&sample_bytes(&perturbation.values)),
            },
            values: perturbation.values.clone(),
        }
    }
}

fn sample_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn write_sidecar<W: Write>(mut w: W, file: &PerturbationFile) -> Result<(), PerturbationError> {
    serde_json::to_writer(&mut w, &file.header)?;
    w.write_all(b"\n")?;
    w.write_all(&sample_bytes(&file.values))?;
    w.flush()?;
    Ok(())
}

pub fn read_sidecar<R: BufRead>(mut r: R) -> Result<PerturbationFile, PerturbationError> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let raw: serde_json::Value = serde_json::from_slice(&line)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SIDECAR_VERSION {
        return Err(PerturbationError::VersionMismatch { found });
    }
    let header: SidecarHeader = serde_json::from_value(raw)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.length * 8 {
        return Err(PerturbationError::Length {
            expected: header.length * 8,
            found: bytes.len(),
        });
    }
    let sum = sha256_hex(&bytes);
    if sum != header.checksum {
        return Err(PerturbationError::Checksum {
            expected: header.checksum,
            found: sum,
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(PerturbationFile { header, values })
}

/// Writes `<stem>.wav` and `<stem>.wavx`; returns both paths.
pub fn save_perturbation(stem: &Path, file: &PerturbationFile) -> Result<(PathBuf, PathBuf), PerturbationError> {
    let wav = stem.with_extension("wav");
    let sidecar = stem.with_extension(SIDECAR_EXT);
    save_wav(&wav, &file.values)?;
    let f = std::fs::File::create(&sidecar)?;
    write_sidecar(std::io::BufWriter::new(f), file)?;
    Ok((wav, sidecar))
}

/// Reads the sidecar; a `.wav` path is redirected to its sidecar.
pub fn load_perturbation(path: &Path) -> Result<PerturbationFile, PerturbationError> {
    let sidecar = if path.extension().is_some_and(|e| e == "wav") {
        path.with_extension(SIDECAR_EXT)
    } else {
        path.to_path_buf()
    };
    let f = std::fs::File::open(sidecar)?;
    read_sidecar(std::io::BufReader::new(f))
}
