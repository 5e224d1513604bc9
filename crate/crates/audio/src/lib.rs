//! File formats, dataset handling and experiment plumbing around `uap-core`.

pub mod cli;
pub mod dataset;
pub mod export;
pub mod manifest;
pub mod params;
pub mod perturbation;
pub mod wav;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
