//! Dataset directories in the Speech Commands layout: one subdirectory per
//! class label holding WAV clips, plus an `index.json` that fixes the
//! train/valid split.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uap_core::synth::{synth_dataset, SynthConfig, SynthError};
use uap_core::{ClassLabel, Waveform};

use crate::wav::{load_wav, save_wav, WavError};

pub const INDEX_FILE: &str = "index.json";
pub const INDEX_VERSION: u32 = 1;
/// Speech Commands lists its validation clips in this file.
pub const VALIDATION_LIST: &str = "validation_list.txt";

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("no class subdirectories (named after labels) under {0}")]
    NoClassDirs(PathBuf),
    #[error("no index at {0}")]
    MissingIndex(PathBuf),
    #[error("index format version {found}, expected {INDEX_VERSION}")]
    IndexVersion { found: u32 },
    #[error("bad index: {0}")]
    BadIndex(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: WavError },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format_version: u32,
    pub labels: Vec<ClassLabel>,
    pub seed: u64,
    pub train: Vec<IndexEntry>,
    pub valid: Vec<IndexEntry>,
    /// Files that could not be decoded; listed, not fatal.
    pub skipped: Vec<Skipped>,
}

impl DatasetIndex {
    pub fn entries(&self, split: Split) -> &[IndexEntry] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
        }
    }
}

fn rel(path: &Path, root: &Path) -> String {
    let r = path.strip_prefix(root).unwrap_or(path);
    r.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn write_index(root: &Path, index: &DatasetIndex) -> Result<(), LayoutError> {
    let mut text = serde_json::to_string_pretty(index)?;
    text.push('\n');
    fs::write(root.join(INDEX_FILE), text)?;
    Ok(())
}

pub fn read_index(root: &Path) -> Result<DatasetIndex, LayoutError> {
    let path = root.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LayoutError::MissingIndex(path.clone()),
        _ => LayoutError::Io(e),
    })?;
    let index: DatasetIndex = serde_json::from_str(&text)?;
    if index.format_version != INDEX_VERSION {
        return Err(LayoutError::IndexVersion {
            found: index.format_version,
        });
    }
    Ok(index)
}

/// Writes a synthetic dataset as `root/{train,valid}/<label>/<label>_NNNN.wav`
/// plus the index.
pub fn write_synth(root: &Path, cfg: &SynthConfig) -> Result<DatasetIndex, LayoutError> {
    let data = synth_dataset(cfg)?;
    let mut index = DatasetIndex {
        format_version: INDEX_VERSION,
        labels: data.labels.clone(),
        seed: cfg.seed,
        train: Vec::new(),
        valid: Vec::new(),
        skipped: Vec::new(),
    };
    for (split, clips) in [(Split::Train, &data.train), (Split::Valid, &data.valid)] {
        let mut counters: BTreeMap<ClassLabel, usize> = BTreeMap::new();
        for clip in clips {
            let label = clip.label().expect("synthetic clips are labeled");
            let n = counters.entry(label).or_default();
            let dir = root.join(split.name()).join(label.name());
            if *n == 0 {
                fs::create_dir_all(&dir)?;
            }
            let path = dir.join(format!("{}_{:04}.wav", label.name(), n));
            *n += 1;
            save_wav(&path, clip.samples()).map_err(|source| LayoutError::Wav {
                path: path.clone(),
                source,
            })?;
            let entry = IndexEntry {
                path: rel(&path, root),
                label,
            };
            match split {
                Split::Train => index.train.push(entry),
                Split::Valid => index.valid.push(entry),
            }
        }
    }
    write_index(root, &index)?;
    Ok(index)
}

/// Class subdirectories of `dir` whose names parse as labels, in label order.
fn class_dirs(dir: &Path) -> Result<Vec<(ClassLabel, PathBuf)>, LayoutError> {
    if !dir.is_dir() {
        return Err(LayoutError::NotADirectory(dir.to_path_buf()));
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Ok(label) = entry.file_name().to_string_lossy().parse::<ClassLabel>() {
            found.push((label, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(LayoutError::NoClassDirs(dir.to_path_buf()));
    }
    found.sort();
    Ok(found)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, LayoutError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Stable pseudo-random split: a clip is held out when the hash of its
/// relative path and the seed falls under `valid_fraction`.
fn hashed_to_valid(path: &str, seed: u64, valid_fraction: f64) -> bool {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(path.as_bytes())
        .finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) as f64 / u64::MAX as f64) < valid_fraction
}

/// Validates a Speech Commands style directory and writes its index.
///
/// Clips listed in `validation_list.txt` go to the valid split when that
/// file exists; otherwise a seeded hash of the path decides. Files that fail
/// to decode are recorded in `skipped`.
pub fn ingest(root: &Path, valid_fraction: f64, seed: u64) -> Result<DatasetIndex, LayoutError> {
    let dirs = class_dirs(root)?;
    let listed: Option<Vec<String>> = fs::read_to_string(root.join(VALIDATION_LIST))
        .ok()
        .map(|t| t.lines().map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect());
    let mut index = DatasetIndex {
        format_version: INDEX_VERSION,
        labels: Vec::new(),
        seed,
        train: Vec::new(),
        valid: Vec::new(),
        skipped: Vec::new(),
    };
    for (label, dir) in dirs {
        let mut any = false;
        for path in wav_files(&dir)? {
            let r = rel(&path, root);
            if let Err(e) = load_wav(&path, Some(label)) {
                index.skipped.push(Skipped {
                    path: r,
                    reason: e.to_string(),
                });
                continue;
            }
            any = true;
            let to_valid = match &listed {
                Some(list) => list.contains(&r),
                None => hashed_to_valid(&r, seed, valid_fraction),
            };
            let entry = IndexEntry { path: r, label };
            if to_valid {
                index.valid.push(entry);
            } else {
                index.train.push(entry);
            }
        }
        if any && !index.labels.contains(&label) {
            index.labels.push(label);
        }
    }
    write_index(root, &index)?;
    Ok(index)
}

fn load_entries(root: &Path, entries: &[IndexEntry]) -> Result<Vec<Waveform>, LayoutError> {
    let loaded = uap_core::par::map(entries, |e| {
        let path = root.join(&e.path);
        load_wav(&path, Some(e.label)).map_err(|source| LayoutError::Wav { path, source })
    });
    loaded.into_iter().collect()
}

/// Clips of one split of an indexed dataset.
pub fn load_split(root: &Path, split: Split) -> Result<(DatasetIndex, Vec<Waveform>), LayoutError> {
    let index = read_index(root)?;
    let clips = load_entries(root, index.entries(split))?;
    Ok((index, clips))
}

/// All clips of an unindexed class-layout directory, in label then file
/// name order.
pub fn load_class_dir(dir: &Path) -> Result<Vec<Waveform>, LayoutError> {
    let mut entries = Vec::new();
    for (label, sub) in class_dirs(dir)? {
        for path in wav_files(&sub)? {
            entries.push(IndexEntry {
                path: rel(&path, dir),
                label,
            });
        }
    }
    load_entries(dir, &entries)
}

/// Loads `split` when `path` holds an index, otherwise treats `path` as a
/// plain class-layout directory.
pub fn load_clips(path: &Path, split: Split) -> Result<Vec<Waveform>, LayoutError> {
    if path.join(INDEX_FILE).is_file() {
        Ok(load_split(path, split)?.1)
    } else {
        load_class_dir(path)
    }
}
