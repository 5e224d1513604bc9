use std::fs;
use std::path::Path;

use uap_audio::dataset::{ingest, load_clips, load_split, read_index, write_synth, LayoutError, Split};
use uap_audio::wav::save_wav;
use uap_core::synth::SynthConfig;
use uap_core::ClassLabel;

fn count_wavs(dir: &Path) -> usize {
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            n += count_wavs(&path);
        } else if path.extension().is_some_and(|e| e == "wav") {
            n += 1;
        }
    }
    n
}

#[test]
fn synth_writes_every_clip_and_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        classes: 4,
        per_class: 200,
        seed: 1,
        valid_fraction: 0.2,
    };
    let index = write_synth(dir.path(), &cfg).unwrap();
    assert_eq!(count_wavs(dir.path()), 800);
    assert_eq!((index.train.len(), index.valid.len()), (640, 160));
    assert_eq!(read_index(dir.path()).unwrap(), index);
    for label in &index.labels {
        assert!(dir.path().join("train").join(label.name()).is_dir());
    }
    let (_, valid) = load_split(dir.path(), Split::Valid).unwrap();
    assert_eq!(valid.len(), 160);
    assert!(valid.iter().all(|c| c.label().is_some()));
}

#[test]
fn ingest_requires_class_subfolders() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("not_a_label")).unwrap();
    save_wav(dir.path().join("loose.wav"), &[0.0; 100]).unwrap();
    assert!(matches!(ingest(dir.path(), 0.1, 0), Err(LayoutError::NoClassDirs(_))));
    assert!(matches!(
        ingest(&dir.path().join("missing"), 0.1, 0),
        Err(LayoutError::NotADirectory(_))
    ));
}

#[test]
fn ingest_honours_validation_list_and_skips_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    for label in ["yes", "no"] {
        fs::create_dir(dir.path().join(label)).unwrap();
        for i in 0..3 {
            save_wav(dir.path().join(label).join(format!("{i}.wav")), &[0.01 * i as f64; 800]).unwrap();
        }
    }
    fs::write(dir.path().join("no/broken.wav"), b"not a wav").unwrap();
    fs::write(dir.path().join("validation_list.txt"), "yes/1.wav\nno/2.wav\n").unwrap();

    let index = ingest(dir.path(), 0.5, 0).unwrap();
    assert_eq!(index.labels, vec![ClassLabel::Yes, ClassLabel::No]);
    let valid: Vec<&str> = index.valid.iter().map(|e| e.path.as_str()).collect();
    assert_eq!(valid, ["yes/1.wav", "no/2.wav"]);
    assert_eq!(index.train.len(), 4);
    assert_eq!(index.skipped.len(), 1);
    assert_eq!(index.skipped[0].path, "no/broken.wav");

    let train = load_clips(dir.path(), Split::Train).unwrap();
    assert_eq!(train.len(), 4);
}

#[test]
fn unindexed_directory_loads_every_clip() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("up")).unwrap();
    save_wav(dir.path().join("up/a.wav"), &[0.5; 10]).unwrap();
    let clips = load_clips(dir.path(), Split::Valid).unwrap();
    assert_eq!(clips.len(), 1);
    assert_eq!(clips[0].label(), Some(ClassLabel::Up));
    assert_eq!(clips[0].samples()[0], 0.5);
}
