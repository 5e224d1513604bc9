use std::io::Cursor;

use proptest::prelude::*;
use uap_audio::params::{load_params, params_checksum, save_params, ParamsError};
use uap_audio::perturbation::{load_perturbation, save_perturbation, PerturbationFile};
use uap_audio::wav::{read_pcm, read_wav, to_pcm, write_wav, WavError};
use uap_core::attack::{AttackConfig, Norm, Perturbation, UniversalityLevel};
use uap_core::dsp::FrontendConfig;
use uap_core::model::{Architecture, ModelParams};
use uap_core::{ClassLabel, WAVEFORM_LEN};

fn encode(samples: &[f64]) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    write_wav(&mut buf, samples).unwrap();
    buf.into_inner()
}

proptest! {
    #[test]
    fn wav_round_trip_is_exact_on_16_bit_levels(levels in prop::collection::vec(any::<i16>(), 1..2048)) {
        let samples: Vec<f64> = levels.iter().map(|&k| f64::from(k) / 32768.0).collect();
        let bytes = encode(&samples);
        prop_assert_eq!(read_pcm(&bytes[..]).unwrap(), levels.clone());
        let clip = read_wav(&bytes[..], Some(ClassLabel::Go)).unwrap();
        prop_assert_eq!(&clip.samples()[..levels.len()], &samples[..]);
        prop_assert!(clip.samples()[levels.len()..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn to_pcm_saturates(x in -4.0f64..4.0) {
        let k = to_pcm(&[x])[0];
        if x >= 1.0 {
            prop_assert_eq!(k, i16::MAX);
        } else if x <= -1.0 {
            prop_assert_eq!(k, i16::MIN);
        } else {
            prop_assert!((f64::from(k) / 32768.0 - x).abs() <= 0.5 / 32768.0 + 1e-15);
        }
    }
}

#[test]
fn over_length_wav_is_rejected() {
    let bytes = encode(&vec![0.0; WAVEFORM_LEN + 1]);
    assert!(matches!(read_wav(&bytes[..], None), Err(WavError::TooLong { samples }) if samples == WAVEFORM_LEN + 1));
}

#[test]
fn stereo_and_other_rates_are_rejected() {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
    w.write_sample(0i16).unwrap();
    w.write_sample(0i16).unwrap();
    w.finalize().unwrap();
    assert!(matches!(read_pcm(&buf.get_ref()[..]), Err(WavError::NotMono { channels: 2 })));

    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8_000,
        ..spec
    };
    let mut buf = Cursor::new(Vec::new());
    let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
    w.write_sample(0i16).unwrap();
    w.finalize().unwrap();
    assert!(matches!(
        read_pcm(&buf.get_ref()[..]),
        Err(WavError::SampleRateMismatch { found: 8_000 })
    ));
}

#[test]
fn params_file_round_trip_and_checksum() {
    let params = ModelParams::init(
        Architecture::with_channels(3, 2),
        FrontendConfig::model_b(),
        vec![ClassLabel::Yes, ClassLabel::No, ClassLabel::Up],
        21,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mdl");
    save_params(&path, &params).unwrap();
    let back = load_params(&path).unwrap();
    assert_eq!(back, params);
    assert_eq!(params_checksum(&back), params_checksum(&params));

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() - 100;
    bytes[mid] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_params(&path), Err(ParamsError::Checksum { .. })));
}

#[test]
fn perturbation_files_round_trip() {
    let values: Vec<f64> = (0..WAVEFORM_LEN).map(|i| 1e-3 * ((i as f64) * 0.37).sin()).collect();
    let v = Perturbation {
        values: values.clone(),
        p: Norm::L2,
        xi: 0.1,
    };
    let labels = [ClassLabel::Yes, ClassLabel::No];
    let level = UniversalityLevel::new(1, vec![ClassLabel::No], &labels).unwrap();
    let file = PerturbationFile::new(&v, "cafe".into(), Some(level), AttackConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let (wav, sidecar) = save_perturbation(&dir.path().join("v"), &file).unwrap();

    // the sidecar is lossless and the WAV path redirects to it
    assert_eq!(load_perturbation(&sidecar).unwrap(), file);
    assert_eq!(load_perturbation(&wav).unwrap().values, values);
    // the WAV copy holds the nearest 16-bit levels
    let heard = uap_audio::wav::load_wav(&wav, None).unwrap();
    for (a, b) in heard.samples().iter().zip(&values) {
        assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-15);
    }
}
