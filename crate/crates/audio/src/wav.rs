//! 16-bit mono 16 kHz PCM WAV reading and writing.

use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavSpec};
use thiserror::Error;
use uap_core::synth::quantize_pcm16;
use uap_core::{ClassLabel, Waveform, SAMPLE_RATE_HZ, WAVEFORM_LEN};

#[derive(Debug, Error)]
pub enum WavError {
    #[error("sample rate is {found} Hz, expected {SAMPLE_RATE_HZ} Hz")]
    SampleRateMismatch { found: u32 },
    #[error("{channels} channels, expected mono")]
    NotMono { channels: u16 },
    #[error("{bits}-bit {format:?} samples, expected 16-bit PCM")]
    Not16Bit { bits: u16, format: SampleFormat },
    #[error("{samples} samples, at most {WAVEFORM_LEN} allowed")]
    TooLong { samples: usize },
    #[error("malformed WAV: {0}")]
    Format(#[from] hound::Error),
}

pub fn spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

/// Decodes raw PCM values without the length limit; used for long
/// background recordings as well as clips.
pub fn read_pcm<R: Read>(reader: R) -> Result<Vec<i16>, WavError> {
    let reader = hound::WavReader::new(reader)?;
    let s = reader.spec();
    if s.sample_rate != SAMPLE_RATE_HZ {
        return Err(WavError::SampleRateMismatch { found: s.sample_rate });
    }
    if s.channels != 1 {
        return Err(WavError::NotMono { channels: s.channels });
    }
    if s.bits_per_sample != 16 || s.sample_format != SampleFormat::Int {
        return Err(WavError::Not16Bit {
            bits: s.bits_per_sample,
            format: s.sample_format,
        });
    }
    Ok(reader.into_samples::<i16>().collect::<Result<_, _>>()?)
}

/// Converts PCM values to a clip: divided by 32768, zero-padded to one
/// second, rejected when longer.
pub fn pcm_to_waveform(pcm: &[i16], label: Option<ClassLabel>) -> Result<Waveform, WavError> {
    if pcm.len() > WAVEFORM_LEN {
        return Err(WavError::TooLong { samples: pcm.len() });
    }
    let samples = pcm.iter().map(|&s| f64::from(s) / 32768.0).collect();
    Ok(Waveform::new(samples, label).expect("16-bit samples are in range"))
}

pub fn read_wav<R: Read>(reader: R, label: Option<ClassLabel>) -> Result<Waveform, WavError> {
    pcm_to_waveform(&read_pcm(reader)?, label)
}

pub fn load_wav(path: impl AsRef<Path>, label: Option<ClassLabel>) -> Result<Waveform, WavError> {
    let file = std::fs::File::open(path).map_err(hound::Error::IoError)?;
    read_wav(std::io::BufReader::new(file), label)
}

/// Nearest 16-bit level of each sample; values outside [-1, 1) saturate.
pub fn to_pcm(samples: &[f64]) -> Vec<i16> {
    samples.iter().map(|&s| (quantize_pcm16(s) * 32768.0) as i16).collect()
}

pub fn write_wav<W: Write + Seek>(writer: W, samples: &[f64]) -> Result<(), WavError> {
    let mut w = hound::WavWriter::new(writer, spec())?;
    for s in to_pcm(samples) {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn save_wav(path: impl AsRef<Path>, samples: &[f64]) -> Result<(), WavError> {
    let file = std::fs::File::create(path).map_err(hound::Error::IoError)?;
    write_wav(std::io::BufWriter::new(file), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn encode(spec: WavSpec, samples: &[i32]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    #[test]
    fn half_scale_file() {
        let bytes = encode(spec(), &vec![16384; 16000]);
        let w = read_wav(Cursor::new(bytes), None).unwrap();
        assert_eq!(w.samples().len(), 16000);
        assert!(w.samples().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn short_file_is_padded() {
        let bytes = encode(spec(), &vec![-32768; 8000]);
        let w = read_wav(Cursor::new(bytes), None).unwrap();
        assert!(w.samples()[..8000].iter().all(|&s| s == -1.0));
        assert!(w.samples()[8000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_other_formats() {
        let bytes = encode(WavSpec { sample_rate: 8000, ..spec() }, &[0; 10]);
        assert!(matches!(read_wav(Cursor::new(bytes), None), Err(WavError::SampleRateMismatch { found: 8000 })));
        let bytes = encode(WavSpec { channels: 2, ..spec() }, &[0; 10]);
        assert!(matches!(read_wav(Cursor::new(bytes), None), Err(WavError::NotMono { channels: 2 })));
        let bytes = encode(WavSpec { bits_per_sample: 8, ..spec() }, &[0; 10]);
        assert!(matches!(read_wav(Cursor::new(bytes), None), Err(WavError::Not16Bit { bits: 8, .. })));
        let bytes = encode(spec(), &vec![0; 16001]);
        assert!(matches!(read_wav(Cursor::new(bytes), None), Err(WavError::TooLong { samples: 16001 })));
        assert!(matches!(read_wav(Cursor::new(b"RIFFjunk".to_vec()), None), Err(WavError::Format(_))));
    }

    #[test]
    fn saturating_quantization() {
        assert_eq!(to_pcm(&[1.0, -1.0, 0.5, 2.0, -0.4e-4]), [32767, -32768, 16384, 32767, -1]);
    }
}
