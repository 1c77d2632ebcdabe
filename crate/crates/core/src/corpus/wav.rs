use std::path::Path;

use super::CorpusError;
use crate::afe::{AudioClip, SAMPLE_RATE};

/// Reads 16-bit mono PCM at 16 kHz; samples are scaled by 1/32768.
pub fn load_wav(path: &Path) -> Result<AudioClip, CorpusError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| CorpusError::wav(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(CorpusError::UnsupportedRate { path: path.to_path_buf(), rate: spec.sample_rate });
    }
    if spec.channels != 1 {
        return Err(CorpusError::UnsupportedChannels { path: path.to_path_buf(), channels: spec.channels });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::UnsupportedFormat { path: path.to_path_buf(), bits: spec.bits_per_sample });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CorpusError::wav(path, e))?;
    Ok(AudioClip::new(samples))
}

/// Writes 16-bit mono PCM, rounding and saturating to the i16 range.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), CorpusError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| CorpusError::wav(path, e))?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| CorpusError::wav(path, e))?;
    }
    writer.finalize().map_err(|e| CorpusError::wav(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new((0..16_000).map(|i| ((i % 100) as f64 - 50.0) / 64.0).collect());
        write_wav(&path, &clip).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.len(), 16_000);
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn zeros_stay_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.wav");
        write_wav(&path, &AudioClip::new(vec![0.0; 800])).unwrap();
        assert!(load_wav(&path).unwrap().samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_wrong_rate_channels_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, rate: u32, channels: u16| {
            let path = dir.path().join(name);
            let spec = hound::WavSpec {
                channels,
                sample_rate: rate,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            for _ in 0..400 {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
            path
        };
        assert!(matches!(load_wav(&write("r.wav", 44_100, 1)), Err(CorpusError::UnsupportedRate { rate: 44_100, .. })));
        assert!(matches!(load_wav(&write("c.wav", 16_000, 2)), Err(CorpusError::UnsupportedChannels { .. })));
        let good = write("t.wav", 16_000, 1);
        let bytes = std::fs::read(&good).unwrap();
        std::fs::write(&good, &bytes[..30]).unwrap();
        assert!(matches!(load_wav(&good), Err(CorpusError::Wav { .. })));
    }
}
