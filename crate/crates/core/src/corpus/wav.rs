//! Minimal RIFF/WAVE reader and writer for PCM16 and IEEE float32.

use super::{AudioClip, CorpusError};

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct FormatChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn malformed(chunk: &str, reason: impl Into<String>) -> CorpusError {
    CorpusError::Decode {
        chunk: chunk.to_string(),
        reason: reason.into(),
    }
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn parse_format(body: &[u8]) -> Result<FormatChunk, CorpusError> {
    if body.len() < 16 {
        return Err(malformed("fmt ", format!("expected at least 16 bytes, found {}", body.len())));
    }
    let mut format = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits_per_sample = u16_at(body, 14);
    if format == WAVE_FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(malformed("fmt ", "truncated WAVE_FORMAT_EXTENSIBLE header"));
        }
        // the first two bytes of the sub-format GUID carry the actual format tag
        format = u16_at(body, 24);
    }
    if channels == 0 {
        return Err(malformed("fmt ", "zero channels"));
    }
    if sample_rate == 0 {
        return Err(malformed("fmt ", "zero sample rate"));
    }
    Ok(FormatChunk {
        format,
        channels,
        sample_rate,
        bits_per_sample,
    })
}

/// Decodes a RIFF/WAVE byte buffer into a mono clip.
///
/// Stereo input is averaged to mono. PCM16 samples are scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, CorpusError> {
    if bytes.len() < 12 {
        return Err(malformed("RIFF", "file shorter than the 12-byte RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(malformed("RIFF", "missing RIFF signature"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed("RIFF", "form type is not WAVE"));
    }

    let mut format: Option<FormatChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        let end = start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| malformed(&name, format!("declared size {size} exceeds file length")))?;
        match id {
            b"fmt " => format = Some(parse_format(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }

    let format = format.ok_or_else(|| malformed("fmt ", "chunk not found"))?;
    let data = data.ok_or_else(|| malformed("data", "chunk not found"))?;

    let channels = format.channels as usize;
    if channels > 2 {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{channels} channels (only mono and stereo are supported)"
        )));
    }
    let interleaved: Vec<f64> = match (format.format, format.bits_per_sample) {
        (WAVE_FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (WAVE_FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (tag, bits) => {
            return Err(CorpusError::UnsupportedFormat(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(malformed("data", "sample count is not a multiple of the channel count"));
    }
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(malformed("data", "non-finite sample"));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioClip::new(samples, format.sample_rate)
}

/// Encodes a mono clip as a RIFF/WAVE buffer.
///
/// PCM16 encoding rounds `x * 32768` and saturates to the i16 range.
pub fn encode_wav(clip: &AudioClip, format: SampleFormat) -> Vec<u8> {
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (WAVE_FORMAT_PCM, 16u16),
        SampleFormat::Float32 => (WAVE_FORMAT_IEEE_FLOAT, 32u16),
    };
    let block_align = bits / 8;
    let data_len = clip.len() * block_align as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        match format {
            SampleFormat::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    if data_len % 2 == 1 {
        out.push(0);
    }
    out
}

pub fn read_wav(path: impl AsRef<std::path::Path>) -> Result<AudioClip, CorpusError> {
    decode_wav(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_bytes(samples: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let mut out = Vec::new();
        let data_len = samples.len() * 2;
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn max_pcm_value_scales_by_32768() {
        let clip = decode_wav(&pcm16_bytes(&[32767], 1, 8000)).unwrap();
        assert_eq!(clip.samples()[0], 32767.0 / 32768.0);
    }

    #[test]
    fn zero_payload_gives_silent_clip() {
        let clip = decode_wav(&pcm16_bytes(&[0; 100], 1, 8000)).unwrap();
        assert_eq!(clip.len(), 100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
        assert_eq!(clip.duration_s(), 0.0125);
    }

    #[test]
    fn stereo_is_averaged() {
        let clip = decode_wav(&pcm16_bytes(&[16384, 0, -16384, -16384], 2, 8000)).unwrap();
        assert_eq!(clip.samples(), &[0.25, -0.5]);
    }

    #[test]
    fn truncated_header_names_chunk() {
        let mut bytes = pcm16_bytes(&[1, 2, 3], 1, 8000);
        bytes[4..8].copy_from_slice(&1000u32.to_le_bytes());
        bytes.truncate(30);
        match decode_wav(&bytes) {
            Err(CorpusError::Decode { chunk, .. }) => assert_eq!(chunk, "fmt "),
            other => panic!("unexpected {other:?}"),
        }
        match decode_wav(b"RIFX0000WAVE") {
            Err(CorpusError::Decode { chunk, .. }) => assert_eq!(chunk, "RIFF"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_data_chunk() {
        let bytes = pcm16_bytes(&[], 1, 8000);
        let truncated = &bytes[..36];
        match decode_wav(truncated) {
            Err(CorpusError::Decode { chunk, .. }) => assert_eq!(chunk, "data"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_bit_depth() {
        let mut bytes = pcm16_bytes(&[0, 0], 1, 8000);
        bytes[34..36].copy_from_slice(&24u16.to_le_bytes());
        assert!(matches!(decode_wav(&bytes), Err(CorpusError::UnsupportedFormat(_))));
    }

    #[test]
    fn pcm16_round_trip_within_one_step() {
        let samples: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).sin() * 0.9).collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let back = decode_wav(&encode_wav(&clip, SampleFormat::Pcm16)).unwrap();
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
