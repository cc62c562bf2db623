//! Small deterministic placeholder media.
//!
//! Images are binary PPM, clips use a tiny `MVID1` container (text header,
//! then one RGB triple per frame), audio is 8-bit mono WAV.

use std::io::Cursor;

use serde::Serialize;

pub const IMAGE_SIDE: usize = 8;
pub const VIDEO_FPS: u32 = 4;
pub const AUDIO_SAMPLE_RATE: u32 = 1000;

pub fn solid_ppm(rgb: [u8; 3]) -> Vec<u8> {
    let mut out = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    for _ in 0..IMAGE_SIDE * IMAGE_SIDE {
        out.extend_from_slice(&rgb);
    }
    out
}

/// Colour of a solid PPM produced by [`solid_ppm`].
pub fn ppm_color(bytes: &[u8]) -> Option<[u8; 3]> {
    let header = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n");
    let body = bytes.strip_prefix(header.as_bytes())?;
    (body.len() == IMAGE_SIDE * IMAGE_SIDE * 3).then(|| [body[0], body[1], body[2]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockVideo {
    pub fps: u32,
    pub duration_seconds: f64,
    pub frames: Vec<[u8; 3]>,
}

impl MockVideo {
    pub fn encode(&self) -> Vec<u8> {
        let mut out =
            format!("MVID1 {} {} {}\n", self.fps, self.frames.len(), self.duration_seconds).into_bytes();
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let nl = bytes.iter().position(|b| *b == b'\n').ok_or("missing MVID1 header")?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| e.to_string())?;
        let parts: Vec<&str> = header.split(' ').collect();
        let [magic, fps, count, duration] = parts[..] else {
            return Err(format!("bad MVID1 header `{header}`"));
        };
        if magic != "MVID1" {
            return Err(format!("bad magic `{magic}`"));
        }
        let fps = fps.parse().map_err(|_| "bad fps")?;
        let count: usize = count.parse().map_err(|_| "bad frame count")?;
        let duration_seconds = duration.parse().map_err(|_| "bad duration")?;
        let body = &bytes[nl + 1..];
        if body.len() != count * 3 {
            return Err(format!("expected {} frame bytes, found {}", count * 3, body.len()));
        }
        let frames = body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self { fps, duration_seconds, frames })
    }
}

/// `count` frame indices out of `total` at a uniform stride, always
/// including the first and last frame.
pub fn sample_frame_indices(total: usize, count: usize) -> Vec<usize> {
    if total == 0 || count == 0 {
        return Vec::new();
    }
    if count >= total {
        return (0..total).collect();
    }
    if count == 1 {
        return vec![0];
    }
    let span = total - 1;
    let steps = count - 1;
    (0..count).map(|i| (i * span + steps / 2) / steps).collect()
}

/// A fixed 220 Hz tone of the given length.
pub fn tone_wav(duration_seconds: f64) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: AUDIO_SAMPLE_RATE,
        bits_per_sample: 8,
        sample_format: hound::SampleFormat::Int,
    };
    let samples = (duration_seconds.max(0.0) * AUDIO_SAMPLE_RATE as f64).round() as u64;
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
        for n in 0..samples {
            let t = n as f64 / AUDIO_SAMPLE_RATE as f64;
            let v = (t * 220.0 * std::f64::consts::TAU).sin() * 60.0;
            w.write_sample(v as i8).expect("in-memory wav write");
        }
        w.finalize().expect("in-memory wav finalize");
    }
    cursor.into_inner()
}

pub fn wav_duration(bytes: &[u8]) -> Result<f64, String> {
    let r = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    Ok(r.duration() as f64 / r.spec().sample_rate as f64)
}

#[derive(Debug, Serialize)]
struct AdapterManifest<'a> {
    kind: &'static str,
    images: &'a [String],
    captions: &'a [String],
    seed: u64,
}

pub fn adapter_manifest(image_ids: &[String], captions: &[String], seed: u64) -> Vec<u8> {
    crate::digest::canonical_json(&AdapterManifest {
        kind: "mock-adapter",
        images: image_ids,
        captions,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_includes_both_ends() {
        assert_eq!(sample_frame_indices(20, 8), vec![0, 3, 5, 8, 11, 14, 16, 19]);
        assert_eq!(sample_frame_indices(5, 8), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_frame_indices(9, 2), vec![0, 8]);
        for total in 2..60 {
            for count in 2..=total {
                let idx = sample_frame_indices(total, count);
                assert_eq!(idx.len(), count);
                assert_eq!((idx[0], idx[count - 1]), (0, total - 1));
                assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn video_round_trip() {
        let v = MockVideo { fps: VIDEO_FPS, duration_seconds: 2.5, frames: vec![[1, 2, 3], [4, 5, 6]] };
        assert_eq!(MockVideo::decode(&v.encode()).unwrap(), v);
    }

    #[test]
    fn wav_has_declared_length() {
        assert!((wav_duration(&tone_wav(4.0)).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(wav_duration(&tone_wav(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn ppm_colour_recovered() {
        assert_eq!(ppm_color(&solid_ppm([9, 8, 7])), Some([9, 8, 7]));
    }
}
