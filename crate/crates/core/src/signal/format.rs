//! Neutral on-disk recording format.
//!
//! A recording named `<name>` is three files in one directory:
//!
//! * `<name>.meta` - UTF-8 `key=value` lines: `channels`, `sample_rate_hz`, `samples`.
//! * `<name>.f32` - little-endian `f32`, time-major (all channels of sample 0, then sample 1, ...).
//! * `<name>.markers.csv` - header `cue_sample,label,split`; label in {1,2,0}, split in {train,test}.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{Label, Marker, Recording, Split};
use crate::error::{Error, Result};

pub const MARKER_HEADER: &str = "cue_sample,label,split";

pub fn meta_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.meta"))
}

pub fn samples_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.f32"))
}

pub fn markers_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.markers.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    pub channels: usize,
    pub sample_rate_hz: u32,
    pub samples: usize,
}

pub fn parse_meta(text: &str, path: &Path) -> Result<Meta> {
    let bad = |msg: String| Error::MalformedMeta {
        path: path.to_path_buf(),
        msg,
    };
    let (mut channels, mut rate, mut samples) = (None, None, None);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let value = value.trim();
        let slot = match key.trim() {
            "channels" => &mut channels,
            "sample_rate_hz" => &mut rate,
            "samples" => &mut samples,
            other => return Err(bad(format!("unknown key {other:?}"))),
        };
        if slot.is_some() {
            return Err(bad(format!("duplicate key {:?}", key.trim())));
        }
        let parsed: u64 = value
            .parse()
            .map_err(|_| bad(format!("{:?} is not a nonnegative integer", value)))?;
        *slot = Some(parsed);
    }
    let channels = channels.ok_or_else(|| bad("missing channels".into()))? as usize;
    let rate = rate.ok_or_else(|| bad("missing sample_rate_hz".into()))?;
    let samples = samples.ok_or_else(|| bad("missing samples".into()))? as usize;
    if channels == 0 || rate == 0 {
        return Err(bad("channels and sample_rate_hz must be positive".into()));
    }
    let sample_rate_hz = u32::try_from(rate).map_err(|_| bad("sample_rate_hz too large".into()))?;
    Ok(Meta {
        channels,
        sample_rate_hz,
        samples,
    })
}

pub fn parse_markers(text: &str, path: &Path, n_samples: usize) -> Result<Vec<Marker>> {
    let bad = |line: usize, msg: String| Error::BadMarker {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == MARKER_HEADER => {}
        _ => return Err(bad(1, format!("expected header {MARKER_HEADER:?}"))),
    }
    let mut markers = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(lineno, format!("expected 3 fields, got {}", fields.len())));
        }
        let cue_sample: usize = fields[0]
            .parse()
            .map_err(|_| bad(lineno, format!("bad cue_sample {:?}", fields[0])))?;
        if cue_sample >= n_samples {
            return Err(bad(lineno, format!("cue_sample {cue_sample} beyond {n_samples} samples")));
        }
        let label = fields[1]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_code)
            .ok_or_else(|| bad(lineno, format!("bad label {:?}", fields[1])))?;
        let split = match fields[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(bad(lineno, format!("bad split {s:?}"))),
        };
        if split == Split::Train && !label.is_labeled() {
            return Err(bad(lineno, "training marker without label".into()));
        }
        markers.push(Marker {
            cue_sample,
            label,
            split,
        });
    }
    Ok(markers)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a neutral-format recording.
pub fn read_recording(dir: &Path, name: &str) -> Result<Recording> {
    let mp = meta_path(dir, name);
    let meta = parse_meta(&read_text(&mp)?, &mp)?;

    let sp = samples_path(dir, name);
    let bytes = fs::read(&sp).map_err(|e| Error::io(&sp, e))?;
    let expected = meta.samples as u64 * meta.channels as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: sp,
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut samples = DMatrix::<f64>::zeros(meta.channels, meta.samples);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        samples[(i % meta.channels, i / meta.channels)] = v as f64;
    }

    let kp = markers_path(dir, name);
    let markers = parse_markers(&read_text(&kp)?, &kp, meta.samples)?;
    Recording::new(meta.sample_rate_hz, samples, markers)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes `rec` in the neutral format, casting samples to `f32`.
pub fn write_recording(dir: &Path, name: &str, rec: &Recording) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = format!(
        "channels={}\nsample_rate_hz={}\nsamples={}\n",
        rec.n_channels(),
        rec.sample_rate_hz,
        rec.n_samples()
    );
    write_file(&meta_path(dir, name), meta.as_bytes())?;

    let mut bytes = Vec::with_capacity(rec.samples.len() * 4);
    for t in 0..rec.n_samples() {
        for c in 0..rec.n_channels() {
            bytes.extend_from_slice(&(rec.samples[(c, t)] as f32).to_le_bytes());
        }
    }
    write_file(&samples_path(dir, name), &bytes)?;

    let mut csv = String::from(MARKER_HEADER);
    csv.push('\n');
    for m in &rec.markers {
        csv.push_str(&format!("{},{},{}\n", m.cue_sample, m.label.code(), m.split.as_str()));
    }
    write_file(&markers_path(dir, name), csv.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("x")
    }

    #[test]
    fn meta_parsing() {
        let m = parse_meta("channels=118\nsample_rate_hz=100\nsamples=298458\n", &p()).unwrap();
        assert_eq!(
            m,
            Meta {
                channels: 118,
                sample_rate_hz: 100,
                samples: 298458
            }
        );
        for bad in [
            "channels=118\nsample_rate_hz=100\n",
            "channels=118\nsample_rate_hz=100\nsamples=-1\n",
            "channels=118\nchannels=118\nsample_rate_hz=100\nsamples=1\n",
            "channels 118\n",
            "channels=0\nsample_rate_hz=100\nsamples=1\n",
            "channels=1\nsample_rate_hz=100\nsamples=1\nfoo=2\n",
        ] {
            assert!(matches!(parse_meta(bad, &p()), Err(Error::MalformedMeta { .. })), "{bad}");
        }
    }

    #[test]
    fn marker_parsing() {
        let ok = "cue_sample,label,split\n10,1,train\n20,0,test\n30,2,test\n";
        let m = parse_markers(ok, &p(), 100).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[1].label, Label::Unlabeled);
        assert_eq!(m[2].split, Split::Test);
        for bad in [
            "cue,label,split\n",
            "cue_sample,label,split\n10,3,train\n",
            "cue_sample,label,split\n10,0,train\n",
            "cue_sample,label,split\n10,1,val\n",
            "cue_sample,label,split\n10,1\n",
            "cue_sample,label,split\n200,1,train\n",
        ] {
            assert!(matches!(parse_markers(bad, &p(), 100), Err(Error::BadMarker { .. })), "{bad}");
        }
    }

    #[test]
    fn round_trip_and_size_check() {
        let dir = tempfile::tempdir().unwrap();
        let samples = DMatrix::from_fn(3, 7, |c, t| c as f64 * 0.5 - t as f64 * 0.25);
        let markers = vec![Marker {
            cue_sample: 2,
            label: Label::Class2,
            split: Split::Train,
        }];
        let rec = Recording::new(100, samples, markers).unwrap();
        write_recording(dir.path(), "s", &rec).unwrap();
        // time-major layout: second value is channel 1 of sample 0
        let raw = fs::read(samples_path(dir.path(), "s")).unwrap();
        assert_eq!(f32::from_le_bytes(raw[4..8].try_into().unwrap()), 0.5);
        let back = read_recording(dir.path(), "s").unwrap();
        assert_eq!(back, rec);

        fs::write(samples_path(dir.path(), "s"), &raw[..raw.len() - 4]).unwrap();
        assert!(matches!(
            read_recording(dir.path(), "s"),
            Err(Error::SizeMismatch { expected: 84, found: 80, .. })
        ));
        assert!(matches!(read_recording(dir.path(), "missing"), Err(Error::Io { .. })));
    }
}
