//! On-disk sequence container.
//!
//! A container is a directory holding:
//!   - `manifest.json` — spec, seed, source tag, dtype, shape, checksum
//!   - `frames.bin`    — raw little-endian uint8, frame-major, row-major
//!   - `tracks.jsonl`  — one JSON object per ground-truth track

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::SourceTag;
use super::{GroundTruthTrack, SequenceSpec, VideoSequence};
use crate::error::{AttmotError, Result};
use crate::geometry::BoundingBox;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    spec: SequenceSpec,
    seed: u64,
    source_tag: SourceTag,
    dtype: String,
    shape: [usize; 3],
    checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRecord {
    id: u32,
    /// [frame_idx, cx, cy, w, h] per visible frame
    boxes: Vec<[f64; 5]>,
}

/// Write a file atomically (temp then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn quantize(frames: &Array3<f64>) -> Vec<u8> {
    frames
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn checksum(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Save a sequence to `dir` (created if missing). Pixels are quantized to
/// uint8; save→load→save is byte-stable.
pub fn save_sequence(seq: &VideoSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (t, h, w) = seq.frames.dim();
    let bytes = quantize(&seq.frames);
    write_atomic(&dir.join("frames.bin"), &bytes)?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        spec: seq.spec.clone(),
        seed: seq.spec.seed,
        source_tag: seq.source_tag,
        dtype: "uint8".to_string(),
        shape: [t, h, w],
        checksum: checksum(&bytes),
    };
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    let mut lines = String::new();
    for track in &seq.tracks {
        let rec = TrackRecord {
            id: track.track_id,
            boxes: track
                .boxes
                .iter()
                .enumerate()
                .filter_map(|(i, b)| b.map(|b| [i as f64, b.cx, b.cy, b.w, b.h]))
                .collect(),
        };
        lines.push_str(&serde_json::to_string(&rec)?);
        lines.push('\n');
    }
    write_atomic(&dir.join("tracks.jsonl"), lines.as_bytes())?;
    Ok(())
}

/// Load a container, verifying payload length and checksum.
pub fn load_sequence(dir: &Path) -> Result<VideoSequence> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| AttmotError::format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(AttmotError::format(format!(
            "unsupported container schema version {}",
            manifest.schema_version
        )));
    }
    if manifest.dtype != "uint8" {
        return Err(AttmotError::format(format!(
            "unsupported dtype '{}'",
            manifest.dtype
        )));
    }
    let [t, h, w] = manifest.shape;
    let bytes = fs::read(dir.join("frames.bin"))?;
    if bytes.len() != t * h * w {
        return Err(AttmotError::format(format!(
            "frames.bin truncated: expected {} bytes for shape {:?}, found {}",
            t * h * w,
            manifest.shape,
            bytes.len()
        )));
    }
    let sum = checksum(&bytes);
    if sum != manifest.checksum {
        return Err(AttmotError::format(format!(
            "frames.bin checksum mismatch: manifest {} vs payload {}",
            manifest.checksum, sum
        )));
    }
    let frames = Array3::from_shape_vec(
        (t, h, w),
        bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
    )
    .expect("shape checked above");

    let mut tracks = Vec::new();
    let tracks_path = dir.join("tracks.jsonl");
    if tracks_path.exists() {
        for line in BufReader::new(fs::File::open(&tracks_path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TrackRecord = serde_json::from_str(&line)?;
            let mut boxes = vec![None; t];
            for b in rec.boxes {
                let idx = b[0] as usize;
                if idx >= t {
                    return Err(AttmotError::format(format!(
                        "track {} references frame {idx} beyond length {t}",
                        rec.id
                    )));
                }
                boxes[idx] = Some(BoundingBox::new(b[1], b[2], b[3], b[4]));
            }
            tracks.push(GroundTruthTrack {
                track_id: rec.id,
                boxes,
            });
        }
    }

    Ok(VideoSequence {
        frames,
        tracks,
        spec: manifest.spec,
        source_tag: manifest.source_tag,
    })
}

/// Import an externally captured raw uint8 frame stack (e.g. grayscale game
/// footage) as a container without ground truth.
pub fn import_frames(raw_path: &Path, frame_h: usize, frame_w: usize, out: &Path) -> Result<VideoSequence> {
    let bytes = fs::read(raw_path)?;
    let per_frame = frame_h * frame_w;
    if per_frame == 0 || bytes.len() % per_frame != 0 {
        return Err(AttmotError::validation(format!(
            "raw file length {} is not a multiple of {}x{}",
            bytes.len(),
            frame_h,
            frame_w
        )));
    }
    let t = bytes.len() / per_frame;
    if t == 0 {
        return Err(AttmotError::validation("raw file contains no frames"));
    }
    let frames = Array3::from_shape_vec(
        (t, frame_h, frame_w),
        bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
    )
    .expect("length checked above");
    let seq = VideoSequence {
        frames,
        tracks: Vec::new(),
        spec: SequenceSpec {
            frame_h,
            frame_w,
            n_objects: 0,
            n_frames: t,
            speed_min: 0.0,
            speed_max: 0.0,
            seed: 0,
        },
        source_tag: SourceTag::External,
    };
    save_sequence(&seq, out)?;
    Ok(seq)
}
