//! Synthetic MOT video benchmarks: bouncing-glyph sequence generation with
//! tight ground-truth boxes, corruption protocols, and the on-disk container.

pub mod container;
pub mod corpus;
pub mod corrupt;

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use container::{load_sequence, save_sequence};
pub use corpus::{GlyphCorpus, SourceTag};
pub use corrupt::{inject_noise, scramble_objects, NoiseSpec};

use crate::error::{AttmotError, Result};
use crate::geometry::BoundingBox;
use crate::rng::stream_rng;

/// Geometry, object count, length and seed of one generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub frame_h: usize,
    pub frame_w: usize,
    pub n_objects: usize,
    pub n_frames: usize,
    /// Speed interval in pixels/frame; equal bounds give constant speed.
    pub speed_min: f64,
    pub speed_max: f64,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn validate(&self, sprite_side: usize) -> Result<()> {
        if self.n_objects < 1 {
            return Err(AttmotError::validation("n_objects must be >= 1"));
        }
        if self.n_frames < 1 {
            return Err(AttmotError::validation("n_frames must be >= 1"));
        }
        if self.frame_h < 2 * sprite_side || self.frame_w < 2 * sprite_side {
            return Err(AttmotError::validation(format!(
                "frame {}x{} too small for sprite side {} (needs >= {}x{})",
                self.frame_h,
                self.frame_w,
                sprite_side,
                2 * sprite_side,
                2 * sprite_side
            )));
        }
        if self.speed_min < 0.0 || self.speed_max < self.speed_min {
            return Err(AttmotError::validation("speed range must satisfy 0 <= min <= max"));
        }
        Ok(())
    }
}

/// One ground-truth trajectory; `boxes[t]` is `None` when off-screen at t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub track_id: u32,
    pub boxes: Vec<Option<BoundingBox>>,
}

/// Frames plus per-frame ground truth; the unit of training/eval data.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    /// T×H×W, values in [0, 1] before corruption.
    pub frames: Array3<f64>,
    pub tracks: Vec<GroundTruthTrack>,
    pub spec: SequenceSpec,
    pub source_tag: SourceTag,
}

/// Constant-velocity trajectory with reflective bounce, object always fully
/// inside the frame. Returns per-frame (cx, cy) centers in pixels.
pub fn sample_trajectory<R: Rng>(
    spec: &SequenceSpec,
    sprite_side: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    spec.validate(sprite_side)?;
    let half = sprite_side as f64 / 2.0;
    let (lo_x, hi_x) = (half, spec.frame_w as f64 - half);
    let (lo_y, hi_y) = (half, spec.frame_h as f64 - half);
    let mut cx = rng.gen_range(lo_x..=hi_x);
    let mut cy = rng.gen_range(lo_y..=hi_y);
    let speed = if spec.speed_max > spec.speed_min {
        rng.gen_range(spec.speed_min..=spec.speed_max)
    } else {
        spec.speed_min
    };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (mut vx, mut vy) = (speed * angle.cos(), speed * angle.sin());

    let mut centers = Vec::with_capacity(spec.n_frames);
    for _ in 0..spec.n_frames {
        centers.push((cx, cy));
        cx += vx;
        cy += vy;
        // reflect; speed magnitude is preserved
        if cx < lo_x {
            cx = 2.0 * lo_x - cx;
            vx = -vx;
        } else if cx > hi_x {
            cx = 2.0 * hi_x - cx;
            vx = -vx;
        }
        if cy < lo_y {
            cy = 2.0 * lo_y - cy;
            vy = -vy;
        } else if cy > hi_y {
            cy = 2.0 * hi_y - cy;
            vy = -vy;
        }
    }
    Ok(centers)
}

/// Max-blend sprites onto a zero canvas at integer top-left offsets.
pub fn composite_frame(
    sprites: &[ArrayView2<'_, f64>],
    top_lefts: &[(usize, usize)],
    frame_h: usize,
    frame_w: usize,
) -> Array2<f64> {
    let mut canvas = Array2::<f64>::zeros((frame_h, frame_w));
    for (sprite, &(ty, tx)) in sprites.iter().zip(top_lefts) {
        let (sh, sw) = sprite.dim();
        debug_assert!(ty + sh <= frame_h && tx + sw <= frame_w);
        for y in 0..sh {
            for x in 0..sw {
                let c = &mut canvas[[ty + y, tx + x]];
                *c = c.max(sprite[[y, x]]);
            }
        }
    }
    canvas
}

/// Tight nonzero support of a sprite, as an inclusive (x0, x1, y0, y1) range.
fn tight_support(sprite: &ArrayView2<'_, f64>) -> Option<(usize, usize, usize, usize)> {
    let (h, w) = sprite.dim();
    let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if sprite[[y, x]] > 0.0 {
                any = true;
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    any.then_some((x0, x1, y0, y1))
}

/// Generate a sequence: deterministic in (spec, corpus). Ground-truth boxes
/// tightly bound each sprite's nonzero support per frame.
pub fn generate_sequence(spec: &SequenceSpec, corpus: &GlyphCorpus) -> Result<VideoSequence> {
    corpus.validate()?;
    let side = corpus.side();
    spec.validate(side)?;
    let mut rng = stream_rng(spec.seed, 0);

    let mut chosen = Vec::with_capacity(spec.n_objects);
    let mut trajectories = Vec::with_capacity(spec.n_objects);
    for _ in 0..spec.n_objects {
        chosen.push(rng.gen_range(0..corpus.sprites.len()));
        trajectories.push(sample_trajectory(spec, side, &mut rng)?);
    }

    let supports: Vec<_> = chosen
        .iter()
        .map(|&i| {
            tight_support(&corpus.sprites[i].view())
                .ok_or_else(|| AttmotError::validation("corpus sprite has empty support"))
        })
        .collect::<Result<_>>()?;

    let mut frames = Array3::<f64>::zeros((spec.n_frames, spec.frame_h, spec.frame_w));
    let mut tracks: Vec<GroundTruthTrack> = (0..spec.n_objects)
        .map(|i| GroundTruthTrack {
            track_id: i as u32,
            boxes: Vec::with_capacity(spec.n_frames),
        })
        .collect();

    for t in 0..spec.n_frames {
        let mut views = Vec::with_capacity(spec.n_objects);
        let mut offsets = Vec::with_capacity(spec.n_objects);
        for (obj, &sprite_idx) in chosen.iter().enumerate() {
            let (cx, cy) = trajectories[obj][t];
            let tl_x = ((cx - side as f64 / 2.0).round() as i64)
                .clamp(0, (spec.frame_w - side) as i64) as usize;
            let tl_y = ((cy - side as f64 / 2.0).round() as i64)
                .clamp(0, (spec.frame_h - side) as i64) as usize;
            views.push(corpus.sprites[sprite_idx].view());
            offsets.push((tl_y, tl_x));
            let (x0, x1, y0, y1) = supports[obj];
            tracks[obj].boxes.push(Some(BoundingBox::from_extent(
                tl_x + x0,
                tl_x + x1,
                tl_y + y0,
                tl_y + y1,
            )));
        }
        let frame = composite_frame(&views, &offsets, spec.frame_h, spec.frame_w);
        frames
            .index_axis_mut(ndarray::Axis(0), t)
            .assign(&frame);
    }

    Ok(VideoSequence {
        frames,
        tracks,
        spec: spec.clone(),
        source_tag: corpus.source_tag,
    })
}
