//! Corruption protocols: additive Gaussian noise scaled to a fraction of
//! maximum intensity, and in-box pixel scrambling.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VideoSequence;
use crate::error::{AttmotError, Result};
use crate::rng::{stream_rng, STREAM_NOISE};

/// Additive noise settings. `beta` is the noise std as a fraction of maximum
/// intensity (1.0 for frames normalized to [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub beta: f64,
    pub seed: u64,
    pub clip: bool,
}

impl NoiseSpec {
    pub fn new(beta: f64, seed: u64) -> Self {
        NoiseSpec {
            beta,
            seed,
            clip: true,
        }
    }
}

/// Add per-pixel i.i.d. `beta * N(0,1)` to every frame. `beta = 0` is the
/// bit-exact identity.
pub fn inject_noise(frames: &Array3<f64>, noise: &NoiseSpec) -> Result<Array3<f64>> {
    if !(0.0..=1.0).contains(&noise.beta) {
        return Err(AttmotError::validation(format!(
            "noise beta {} outside [0, 1]",
            noise.beta
        )));
    }
    if noise.beta == 0.0 {
        return Ok(frames.clone());
    }
    let mut rng = stream_rng(noise.seed, STREAM_NOISE);
    let mut out = frames.clone();
    for v in out.iter_mut() {
        let delta: f64 = StandardNormal.sample(&mut rng);
        *v += noise.beta * delta;
        if noise.clip {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Permute pixels uniformly at random within the union of ground-truth boxes
/// of each frame; everything outside the boxes is untouched.
pub fn scramble_objects<R: Rng>(seq: &VideoSequence, rng: &mut R) -> VideoSequence {
    let mut out = seq.clone();
    let (t_len, h, w) = seq.frames.dim();
    for t in 0..t_len {
        // union mask over all boxes present at t; overlaps are permuted once
        let mut coords: Vec<(usize, usize)> = Vec::new();
        let mut in_box = vec![false; h * w];
        for track in &seq.tracks {
            if let Some(b) = track.boxes[t] {
                let x0 = b.x_min().max(0.0) as usize;
                let x1 = (b.x_max().ceil() as usize).min(w);
                let y0 = b.y_min().max(0.0) as usize;
                let y1 = (b.y_max().ceil() as usize).min(h);
                for y in y0..y1 {
                    for x in x0..x1 {
                        if !in_box[y * w + x] {
                            in_box[y * w + x] = true;
                            coords.push((y, x));
                        }
                    }
                }
            }
        }
        let mut values: Vec<f64> = coords.iter().map(|&(y, x)| seq.frames[[t, y, x]]).collect();
        values.shuffle(rng);
        for (&(y, x), v) in coords.iter().zip(values) {
            out.frames[[t, y, x]] = v;
        }
    }
    out
}
