//! Full-pipeline wiring: encoder → tracker array → renderer, parameter
//! initialization, chunked sequence rollout, and hypothesis extraction.

use ndarray::{Array3, ArrayD, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{self, to_tokens, EncoderConfig, VarMap};
use crate::error::Result;
use crate::metrics::HypothesisRecord;
use crate::params::ParamStore;
use crate::renderer::{pose_to_box, render_frame};
use crate::rng::{stream_rng, STREAM_PARAMS};
use crate::tracker::{
    self, emit_outputs, init_states, time_backward_smooth, update_states_read, BidirAxis,
    MidLevelOutput, TrackerConfig, TrackerState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub tracker: TrackerConfig,
    /// Output the literal cumulative-sum composite instead of the final layer.
    pub literal_sum: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            tracker: TrackerConfig::default(),
            literal_sum: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, frame_h: usize, frame_w: usize) -> Result<()> {
        self.encoder.validate(frame_h, frame_w)
    }
}

/// Initialize all model parameters deterministically from a seed.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = stream_rng(seed, STREAM_PARAMS);
    let mut store = ParamStore::new();
    encoder::register_params(&cfg.encoder, &mut store, &mut rng);
    tracker::register_params(&cfg.tracker, cfg.encoder.code_channels(), &mut store, &mut rng);
    store
}

/// Load every parameter onto a tape as a leaf node.
pub fn load_vars(t: &mut Tape, store: &ParamStore) -> VarMap {
    store
        .iter()
        .map(|(n, a)| (n.clone(), t.leaf(a.clone())))
        .collect()
}

/// Forward pass over a frame subsequence on a single tape.
pub struct SeqForward {
    /// Reconstruction per frame (H×W nodes).
    pub recons: Vec<Var>,
    /// Tracker emissions per frame.
    pub outputs: Vec<Vec<MidLevelOutput>>,
    /// Final latent value, for carrying across chunks.
    pub final_h: ArrayD<f64>,
}

/// Run the pipeline over `frames` (T×H×W view), starting from `init_h`
/// (zeros when None). One tape; differentiable end to end.
pub fn forward_sequence(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &ModelConfig,
    frames: &ArrayView3<'_, f64>,
    init_h: Option<&ArrayD<f64>>,
) -> Result<SeqForward> {
    let (n_frames, h, w) = frames.dim();
    cfg.validate(h, w)?;
    let mut state = match init_h {
        Some(h0) => TrackerState {
            h: t.leaf(h0.clone()),
            t: 0,
        },
        None => init_states(t, cfg.tracker.n_trackers, cfg.tracker.d_h),
    };

    let mut reads = Vec::with_capacity(n_frames);
    let mut fwd_states = Vec::with_capacity(n_frames);
    for ti in 0..n_frames {
        let frame = frames.index_axis(ndarray::Axis(0), ti);
        let frame_var = t.leaf(frame.to_owned().insert_axis(ndarray::Axis(0)).into_dyn());
        let code = encoder::encode_frame(t, vars, &cfg.encoder, frame_var)?;
        let tokens = to_tokens(t, code);
        let (next, read) = update_states_read(t, vars, &cfg.tracker, state, tokens)?;
        state = next;
        reads.push(read);
        fwd_states.push(state);
    }

    let emit_states: Vec<TrackerState> = match cfg.tracker.bidir_axis {
        BidirAxis::Trackers => fwd_states.clone(),
        BidirAxis::Time => time_backward_smooth(t, vars, &cfg.tracker, &reads, &fwd_states),
    };

    let mut recons = Vec::with_capacity(n_frames);
    let mut outputs = Vec::with_capacity(n_frames);
    for st in &emit_states {
        let outs = emit_outputs(t, vars, &cfg.tracker, *st);
        let recon = render_frame(t, &outs, h, w, cfg.literal_sum, false);
        recons.push(recon);
        outputs.push(outs);
    }
    Ok(SeqForward {
        recons,
        outputs,
        final_h: t.value(state.h).to_owned(),
    })
}

/// Discrete track hypotheses from one frame's emissions: confidence ≥
/// `min_conf` and a valid pose-implied box.
pub fn extract_hypotheses(
    t: &Tape,
    outputs: &[MidLevelOutput],
    frame_idx: usize,
    canvas_h: usize,
    canvas_w: usize,
    min_conf: f64,
) -> Vec<HypothesisRecord> {
    outputs
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let conf = t.scalar(o.confidence);
            if conf < min_conf {
                return None;
            }
            let pv = t.value(o.pose);
            let pose = [pv[[0, 0]], pv[[0, 1]], pv[[0, 2]], pv[[0, 3]]];
            let mask = t.value(o.shape_mask).to_owned();
            let mask2 = mask.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let bbox = pose_to_box(pose, &mask2, canvas_h, canvas_w)?;
            Some(HypothesisRecord {
                frame_idx,
                tracker_id: i as u32,
                confidence: conf,
                bbox: [bbox.cx, bbox.cy, bbox.w, bbox.h],
            })
        })
        .collect()
}

/// Evaluation rollout outcome.
pub struct Rollout {
    pub hypotheses: Vec<HypothesisRecord>,
    /// Reconstructed frames when requested (for artifact dumps).
    pub recon: Option<Array3<f64>>,
}

/// Roll the model over an arbitrarily long sequence in chunks, carrying the
/// latent state between tapes. No gradients are computed.
pub fn rollout(
    cfg: &ModelConfig,
    store: &ParamStore,
    frames: &Array3<f64>,
    chunk_len: usize,
    min_conf: f64,
    want_recon: bool,
) -> Result<Rollout> {
    assert!(chunk_len >= 1);
    let (n_frames, h, w) = frames.dim();
    cfg.validate(h, w)?;
    let mut hyps = Vec::new();
    let mut recon = want_recon.then(|| Array3::<f64>::zeros((n_frames, h, w)));
    let mut carry: Option<ArrayD<f64>> = None;
    let mut start = 0usize;
    while start < n_frames {
        let len = chunk_len.min(n_frames - start);
        let chunk = frames.slice(ndarray::s![start..start + len, .., ..]);
        let mut t = Tape::new();
        let vars = load_vars(&mut t, store);
        let fwd = forward_sequence(&mut t, &vars, cfg, &chunk, carry.as_ref())?;
        for (off, outs) in fwd.outputs.iter().enumerate() {
            hyps.extend(extract_hypotheses(&t, outs, start + off, h, w, min_conf));
        }
        if let Some(rec) = recon.as_mut() {
            for (off, &rv) in fwd.recons.iter().enumerate() {
                let val = t.value(rv);
                rec.index_axis_mut(ndarray::Axis(0), start + off).assign(
                    &val.view().into_dimensionality::<ndarray::Ix2>().unwrap(),
                );
            }
        }
        carry = Some(fwd.final_h);
        start += len;
    }
    Ok(Rollout {
        hypotheses: hyps,
        recon,
    })
}

/// A small single-tracker configuration on 16×16 frames, used by the
/// full-pipeline gradient checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            channels: (2, 3, 4),
            stride: 2,
            d_k: 3,
            attn_channels: 3,
            attention: true,
            attn_softmax: true,
        },
        tracker: TrackerConfig {
            n_trackers: 1,
            d_h: 6,
            d_attn: 4,
            d_read: 4,
            d_bidir: 4,
            d_mid: 8,
            patch: 5,
            learned_layers: false,
            bidir_axis: BidirAxis::Trackers,
            ..Default::default()
        },
        literal_sum: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    fn random_frames(t: usize, h: usize, w: usize, seed: u64) -> Array3<f64> {
        let mut rng = stream_rng(seed, 0);
        Array3::from_shape_simple_fn((t, h, w), || rng.gen_range(0.0..1.0))
    }

    #[test]
    fn init_params_is_seed_deterministic() {
        let cfg = tiny_config();
        let a = init_params(&cfg, 7);
        let b = init_params(&cfg, 7);
        let c = init_params(&cfg, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.contains("enc.stem.w"));
        assert!(a.contains("trk.cell.wxz"));
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let cfg = tiny_config();
        let store = init_params(&cfg, 1);
        let frames = random_frames(3, 16, 16, 2);
        let run = || {
            let mut t = Tape::new();
            let vars = load_vars(&mut t, &store);
            let fwd = forward_sequence(&mut t, &vars, &cfg, &frames.view(), None).unwrap();
            assert_eq!(fwd.recons.len(), 3);
            assert_eq!(t.shape(fwd.recons[0]), &[16, 16]);
            (t.value(fwd.recons[2]).to_owned(), fwd.final_h)
        };
        let (r1, h1) = run();
        let (r2, h2) = run();
        assert_eq!(r1, r2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn chunked_rollout_matches_single_tape() {
        let cfg = tiny_config();
        let store = init_params(&cfg, 3);
        let frames = random_frames(6, 16, 16, 4);
        let whole = rollout(&cfg, &store, &frames, 6, 0.0, true).unwrap();
        let chunked = rollout(&cfg, &store, &frames, 2, 0.0, true).unwrap();
        let (a, b) = (whole.recon.unwrap(), chunked.recon.unwrap());
        let diff = (&a - &b).iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        assert!(diff < 1e-9, "chunk mismatch {diff}");
        assert_eq!(whole.hypotheses.len(), chunked.hypotheses.len());
    }

    #[test]
    fn temporal_causality_holds() {
        // perturbing frame t+1 leaves outputs at t bit-identical
        let cfg = tiny_config();
        let store = init_params(&cfg, 5);
        let base = random_frames(4, 16, 16, 6);
        let mut poked = base.clone();
        poked[[3, 8, 8]] += 0.5;
        let run = |f: &Array3<f64>| {
            let mut t = Tape::new();
            let vars = load_vars(&mut t, &store);
            let fwd = forward_sequence(&mut t, &vars, &cfg, &f.view(), None).unwrap();
            fwd.recons[..3]
                .iter()
                .map(|&r| t.value(r).to_owned())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(&base), run(&poked));
    }

    #[test]
    fn time_axis_mode_runs_and_breaks_causality_only_offline() {
        let mut cfg = tiny_config();
        cfg.tracker.bidir_axis = BidirAxis::Time;
        let store = init_params(&cfg, 9);
        let frames = random_frames(4, 16, 16, 10);
        let mut t = Tape::new();
        let vars = load_vars(&mut t, &store);
        let fwd = forward_sequence(&mut t, &vars, &cfg, &frames.view(), None).unwrap();
        assert_eq!(fwd.recons.len(), 4);
    }

    #[test]
    fn hypothesis_confidence_filter() {
        let cfg = tiny_config();
        let store = init_params(&cfg, 11);
        let frames = random_frames(2, 16, 16, 12);
        let all = rollout(&cfg, &store, &frames, 4, 0.0, false).unwrap();
        let none = rollout(&cfg, &store, &frames, 4, 1.1, false).unwrap();
        assert!(all.hypotheses.len() >= none.hypotheses.len());
        assert!(none.hypotheses.is_empty());
        for h in &all.hypotheses {
            assert!(h.frame_idx < 2);
            assert!((h.tracker_id as usize) < cfg.tracker.n_trackers);
        }
    }

    #[test]
    fn incompatible_frame_size_is_a_validation_error() {
        let cfg = tiny_config();
        let store = init_params(&cfg, 13);
        let frames = random_frames(1, 15, 15, 14);
        assert!(rollout(&cfg, &store, &frames, 1, 0.5, false).is_err());
    }
}
