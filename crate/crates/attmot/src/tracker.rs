//! Recurrent tracker array: per-tracker latent states updated by a GRU cell
//! over an attention-pooled read of the frame code, a bidirectional GRU pass
//! along the tracker-index axis for inter-tracker communication, and a shared
//! emission head producing renderable mid-level outputs.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::VarMap;
use crate::error::{AttmotError, Result};
use crate::params::{fan_in_uniform, orthogonal, ParamStore};

/// Axis of the bidirectional recurrence. `Trackers` (default) runs the
/// bidirectional pass across the tracker-index axis every step; `Time` skips
/// it online and applies an offline backward-in-time smoothing pass instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BidirAxis {
    Trackers,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Number of trackers I.
    pub n_trackers: usize,
    /// Latent width d_h per tracker.
    pub d_h: usize,
    /// Read-attention key/query width.
    pub d_attn: usize,
    /// Attention-pooled read width (GRU input size).
    pub d_read: usize,
    /// Hidden width of the cross-tracker bidirectional cells.
    pub d_bidir: usize,
    /// Hidden width of the shared emission head.
    pub d_mid: usize,
    /// Square patch side h_p = w_p for mask and appearance.
    pub patch: usize,
    /// Emit per-tracker layer logits for learned layer assignment.
    pub learned_layers: bool,
    pub bidir_axis: BidirAxis,
    /// Pose scale range: scales are `scale_min + (scale_max - scale_min) *
    /// sigmoid(..)`. The floor keeps the warp support (and thus its gradient)
    /// from collapsing under tightness pressure.
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            n_trackers: 4,
            d_h: 64,
            d_attn: 32,
            d_read: 32,
            d_bidir: 32,
            d_mid: 128,
            patch: 21,
            learned_layers: false,
            bidir_axis: BidirAxis::Trackers,
            scale_min: 0.15,
            scale_max: 1.0,
        }
    }
}

/// Latent tracker array: `h` is an I×d_h node on the active tape.
#[derive(Debug, Clone, Copy)]
pub struct TrackerState {
    pub h: Var,
    pub t: usize,
}

/// Per-tracker emission Y_{t,i}; every field is a node on the active tape.
#[derive(Debug, Clone, Copy)]
pub struct MidLevelOutput {
    /// 1×1, sigmoid-bounded.
    pub confidence: Var,
    /// 1×4 (s^x, s^y, t^x, t^y): sigmoid scales mapped into
    /// [scale_min, scale_max], tanh translations.
    pub pose: Var,
    /// patch×patch, sigmoid-bounded.
    pub shape_mask: Var,
    /// patch×patch, sigmoid-bounded.
    pub appearance: Var,
    /// 1×3 layer logits when learned layer assignment is enabled.
    pub layer_logits: Option<Var>,
}

fn gru_params<R: Rng>(store: &mut ParamStore, prefix: &str, dx: usize, dh: usize, rng: &mut R) {
    for gate in ["z", "r", "c"] {
        store.insert(&format!("{prefix}.wx{gate}"), fan_in_uniform(&[dx, dh], dx, rng));
        store.insert(&format!("{prefix}.wh{gate}"), orthogonal(dh, dh, rng));
        store.insert(&format!("{prefix}.b{gate}"), ArrayD::zeros(IxDyn(&[1, dh])));
    }
}

fn head_params<R: Rng>(store: &mut ParamStore, name: &str, di: usize, co: usize, rng: &mut R) {
    store.insert(&format!("{name}.w"), fan_in_uniform(&[di, co], di, rng));
    store.insert(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[1, co])));
}

/// Register all tracker parameters under the `trk.` prefix.
/// `code_channels` is the feature-code channel count from the encoder.
pub fn register_params<R: Rng>(
    cfg: &TrackerConfig,
    code_channels: usize,
    store: &mut ParamStore,
    rng: &mut R,
) {
    // content-based read: latent queries over code tokens
    store.insert("trk.read.q.w", orthogonal(cfg.d_h, cfg.d_attn, rng));
    store.insert("trk.read.q.b", ArrayD::zeros(IxDyn(&[1, cfg.d_attn])));
    store.insert("trk.read.k.w", orthogonal(code_channels, cfg.d_attn, rng));
    store.insert("trk.read.k.b", ArrayD::zeros(IxDyn(&[1, cfg.d_attn])));
    store.insert("trk.read.v.w", orthogonal(code_channels, cfg.d_read, rng));
    store.insert("trk.read.v.b", ArrayD::zeros(IxDyn(&[1, cfg.d_read])));

    gru_params(store, "trk.cell", cfg.d_read, cfg.d_h, rng);
    match cfg.bidir_axis {
        BidirAxis::Trackers => {
            gru_params(store, "trk.fwd", cfg.d_h, cfg.d_bidir, rng);
            gru_params(store, "trk.bwd", cfg.d_h, cfg.d_bidir, rng);
            store.insert(
                "trk.mix.w",
                fan_in_uniform(
                    &[cfg.d_h + 2 * cfg.d_bidir, cfg.d_h],
                    cfg.d_h + 2 * cfg.d_bidir,
                    rng,
                ),
            );
        }
        BidirAxis::Time => {
            gru_params(store, "trk.tbwd", cfg.d_read, cfg.d_h, rng);
            store.insert(
                "trk.mix.w",
                fan_in_uniform(&[2 * cfg.d_h, cfg.d_h], 2 * cfg.d_h, rng),
            );
        }
    }
    store.insert("trk.mix.b", ArrayD::zeros(IxDyn(&[1, cfg.d_h])));

    head_params(store, "trk.head.mid", cfg.d_h, cfg.d_mid, rng);
    head_params(store, "trk.head.conf", cfg.d_mid, 1, rng);
    head_params(store, "trk.head.pose", cfg.d_mid, 4, rng);
    head_params(store, "trk.head.mask", cfg.d_mid, cfg.patch * cfg.patch, rng);
    head_params(store, "trk.head.app", cfg.d_mid, cfg.patch * cfg.patch, rng);
    if cfg.learned_layers {
        head_params(store, "trk.head.layer", cfg.d_mid, 3, rng);
    }
    // start trackers confident but nearly transparent: a faint initial render
    // avoids the early "erase everything" gradient that collapses the heads
    // before localization has a chance to learn
    store.get_mut("trk.head.conf.b").fill(2.0);
    store.get_mut("trk.head.mask.b").fill(-2.0);
}

/// Zero-initialized latents at t = 0.
pub fn init_states(t: &mut Tape, n_trackers: usize, d_h: usize) -> TrackerState {
    assert!(n_trackers >= 1 && d_h >= 1);
    TrackerState {
        h: t.leaf(ArrayD::zeros(IxDyn(&[n_trackers, d_h]))),
        t: 0,
    }
}

/// One GRU cell step for a batch of rows: `x` N×dx, `h` N×dh -> N×dh.
/// Convention: h' = z ⊙ c + (1 − z) ⊙ h, so update gate ≡ 1 yields the
/// candidate activation.
pub fn gru_cell(t: &mut Tape, vars: &VarMap, prefix: &str, x: Var, h: Var) -> Var {
    let lin = |t: &mut Tape, gate: &str, hin: Var| {
        let a = t.linear(x, vars[&format!("{prefix}.wx{gate}")], vars[&format!("{prefix}.b{gate}")]);
        let b = t.matmul(hin, vars[&format!("{prefix}.wh{gate}")]);
        t.add(a, b)
    };
    let z_pre = lin(t, "z", h);
    let z = t.sigmoid(z_pre);
    let r_pre = lin(t, "r", h);
    let r = t.sigmoid(r_pre);
    let rh = t.mul(r, h);
    let c_pre = lin(t, "c", rh);
    let c = t.tanh(c_pre);
    let zc = t.mul(z, c);
    let one_minus_z = t.affine(z, -1.0, 1.0);
    let keep = t.mul(one_minus_z, h);
    t.add(zc, keep)
}

/// Attention-pooled read of the code tokens: latents as queries -> I×d_read.
pub fn attention_read(t: &mut Tape, vars: &VarMap, h: Var, code_tokens: Var) -> Var {
    let q = t.linear(h, vars["trk.read.q.w"], vars["trk.read.q.b"]);
    let k = t.linear(code_tokens, vars["trk.read.k.w"], vars["trk.read.k.b"]);
    let v = t.linear(code_tokens, vars["trk.read.v.w"], vars["trk.read.v.b"]);
    let d_a = t.shape(q)[1] as f64;
    let kt = t.transpose(k);
    let raw = t.matmul(q, kt);
    let scores = t.scale(raw, 1.0 / d_a.sqrt());
    let weights = t.softmax_rows(scores);
    t.matmul(weights, v)
}

/// Bidirectional GRU scan over the tracker-index axis; returns the I×(2·d_b)
/// concatenation of forward and backward hidden sequences.
fn tracker_axis_bidir(t: &mut Tape, vars: &VarMap, cfg: &TrackerConfig, h: Var) -> Var {
    let i_n = t.shape(h)[0];
    let mut fwd_rows = Vec::with_capacity(i_n);
    let mut bwd_rows: Vec<Option<Var>> = vec![None; i_n];
    let mut fh = t.leaf(ArrayD::zeros(IxDyn(&[1, cfg.d_bidir])));
    for i in 0..i_n {
        let row = t.slice(h, 0, i, 1);
        fh = gru_cell(t, vars, "trk.fwd", row, fh);
        fwd_rows.push(fh);
    }
    let mut bh = t.leaf(ArrayD::zeros(IxDyn(&[1, cfg.d_bidir])));
    for i in (0..i_n).rev() {
        let row = t.slice(h, 0, i, 1);
        bh = gru_cell(t, vars, "trk.bwd", row, bh);
        bwd_rows[i] = Some(bh);
    }
    let bwd_rows: Vec<Var> = bwd_rows.into_iter().map(|r| r.unwrap()).collect();
    let fwd = t.concat0(&fwd_rows);
    let bwd = t.concat0(&bwd_rows);
    let fwd_bwd = [fwd, bwd];
    concat_cols(t, &fwd_bwd)
}

/// Column-wise concatenation of same-height matrices via transpose+concat0.
fn concat_cols(t: &mut Tape, parts: &[Var]) -> Var {
    let transposed: Vec<Var> = parts.iter().map(|&p| t.transpose(p)).collect();
    let stacked = t.concat0(&transposed);
    t.transpose(stacked)
}

/// Advance the tracker array one frame. `code_tokens` is the (H'·W')×C_u
/// token view of the frame code.
pub fn update_states(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &TrackerConfig,
    prev: TrackerState,
    code_tokens: Var,
) -> Result<TrackerState> {
    update_states_read(t, vars, cfg, prev, code_tokens).map(|(s, _)| s)
}

/// As [`update_states`], additionally returning the attention read (needed
/// by the offline time-axis smoothing pass).
pub fn update_states_read(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &TrackerConfig,
    prev: TrackerState,
    code_tokens: Var,
) -> Result<(TrackerState, Var)> {
    let read = attention_read(t, vars, prev.h, code_tokens);
    let updated = gru_cell(t, vars, "trk.cell", read, prev.h);
    let mixed = match cfg.bidir_axis {
        BidirAxis::Trackers => {
            let across = tracker_axis_bidir(t, vars, cfg, updated);
            let cat = concat_cols(t, &[updated, across]);
            let lin = t.linear(cat, vars["trk.mix.w"], vars["trk.mix.b"]);
            t.tanh(lin)
        }
        // online half of the time-axis mode: smoothing happens offline in
        // `time_backward_smooth`
        BidirAxis::Time => updated,
    };
    if !t.value(mixed).iter().all(|x| x.is_finite()) {
        return Err(AttmotError::numeric(format!(
            "non-finite tracker latents at step {}",
            prev.t + 1
        )));
    }
    Ok((
        TrackerState {
            h: mixed,
            t: prev.t + 1,
        },
        read,
    ))
}

/// Offline backward-in-time smoothing for `BidirAxis::Time`: a reverse GRU
/// over the per-frame reads, mixed with the forward latents.
pub fn time_backward_smooth(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &TrackerConfig,
    reads: &[Var],
    fwd_states: &[TrackerState],
) -> Vec<TrackerState> {
    assert_eq!(reads.len(), fwd_states.len());
    let n = reads.len();
    let i_n = if n > 0 { t.shape(reads[0])[0] } else { 0 };
    let mut bh = t.leaf(ArrayD::zeros(IxDyn(&[i_n, cfg.d_h])));
    let mut smoothed = vec![None; n];
    for step in (0..n).rev() {
        bh = gru_cell(t, vars, "trk.tbwd", reads[step], bh);
        let cat = concat_cols(t, &[fwd_states[step].h, bh]);
        let lin = t.linear(cat, vars["trk.mix.w"], vars["trk.mix.b"]);
        let mixed = t.tanh(lin);
        smoothed[step] = Some(TrackerState {
            h: mixed,
            t: fwd_states[step].t,
        });
    }
    smoothed.into_iter().map(|s| s.unwrap()).collect()
}

/// Shared emission head: one MidLevelOutput per tracker.
pub fn emit_outputs(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &TrackerConfig,
    state: TrackerState,
) -> Vec<MidLevelOutput> {
    let mid_pre = t.linear(state.h, vars["trk.head.mid.w"], vars["trk.head.mid.b"]);
    let mid = t.relu(mid_pre);
    let conf_pre = t.linear(mid, vars["trk.head.conf.w"], vars["trk.head.conf.b"]);
    let conf = t.sigmoid(conf_pre);
    let pose_pre = t.linear(mid, vars["trk.head.pose.w"], vars["trk.head.pose.b"]);
    let scales_pre = t.slice(pose_pre, 1, 0, 2);
    let scales_sig = t.sigmoid(scales_pre);
    let scales = t.affine(scales_sig, cfg.scale_max - cfg.scale_min, cfg.scale_min);
    let trans_pre = t.slice(pose_pre, 1, 2, 2);
    let trans = t.tanh(trans_pre);
    let pose = concat_cols(t, &[scales, trans]);
    let mask_pre = t.linear(mid, vars["trk.head.mask.w"], vars["trk.head.mask.b"]);
    let mask = t.sigmoid(mask_pre);
    let app_pre = t.linear(mid, vars["trk.head.app.w"], vars["trk.head.app.b"]);
    let app = t.sigmoid(app_pre);
    let layer = cfg.learned_layers.then(|| {
        t.linear(mid, vars["trk.head.layer.w"], vars["trk.head.layer.b"])
    });

    let i_n = t.shape(state.h)[0];
    let p = cfg.patch;
    (0..i_n)
        .map(|i| {
            let mask_row = t.slice(mask, 0, i, 1);
            let app_row = t.slice(app, 0, i, 1);
            MidLevelOutput {
                confidence: t.slice(conf, 0, i, 1),
                pose: t.slice(pose, 0, i, 1),
                shape_mask: t.reshape(mask_row, &[p, p]),
                appearance: t.reshape(app_row, &[p, p]),
                layer_logits: layer.map(|l| t.slice(l, 0, i, 1)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::rel_err_scalar;
    use crate::rng::stream_rng;
    use ndarray::Axis;

    fn small_cfg() -> TrackerConfig {
        TrackerConfig {
            n_trackers: 3,
            d_h: 5,
            d_attn: 4,
            d_read: 4,
            d_bidir: 4,
            d_mid: 6,
            patch: 3,
            learned_layers: false,
            bidir_axis: BidirAxis::Trackers,
            ..Default::default()
        }
    }

    fn setup(cfg: &TrackerConfig, code_c: usize, seed: u64) -> ParamStore {
        let mut rng = stream_rng(seed, 0);
        let mut store = ParamStore::new();
        register_params(cfg, code_c, &mut store, &mut rng);
        store
    }

    fn into_tape(store: &ParamStore, t: &mut Tape) -> VarMap {
        store
            .iter()
            .map(|(n, a)| (n.clone(), t.leaf(a.clone())))
            .collect()
    }

    #[test]
    fn init_is_zero_and_deterministic() {
        let mut t = Tape::new();
        let a = init_states(&mut t, 4, 64);
        let b = init_states(&mut t, 4, 64);
        assert_eq!(t.shape(a.h), &[4, 64]);
        assert_eq!(a.t, 0);
        assert!(t.value(a.h).iter().all(|&v| v == 0.0));
        assert_eq!(t.value(a.h).to_owned(), t.value(b.h).to_owned());
        let one = init_states(&mut t, 1, 8);
        assert_eq!(t.shape(one.h), &[1, 8]);
    }

    #[test]
    fn zero_code_zero_weights_keeps_state_zero() {
        let cfg = small_cfg();
        let mut store = setup(&cfg, 7, 1);
        for (_, a) in store.iter_mut() {
            a.fill(0.0);
        }
        let mut t = Tape::new();
        let vars = into_tape(&store, &mut t);
        let s0 = init_states(&mut t, cfg.n_trackers, cfg.d_h);
        let tokens = t.leaf(ArrayD::zeros(IxDyn(&[10, 7])));
        let s1 = update_states(&mut t, &vars, &cfg, s0, tokens).unwrap();
        assert_eq!(s1.t, 1);
        assert!(t.value(s1.h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_update_gate_one_yields_candidate() {
        // closed-form gate oracle: force z ≡ 1 via a huge bias, zero the
        // reset path, hand-set the candidate weights
        let cfg = small_cfg();
        let mut store = setup(&cfg, 7, 2);
        store.get_mut("trk.cell.bz").fill(50.0);
        store.get_mut("trk.cell.wxz").fill(0.0);
        store.get_mut("trk.cell.whz").fill(0.0);
        store.get_mut("trk.cell.whc").fill(0.0);
        let mut t = Tape::new();
        let vars = into_tape(&store, &mut t);
        let mut rng = stream_rng(5, 0);
        let x = ArrayD::from_shape_simple_fn(IxDyn(&[3, 4]), || rng.gen_range(-1.0..1.0));
        let h = ArrayD::from_shape_simple_fn(IxDyn(&[3, 5]), || rng.gen_range(-1.0..1.0));
        let xv = t.leaf(x.clone());
        let hv = t.leaf(h.clone());
        let out = gru_cell(&mut t, &vars, "trk.cell", xv, hv);
        // oracle: h' = tanh(x·Wxc + bc) elementwise
        let wxc = store.get("trk.cell.wxc");
        let bc = store.get("trk.cell.bc");
        for i in 0..3 {
            for j in 0..5 {
                let mut pre = bc[[0, j]];
                for k in 0..4 {
                    pre += x[[i, k]] * wxc[[k, j]];
                }
                let want = pre.tanh();
                let got = t.value(out)[[i, j]];
                assert!((got - want).abs() < 1e-9, "({i},{j}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn bidir_pass_symmetric_under_reversal_with_swapped_cells() {
        let cfg = small_cfg();
        let mut store = setup(&cfg, 7, 3);
        let mut rng = stream_rng(6, 0);
        let h = ArrayD::from_shape_simple_fn(IxDyn(&[3, 5]), || rng.gen_range(-1.0..1.0));
        let run = |s: &ParamStore, input: &ArrayD<f64>| {
            let mut t = Tape::new();
            let vars = into_tape(s, &mut t);
            let hv = t.leaf(input.clone());
            let out = tracker_axis_bidir(&mut t, &vars, &cfg, hv);
            t.value(out).to_owned()
        };
        let reverse = |a: &ArrayD<f64>| {
            let mut r = a.clone();
            let n = a.shape()[0];
            for i in 0..n {
                r.index_axis_mut(Axis(0), i)
                    .assign(&a.index_axis(Axis(0), n - 1 - i));
            }
            r
        };
        let base = run(&store, &h);
        // swap forward/backward cell weights
        let fwd_names: Vec<String> = store
            .names()
            .filter(|n| n.starts_with("trk.fwd."))
            .cloned()
            .collect();
        for fname in fwd_names {
            let bname = fname.replace("trk.fwd.", "trk.bwd.");
            let fv = store.get(&fname).clone();
            let bv = store.get(&bname).clone();
            *store.get_mut(&fname) = bv;
            *store.get_mut(&bname) = fv;
        }
        let swapped = run(&store, &reverse(&h));
        // rows reversed; fwd/bwd halves exchanged
        let d_b = cfg.d_bidir;
        let rev_swapped = reverse(&swapped);
        for i in 0..3 {
            for j in 0..d_b {
                assert!((base[[i, j]] - rev_swapped[[i, d_b + j]]).abs() < 1e-12);
                assert!((base[[i, d_b + j]] - rev_swapped[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_latent_zero_weights_emits_activation_midpoints() {
        let cfg = small_cfg();
        let mut store = setup(&cfg, 7, 4);
        for (_, a) in store.iter_mut() {
            a.fill(0.0);
        }
        let mut t = Tape::new();
        let vars = into_tape(&store, &mut t);
        let state = init_states(&mut t, cfg.n_trackers, cfg.d_h);
        let outs = emit_outputs(&mut t, &vars, &cfg, state);
        assert_eq!(outs.len(), cfg.n_trackers);
        for o in &outs {
            assert!((t.scalar(o.confidence) - 0.5).abs() < 1e-12);
            let pose = t.value(o.pose);
            // sigmoid(0) = 0.5 mapped into [scale_min, scale_max]
            let mid_scale = cfg.scale_min + 0.5 * (cfg.scale_max - cfg.scale_min);
            assert!((pose[[0, 0]] - mid_scale).abs() < 1e-12);
            assert!((pose[[0, 1]] - mid_scale).abs() < 1e-12);
            assert_eq!(pose[[0, 2]], 0.0); // tanh(0)
            assert_eq!(pose[[0, 3]], 0.0);
            assert!(t.value(o.shape_mask).iter().all(|&v| (v - 0.5).abs() < 1e-12));
            assert!(t.value(o.appearance).iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn emission_is_permutation_equivariant() {
        let cfg = small_cfg();
        let store = setup(&cfg, 7, 8);
        let mut rng = stream_rng(9, 0);
        let h = ArrayD::from_shape_simple_fn(IxDyn(&[3, 5]), || rng.gen_range(-1.0..1.0));
        let emit = |input: &ArrayD<f64>| {
            let mut t = Tape::new();
            let vars = into_tape(&store, &mut t);
            let hv = t.leaf(input.clone());
            let outs = emit_outputs(&mut t, &vars, &cfg, TrackerState { h: hv, t: 0 });
            outs.iter()
                .map(|o| {
                    (
                        t.scalar(o.confidence),
                        t.value(o.pose).to_owned(),
                        t.value(o.shape_mask).to_owned(),
                    )
                })
                .collect::<Vec<_>>()
        };
        let base = emit(&h);
        let perm = [2usize, 0, 1];
        let mut hp = h.clone();
        for (dst, &src) in perm.iter().enumerate() {
            hp.index_axis_mut(Axis(0), dst).assign(&h.index_axis(Axis(0), src));
        }
        let permuted = emit(&hp);
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(base[src].0, permuted[dst].0);
            assert_eq!(base[src].1, permuted[dst].1);
            assert_eq!(base[src].2, permuted[dst].2);
        }
    }

    #[test]
    fn output_ranges_hold_on_random_latents() {
        let cfg = small_cfg();
        let store = setup(&cfg, 7, 10);
        let mut rng = stream_rng(11, 0);
        // 10^4 latents = 100 batches of 3 trackers × ~34 reps
        for _ in 0..3334 {
            let h = ArrayD::from_shape_simple_fn(IxDyn(&[3, 5]), || rng.gen_range(-50.0..50.0));
            let mut t = Tape::new();
            let vars = into_tape(&store, &mut t);
            let hv = t.leaf(h);
            let outs = emit_outputs(&mut t, &vars, &cfg, TrackerState { h: hv, t: 0 });
            for o in outs {
                let c = t.scalar(o.confidence);
                assert!((0.0..=1.0).contains(&c));
                let pose = t.value(o.pose);
                assert!(pose[[0, 0]] >= cfg.scale_min && pose[[0, 0]] <= cfg.scale_max);
                assert!(pose[[0, 1]] >= cfg.scale_min && pose[[0, 1]] <= cfg.scale_max);
                assert!(pose[[0, 2]].abs() <= 1.0 && pose[[0, 3]].abs() <= 1.0);
                assert!(t.value(o.shape_mask).iter().all(|&v| (0.0..=1.0).contains(&v)));
                assert!(t.value(o.appearance).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn update_then_emit_gradcheck() {
        let cfg = small_cfg();
        let store = setup(&cfg, 7, 12);
        let mut rng = stream_rng(13, 0);
        let tokens = ArrayD::from_shape_simple_fn(IxDyn(&[6, 7]), || rng.gen_range(-1.0..1.0));
        let h0 = ArrayD::from_shape_simple_fn(IxDyn(&[3, 5]), || rng.gen_range(-0.5..0.5));

        let eval = |s: &ParamStore| {
            let mut t = Tape::new();
            let vars = into_tape(s, &mut t);
            let hv = t.leaf(h0.clone());
            let tok = t.leaf(tokens.clone());
            let s1 = update_states(&mut t, &vars, &cfg, TrackerState { h: hv, t: 0 }, tok)
                .unwrap();
            let outs = emit_outputs(&mut t, &vars, &cfg, s1);
            // scalar objective mixing every output field
            let mut total = t.scalar(outs[0].confidence);
            for o in &outs {
                let ps = t.sum(o.pose);
                let ms = t.mean(o.shape_mask);
                let as_ = t.mean(o.appearance);
                total += t.scalar(ps) + t.scalar(ms) + t.scalar(as_);
            }
            total
        };

        let mut t = Tape::new();
        let vars = into_tape(&store, &mut t);
        let hv = t.leaf(h0.clone());
        let tok = t.leaf(tokens.clone());
        let s1 = update_states(&mut t, &vars, &cfg, TrackerState { h: hv, t: 0 }, tok).unwrap();
        let outs = emit_outputs(&mut t, &vars, &cfg, s1);
        let mut loss = outs[0].confidence;
        loss = t.reshape(loss, &[1]);
        let mut acc = t.sum(loss);
        for o in &outs {
            let ps = t.sum(o.pose);
            let ms = t.mean(o.shape_mask);
            let as_ = t.mean(o.appearance);
            let s1v = t.add(ps, ms);
            let s2v = t.add(s1v, as_);
            acc = t.add(acc, s2v);
        }
        let grads = t.backward(acc);

        let names: Vec<String> = store.names().cloned().collect();
        let mut rng2 = stream_rng(14, 0);
        let mut worst = 0.0f64;
        let mut checked = 0;
        while checked < 25 {
            let name = &names[rng2.gen_range(0..names.len())];
            let n = store.get(name).len();
            let idx = rng2.gen_range(0..n);
            let analytic = grads
                .get_or_zeros(vars[name], store.get(name).shape())
                .iter()
                .nth(idx)
                .copied()
                .unwrap();
            let mut s2 = store.clone();
            let x0 = s2.get(name).as_slice().unwrap()[idx];
            let hstep = 1e-5 * x0.abs().max(1.0);
            s2.get_mut(name).as_slice_mut().unwrap()[idx] = x0 + hstep;
            let fp = eval(&s2);
            s2.get_mut(name).as_slice_mut().unwrap()[idx] = x0 - hstep;
            let fm = eval(&s2);
            let numeric = (fp - fm) / (2.0 * hstep);
            worst = worst.max(rel_err_scalar(analytic, numeric));
            checked += 1;
        }
        assert!(worst < 1e-4, "rel err {worst}");
    }

    #[test]
    fn nonfinite_latents_reported_as_numeric_error() {
        let cfg = small_cfg();
        let mut store = setup(&cfg, 7, 15);
        store.get_mut("trk.mix.w").fill(f64::NAN);
        let mut t = Tape::new();
        let vars = into_tape(&store, &mut t);
        let s0 = init_states(&mut t, cfg.n_trackers, cfg.d_h);
        let tokens = t.leaf(ArrayD::zeros(IxDyn(&[10, 7])));
        let err = update_states(&mut t, &vars, &cfg, s0, tokens).unwrap_err();
        assert!(matches!(err, AttmotError::Numeric(_)));
    }
}
