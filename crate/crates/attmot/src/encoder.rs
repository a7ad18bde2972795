//! Frame encoder: residual convolutional backbone, single-head spatial
//! attention over feature-map tokens, and a U-Net refining the attention map
//! into the feature code consumed by the trackers.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{AttmotError, Result};
use crate::params::{fan_in_uniform, orthogonal, ParamStore};

pub type VarMap = BTreeMap<String, Var>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Backbone channel progression across stride-2 stages.
    pub channels: (usize, usize, usize),
    /// Total backbone downsampling: 2, 4 or 8.
    pub stride: usize,
    /// Attention key/query width.
    pub d_k: usize,
    /// Attention value (and attention-map) channels.
    pub attn_channels: usize,
    /// false runs the no-attention ablation: the feature map feeds the U-Net
    /// directly.
    pub attention: bool,
    /// Row-wise softmax over attention scores (the literal unnormalized form
    /// stays available for comparison).
    pub attn_softmax: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: (8, 16, 32),
            stride: 8,
            d_k: 32,
            attn_channels: 32,
            attention: true,
            attn_softmax: true,
        }
    }
}

/// U-Net channel sizes along the contracting/expanding path.
pub const UNET_CHANNELS: [usize; 5] = [32, 64, 128, 64, 32];

impl EncoderConfig {
    pub fn backbone_out_channels(&self) -> usize {
        match self.stride {
            2 => self.channels.0,
            4 => self.channels.1,
            _ => self.channels.2,
        }
    }

    pub fn code_channels(&self) -> usize {
        UNET_CHANNELS[4]
    }

    pub fn validate(&self, frame_h: usize, frame_w: usize) -> Result<()> {
        if ![2, 4, 8].contains(&self.stride) {
            return Err(AttmotError::validation("encoder stride must be 2, 4 or 8"));
        }
        if frame_h % self.stride != 0 || frame_w % self.stride != 0 {
            return Err(AttmotError::validation(format!(
                "frame {frame_h}x{frame_w} not divisible by backbone stride {}",
                self.stride
            )));
        }
        let (mh, mw) = (frame_h / self.stride, frame_w / self.stride);
        if mh % 4 != 0 || mw % 4 != 0 {
            return Err(AttmotError::validation(format!(
                "feature map {mh}x{mw} not divisible by the U-Net pooling factor 4"
            )));
        }
        Ok(())
    }
}

fn conv_params<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    co: usize,
    ci: usize,
    k: usize,
    rng: &mut R,
) {
    store.insert(
        &format!("{name}.w"),
        fan_in_uniform(&[co, ci, k, k], ci * k * k, rng),
    );
    store.insert(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[co])));
}

fn proj_params<R: Rng>(store: &mut ParamStore, name: &str, ci: usize, co: usize, rng: &mut R) {
    store.insert(&format!("{name}.w"), orthogonal(ci, co, rng));
    store.insert(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[1, co])));
}

/// Register all encoder parameters under the `enc.` prefix.
pub fn register_params<R: Rng>(cfg: &EncoderConfig, store: &mut ParamStore, rng: &mut R) {
    let (c1, c2, c3) = cfg.channels;
    conv_params(store, "enc.stem", c1, 1, 3, rng);
    conv_params(store, "enc.res1.a", c1, c1, 3, rng);
    conv_params(store, "enc.res1.b", c1, c1, 3, rng);
    if cfg.stride >= 4 {
        conv_params(store, "enc.down2", c2, c1, 3, rng);
        conv_params(store, "enc.res2.a", c2, c2, 3, rng);
        conv_params(store, "enc.res2.b", c2, c2, 3, rng);
    }
    if cfg.stride >= 8 {
        conv_params(store, "enc.down3", c3, c2, 3, rng);
        conv_params(store, "enc.res3.a", c3, c3, 3, rng);
        conv_params(store, "enc.res3.b", c3, c3, 3, rng);
    }
    let c_out = cfg.backbone_out_channels();
    conv_params(store, "enc.res4.a", c_out, c_out, 3, rng);
    conv_params(store, "enc.res4.b", c_out, c_out, 3, rng);

    proj_params(store, "enc.q", c_out, cfg.d_k, rng);
    proj_params(store, "enc.k", c_out, cfg.d_k, rng);
    proj_params(store, "enc.v", c_out, cfg.attn_channels, rng);

    let unet_in = if cfg.attention { cfg.attn_channels } else { c_out };
    conv_params(store, "enc.u.e1", UNET_CHANNELS[0], unet_in, 3, rng);
    conv_params(store, "enc.u.e2", UNET_CHANNELS[1], UNET_CHANNELS[0], 3, rng);
    conv_params(store, "enc.u.bott", UNET_CHANNELS[2], UNET_CHANNELS[1], 3, rng);
    conv_params(
        store,
        "enc.u.d2",
        UNET_CHANNELS[3],
        UNET_CHANNELS[2] + UNET_CHANNELS[1],
        3,
        rng,
    );
    conv_params(
        store,
        "enc.u.d1",
        UNET_CHANNELS[4],
        UNET_CHANNELS[3] + UNET_CHANNELS[0],
        3,
        rng,
    );
}

fn conv(t: &mut Tape, vars: &VarMap, name: &str, x: Var, stride: usize) -> Var {
    t.conv2d(x, vars[&format!("{name}.w")], vars[&format!("{name}.b")], stride, 1)
}

fn res_block(t: &mut Tape, vars: &VarMap, name: &str, x: Var) -> Var {
    let a = conv(t, vars, &format!("{name}.a"), x, 1);
    let a = t.relu(a);
    let b = conv(t, vars, &format!("{name}.b"), a, 1);
    let s = t.add(x, b);
    t.relu(s)
}

/// Backbone features `m_t` from a 1×H×W frame node.
pub fn backbone_features(t: &mut Tape, vars: &VarMap, cfg: &EncoderConfig, frame: Var) -> Var {
    let x = conv(t, vars, "enc.stem", frame, 2);
    let mut x = t.relu(x);
    x = res_block(t, vars, "enc.res1", x);
    if cfg.stride >= 4 {
        let d = conv(t, vars, "enc.down2", x, 2);
        x = t.relu(d);
        x = res_block(t, vars, "enc.res2", x);
    }
    if cfg.stride >= 8 {
        let d = conv(t, vars, "enc.down3", x, 2);
        x = t.relu(d);
        x = res_block(t, vars, "enc.res3", x);
    }
    res_block(t, vars, "enc.res4", x)
}

/// Flatten a C×H×W map into (H·W)×C tokens.
pub fn to_tokens(t: &mut Tape, m: Var) -> Var {
    let shape = t.shape(m).to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let flat = t.reshape(m, &[c, h * w]);
    t.transpose(flat)
}

/// Inverse of [`to_tokens`].
pub fn from_tokens(t: &mut Tape, tokens: Var, c: usize, h: usize, w: usize) -> Var {
    let back = t.transpose(tokens);
    t.reshape(back, &[c, h, w])
}

/// 1×1 projections of the feature map into query/key/value token matrices.
pub fn qkv_project(t: &mut Tape, vars: &VarMap, m: Var) -> (Var, Var, Var) {
    let tokens = to_tokens(t, m);
    let q = t.linear(tokens, vars["enc.q.w"], vars["enc.q.b"]);
    let k = t.linear(tokens, vars["enc.k.w"], vars["enc.k.b"]);
    let v = t.linear(tokens, vars["enc.v.w"], vars["enc.v.b"]);
    (q, k, v)
}

/// Scaled dot-product attention over spatial tokens. Scores are
/// `q kᵀ / sqrt(d_k)`; with `softmax` on, rows are normalized over keys.
pub fn attention(t: &mut Tape, q: Var, k: Var, v: Var, softmax: bool) -> Result<Var> {
    let d_k = t.shape(q)[1];
    let kt = t.transpose(k);
    let raw = t.matmul(q, kt);
    let scores = t.scale(raw, 1.0 / (d_k as f64).sqrt());
    if !t.value(scores).iter().all(|x| x.is_finite()) {
        return Err(AttmotError::numeric(
            "non-finite attention scores (q·kᵀ overflow); inspect parameter scale",
        ));
    }
    let weights = if softmax { t.softmax_rows(scores) } else { scores };
    Ok(t.matmul(weights, v))
}

/// Two-pool U-Net with skip connections; channels follow [`UNET_CHANNELS`].
pub fn unet_encode(t: &mut Tape, vars: &VarMap, a: Var) -> Result<Var> {
    let shape = t.shape(a).to_vec();
    let (h, w) = (shape[1], shape[2]);
    if h % 4 != 0 || w % 4 != 0 {
        return Err(AttmotError::validation(format!(
            "U-Net input {h}x{w} not divisible by pooling factor 4"
        )));
    }
    let e1 = conv(t, vars, "enc.u.e1", a, 1);
    let e1 = t.relu(e1); // 32 @ H
    let p1 = t.maxpool2(e1);
    let e2 = conv(t, vars, "enc.u.e2", p1, 1);
    let e2 = t.relu(e2); // 64 @ H/2
    let p2 = t.maxpool2(e2);
    let bott = conv(t, vars, "enc.u.bott", p2, 1);
    let bott = t.relu(bott); // 128 @ H/4

    let u2 = t.upsample2(bott);
    let cat2 = t.concat0(&[u2, e2]); // 128+64 @ H/2
    let d2 = conv(t, vars, "enc.u.d2", cat2, 1);
    let d2 = t.relu(d2); // 64 @ H/2
    let u1 = t.upsample2(d2);
    let cat1 = t.concat0(&[u1, e1]); // 64+32 @ H
    let d1 = conv(t, vars, "enc.u.d1", cat1, 1);
    Ok(t.relu(d1)) // 32 @ H
}

/// Full encoder: frame (1×H×W node) -> feature code C_u×H'×W'.
pub fn encode_frame(
    t: &mut Tape,
    vars: &VarMap,
    cfg: &EncoderConfig,
    frame: Var,
) -> Result<Var> {
    let shape = t.shape(frame).to_vec();
    cfg.validate(shape[1], shape[2])?;
    let m = backbone_features(t, vars, cfg, frame);
    let mshape = t.shape(m).to_vec();
    let (mh, mw) = (mshape[1], mshape[2]);
    let unet_in = if cfg.attention {
        let (q, k, v) = qkv_project(t, vars, m);
        let a = attention(t, q, k, v, cfg.attn_softmax)?;
        from_tokens(t, a, cfg.attn_channels, mh, mw)
    } else {
        m
    };
    unet_encode(t, vars, unet_in)
}
