//! Run configuration: flat key-value text format with typed, all-at-once
//! validation, plus the mapping onto model/encoder/tracker configs.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{AttmotError, Result};
use crate::tracker::{BidirAxis, TrackerConfig};

/// Encoder ablation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Full model with spatial attention.
    Attunet,
    /// Attention bypassed; backbone features feed the U-Net directly.
    Resunet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Training dataset container directory.
    pub dataset: String,
    pub n_trackers: usize,
    /// Tightness coefficient λ.
    pub lambda: f64,
    pub lr: f64,
    pub steps: usize,
    /// Subsequences per optimizer step.
    pub batch: usize,
    pub seed: u64,
    /// β for the noisy-training protocol; 0 trains clean.
    pub noise_train_beta: f64,
    pub attn_softmax: bool,
    pub bidir_axis: BidirAxis,
    pub literal_sum: bool,
    pub ablation: Ablation,
    /// Truncated-backpropagation subsequence length.
    pub bptt: usize,
    /// Patch side for mask/appearance.
    pub patch: usize,
    pub checkpoint_every: usize,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "data/train".to_string(),
            n_trackers: 4,
            lambda: 0.0005,
            lr: 5e-4,
            steps: 20_000,
            batch: 1,
            seed: 0,
            noise_train_beta: 0.0,
            attn_softmax: true,
            bidir_axis: BidirAxis::Trackers,
            literal_sum: false,
            ablation: Ablation::Attunet,
            bptt: 10,
            patch: 21,
            checkpoint_every: 2_000,
            grad_clip: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.dataset.is_empty() {
            errs.push("dataset: must not be empty".into());
        }
        if self.n_trackers < 1 {
            errs.push("n_trackers: must be >= 1".into());
        }
        if !(self.lambda >= 0.0) {
            errs.push(format!("lambda: must be >= 0, got {}", self.lambda));
        }
        // lr = 0 is allowed: it freezes parameters, useful for dry runs
        if !(self.lr >= 0.0) {
            errs.push(format!("lr: must be >= 0, got {}", self.lr));
        }
        if self.batch < 1 {
            errs.push("batch: must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise_train_beta) {
            errs.push(format!(
                "noise_train_beta: must be in [0, 1], got {}",
                self.noise_train_beta
            ));
        }
        if self.bptt < 2 {
            errs.push("bptt: must be >= 2".into());
        }
        if self.patch < 3 {
            errs.push("patch: must be >= 3".into());
        }
        if self.checkpoint_every < 1 {
            errs.push("checkpoint_every: must be >= 1".into());
        }
        if !(self.grad_clip > 0.0) {
            errs.push(format!("grad_clip: must be > 0, got {}", self.grad_clip));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(AttmotError::validation(errs.join("; ")))
        }
    }

    /// Parse the flat `key = value` text form. Unknown keys, malformed
    /// values, and semantic violations are all reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errs: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errs.push(format!("line {}: expected 'key = value'", lineno + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let mut bad =
                |what: &str| errs.push(format!("line {}: {key}: expected {what}, got '{value}'", lineno + 1));
            match key {
                "dataset" => cfg.dataset = value.to_string(),
                "n_trackers" => match value.parse() {
                    Ok(v) => cfg.n_trackers = v,
                    Err(_) => bad("integer"),
                },
                "lambda" => match value.parse() {
                    Ok(v) => cfg.lambda = v,
                    Err(_) => bad("number"),
                },
                "lr" => match value.parse() {
                    Ok(v) => cfg.lr = v,
                    Err(_) => bad("number"),
                },
                "steps" => match value.parse() {
                    Ok(v) => cfg.steps = v,
                    Err(_) => bad("integer"),
                },
                "batch" => match value.parse() {
                    Ok(v) => cfg.batch = v,
                    Err(_) => bad("integer"),
                },
                "seed" => match value.parse() {
                    Ok(v) => cfg.seed = v,
                    Err(_) => bad("integer"),
                },
                "noise_train_beta" => match value.parse() {
                    Ok(v) => cfg.noise_train_beta = v,
                    Err(_) => bad("number"),
                },
                "attn_softmax" => match value.parse() {
                    Ok(v) => cfg.attn_softmax = v,
                    Err(_) => bad("true|false"),
                },
                "bidir_axis" => match value {
                    "trackers" => cfg.bidir_axis = BidirAxis::Trackers,
                    "time" => cfg.bidir_axis = BidirAxis::Time,
                    _ => bad("trackers|time"),
                },
                "literal_sum" => match value.parse() {
                    Ok(v) => cfg.literal_sum = v,
                    Err(_) => bad("true|false"),
                },
                "ablation" => match value {
                    "attunet" => cfg.ablation = Ablation::Attunet,
                    "resunet" => cfg.ablation = Ablation::Resunet,
                    _ => bad("attunet|resunet"),
                },
                "bptt" => match value.parse() {
                    Ok(v) => cfg.bptt = v,
                    Err(_) => bad("integer"),
                },
                "patch" => match value.parse() {
                    Ok(v) => cfg.patch = v,
                    Err(_) => bad("integer"),
                },
                "checkpoint_every" => match value.parse() {
                    Ok(v) => cfg.checkpoint_every = v,
                    Err(_) => bad("integer"),
                },
                "grad_clip" => match value.parse() {
                    Ok(v) => cfg.grad_clip = v,
                    Err(_) => bad("number"),
                },
                _ => errs.push(format!("line {}: unknown key '{key}'", lineno + 1)),
            }
        }
        if let Err(AttmotError::Validation(msg)) = cfg.validate() {
            errs.push(msg);
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(AttmotError::validation(errs.join("; ")))
        }
    }

    /// Serialize back to the key-value text form (round-trips with `parse`).
    pub fn to_text(&self) -> String {
        let axis = match self.bidir_axis {
            BidirAxis::Trackers => "trackers",
            BidirAxis::Time => "time",
        };
        let ablation = match self.ablation {
            Ablation::Attunet => "attunet",
            Ablation::Resunet => "resunet",
        };
        format!(
            "dataset = {}\nn_trackers = {}\nlambda = {}\nlr = {}\nsteps = {}\nbatch = {}\n\
             seed = {}\nnoise_train_beta = {}\nattn_softmax = {}\nbidir_axis = {axis}\n\
             literal_sum = {}\nablation = {ablation}\nbptt = {}\npatch = {}\n\
             checkpoint_every = {}\ngrad_clip = {}\n",
            self.dataset,
            self.n_trackers,
            self.lambda,
            self.lr,
            self.steps,
            self.batch,
            self.seed,
            self.noise_train_beta,
            self.attn_softmax,
            self.literal_sum,
            self.bptt,
            self.patch,
            self.checkpoint_every,
            self.grad_clip,
        )
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            attention: self.ablation == Ablation::Attunet,
            attn_softmax: self.attn_softmax,
            ..Default::default()
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            n_trackers: self.n_trackers,
            patch: self.patch,
            bidir_axis: self.bidir_axis,
            ..Default::default()
        }
    }
}
