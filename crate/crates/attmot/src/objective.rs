//! Training objective (reconstruction error plus a bounding-box tightness
//! penalty) and the optimization loop: adaptive-moment updates, gradient
//! clipping, CSV logging, checkpointing, and the noisy-training protocol.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::config::RunConfig;
use crate::dataset::container::{load_sequence, write_atomic};
use crate::dataset::corrupt::{inject_noise, NoiseSpec};
use crate::encoder::VarMap;
use crate::error::{AttmotError, Result};
use crate::model::{forward_sequence, init_params, load_vars, ModelConfig};
use crate::params::{load_archive, save_archive, ParamStore};
use crate::rng::{stream_rng, STREAM_TRAIN};
use crate::tracker::MidLevelOutput;

/// One evaluated loss with its decomposition. `total = mse + lambda ·
/// tightness` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub tightness: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Loss for one frame: mean squared pixel error plus λ · (1/I) Σ_i
/// (s^x_i + s^y_i). Returns the differentiable total and its breakdown.
pub fn frame_loss(
    t: &mut Tape,
    target: Var,
    recon: Var,
    outputs: &[MidLevelOutput],
    lambda: f64,
) -> Result<(Var, LossBreakdown)> {
    if t.shape(target) != t.shape(recon) {
        return Err(AttmotError::validation(format!(
            "loss shape mismatch: target {:?} vs reconstruction {:?}",
            t.shape(target),
            t.shape(recon)
        )));
    }
    let mse = t.mse(target, recon);
    let mut scale_sum: Option<Var> = None;
    for o in outputs {
        let scales = t.slice(o.pose, 1, 0, 2);
        let s = t.sum(scales);
        scale_sum = Some(match scale_sum {
            None => s,
            Some(acc) => t.add(acc, s),
        });
    }
    let tightness = {
        let raw = scale_sum.expect("frame_loss: at least one tracker");
        t.scale(raw, 1.0 / outputs.len() as f64)
    };
    let scaled = t.scale(tightness, lambda);
    let total = t.add(mse, scaled);
    let breakdown = LossBreakdown {
        mse: t.scalar(mse),
        tightness: t.scalar(tightness),
        total: t.scalar(total),
        lambda,
    };
    Ok((total, breakdown))
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: usize,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update. Gradients are first rescaled so their global L2
    /// norm does not exceed `clip`.
    pub fn apply(
        &mut self,
        store: &mut ParamStore,
        grads: &BTreeMap<String, ArrayD<f64>>,
        clip: f64,
    ) {
        let norm: f64 = grads
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let g = g * scale;
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            *m = &*m * self.beta1 + &g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &(&g * &g) * (1.0 - self.beta2);
            let p = store.get_mut(name);
            ndarray::Zip::from(&mut *p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }

    /// Serialize optimizer state as a named-array archive.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut s = ParamStore::new();
        for (n, a) in &self.m {
            s.insert(&format!("m.{n}"), a.clone());
        }
        for (n, a) in &self.v {
            s.insert(&format!("v.{n}"), a.clone());
        }
        s.insert("step", ArrayD::from_elem(IxDyn(&[1]), self.step as f64));
        save_archive(&s, dir)
    }

    pub fn load(dir: &Path, lr: f64) -> Result<Self> {
        let s = load_archive(dir)?;
        let mut opt = Adam::new(lr);
        opt.step = s.get("step")[[0]] as usize;
        for (name, a) in s.iter() {
            if let Some(n) = name.strip_prefix("m.") {
                opt.m.insert(n.to_string(), a.clone());
            } else if let Some(n) = name.strip_prefix("v.") {
                opt.v.insert(n.to_string(), a.clone());
            }
        }
        Ok(opt)
    }
}

/// Gradients of all named parameters for one loss node.
pub fn param_grads(
    t: &Tape,
    vars: &VarMap,
    store: &ParamStore,
    loss: Var,
) -> BTreeMap<String, ArrayD<f64>> {
    let grads = t.backward(loss);
    store
        .iter()
        .map(|(name, arr)| {
            let g = grads.get_or_zeros(vars[name], arr.shape());
            (name.clone(), g)
        })
        .collect()
}

/// Outcome of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps_done: usize,
    /// Mean total loss per nominal epoch (one epoch ≈ one pass over the
    /// sequence in bptt-length chunks).
    pub epoch_means: Vec<f64>,
    pub final_loss: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Full training loop. Layout under `out_dir`: `train_log.csv`,
/// `checkpoint/` (+ `optimizer/`), `checkpoint-lastgood/` on divergence,
/// `config.txt` echo, `summary.json`.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let seq = load_sequence(Path::new(&cfg.dataset))?;
    let (n_frames, h, w) = seq.frames.dim();
    if n_frames < cfg.bptt {
        return Err(AttmotError::validation(format!(
            "dataset has {n_frames} frames, shorter than bptt {}",
            cfg.bptt
        )));
    }
    let model_cfg = ModelConfig {
        encoder: cfg.encoder_config(),
        tracker: cfg.tracker_config(),
        literal_sum: cfg.literal_sum,
    };
    model_cfg.validate(h, w)?;

    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("config.txt"), cfg.to_text().as_bytes())?;

    let ckpt_dir = out_dir.join("checkpoint");
    let opt_dir = out_dir.join("optimizer");
    let (mut store, mut opt, start_step) = if ckpt_dir.join("manifest.json").exists() {
        let store = load_archive(&ckpt_dir)?;
        let opt = Adam::load(&opt_dir, cfg.lr)?;
        let start = opt.step;
        eprintln!("resuming from checkpoint at step {start}");
        (store, opt, start)
    } else {
        (init_params(&model_cfg, cfg.seed), Adam::new(cfg.lr), 0)
    };

    let log_path = out_dir.join("train_log.csv");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    if start_step == 0 {
        writeln!(log, "step,mse,tightness,total,wall_time")?;
    }

    let epoch_len = (n_frames / cfg.bptt).max(1);
    let mut rng = stream_rng(cfg.seed, STREAM_TRAIN);
    // replay the sampling stream up to the resume point
    for _ in 0..start_step * cfg.batch {
        let _: usize = rng.gen_range(0..=n_frames - cfg.bptt);
        let _: u64 = rng.gen();
    }

    let start_time = Instant::now();
    let mut epoch_means: Vec<f64> = Vec::new();
    let mut epoch_losses: Vec<f64> = Vec::new();
    let mut last_good: Option<(ParamStore, Adam)> = None;
    let mut final_loss = f64::NAN;

    for step in start_step..cfg.steps {
        let mut grad_acc: BTreeMap<String, ArrayD<f64>> = BTreeMap::new();
        let mut step_mse = 0.0;
        let mut step_tight = 0.0;
        let mut step_total = 0.0;
        for _ in 0..cfg.batch {
            let start = rng.gen_range(0..=n_frames - cfg.bptt);
            let noise_seed: u64 = rng.gen();
            let chunk = seq
                .frames
                .slice(ndarray::s![start..start + cfg.bptt, .., ..])
                .to_owned();
            // noisy protocol: the corrupted frames are both input and target
            let chunk = if cfg.noise_train_beta > 0.0 {
                inject_noise(&chunk, &NoiseSpec::new(cfg.noise_train_beta, noise_seed))?
            } else {
                chunk
            };
            let mut t = Tape::new();
            let vars = load_vars(&mut t, &store);
            let fwd = forward_sequence(&mut t, &vars, &model_cfg, &chunk.view(), None)?;
            let mut total: Option<Var> = None;
            let mut mse_sum = 0.0;
            let mut tight_sum = 0.0;
            for ti in 0..cfg.bptt {
                let target = t.leaf(
                    chunk
                        .index_axis(ndarray::Axis(0), ti)
                        .to_owned()
                        .into_dyn(),
                );
                let (l, b) =
                    frame_loss(&mut t, target, fwd.recons[ti], &fwd.outputs[ti], cfg.lambda)?;
                mse_sum += b.mse;
                tight_sum += b.tightness;
                total = Some(match total {
                    None => l,
                    Some(acc) => t.add(acc, l),
                });
            }
            let total = total.unwrap();
            let loss = t.scale(total, 1.0 / cfg.bptt as f64);
            let loss_val = t.scalar(loss);
            if !loss_val.is_finite() {
                if let Some((ps, os)) = last_good.take() {
                    save_archive(&ps, &out_dir.join("checkpoint-lastgood"))?;
                    os.save(&out_dir.join("optimizer-lastgood"))?;
                }
                return Err(AttmotError::numeric(format!(
                    "training diverged at step {step}: non-finite loss; \
                     last-good checkpoint written"
                )));
            }
            step_mse += mse_sum / cfg.bptt as f64;
            step_tight += tight_sum / cfg.bptt as f64;
            step_total += loss_val;
            for (name, g) in param_grads(&t, &vars, &store, loss) {
                grad_acc
                    .entry(name)
                    .and_modify(|acc| *acc += &g)
                    .or_insert(g);
            }
        }
        let bf = cfg.batch as f64;
        step_mse /= bf;
        step_tight /= bf;
        step_total /= bf;
        if cfg.batch > 1 {
            for g in grad_acc.values_mut() {
                *g /= bf;
            }
        }

        last_good = Some((store.clone(), opt.clone()));
        opt.apply(&mut store, &grad_acc, cfg.grad_clip);
        final_loss = step_total;

        writeln!(
            log,
            "{},{:.8},{:.8},{:.8},{:.3}",
            step + 1,
            step_mse,
            step_tight,
            step_total,
            start_time.elapsed().as_secs_f64()
        )?;
        epoch_losses.push(step_total);
        if epoch_losses.len() == epoch_len {
            epoch_means.push(mean(&epoch_losses));
            epoch_losses.clear();
        }

        if (step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.steps {
            save_archive(&store, &ckpt_dir)?;
            opt.save(&opt_dir)?;
        }
    }
    if cfg.steps == 0 || start_step >= cfg.steps {
        // still materialize a checkpoint so `--steps 0` equals initialization
        save_archive(&store, &ckpt_dir)?;
        opt.save(&opt_dir)?;
    }
    if !epoch_losses.is_empty() {
        epoch_means.push(mean(&epoch_losses));
    }

    let summary = TrainSummary {
        steps_done: cfg.steps.saturating_sub(start_step),
        epoch_means,
        final_loss,
    };
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(summary)
}
