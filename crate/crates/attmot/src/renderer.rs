//! Layered scene rendering: spatial-transformer placement of per-tracker
//! patches, tracker-to-layer assignment (K = 3), and iterative
//! over-compositing of the reconstruction.

use ndarray::{ArrayD, ArrayView2, IxDyn};

use crate::autodiff::{Tape, Var};
use crate::geometry::BoundingBox;
use crate::tracker::MidLevelOutput;

/// Number of compositing layers in the full pipeline.
pub const K_LAYERS: usize = 3;

/// A rendered layer: full-frame foreground and matte, both tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct Layer {
    pub fg: Var,
    pub mask: Var,
}

/// Warp one tracker's patches onto the canvas. The foreground is
/// mask ⊙ appearance (keeping fg ≤ mask pointwise), the matte is the mask
/// alone; both are gated by the tracker's confidence. Degenerate poses
/// (non-positive scale, or fully off-canvas) render an empty layer with a
/// warning instead of failing.
pub fn stn_warp(
    t: &mut Tape,
    out: &MidLevelOutput,
    canvas_h: usize,
    canvas_w: usize,
) -> Layer {
    let pv = t.value(out.pose).to_owned();
    let (sx, sy, tx, ty) = (pv[[0, 0]], pv[[0, 1]], pv[[0, 2]], pv[[0, 3]]);
    let off_canvas = tx.abs() >= 1.0 + sx || ty.abs() >= 1.0 + sy;
    if sx <= 0.0 || sy <= 0.0 || !pv.iter().all(|v| v.is_finite()) || off_canvas {
        eprintln!(
            "warning: degenerate pose (sx={sx:.4}, sy={sy:.4}, tx={tx:.4}, ty={ty:.4}); \
             rendering empty layer"
        );
        let zero_fg = t.leaf(ArrayD::zeros(IxDyn(&[canvas_h, canvas_w])));
        let zero_m = t.leaf(ArrayD::zeros(IxDyn(&[canvas_h, canvas_w])));
        return Layer {
            fg: zero_fg,
            mask: zero_m,
        };
    }
    let pose = t.reshape(out.pose, &[4]);
    let patch_fg = t.mul(out.shape_mask, out.appearance);
    let fg_raw = t.warp(patch_fg, pose, canvas_h, canvas_w);
    let m_raw = t.warp(out.shape_mask, pose, canvas_h, canvas_w);
    let fg = t.scale_by(fg_raw, out.confidence);
    let mask = t.scale_by(m_raw, out.confidence);
    Layer { fg, mask }
}

/// Layer index (1-based, in {1,2,3}) per tracker. Default rule i ↦ (i mod 3)
/// + 1; with learned logits present and `learned_eval` set, argmax instead.
pub fn assign_layers(t: &Tape, outputs: &[MidLevelOutput], learned_eval: bool) -> Vec<usize> {
    outputs
        .iter()
        .enumerate()
        .map(|(i, o)| match (learned_eval, o.layer_logits) {
            (true, Some(logits)) => {
                let lv = t.value(logits);
                let mut best = 0;
                for k in 1..K_LAYERS {
                    if lv[[0, k]] > lv[[0, best]] {
                        best = k;
                    }
                }
                best + 1
            }
            _ => (i % K_LAYERS) + 1,
        })
        .collect()
}

/// Over-composite one element onto an accumulating (fg, mask) pair:
/// fg' = (1 − m) ⊙ fg + f, m' = m + m_new − m ⊙ m_new (keeps masks in [0,1]
/// and fg ≤ mask whenever each input satisfies f ≤ m_new).
fn over(t: &mut Tape, acc: Layer, add: Layer) -> Layer {
    let keep = t.affine(add.mask, -1.0, 1.0);
    let kept_fg = t.mul(keep, acc.fg);
    let fg = t.add(kept_fg, add.fg);
    let kept_m = t.mul(keep, acc.mask);
    let mask = t.add(kept_m, add.mask);
    Layer { fg, mask }
}

/// Build the K-layer stack from per-tracker layers and their assignments.
/// Trackers sharing a layer are over-composited in tracker order.
pub fn build_stack(
    t: &mut Tape,
    per_tracker: &[Layer],
    assignment: &[usize],
    canvas_h: usize,
    canvas_w: usize,
) -> Vec<Layer> {
    assert_eq!(per_tracker.len(), assignment.len());
    let mut stack = Vec::with_capacity(K_LAYERS);
    for k in 1..=K_LAYERS {
        let mut acc = {
            let fg = t.leaf(ArrayD::zeros(IxDyn(&[canvas_h, canvas_w])));
            let mask = t.leaf(ArrayD::zeros(IxDyn(&[canvas_h, canvas_w])));
            Layer { fg, mask }
        };
        for (layer, &a) in per_tracker.iter().zip(assignment) {
            if a == k {
                acc = over(t, acc, *layer);
            }
        }
        stack.push(acc);
    }
    stack
}

/// Iterative over-compositing from the background through the stack:
/// X^(k) = (1 − m_k) ⊙ X^(k−1) + fg_k. Default output is the final X^(K);
/// `literal_sum` returns Σ_k X^(k) instead.
pub fn composite(t: &mut Tape, stack: &[Layer], background: Var, literal_sum: bool) -> Var {
    let mut x = background;
    let mut partials = Vec::with_capacity(stack.len());
    for layer in stack {
        let keep = t.affine(layer.mask, -1.0, 1.0);
        let kept = t.mul(keep, x);
        x = t.add(kept, layer.fg);
        partials.push(x);
    }
    if literal_sum {
        let mut total = partials[0];
        for &p in &partials[1..] {
            total = t.add(total, p);
        }
        total
    } else {
        x
    }
}

/// Render a full frame from tracker outputs. `learned_eval` controls layer
/// assignment (see [`assign_layers`]).
pub fn render_frame(
    t: &mut Tape,
    outputs: &[MidLevelOutput],
    canvas_h: usize,
    canvas_w: usize,
    literal_sum: bool,
    learned_eval: bool,
) -> Var {
    let per_tracker: Vec<Layer> = outputs
        .iter()
        .map(|o| stn_warp(t, o, canvas_h, canvas_w))
        .collect();
    let assignment = assign_layers(t, outputs, learned_eval);
    let stack = build_stack(t, &per_tracker, &assignment, canvas_h, canvas_w);
    let bg = t.leaf(ArrayD::zeros(IxDyn(&[canvas_h, canvas_w])));
    composite(t, &stack, bg, literal_sum)
}

/// Pixel-space bounding box implied by a pose and its shape mask on an H×W
/// canvas. The box is tightened to the mask's ≥ 0.5 support; a patch with no
/// such support falls back to the full patch extent. Returns None when the
/// pose is degenerate or lands entirely off-canvas.
pub fn pose_to_box(
    pose: [f64; 4],
    mask: &ArrayView2<'_, f64>,
    canvas_h: usize,
    canvas_w: usize,
) -> Option<BoundingBox> {
    let [sx, sy, tx, ty] = pose;
    if !(sx > 0.0 && sy > 0.0) || !pose.iter().all(|v| v.is_finite()) {
        return None;
    }
    let (pr, pc) = mask.dim();
    // mask support extent in patch pixel coordinates
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for r in 0..pr {
        for c in 0..pc {
            if mask[[r, c]] >= 0.5 {
                bounds = Some(match bounds {
                    None => (r, r, c, c),
                    Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                });
            }
        }
    }
    let (r0, r1, c0, c1) = bounds.unwrap_or((0, pr - 1, 0, pc - 1));
    let to_norm = |i: usize, n: usize| {
        if n > 1 {
            2.0 * i as f64 / (n - 1) as f64 - 1.0
        } else {
            0.0
        }
    };
    let to_px = |xn: f64, n: usize| (xn + 1.0) * 0.5 * (n - 1) as f64;
    let x_min = to_px(tx + sx * to_norm(c0, pc), canvas_w);
    let x_max = to_px(tx + sx * to_norm(c1, pc), canvas_w);
    let y_min = to_px(ty + sy * to_norm(r0, pr), canvas_h);
    let y_max = to_px(ty + sy * to_norm(r1, pr), canvas_h);
    if x_max < 0.0 || y_max < 0.0 || x_min > (canvas_w - 1) as f64 || y_min > (canvas_h - 1) as f64
    {
        return None;
    }
    Some(BoundingBox {
        cx: (x_min + x_max) / 2.0,
        cy: (y_min + y_max) / 2.0,
        w: x_max - x_min + 1.0,
        h: y_max - y_min + 1.0,
    })
}
