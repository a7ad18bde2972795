//! Differentiable affine patch placement (spatial-transformer style).
//!
//! The output canvas is addressed in normalized coordinates [-1, 1]; a patch
//! with pose (sx, sy, tx, ty) occupies the axis-aligned region centered at
//! (tx, ty) with half-extents (sx, sy). Each output pixel is inverse-mapped
//! into patch coordinates and bilinearly sampled with zero padding.

use ndarray::{Array2, ArrayD, ArrayView2, Ix1, Ix2, IxDyn};

use super::{Tape, Var};

#[inline]
fn norm_coord(i: usize, n: usize) -> f64 {
    if n > 1 {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    } else {
        0.0
    }
}

#[inline]
fn tap(p: &ArrayView2<'_, f64>, r: isize, c: isize) -> f64 {
    let (pr, pc) = p.dim();
    if r >= 0 && c >= 0 && (r as usize) < pr && (c as usize) < pc {
        p[[r as usize, c as usize]]
    } else {
        0.0
    }
}

/// Plain forward warp (no tape) for evaluation-time rendering.
pub fn warp_forward(
    patch: &ArrayView2<'_, f64>,
    pose: [f64; 4],
    out_h: usize,
    out_w: usize,
) -> Array2<f64> {
    let [sx, sy, tx, ty] = pose;
    let (pr, pc) = patch.dim();
    let mut out = Array2::<f64>::zeros((out_h, out_w));
    for y in 0..out_h {
        let vn = (norm_coord(y, out_h) - ty) / sy;
        let v = (vn + 1.0) * 0.5 * (pr - 1) as f64;
        let v0 = v.floor();
        let fv = v - v0;
        for x in 0..out_w {
            let un = (norm_coord(x, out_w) - tx) / sx;
            let u = (un + 1.0) * 0.5 * (pc - 1) as f64;
            let u0 = u.floor();
            let fu = u - u0;
            let (r0, c0) = (v0 as isize, u0 as isize);
            out[[y, x]] = (1.0 - fv) * (1.0 - fu) * tap(patch, r0, c0)
                + (1.0 - fv) * fu * tap(patch, r0, c0 + 1)
                + fv * (1.0 - fu) * tap(patch, r0 + 1, c0)
                + fv * fu * tap(patch, r0 + 1, c0 + 1);
        }
    }
    out
}

impl Tape {
    /// Warp a patch node (Pr×Pc) onto an out_h×out_w canvas under a pose node
    /// of shape [4] = [sx, sy, tx, ty]. Differentiable in both patch and pose.
    pub fn warp(&mut self, patch: Var, pose: Var, out_h: usize, out_w: usize) -> Var {
        let vp = self.vals[patch.0].clone();
        let vq = self.vals[pose.0].clone();
        let p2 = vp.view().into_dimensionality::<Ix2>().expect("warp: patch is 2-d");
        let q1 = vq.view().into_dimensionality::<Ix1>().expect("warp: pose is [4]");
        assert_eq!(q1.len(), 4, "warp: pose is [sx, sy, tx, ty]");
        let (sx, sy, tx, ty) = (q1[0], q1[1], q1[2], q1[3]);
        assert!(sx > 0.0 && sy > 0.0, "warp: non-positive scale");
        let out = warp_forward(&p2, [sx, sy, tx, ty], out_h, out_w);
        let (pr, pc) = p2.dim();

        self.push(
            out.into_dyn().into_shared(),
            Some(Box::new(move |g, grads| {
                let p2 = vp.view().into_dimensionality::<Ix2>().unwrap();
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut dpatch = Array2::<f64>::zeros((pr, pc));
                let mut dpose = [0.0f64; 4];
                let half_u = 0.5 * (pc - 1) as f64;
                let half_v = 0.5 * (pr - 1) as f64;
                for y in 0..out_h {
                    let vn = (norm_coord(y, out_h) - ty) / sy;
                    let v = (vn + 1.0) * half_v;
                    let v0 = v.floor();
                    let fv = v - v0;
                    for x in 0..out_w {
                        let go = g2[[y, x]];
                        if go == 0.0 {
                            continue;
                        }
                        let un = (norm_coord(x, out_w) - tx) / sx;
                        let u = (un + 1.0) * half_u;
                        let u0 = u.floor();
                        let fu = u - u0;
                        let (r0, c0) = (v0 as isize, u0 as isize);
                        let w00 = (1.0 - fv) * (1.0 - fu);
                        let w01 = (1.0 - fv) * fu;
                        let w10 = fv * (1.0 - fu);
                        let w11 = fv * fu;
                        for (dr, dc, wt) in [
                            (0, 0, w00),
                            (0, 1, w01),
                            (1, 0, w10),
                            (1, 1, w11),
                        ] {
                            let (r, c) = (r0 + dr, c0 + dc);
                            if r >= 0 && c >= 0 && (r as usize) < pr && (c as usize) < pc {
                                dpatch[[r as usize, c as usize]] += wt * go;
                            }
                        }
                        let p00 = tap(&p2, r0, c0);
                        let p01 = tap(&p2, r0, c0 + 1);
                        let p10 = tap(&p2, r0 + 1, c0);
                        let p11 = tap(&p2, r0 + 1, c0 + 1);
                        let dval_du = (1.0 - fv) * (p01 - p00) + fv * (p11 - p10);
                        let dval_dv = (1.0 - fu) * (p10 - p00) + fu * (p11 - p01);
                        // chain through u = ((xn - tx)/sx + 1) * half_u
                        let du_dsx = -un / sx * half_u;
                        let du_dtx = -half_u / sx;
                        let dv_dsy = -vn / sy * half_v;
                        let dv_dty = -half_v / sy;
                        dpose[0] += go * dval_du * du_dsx;
                        dpose[1] += go * dval_dv * dv_dsy;
                        dpose[2] += go * dval_du * du_dtx;
                        dpose[3] += go * dval_dv * dv_dty;
                    }
                }
                grads.accum_owned(patch, dpatch.into_dyn());
                grads.accum_owned(
                    pose,
                    ArrayD::from_shape_vec(IxDyn(&[4]), dpose.to_vec()).unwrap(),
                );
            })),
        )
    }
}
