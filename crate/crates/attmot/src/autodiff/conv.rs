//! Spatial ops: 2-d convolution (im2col + GEMM), 2×2 max-pool, nearest
//! up-sampling. All values are single images in C×H×W layout.

use ndarray::{Array2, Array3, Ix1, Ix3, Ix4, IxDyn};
use std::sync::Arc;

use super::{Tape, Var};

fn im2col(
    x: &ndarray::ArrayView3<'_, f64>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (ci, h, w) = x.dim();
    let mut cols = Array2::<f64>::zeros((ci * k * k, oh * ow));
    for c in 0..ci {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        cols[[row, oy * ow + ox]] = x[[c, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array3<f64> {
    let mut dx = Array3::<f64>::zeros((ci, h, w));
    for c in 0..ci {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        dx[[c, iy as usize, ix as usize]] += dcols[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    dx
}

impl Tape {
    /// 2-d convolution of `x` (Ci×H×W) with kernel `w` (Co×Ci×K×K) and bias
    /// `b` (Co). Output is Co×Ho×Wo with Ho = (H + 2p − K)/s + 1.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let vx = self.vals[x.0].clone();
        let vw = self.vals[w.0].clone();
        let vb = self.vals[b.0].clone();
        let x3 = vx.view().into_dimensionality::<Ix3>().expect("conv2d: x is C×H×W");
        let w4 = vw.view().into_dimensionality::<Ix4>().expect("conv2d: w is Co×Ci×K×K");
        let (co, ci, k, k2) = w4.dim();
        assert_eq!(k, k2, "conv2d: square kernels only");
        let (xc, h, wd) = x3.dim();
        assert_eq!(xc, ci, "conv2d: channel mismatch");
        assert!(
            h + 2 * pad >= k && wd + 2 * pad >= k,
            "conv2d: size {h}x{wd} smaller than kernel k={k} with p={pad}"
        );
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;

        let cols = Arc::new(im2col(&x3, k, stride, pad, oh, ow));
        let w2 = w4.to_shape((co, ci * k * k)).unwrap().to_owned();
        let mut out2 = w2.dot(&*cols);
        let b1 = vb.view().into_dimensionality::<Ix1>().expect("conv2d: b is Co");
        for (mut row, &bi) in out2.rows_mut().into_iter().zip(b1.iter()) {
            row += bi;
        }
        let out = out2
            .into_shape_with_order((co, oh, ow))
            .unwrap()
            .into_dyn()
            .into_shared();

        let cols_b = Arc::clone(&cols);
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let g2 = g
                    .as_standard_layout()
                    .into_shape_with_order((co, oh * ow))
                    .unwrap()
                    .to_owned();
                let db = g2.sum_axis(ndarray::Axis(1)).into_dyn();
                grads.accum_owned(b, db);
                let w2 = vw
                    .view()
                    .into_shape_with_order((co, ci * k * k))
                    .unwrap()
                    .to_owned();
                let dw2 = g2.dot(&cols_b.t());
                grads.accum_owned(
                    w,
                    dw2.as_standard_layout()
                        .to_owned()
                        .into_shape_with_order(IxDyn(&[co, ci, k, k]))
                        .unwrap(),
                );
                let dcols = w2.t().dot(&g2);
                let dx = col2im(&dcols, ci, h, wd, k, stride, pad, oh, ow);
                grads.accum_owned(x, dx.into_dyn());
            })),
        )
    }

    /// 2×2 max-pool, stride 2, on a C×H×W node with even H and W.
    pub fn maxpool2(&mut self, x: Var) -> Var {
        let vx = self.vals[x.0].clone();
        let x3 = vx.view().into_dimensionality::<Ix3>().expect("maxpool2: x is C×H×W");
        let (c, h, w) = x3.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool2: odd spatial extent {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array3::<f64>::zeros((c, oh, ow));
        let mut argmax = vec![0usize; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                            let v = x3[[ci, iy, ix]];
                            if v > best {
                                best = v;
                                bi = iy * w + ix;
                            }
                        }
                    }
                    out[[ci, oy, ox]] = best;
                    argmax[(ci * oh + oy) * ow + ox] = bi;
                }
            }
        }
        self.push(
            out.into_dyn().into_shared(),
            Some(Box::new(move |g, grads| {
                let mut dx = Array3::<f64>::zeros((c, h, w));
                let gf = g.as_slice().unwrap();
                for ci in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let flat = (ci * oh + oy) * ow + ox;
                            let bi = argmax[flat];
                            dx[[ci, bi / w, bi % w]] += gf[flat];
                        }
                    }
                }
                grads.accum_owned(x, dx.into_dyn());
            })),
        )
    }

    /// Nearest-neighbour ×2 up-sampling of a C×H×W node.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let vx = self.vals[x.0].clone();
        let x3 = vx.view().into_dimensionality::<Ix3>().expect("upsample2: x is C×H×W");
        let (c, h, w) = x3.dim();
        let mut out = Array3::<f64>::zeros((c, 2 * h, 2 * w));
        for ci in 0..c {
            for y in 0..2 * h {
                for xw in 0..2 * w {
                    out[[ci, y, xw]] = x3[[ci, y / 2, xw / 2]];
                }
            }
        }
        self.push(
            out.into_dyn().into_shared(),
            Some(Box::new(move |g, grads| {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let mut dx = Array3::<f64>::zeros((c, h, w));
                for ci in 0..c {
                    for y in 0..2 * h {
                        for xw in 0..2 * w {
                            dx[[ci, y / 2, xw / 2]] += g3[[ci, y, xw]];
                        }
                    }
                }
                grads.accum_owned(x, dx.into_dyn());
            })),
        )
    }
}
