//! Elementwise, linear-algebra and shape ops on the tape.

use ndarray::{ArrayD, Axis, Ix2, IxDyn, Slice};

use super::{Tape, Value, Var};

fn as2(v: &Value) -> ndarray::ArrayView2<'_, f64> {
    v.view().into_dimensionality::<Ix2>().expect("expected 2-d value")
}

impl Tape {
    /// Elementwise `a + b` (shapes must match).
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let out = (&self.vals[a.0] + &self.vals[b.0]).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum(a, g);
                grads.accum(b, g);
            })),
        )
    }

    /// Elementwise `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let out = (&self.vals[a.0] - &self.vals[b.0]).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum(a, g);
                grads.accum_owned(b, -g);
            })),
        )
    }

    /// Elementwise `a * b` (Hadamard).
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let va = self.vals[a.0].clone();
        let vb = self.vals[b.0].clone();
        let out = (&va * &vb).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum_owned(a, g * &vb);
                grads.accum_owned(b, g * &va);
            })),
        )
    }

    /// Elementwise affine map `k * v + c` with constants.
    pub fn affine(&mut self, v: Var, k: f64, c: f64) -> Var {
        let out = self.vals[v.0].mapv(|x| k * x + c).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| grads.accum_owned(v, g * k))),
        )
    }

    pub fn scale(&mut self, v: Var, k: f64) -> Var {
        self.affine(v, k, 0.0)
    }

    /// Multiply a tensor by a scalar variable (single-element node), broadcast.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.vals[s.0].len(), 1, "scale_by: s must be scalar");
        let vx = self.vals[x.0].clone();
        let vs = self.scalar(s);
        let out = vx.mapv(|v| v * vs).into_shared();
        let s_shape = IxDyn(self.shape(s));
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum_owned(x, g * vs);
                let ds = (g * &vx).sum();
                grads.accum_owned(s, ArrayD::from_elem(s_shape.clone(), ds));
            })),
        )
    }

    pub fn relu(&mut self, v: Var) -> Var {
        let vx = self.vals[v.0].clone();
        let out = vx.mapv(|x| x.max(0.0)).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let mut d = g.clone();
                d.zip_mut_with(&vx, |gi, &xi| {
                    if xi <= 0.0 {
                        *gi = 0.0
                    }
                });
                grads.accum_owned(v, d);
            })),
        )
    }

    pub fn sigmoid(&mut self, v: Var) -> Var {
        let out: Value = self.vals[v.0]
            .mapv(|x| 1.0 / (1.0 + (-x).exp()))
            .into_shared();
        let y = out.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let d = g * &y.mapv(|s| s * (1.0 - s));
                grads.accum_owned(v, d);
            })),
        )
    }

    pub fn tanh(&mut self, v: Var) -> Var {
        let out: Value = self.vals[v.0].mapv(f64::tanh).into_shared();
        let y = out.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let d = g * &y.mapv(|t| 1.0 - t * t);
                grads.accum_owned(v, d);
            })),
        )
    }

    /// Matrix product of 2-d nodes: `(m×n) · (n×k)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let va = self.vals[a.0].clone();
        let vb = self.vals[b.0].clone();
        let out = as2(&va).dot(&as2(&vb)).into_dyn().into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let da = g2.dot(&as2(&vb).t()).into_dyn();
                let db = as2(&va).t().dot(&g2).into_dyn();
                grads.accum_owned(a, da);
                grads.accum_owned(b, db);
            })),
        )
    }

    /// Transpose of a 2-d node.
    pub fn transpose(&mut self, v: Var) -> Var {
        let out = as2(&self.vals[v.0]).t().to_owned().into_dyn().into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let gt = g.view().into_dimensionality::<Ix2>().unwrap();
                grads.accum_owned(v, gt.t().to_owned().into_dyn());
            })),
        )
    }

    /// Add a row vector `(1×k)` to every row of `(m×k)`.
    pub fn add_rowvec(&mut self, x: Var, b: Var) -> Var {
        let vx = as2(&self.vals[x.0]).to_owned();
        let vb = as2(&self.vals[b.0]).to_owned();
        assert_eq!(vb.nrows(), 1, "add_rowvec: bias must be 1×k");
        assert_eq!(vx.ncols(), vb.ncols(), "add_rowvec: width mismatch");
        let out = (&vx + &vb).into_dyn().into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum(x, g);
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let db = g2.sum_axis(Axis(0)).insert_axis(Axis(0)).into_dyn();
                grads.accum_owned(b, db);
            })),
        )
    }

    /// `x · w + b` for a 2-d input, weight `(n×k)` and bias `(1×k)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_rowvec(xw, b)
    }

    /// Row-wise softmax of a 2-d node.
    pub fn softmax_rows(&mut self, v: Var) -> Var {
        let x = as2(&self.vals[v.0]).to_owned();
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|e| (e - m).exp());
            let s = row.sum();
            row.mapv_inplace(|e| e / s);
        }
        let out: Value = y.into_dyn().into_shared();
        let yv = out.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let y2 = as2(&yv);
                let mut d = (&g2 * &y2).to_owned();
                for (mut drow, (grow, yrow)) in
                    d.rows_mut().into_iter().zip(g2.rows().into_iter().zip(y2.rows()))
                {
                    let dot = grow.dot(&yrow);
                    drow.zip_mut_with(&yrow, |di, &yi| *di -= dot * yi);
                }
                grads.accum_owned(v, d.into_dyn());
            })),
        )
    }

    /// Sum of all elements (scalar node of shape `[1]`).
    pub fn sum(&mut self, v: Var) -> Var {
        let shape = IxDyn(self.shape(v));
        let s = self.vals[v.0].sum();
        let out = ArrayD::from_elem(IxDyn(&[1]), s).into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let gs = g[[0]];
                grads.accum_owned(v, ArrayD::from_elem(shape.clone(), gs));
            })),
        )
    }

    /// Mean of all elements.
    pub fn mean(&mut self, v: Var) -> Var {
        let n = self.vals[v.0].len() as f64;
        let s = self.sum(v);
        self.scale(s, 1.0 / n)
    }

    /// Mean squared error between two same-shape nodes.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean(sq)
    }

    pub fn reshape(&mut self, v: Var, shape: &[usize]) -> Var {
        let in_shape = IxDyn(self.shape(v));
        let out = self.vals[v.0]
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch")
            .into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let d = g
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order(in_shape.clone())
                    .unwrap();
                grads.accum_owned(v, d);
            })),
        )
    }

    /// Concatenate along axis 0.
    pub fn concat0(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.vals[p.0].view()).collect();
        let out = ndarray::concatenate(Axis(0), &views)
            .expect("concat0: incompatible shapes")
            .into_shared();
        let lens: Vec<usize> = parts.iter().map(|p| self.shape(*p)[0]).collect();
        let parts = parts.to_vec();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let mut off = 0;
                for (p, &len) in parts.iter().zip(&lens) {
                    let piece = g
                        .slice_axis(Axis(0), Slice::from(off..off + len))
                        .to_owned();
                    grads.accum_owned(*p, piece);
                    off += len;
                }
            })),
        )
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&mut self, v: Var, axis: usize, start: usize, len: usize) -> Var {
        let full = IxDyn(self.shape(v));
        let out = self.vals[v.0]
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .to_owned()
            .into_shared();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let mut d = ArrayD::zeros(full.clone());
                d.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                    .assign(g);
                grads.accum_owned(v, d);
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use crate::gradcheck::{check_scalar_fn, rel_err};
    use ndarray::{arr2, ArrayD, IxDyn};

    #[test]
    fn matmul_matches_hand_result() {
        let mut t = Tape::new();
        let a = t.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let b = t.leaf(arr2(&[[5.0, 6.0], [7.0, 8.0]]).into_dyn());
        let c = t.matmul(a, b);
        assert_eq!(
            t.value(c).to_owned(),
            arr2(&[[19.0, 22.0], [43.0, 50.0]]).into_dyn()
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.leaf(arr2(&[[0.3, -2.0, 5.0], [1.0, 1.0, 1.0]]).into_dyn());
        let y = t.softmax_rows(x);
        for row in t.value(y).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn elementwise_chain_gradcheck() {
        // f = mean(sigmoid(a*b) + tanh(a) - relu(b))
        let shape = [3, 4];
        let err = check_scalar_fn(
            &[IxDyn(&shape), IxDyn(&shape)],
            42,
            |t, vars| {
                let (a, b) = (vars[0], vars[1]);
                let ab = t.mul(a, b);
                let s = t.sigmoid(ab);
                let ta = t.tanh(a);
                let rb = t.relu(b);
                let p = t.add(s, ta);
                let q = t.sub(p, rb);
                t.mean(q)
            },
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn linear_softmax_gradcheck() {
        let err = check_scalar_fn(
            &[IxDyn(&[2, 3]), IxDyn(&[3, 4]), IxDyn(&[1, 4])],
            7,
            |t, vars| {
                let y = t.linear(vars[0], vars[1], vars[2]);
                let s = t.softmax_rows(y);
                let sq = t.mul(s, s);
                t.sum(sq)
            },
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn slice_concat_gradcheck() {
        let err = check_scalar_fn(&[IxDyn(&[4, 3])], 11, |t, vars| {
            let top = t.slice(vars[0], 0, 0, 2);
            let bot = t.slice(vars[0], 0, 2, 2);
            let swapped = t.concat0(&[bot, top]);
            let sq = t.mul(swapped, swapped);
            t.mean(sq)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn rel_err_is_zero_for_identical() {
        let a = ArrayD::from_elem(IxDyn(&[3]), 1.5);
        assert_eq!(rel_err(&a, &a), 0.0);
    }
}
