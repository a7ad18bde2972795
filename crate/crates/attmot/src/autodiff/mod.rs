//! Reverse-mode automatic differentiation on dynamically shaped f64 arrays.
//!
//! A [`Tape`] records the forward computation; [`Tape::backward`] replays it
//! in reverse, accumulating gradients into a [`Grads`] store indexed by
//! [`Var`]. Everything runs in double precision so analytic gradients can be
//! validated against central finite differences at tight tolerances.

mod conv;
mod ops;
mod warp;

use ndarray::{ArcArray, ArrayD, IxDyn};

pub use warp::warp_forward;

/// Shared handle to a forward value living on the tape.
pub type Value = ArcArray<f64, IxDyn>;

/// Index of a node on the tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&ArrayD<f64>, &mut Grads)>;

/// Gradient store produced by [`Tape::backward`].
pub struct Grads {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    fn new(n: usize) -> Self {
        Grads {
            slots: (0..n).map(|_| None).collect(),
        }
    }

    /// Accumulate a gradient contribution for `v`.
    pub fn accum(&mut self, v: Var, delta: &ArrayD<f64>) {
        match &mut self.slots[v.0] {
            Some(g) => *g += delta,
            slot @ None => *slot = Some(delta.clone()),
        }
    }

    fn accum_owned(&mut self, v: Var, delta: ArrayD<f64>) {
        match &mut self.slots[v.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient of the backward root with respect to `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.slots[v.0].as_ref()
    }

    /// Like [`Grads::get`] but materializes a zero array of the given shape
    /// for variables the root does not depend on.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> ArrayD<f64> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(IxDyn(shape)),
        }
    }
}

/// Records a forward computation for later gradient replay.
#[derive(Default)]
pub struct Tape {
    vals: Vec<Value>,
    backs: Vec<Option<BackFn>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Insert an input node (parameter or data). Gradients accumulate here
    /// but nothing propagates further back.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value.into_shared(), None)
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Value {
        &self.vals[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.vals[v.0].shape()
    }

    /// Scalar forward value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = &self.vals[v.0];
        debug_assert_eq!(a.len(), 1);
        *a.iter().next().expect("scalar var is empty")
    }

    pub(crate) fn push(&mut self, value: Value, back: Option<BackFn>) -> Var {
        self.vals.push(value);
        self.backs.push(back);
        Var(self.vals.len() - 1)
    }

    /// Reverse sweep from `root` (a scalar), returning per-variable gradients.
    pub fn backward(&self, root: Var) -> Grads {
        let mut grads = Grads::new(self.vals.len());
        let seed = ArrayD::ones(IxDyn(self.vals[root.0].shape()));
        grads.accum_owned(root, seed);
        for i in (0..=root.0).rev() {
            if let Some(back) = &self.backs[i] {
                // Drop intermediate grads after use; only leaves keep theirs.
                if let Some(g) = grads.slots[i].take() {
                    back(&g, &mut grads);
                }
            }
        }
        grads
    }
}
