//! Central-difference gradient verification helpers.
//!
//! Used by the test suites to validate the tape's analytic gradients. The
//! numeric side only ever re-evaluates the forward pass, so it stays
//! independent of the backward implementation it checks.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{Tape, Var};

/// Central difference of a scalar function at one flattened coordinate of
/// one input array.
pub fn central_diff<F>(f: F, inputs: &[ArrayD<f64>], arr: usize, idx: usize, eps: f64) -> f64
where
    F: Fn(&[ArrayD<f64>]) -> f64,
{
    let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
    let x0 = work[arr].as_slice().unwrap()[idx];
    let h = eps * x0.abs().max(1.0);

    work[arr].as_slice_mut().unwrap()[idx] = x0 + h;
    let fp = f(&work);
    work[arr].as_slice_mut().unwrap()[idx] = x0 - h;
    let fm = f(&work);
    (fp - fm) / (2.0 * h)
}

/// Elementwise relative error `|a-b| / max(1, |a|, |b|)`, reduced to the max.
pub fn rel_err(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Scalar relative error with the same normalization as [`rel_err`].
pub fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Build a scalar graph over random leaves and compare the full analytic
/// gradient against central differences. Returns the max relative error.
pub fn check_scalar_fn<F>(shapes: &[IxDyn], seed: u64, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let inputs: Vec<ArrayD<f64>> = shapes
        .iter()
        .map(|s| ArrayD::from_shape_simple_fn(s.clone(), || rng.gen_range(-1.0..1.0)))
        .collect();

    let eval = |xs: &[ArrayD<f64>]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let root = build(&mut t, &vars);
        t.scalar(root)
    };

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
    let root = build(&mut t, &vars);
    let grads = t.backward(root);

    let mut worst = 0.0f64;
    for (ai, (var, input)) in vars.iter().zip(&inputs).enumerate() {
        let analytic = grads.get_or_zeros(*var, input.shape());
        let flat = analytic.as_slice().unwrap();
        for idx in 0..input.len() {
            let numeric = central_diff(eval, &inputs, ai, idx, 1e-5);
            worst = worst.max(rel_err_scalar(flat[idx], numeric));
        }
    }
    worst
}

/// Sample `count` random (array, coordinate) pairs across a parameter list.
pub fn sample_coords(
    sizes: &[usize],
    count: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let total: usize = sizes.iter().sum();
    assert!(total > 0);
    (0..count)
        .map(|_| {
            let mut k = rng.gen_range(0..total);
            for (ai, &sz) in sizes.iter().enumerate() {
                if k < sz {
                    return (ai, k);
                }
                k -= sz;
            }
            unreachable!()
        })
        .collect()
}
