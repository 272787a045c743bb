//! Central-difference gradient checking against the tape's reverse pass.

use rayon::prelude::*;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor4;
use crate::Result;

/// A closure that rebuilds the computation under test on a fresh tape and
/// returns the scalar loss node.
pub type BuildFn<'a> = &'a (dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Sync);

fn eval(build: BuildFn<'_>, inputs: &[Tensor4<f64>]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.value(loss).scalar_value()
}

/// Compares reverse-mode gradients of `build` against central finite
/// differences over every coordinate of every input, returning
/// `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn gradcheck(build: BuildFn<'_>, inputs: &[Tensor4<f64>], step: f64) -> Result<f64> {
    gradcheck_strided(build, inputs, step, 1)
}

/// Like [`gradcheck`] but only probes every `stride`-th coordinate of each
/// input, for closures too expensive to sweep exhaustively.
pub fn gradcheck_strided(
    build: BuildFn<'_>,
    inputs: &[Tensor4<f64>],
    step: f64,
    stride: usize,
) -> Result<f64> {
    assert!(stride >= 1);

    // Analytic gradients in one reverse sweep.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let result = tape.backward(loss)?;
    let analytic: Vec<Tensor4<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(v, t)| result.grad(*v).cloned().unwrap_or_else(|| t.zeros_like()))
        .collect();

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        for j in (0..t.numel()).step_by(stride) {
            coords.push((i, j));
        }
    }

    let errs: Result<Vec<f64>> = coords
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += step;
            let f_plus = eval(build, &plus)?;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= step;
            let f_minus = eval(build, &minus)?;
            let numeric = (f_plus - f_minus) / (2.0 * step);
            let a = analytic[i].data()[j];
            Ok((a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs()))
        })
        .collect();

    Ok(errs?.into_iter().fold(0.0, f64::max))
}
