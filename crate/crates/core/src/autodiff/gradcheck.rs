//! Central finite-difference check of tape gradients.

use rand::seq::index::sample;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::seeded_rng;

/// Largest relative error between tape gradients and central differences
/// over at most `max_coords` sampled coordinates per tensor.
///
/// `f` records the scalar loss on a fresh tape and must be deterministic.
/// The relative error at a coordinate is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(mut f: F, params: &[Tensor], h: f64, max_coords: usize) -> Result<f64>
where
    F: FnMut(&mut Tape) -> Result<Var>,
{
    for p in params {
        p.zero_grad();
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape)?;
    tape.backward(loss)?;
    drop(tape);

    let eval = |f: &mut F| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let mut rng = seeded_rng(0x6772_6164);
    let mut worst: f64 = 0.0;
    for p in params {
        let analytic = p.grad().expect("finite_diff_check needs trainable tensors");
        let (rows, cols) = p.shape();
        let n = rows * cols;
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut picked = sample(&mut rng, n, max_coords).into_vec();
            picked.sort_unstable();
            picked
        };
        for k in coords {
            let (i, j) = (k / cols, k % cols);
            let orig = p.get(i, j);
            p.set(i, j, orig + h);
            let plus = eval(&mut f)?;
            p.set(i, j, orig - h);
            let minus = eval(&mut f)?;
            p.set(i, j, orig);
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(i, j);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
