//! Reverse-mode automatic differentiation over dense and sparse 2-D kernels.
//!
//! Persistent values (parameters, inputs) live in [`Tensor`] handles. Each
//! forward pass records onto a fresh [`Tape`]; `Tape::backward` then adds
//! gradients into the trainable tensors that were read with
//! [`Tape::param`]. Values read with [`Tape::frozen`] or produced by
//! [`Tape::detach`] act as constants.
//!
//! ```
//! use oad_core::autodiff::{Tape, Tensor};
//! use oad_core::Matrix;
//!
//! let w = Tensor::param(Matrix::from_rows(&[[1.0, 2.0]]).unwrap());
//! let mut tape = Tape::new();
//! let x = tape.param(&w);
//! let loss = tape.sum(x).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(w.grad().unwrap().data(), &[1.0, 1.0]);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
