use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shared handle to a persistent tensor (a model parameter or a fixed
/// input). Cloning the handle aliases the same storage.
///
/// Gradients accumulate additively across `Tape::backward` calls until
/// [`Tensor::zero_grad`] is called.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorData>>,
}

struct TensorData {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
}

impl Tensor {
    /// Tensor that never receives gradients.
    pub fn new(value: Matrix) -> Self {
        Self {
            inner: Rc::new(RefCell::new(TensorData {
                value: Arc::new(value),
                grad: None,
            })),
        }
    }

    /// Trainable tensor with a zeroed gradient buffer.
    pub fn param(value: Matrix) -> Self {
        let grad = Some(Matrix::zeros(value.rows(), value.cols()));
        Self {
            inner: Rc::new(RefCell::new(TensorData {
                value: Arc::new(value),
                grad,
            })),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().grad.is_some()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.borrow().value.shape()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().value.len()
    }

    /// Snapshot of the current value.
    pub fn value(&self) -> Arc<Matrix> {
        Arc::clone(&self.inner.borrow().value)
    }

    /// Copy of the accumulated gradient, `None` for non-trainable tensors.
    pub fn grad(&self) -> Option<Matrix> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        if let Some(g) = self.inner.borrow_mut().grad.as_mut() {
            g.fill(0.0);
        }
    }

    pub fn set_value(&self, value: Matrix) -> Result<()> {
        let mut data = self.inner.borrow_mut();
        if value.shape() != data.value.shape() {
            return Err(Error::shape(
                "Tensor::set_value",
                format!("{:?}", data.value.shape()),
                format!("{:?}", value.shape()),
            ));
        }
        data.value = Arc::new(value);
        Ok(())
    }

    /// Reads a single entry.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.borrow().value.get(i, j)
    }

    /// Overwrites a single entry (used by finite-difference probes).
    pub fn set(&self, i: usize, j: usize, v: f64) {
        Arc::make_mut(&mut self.inner.borrow_mut().value).set(i, j, v);
    }

    /// Mutable access to the value together with the gradient, for
    /// optimizer updates. A value still referenced by a live tape is copied
    /// first, so recorded forward values never change underneath it.
    pub fn update<R>(&self, f: impl FnOnce(&mut Matrix, &Matrix) -> R) -> Option<R> {
        let mut data = self.inner.borrow_mut();
        let TensorData { value, grad } = &mut *data;
        let grad = grad.as_ref()?;
        Some(f(Arc::make_mut(value), grad))
    }

    pub(crate) fn accumulate_grad(&self, g: &Matrix) {
        if let Some(acc) = self.inner.borrow_mut().grad.as_mut() {
            acc.add_assign(g);
        }
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &data.value.shape())
            .field("requires_grad", &data.grad.is_some())
            .finish()
    }
}
