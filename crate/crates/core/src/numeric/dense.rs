//! Fully connected layer with cached-input backprop, plus the three
//! elementwise activations used across the models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use super::NumericError;

/// y = x·Wᵀ + b, batched over rows of x. W is out×in so a row of W is one
/// output unit's weight vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Tensor2,
    pub b: Vec<f64>,
    #[serde(skip)]
    cached_input: Option<Tensor2>,
}

/// Gradients of one dense layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Vec<f64>,
}

impl DenseLayer {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        DenseLayer {
            w: Tensor2::xavier(out_dim, in_dim, rng),
            b: vec![0.0; out_dim],
            cached_input: None,
        }
    }

    pub fn from_parts(w: Tensor2, b: Vec<f64>) -> Result<Self, NumericError> {
        if w.rows != b.len() {
            return Err(NumericError::ShapeMismatch {
                op: "dense_from_parts",
                expected: format!("{} bias entries", w.rows),
                got: format!("{}", b.len()),
            });
        }
        Ok(DenseLayer {
            w,
            b,
            cached_input: None,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    /// Forward pass; caches the input for the next `backward` call.
    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2, NumericError> {
        let y = self.forward_inference(x)?;
        self.cached_input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching (scoring paths).
    pub fn forward_inference(&self, x: &Tensor2) -> Result<Tensor2, NumericError> {
        if x.cols != self.w.cols {
            return Err(NumericError::ShapeMismatch {
                op: "dense_forward",
                expected: format!("input dim {}", self.w.cols),
                got: format!("{}", x.cols),
            });
        }
        let mut y = x.matmul_transposed(&self.w)?;
        for r in 0..y.rows {
            for (v, &b) in y.row_mut(r).iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// dx = dy·W, dW = dyᵀ·x, db = column sum of dy. Requires a preceding
    /// `forward` on the same input.
    pub fn backward(&self, dy: &Tensor2) -> Result<DenseGrads, NumericError> {
        let x = self.cached_input.as_ref().ok_or(NumericError::ShapeMismatch {
            op: "dense_backward",
            expected: "cached input from forward".into(),
            got: "none".into(),
        })?;
        if dy.rows != x.rows || dy.cols != self.w.rows {
            return Err(NumericError::ShapeMismatch {
                op: "dense_backward",
                expected: format!("{}×{}", x.rows, self.w.rows),
                got: format!("{}×{}", dy.rows, dy.cols),
            });
        }
        let dx = dy.matmul(&self.w)?;
        let dw = dy.transpose().matmul(x)?;
        let mut db = vec![0.0; self.w.rows];
        for r in 0..dy.rows {
            for (acc, &g) in db.iter_mut().zip(dy.row(r)) {
                *acc += g;
            }
        }
        Ok(DenseGrads { dx, dw, db })
    }

    /// Flat view of parameters (W row-major, then b) for optimizers.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w.data.clone();
        p.extend_from_slice(&self.b);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), NumericError> {
        let need = self.w.data.len() + self.b.len();
        if p.len() != need {
            return Err(NumericError::ShapeMismatch {
                op: "dense_set_params",
                expected: format!("{need}"),
                got: format!("{}", p.len()),
            });
        }
        self.w.data.copy_from_slice(&p[..self.w.data.len()]);
        self.b.copy_from_slice(&p[self.w.data.len()..]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the *output* y = f(x), which every one
    /// of these activations permits (so the forward value can be reused).
    #[inline]
    pub fn grad_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor2) -> Tensor2 {
        x.map(|v| self.apply(v))
    }

    /// Upstream gradient times local derivative, given the forward output.
    pub fn backward(&self, y: &Tensor2, dy: &Tensor2) -> Result<Tensor2, NumericError> {
        if y.shape() != dy.shape() {
            return Err(NumericError::ShapeMismatch {
                op: "activation_backward",
                expected: format!("{:?}", y.shape()),
                got: format!("{:?}", dy.shape()),
            });
        }
        let mut out = dy.clone();
        for (g, &yv) in out.data.iter_mut().zip(&y.data) {
            *g *= self.grad_from_output(yv);
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
