//! L2-regularized logistic regression by full-batch gradient descent.
//!
//! The step size is `1 / (L + 2 lambda)` where `L` bounds the spectral norm
//! of the logistic Hessian (`trace(X~' X~) / 4n` over bias-augmented rows),
//! so the loss is non-increasing every iteration and the fit is
//! deterministic: no line search, no randomness.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LogregModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LogregModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x), stable for large |x|.
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Fit a binary logistic regression. `y` must contain both classes and `x`
/// must be finite.
pub fn train_logreg(
    x: &[Vec<f64>],
    y: &[u8],
    lambda: f64,
    max_iters: usize,
    grad_tol: f64,
) -> Result<LogregModel> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "features vs labels",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::SingleClass);
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic regression features"));
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "feature rows",
            expected: dim,
            actual: bad.len(),
        });
    }

    let n = x.len() as f64;
    // Lipschitz bound of the mean logistic loss over bias-augmented rows.
    let lipschitz: f64 =
        x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / (4.0 * n);
    let step = 1.0 / (lipschitz + 2.0 * lambda);

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = bias + weights.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>();
            let r = sigmoid(z) - f64::from(yi);
            grad_b += r;
            for (g, v) in grad_w.iter_mut().zip(xi) {
                *g += r * v;
            }
        }
        grad_b /= n;
        let mut norm2 = grad_b * grad_b;
        for (g, w) in grad_w.iter_mut().zip(&weights) {
            *g = *g / n + 2.0 * lambda * w;
            norm2 += *g * *g;
        }
        if norm2.sqrt() < grad_tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        bias -= step * grad_b;
    }
    let final_loss = {
        let mut loss = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = bias + weights.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>();
            loss += if yi == 1 { softplus(-z) } else { softplus(z) };
        }
        loss / n + lambda * weights.iter().map(|w| w * w).sum::<f64>()
    };
    Ok(LogregModel { weights, bias, iterations, final_loss })
}
