//! L2-regularised logistic regression by full-batch gradient descent with
//! backtracking line search.

use crate::encoding::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitParams {
    /// Inverse regularisation strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient's infinity norm drops below this.
    pub tol: f64,
}

impl LogitParams {
    pub fn new(c: f64) -> Self {
        LogitParams {
            c,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `‖w‖² / (2·C·n)`; the bias is not penalised.
pub fn logit_loss(x: &FeatureMatrix, y: &[bool], weights: &[f64], bias: f64, c: f64) -> f64 {
    let n = y.len() as f64;
    let data: f64 = (0..y.len())
        .map(|i| {
            let z = dot(x.row(i), weights) + bias;
            softplus(z) - if y[i] { z } else { 0.0 }
        })
        .sum();
    let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * c * n);
    data / n + penalty
}

/// Loss together with its gradient with respect to `(weights, bias)`.
pub fn logit_loss_and_grad(x: &FeatureMatrix, y: &[bool], weights: &[f64], bias: f64, c: f64) -> (f64, Vec<f64>, f64) {
    let n = y.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_bias = 0.0;
    let mut data = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = x.row(i);
        let z = dot(row, weights) + bias;
        let target = if label { 1.0 } else { 0.0 };
        data += softplus(z) - target * z;
        let residual = sigmoid(z) - target;
        for (g, xi) in grad.iter_mut().zip(row) {
            *g += residual * xi;
        }
        grad_bias += residual;
    }
    let mut penalty = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + w / (c * n);
        penalty += w * w;
    }
    (data / n + penalty / (2.0 * c * n), grad, grad_bias / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Loss after every accepted step, starting with the initial loss.
    pub loss_trace: Vec<f64>,
}

/// Fits from the zero vector. Both classes must be present.
pub fn fit_logit(x: &FeatureMatrix, y: &[bool], params: LogitParams) -> LogitFit {
    let mut weights = vec![0.0; x.width];
    let mut bias = 0.0;
    let (mut loss, mut grad, mut grad_bias) = logit_loss_and_grad(x, y, &weights, bias, params.c);
    let mut loss_trace = vec![loss];
    let mut step: f64 = 1.0;
    for _ in 0..params.max_iter {
        let norm_inf = grad.iter().fold(grad_bias.abs(), |m, g| m.max(g.abs()));
        if norm_inf < params.tol {
            break;
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad_bias * grad_bias;
        // Armijo backtracking, starting from twice the last accepted step.
        step = (step * 2.0).min(1e6);
        let mut accepted = None;
        while step > 1e-16 {
            let trial: Vec<f64> = weights.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let trial_bias = bias - step * grad_bias;
            let trial_loss = logit_loss(x, y, &trial, trial_bias, params.c);
            if trial_loss <= loss - 0.5 * step * grad_sq {
                accepted = Some((trial, trial_bias));
                break;
            }
            step *= 0.5;
        }
        let Some((w, b)) = accepted else { break };
        weights = w;
        bias = b;
        (loss, grad, grad_bias) = logit_loss_and_grad(x, y, &weights, bias, params.c);
        loss_trace.push(loss);
    }
    LogitFit {
        weights,
        bias,
        loss_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (FeatureMatrix, Vec<bool>) {
        let x = FeatureMatrix::from_rows(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]);
        (x, vec![false, false, true, true])
    }

    #[test]
    fn separable_one_dimension() {
        let (x, y) = data();
        let fit = fit_logit(&x, &y, LogitParams::new(1e4));
        let preds: Vec<bool> = (0..4).map(|i| sigmoid(fit.weights[0] * x.row(i)[0] + fit.bias) > 0.5).collect();
        assert_eq!(preds, y);
    }

    #[test]
    fn loss_is_monotone() {
        let x = FeatureMatrix::from_rows(&[vec![0.3, 1.0], vec![-1.0, 0.2], vec![0.5, -0.7], vec![1.2, 0.1], vec![-0.4, -0.4]]);
        let y = vec![true, false, false, true, true];
        let fit = fit_logit(&x, &y, LogitParams::new(0.5));
        assert!(fit.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.loss_trace.len() > 2);
    }

    #[test]
    fn sigmoid_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1000.0) <= 1.0);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(softplus(1000.0).is_finite());
    }
}
