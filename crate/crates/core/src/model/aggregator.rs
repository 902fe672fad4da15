//! Class-balanced, L2-regularised logistic regression over Stage-1 probabilities.
//!
//! Minimises `0.5·‖w‖² + C·Σᵢ ωᵢ·logloss(yᵢ, w·xᵢ + b)` with the bias left
//! unpenalised and `ωᵢ = n / (2·n_class(i))`. Solved with damped Newton steps,
//! which reaches a gradient norm of 1e-8 in a handful of iterations for the
//! small feature counts involved here.

use serde::{Deserialize, Serialize};

use super::linalg::{bce_with_logit, sigmoid};
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAggregator {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `(negative class, positive class)` sample weights used during fitting.
    pub class_weights: (f64, f64),
}

impl LinearAggregator {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            bias: 0.0,
            class_weights: (1.0, 1.0),
        }
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        sigmoid(self.logit(features))
    }
}

/// Result of fitting, with the convergence diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorFit {
    pub aggregator: LinearAggregator,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// `n / (2·n_c)` for each class, ordered `(negative, positive)`.
pub fn balanced_class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass("aggregator labels"));
    }
    Ok((n / (2.0 * neg), n / (2.0 * pos)))
}

/// The regularised, class-weighted objective at `(weights, bias)`.
pub fn objective(
    features: &[Vec<f64>],
    labels: &[bool],
    class_weights: (f64, f64),
    c: f64,
    weights: &[f64],
    bias: f64,
) -> f64 {
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    let data: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
            let omega = if y { class_weights.1 } else { class_weights.0 };
            omega * bce_with_logit(z, if y { 1.0 } else { 0.0 })
        })
        .sum();
    reg + c * data
}

/// Gradient of [`objective`]; the last entry is the bias component.
pub fn objective_gradient(
    features: &[Vec<f64>],
    labels: &[bool],
    class_weights: (f64, f64),
    c: f64,
    weights: &[f64],
    bias: f64,
) -> Vec<f64> {
    let d = weights.len();
    let mut g = vec![0.0; d + 1];
    g[..d].copy_from_slice(weights);
    for (x, &y) in features.iter().zip(labels) {
        let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
        let omega = if y { class_weights.1 } else { class_weights.0 };
        let r = c * omega * (sigmoid(z) - if y { 1.0 } else { 0.0 });
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    g
}

fn hessian(
    features: &[Vec<f64>],
    labels: &[bool],
    class_weights: (f64, f64),
    c: f64,
    weights: &[f64],
    bias: f64,
) -> Vec<Vec<f64>> {
    let d = weights.len();
    let mut h = vec![vec![0.0; d + 1]; d + 1];
    for (j, row) in h.iter_mut().enumerate().take(d) {
        row[j] = 1.0;
    }
    let mut aug = vec![0.0; d + 1];
    for (x, &y) in features.iter().zip(labels) {
        let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
        let p = sigmoid(z);
        let omega = if y { class_weights.1 } else { class_weights.0 };
        let s = c * omega * p * (1.0 - p);
        aug[..d].copy_from_slice(x);
        aug[d] = 1.0;
        for a in 0..=d {
            for b in 0..=a {
                h[a][b] += s * aug[a] * aug[b];
            }
        }
    }
    for a in 0..=d {
        for b in 0..a {
            h[b][a] = h[a][b];
        }
    }
    h
}

/// Solve `A x = rhs` for symmetric positive definite `A` via Cholesky.
fn cholesky_solve(a: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fit the aggregator with `C = 1` and balanced class weights.
pub fn train(features: &[Vec<f64>], labels: &[bool]) -> Result<AggregatorFit> {
    train_with(features, labels, DEFAULT_C, MAX_ITERATIONS)
}

pub fn train_with(
    features: &[Vec<f64>],
    labels: &[bool],
    c: f64,
    max_iterations: usize,
) -> Result<AggregatorFit> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels are misaligned"));
    }
    if features.is_empty() {
        return Err(Error::invalid("empty aggregator training set"));
    }
    let d = features[0].len();
    if features.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("ragged aggregator features"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("aggregator features"));
    }
    let class_weights = balanced_class_weights(labels)?;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = objective(features, labels, class_weights, c, &w, b);
    let mut g = objective_gradient(features, labels, class_weights, c, &w, b);
    let mut iterations = 0;
    while norm(&g) > GRADIENT_TOLERANCE && iterations < max_iterations {
        iterations += 1;
        let h = hessian(features, labels, class_weights, c, &w, b);
        let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
        let direction = cholesky_solve(&h, &neg_g).unwrap_or_else(|| neg_g.clone());
        let slope: f64 = direction.iter().zip(&g).map(|(p, q)| p * q).sum();

        // Backtracking (Armijo) line search.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try: Vec<f64> = w.iter().zip(&direction).map(|(wi, di)| wi + step * di).collect();
            let b_try = b + step * direction[d];
            let f_try = objective(features, labels, class_weights, c, &w_try, b_try);
            if f_try <= f + 1e-4 * step * slope {
                w = w_try;
                b = b_try;
                f = f_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Take the full Newton step anyway: near the optimum the objective
            // change drops below floating-point resolution.
            for (wi, di) in w.iter_mut().zip(&direction) {
                *wi += di;
            }
            b += direction[d];
            f = objective(features, labels, class_weights, c, &w, b);
        }
        g = objective_gradient(features, labels, class_weights, c, &w, b);
    }
    let gradient_norm = norm(&g);
    let converged = gradient_norm <= GRADIENT_TOLERANCE;
    if !converged {
        log::warn!(
            "aggregator did not converge after {iterations} iterations (gradient norm {gradient_norm:e})"
        );
    }
    Ok(AggregatorFit {
        aggregator: LinearAggregator { weights: w, bias: b, class_weights },
        iterations,
        gradient_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weight_formula() {
        let (neg, pos) = balanced_class_weights(&[false, false, false, true]).unwrap();
        assert!((neg - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(pos, 2.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.1], vec![0.9]];
        assert!(matches!(train(&x, &[true, true]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn perfectly_predictive_attribute_gets_positive_weight() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 0.9 } else { 0.1 }]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let fit = train(&x, &y).unwrap();
        assert!(fit.converged);
        assert!(fit.aggregator.weights[0] > 0.0);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(fit.aggregator.predict(xi) > 0.5, yi);
        }
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let x = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky_solve(&[vec![-1.0]], &[1.0]).is_none());
    }

    #[test]
    fn zero_aggregator_predicts_one_half() {
        let agg = LinearAggregator::zeros(3);
        assert_eq!(agg.predict(&[0.2, 0.9, 0.4]), 0.5);
    }
}
