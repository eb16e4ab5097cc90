//! Multinomial logistic regression probes, trained with L-BFGS on
//! standardized features.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub l2_lambda: f64,
    pub max_iter: usize,
    /// Stop once the gradient ∞-norm falls to this value.
    pub tol: f64,
    pub lda_shrinkage: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            l2_lambda: 1e-4,
            max_iter: 500,
            tol: 1e-7,
            lda_shrinkage: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return Err(Error::Parameter(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(0.0..=1.0).contains(&self.lda_shrinkage) {
            return Err(Error::Parameter(format!(
                "lda_shrinkage must be in [0, 1], got {}",
                self.lda_shrinkage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `C × D`, acting on standardized features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub classes: Vec<String>,
    pub feature_mean: DVector<f64>,
    pub feature_scale: DVector<f64>,
    pub convergence: Convergence,
}

/// Mean cross-entropy plus `(λ/2)‖W‖²_F` and its gradient with respect to
/// `W` (`C × D`) and `b`, for raw features `x` (`n × D`).
pub fn softmax_loss_grad(
    x: &DMatrix<f64>,
    y: &[usize],
    weights: &DMatrix<f64>,
    bias: &DVector<f64>,
    lambda: f64,
) -> (f64, DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let c = weights.nrows();
    let mut g = x * weights.transpose();
    let mut loss = 0.0;
    for i in 0..n {
        let mut row = g.row_mut(i);
        row += bias.transpose();
        let max = row.max();
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        loss -= (row[y[i]] / z).ln();
        row /= z;
        row[y[i]] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    g *= inv_n;
    loss *= inv_n;
    loss += 0.5 * lambda * weights.norm_squared();
    let grad_w = g.transpose() * x + weights * lambda;
    let grad_b = DVector::from_iterator(c, g.column_iter().map(|col| col.sum()));
    (loss, grad_w, grad_b)
}

fn softmax_rows(mut logits: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let z = row.sum();
        row /= z;
    }
    logits
}

/// Minimizes `f` from `x0` with L-BFGS (memory 10) and a backtracking
/// Armijo line search.
fn lbfgs(
    x0: DVector<f64>,
    max_iter: usize,
    tol: f64,
    mut f: impl FnMut(&DVector<f64>) -> (f64, DVector<f64>),
) -> Result<(DVector<f64>, Convergence)> {
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::Numerical("non-finite initial loss".into()));
    }
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < max_iter {
        if g.amax() <= tol {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, yv, 1.0);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            q *= s.dot(yv) / yv.dot(yv);
        } else {
            q /= g.norm().max(1.0);
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * yv.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            history.clear();
            dir = -&g / g.norm().max(1.0);
            slope = g.dot(&dir);
        }

        let mut step = 1.0;
        let accepted = loop {
            let trial = &x + &dir * step;
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                break Some((trial, ft, gt));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        iterations += 1;
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * yv.norm_squared().max(f64::MIN_POSITIVE) {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    if !fx.is_finite() {
        return Err(Error::Numerical("non-finite loss during optimization".into()));
    }
    let grad_inf_norm = g.amax();
    Ok((
        x,
        Convergence {
            converged: grad_inf_norm <= tol,
            iterations,
            grad_inf_norm,
            loss: fx,
        },
    ))
}

fn standardize(x: &DMatrix<f64>, mean: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - mean[j]) / scale[j]);
    }
    z
}

pub fn fit_logreg<L: AsRef<str>>(x: &DMatrix<f64>, y: &[L], cfg: &FitConfig) -> Result<ProbeModel> {
    cfg.validate()?;
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Parameter(format!("{n} rows but {} labels", y.len())));
    }
    let class_index: BTreeMap<&str, usize> = {
        let mut labels: Vec<&str> = y.iter().map(AsRef::as_ref).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let c = class_index.len();
    if c < 2 {
        return Err(Error::Parameter("probe needs at least 2 classes".into()));
    }
    if n <= c {
        return Err(Error::Parameter(format!("probe needs more rows ({n}) than classes ({c})")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite training features".into()));
    }
    let targets: Vec<usize> = y.iter().map(|l| class_index[l.as_ref()]).collect();

    let feature_mean = DVector::from_iterator(d, x.column_iter().map(|col| col.sum() / n as f64));
    let feature_scale = DVector::from_iterator(
        d,
        x.column_iter().enumerate().map(|(j, col)| {
            let var = col.iter().map(|v| (v - feature_mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        }),
    );
    let z = standardize(x, &feature_mean, &feature_scale);

    let unpack = |theta: &DVector<f64>| {
        let w = DMatrix::from_column_slice(c, d, &theta.as_slice()[..c * d]);
        let b = DVector::from_column_slice(&theta.as_slice()[c * d..]);
        (w, b)
    };
    let objective = |theta: &DVector<f64>| {
        let (w, b) = unpack(theta);
        let (loss, gw, gb) = softmax_loss_grad(&z, &targets, &w, &b, cfg.l2_lambda);
        let mut grad = DVector::zeros(c * d + c);
        grad.as_mut_slice()[..c * d].copy_from_slice(gw.as_slice());
        grad.as_mut_slice()[c * d..].copy_from_slice(gb.as_slice());
        (loss, grad)
    };
    let (theta, convergence) = lbfgs(DVector::zeros(c * d + c), cfg.max_iter, cfg.tol, objective)?;
    let (weights, bias) = unpack(&theta);
    Ok(ProbeModel {
        weights,
        bias,
        classes: class_index.keys().map(|s| s.to_string()).collect(),
        feature_mean,
        feature_scale,
        convergence,
    })
}

impl ProbeModel {
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Parameter(format!(
                "probe expects dimension {}, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let z = standardize(x, &self.feature_mean, &self.feature_scale);
        let mut logits = z * self.weights.transpose();
        for mut row in logits.row_iter_mut() {
            row += self.bias.transpose();
        }
        Ok(logits)
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(softmax_rows(self.logits(x)?))
    }

    /// Class indices; ties go to the lowest index.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    pub fn predict_labels(&self, x: &DMatrix<f64>) -> Result<Vec<&str>> {
        Ok(self.predict(x)?.into_iter().map(|i| self.classes[i].as_str()).collect())
    }
}

pub fn argmax_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
