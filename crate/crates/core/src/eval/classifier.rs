//! Multinomial logistic regression on fixed document features.
//!
//! Minimizes `(1/n) sum_i -log softmax(W x_i + b)_{y_i} + (l2/2) ||W||^2` by
//! gradient descent with backtracking, so the objective never increases.
//! The bias is not penalized.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    /// Distinct labels, ascending; row `c` of the weights belongs to
    /// `labels[c]`.
    pub labels: Vec<i64>,
    pub dim: usize,
    /// `classes x dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl LinearClassifier {
    pub fn logits(&self, feature: &[f64]) -> Vec<f64> {
        (0..self.labels.len())
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(feature).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub l2: f64,
    /// Stop once the gradient norm drops below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            l2: 1e-3,
            tolerance: 1e-4,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FitReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub objective: Vec<f64>,
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: Vec<usize>,
    classes: usize,
    dim: usize,
    l2: f64,
}

impl Problem<'_> {
    fn params_len(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    /// Objective and (optionally) gradient. Parameters are the weight rows
    /// followed by the biases.
    fn evaluate(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (k, d) = (self.classes, self.dim);
        let (w, b) = theta.split_at(k * d);
        let n = self.x.len() as f64;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut loss = 0.0;
        let mut logits = vec![0.0; k];
        for (x, &y) in self.x.iter().zip(&self.y) {
            for c in 0..k {
                logits[c] = b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - logits[y];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g.split_at_mut(k * d);
                for c in 0..k {
                    let p = (logits[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                    let p = p / n;
                    gb[c] += p;
                    for (gj, xj) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gj += p * xj;
                    }
                }
            }
        }
        let penalty: f64 = w.iter().map(|x| x * x).sum::<f64>() * 0.5 * self.l2;
        if let Some(g) = grad {
            for (gj, wj) in g[..k * d].iter_mut().zip(w) {
                *gj += self.l2 * wj;
            }
        }
        loss / n + penalty
    }
}

/// Fits with default tolerance and iteration cap.
pub fn fit_linear(features: &[Vec<f64>], labels: &[i64], l2: f64) -> Result<LinearClassifier> {
    Ok(fit_linear_with(features, labels, &FitOptions { l2, ..Default::default() })?.0)
}

pub fn fit_linear_with(
    features: &[Vec<f64>],
    labels: &[i64],
    options: &FitOptions,
) -> Result<(LinearClassifier, FitReport)> {
    if features.len() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(options.l2 >= 0.0) {
        return Err(Error::param("l2", options.l2, "must be non-negative"));
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::Mismatch("feature rows differ in length".into()));
    }
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Mismatch("non-finite feature value".into()));
    }
    let problem = Problem {
        x: features,
        y: labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label is present"))
            .collect(),
        classes: classes.len(),
        dim,
        l2: options.l2,
    };

    let m = problem.params_len();
    let mut theta = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut objective = problem.evaluate(&theta, Some(&mut grad));
    let mut report = FitReport {
        objective: vec![objective],
        ..Default::default()
    };
    let mut step = 1.0;
    for _ in 0..options.max_iter {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        report.grad_norm = gnorm2.sqrt();
        if report.grad_norm < options.tolerance {
            report.converged = true;
            break;
        }
        // Armijo backtracking
        let mut accepted = None;
        for _ in 0..80 {
            for ((t, p), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = p - step * g;
            }
            let f = problem.evaluate(&trial, None);
            if f < objective && f <= objective - 0.5 * step * gnorm2 {
                accepted = Some(f);
                break;
            }
            step *= 0.5;
        }
        let Some(f) = accepted else {
            // no decrease left at this precision
            break;
        };
        std::mem::swap(&mut theta, &mut trial);
        objective = problem.evaluate(&theta, Some(&mut grad));
        debug_assert!((objective - f).abs() <= 1e-12 * f.abs().max(1.0));
        report.objective.push(objective);
        report.iterations += 1;
        step *= 2.0;
    }
    if !report.converged {
        report.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        report.converged = report.grad_norm < options.tolerance;
    }

    let (w, b) = theta.split_at(classes.len() * dim);
    Ok((
        LinearClassifier {
            labels: classes,
            dim,
            weights: w.to_vec(),
            bias: b.to_vec(),
            l2: options.l2,
        },
        report,
    ))
}

/// Label with the largest logit (first on ties).
pub fn classify(clf: &LinearClassifier, feature: &[f64]) -> i64 {
    let logits = clf.logits(feature);
    let mut best = 0;
    for (c, l) in logits.iter().enumerate() {
        if *l > logits[best] {
            best = c;
        }
    }
    clf.labels[best]
}

/// Fraction of misclassified rows.
pub fn error_rate(clf: &LinearClassifier, features: &[Vec<f64>], labels: &[i64]) -> f64 {
    let wrong = features
        .iter()
        .zip(labels)
        .filter(|(x, y)| classify(clf, x) != **y)
        .count();
    wrong as f64 / labels.len().max(1) as f64
}

/// Per-feature mean and standard deviation, for standardizing inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Self {
        let d = features.first().map_or(0, |f| f.len());
        let n = features.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, x) in mean.iter_mut().zip(f) {
                *m += x / n;
            }
        }
        let mut std = vec![0.0; d];
        for f in features {
            for ((s, x), m) in std.iter_mut().zip(f).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        Standardizer { mean, std }
    }

    pub fn apply(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|f| f.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect())
            .collect()
    }
}

/// Rows of whitespace-separated numbers.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = line
            .split_ascii_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(path, i + 1, format!("bad number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// One integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad label {l:?}")))
        })
        .collect()
}
