//! Soft-margin kernel SVM trained on the dual with an SMO-style solver.
//!
//! The working pair is the maximal KKT violating pair (first-order working
//! set selection); the two-variable subproblem is solved analytically and
//! clipped to the box `0 <= alpha_i <= C_i`.

use serde::{Deserialize, Serialize};

use super::params::ParamReader;
use super::ModelConfig;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub(crate) fn from_config(config: &ModelConfig, n_features: usize) -> Result<Self> {
        let mut r = ParamReader::new("svm", &config.params);
        let kind = r.choice("kernel", &["rbf", "linear"], "rbf")?;
        let gamma = r.opt_f64("gamma")?.unwrap_or(1.0 / n_features.max(1) as f64);
        let c = r.f64_or("C", 1.0)?;
        let tol = r.f64_or("tol", 1e-3)?;
        let max_iter = r.usize_or("max_iter", 10_000_000)?;
        r.finish()?;
        if !(c > 0.0) {
            return Err(Error::Config("svm: C must be positive".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::Config("svm: gamma must be positive".into()));
        }
        let kernel = match kind {
            "linear" => Kernel::Linear,
            _ => Kernel::Rbf { gamma },
        };
        Ok(SvmParams {
            kernel,
            c,
            tol,
            max_iter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl SvmModel {
    /// Signed decision margin; non-negative means class 1.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Raw dual solution, exposed for feasibility checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Signed labels, +1 for class 1 and -1 for class 0.
    pub y: Vec<f64>,
    pub upper: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum()
    }
}

pub fn solve_dual(
    rows: &[Vec<f64>],
    labels: &[u8],
    kernel: Kernel,
    upper: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> DualSolution {
    let n = rows.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = y[i] * y[j] * kernel.eval(&rows[i], &rows[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    let up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < upper[t]) || (y[t] < 0.0 && a[t] > 0.0);
    let low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < upper[t]);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(t, &alpha) && v > g_max {
                g_max = v;
                i = t;
            }
            if low(t, &alpha) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (upper[i], upper[j]);
        let qii = q[i * n + i];
        let qjj = q[j * n + j];
        let qij = q[i * n + j];
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += q[k * n + i] * di + q[k * n + j] * dj;
        }
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };

    DualSolution {
        alpha,
        y,
        upper,
        bias: -rho,
        iterations,
        converged,
    }
}

pub(crate) fn fit(
    params: &SvmParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    class_weight: [f64; 2],
) -> SvmModel {
    let upper: Vec<f64> = labels
        .iter()
        .map(|&l| params.c * class_weight[l as usize])
        .collect();
    let sol = solve_dual(rows, labels, params.kernel, upper, params.tol, params.max_iter);
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(rows[t].clone());
            dual_coef.push(a * sol.y[t]);
        }
    }
    SvmModel {
        kernel: params.kernel,
        support_vectors,
        dual_coef,
        bias: sol.bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Vec<Vec<f64>>, Vec<u8>) {
        (
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0, 0, 1, 1],
        )
    }

    fn accuracy(m: &SvmModel, rows: &[Vec<f64>], labels: &[u8]) -> f64 {
        rows.iter()
            .zip(labels)
            .filter(|(r, &y)| ((m.decision(r) >= 0.0) as u8) == y)
            .count() as f64
            / rows.len() as f64
    }

    fn params(kernel: Kernel) -> SvmParams {
        SvmParams {
            kernel,
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }

    #[test]
    fn xor_linear_vs_rbf() {
        let (rows, labels) = xor();
        let lin = fit(&params(Kernel::Linear), &rows, &labels, [1.0, 1.0]);
        assert!(accuracy(&lin, &rows, &labels) <= 0.75);
        let rbf = fit(&params(Kernel::Rbf { gamma: 1.0 }), &rows, &labels, [1.0, 1.0]);
        assert_eq!(accuracy(&rbf, &rows, &labels), 1.0);
    }

    #[test]
    fn dual_feasible_on_overlapping_classes() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![((i * 37) % 17) as f64 / 17.0, ((i * 11) % 13) as f64 / 13.0])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| (r[0] + 0.2 * r[1] > 0.55) as u8).collect();
        let upper: Vec<f64> = labels.iter().map(|&l| if l == 1 { 2.0 } else { 0.5 }).collect();
        let sol = solve_dual(&rows, &labels, Kernel::Rbf { gamma: 2.0 }, upper, 1e-3, 1_000_000);
        assert!(sol.converged);
        for (a, c) in sol.alpha.iter().zip(&sol.upper) {
            assert!(*a >= 0.0 && a <= c);
        }
        assert!(sol.equality_residual().abs() < 1e-6);
    }

    #[test]
    fn separable_points_recover_labels() {
        let rows = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        let labels = vec![0, 0, 1, 1];
        let m = fit(&params(Kernel::Linear), &rows, &labels, [1.0, 1.0]);
        assert_eq!(accuracy(&m, &rows, &labels), 1.0);
        assert!(m.decision(&[0.0]).abs() < 1e-2);
    }
}
