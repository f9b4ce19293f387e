//! Fully connected binary classifier: three hidden layers, a sigmoid output
//! unit and cross-entropy loss with an L2 penalty on the weights.
//!
//! Parameters live in one flat vector (`[W1, b1, W2, b2, ...]`, weights
//! row-major as `out x in`) so every solver works on the same representation.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::boost::sigmoid;
use super::params::ParamReader;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sgd,
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub solver: Solver,
    pub alpha: f64,
    pub adaptive: bool,
    pub learning_rate_init: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl MlpParams {
    pub(crate) fn from_config(config: &ModelConfig) -> Result<Self> {
        let mut r = ParamReader::new("mlp", &config.params);
        let hidden = r.ints_or("hidden_layer_sizes", &[128, 128, 128])?;
        let activation = match r.choice("activation", &["tanh", "relu"], "relu")? {
            "tanh" => Activation::Tanh,
            _ => Activation::Relu,
        };
        let solver = match r.choice("solver", &["sgd", "adam", "lbfgs"], "adam")? {
            "sgd" => Solver::Sgd,
            "lbfgs" => Solver::Lbfgs,
            _ => Solver::Adam,
        };
        let p = MlpParams {
            hidden: Vec::new(),
            activation,
            solver,
            alpha: r.f64_or("alpha", 1e-4)?,
            adaptive: r.choice("learning_rate", &["constant", "adaptive"], "constant")?
                == "adaptive",
            learning_rate_init: r.f64_or("learning_rate_init", 1e-3)?,
            max_iter: r.usize_or("max_iter", 500)?,
            batch_size: r.usize_or("batch_size", 32)?.max(1),
            momentum: r.f64_or("momentum", 0.9)?,
            tol: r.f64_or("tol", 1e-6)?,
            n_iter_no_change: r.usize_or("n_iter_no_change", 10)?,
        };
        r.finish()?;
        if hidden.len() != 3 || hidden.iter().any(|&h| h < 1) {
            return Err(Error::Config(format!(
                "mlp: hidden_layer_sizes must list three positive widths, got {hidden:?}"
            )));
        }
        if p.alpha < 0.0 || !(p.learning_rate_init > 0.0) {
            return Err(Error::Config("mlp: alpha must be >= 0 and learning_rate_init > 0".into()));
        }
        Ok(MlpParams {
            hidden: hidden.into_iter().map(|h| h as usize).collect(),
            ..p
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Layer widths from input to the single output unit.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Per-sample weighted batch used by the loss.
pub struct Batch<'a> {
    pub rows: Vec<&'a [f64]>,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Network {
    pub fn n_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Glorot-uniform initialisation; the output layer uses the narrower
    /// bound suited to a logistic unit.
    pub fn init(sizes: Vec<usize>, activation: Activation, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(Self::n_params(&sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let factor = if l == last { 2.0 } else { 6.0 };
            let bound = (factor / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for _ in 0..(w[1] * w[0] + w[1]) {
                params.push(dist.sample(&mut rng));
            }
        }
        Network {
            sizes,
            activation,
            params,
        }
    }

    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let bias = off + w[1] * w[0];
            out.push((off, bias));
            off = bias + w[1];
        }
        out
    }

    /// Activations of every layer for one sample; the last holds the logit.
    fn forward_with(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let n_layers = self.sizes.len() - 1;
        for (l, (w_off, b_off)) in self.offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                let z = params[b_off + o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                out.push(if l + 1 < n_layers {
                    self.activation.apply(z)
                } else {
                    z
                });
            }
            acts.push(out);
        }
        acts
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward_with(&self.params, x).last().expect("output layer")[0]
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean weighted cross-entropy plus `alpha / (2 B) * ||W||^2` (biases
    /// excluded) and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, params: &[f64], batch: &Batch, alpha: f64) -> (f64, Vec<f64>) {
        let b = batch.rows.len() as f64;
        let offsets = self.offsets();
        let n_layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for ((x, &y), &w) in batch.rows.iter().zip(&batch.labels).zip(&batch.weights) {
            let acts = self.forward_with(params, x);
            let z = acts[n_layers][0];
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            loss += w * (softplus - y * z);
            // delta at the output logit
            let mut delta = vec![w * (sigmoid(z) - y) / b];
            for l in (0..n_layers).rev() {
                let (w_off, b_off) = offsets[l];
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let input = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    grad[b_off + o] += d;
                    let g = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (gi, a) in g.iter_mut().zip(input) {
                        *gi += d * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                        for (p, wv) in prev.iter_mut().zip(row) {
                            *p += d * wv;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= self.activation.derivative(*a);
                    }
                    delta = prev;
                }
            }
        }
        loss /= b;
        let mut penalty = 0.0;
        for &(w_off, b_off) in &offsets {
            for k in w_off..b_off {
                penalty += params[k] * params[k];
                grad[k] += alpha * params[k] / b;
            }
        }
        loss += 0.5 * alpha * penalty / b;
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub network: Network,
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.network.probability(x)
    }
}

struct Plateau {
    best: f64,
    stalled: usize,
}

impl Plateau {
    /// Returns true once the loss has failed to improve on the best value by
    /// more than `tol` for more than `patience` consecutive checks.
    fn update(&mut self, loss: f64, tol: f64, patience: usize) -> bool {
        if loss > self.best - tol {
            self.stalled += 1;
        } else {
            self.stalled = 0;
        }
        self.best = self.best.min(loss);
        self.stalled > patience
    }
}

pub(crate) fn fit(
    params: &MlpParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    class_weight: [f64; 2],
    seed: u64,
) -> MlpModel {
    let mut sizes = vec![rows[0].len()];
    sizes.extend_from_slice(&params.hidden);
    sizes.push(1);
    let mut net = Network::init(sizes, params.activation, rng::child_seed(seed, 0));
    let loss_curve = match params.solver {
        Solver::Lbfgs => fit_lbfgs(&mut net, params, rows, labels, class_weight),
        Solver::Sgd | Solver::Adam => {
            fit_minibatch(&mut net, params, rows, labels, class_weight, seed)
        }
    };
    MlpModel {
        network: net,
        loss_curve,
    }
}

fn batch<'a>(rows: &'a [Vec<f64>], labels: &[u8], cw: [f64; 2], idx: &[usize]) -> Batch<'a> {
    Batch {
        rows: idx.iter().map(|&i| rows[i].as_slice()).collect(),
        labels: idx.iter().map(|&i| labels[i] as f64).collect(),
        weights: idx.iter().map(|&i| cw[labels[i] as usize]).collect(),
    }
}

fn fit_minibatch(
    net: &mut Network,
    p: &MlpParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    cw: [f64; 2],
    seed: u64,
) -> Vec<f64> {
    let n = rows.len();
    let bs = p.batch_size.min(n);
    let mut rng = rng::seeded(rng::child_seed(seed, 1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = p.learning_rate_init;
    let mut velocity = vec![0.0; net.params.len()];
    let (mut m, mut v) = (vec![0.0; net.params.len()], vec![0.0; net.params.len()]);
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut t = 0i32;
    let mut curve = Vec::new();
    let mut plateau = Plateau {
        best: f64::INFINITY,
        stalled: 0,
    };
    for _ in 0..p.max_iter {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            let b = batch(rows, labels, cw, chunk);
            let (loss, grad) = net.loss_and_grad(&net.params, &b, p.alpha);
            epoch_loss += loss * chunk.len() as f64;
            match p.solver {
                Solver::Sgd => {
                    for ((w, vel), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                        *vel = p.momentum * *vel - lr * g;
                        // Nesterov look-ahead
                        *w += p.momentum * *vel - lr * g;
                    }
                }
                _ => {
                    t += 1;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let step = lr * c2.sqrt() / c1;
                    for (((w, mi), vi), g) in
                        net.params.iter_mut().zip(&mut m).zip(&mut v).zip(&grad)
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        *w -= step * *mi / (vi.sqrt() + eps);
                    }
                }
            }
        }
        let loss = epoch_loss / n as f64;
        curve.push(loss);
        if !loss.is_finite() {
            break;
        }
        if plateau.update(loss, p.tol, p.n_iter_no_change) {
            if p.adaptive && lr > 1e-6 {
                lr /= 5.0;
                plateau.stalled = 0;
            } else {
                break;
            }
        }
    }
    curve
}

/// Full-batch limited-memory BFGS with a backtracking Armijo line search.
fn fit_lbfgs(
    net: &mut Network,
    p: &MlpParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    cw: [f64; 2],
) -> Vec<f64> {
    const MEMORY: usize = 10;
    let all: Vec<usize> = (0..rows.len()).collect();
    let b = batch(rows, labels, cw, &all);
    let eval = |x: &[f64]| net.loss_and_grad(x, &b, p.alpha);
    let mut x = net.params.clone();
    let (mut f, mut g) = eval(&x);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut curve = vec![f];
    let mut plateau = Plateau {
        best: f,
        stalled: 0,
    };
    for _ in 0..p.max_iter {
        if g.iter().all(|gi| gi.abs() < 1e-5) {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        } else {
            let norm = dot(&g, &g).sqrt().max(1.0);
            q.iter_mut().for_each(|v| *v /= norm);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            axpy(a - beta, s, &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + step * d).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        curve.push(f);
        if plateau.update(f, p.tol, p.n_iter_no_change) {
            break;
        }
    }
    net.params = x;
    curve
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params(solver: Solver) -> MlpParams {
        MlpParams {
            hidden: vec![8, 8, 8],
            activation: Activation::Tanh,
            solver,
            alpha: 1e-4,
            adaptive: false,
            learning_rate_init: 0.01,
            max_iter: 300,
            batch_size: 32,
            momentum: 0.9,
            tol: 1e-6,
            n_iter_no_change: 10,
        }
    }

    fn blobs() -> (Vec<Vec<f64>>, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let s = if i % 2 == 0 { -1.0 } else { 1.0 };
                vec![s + ((i * 13) % 7) as f64 / 20.0, s * 0.5 + ((i * 5) % 3) as f64 / 10.0]
            })
            .collect();
        let labels = (0..80).map(|i| (i % 2) as u8).collect();
        (rows, labels)
    }

    #[test]
    fn every_solver_learns_blobs() {
        let (rows, labels) = blobs();
        for solver in [Solver::Sgd, Solver::Adam, Solver::Lbfgs] {
            let m = fit(&tiny_params(solver), &rows, &labels, [1.0, 1.0], 1);
            let acc = rows
                .iter()
                .zip(&labels)
                .filter(|(r, &y)| ((m.score(r) >= 0.5) as u8) == y)
                .count();
            assert_eq!(acc, 80, "{solver:?}");
        }
    }

    #[test]
    fn param_count() {
        assert_eq!(Network::n_params(&[2, 3, 1]), 2 * 3 + 3 + 3 + 1);
        let net = Network::init(vec![2, 3, 4, 5, 1], Activation::Relu, 1);
        assert_eq!(net.params.len(), Network::n_params(&net.sizes));
    }

    #[test]
    fn relu_derivative_at_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
    }
}
