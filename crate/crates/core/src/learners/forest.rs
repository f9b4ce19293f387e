//! Bagged classification trees with Gini or entropy impurity and per-node
//! feature subsampling. The forest score is the fraction of trees voting for
//! class 1.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::ParamReader;
use super::tree::{midpoint, sort_by_feature, DecisionTree, GrowthPolicy, Node};
use super::ModelConfig;
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a node with weighted class masses `w0`, `w1`.
    fn impurity(self, w0: f64, w1: f64) -> f64 {
        let total = w0 + w1;
        if total <= 0.0 {
            return 0.0;
        }
        let p0 = w0 / total;
        let p1 = w1 / total;
        match self {
            Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
            Criterion::Entropy => {
                let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                h(p0) + h(p1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
            MaxFeatures::All => d,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl ForestParams {
    pub(crate) fn from_config(config: &ModelConfig) -> Result<Self> {
        let mut r = ParamReader::new("rf", &config.params);
        let n_estimators = r.usize_or("n_estimators", 100)?;
        // `auto` is the classification alias of `sqrt`.
        let max_features = match r.choice("max_features", &["auto", "sqrt", "log2", "none"], "sqrt")? {
            "log2" => MaxFeatures::Log2,
            "none" => MaxFeatures::All,
            _ => MaxFeatures::Sqrt,
        };
        let max_depth = r.opt_limit("max_depth", None)?;
        let criterion = match r.choice("criterion", &["gini", "entropy"], "gini")? {
            "entropy" => Criterion::Entropy,
            _ => Criterion::Gini,
        };
        let min_samples_split = r.usize_or("min_samples_split", 2)?.max(2);
        let bootstrap = r.choice("bootstrap", &["true", "false"], "true")? == "true";
        r.finish()?;
        Ok(ForestParams {
            n_estimators,
            max_features,
            max_depth,
            criterion,
            min_samples_split,
            bootstrap,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Fraction of trees whose leaf votes class 1. A tree votes 1 when its
    /// leaf's weighted class-1 share is at least one half.
    pub fn score(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        let votes = self.trees.iter().filter(|t| t.predict(x) >= 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub(crate) fn fit(
    params: &ForestParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    class_weight: [f64; 2],
    seed: u64,
) -> ForestModel {
    let n = rows.len();
    let d = rows[0].len();
    let k = params.max_features.resolve(d);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::seeded(rng::child_seed(seed, t as u64));
            let mut counts = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            } else {
                counts.iter_mut().for_each(|c| *c = 1);
            }
            let weights: Vec<f64> = (0..n)
                .map(|i| counts[i] as f64 * class_weight[labels[i] as usize])
                .collect();
            let indices: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
            let mut builder = TreeBuilder {
                rows,
                labels,
                weights: &weights,
                params,
                k,
                d,
                rng,
                nodes: Vec::new(),
            };
            builder.grow(indices, 0);
            DecisionTree {
                nodes: builder.nodes,
                policy: GrowthPolicy::DepthWise,
            }
        })
        .collect();
    ForestModel { trees }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    weights: &'a [f64],
    params: &'a ForestParams,
    k: usize,
    d: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl TreeBuilder<'_> {
    fn masses(&self, indices: &[usize]) -> (f64, f64) {
        indices.iter().fold((0.0, 0.0), |(w0, w1), &i| {
            if self.labels[i] == 1 {
                (w0, w1 + self.weights[i])
            } else {
                (w0 + self.weights[i], w1)
            }
        })
    }

    fn grow(&mut self, mut indices: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let (w0, w1) = self.masses(&indices);
        let value = if w0 + w1 > 0.0 { w1 / (w0 + w1) } else { 0.5 };
        self.nodes.push(Node::Leaf { value });

        let pure = w0 == 0.0 || w1 == 0.0;
        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        if pure || !depth_ok || indices.len() < self.params.min_samples_split {
            return id;
        }
        let Some(best) = self.best_split(&mut indices, w0, w1) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][best.feature] <= best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
            gain: best.decrease,
        };
        id
    }

    /// Draws features in random order and evaluates the first `k` that admit
    /// a split, falling through to further features only when the drawn ones
    /// are constant on this node.
    fn best_split(&mut self, indices: &mut [usize], w0: f64, w1: f64) -> Option<Candidate> {
        let parent = self.params.criterion.impurity(w0, w1) * (w0 + w1);
        let mut features: Vec<usize> = (0..self.d).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for f in features {
            if visited >= self.k {
                break;
            }
            sort_by_feature(indices, self.rows, f);
            let first = self.rows[indices[0]][f];
            let last = self.rows[indices[indices.len() - 1]][f];
            if first == last {
                continue;
            }
            visited += 1;
            let (mut l0, mut l1) = (0.0, 0.0);
            for pos in 0..indices.len() - 1 {
                let i = indices[pos];
                if self.labels[i] == 1 {
                    l1 += self.weights[i];
                } else {
                    l0 += self.weights[i];
                }
                let here = self.rows[i][f];
                let next = self.rows[indices[pos + 1]][f];
                if here == next {
                    continue;
                }
                let (r0, r1) = (w0 - l0, w1 - l1);
                let child = self.params.criterion.impurity(l0, l1) * (l0 + l1)
                    + self.params.criterion.impurity(r0, r1) * (r0 + r1);
                let decrease = parent - child;
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(here, next),
                        decrease,
                    });
                }
            }
        }
        best
    }
}
