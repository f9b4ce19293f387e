//! Second-order gradient boosting on the logistic loss.
//!
//! Both boosters share one split finder. They differ only in growth order:
//! depth-wise trees expand every node level by level up to `max_depth`;
//! leaf-wise trees repeatedly expand the leaf with the largest gain until
//! `num_leaves` is reached.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::params::ParamReader;
use super::tree::{midpoint, sort_by_feature, DecisionTree, GrowthPolicy, Node};
use super::ModelConfig;
use crate::error::Result;
use crate::rng;

/// Halving steps tried when a round would raise the training loss.
const MAX_STEP_HALVINGS: usize = 40;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub policy: GrowthPolicy,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub num_leaves: Option<usize>,
    /// Minimum loss reduction required to keep a split.
    pub min_split_gain: f64,
    pub colsample_bytree: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
}

impl BoostParams {
    pub(crate) fn xgb_from_config(config: &ModelConfig) -> Result<Self> {
        let mut r = ParamReader::new("xgb", &config.params);
        let p = BoostParams {
            policy: GrowthPolicy::DepthWise,
            n_estimators: r.usize_or("n_estimators", 100)?,
            learning_rate: r.f64_or("learning_rate", 0.3)?,
            max_depth: r.opt_limit("max_depth", Some(6))?,
            num_leaves: None,
            min_split_gain: r.f64_or("gamma", 0.0)?,
            colsample_bytree: r.f64_or("colsample_bytree", 1.0)?,
            reg_alpha: r.f64_or("reg_alpha", 0.0)?,
            reg_lambda: r.f64_or("reg_lambda", 1.0)?,
            min_child_weight: r.f64_or("min_child_weight", 1.0)?,
        };
        r.finish()?;
        p.validate()
    }

    pub(crate) fn lgbm_from_config(config: &ModelConfig) -> Result<Self> {
        let mut r = ParamReader::new("lgbm", &config.params);
        let p = BoostParams {
            policy: GrowthPolicy::LeafWise,
            n_estimators: r.usize_or("n_estimators", 100)?,
            learning_rate: r.f64_or("learning_rate", 0.1)?,
            max_depth: r.opt_limit("max_depth", None)?,
            num_leaves: Some(r.usize_or("num_leaves", 31)?.max(2)),
            min_split_gain: r.f64_or("min_split_gain", 0.0)?,
            colsample_bytree: r.f64_or("colsample_bytree", 1.0)?,
            reg_alpha: r.f64_or("reg_alpha", 0.0)?,
            reg_lambda: r.f64_or("reg_lambda", 0.0)?,
            min_child_weight: r.f64_or("min_child_weight", 1.0)?,
        };
        r.finish()?;
        p.validate()
    }

    fn validate(self) -> Result<Self> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must lie in (0, 1]");
        }
        if self.reg_alpha < 0.0 || self.reg_lambda < 0.0 || self.min_split_gain < 0.0 {
            return bad("regularization terms must be non-negative");
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<DecisionTree>,
    pub base_margin: f64,
    /// Weighted mean training log-loss before the first round and after each.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-y log p - (1-y) log(1-p)` written in terms of the margin.
pub fn logistic_loss(margin: f64, y: u8) -> f64 {
    let softplus = margin.max(0.0) + (-margin.abs()).exp().ln_1p();
    softplus - if y == 1 { margin } else { 0.0 }
}

impl BoostedModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn split_counts(&self, n_features: usize) -> Vec<usize> {
        let mut total = vec![0; n_features];
        for t in &self.trees {
            for (acc, c) in total.iter_mut().zip(t.split_counts(n_features)) {
                *acc += c;
            }
        }
        total
    }

    pub fn split_gains(&self, n_features: usize) -> Vec<f64> {
        let mut total = vec![0.0; n_features];
        for t in &self.trees {
            for (acc, g) in total.iter_mut().zip(t.split_gains(n_features)) {
                *acc += g;
            }
        }
        total
    }
}

fn weighted_loss(margins: &[f64], labels: &[u8], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    margins
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&m, &y), &w)| w * logistic_loss(m, y))
        .sum::<f64>()
        / total
}

pub(crate) fn fit(
    params: &BoostParams,
    rows: &[Vec<f64>],
    labels: &[u8],
    class_weight: [f64; 2],
    seed: u64,
) -> BoostedModel {
    let n = rows.len();
    let d = rows[0].len();
    let weights: Vec<f64> = labels.iter().map(|&y| class_weight[y as usize]).collect();
    let mut margins = vec![0.0; n];
    let mut model = BoostedModel {
        trees: Vec::new(),
        base_margin: 0.0,
        loss_history: vec![weighted_loss(&margins, labels, &weights)],
    };
    let mut rng = rng::seeded(seed);
    let n_cols = ((params.colsample_bytree * d as f64).round() as usize).clamp(1, d);

    for _ in 0..params.n_estimators {
        let mut grad = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad.push(weights[i] * (p - labels[i] as f64));
            hess.push(weights[i] * p * (1.0 - p));
        }
        let mut columns: Vec<usize> = (0..d).collect();
        if n_cols < d {
            columns.shuffle(&mut rng);
            columns.truncate(n_cols);
            columns.sort_unstable();
        }
        let grower = Grower {
            rows,
            grad: &grad,
            hess: &hess,
            columns: &columns,
            params,
        };
        let mut tree = grower.grow();

        let previous = *model.loss_history.last().expect("history seeded");
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let trial: Vec<f64> = margins
                .iter()
                .zip(rows)
                .map(|(m, x)| m + tree.predict(x))
                .collect();
            let loss = weighted_loss(&trial, labels, &weights);
            if loss <= previous {
                accepted = Some((trial, loss));
                break;
            }
            tree.scale_leaves(0.5);
        }
        match accepted {
            Some((trial, loss)) => {
                margins = trial;
                model.loss_history.push(loss);
            }
            None => {
                tree = DecisionTree::leaf(0.0, params.policy);
                model.loss_history.push(previous);
            }
        }
        model.trees.push(tree);
    }
    model
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    columns: &'a [usize],
    params: &'a BoostParams,
}

#[derive(Debug, Clone)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Pending {
    node: usize,
    depth: usize,
    indices: Vec<usize>,
    split: Option<SplitChoice>,
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

impl Grower<'_> {
    fn sums(&self, indices: &[usize]) -> (f64, f64) {
        indices
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]))
    }

    fn score_term(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.params.reg_alpha);
        t * t / (h + self.params.reg_lambda)
    }

    fn leaf_value(&self, indices: &[usize]) -> f64 {
        let (g, h) = self.sums(indices);
        let denom = h + self.params.reg_lambda;
        if denom <= 0.0 {
            return 0.0;
        }
        -soft_threshold(g, self.params.reg_alpha) / denom * self.params.learning_rate
    }

    fn depth_allows(&self, depth: usize) -> bool {
        self.params.max_depth.is_none_or(|m| depth < m)
    }

    fn best_split(&self, indices: &[usize], depth: usize) -> Option<SplitChoice> {
        if indices.len() < 2 || !self.depth_allows(depth) {
            return None;
        }
        let (g, h) = self.sums(indices);
        let parent = self.score_term(g, h);
        let mut order = indices.to_vec();
        let mut best: Option<SplitChoice> = None;
        for &f in self.columns {
            sort_by_feature(&mut order, self.rows, f);
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.rows[i][f];
                let next = self.rows[order[pos + 1]][f];
                if here == next {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score_term(gl, hl) + self.score_term(gr, hr) - parent)
                    - self.params.min_split_gain;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: midpoint(here, next),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&self) -> DecisionTree {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        let mut nodes = vec![Node::Leaf {
            value: self.leaf_value(&all),
        }];
        let root = Pending {
            node: 0,
            depth: 0,
            split: self.best_split(&all, 0),
            indices: all,
        };
        match self.params.policy {
            GrowthPolicy::DepthWise => self.grow_depth_wise(root, &mut nodes),
            GrowthPolicy::LeafWise => self.grow_leaf_wise(root, &mut nodes),
        }
        DecisionTree {
            nodes,
            policy: self.params.policy,
        }
    }

    fn expand(&self, leaf: Pending, nodes: &mut Vec<Node>) -> (Pending, Pending) {
        let split = leaf.split.expect("expanding a leaf with a split");
        let (li, ri): (Vec<usize>, Vec<usize>) = leaf
            .indices
            .iter()
            .partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf {
            value: self.leaf_value(&li),
        });
        let right = nodes.len();
        nodes.push(Node::Leaf {
            value: self.leaf_value(&ri),
        });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            gain: split.gain,
        };
        let depth = leaf.depth + 1;
        (
            Pending {
                node: left,
                depth,
                split: self.best_split(&li, depth),
                indices: li,
            },
            Pending {
                node: right,
                depth,
                split: self.best_split(&ri, depth),
                indices: ri,
            },
        )
    }

    fn grow_depth_wise(&self, root: Pending, nodes: &mut Vec<Node>) {
        let mut frontier = vec![root];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for leaf in frontier {
                if leaf.split.is_some() {
                    let (l, r) = self.expand(leaf, nodes);
                    next.push(l);
                    next.push(r);
                }
            }
            frontier = next;
        }
    }

    fn grow_leaf_wise(&self, root: Pending, nodes: &mut Vec<Node>) {
        let max_leaves = self.params.num_leaves.unwrap_or(usize::MAX);
        let mut leaves: BTreeMap<usize, Pending> = BTreeMap::new();
        leaves.insert(root.node, root);
        while leaves.len() < max_leaves {
            let best = leaves
                .iter()
                .filter_map(|(id, p)| p.split.as_ref().map(|s| (*id, s.gain)))
                .fold(None::<(usize, f64)>, |acc, (id, gain)| match acc {
                    Some((_, g)) if g >= gain => acc,
                    _ => Some((id, gain)),
                });
            let Some((id, _)) = best else { break };
            let leaf = leaves.remove(&id).expect("leaf present");
            let (l, r) = self.expand(leaf, nodes);
            leaves.insert(l.node, l);
            leaves.insert(r.node, r);
        }
    }
}
