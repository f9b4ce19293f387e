//! Binary decision trees shared by the forest and both boosters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthPolicy {
    DepthWise,
    LeafWise,
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub policy: GrowthPolicy,
}

impl DecisionTree {
    pub fn leaf(value: f64, policy: GrowthPolicy) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { value }],
            policy,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Number of internal nodes splitting on each feature.
    pub fn split_counts(&self, n_features: usize) -> Vec<usize> {
        let mut counts = vec![0; n_features];
        for n in &self.nodes {
            if let Node::Split { feature, .. } = n {
                counts[*feature] += 1;
            }
        }
        counts
    }

    pub fn split_gains(&self, n_features: usize) -> Vec<f64> {
        let mut gains = vec![0.0; n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                gains[*feature] += gain;
            }
        }
        gains
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_internal()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }

    /// Every internal node refers to a feature below `n_features` and to
    /// child slots inside the arena, and every node is reachable from the root.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || reached[i] {
                return false;
            }
            reached[i] = true;
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = &self.nodes[i]
            {
                if *feature >= n_features {
                    return false;
                }
                stack.push(*left);
                stack.push(*right);
            }
        }
        reached.iter().all(|r| *r)
    }
}

/// Threshold strictly between two consecutive distinct sorted values such
/// that `lo <= t < hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

/// Sorts `indices` by the value of `feature`, ties by index.
pub(crate) fn sort_by_feature(indices: &mut [usize], rows: &[Vec<f64>], feature: usize) {
    indices.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]).then(a.cmp(&b)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> DecisionTree {
        DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 2.0,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
            policy: GrowthPolicy::DepthWise,
        }
    }

    #[test]
    fn routing_and_counts() {
        let t = stump();
        assert_eq!(t.predict(&[9.0, 0.5]), -1.0);
        assert_eq!(t.predict(&[9.0, 0.6]), 1.0);
        assert_eq!(t.split_counts(3), vec![0, 1, 0]);
        assert_eq!(t.split_gains(2), vec![0.0, 2.0]);
        assert_eq!(t.n_internal(), 1);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.depth(), 1);
        assert!(t.is_well_formed(2));
        assert!(!t.is_well_formed(1));
    }

    #[test]
    fn midpoint_is_between() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }
}
