//! Model outputs over every coalition of a feature subset at once.
//!
//! For a sample `x`, a template row `t` and features `f_0..f_{m-1}`, mask
//! bit `k` selects `x[f_k]` over `t[f_k]`. Tables have `2^m` entries.

use super::svm::{Kernel, SvmModel};
use super::tree::{DecisionTree, Node};
use super::Scorer;

/// One model evaluation per mask.
pub(crate) fn by_evaluation<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    template: &[f64],
    features: &[usize],
    out: &mut [f64],
) {
    let mut buf = template.to_vec();
    for (mask, o) in out.iter_mut().enumerate() {
        for (k, &f) in features.iter().enumerate() {
            buf[f] = if mask >> k & 1 == 1 { x[f] } else { template[f] };
        }
        *o = model.score_unchecked(&buf);
    }
}

/// Bit position of each model feature inside the mask, if it has one.
pub(crate) fn bit_positions(n_features: usize, features: &[usize]) -> Vec<Option<u32>> {
    let mut pos = vec![None; n_features];
    for (k, &f) in features.iter().enumerate() {
        pos[f] = Some(k as u32);
    }
    pos
}

/// Adds `value` to every entry whose mask contains `on` and avoids `off`.
fn spread(out: &mut [f64], on: usize, off: usize, value: f64) {
    let free = (out.len() - 1) & !(on | off);
    let mut sub = free;
    loop {
        out[on | sub] += value;
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
}

/// Adds `leaf(value)` of `tree` to every mask's entry. Each root-to-leaf
/// path reachable by some mask is visited once, so the cost is one pass
/// over the table regardless of tree size.
pub(crate) fn add_tree(
    tree: &DecisionTree,
    x: &[f64],
    t: &[f64],
    pos: &[Option<u32>],
    leaf: &impl Fn(f64) -> f64,
    out: &mut [f64],
) {
    let mut stack = vec![(0usize, 0usize, 0usize)];
    while let Some((node, on, off)) = stack.pop() {
        match &tree.nodes[node] {
            Node::Leaf { value } => spread(out, on, off, leaf(*value)),
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let go = |v: f64| if v <= *threshold { *left } else { *right };
                let (via_x, via_t) = (go(x[*feature]), go(t[*feature]));
                match pos[*feature] {
                    _ if via_x == via_t => stack.push((via_x, on, off)),
                    None => stack.push((via_t, on, off)),
                    Some(k) => {
                        let bit = 1usize << k;
                        if on & bit != 0 {
                            stack.push((via_x, on, off));
                        } else if off & bit != 0 {
                            stack.push((via_t, on, off));
                        } else {
                            stack.push((via_x, on | bit, off));
                            stack.push((via_t, on, off | bit));
                        }
                    }
                }
            }
        }
    }
}

/// Decision values of an SVM over every mask.
pub(crate) fn svm_table(model: &SvmModel, x: &[f64], t: &[f64], features: &[usize], out: &mut [f64]) {
    out.fill(model.bias);
    let m = features.len();
    match model.kernel {
        Kernel::Linear => {
            // w·z is linear in z, so each bit adds a fixed increment
            let mut w = vec![0.0; x.len()];
            for (sv, c) in model.support_vectors.iter().zip(&model.dual_coef) {
                w.iter_mut().zip(sv).for_each(|(wi, s)| *wi += c * s);
            }
            let base: f64 = w.iter().zip(t).map(|(a, b)| a * b).sum();
            let inc: Vec<f64> = features.iter().map(|&f| w[f] * (x[f] - t[f])).collect();
            let mut lin = vec![0.0; 1 << m];
            lin[0] = base;
            for mask in 1..1usize << m {
                let k = mask.trailing_zeros() as usize;
                lin[mask] = lin[mask & (mask - 1)] + inc[k];
            }
            out.iter_mut().zip(&lin).for_each(|(o, l)| *o += l);
        }
        Kernel::Rbf { gamma } => {
            // exp(-γ‖z - s‖²) factorizes over features; every factor lies in
            // (0, 1], so partial products cannot overflow
            let lo = m / 2;
            let in_mask: Vec<bool> = {
                let mut v = vec![false; x.len()];
                features.iter().for_each(|&f| v[f] = true);
                v
            };
            for (sv, c) in model.support_vectors.iter().zip(&model.dual_coef) {
                let rest: f64 = (0..x.len())
                    .filter(|&f| !in_mask[f])
                    .map(|f| (x[f] - sv[f]).powi(2))
                    .sum();
                let factor = |k: usize, present: bool| {
                    let f = features[k];
                    let v = if present { x[f] } else { t[f] };
                    (-gamma * (v - sv[f]).powi(2)).exp()
                };
                let half = |range: std::ops::Range<usize>| {
                    let mut p = vec![1.0];
                    for k in range {
                        let (off, on) = (factor(k, false), factor(k, true));
                        let mut next: Vec<f64> = p.iter().map(|v| v * off).collect();
                        next.extend(p.iter().map(|v| v * on));
                        p = next;
                    }
                    p
                };
                let low = half(0..lo);
                let high = half(lo..m);
                let scale = c * (-gamma * rest).exp();
                for (h, ph) in high.iter().enumerate() {
                    let coef = scale * ph;
                    let row = &mut out[h << lo..(h + 1) << lo];
                    row.iter_mut().zip(&low).for_each(|(o, pl)| *o += coef * pl);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit_rows, Algorithm, ModelConfig, ParamValue, TrainedModel};
    use rand::Rng;

    fn data(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = crate::rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels = rows.iter().map(|r| (r[0] + 0.5 * r[1] - r[2] * r[3] > 0.0) as u8).collect();
        (rows, labels)
    }

    fn check(model: &TrainedModel, rows: &[Vec<f64>]) {
        let features = [0, 2, 3, 5];
        let x = &rows[0];
        for b in &rows[1..6] {
            let mut t = x.clone();
            features.iter().for_each(|&f| t[f] = b[f]);
            let mut fast = vec![0.0; 16];
            let mut slow = vec![0.0; 16];
            model.coalition_scores(x, &t, &features, &mut fast);
            by_evaluation(model, x, &t, &features, &mut slow);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{:?}: {a} vs {b}", model.config.algorithm);
            }
        }
    }

    #[test]
    fn tables_match_direct_evaluation() {
        let (rows, labels) = data(3);
        let configs = [
            ModelConfig::new(Algorithm::Svm, 1),
            ModelConfig::new(Algorithm::Svm, 1).with("kernel", ParamValue::from("linear")),
            ModelConfig::new(Algorithm::Rf, 1).with("n_estimators", ParamValue::Int(20)),
            ModelConfig::new(Algorithm::Xgb, 1).with("n_estimators", ParamValue::Int(20)),
            ModelConfig::new(Algorithm::Lgbm, 1).with("n_estimators", ParamValue::Int(20)),
        ];
        for c in configs {
            check(&fit_rows(&c, &rows, &labels).unwrap(), &rows);
        }
    }
}
