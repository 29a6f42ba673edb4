//! Multinomial gradient boosting with shallow regression trees.
//!
//! Each round fits one regression tree per class to the negative gradient
//! of the softmax log-loss (y_k − p_k); leaves take a single Newton step.

use serde::{Deserialize, Serialize};

use super::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf(v) => return *v,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

struct RegBuilder<'a> {
    x: &'a [Vec<f64>],
    residual: &'a [f64],
    max_depth: usize,
    leaf_value: &'a dyn Fn(&[usize]) -> f64,
    nodes: Vec<RegNode>,
}

impl RegBuilder<'_> {
    /// Split maximizing the reduction in squared error.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let base = total * total / n;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..d {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut sl = 0.0;
            for pos in 0..order.len() - 1 {
                sl += self.residual[order[pos]];
                let (a, b) = (x[order[pos]][f], x[order[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let sr = total - sl;
                let gain = sl * sl / nl + sr * sr / (n - nl) - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = a + (b - a) / 2.0;
                    best = Some((gain, f, if mid < b { mid } else { a }));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(RegNode::Leaf(0.0));
        let split = if depth < self.max_depth && idx.len() >= 2 {
            self.best_split(&idx)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
            None => self.nodes[id] = RegNode::Leaf((self.leaf_value)(&idx)),
        }
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[r][k]` is the tree for class k in round r.
    pub rounds: Vec<Vec<RegressionTree>>,
}

impl GradientBoosting {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
    ) -> GradientBoosting {
        let n = x.len();
        let k = n_classes;
        let mut prior = vec![0.0; k];
        for &c in y {
            prior[c] += 1.0 / n as f64;
        }
        let init: Vec<f64> = prior.iter().map(|p| p.max(1e-6).ln()).collect();
        let mut scores: Vec<Vec<f64>> = vec![init.clone(); n];
        let mut model = GradientBoosting {
            init,
            learning_rate,
            rounds: Vec::with_capacity(rounds),
        };
        let scale = (k as f64 - 1.0) / k as f64;
        for _ in 0..rounds {
            let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
            let mut trees = Vec::with_capacity(k);
            for class in 0..k {
                let residual: Vec<f64> = (0..n)
                    .map(|i| f64::from(u8::from(y[i] == class)) - probs[i][class])
                    .collect();
                let leaf_value = |idx: &[usize]| {
                    let num: f64 = idx.iter().map(|&i| residual[i]).sum();
                    let den: f64 = idx.iter().map(|&i| residual[i].abs() * (1.0 - residual[i].abs())).sum();
                    if den < 1e-12 {
                        0.0
                    } else {
                        scale * num / den
                    }
                };
                let mut b = RegBuilder {
                    x,
                    residual: &residual,
                    max_depth,
                    leaf_value: &leaf_value,
                    nodes: Vec::new(),
                };
                b.grow((0..n).collect(), 0);
                let tree = RegressionTree { nodes: b.nodes };
                for (i, s) in scores.iter_mut().enumerate() {
                    s[class] += learning_rate * tree.predict(&x[i]);
                }
                trees.push(tree);
            }
            model.rounds.push(trees);
        }
        model
    }

    pub fn decision_function(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.init.clone();
        for trees in &self.rounds {
            for (k, t) in trees.iter().enumerate() {
                s[k] += self.learning_rate * t.predict(x);
            }
        }
        s
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.decision_function(x))
    }
}
