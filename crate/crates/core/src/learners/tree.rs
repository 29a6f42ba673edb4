//! CART classification trees (Gini) with cost-complexity pruning.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub proba: Vec<f64>,
    pub weight: f64,
    pub impurity: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    cfg: TreeConfig,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.first().map_or(0, Vec::len);
        match (self.cfg.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Best (feature, threshold, left rows, right rows) by weighted Gini.
    /// Rows are sorted by (value, row index) and splits fall only between
    /// distinct values, so the result does not depend on row order.
    fn best_split(&mut self, idx: &[usize], parent: &[f64], total: f64) -> Option<(usize, f64)> {
        let min_leaf = self.cfg.min_samples_leaf.max(1) as f64;
        let parent_score = total * gini(parent, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in self.candidate_features() {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0.0; self.n_classes];
            let mut wl = 0.0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left[self.y[i]] += self.w[i];
                wl += self.w[i];
                let (a, b) = (x[i][f], x[order[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let wr = total - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let score = wl * gini(&left, wl) + wr * gini(&right, wr);
                if parent_score - score > 1e-12 && best.is_none_or(|(s, _, _)| score < s) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let total: f64 = counts.iter().sum();
        let impurity = gini(&counts, total);
        let proba = counts.iter().map(|c| c / total).collect();
        let id = self.nodes.len();
        self.nodes.push(Node {
            proba,
            weight: total,
            impurity,
            split: None,
        });
        let min_leaf = self.cfg.min_samples_leaf.max(1) as f64;
        if depth >= self.cfg.max_depth || impurity <= 0.0 || total < 2.0 * min_leaf {
            return id;
        }
        if let Some((feature, threshold)) = self.best_split(&idx, &counts, total) {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
            let left = self.grow(l, depth + 1);
            let right = self.grow(r, depth + 1);
            self.nodes[id].split = Some(Split {
                feature,
                threshold,
                left,
                right,
            });
        }
        id
    }
}

impl DecisionTree {
    /// Grows a tree on rows with positive weight. Weights act as integer
    /// multiplicities (bootstrap counts), so Gini sums are exact.
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        cfg: TreeConfig,
        rng: Option<&mut R>,
    ) -> DecisionTree {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| weights[i] > 0.0).collect();
        let mut b = Builder {
            x,
            y,
            w: weights,
            n_classes,
            cfg,
            rng,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        DecisionTree { nodes: b.nodes }
    }

    fn leaf(&self, x: &[f64]) -> &Node {
        let mut node = &self.nodes[0];
        while let Some(s) = &node.split {
            node = &self.nodes[if x[s.feature] <= s.threshold { s.left } else { s.right }];
        }
        node
    }

    pub fn predict_proba(&self, x: &[f64]) -> &[f64] {
        &self.leaf(x).proba
    }

    pub fn num_leaves(&self) -> usize {
        self.reachable().iter().filter(|&&i| self.nodes[i].split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    fn reachable(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            if let Some(s) = &self.nodes[i].split {
                stack.push(s.right);
                stack.push(s.left);
            }
        }
        out
    }

    /// Minimal cost-complexity pruning: repeatedly collapses the weakest link
    /// while its effective alpha is at most `alpha`. Node risk is the node's
    /// weighted Gini impurity as a fraction of the root weight.
    pub fn prune(&mut self, alpha: f64) {
        if alpha <= 0.0 {
            return;
        }
        let root_weight = self.nodes[0].weight;
        let risk = |n: &Node| n.weight / root_weight * n.impurity;
        loop {
            // (subtree risk, leaves) per node, bottom-up over reachable nodes.
            let order = self.reachable();
            let mut stats = vec![(0.0, 0usize); self.nodes.len()];
            for &i in order.iter().rev() {
                stats[i] = match &self.nodes[i].split {
                    None => (risk(&self.nodes[i]), 1),
                    Some(s) => (stats[s.left].0 + stats[s.right].0, stats[s.left].1 + stats[s.right].1),
                };
            }
            let weakest = order
                .iter()
                .filter(|&&i| self.nodes[i].split.is_some())
                .map(|&i| {
                    let (r_sub, leaves) = stats[i];
                    ((risk(&self.nodes[i]) - r_sub) / (leaves as f64 - 1.0), i)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match weakest {
                Some((g, i)) if g <= alpha => self.nodes[i].split = None,
                _ => break,
            }
        }
        self.compact();
    }

    /// Drops unreachable nodes, renumbering in depth-first order.
    fn compact(&mut self) {
        let order = self.reachable();
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (k, &i) in order.iter().enumerate() {
            new_id[i] = k;
        }
        self.nodes = order
            .iter()
            .map(|&i| {
                let mut n = self.nodes[i].clone();
                if let Some(s) = &mut n.split {
                    s.left = new_id[s.left];
                    s.right = new_id[s.right];
                }
                n
            })
            .collect();
    }
}
