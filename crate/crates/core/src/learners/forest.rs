use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::tree::{DecisionTree, TreeConfig};
use crate::par;

/// Bagged CART trees with per-split feature subsampling. The probability of
/// a class is the fraction of trees voting for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl RandomForest {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        n_trees: usize,
        max_depth: usize,
        min_samples_leaf: usize,
        seed: u64,
    ) -> RandomForest {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let cfg = TreeConfig {
            max_depth,
            min_samples_leaf,
            max_features: Some(((d as f64).sqrt().ceil() as usize).max(1)),
        };
        let trees = par::map_range(n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[rng.gen_range(0..n)] += 1.0;
            }
            DecisionTree::fit(x, y, &weights, n_classes, cfg, Some(&mut rng))
        });
        RandomForest { trees, n_classes }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            let p = t.predict_proba(x);
            // argmax, ties to the lowest class index
            let mut best = 0;
            for k in 1..p.len() {
                if p[k] > p[best] {
                    best = k;
                }
            }
            votes[best] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}
