use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::softmax;

/// One hidden ReLU layer followed by a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// hidden × inputs, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// outputs × hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub l2: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            momentum: 0.9,
            l2: 1e-4,
            patience: 15,
        }
    }
}

impl Mlp {
    pub fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Mlp {
        let he = |fan_in: usize| (6.0 / fan_in.max(1) as f64).sqrt();
        let a1 = he(inputs);
        let a2 = he(hidden);
        Mlp {
            inputs,
            hidden,
            outputs,
            w1: (0..hidden * inputs).map(|_| rng.gen_range(-a1..a1)).collect(),
            b1: vec![0.01; hidden],
            w2: (0..outputs * hidden).map(|_| rng.gen_range(-a2..a2)).collect(),
            b2: vec![0.0; outputs],
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters flattened as w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j]
            })
            .collect()
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b2[k]
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self.hidden_pre(x).into_iter().map(|z| z.max(0.0)).collect();
        softmax(&self.logits(&h))
    }

    /// Mean cross-entropy over the batch plus `l2/2` times the squared
    /// weight norm (biases excluded), with its gradient in [`Mlp::params`]
    /// layout.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let mut gw1 = vec![0.0; self.w1.len()];
        let mut gb1 = vec![0.0; self.b1.len()];
        let mut gw2 = vec![0.0; self.w2.len()];
        let mut gb2 = vec![0.0; self.b2.len()];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let pre = self.hidden_pre(x);
            let h: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
            let p = softmax(&self.logits(&h));
            loss -= p[y].max(1e-300).ln();
            let mut dz2 = p;
            dz2[y] -= 1.0;
            let mut dh = vec![0.0; self.hidden];
            for k in 0..self.outputs {
                gb2[k] += dz2[k];
                for j in 0..self.hidden {
                    gw2[k * self.hidden + j] += dz2[k] * h[j];
                    dh[j] += dz2[k] * self.w2[k * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                if pre[j] <= 0.0 {
                    continue;
                }
                gb1[j] += dh[j];
                let row = &mut gw1[j * self.inputs..(j + 1) * self.inputs];
                for (g, v) in row.iter_mut().zip(x.iter()) {
                    *g += dh[j] * v;
                }
            }
        }
        let mut grad = [gw1, gb1, gw2, gb2].concat();
        grad.iter_mut().for_each(|g| *g /= n);
        loss /= n;
        let nw1 = self.w1.len();
        let off2 = nw1 + self.b1.len();
        let weight_sq: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
        loss += 0.5 * l2 * weight_sq;
        for (g, w) in grad[..nw1].iter_mut().zip(&self.w1) {
            *g += l2 * w;
        }
        for (g, w) in grad[off2..off2 + self.w2.len()].iter_mut().zip(&self.w2) {
            *g += l2 * w;
        }
        (loss, grad)
    }

    fn mean_loss(&self, x: &[Vec<f64>], y: &[usize], idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| -self.predict_proba(&x[i])[y[i]].max(1e-300).ln())
            .sum::<f64>()
            / idx.len() as f64
    }

    /// Mini-batch SGD with momentum and a 1/(1 + epoch/50) learning-rate
    /// decay. A 10% validation split drives early stopping; the weights with
    /// the lowest validation loss are kept.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, hidden: usize, cfg: TrainConfig, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = x.first().map_or(0, Vec::len);
        let mut net = Mlp::new(d, hidden, n_classes, &mut rng);
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut rng);
        let n_val = x.len() / 10;
        let (val, train) = order.split_at(n_val);
        let mut train = train.to_vec();
        let val = val.to_vec();
        let mut velocity = vec![0.0; net.num_params()];
        let mut best = (f64::INFINITY, net.params());
        let mut stale = 0;
        for epoch in 0..cfg.epochs {
            train.shuffle(&mut rng);
            let lr = cfg.learning_rate / (1.0 + epoch as f64 / 50.0);
            for batch in train.chunks(cfg.batch_size.max(1)) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| x[i].as_slice()).collect();
                let ys: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let (_, grad) = net.loss_and_gradient(&xs, &ys, cfg.l2);
                let mut p = net.params();
                for ((v, g), w) in velocity.iter_mut().zip(&grad).zip(p.iter_mut()) {
                    *v = cfg.momentum * *v - lr * g;
                    *w += *v;
                }
                net.set_params(&p);
            }
            if val.is_empty() {
                continue;
            }
            let loss = net.mean_loss(x, y, &val);
            if loss < best.0 - 1e-9 {
                best = (loss, net.params());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        if !val.is_empty() {
            net.set_params(&best.1);
        }
        net
    }
}
