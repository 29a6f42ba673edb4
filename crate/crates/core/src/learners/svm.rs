use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One-vs-rest linear SVM trained with Pegasos-style subgradient descent on
/// the hinge loss, with Platt sigmoids mapping margins to probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// Per class: weights followed by the bias term.
    pub weights: Vec<Vec<f64>>,
    /// Per class: sigmoid parameters (a, b) with p = 1 / (1 + exp(a f + b)).
    pub platt: Vec<(f64, f64)>,
}

fn margin(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn pegasos(x: &[&[f64]], y: &[f64], c: f64, epochs: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut averaged = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0.0;
    for epoch in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1.0;
            let eta = 1.0 / (lambda * t);
            let violated = y[i] * margin(&w, x[i]) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                for (wj, xj) in w.iter_mut().zip(x[i]) {
                    *wj += eta * y[i] * xj;
                }
                w[d] += eta * y[i];
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
            if 2 * epoch >= epochs {
                averaged += 1.0;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / averaged;
                }
            }
        }
    }
    avg
}

/// Platt scaling fitted by Newton's method with backtracking, using the
/// smoothed targets of Lin, Lin and Weng.
pub fn fit_platt(f: &[f64], positive: &[bool]) -> (f64, f64) {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        f.iter()
            .zip(&t)
            .map(|(&fi, &ti)| {
                let z = fi * a + b;
                if z >= 0.0 {
                    ti * z + (1.0 + (-z).exp()).ln()
                } else {
                    (ti - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };
    let sigma = 1e-12;
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&fi, &ti) in f.iter().zip(&t) {
            let z = fi * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = ti - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut improved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                improved = true;
                break;
            }
            step /= 2.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn sigmoid_platt(f: f64, (a, b): (f64, f64)) -> f64 {
    let z = a * f + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl LinearSvm {
    /// Trains on 80% of the rows and calibrates on the remaining 20%. Tables
    /// too small to spare a calibration split use all rows for both.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, c: f64, epochs: usize, seed: u64) -> LinearSvm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut rng);
        let n_cal = x.len() / 5;
        let (cal, train) = if n_cal >= 2 {
            order.split_at(n_cal)
        } else {
            (&order[..], &order[..])
        };
        let xt: Vec<&[f64]> = train.iter().map(|&i| x[i].as_slice()).collect();
        let mut weights = Vec::with_capacity(n_classes);
        let mut platt = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let yt: Vec<f64> = train.iter().map(|&i| if y[i] == k { 1.0 } else { -1.0 }).collect();
            let w = pegasos(&xt, &yt, c, epochs, &mut rng);
            let f: Vec<f64> = cal.iter().map(|&i| margin(&w, &x[i])).collect();
            let pos: Vec<bool> = cal.iter().map(|&i| y[i] == k).collect();
            platt.push(fit_platt(&f, &pos));
            weights.push(w);
        }
        LinearSvm { weights, platt }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.platt)
            .map(|(w, &p)| sigmoid_platt(margin(w, x), p))
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            raw.iter().map(|r| r / total).collect()
        } else {
            vec![1.0 / raw.len() as f64; raw.len()]
        }
    }
}
