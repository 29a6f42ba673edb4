/// `m[true][predicted]` counts.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1;
    }
    m
}

/// Per-class F1 from a confusion matrix; 0 when the class is neither
/// present nor predicted.
pub fn per_class_f1(m: &[Vec<usize>]) -> Vec<f64> {
    (0..m.len())
        .map(|k| {
            let tp = m[k][k] as f64;
            let fn_: f64 = m[k].iter().sum::<usize>() as f64 - tp;
            let fp: f64 = m.iter().map(|row| row[k]).sum::<usize>() as f64 - tp;
            let den = 2.0 * tp + fp + fn_;
            if den == 0.0 {
                0.0
            } else {
                2.0 * tp / den
            }
        })
        .collect()
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    if y_true.is_empty() {
        return 0.0;
    }
    let m = confusion_matrix(y_true, y_pred, n_classes);
    let f1 = per_class_f1(&m);
    let n = y_true.len() as f64;
    m.iter()
        .zip(&f1)
        .map(|(row, f)| row.iter().sum::<usize>() as f64 / n * f)
        .sum()
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
    if y_true.is_empty() {
        return 0.0;
    }
    y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64 / y_true.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        assert_eq!(weighted_f1(&[0, 1, 2, 1], &[0, 1, 2, 1], 3), 1.0);
    }

    #[test]
    fn hand_computed_binary() {
        // class 0: tp 1, fp 1, fn 1 -> 0.5; class 1: tp 1, fp 1, fn 1 -> 0.5
        let f = weighted_f1(&[0, 0, 1, 1], &[0, 1, 0, 1], 2);
        assert!((f - 0.5).abs() < 1e-15);
        // class 0: 2*3/(6+1) = 6/7 with support 3; class 1: 0
        let f = weighted_f1(&[0, 0, 0, 1], &[0, 0, 0, 0], 2);
        assert!((f - 0.75 * 6.0 / 7.0).abs() < 1e-15);
    }
}
