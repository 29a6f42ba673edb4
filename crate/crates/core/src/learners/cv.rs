use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, fit_matrix, metrics, ModelKind, Params};
use crate::situation::{FeatureEncoder, SituationTable};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub params: Params,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub folds: usize,
    pub rows: usize,
    /// Per-fold weighted F1 of the selected grid point.
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    pub best_params: Params,
    pub grid: Vec<GridResult>,
    /// The table held a single decision; the score is trivially 1.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Splits row indices into `k` folds stratified by label. Each class's rows
/// are shuffled and dealt round-robin, continuing where the previous class
/// stopped so that rare classes spread across folds.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

struct FoldData {
    x_train: Vec<Vec<f64>>,
    y_train: Vec<usize>,
    x_test: Vec<Vec<f64>>,
    y_test: Vec<usize>,
}

/// k-fold cross-validation of every grid point. The encoder is refit on
/// each training split. With fewer rows than folds, leave-one-out is used.
pub fn cross_validate(kind: ModelKind, table: &SituationTable, grid: &[Params], k: usize, seed: u64) -> Result<CvReport> {
    if table.is_empty() {
        return Err(Error::Empty("cannot cross-validate an empty situation table".into()));
    }
    if grid.iter().any(|p| p.kind() != kind) {
        return Err(Error::InvalidArgument(format!("grid contains parameters of another kind than {kind}")));
    }
    let default_grid;
    let grid = if grid.is_empty() {
        default_grid = super::default_grid(kind);
        &default_grid[..]
    } else {
        grid
    };
    let mut warnings = Vec::new();
    let n = table.len();
    let mut k = k.max(2);
    if n < k {
        warnings.push(format!("{n} rows < {k} folds; using leave-one-out"));
        k = n;
    }
    if table.distinct_decisions().len() == 1 || n < 2 {
        return Ok(CvReport {
            kind,
            folds: k,
            rows: n,
            fold_f1: vec![1.0; k],
            mean_f1: 1.0,
            best_params: grid[0].clone(),
            grid: Vec::new(),
            degenerate: true,
            warnings,
        });
    }
    let labels = table.labels();
    let n_classes = table.decision_point.alternatives.len();
    let folds = stratified_folds(&labels, k, seed);
    let data: Vec<FoldData> = par::map(&folds, |test| {
        let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let train_table = table.select(&train);
        let test_table = table.select(test);
        let enc = FeatureEncoder::fit(&train_table).expect("training split is non-empty");
        FoldData {
            x_train: enc.transform_table(&train_table),
            y_train: train_table.labels(),
            x_test: enc.transform_table(&test_table),
            y_test: test_table.labels(),
        }
    });
    let scores = par::map_range(grid.len() * k, |task| {
        let (g, f) = (task / k, task % k);
        let d = &data[f];
        let model = fit_matrix(&grid[g], &d.x_train, &d.y_train, n_classes, derive_seed(seed, f as u64));
        let pred: Vec<usize> = d.x_test.iter().map(|x| argmax(&model.predict_proba(x))).collect();
        metrics::weighted_f1(&d.y_test, &pred, n_classes)
    });
    let results: Vec<GridResult> = grid
        .iter()
        .enumerate()
        .map(|(g, params)| {
            let fold_f1 = scores[g * k..(g + 1) * k].to_vec();
            let mean_f1 = fold_f1.iter().sum::<f64>() / k as f64;
            GridResult {
                params: params.clone(),
                fold_f1,
                mean_f1,
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        let b = &results[best];
        let better = r.mean_f1 > b.mean_f1 + 1e-12
            || ((r.mean_f1 - b.mean_f1).abs() <= 1e-12 && r.params.complexity() < b.params.complexity());
        if better {
            best = i;
        }
    }
    Ok(CvReport {
        kind,
        folds: k,
        rows: n,
        fold_f1: results[best].fold_f1.clone(),
        mean_f1: results[best].mean_f1,
        best_params: results[best].params.clone(),
        grid: results,
        degenerate: false,
        warnings,
    })
}

/// Kind with the highest mean F1 among non-degenerate reports; ties go to
/// the simpler kind.
pub fn suggest_best(reports: &[CvReport]) -> Result<ModelKind> {
    let mut best: Option<&CvReport> = None;
    for r in reports.iter().filter(|r| !r.degenerate) {
        best = match best {
            None => Some(r),
            Some(b) if r.mean_f1 > b.mean_f1 + 1e-12 => Some(r),
            Some(b) if (r.mean_f1 - b.mean_f1).abs() <= 1e-12 && r.kind < b.kind => Some(r),
            keep => keep,
        };
    }
    best.map(|r| r.kind).ok_or(Error::AllDegenerate)
}
