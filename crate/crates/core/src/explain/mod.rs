//! Shapley attributions of decision-model outputs.
//!
//! The value of a coalition S is the model's mean output over a background
//! sample in which the columns of S are taken from the explained instance
//! and all other columns from the background row. Attribution units are
//! encoded columns or, with [`Grouping::BySource`], all columns of one
//! source feature moving together.

mod plots;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learners::{derive_seed, Classifier, TrainedDecisionModel};
use crate::process_model::TransitionId;
use crate::situation::{FeatureEncoder, FeatureMapping, SituationTable};
use crate::{par, Error, Result};

pub use plots::{bar_chart_svg, global_bundle, local_bundle, PlotBundle};

pub const MAX_EXACT_UNITS: usize = 20;
pub const DEFAULT_BACKGROUND: usize = 100;
pub const DEFAULT_PERMUTATIONS: usize = 200;

/// Encoded reference rows used to marginalize absent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    rows: Vec<Vec<f64>>,
}

impl Background {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Background> {
        let Some(first) = rows.first() else {
            return Err(Error::Empty("background has no rows".into()));
        };
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::InvalidArgument("background rows differ in length".into()));
        }
        Ok(Background { rows })
    }

    /// At most `max` rows drawn without replacement, kept in input order.
    pub fn sample(rows: &[Vec<f64>], max: usize, seed: u64) -> Result<Background> {
        if rows.len() <= max {
            return Background::new(rows.to_vec());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, rows.len(), max).into_vec();
        idx.sort_unstable();
        Background::new(idx.into_iter().map(|i| rows[i].clone()).collect())
    }

    pub fn from_table(encoder: &FeatureEncoder, table: &SituationTable, max: usize, seed: u64) -> Result<Background> {
        Background::sample(&encoder.transform_table(table), max, seed)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Columns,
    BySource,
}

/// A Shapley player: a named set of columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub name: String,
    pub columns: Vec<usize>,
}

pub fn units(encoder: &FeatureEncoder, grouping: Grouping) -> Vec<Unit> {
    match grouping {
        Grouping::Columns => encoder
            .column_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| Unit { name, columns: vec![i] })
            .collect(),
        Grouping::BySource => encoder
            .source_groups()
            .into_iter()
            .map(|(name, columns)| Unit { name, columns })
            .collect(),
    }
}

/// One unit per column, named `x0`, `x1`, ...
pub fn column_units(width: usize) -> Vec<Unit> {
    (0..width)
        .map(|i| Unit {
            name: format!("x{i}"),
            columns: vec![i],
        })
        .collect()
}

fn check_units(units: &[Unit], width: usize) -> Result<()> {
    let mut seen = vec![false; width];
    for u in units {
        for &c in &u.columns {
            if c >= width || seen[c] {
                return Err(Error::InvalidArgument(format!("unit {} has an invalid or shared column {c}", u.name)));
            }
            seen[c] = true;
        }
    }
    Ok(())
}

/// Mean model output over the background with `columns` taken from `x`.
/// Returns one value per class.
pub fn coalition_value(model: &dyn Classifier, x: &[f64], in_coalition: &[bool], bg: &Background) -> Vec<f64> {
    let k = model.n_classes();
    let mut acc = vec![0.0; k];
    let mut row = vec![0.0; x.len()];
    for b in bg.rows() {
        for j in 0..x.len() {
            row[j] = if in_coalition[j] { x[j] } else { b[j] };
        }
        for (a, p) in acc.iter_mut().zip(model.predict_proba(&row)) {
            *a += p;
        }
    }
    let n = bg.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// v(S) for one target class, with S given as a set of column indices.
pub fn value_function(model: &dyn Classifier, x: &[f64], subset: &[usize], bg: &Background, target: usize) -> Result<f64> {
    if bg.is_empty() {
        return Err(Error::Empty("background has no rows".into()));
    }
    let mut mask = vec![false; x.len()];
    for &c in subset {
        if c >= x.len() {
            return Err(Error::InvalidArgument(format!("column {c} out of range")));
        }
        mask[c] = true;
    }
    Ok(coalition_value(model, x, &mask, bg)[target])
}

/// Attributions for every class at once: `values[unit][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    pub base_value: Vec<f64>,
    pub predicted_value: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Standard errors per unit and class (sampled mode only).
    pub se: Option<Vec<Vec<f64>>>,
    /// Σψ − (v(F) − v(∅)) per class before any redistribution.
    pub residual: Vec<f64>,
    pub redistributed: bool,
}

fn unit_mask(units: &[Unit], width: usize, members: impl Iterator<Item = usize>) -> Vec<bool> {
    let mut m = vec![false; width];
    for u in members {
        for &c in &units[u].columns {
            m[c] = true;
        }
    }
    m
}

/// Exact Shapley values by enumerating all 2^m coalitions of the units.
pub fn exact_shap_values(model: &dyn Classifier, x: &[f64], bg: &Background, units: &[Unit]) -> Result<ShapValues> {
    let m = units.len();
    if m > MAX_EXACT_UNITS {
        return Err(Error::TooManyUnits {
            units: m,
            max: MAX_EXACT_UNITS,
        });
    }
    if bg.width() != x.len() {
        return Err(Error::InvalidArgument("instance and background widths differ".into()));
    }
    check_units(units, x.len())?;
    let k = model.n_classes();
    let v: Vec<Vec<f64>> = par::map_range(1usize << m, |s| {
        coalition_value(model, x, &unit_mask(units, x.len(), (0..m).filter(|u| s >> u & 1 == 1)), bg)
    });
    // weight[s] = s! (m - s - 1)! / m!
    let weights: Vec<f64> = (0..m)
        .map(|s| {
            let mut w = 1.0 / m as f64;
            // 1 / (m * C(m-1, s))
            for j in 0..s {
                w *= (j + 1) as f64 / (m - 1 - j) as f64;
            }
            w
        })
        .collect();
    let mut values = vec![vec![0.0; k]; m];
    for (i, vi) in values.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in 0..(1usize << m) {
            if s & bit != 0 {
                continue;
            }
            let w = weights[s.count_ones() as usize];
            for c in 0..k {
                vi[c] += w * (v[s | bit][c] - v[s][c]);
            }
        }
    }
    let full = (1usize << m) - 1;
    let residual = (0..k)
        .map(|c| values.iter().map(|u| u[c]).sum::<f64>() - (v[full][c] - v[0][c]))
        .collect();
    Ok(ShapValues {
        base_value: v[0].clone(),
        predicted_value: v[full].clone(),
        values,
        se: None,
        residual,
        redistributed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_permutations: usize,
    pub seed: u64,
    /// Spread the efficiency residual over units in proportion to |ψ̂|.
    pub redistribute: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            redistribute: true,
        }
    }
}

/// Monte Carlo Shapley values over uniformly random unit orderings.
pub fn sampled_shap_values(
    model: &dyn Classifier,
    x: &[f64],
    bg: &Background,
    units: &[Unit],
    cfg: SamplingConfig,
) -> Result<ShapValues> {
    if cfg.n_permutations == 0 {
        return Err(Error::InvalidArgument("n_permutations must be at least 1".into()));
    }
    if bg.width() != x.len() {
        return Err(Error::InvalidArgument("instance and background widths differ".into()));
    }
    check_units(units, x.len())?;
    let m = units.len();
    let k = model.n_classes();
    let base = coalition_value(model, x, &vec![false; x.len()], bg);
    let full = coalition_value(model, x, &vec![true; x.len()], bg);
    // contributions[p][unit][class]
    let contributions: Vec<Vec<Vec<f64>>> = par::map_range(cfg.n_permutations, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, p as u64));
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut out = vec![vec![0.0; k]; m];
        let mut mask = vec![false; x.len()];
        let mut prev = base.clone();
        for (pos, &u) in order.iter().enumerate() {
            for &c in &units[u].columns {
                mask[c] = true;
            }
            let cur = if pos + 1 == m {
                full.clone()
            } else {
                coalition_value(model, x, &mask, bg)
            };
            for c in 0..k {
                out[u][c] = cur[c] - prev[c];
            }
            prev = cur;
        }
        out
    });
    let n = cfg.n_permutations as f64;
    let mut values = vec![vec![0.0; k]; m];
    let mut se = vec![vec![0.0; k]; m];
    for u in 0..m {
        for c in 0..k {
            let mean = contributions.iter().map(|p| p[u][c]).sum::<f64>() / n;
            values[u][c] = mean;
            if cfg.n_permutations > 1 {
                let var = contributions.iter().map(|p| (p[u][c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                se[u][c] = (var / n).sqrt();
            }
        }
    }
    let residual: Vec<f64> = (0..k)
        .map(|c| values.iter().map(|u| u[c]).sum::<f64>() - (full[c] - base[c]))
        .collect();
    if cfg.redistribute {
        for c in 0..k {
            let total_abs: f64 = values.iter().map(|u| u[c].abs()).sum();
            for u in values.iter_mut() {
                let share = if total_abs > 0.0 {
                    u[c].abs() / total_abs
                } else {
                    1.0 / m as f64
                };
                u[c] -= residual[c] * share;
            }
        }
    }
    Ok(ShapValues {
        base_value: base,
        predicted_value: full,
        values,
        se: Some(se),
        residual,
        redistributed: cfg.redistribute,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled(SamplingConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Sampled(_) => "sampled",
        }
    }
}

pub fn shap_values(model: &dyn Classifier, x: &[f64], bg: &Background, units: &[Unit], method: Method) -> Result<ShapValues> {
    match method {
        Method::Exact => exact_shap_values(model, x, bg, units),
        Method::Sampled(cfg) => sampled_shap_values(model, x, bg, units, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub target: TransitionId,
    pub base_value: f64,
    pub predicted_value: f64,
    /// Ordered by |value| descending.
    pub attributions: Vec<Attribution>,
    pub method: String,
    pub grouping: Grouping,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_permutations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub residual_redistributed: bool,
}

impl ShapExplanation {
    pub fn total(&self) -> f64 {
        self.attributions.iter().map(|a| a.value).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanation serializes")
    }
}

fn feature_value(encoder: &FeatureEncoder, unit: &Unit, fmap: &FeatureMapping) -> Option<String> {
    unit.columns.first().and_then(|&c| encoder.raw_value(c, fmap))
}

/// Local explanation of a trained model's output for `target` (default:
/// the predicted transition).
pub fn explain_instance(
    model: &TrainedDecisionModel,
    fmap: &FeatureMapping,
    target: Option<&TransitionId>,
    bg: &Background,
    grouping: Grouping,
    method: Method,
) -> Result<ShapExplanation> {
    let x = model.encoder.transform(fmap);
    let target = match target {
        Some(t) => t.clone(),
        None => model.predict(fmap).argmax().clone(),
    };
    let class = model
        .class_index(&target)
        .ok_or_else(|| Error::InvalidArgument(format!("{target} is not an alternative of {}", model.decision_point)))?;
    let units = units(&model.encoder, grouping);
    let sv = shap_values(model, &x, bg, &units, method)?;
    let mut attributions: Vec<Attribution> = units
        .iter()
        .enumerate()
        .map(|(u, unit)| Attribution {
            name: unit.name.clone(),
            value: sv.values[u][class],
            feature_value: feature_value(&model.encoder, unit, fmap),
            se: sv.se.as_ref().map(|se| se[u][class]),
        })
        .collect();
    attributions.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    let (n_permutations, seed) = match method {
        Method::Exact => (None, None),
        Method::Sampled(cfg) => (Some(cfg.n_permutations), Some(cfg.seed)),
    };
    Ok(ShapExplanation {
        target,
        base_value: sv.base_value[class],
        predicted_value: sv.predicted_value[class],
        attributions,
        method: method.name().to_string(),
        grouping,
        n_permutations,
        seed,
        residual_redistributed: sv.redistributed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: TransitionId,
    /// Mean |ψ| per unit, in unit order.
    pub mean_abs: Vec<f64>,
    /// Per instance, ψ per unit (beeswarm data).
    pub shap: Vec<Vec<f64>>,
    pub base_value: f64,
}

impl TargetSummary {
    /// Units ranked by mean |ψ|, largest first.
    pub fn ranking<'a>(&self, units: &'a [String]) -> Vec<(&'a str, f64)> {
        let mut r: Vec<(&str, f64)> = units.iter().map(String::as_str).zip(self.mean_abs.iter().copied()).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1));
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub units: Vec<String>,
    pub instance_count: usize,
    pub method: String,
    pub grouping: Grouping,
    /// Per instance and unit: the encoded value when the unit is a single
    /// column (used to color beeswarm points).
    pub feature_values: Vec<Vec<Option<f64>>>,
    pub targets: Vec<TargetSummary>,
}

impl GlobalExplanation {
    pub fn target(&self, t: &TransitionId) -> Option<&TargetSummary> {
        self.targets.iter().find(|s| &s.target == t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("global explanation serializes")
    }
}

/// Mean absolute attributions over encoded instances, for the given target
/// classes.
pub fn global_explanation_matrix(
    model: &dyn Classifier,
    instances: &[Vec<f64>],
    classes: &[TransitionId],
    targets: &[usize],
    bg: &Background,
    units: &[Unit],
    method: Method,
) -> Result<GlobalExplanation> {
    if instances.is_empty() {
        return Err(Error::Empty("global explanation needs at least one instance".into()));
    }
    let per_instance: Vec<Result<ShapValues>> = par::map(instances, |x| shap_values(model, x, bg, units, method));
    let per_instance: Vec<ShapValues> = per_instance.into_iter().collect::<Result<_>>()?;
    let n = instances.len() as f64;
    let summaries = targets
        .iter()
        .map(|&c| {
            let shap: Vec<Vec<f64>> = per_instance
                .iter()
                .map(|sv| sv.values.iter().map(|u| u[c]).collect())
                .collect();
            let mean_abs = (0..units.len())
                .map(|u| shap.iter().map(|row| row[u].abs()).sum::<f64>() / n)
                .collect();
            TargetSummary {
                target: classes[c].clone(),
                mean_abs,
                shap,
                base_value: per_instance[0].base_value[c],
            }
        })
        .collect();
    let feature_values = instances
        .iter()
        .map(|x| {
            units
                .iter()
                .map(|u| (u.columns.len() == 1).then(|| x[u.columns[0]]))
                .collect()
        })
        .collect();
    Ok(GlobalExplanation {
        units: units.iter().map(|u| u.name.clone()).collect(),
        instance_count: instances.len(),
        method: method.name().to_string(),
        grouping: units_grouping(units),
        feature_values,
        targets: summaries,
    })
}

fn units_grouping(units: &[Unit]) -> Grouping {
    if units.iter().all(|u| u.columns.len() == 1) {
        Grouping::Columns
    } else {
        Grouping::BySource
    }
}

/// Global explanation of a trained model over feature mappings, for every
/// alternative of its decision point.
pub fn global_explanation(
    model: &TrainedDecisionModel,
    instances: &[FeatureMapping],
    bg: &Background,
    grouping: Grouping,
    method: Method,
) -> Result<GlobalExplanation> {
    let xs: Vec<Vec<f64>> = instances.iter().map(|f| model.encoder.transform(f)).collect();
    let targets: Vec<usize> = (0..model.classes.len()).collect();
    let mut g = global_explanation_matrix(model, &xs, &model.classes, &targets, bg, &units(&model.encoder, grouping), method)?;
    g.grouping = grouping;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Output depends on columns through a lookup of their signs.
    struct Lookup {
        table: Vec<f64>,
        width: usize,
    }

    impl Classifier for Lookup {
        fn n_classes(&self) -> usize {
            2
        }

        fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
            let idx = (0..self.width).fold(0, |acc, j| acc * 2 + usize::from(x[j] > 0.0));
            let p = self.table[idx];
            vec![p, 1.0 - p]
        }
    }

    struct Constant;

    impl Classifier for Constant {
        fn n_classes(&self) -> usize {
            2
        }

        fn predict_proba(&self, _: &[f64]) -> Vec<f64> {
            vec![0.3, 0.7]
        }
    }

    #[test]
    fn full_and_empty_coalitions() {
        let m = Lookup {
            table: vec![0.1, 0.4, 0.6, 0.9],
            width: 2,
        };
        let bg = Background::new(vec![vec![-1.0, -1.0], vec![1.0, -1.0]]).unwrap();
        let x = [1.0, 1.0];
        assert_eq!(value_function(&m, &x, &[0, 1], &bg, 0).unwrap(), 0.9);
        // composites (-,-) and (+,-): (0.1 + 0.6) / 2
        assert_eq!(value_function(&m, &x, &[], &bg, 0).unwrap(), 0.35);
        // S = {1}: (-,+) and (+,+): (0.4 + 0.9) / 2
        assert_eq!(value_function(&m, &x, &[1], &bg, 0).unwrap(), 0.65);
    }

    #[test]
    fn constant_model_gets_zero() {
        let bg = Background::new(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let sv = exact_shap_values(&Constant, &[5.0, 5.0, 5.0], &bg, &column_units(3)).unwrap();
        assert!(sv.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn two_player_closed_form() {
        let m = Lookup {
            table: vec![0.1, 0.4, 0.6, 0.9],
            width: 2,
        };
        let bg = Background::new(vec![vec![-1.0, -1.0]]).unwrap();
        let sv = exact_shap_values(&m, &[1.0, 1.0], &bg, &column_units(2)).unwrap();
        // ψ0 = ((0.6 - 0.1) + (0.9 - 0.4)) / 2
        assert!((sv.values[0][0] - 0.5).abs() < 1e-15);
        assert!((sv.values[1][0] - 0.3).abs() < 1e-15);
        assert!(sv.residual[0].abs() < 1e-15);
    }

    #[test]
    fn too_many_units_is_rejected() {
        let bg = Background::new(vec![vec![0.0; 21]]).unwrap();
        let err = exact_shap_values(&Constant, &[0.0; 21], &bg, &column_units(21));
        assert!(matches!(err, Err(Error::TooManyUnits { units: 21, max: 20 })));
    }

    #[test]
    fn sampled_is_reproducible_and_rejects_zero() {
        let m = Lookup {
            table: vec![0.1, 0.4, 0.6, 0.9, 0.2, 0.3, 0.7, 0.5],
            width: 3,
        };
        let bg = Background::new(vec![vec![-1.0, -1.0, 1.0], vec![1.0, -1.0, -1.0]]).unwrap();
        let x = [1.0, 1.0, 1.0];
        let cfg = SamplingConfig {
            n_permutations: 50,
            seed: 4,
            redistribute: true,
        };
        let a = sampled_shap_values(&m, &x, &bg, &column_units(3), cfg).unwrap();
        let b = sampled_shap_values(&m, &x, &bg, &column_units(3), cfg).unwrap();
        assert_eq!(a, b);
        let total: f64 = a.values.iter().map(|u| u[0]).sum();
        assert!((total - (a.predicted_value[0] - a.base_value[0])).abs() < 1e-12);
        let zero = SamplingConfig { n_permutations: 0, ..cfg };
        assert!(sampled_shap_values(&m, &x, &bg, &column_units(3), zero).is_err());
    }

    #[test]
    fn background_sampling_caps_and_keeps_order() {
        let rows: Vec<Vec<f64>> = (0..250).map(|i| vec![i as f64]).collect();
        let bg = Background::sample(&rows, 100, 1).unwrap();
        assert_eq!(bg.len(), 100);
        assert!(bg.rows().windows(2).all(|w| w[0][0] < w[1][0]));
        assert!(Background::new(Vec::new()).is_err());
    }

    #[test]
    fn global_of_single_instance_is_abs_local() {
        let m = Lookup {
            table: vec![0.1, 0.4, 0.6, 0.9],
            width: 2,
        };
        let bg = Background::new(vec![vec![-1.0, -1.0], vec![1.0, 1.0]]).unwrap();
        let units = column_units(2);
        let x = vec![1.0, -1.0];
        let local = exact_shap_values(&m, &x, &bg, &units).unwrap();
        let classes = [TransitionId::new("a"), TransitionId::new("b")];
        let g = global_explanation_matrix(&m, std::slice::from_ref(&x), &classes, &[0, 1], &bg, &units, Method::Exact).unwrap();
        for u in 0..2 {
            assert_eq!(g.targets[0].mean_abs[u], local.values[u][0].abs());
        }
        let doubled = global_explanation_matrix(&m, &[x.clone(), x], &classes, &[0], &bg, &units, Method::Exact).unwrap();
        assert_eq!(doubled.targets[0].mean_abs, g.targets[0].mean_abs);
    }
}
