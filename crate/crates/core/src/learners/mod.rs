//! Decision models: five classifier families behind one numeric-vector
//! interface, cross-validated model selection, and a serializable trained
//! model bundling its encoder.

pub mod cv;
pub mod forest;
pub mod gbt;
pub mod metrics;
pub mod nn;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::process_model::{PlaceId, TransitionId};
use crate::situation::{FeatureEncoder, FeatureMapping, FeatureSpec, SituationTable};
use crate::{Error, Result};

pub use cv::{cross_validate, stratified_folds, suggest_best, CvReport, GridResult};

pub const MODEL_FORMAT: &str = "edm-decision-model";
pub const MODEL_VERSION: u32 = 1;

/// Ordered simplest first; ties in model selection go to the earlier kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    Svm,
    RandomForest,
    GradientBoostedTrees,
    NeuralNetwork,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::DecisionTree,
        ModelKind::Svm,
        ModelKind::RandomForest,
        ModelKind::GradientBoostedTrees,
        ModelKind::NeuralNetwork,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::Svm => "svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoostedTrees => "gradient_boosted_trees",
            ModelKind::NeuralNetwork => "neural_network",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    DecisionTree {
        max_depth: usize,
        min_samples_leaf: usize,
        ccp_alpha: f64,
    },
    Svm {
        c: f64,
        epochs: usize,
    },
    RandomForest {
        n_trees: usize,
        max_depth: usize,
        min_samples_leaf: usize,
    },
    GradientBoostedTrees {
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
    },
    NeuralNetwork {
        hidden: usize,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
    },
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Params::DecisionTree { .. } => ModelKind::DecisionTree,
            Params::Svm { .. } => ModelKind::Svm,
            Params::RandomForest { .. } => ModelKind::RandomForest,
            Params::GradientBoostedTrees { .. } => ModelKind::GradientBoostedTrees,
            Params::NeuralNetwork { .. } => ModelKind::NeuralNetwork,
        }
    }

    pub fn default_for(kind: ModelKind) -> Params {
        match kind {
            ModelKind::DecisionTree => Params::DecisionTree {
                max_depth: 5,
                min_samples_leaf: 5,
                ccp_alpha: 0.0,
            },
            ModelKind::Svm => Params::Svm { c: 0.1, epochs: 30 },
            ModelKind::RandomForest => Params::RandomForest {
                n_trees: 100,
                max_depth: 16,
                min_samples_leaf: 1,
            },
            ModelKind::GradientBoostedTrees => Params::GradientBoostedTrees {
                rounds: 100,
                learning_rate: 0.1,
                max_depth: 3,
            },
            ModelKind::NeuralNetwork => Params::NeuralNetwork {
                hidden: 32,
                epochs: 200,
                learning_rate: 0.05,
                batch_size: 32,
            },
        }
    }

    /// Size of the model the parameters describe; grid-search ties go to
    /// the smaller value.
    pub fn complexity(&self) -> f64 {
        match *self {
            Params::DecisionTree { max_depth, ccp_alpha, .. } => max_depth as f64 - ccp_alpha,
            Params::Svm { c, .. } => c,
            Params::RandomForest { n_trees, max_depth, .. } => (n_trees * max_depth) as f64,
            Params::GradientBoostedTrees { rounds, max_depth, .. } => (rounds * max_depth) as f64,
            Params::NeuralNetwork { hidden, .. } => hidden as f64,
        }
    }
}

/// Default hyperparameter grid of a kind.
pub fn default_grid(kind: ModelKind) -> Vec<Params> {
    match kind {
        ModelKind::DecisionTree => [3, 5, 8]
            .into_iter()
            .flat_map(|max_depth| {
                [0.0, 0.001, 0.01].into_iter().map(move |ccp_alpha| Params::DecisionTree {
                    max_depth,
                    min_samples_leaf: 5,
                    ccp_alpha,
                })
            })
            .collect(),
        ModelKind::Svm => [0.01, 0.1, 1.0]
            .into_iter()
            .map(|c| Params::Svm { c, epochs: 30 })
            .collect(),
        ModelKind::RandomForest => vec![Params::default_for(kind)],
        ModelKind::GradientBoostedTrees => [50, 100]
            .into_iter()
            .flat_map(|rounds| {
                [0.05, 0.1].into_iter().map(move |learning_rate| Params::GradientBoostedTrees {
                    rounds,
                    learning_rate,
                    max_depth: 3,
                })
            })
            .collect(),
        ModelKind::NeuralNetwork => [16, 32]
            .into_iter()
            .map(|hidden| Params::NeuralNetwork {
                hidden,
                epochs: 200,
                learning_rate: 0.05,
                batch_size: 32,
            })
            .collect(),
    }
}

/// Anything mapping an encoded row to a probability vector.
pub trait Classifier: Sync {
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;
}

/// The fitted parameters of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Fitted {
    Constant { class: usize, n_classes: usize },
    DecisionTree(tree::DecisionTree),
    RandomForest(forest::RandomForest),
    GradientBoostedTrees(gbt::GradientBoosting),
    Svm(svm::LinearSvm),
    NeuralNetwork(nn::Mlp),
}

impl Fitted {
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Fitted::Constant { class, n_classes } => {
                let mut p = vec![0.0; *n_classes];
                p[*class] = 1.0;
                p
            }
            Fitted::DecisionTree(t) => t.predict_proba(x).to_vec(),
            Fitted::RandomForest(f) => f.predict_proba(x),
            Fitted::GradientBoostedTrees(g) => g.predict_proba(x),
            Fitted::Svm(s) => s.predict_proba(x),
            Fitted::NeuralNetwork(n) => n.predict_proba(x),
        }
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// SplitMix64 step, used to derive independent stream seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits one family on an encoded matrix. A single observed class yields a
/// constant model.
pub fn fit_matrix(params: &Params, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Fitted {
    if let Some(&first) = y.first() {
        if y.iter().all(|&c| c == first) {
            return Fitted::Constant {
                class: first,
                n_classes,
            };
        }
    }
    match *params {
        Params::DecisionTree {
            max_depth,
            min_samples_leaf,
            ccp_alpha,
        } => {
            let cfg = tree::TreeConfig {
                max_depth,
                min_samples_leaf,
                max_features: None,
            };
            let mut t = tree::DecisionTree::fit::<ChaCha8Rng>(x, y, &vec![1.0; x.len()], n_classes, cfg, None);
            t.prune(ccp_alpha);
            Fitted::DecisionTree(t)
        }
        Params::Svm { c, epochs } => Fitted::Svm(svm::LinearSvm::fit(x, y, n_classes, c, epochs, seed)),
        Params::RandomForest {
            n_trees,
            max_depth,
            min_samples_leaf,
        } => Fitted::RandomForest(forest::RandomForest::fit(
            x,
            y,
            n_classes,
            n_trees,
            max_depth,
            min_samples_leaf,
            seed,
        )),
        Params::GradientBoostedTrees {
            rounds,
            learning_rate,
            max_depth,
        } => Fitted::GradientBoostedTrees(gbt::GradientBoosting::fit(x, y, n_classes, rounds, learning_rate, max_depth)),
        Params::NeuralNetwork {
            hidden,
            epochs,
            learning_rate,
            batch_size,
        } => {
            let cfg = nn::TrainConfig {
                epochs,
                learning_rate,
                batch_size,
                ..nn::TrainConfig::default()
            };
            Fitted::NeuralNetwork(nn::Mlp::fit(x, y, n_classes, hidden, cfg, seed))
        }
    }
}

/// Probability per alternative of a decision point, keyed by transition id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionMapping(pub BTreeMap<TransitionId, f64>);

impl DecisionMapping {
    pub fn from_vector(classes: &[TransitionId], p: &[f64]) -> DecisionMapping {
        DecisionMapping(classes.iter().cloned().zip(p.iter().copied()).collect())
    }

    pub fn get(&self, t: &TransitionId) -> f64 {
        self.0.get(t).copied().unwrap_or(0.0)
    }

    /// Most likely transition; ties go to the smallest id.
    pub fn argmax(&self) -> &TransitionId {
        let mut best: Option<(&TransitionId, f64)> = None;
        for (t, &p) in &self.0 {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((t, p));
            }
        }
        best.expect("decision mapping is non-empty").0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDecisionModel {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub decision_point: PlaceId,
    /// Class order: the decision point's alternatives.
    pub classes: Vec<TransitionId>,
    pub feature_spec: FeatureSpec,
    pub encoder: FeatureEncoder,
    pub params: Params,
    pub seed: u64,
    pub training_rows: usize,
    /// Set when the training table held a single decision.
    pub degenerate: bool,
    pub model: Fitted,
}

/// Trains `params` on the whole table with the given encoder.
pub fn train(params: &Params, table: &SituationTable, encoder: &FeatureEncoder, seed: u64) -> Result<TrainedDecisionModel> {
    if table.is_empty() {
        return Err(Error::Empty("cannot train on an empty situation table".into()));
    }
    let x = encoder.transform_table(table);
    let y = table.labels();
    let classes = table.decision_point.alternatives.clone();
    let model = fit_matrix(params, &x, &y, classes.len(), seed);
    Ok(TrainedDecisionModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind: params.kind(),
        decision_point: table.decision_point.place.clone(),
        classes,
        feature_spec: table.feature_spec.clone(),
        encoder: encoder.clone(),
        params: params.clone(),
        seed,
        training_rows: table.len(),
        degenerate: table.distinct_decisions().len() == 1,
        model,
    })
}

impl TrainedDecisionModel {
    pub fn predict_vector(&self, x: &[f64]) -> Vec<f64> {
        self.model.predict_proba(x)
    }

    pub fn predict(&self, fmap: &FeatureMapping) -> DecisionMapping {
        DecisionMapping::from_vector(&self.classes, &self.predict_vector(&self.encoder.transform(fmap)))
    }

    pub fn class_index(&self, t: &TransitionId) -> Option<usize> {
        self.classes.iter().position(|c| c == t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(input: &str) -> Result<TrainedDecisionModel> {
        let m: TrainedDecisionModel = serde_json::from_str(input)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

impl Classifier for TrainedDecisionModel {
    fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.predict_vector(x)
    }
}
