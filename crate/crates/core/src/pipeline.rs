//! The offline phase for one decision point: situation table, per-kind
//! cross-validation, model suggestion and final training.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event_log::EventLog;
use crate::explain::{Background, DEFAULT_BACKGROUND};
use crate::learners::{cross_validate, default_grid, suggest_best, train, CvReport, ModelKind, Params, TrainedDecisionModel};
use crate::process_model::{LabeledPetriNet, PlaceId};
use crate::situation::{extract_situation_table, FeatureEncoder, FeatureSpec, SituationTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineOptions {
    pub kinds: Vec<ModelKind>,
    /// Grids per kind; kinds without an entry use [`default_grid`].
    #[serde(default)]
    pub grids: BTreeMap<ModelKind, Vec<Params>>,
    pub folds: usize,
    pub seed: u64,
    pub background_size: usize,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            kinds: ModelKind::ALL.to_vec(),
            grids: BTreeMap::new(),
            folds: 5,
            seed: 42,
            background_size: DEFAULT_BACKGROUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub reports: Vec<CvReport>,
    /// `None` when every report is degenerate.
    pub suggested: Option<ModelKind>,
    pub model: TrainedDecisionModel,
    pub background: Background,
}

impl MiningOutcome {
    pub fn degenerate(&self) -> bool {
        self.suggested.is_none()
    }
}

/// Cross-validates every requested kind on `table`, suggests the best one and
/// trains it on the full table. A single-decision table yields a degenerate
/// constant model of the first requested kind.
pub fn mine_table(table: &SituationTable, opts: &MineOptions) -> Result<MiningOutcome> {
    mine_table_with_progress(table, opts, |_| {})
}

/// [`mine_table`] reporting the completed fraction after each kind.
pub fn mine_table_with_progress(
    table: &SituationTable,
    opts: &MineOptions,
    mut progress: impl FnMut(f64),
) -> Result<MiningOutcome> {
    if opts.kinds.is_empty() {
        return Err(Error::InvalidArgument("no model kinds requested".into()));
    }
    let steps = opts.kinds.len() as f64 + 1.0;
    let mut reports = Vec::with_capacity(opts.kinds.len());
    for (i, &kind) in opts.kinds.iter().enumerate() {
        let grid = opts.grids.get(&kind).cloned().unwrap_or_else(|| default_grid(kind));
        reports.push(cross_validate(kind, table, &grid, opts.folds, opts.seed)?);
        progress((i + 1) as f64 / steps);
    }
    let suggested = match suggest_best(&reports) {
        Ok(kind) => Some(kind),
        Err(Error::AllDegenerate) => None,
        Err(e) => return Err(e),
    };
    let report = match suggested {
        Some(kind) => reports.iter().find(|r| r.kind == kind).expect("suggested kind has a report"),
        None => &reports[0],
    };
    let encoder = FeatureEncoder::fit(table)?;
    let model = train(&report.best_params, table, &encoder, opts.seed)?;
    let background = if encoder.is_empty() {
        Background::new(vec![Vec::new()])?
    } else {
        Background::from_table(&encoder, table, opts.background_size, opts.seed)?
    };
    progress(1.0);
    Ok(MiningOutcome {
        reports,
        suggested,
        model,
        background,
    })
}

/// Extracts the situation table of `place` and mines it.
pub fn mine_decision_point(
    log: &EventLog,
    net: &LabeledPetriNet,
    place: &PlaceId,
    spec: &FeatureSpec,
    opts: &MineOptions,
) -> Result<(SituationTable, MiningOutcome)> {
    let table = extract_situation_table(log, net, place, spec)?;
    let outcome = mine_table(&table, opts)?;
    Ok((table, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{generate_synthetic_p2p, P2P_CUSTOMS_ACTIVITY};
    use crate::process_model::{decision_points, discover_inductive};

    fn customs() -> (EventLog, LabeledPetriNet, PlaceId) {
        let log = generate_synthetic_p2p(3, 120);
        let net = discover_inductive(&log).unwrap();
        let place = decision_points(&net)
            .into_iter()
            .find(|d| d.alternatives.iter().any(|t| net.label(t) == Some(P2P_CUSTOMS_ACTIVITY)))
            .unwrap()
            .place;
        (log, net, place)
    }

    #[test]
    fn mines_and_reports_progress() {
        let (log, net, place) = customs();
        let opts = MineOptions {
            kinds: vec![ModelKind::DecisionTree, ModelKind::Svm],
            ..MineOptions::default()
        };
        let table = extract_situation_table(&log, &net, &place, &FeatureSpec::all_from_log(&log)).unwrap();
        let mut seen = Vec::new();
        let out = mine_table_with_progress(&table, &opts, |p| seen.push(p)).unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*seen.last().unwrap(), 1.0);
        assert_eq!(out.reports.len(), 2);
        assert_eq!(Some(out.model.kind), out.suggested);
        assert!(out.background.len() <= DEFAULT_BACKGROUND);
    }

    #[test]
    fn constant_decision_is_degenerate() {
        let (log, net, place) = customs();
        let mut table = extract_situation_table(&log, &net, &place, &FeatureSpec::all_from_log(&log)).unwrap();
        let first = table.rows[0].decision.clone();
        table.rows.retain(|r| r.decision == first);
        let out = mine_table(&table, &MineOptions::default()).unwrap();
        assert!(out.degenerate());
        assert!(out.model.degenerate);
        assert_eq!(out.model.predict(&table.rows[0].features).argmax(), &first);
    }

    #[test]
    fn no_kinds_is_an_error() {
        let (log, net, place) = customs();
        let opts = MineOptions {
            kinds: Vec::new(),
            ..MineOptions::default()
        };
        assert!(mine_decision_point(&log, &net, &place, &FeatureSpec::default(), &opts).is_err());
    }
}
