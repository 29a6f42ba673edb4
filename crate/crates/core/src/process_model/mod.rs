//! Labeled Petri nets with token semantics, decision points, inductive
//! discovery, token replay, and PNML/DOT serialization.

mod discovery;
mod dot;
mod pnml;
mod replay;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use discovery::{discover_inductive, discover_tree, ProcessTree};
pub use dot::export_dot;
pub use pnml::{export_pnml, import_pnml};
pub use replay::{replay, ReplayResult, Replayer, Visit};

/// Compares identifiers so that embedded numbers sort numerically (`t2 < t10`).
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let na = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let nb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (da, db) = (&a[..na], &b[..nb]);
                let ta = trim_zeros(da);
                let tb = trim_zeros(db);
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then(na.cmp(&nb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[na..];
                b = &b[nb..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let n = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[n.min(digits.len().saturating_sub(1))..]
}

macro_rules! node_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                natural_cmp(&self.0, &other.0).then_with(|| self.0.cmp(&other.0))
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

node_id!(PlaceId);
node_id!(TransitionId);

/// Multiset of places.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Marking(BTreeMap<PlaceId, u32>);

impl Marking {
    pub fn new() -> Marking {
        Marking::default()
    }

    pub fn from_places<I, P>(places: I) -> Marking
    where
        I: IntoIterator<Item = P>,
        P: Into<PlaceId>,
    {
        let mut m = Marking::new();
        for p in places {
            m.add(&p.into(), 1);
        }
        m
    }

    pub fn tokens(&self, place: &PlaceId) -> u32 {
        self.0.get(place).copied().unwrap_or(0)
    }

    pub fn add(&mut self, place: &PlaceId, n: u32) {
        if n > 0 {
            *self.0.entry(place.clone()).or_insert(0) += n;
        }
    }

    /// Removes `n` tokens; returns false (and leaves the marking untouched)
    /// if there are fewer.
    pub fn remove(&mut self, place: &PlaceId, n: u32) -> bool {
        match self.0.get_mut(place) {
            Some(c) if *c >= n => {
                *c -= n;
                if *c == 0 {
                    self.0.remove(place);
                }
                true
            }
            _ => n == 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PlaceId, u32)> {
        self.0.iter().map(|(p, &c)| (p, c))
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (p, c)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if c > 1 {
                write!(f, "{c}*")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arc {
    PlaceToTransition(PlaceId, TransitionId),
    TransitionToPlace(TransitionId, PlaceId),
}

/// `N = (P, T, F, l)` plus initial and final markings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPetriNet {
    places: BTreeSet<PlaceId>,
    labels: BTreeMap<TransitionId, Option<String>>,
    arcs: BTreeSet<Arc>,
    initial_marking: Marking,
    final_marking: Marking,
    preset: BTreeMap<TransitionId, Vec<PlaceId>>,
    postset: BTreeMap<TransitionId, Vec<PlaceId>>,
    place_post: BTreeMap<PlaceId, Vec<TransitionId>>,
}

impl LabeledPetriNet {
    pub fn builder() -> NetBuilder {
        NetBuilder::default()
    }

    pub fn places(&self) -> &BTreeSet<PlaceId> {
        &self.places
    }

    pub fn transitions(&self) -> impl Iterator<Item = &TransitionId> {
        self.labels.keys()
    }

    pub fn num_transitions(&self) -> usize {
        self.labels.len()
    }

    /// `None` for silent transitions and for unknown ids.
    pub fn label(&self, t: &TransitionId) -> Option<&str> {
        self.labels.get(t).and_then(|l| l.as_deref())
    }

    pub fn is_silent(&self, t: &TransitionId) -> bool {
        matches!(self.labels.get(t), Some(None))
    }

    pub fn has_transition(&self, t: &TransitionId) -> bool {
        self.labels.contains_key(t)
    }

    pub fn arcs(&self) -> &BTreeSet<Arc> {
        &self.arcs
    }

    pub fn initial_marking(&self) -> &Marking {
        &self.initial_marking
    }

    pub fn final_marking(&self) -> &Marking {
        &self.final_marking
    }

    /// Input places `•t`.
    pub fn preset(&self, t: &TransitionId) -> &[PlaceId] {
        self.preset.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output places `t•`.
    pub fn postset(&self, t: &TransitionId) -> &[PlaceId] {
        self.postset.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Outgoing transitions `p•`, ordered by id.
    pub fn place_postset(&self, p: &PlaceId) -> &[TransitionId] {
        self.place_post.get(p).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Activity labels used by visible transitions.
    pub fn activities(&self) -> BTreeSet<&str> {
        self.labels.values().filter_map(|l| l.as_deref()).collect()
    }
}

#[derive(Debug, Default, Clone)]
pub struct NetBuilder {
    places: BTreeSet<PlaceId>,
    labels: BTreeMap<TransitionId, Option<String>>,
    arcs: BTreeSet<Arc>,
    initial_marking: Marking,
    final_marking: Marking,
}

impl NetBuilder {
    pub fn place(mut self, id: &str) -> Self {
        self.places.insert(PlaceId::new(id));
        self
    }

    pub fn transition(mut self, id: &str, label: Option<&str>) -> Self {
        self.labels.insert(TransitionId::new(id), label.map(str::to_string));
        self
    }

    pub fn arc_pt(mut self, p: &str, t: &str) -> Self {
        self.arcs
            .insert(Arc::PlaceToTransition(PlaceId::new(p), TransitionId::new(t)));
        self
    }

    pub fn arc_tp(mut self, t: &str, p: &str) -> Self {
        self.arcs
            .insert(Arc::TransitionToPlace(TransitionId::new(t), PlaceId::new(p)));
        self
    }

    pub fn initial(mut self, marking: Marking) -> Self {
        self.initial_marking = marking;
        self
    }

    pub fn final_marking(mut self, marking: Marking) -> Self {
        self.final_marking = marking;
        self
    }

    pub(crate) fn add_place(&mut self, id: PlaceId) {
        self.places.insert(id);
    }

    pub(crate) fn add_transition(&mut self, id: TransitionId, label: Option<String>) {
        self.labels.insert(id, label);
    }

    pub(crate) fn add_arc(&mut self, arc: Arc) {
        self.arcs.insert(arc);
    }

    pub(crate) fn set_markings(&mut self, initial: Marking, fin: Marking) {
        self.initial_marking = initial;
        self.final_marking = fin;
    }

    pub fn build(self) -> Result<LabeledPetriNet> {
        for t in self.labels.keys() {
            if self.places.contains(&PlaceId::new(t.as_str())) {
                return Err(Error::InvalidNet(format!("{t} is both a place and a transition")));
            }
        }
        for (t, label) in &self.labels {
            if matches!(label, Some(l) if l.is_empty()) {
                return Err(Error::InvalidNet(format!("transition {t} has an empty label")));
            }
        }
        let mut preset: BTreeMap<TransitionId, Vec<PlaceId>> = BTreeMap::new();
        let mut postset: BTreeMap<TransitionId, Vec<PlaceId>> = BTreeMap::new();
        let mut place_post: BTreeMap<PlaceId, Vec<TransitionId>> = BTreeMap::new();
        for arc in &self.arcs {
            let (p, t) = match arc {
                Arc::PlaceToTransition(p, t) | Arc::TransitionToPlace(t, p) => (p, t),
            };
            if !self.places.contains(p) {
                return Err(Error::InvalidNet(format!("arc references unknown place {p}")));
            }
            if !self.labels.contains_key(t) {
                return Err(Error::InvalidNet(format!("arc references unknown transition {t}")));
            }
            match arc {
                Arc::PlaceToTransition(p, t) => {
                    preset.entry(t.clone()).or_default().push(p.clone());
                    place_post.entry(p.clone()).or_default().push(t.clone());
                }
                Arc::TransitionToPlace(t, p) => {
                    postset.entry(t.clone()).or_default().push(p.clone());
                }
            }
        }
        for v in preset.values_mut().chain(postset.values_mut()) {
            v.sort();
        }
        for v in place_post.values_mut() {
            v.sort();
        }
        for (p, _) in self.initial_marking.iter().chain(self.final_marking.iter()) {
            if !self.places.contains(p) {
                return Err(Error::InvalidNet(format!("marking references unknown place {p}")));
            }
        }
        Ok(LabeledPetriNet {
            places: self.places,
            labels: self.labels,
            arcs: self.arcs,
            initial_marking: self.initial_marking,
            final_marking: self.final_marking,
            preset,
            postset,
            place_post,
        })
    }
}

/// A place with more than one outgoing transition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub place: PlaceId,
    pub alternatives: Vec<TransitionId>,
}

impl DecisionPoint {
    pub fn index_of(&self, t: &TransitionId) -> Option<usize> {
        self.alternatives.iter().position(|a| a == t)
    }
}

pub fn decision_points(net: &LabeledPetriNet) -> Vec<DecisionPoint> {
    net.places()
        .iter()
        .filter_map(|p| {
            let post = net.place_postset(p);
            (post.len() > 1).then(|| DecisionPoint {
                place: p.clone(),
                alternatives: post.to_vec(),
            })
        })
        .collect()
}

pub fn decision_point(net: &LabeledPetriNet, place: &PlaceId) -> Result<DecisionPoint> {
    decision_points(net)
        .into_iter()
        .find(|dp| &dp.place == place)
        .ok_or_else(|| Error::UnknownDecisionPoint(place.to_string()))
}

pub fn is_enabled(net: &LabeledPetriNet, marking: &Marking, t: &TransitionId) -> bool {
    net.has_transition(t) && net.preset(t).iter().all(|p| marking.tokens(p) >= 1)
}

pub fn enabled(net: &LabeledPetriNet, marking: &Marking) -> BTreeSet<TransitionId> {
    net.transitions()
        .filter(|t| is_enabled(net, marking, t))
        .cloned()
        .collect()
}

pub fn fire(net: &LabeledPetriNet, marking: &Marking, t: &TransitionId) -> Result<Marking> {
    if !is_enabled(net, marking, t) {
        return Err(Error::NotEnabled {
            transition: t.to_string(),
        });
    }
    let mut next = marking.clone();
    for p in net.preset(t) {
        next.remove(p, 1);
    }
    for p in net.postset(t) {
        next.add(p, 1);
    }
    Ok(next)
}


#[cfg(test)]
mod tests {
    use super::fixtures::n1;
    use super::*;

    fn t(id: &str) -> TransitionId {
        TransitionId::new(id)
    }

    #[test]
    fn natural_ordering_of_ids() {
        let mut ids = [t("t10"), t("t2"), t("t1"), t("t02")];
        ids.sort();
        let names: Vec<_> = ids.iter().map(TransitionId::as_str).collect();
        assert_eq!(names, vec!["t1", "t2", "t02", "t10"]);
    }

    #[test]
    fn p2_is_a_decision_point_of_n1() {
        let dps = decision_points(&n1());
        let p2 = dps.iter().find(|d| d.place.as_str() == "p2").unwrap();
        assert_eq!(p2.alternatives, vec![t("t2"), t("t3")]);
    }

    #[test]
    fn sequential_net_has_no_decision_points() {
        let net = LabeledPetriNet::builder()
            .place("a")
            .place("b")
            .transition("t", Some("X"))
            .arc_pt("a", "t")
            .arc_tp("t", "b")
            .build()
            .unwrap();
        assert!(decision_points(&net).is_empty());
    }

    #[test]
    fn enabled_sets() {
        let net = n1();
        assert_eq!(
            enabled(&net, &Marking::from_places(["p1"])),
            BTreeSet::from([t("t1")])
        );
        assert!(enabled(&net, &Marking::new()).is_empty());
        assert_eq!(
            enabled(&net, &Marking::from_places(["p2"])),
            BTreeSet::from([t("t2"), t("t3")])
        );
    }

    #[test]
    fn firing_t1_moves_the_token_to_p2() {
        let net = n1();
        let m = fire(&net, &Marking::from_places(["p1"]), &t("t1")).unwrap();
        assert_eq!(m, Marking::from_places(["p2"]));
        assert!(matches!(
            fire(&net, &m, &t("t1")),
            Err(Error::NotEnabled { .. })
        ));
    }

    #[test]
    fn happy_path_reaches_final_marking() {
        let net = n1();
        let mut m = net.initial_marking().clone();
        for id in ["t1", "t2", "t4", "t6"] {
            m = fire(&net, &m, &t(id)).unwrap();
        }
        assert_eq!(&m, net.final_marking());
    }

    #[test]
    fn self_loop_keeps_token_count() {
        let net = LabeledPetriNet::builder()
            .place("p")
            .transition("t", Some("X"))
            .arc_pt("p", "t")
            .arc_tp("t", "p")
            .build()
            .unwrap();
        let m = Marking::from_places(["p"]);
        assert_eq!(fire(&net, &m, &t("t")).unwrap(), m);
    }

    #[test]
    fn invalid_nets_are_rejected() {
        assert!(LabeledPetriNet::builder()
            .place("p")
            .arc_pt("p", "missing")
            .build()
            .is_err());
        assert!(LabeledPetriNet::builder()
            .place("x")
            .transition("x", None)
            .build()
            .is_err());
        assert!(LabeledPetriNet::builder()
            .transition("t", Some(""))
            .build()
            .is_err());
    }
}
