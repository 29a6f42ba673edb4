//! Token replay with greedy silent-path resolution.
//!
//! For each event the replayer fires a visible transition carrying the
//! event's activity. When none is enabled it searches breadth-first over
//! silent firings (depth at most [`SILENT_DEPTH`]) for the shortest sequence
//! that enables one; among shortest sequences the lexicographically smallest
//! by transition id wins. Events that cannot be replayed are skipped and
//! count against fitness. Decision visits are recorded only up to the first
//! deviation.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{LabeledPetriNet, PlaceId, TransitionId};
use crate::event_log::Trace;

pub const SILENT_DEPTH: usize = 20;
const MAX_EXPLORED: usize = 50_000;

/// A token leaving decision point `place` through `transition`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub place: PlaceId,
    pub transition: TransitionId,
    /// Index of the next visible firing (the trace length for visits made
    /// while completing to the final marking).
    pub event_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub firing_sequence: Vec<TransitionId>,
    pub visits: Vec<Visit>,
    /// Fraction of events replayed.
    pub fitness: f64,
    pub replayed_events: usize,
    pub first_deviation: Option<usize>,
    pub reached_final: bool,
}

impl ReplayResult {
    pub fn is_fitting(&self) -> bool {
        self.first_deviation.is_none() && self.reached_final
    }
}

/// Index-based view of a net for repeated replay.
pub struct Replayer<'a> {
    net: &'a LabeledPetriNet,
    transitions: Vec<TransitionId>,
    places: Vec<PlaceId>,
    pre: Vec<Vec<usize>>,
    post: Vec<Vec<usize>>,
    silent: Vec<usize>,
    by_label: BTreeMap<String, Vec<usize>>,
    decision_place: Vec<bool>,
    initial: Vec<u32>,
    final_marking: Vec<u32>,
}

type State = Vec<u32>;

impl<'a> Replayer<'a> {
    pub fn new(net: &'a LabeledPetriNet) -> Replayer<'a> {
        let places: Vec<PlaceId> = net.places().iter().cloned().collect();
        let place_idx: BTreeMap<&PlaceId, usize> =
            places.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let transitions: Vec<TransitionId> = net.transitions().cloned().collect();
        let pre = transitions
            .iter()
            .map(|t| net.preset(t).iter().map(|p| place_idx[p]).collect())
            .collect();
        let post = transitions
            .iter()
            .map(|t| net.postset(t).iter().map(|p| place_idx[p]).collect())
            .collect();
        let silent = (0..transitions.len())
            .filter(|&i| net.is_silent(&transitions[i]))
            .collect();
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in transitions.iter().enumerate() {
            if let Some(l) = net.label(t) {
                by_label.entry(l.to_string()).or_default().push(i);
            }
        }
        let decision_place = places
            .iter()
            .map(|p| net.place_postset(p).len() > 1)
            .collect();
        let to_state = |m: &super::Marking| {
            let mut s = vec![0u32; places.len()];
            for (p, c) in m.iter() {
                s[place_idx[p]] = c;
            }
            s
        };
        let initial = to_state(net.initial_marking());
        let final_marking = to_state(net.final_marking());
        Replayer {
            net,
            transitions,
            places,
            pre,
            post,
            silent,
            by_label,
            decision_place,
            initial,
            final_marking,
        }
    }

    pub fn net(&self) -> &LabeledPetriNet {
        self.net
    }

    fn enabled(&self, state: &State, t: usize) -> bool {
        self.pre[t].iter().all(|&p| state[p] >= 1)
    }

    fn fire(&self, state: &mut State, t: usize) {
        for &p in &self.pre[t] {
            state[p] -= 1;
        }
        for &p in &self.post[t] {
            state[p] += 1;
        }
    }

    /// Shortest silent firing sequence from `state` to a state satisfying
    /// `goal`. Silent transitions are expanded in id order, so the first
    /// path found is the lexicographically smallest among the shortest.
    fn silent_path(&self, state: &State, goal: impl Fn(&State) -> bool) -> Option<Vec<usize>> {
        if goal(state) {
            return Some(Vec::new());
        }
        let mut seen: HashSet<State> = HashSet::new();
        seen.insert(state.clone());
        let mut queue: VecDeque<(State, Vec<usize>)> = VecDeque::new();
        queue.push_back((state.clone(), Vec::new()));
        while let Some((s, path)) = queue.pop_front() {
            if path.len() >= SILENT_DEPTH {
                continue;
            }
            for &t in &self.silent {
                if !self.enabled(&s, t) {
                    continue;
                }
                let mut next = s.clone();
                self.fire(&mut next, t);
                if !seen.insert(next.clone()) {
                    continue;
                }
                let mut p = path.clone();
                p.push(t);
                if goal(&next) {
                    return Some(p);
                }
                if seen.len() > MAX_EXPLORED {
                    return None;
                }
                queue.push_back((next, p));
            }
        }
        None
    }

    pub fn replay(&self, trace: &Trace) -> ReplayResult {
        let mut state = self.initial.clone();
        let mut firing_sequence = Vec::new();
        let mut visits = Vec::new();
        let mut replayed = 0usize;
        let mut first_deviation = None;

        let record = |state: &mut State,
                          t: usize,
                          event_index: usize,
                          deviated: bool,
                          firing_sequence: &mut Vec<TransitionId>,
                          visits: &mut Vec<Visit>| {
            if !deviated {
                for &p in &self.pre[t] {
                    if self.decision_place[p] {
                        visits.push(Visit {
                            place: self.places[p].clone(),
                            transition: self.transitions[t].clone(),
                            event_index,
                        });
                    }
                }
            }
            self.fire(state, t);
            firing_sequence.push(self.transitions[t].clone());
        };

        for (i, event) in trace.events.iter().enumerate() {
            let candidates = self
                .by_label
                .get(event.activity())
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let direct = candidates.iter().copied().find(|&t| self.enabled(&state, t));
            let plan = match direct {
                Some(t) => Some((Vec::new(), t)),
                None if candidates.is_empty() => None,
                None => self
                    .silent_path(&state, |s| candidates.iter().any(|&t| self.enabled(s, t)))
                    .map(|path| {
                        let mut s = state.clone();
                        for &x in &path {
                            self.fire(&mut s, x);
                        }
                        let t = candidates.iter().copied().find(|&t| self.enabled(&s, t));
                        (path, t.expect("goal state enables a candidate"))
                    }),
            };
            match plan {
                Some((path, t)) => {
                    let deviated = first_deviation.is_some();
                    for x in path {
                        record(&mut state, x, i, deviated, &mut firing_sequence, &mut visits);
                    }
                    record(&mut state, t, i, deviated, &mut firing_sequence, &mut visits);
                    replayed += 1;
                }
                None => {
                    if first_deviation.is_none() {
                        first_deviation = Some(i);
                    }
                }
            }
        }

        let target = &self.final_marking;
        let completion = self.silent_path(&state, |s| s == target);
        let reached_final = completion.is_some();
        if let Some(path) = completion {
            let deviated = first_deviation.is_some();
            for x in path {
                record(
                    &mut state,
                    x,
                    trace.len(),
                    deviated,
                    &mut firing_sequence,
                    &mut visits,
                );
            }
        }

        let fitness = if trace.is_empty() {
            if reached_final {
                1.0
            } else {
                0.0
            }
        } else {
            replayed as f64 / trace.len() as f64
        };
        ReplayResult {
            firing_sequence,
            visits,
            fitness,
            replayed_events: replayed,
            first_deviation,
            reached_final,
        }
    }
}

/// Replays one trace. Build a [`Replayer`] once when replaying many traces.
pub fn replay(net: &LabeledPetriNet, trace: &Trace) -> ReplayResult {
    Replayer::new(net).replay(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{Event, Trace};
    use crate::process_model::fixtures::n1;
    use crate::process_model::Marking;
    use chrono::{TimeZone, Utc};

    fn trace(acts: &[&str]) -> Trace {
        let t0 = Utc.with_ymd_and_hms(2022, 10, 5, 9, 0, 0).unwrap();
        Trace::new(
            "PO92",
            acts.iter()
                .enumerate()
                .map(|(i, a)| Event::new(format!("e{i}"), "PO92", a, t0 + chrono::Duration::hours(i as i64)))
                .collect(),
        )
    }

    #[test]
    fn standard_request_visits_p2_with_t2() {
        let r = replay(&n1(), &trace(&["Create Purchase Order", "Request Standard Approval"]));
        assert_eq!(r.fitness, 1.0);
        assert_eq!(
            r.visits,
            vec![Visit {
                place: PlaceId::new("p2"),
                transition: TransitionId::new("t2"),
                event_index: 1
            }]
        );
        assert!(!r.reached_final);
    }

    #[test]
    fn empty_trace_on_trivial_net() {
        let net = LabeledPetriNet::builder()
            .place("p")
            .initial(Marking::from_places(["p"]))
            .final_marking(Marking::from_places(["p"]))
            .build()
            .unwrap();
        let r = replay(&net, &trace(&[]));
        assert_eq!(r.fitness, 1.0);
        assert!(r.visits.is_empty());
        assert!(r.is_fitting());
    }

    #[test]
    fn unknown_activity_lowers_fitness() {
        let r = replay(
            &n1(),
            &trace(&[
                "Create Purchase Order",
                "Teleport",
                "Request Manager Approval",
                "Review Purchase Order",
                "Place Order",
            ]),
        );
        assert!(r.fitness < 1.0);
        assert_eq!(r.replayed_events, 4);
        assert_eq!(r.first_deviation, Some(1));
        assert!(!r.is_fitting());
        // Only the visit before the deviation survives.
        assert!(r.visits.is_empty());
    }

    #[test]
    fn silent_transitions_are_bridged() {
        // source -A-> p1 -tau-> p2 -B-> sink, plus p1 -C-> sink.
        let net = LabeledPetriNet::builder()
            .place("source")
            .place("p1")
            .place("p2")
            .place("sink")
            .transition("t1", Some("A"))
            .transition("t2", None)
            .transition("t3", Some("B"))
            .transition("t4", Some("C"))
            .arc_pt("source", "t1")
            .arc_tp("t1", "p1")
            .arc_pt("p1", "t2")
            .arc_tp("t2", "p2")
            .arc_pt("p2", "t3")
            .arc_tp("t3", "sink")
            .arc_pt("p1", "t4")
            .arc_tp("t4", "sink")
            .initial(Marking::from_places(["source"]))
            .final_marking(Marking::from_places(["sink"]))
            .build()
            .unwrap();
        let r = replay(&net, &trace(&["A", "B"]));
        assert!(r.is_fitting());
        assert_eq!(
            r.firing_sequence,
            vec![TransitionId::new("t1"), TransitionId::new("t2"), TransitionId::new("t3")]
        );
        assert_eq!(r.visits.len(), 1);
        assert_eq!(r.visits[0].transition, TransitionId::new("t2"));
        assert_eq!(r.visits[0].event_index, 1);
    }
}
