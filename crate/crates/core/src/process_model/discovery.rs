//! Inductive miner (noise-free variant) and process-tree to Petri-net
//! translation.
//!
//! The miner works on the multiset of activity sequences. At every level it
//! tries, in this order: the base cases, the empty-trace split, an exclusive
//! choice cut, a sequence cut, a parallel cut and a loop cut. When none
//! applies the sublog is covered by a flower model.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Arc, LabeledPetriNet, Marking, NetBuilder, PlaceId, TransitionId};
use crate::event_log::EventLog;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessTree {
    Activity(String),
    Tau,
    Sequence(Vec<ProcessTree>),
    Xor(Vec<ProcessTree>),
    Parallel(Vec<ProcessTree>),
    /// `body (redo body)*`
    Loop(Box<ProcessTree>, Box<ProcessTree>),
}

impl ProcessTree {
    pub fn activities(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_activities(&mut out);
        out
    }

    fn collect_activities(&self, out: &mut BTreeSet<String>) {
        match self {
            ProcessTree::Activity(a) => {
                out.insert(a.clone());
            }
            ProcessTree::Tau => {}
            ProcessTree::Sequence(c) | ProcessTree::Xor(c) | ProcessTree::Parallel(c) => {
                c.iter().for_each(|x| x.collect_activities(out))
            }
            ProcessTree::Loop(b, r) => {
                b.collect_activities(out);
                r.collect_activities(out);
            }
        }
    }

    /// Random execution of the tree. Loops repeat with probability
    /// `redo_probability` per iteration, capped at three redos.
    pub fn play_out<R: Rng>(&self, rng: &mut R, redo_probability: f64) -> Vec<String> {
        match self {
            ProcessTree::Activity(a) => vec![a.clone()],
            ProcessTree::Tau => vec![],
            ProcessTree::Sequence(c) => c
                .iter()
                .flat_map(|x| x.play_out(rng, redo_probability))
                .collect(),
            ProcessTree::Xor(c) => {
                let i = rng.gen_range(0..c.len());
                c[i].play_out(rng, redo_probability)
            }
            ProcessTree::Parallel(c) => {
                let mut queues: Vec<Vec<String>> = c
                    .iter()
                    .map(|x| {
                        let mut v = x.play_out(rng, redo_probability);
                        v.reverse();
                        v
                    })
                    .collect();
                let mut out = Vec::new();
                loop {
                    let live: Vec<usize> = (0..queues.len()).filter(|&i| !queues[i].is_empty()).collect();
                    if live.is_empty() {
                        break;
                    }
                    let pick = live[rng.gen_range(0..live.len())];
                    out.push(queues[pick].pop().unwrap());
                }
                out
            }
            ProcessTree::Loop(body, redo) => {
                let mut out = body.play_out(rng, redo_probability);
                let mut rounds = 0;
                while rounds < 3 && rng.gen_bool(redo_probability) {
                    out.extend(redo.play_out(rng, redo_probability));
                    out.extend(body.play_out(rng, redo_probability));
                    rounds += 1;
                }
                out
            }
        }
    }

    /// Translates the tree into a workflow net with places `source` and
    /// `sink`.
    pub fn to_petri_net(&self) -> Result<LabeledPetriNet> {
        let mut tr = Translator::default();
        let source = PlaceId::new("source");
        let sink = PlaceId::new("sink");
        tr.builder.add_place(source.clone());
        tr.builder.add_place(sink.clone());
        tr.translate(self, &source, &sink);
        tr.builder.set_markings(
            Marking::from_places([source.clone()]),
            Marking::from_places([sink.clone()]),
        );
        tr.builder.build()
    }
}

#[derive(Default)]
struct Translator {
    builder: NetBuilder,
    places: usize,
    transitions: usize,
}

impl Translator {
    fn place(&mut self) -> PlaceId {
        self.places += 1;
        let p = PlaceId::new(format!("p{}", self.places));
        self.builder.add_place(p.clone());
        p
    }

    fn transition(&mut self, label: Option<&str>, inputs: &[&PlaceId], outputs: &[&PlaceId]) {
        self.transitions += 1;
        let t = TransitionId::new(format!("t{}", self.transitions));
        self.builder.add_transition(t.clone(), label.map(str::to_string));
        for p in inputs {
            self.builder.add_arc(Arc::PlaceToTransition((*p).clone(), t.clone()));
        }
        for p in outputs {
            self.builder.add_arc(Arc::TransitionToPlace(t.clone(), (*p).clone()));
        }
    }

    fn translate(&mut self, node: &ProcessTree, input: &PlaceId, output: &PlaceId) {
        match node {
            ProcessTree::Activity(a) => self.transition(Some(a), &[input], &[output]),
            ProcessTree::Tau => self.transition(None, &[input], &[output]),
            ProcessTree::Sequence(children) => {
                let mut current = input.clone();
                for (i, child) in children.iter().enumerate() {
                    let next = if i + 1 == children.len() {
                        output.clone()
                    } else {
                        self.place()
                    };
                    self.translate(child, &current, &next);
                    current = next;
                }
            }
            ProcessTree::Xor(children) => {
                for child in children {
                    self.translate(child, input, output);
                }
            }
            ProcessTree::Parallel(children) => {
                let starts: Vec<PlaceId> = children.iter().map(|_| self.place()).collect();
                let ends: Vec<PlaceId> = children.iter().map(|_| self.place()).collect();
                self.transition(None, &[input], &starts.iter().collect::<Vec<_>>());
                for ((child, s), e) in children.iter().zip(&starts).zip(&ends) {
                    self.translate(child, s, e);
                }
                self.transition(None, &ends.iter().collect::<Vec<_>>(), &[output]);
            }
            ProcessTree::Loop(body, redo) => {
                let body_in = self.place();
                let body_out = self.place();
                self.transition(None, &[input], &[&body_in]);
                self.translate(body, &body_in, &body_out);
                self.translate(redo, &body_out, &body_in);
                self.transition(None, &[&body_out], &[output]);
            }
        }
    }
}

/// Discovers a workflow net that replays every trace of `log`.
pub fn discover_inductive(log: &EventLog) -> Result<LabeledPetriNet> {
    discover_tree(log)?.to_petri_net()
}

/// Runs the inductive miner and returns the process tree.
pub fn discover_tree(log: &EventLog) -> Result<ProcessTree> {
    if log.traces().is_empty() {
        return Err(Error::Empty("cannot discover a model from an empty log".into()));
    }
    let mut names: BTreeSet<String> = BTreeSet::new();
    for t in log.traces() {
        for a in t.activities() {
            names.insert(a.to_string());
        }
    }
    let names: Vec<String> = names.into_iter().collect();
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut sublog: SubLog = BTreeMap::new();
    for t in log.traces() {
        let seq: Vec<usize> = t.activities().iter().map(|a| index[a]).collect();
        *sublog.entry(seq).or_insert(0) += 1;
    }
    Ok(mine(&sublog, &names))
}

/// Multiset of activity-index sequences.
type SubLog = BTreeMap<Vec<usize>, usize>;

fn mine(log: &SubLog, names: &[String]) -> ProcessTree {
    let has_empty = log.keys().any(Vec::is_empty);
    let non_empty: SubLog = log
        .iter()
        .filter(|(t, _)| !t.is_empty())
        .map(|(t, c)| (t.clone(), *c))
        .collect();
    if non_empty.is_empty() {
        return ProcessTree::Tau;
    }
    if has_empty {
        return ProcessTree::Xor(vec![ProcessTree::Tau, mine(&non_empty, names)]);
    }

    let dfg = Dfg::new(log);
    if dfg.alphabet.len() == 1 {
        let a = *dfg.alphabet.iter().next().unwrap();
        let activity = ProcessTree::Activity(names[a].clone());
        return if log.keys().all(|t| t.len() == 1) {
            activity
        } else {
            ProcessTree::Loop(Box::new(activity), Box::new(ProcessTree::Tau))
        };
    }

    if let Some(parts) = dfg.xor_cut() {
        let children = parts
            .iter()
            .map(|part| mine(&project_by_membership(log, part), names))
            .collect();
        return ProcessTree::Xor(children);
    }
    if let Some(parts) = dfg.sequence_cut() {
        let children = parts
            .iter()
            .map(|part| mine(&project(log, part), names))
            .collect();
        return ProcessTree::Sequence(children);
    }
    if let Some(parts) = dfg.parallel_cut() {
        let children = parts
            .iter()
            .map(|part| mine(&project(log, part), names))
            .collect();
        return ProcessTree::Parallel(children);
    }
    if let Some((body, redos)) = dfg.loop_cut() {
        let (body_log, redo_logs) = split_loop(log, &body, &redos);
        let body_tree = mine(&body_log, names);
        let mut redo_trees: Vec<ProcessTree> =
            redo_logs.iter().map(|l| mine(l, names)).collect();
        let redo_tree = if redo_trees.len() == 1 {
            redo_trees.pop().unwrap()
        } else {
            ProcessTree::Xor(redo_trees)
        };
        return ProcessTree::Loop(Box::new(body_tree), Box::new(redo_tree));
    }

    flower(&dfg.alphabet, names)
}

fn flower(alphabet: &BTreeSet<usize>, names: &[String]) -> ProcessTree {
    let mut acts: Vec<ProcessTree> = alphabet
        .iter()
        .map(|&a| ProcessTree::Activity(names[a].clone()))
        .collect();
    let redo = if acts.len() == 1 {
        acts.pop().unwrap()
    } else {
        ProcessTree::Xor(acts)
    };
    ProcessTree::Loop(Box::new(ProcessTree::Tau), Box::new(redo))
}

fn project(log: &SubLog, part: &BTreeSet<usize>) -> SubLog {
    let mut out = SubLog::new();
    for (trace, count) in log {
        let p: Vec<usize> = trace.iter().copied().filter(|a| part.contains(a)).collect();
        *out.entry(p).or_insert(0) += count;
    }
    out
}

/// Keeps whole traces whose first activity lies in `part`.
fn project_by_membership(log: &SubLog, part: &BTreeSet<usize>) -> SubLog {
    log.iter()
        .filter(|(t, _)| t.first().is_some_and(|a| part.contains(a)))
        .map(|(t, c)| (t.clone(), *c))
        .collect()
}

fn split_loop(
    log: &SubLog,
    body: &BTreeSet<usize>,
    redos: &[BTreeSet<usize>],
) -> (SubLog, Vec<SubLog>) {
    let mut body_log = SubLog::new();
    let mut redo_logs = vec![SubLog::new(); redos.len()];
    let part_of = |a: usize| -> Option<usize> { redos.iter().position(|r| r.contains(&a)) };
    for (trace, count) in log {
        let mut segment: Vec<usize> = Vec::new();
        let mut current: Option<usize> = None;
        for &a in trace {
            let owner = if body.contains(&a) { None } else { part_of(a) };
            if owner != current && !segment.is_empty() {
                let target = match current {
                    None => &mut body_log,
                    Some(r) => &mut redo_logs[r],
                };
                *target.entry(std::mem::take(&mut segment)).or_insert(0) += count;
            }
            current = owner;
            segment.push(a);
        }
        if !segment.is_empty() {
            let target = match current {
                None => &mut body_log,
                Some(r) => &mut redo_logs[r],
            };
            *target.entry(segment).or_insert(0) += count;
        }
    }
    (body_log, redo_logs)
}

struct Dfg {
    alphabet: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize)>,
    start: BTreeSet<usize>,
    end: BTreeSet<usize>,
}

impl Dfg {
    fn new(log: &SubLog) -> Dfg {
        let mut dfg = Dfg {
            alphabet: BTreeSet::new(),
            edges: BTreeSet::new(),
            start: BTreeSet::new(),
            end: BTreeSet::new(),
        };
        for trace in log.keys() {
            if let (Some(&s), Some(&e)) = (trace.first(), trace.last()) {
                dfg.start.insert(s);
                dfg.end.insert(e);
            }
            dfg.alphabet.extend(trace.iter().copied());
            for w in trace.windows(2) {
                dfg.edges.insert((w[0], w[1]));
            }
        }
        dfg
    }

    fn has(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    fn xor_cut(&self) -> Option<Vec<BTreeSet<usize>>> {
        let mut uf = UnionFind::new(&self.alphabet);
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        let parts = uf.groups();
        (parts.len() > 1).then_some(parts)
    }

    fn reachability(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            succ.entry(a).or_default().push(b);
        }
        self.alphabet
            .iter()
            .map(|&a| {
                let mut seen = BTreeSet::new();
                let mut stack = succ.get(&a).cloned().unwrap_or_default();
                while let Some(x) = stack.pop() {
                    if seen.insert(x) {
                        if let Some(next) = succ.get(&x) {
                            stack.extend(next.iter().copied());
                        }
                    }
                }
                (a, seen)
            })
            .collect()
    }

    fn sequence_cut(&self) -> Option<Vec<BTreeSet<usize>>> {
        let reach = self.reachability();
        let reaches = |a: usize, b: usize| reach[&a].contains(&b);
        let mut uf = UnionFind::new(&self.alphabet);
        let acts: Vec<usize> = self.alphabet.iter().copied().collect();
        for (i, &a) in acts.iter().enumerate() {
            for &b in &acts[i + 1..] {
                if reaches(a, b) == reaches(b, a) {
                    uf.union(a, b);
                }
            }
        }
        let mut groups = uf.groups();
        if groups.len() < 2 {
            return None;
        }
        // Order groups by how many other groups reach into them.
        let reached_by = |g: &BTreeSet<usize>, groups: &[BTreeSet<usize>]| {
            groups
                .iter()
                .filter(|h| *h != g && h.iter().any(|&x| g.iter().any(|&y| reaches(x, y))))
                .count()
        };
        let snapshot = groups.clone();
        groups.sort_by_key(|g| (reached_by(g, &snapshot), g.iter().next().copied()));
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                for &a in &groups[i] {
                    for &b in &groups[j] {
                        if !reaches(a, b) || reaches(b, a) {
                            return None;
                        }
                    }
                }
            }
        }
        Some(groups)
    }

    fn parallel_cut(&self) -> Option<Vec<BTreeSet<usize>>> {
        let mut uf = UnionFind::new(&self.alphabet);
        let acts: Vec<usize> = self.alphabet.iter().copied().collect();
        for (i, &a) in acts.iter().enumerate() {
            for &b in &acts[i + 1..] {
                if !(self.has(a, b) && self.has(b, a)) {
                    uf.union(a, b);
                }
            }
        }
        let groups = uf.groups();
        if groups.len() < 2 {
            return None;
        }
        let valid = groups.iter().all(|g| {
            g.iter().any(|a| self.start.contains(a)) && g.iter().any(|a| self.end.contains(a))
        });
        valid.then_some(groups)
    }

    fn loop_cut(&self) -> Option<(BTreeSet<usize>, Vec<BTreeSet<usize>>)> {
        let mut body: BTreeSet<usize> = self.start.union(&self.end).copied().collect();
        let rest: BTreeSet<usize> = self.alphabet.difference(&body).copied().collect();
        if rest.is_empty() {
            return None;
        }
        let mut uf = UnionFind::new(&rest);
        for &(a, b) in &self.edges {
            if rest.contains(&a) && rest.contains(&b) {
                uf.union(a, b);
            }
        }
        let mut candidates = uf.groups();

        loop {
            let mut moved = false;
            let mut keep = Vec::new();
            for c in candidates.drain(..) {
                if self.is_redo(&c, &body) {
                    keep.push(c);
                } else {
                    body.extend(c.iter().copied());
                    moved = true;
                }
            }
            candidates = keep;
            if !moved {
                break;
            }
        }
        if candidates.is_empty() {
            return None;
        }
        Some((body, candidates))
    }

    fn is_redo(&self, part: &BTreeSet<usize>, body: &BTreeSet<usize>) -> bool {
        let mut entered = false;
        let mut exited = false;
        for &(a, b) in &self.edges {
            let (a_in, b_in) = (part.contains(&a), part.contains(&b));
            if !a_in && b_in {
                // Redo parts are entered only from end activities of the body.
                if !self.end.contains(&a) || !body.contains(&a) {
                    return false;
                }
                if !self.end.iter().all(|&e| self.has(e, b)) {
                    return false;
                }
                entered = true;
            }
            if a_in && !b_in {
                if !self.start.contains(&b) || !body.contains(&b) {
                    return false;
                }
                if !self.start.iter().all(|&s| self.has(a, s)) {
                    return false;
                }
                exited = true;
            }
        }
        entered && exited
    }
}

struct UnionFind {
    parent: BTreeMap<usize, usize>,
}

impl UnionFind {
    fn new(items: &BTreeSet<usize>) -> UnionFind {
        UnionFind {
            parent: items.iter().map(|&i| (i, i)).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let p = self.parent[&x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(hi, lo);
        }
    }

    /// Groups ordered by their smallest member.
    fn groups(&mut self) -> Vec<BTreeSet<usize>> {
        let keys: Vec<usize> = self.parent.keys().copied().collect();
        let mut by_root: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for k in keys {
            let r = self.find(k);
            by_root.entry(r).or_default().insert(k);
        }
        let mut groups: Vec<BTreeSet<usize>> = by_root.into_values().collect();
        groups.sort_by_key(|g| g.iter().next().copied());
        groups
    }
}
