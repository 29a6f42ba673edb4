use std::fmt::Write as _;

use super::{decision_points, Arc, LabeledPetriNet};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering with decision points filled and labelled.
pub fn export_dot(net: &LabeledPetriNet) -> String {
    let decisions = decision_points(net);
    let mut out = String::from("digraph petri_net {\n  rankdir=LR;\n");
    for p in net.places() {
        let tokens = net.initial_marking().tokens(p);
        let is_final = net.final_marking().tokens(p) > 0;
        let mut attrs = format!("shape=circle, label={}", quote(if tokens > 0 { "●" } else { "" }));
        if decisions.iter().any(|d| &d.place == p) {
            let _ = write!(
                attrs,
                ", style=filled, fillcolor=orange, xlabel={}",
                quote(p.as_str())
            );
        } else if is_final {
            attrs.push_str(", peripheries=2");
        }
        let _ = writeln!(out, "  {} [{attrs}];", quote(p.as_str()));
    }
    for t in net.transitions() {
        match net.label(t) {
            Some(label) => {
                let _ = writeln!(out, "  {} [shape=box, label={}];", quote(t.as_str()), quote(label));
            }
            None => {
                let _ = writeln!(
                    out,
                    "  {} [shape=box, style=filled, fillcolor=black, label=\"\", width=0.2];",
                    quote(t.as_str())
                );
            }
        }
    }
    for arc in net.arcs() {
        let (a, b) = match arc {
            Arc::PlaceToTransition(p, t) => (p.as_str(), t.as_str()),
            Arc::TransitionToPlace(t, p) => (t.as_str(), p.as_str()),
        };
        let _ = writeln!(out, "  {} -> {};", quote(a), quote(b));
    }
    out.push_str("}\n");
    out
}
