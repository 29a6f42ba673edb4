//! PNML (place/transition net) import and export.
//!
//! Silent transitions are written with the ProM `$invisible$` tool-specific
//! marker; final markings use the `<finalmarkings>` extension understood by
//! ProM and pm4py.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::Event as XmlEvent;
use quick_xml::Reader;

use super::{Arc, LabeledPetriNet, Marking, NetBuilder, PlaceId, TransitionId};
use crate::{Error, Result};

const INVISIBLE: &str = "$invisible$";

pub fn export_pnml(net: &LabeledPetriNet) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pnml>\n");
    out.push_str(
        "  <net id=\"net1\" type=\"http://www.pnml.org/version-2009/grammar/pnmlcoremodel\">\n",
    );
    out.push_str("    <page id=\"n0\">\n");
    for p in net.places() {
        let id = escape(p.as_str());
        let _ = write!(out, "      <place id=\"{id}\">\n        <name><text>{id}</text></name>\n");
        let tokens = net.initial_marking().tokens(p);
        if tokens > 0 {
            let _ = writeln!(out, "        <initialMarking><text>{tokens}</text></initialMarking>");
        }
        out.push_str("      </place>\n");
    }
    for t in net.transitions() {
        let id = escape(t.as_str());
        let _ = writeln!(out, "      <transition id=\"{id}\">");
        match net.label(t) {
            Some(label) => {
                let _ = writeln!(out, "        <name><text>{}</text></name>", escape(label));
            }
            None => {
                let _ = writeln!(out, "        <name><text>{id}</text></name>");
                let _ = writeln!(
                    out,
                    "        <toolspecific tool=\"ProM\" version=\"6.4\" activity=\"{INVISIBLE}\" localNodeID=\"{id}\"/>"
                );
            }
        }
        out.push_str("      </transition>\n");
    }
    for (i, arc) in net.arcs().iter().enumerate() {
        let (source, target) = match arc {
            Arc::PlaceToTransition(p, t) => (p.as_str(), t.as_str()),
            Arc::TransitionToPlace(t, p) => (t.as_str(), p.as_str()),
        };
        let _ = writeln!(
            out,
            "      <arc id=\"a{}\" source=\"{}\" target=\"{}\"/>",
            i + 1,
            escape(source),
            escape(target)
        );
    }
    out.push_str("    </page>\n    <finalmarkings>\n      <marking>\n");
    for (p, c) in net.final_marking().iter() {
        let _ = writeln!(
            out,
            "        <place idref=\"{}\"><text>{c}</text></place>",
            escape(p.as_str())
        );
    }
    out.push_str("      </marking>\n    </finalmarkings>\n  </net>\n</pnml>\n");
    out
}

#[derive(Default)]
struct PendingTransition {
    id: String,
    name: Option<String>,
    invisible: bool,
}

pub fn import_pnml(input: &[u8]) -> Result<LabeledPetriNet> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();

    let mut builder = NetBuilder::default();
    let mut initial = Marking::new();
    let mut final_marking = Marking::new();
    let mut place: Option<String> = None;
    let mut transition: Option<PendingTransition> = None;
    let mut final_place: Option<String> = None;
    let mut arcs: Vec<(String, String)> = Vec::new();
    let mut place_ids: BTreeSet<String> = BTreeSet::new();
    let mut saw_net = false;

    let err = |reader: &Reader<&[u8]>, message: String| {
        let pos = reader.buffer_position() as usize;
        position_error(input, pos, message)
    };

    loop {
        let ev = match reader.read_event_into(&mut buf) {
            Ok(ev) => ev,
            Err(e) => {
                let pos = reader.error_position() as usize;
                return Err(position_error(input, pos, e.to_string()));
            }
        };
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let empty = matches!(ev, XmlEvent::Empty(_));
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                let mut attrs: BTreeMap<String, String> = BTreeMap::new();
                for a in e.attributes() {
                    let a = a.map_err(|x| err(&reader, x.to_string()))?;
                    let v = a
                        .unescape_value()
                        .map_err(|x| err(&reader, x.to_string()))?
                        .into_owned();
                    attrs.insert(String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned(), v);
                }
                let in_final = path.iter().any(|p| p == "finalmarkings");
                match name.as_str() {
                    "net" => saw_net = true,
                    "place" if in_final => {
                        final_place = Some(
                            attrs
                                .get("idref")
                                .cloned()
                                .ok_or_else(|| err(&reader, "final marking place without idref".into()))?,
                        );
                    }
                    "place" => {
                        let id = attrs
                            .get("id")
                            .cloned()
                            .ok_or_else(|| err(&reader, "place without id".into()))?;
                        builder.add_place(PlaceId::new(id.clone()));
                        place_ids.insert(id.clone());
                        place = Some(id);
                    }
                    "transition" => {
                        let id = attrs
                            .get("id")
                            .cloned()
                            .ok_or_else(|| err(&reader, "transition without id".into()))?;
                        transition = Some(PendingTransition {
                            id,
                            ..Default::default()
                        });
                    }
                    "toolspecific" => {
                        if attrs.get("activity").map(String::as_str) == Some(INVISIBLE) {
                            if let Some(t) = transition.as_mut() {
                                t.invisible = true;
                            }
                        }
                    }
                    "arc" => {
                        let (Some(s), Some(t)) = (attrs.get("source"), attrs.get("target")) else {
                            return Err(err(&reader, "arc without source or target".into()));
                        };
                        arcs.push((s.clone(), t.clone()));
                    }
                    _ => {}
                }
                if empty {
                    close(&name, &mut place, &mut transition, &mut final_place, &mut builder);
                } else {
                    path.push(name);
                }
            }
            XmlEvent::Text(ref text) => {
                let text = text
                    .unescape()
                    .map_err(|x| err(&reader, x.to_string()))?
                    .into_owned();
                let n = path.len();
                let parent = |k: usize| path.get(n.wrapping_sub(k)).map(String::as_str);
                if parent(1) != Some("text") {
                    buf.clear();
                    continue;
                }
                match (parent(2), parent(3)) {
                    (Some("name"), Some("transition")) => {
                        if let Some(t) = transition.as_mut() {
                            t.name = Some(text);
                        }
                    }
                    (Some("initialMarking"), Some("place")) => {
                        let tokens: u32 = text
                            .trim()
                            .parse()
                            .map_err(|_| err(&reader, format!("bad token count {text:?}")))?;
                        if let Some(p) = &place {
                            initial.add(&PlaceId::new(p.clone()), tokens);
                        }
                    }
                    (Some("place"), _) => {
                        if let Some(p) = &final_place {
                            let tokens: u32 = text
                                .trim()
                                .parse()
                                .map_err(|_| err(&reader, format!("bad token count {text:?}")))?;
                            final_marking.add(&PlaceId::new(p.clone()), tokens);
                        }
                    }
                    _ => {}
                }
            }
            XmlEvent::End(_) => {
                if let Some(name) = path.pop() {
                    close(&name, &mut place, &mut transition, &mut final_place, &mut builder);
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !path.is_empty() {
        return Err(position_error(input, input.len(), "unexpected end of document".into()));
    }
    if !saw_net {
        return Err(position_error(input, 0, "no <net> element".into()));
    }

    for (s, t) in arcs {
        let arc = if place_ids.contains(&s) {
            Arc::PlaceToTransition(PlaceId::new(s), TransitionId::new(t))
        } else {
            Arc::TransitionToPlace(TransitionId::new(s), PlaceId::new(t))
        };
        builder.add_arc(arc);
    }
    builder.set_markings(initial, final_marking);
    builder.build()
}

fn close(
    name: &str,
    place: &mut Option<String>,
    transition: &mut Option<PendingTransition>,
    final_place: &mut Option<String>,
    builder: &mut NetBuilder,
) {
    match name {
        "place" if final_place.is_some() => *final_place = None,
        "place" => *place = None,
        "transition" => {
            if let Some(t) = transition.take() {
                let label = if t.invisible { None } else { t.name.or(Some(t.id.clone())) };
                builder.add_transition(TransitionId::new(t.id), label);
            }
        }
        _ => {}
    }
}

fn position_error(input: &[u8], pos: usize, message: String) -> Error {
    let end = pos.min(input.len());
    let prefix = &input[..end];
    let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = end - prefix.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    Error::Xml {
        line,
        column,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_model::fixtures::n1;
    use crate::process_model::ProcessTree;

    #[test]
    fn n1_round_trips() {
        let net = n1();
        let again = import_pnml(export_pnml(&net).as_bytes()).unwrap();
        assert_eq!(again, net);
    }

    #[test]
    fn silent_transitions_round_trip() {
        let tree = ProcessTree::Sequence(vec![
            ProcessTree::Activity("A".into()),
            ProcessTree::Xor(vec![ProcessTree::Tau, ProcessTree::Activity("B & C".into())]),
        ]);
        let net = tree.to_petri_net().unwrap();
        let again = import_pnml(export_pnml(&net).as_bytes()).unwrap();
        assert_eq!(again, net);
        assert_eq!(again.transitions().filter(|t| again.is_silent(t)).count(), 1);
    }

    #[test]
    fn hand_written_purchase_net() {
        let pnml = r#"<?xml version="1.0"?>
<pnml><net id="N1" type="http://www.pnml.org/version-2009/grammar/pnmlcoremodel"><page id="pg">
  <place id="p1"><initialMarking><text>1</text></initialMarking></place>
  <place id="p2"/><place id="p3"/><place id="p4"/><place id="p5"/><place id="p6"/>
  <transition id="t1"><name><text>Create purchase order</text></name></transition>
  <transition id="t2"><name><text>Request standard approval</text></name></transition>
  <transition id="t3"><name><text>Request manager approval</text></name></transition>
  <transition id="t4"><name><text>Approve purchase order</text></name></transition>
  <transition id="t5"><name><text>Review purchase order</text></name></transition>
  <transition id="t6"><name><text>Place order</text></name></transition>
  <transition id="t7"><name><text>Cancel order</text></name></transition>
  <arc id="a1" source="p1" target="t1"/><arc id="a2" source="t1" target="p2"/>
  <arc id="a3" source="p2" target="t2"/><arc id="a4" source="p2" target="t3"/>
  <arc id="a5" source="t2" target="p3"/><arc id="a6" source="t3" target="p4"/>
  <arc id="a7" source="p3" target="t4"/><arc id="a8" source="p4" target="t5"/>
  <arc id="a9" source="t4" target="p5"/><arc id="a10" source="t5" target="p5"/>
  <arc id="a11" source="p5" target="t6"/><arc id="a12" source="p5" target="t7"/>
  <arc id="a13" source="t6" target="p6"/><arc id="a14" source="t7" target="p6"/>
</page>
<finalmarkings><marking><place idref="p6"><text>1</text></place></marking></finalmarkings>
</net></pnml>"#;
        let net = import_pnml(pnml.as_bytes()).unwrap();
        assert!(net.places().len() >= 6);
        assert_eq!(net.num_transitions(), 7);
        assert_eq!(net.initial_marking(), &Marking::from_places(["p1"]));
        assert_eq!(net.final_marking(), &Marking::from_places(["p6"]));
        assert_eq!(net.label(&TransitionId::new("t2")), Some("Request standard approval"));
    }

    #[test]
    fn corrupt_xml_is_an_error() {
        assert!(matches!(
            import_pnml(b"<pnml><net id=\"x\"><place id=\"p\"></net></pnml>"),
            Err(Error::Xml { .. })
        ));
        assert!(import_pnml(b"not xml at all").is_err());
    }
}
