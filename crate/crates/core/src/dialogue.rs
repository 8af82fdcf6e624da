//! Dialogue corpora and the capability assembly function φ.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::nodeset::{NodeId, NodeSet};

/// Domain → slot → value.
pub type BeliefState = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: u32,
    #[serde(default)]
    pub belief_state: BeliefState,
    /// Outcome tokens such as `hotel-booked` observed at this turn.
    #[serde(default)]
    pub outcomes: Vec<String>,
    pub primary_capability: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
}

impl DialogueSession {
    /// Tenant of the first turn that names one.
    pub fn tenant(&self) -> Option<&str> {
        self.turns.iter().find_map(|t| t.tenant.as_deref())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSource {
    #[default]
    Native,
    Multiwoz {
        split: String,
    },
    Synthetic {
        seed: u64,
        params: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sessions: Vec<DialogueSession>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontology: Option<String>,
    #[serde(default)]
    pub source: CorpusSource,
}

impl Corpus {
    pub fn turn_count(&self) -> usize {
        self.sessions.iter().map(|s| s.turns.len()).sum()
    }

    /// Every session's turn ids strictly increase.
    pub fn validate(&self) -> Result<()> {
        for s in &self.sessions {
            if s.turns.windows(2).any(|w| w[0].turn_id >= w[1].turn_id) {
                return Err(Error::InvalidParameter(format!(
                    "session `{}` has non-increasing turn ids",
                    s.session_id
                )));
            }
        }
        Ok(())
    }
}

/// `d-s-v` when the graph has that node, else the slot-level `d-s`.
pub fn slot_capability(graph: &Hypergraph, domain: &str, slot: &str, value: &str) -> Result<NodeId> {
    let value_level = format!("{domain}-{slot}-{value}");
    if let Some(id) = graph.try_node(&value_level) {
        return Ok(id);
    }
    let slot_level = format!("{domain}-{slot}");
    graph.try_node(&slot_level).ok_or(Error::UnknownCapability(value_level))
}

/// φ of a turn: the belief state's slot capabilities plus the outcome tokens.
pub fn phi(graph: &Hypergraph, turn: &Turn) -> Result<NodeSet> {
    let mut out = NodeSet::new();
    for (domain, slots) in &turn.belief_state {
        for (slot, value) in slots {
            out.insert(slot_capability(graph, domain, slot, value)?);
        }
    }
    for o in &turn.outcomes {
        out.insert(graph.node(o)?);
    }
    Ok(out)
}

/// Template facts: `d-s` → value for every slot in the belief state.
pub fn facts(turn: &Turn) -> BTreeMap<String, String> {
    turn.belief_state
        .iter()
        .flat_map(|(d, slots)| slots.iter().map(move |(s, v)| (format!("{d}-{s}"), v.clone())))
        .collect()
}

/// Everything the pipeline needs from one corpus turn.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnInput {
    pub phi: NodeSet,
    pub primary: NodeId,
    pub facts: BTreeMap<String, String>,
    /// Text embedded for similarity pre-filtering.
    pub query_text: String,
}

impl TurnInput {
    pub fn from_turn(graph: &Hypergraph, turn: &Turn) -> Result<TurnInput> {
        Ok(TurnInput {
            phi: phi(graph, turn)?,
            primary: graph.node(&turn.primary_capability)?,
            facts: facts(turn),
            query_text: turn
                .answer_text
                .clone()
                .unwrap_or_else(|| turn.primary_capability.to_string()),
        })
    }
}

/// Number of distinct per-turn closures `cl(φ(q_t))` in a session.
pub fn ontological_class_count(graph: &Hypergraph, phis: &[NodeSet]) -> Result<usize> {
    let mut classes = BTreeSet::new();
    for p in phis {
        classes.insert(graph.closure(p)?);
    }
    Ok(classes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::fixtures::*;
    use alloc::vec;

    fn belief(pairs: &[(&str, &str, &str)]) -> BeliefState {
        let mut b = BeliefState::new();
        for (d, s, v) in pairs {
            b.entry(d.to_string()).or_default().insert(s.to_string(), v.to_string());
        }
        b
    }

    #[test]
    fn phi_examples() {
        let mut builder = Hypergraph::builder();
        builder.nodes([
            "hotel-area-north",
            "hotel-stars-4",
            "hotel-area",
            "hotel-stars",
            "hotel-candidates-retrieved",
        ]);
        builder.rule(["hotel-area", "hotel-stars"], ["hotel-candidates-retrieved"]);
        let h = builder.build().unwrap();

        assert!(phi(&h, &Turn::default()).unwrap().is_empty());

        let mut t = Turn {
            belief_state: belief(&[("hotel", "area", "north"), ("hotel", "stars", "4")]),
            ..Turn::default()
        };
        assert_eq!(phi(&h, &t).unwrap(), set(&h, &["hotel-area-north", "hotel-stars-4"]));

        t.belief_state = belief(&[("hotel", "area", "south"), ("hotel", "stars", "3")]);
        assert_eq!(phi(&h, &t).unwrap(), set(&h, &["hotel-area", "hotel-stars"]));

        t.outcomes = vec!["hotel-candidates-retrieved".into()];
        assert!(phi(&h, &t)
            .unwrap()
            .contains(h.node("hotel-candidates-retrieved").unwrap()));

        t.belief_state = belief(&[("taxi", "leave", "9")]);
        assert_eq!(phi(&h, &t), Err(Error::UnknownCapability("taxi-leave-9".into())));
    }

    #[test]
    fn class_count_examples() {
        let h = toy();
        let ab = set(&h, &["a", "b"]);
        assert_eq!(ontological_class_count(&h, &[ab.clone(), ab.clone()]).unwrap(), 1);
        // {a,b} and {a,b,c} close to the same set.
        assert_eq!(
            ontological_class_count(&h, &[ab.clone(), set(&h, &["a", "b", "c"])]).unwrap(),
            1
        );
        assert_eq!(ontological_class_count(&h, &[ab, set(&h, &["a"])]).unwrap(), 2);
        assert_eq!(ontological_class_count(&h, &[]).unwrap(), 0);
    }

    #[test]
    fn turn_ids_must_increase() {
        let t = |id| Turn {
            turn_id: id,
            ..Turn::default()
        };
        let mut c = Corpus::default();
        c.sessions.push(DialogueSession {
            session_id: "s".into(),
            turns: vec![t(0), t(1)],
        });
        assert!(c.validate().is_ok());
        c.sessions[0].turns.push(t(1));
        assert!(c.validate().is_err());
    }
}
