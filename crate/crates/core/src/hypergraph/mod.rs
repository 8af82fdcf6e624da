//! Immutable capability hypergraphs.
//!
//! A [`Hypergraph`] holds interned capability labels and conjunctive
//! hyperarcs `(S, T)`: once every node of `S` is held, every node of `T` is
//! derived. Closure is computed by a worklist with one unsatisfied-source
//! counter per arc, so each arc fires at most once and a full closure costs
//! `O(n + m·k)`.

mod audit;
mod closure;

pub use audit::{CompositionalityDefect, FrontierRecord};
pub use closure::ClosureState;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::nodeset::{NodeId, NodeSet};

/// Index of a hyperarc inside one hypergraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub u32);

impl ArcId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// How an arc came to exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArcKind {
    /// Database query: informable slots retrieve candidates.
    TypeA,
    /// Booking: candidates plus booking slots yield a booking.
    TypeB,
    /// Cross-domain link.
    TypeC,
    /// Hand-built.
    Manual,
}

impl ArcKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArcKind::TypeA => "TypeA",
            ArcKind::TypeB => "TypeB",
            ArcKind::TypeC => "TypeC",
            ArcKind::Manual => "Manual",
        }
    }
}

impl core::str::FromStr for ArcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TypeA" => Ok(ArcKind::TypeA),
            "TypeB" => Ok(ArcKind::TypeB),
            "TypeC" => Ok(ArcKind::TypeC),
            "Manual" => Ok(ArcKind::Manual),
            other => Err(Error::InvalidParameter(alloc::format!("unknown arc kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperarc {
    pub sources: NodeSet,
    pub targets: NodeSet,
    /// Observed derivation rate. Carried for reporting only; closure is
    /// possibilistic.
    pub rate: f64,
    pub kind: ArcKind,
}

impl Hyperarc {
    pub fn new(sources: NodeSet, targets: NodeSet, rate: f64, kind: ArcKind) -> Self {
        Hyperarc {
            sources,
            targets,
            rate,
            kind,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.sources.len()
    }

    pub fn is_conjunctive(&self) -> bool {
        self.fan_in() >= 2
    }
}

/// Capability hypergraph `H = (V, F)`.
///
/// Immutable after construction. Node indices are dense `0..n` in the order
/// the labels were supplied; [`version`](Hypergraph::version) is a content
/// hash used to bind certificates to the graph that issued them.
#[derive(Clone, Debug)]
pub struct Hypergraph {
    labels: Vec<String>,
    by_label: BTreeMap<String, NodeId>,
    arcs: Vec<Hyperarc>,
    by_source: Vec<Vec<ArcId>>,
    /// Source count per arc, the initial closure counters.
    fan_in: Vec<u32>,
    version: u64,
}

impl Hypergraph {
    /// Builds a graph from labels and index-based arcs.
    pub fn from_parts(labels: Vec<String>, arcs: Vec<Hyperarc>) -> Result<Self> {
        let mut by_label = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            if by_label.insert(l.clone(), NodeId(i as u32)).is_some() {
                return Err(Error::DuplicateCapability(l.clone()));
            }
        }
        let n = labels.len();
        let mut by_source = alloc::vec![Vec::new(); n];
        for (i, arc) in arcs.iter().enumerate() {
            if arc.sources.is_empty() {
                return Err(Error::EmptySources { arc: i });
            }
            if arc.targets.is_empty() {
                return Err(Error::EmptyTargets { arc: i });
            }
            if !(0.0..=1.0).contains(&arc.rate) {
                return Err(Error::RateOutOfRange { arc: i, rate: arc.rate });
            }
            for id in arc.sources.iter().chain(arc.targets.iter()) {
                if id.index() >= n {
                    return Err(Error::UnknownNode(id));
                }
            }
            for s in arc.sources.iter() {
                by_source[s.index()].push(ArcId(i as u32));
            }
        }

        let mut h = Fnv1a::new();
        h.write_u64(n as u64);
        for l in &labels {
            h.write(l.as_bytes());
            h.write(&[0xff]);
        }
        for arc in &arcs {
            for s in arc.sources.iter() {
                h.write_u64(u64::from(s.0));
            }
            h.write(&[0xfe]);
            for t in arc.targets.iter() {
                h.write_u64(u64::from(t.0));
            }
            h.write(&[0xfd]);
            h.write_u64(arc.rate.to_bits());
            h.write(arc.kind.as_str().as_bytes());
        }

        Ok(Hypergraph {
            fan_in: arcs.iter().map(|a| a.fan_in() as u32).collect(),
            labels,
            by_label,
            arcs,
            by_source,
            version: h.finish(),
        })
    }

    pub fn builder() -> HypergraphBuilder {
        HypergraphBuilder::default()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Largest source-set size over all arcs.
    pub fn max_fan_in(&self) -> usize {
        self.arcs.iter().map(Hyperarc::fan_in).max().unwrap_or(0)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn arcs(&self) -> &[Hyperarc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> Option<&Hyperarc> {
        self.arcs.get(id.index())
    }

    pub(crate) fn fan_ins(&self) -> &[u32] {
        &self.fan_in
    }

    /// Arcs whose source set contains `node`.
    pub fn arcs_from(&self, node: NodeId) -> &[ArcId] {
        self.by_source.get(node.index()).map_or(&[], Vec::as_slice)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.labels.get(id.index()).map(String::as_str)
    }

    pub fn node(&self, label: &str) -> Result<NodeId> {
        self.by_label
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownCapability(label.to_string()))
    }

    pub fn try_node(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    /// Resolves labels into a node set.
    pub fn set<I, S>(&self, labels: I) -> Result<NodeSet>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        labels.into_iter().map(|l| self.node(l.as_ref())).collect()
    }

    /// Labels of a node set in ascending index order.
    pub fn labels_of(&self, set: &NodeSet) -> Vec<&str> {
        set.iter().filter_map(|id| self.label(id)).collect()
    }

    pub fn all_nodes(&self) -> NodeSet {
        (0..self.labels.len() as u32).map(NodeId).collect()
    }

    pub fn forbidden<I, S>(&self, labels: I) -> Result<ForbiddenSet>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Ok(ForbiddenSet::new(self.set(labels)?))
    }

    pub(crate) fn check(&self, set: &NodeSet) -> Result<()> {
        match set.last() {
            Some(id) if id.index() >= self.labels.len() => Err(Error::UnknownNode(id)),
            _ => Ok(()),
        }
    }

    /// Least fixed point `cl(A)`: the smallest superset of `A` closed under
    /// every arc firing.
    pub fn closure(&self, a: &NodeSet) -> Result<NodeSet> {
        self.check(a)?;
        Ok(self.closure_unchecked(a))
    }

    /// `cl₁(A)`: closure using only single-source arcs.
    pub fn closure_unit(&self, a: &NodeSet) -> Result<NodeSet> {
        self.check(a)?;
        let mut state = ClosureState::new(self);
        state.extend_filtered(self, a, |arc| arc.fan_in() == 1);
        Ok(state.into_closed())
    }

    pub(crate) fn closure_unchecked(&self, a: &NodeSet) -> NodeSet {
        let mut state = ClosureState::new(self);
        state.extend(self, a);
        state.into_closed()
    }
}

/// Incremental construction of a [`Hypergraph`] from labels.
#[derive(Default)]
pub struct HypergraphBuilder {
    labels: Vec<String>,
    by_label: BTreeMap<String, NodeId>,
    arcs: Vec<Hyperarc>,
}

impl HypergraphBuilder {
    /// Interns `label`, returning its existing index if already present.
    pub fn node(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.by_label.get(label) {
            return id;
        }
        let id = NodeId(self.labels.len() as u32);
        self.labels.push(label.to_string());
        self.by_label.insert(label.to_string(), id);
        id
    }

    pub fn nodes<I, S>(&mut self, labels: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for l in labels {
            self.node(l.as_ref());
        }
        self
    }

    pub fn arc<S, T>(&mut self, sources: S, targets: T, rate: f64, kind: ArcKind) -> &mut Self
    where
        S: IntoIterator,
        S::Item: AsRef<str>,
        T: IntoIterator,
        T::Item: AsRef<str>,
    {
        let sources = sources.into_iter().map(|l| self.node(l.as_ref())).collect();
        let targets = targets.into_iter().map(|l| self.node(l.as_ref())).collect();
        self.arcs.push(Hyperarc::new(sources, targets, rate, kind));
        self
    }

    /// Hand-built arc with rate 1.
    pub fn rule<S, T>(&mut self, sources: S, targets: T) -> &mut Self
    where
        S: IntoIterator,
        S::Item: AsRef<str>,
        T: IntoIterator,
        T::Item: AsRef<str>,
    {
        self.arc(sources, targets, 1.0, ArcKind::Manual)
    }

    pub fn build(self) -> Result<Hypergraph> {
        Hypergraph::from_parts(self.labels, self.arcs)
    }
}

/// Capabilities that must never enter a closure.
///
/// `version` distinguishes snapshots taken before and after a mutation of
/// the set; it never decreases.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForbiddenSet {
    pub members: NodeSet,
    pub version: u64,
}

impl ForbiddenSet {
    pub fn new(members: NodeSet) -> Self {
        ForbiddenSet { members, version: 0 }
    }

    pub fn empty() -> Self {
        ForbiddenSet::default()
    }

    /// Replaces the members and advances the version.
    pub fn mutate(&self, members: NodeSet) -> Self {
        ForbiddenSet {
            members,
            version: self.version + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// `({a,b}→{c})`, `({c}→{d})`, plus an isolated node `x`.
    pub fn toy() -> Hypergraph {
        let mut b = Hypergraph::builder();
        b.nodes(["a", "b", "c", "d", "x"]);
        b.rule(["a", "b"], ["c"]).rule(["c"], ["d"]);
        b.build().unwrap()
    }

    /// `({read_PII, gen}→{f_leak})`.
    pub fn leak() -> Hypergraph {
        let mut b = Hypergraph::builder();
        b.nodes(["read_PII", "query_db", "gen", "f_leak"]);
        b.rule(["read_PII", "gen"], ["f_leak"]);
        b.build().unwrap()
    }

    /// Hotel booking arc of fan-in 5.
    pub fn hotel() -> Hypergraph {
        let mut b = Hypergraph::builder();
        b.nodes(["cand-retrieved", "name", "day", "people", "stay", "hotel-booked"]);
        b.rule(["cand-retrieved", "name", "day", "people", "stay"], ["hotel-booked"]);
        b.build().unwrap()
    }

    pub fn set(h: &Hypergraph, labels: &[&str]) -> NodeSet {
        h.set(labels.iter().copied()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_empty_sources_and_targets() {
        let labels = vec!["a".to_string()];
        let empty_src = Hyperarc::new(NodeSet::new(), NodeSet::singleton(NodeId(0)), 1.0, ArcKind::Manual);
        assert_eq!(
            Hypergraph::from_parts(labels.clone(), vec![empty_src]).unwrap_err(),
            Error::EmptySources { arc: 0 }
        );
        let empty_tgt = Hyperarc::new(NodeSet::singleton(NodeId(0)), NodeSet::new(), 1.0, ArcKind::Manual);
        assert_eq!(
            Hypergraph::from_parts(labels, vec![empty_tgt]).unwrap_err(),
            Error::EmptyTargets { arc: 0 }
        );
    }

    #[test]
    fn rejects_bad_rate_and_dangling_endpoint() {
        let labels = vec!["a".to_string()];
        let one = NodeSet::singleton(NodeId(0));
        let bad = Hyperarc::new(one.clone(), one.clone(), 1.5, ArcKind::TypeA);
        assert!(matches!(
            Hypergraph::from_parts(labels.clone(), vec![bad]),
            Err(Error::RateOutOfRange { .. })
        ));
        let dangling = Hyperarc::new(one, NodeSet::singleton(NodeId(3)), 1.0, ArcKind::Manual);
        assert_eq!(
            Hypergraph::from_parts(labels, vec![dangling]).unwrap_err(),
            Error::UnknownNode(NodeId(3))
        );
    }

    #[test]
    fn duplicate_labels_rejected() {
        let labels = vec!["a".to_string(), "a".to_string()];
        assert_eq!(
            Hypergraph::from_parts(labels, vec![]).unwrap_err(),
            Error::DuplicateCapability("a".into())
        );
    }

    #[test]
    fn label_index_bijection() {
        let h = toy();
        for (i, l) in h.labels().iter().enumerate() {
            assert_eq!(h.node(l).unwrap(), NodeId(i as u32));
            assert_eq!(h.label(NodeId(i as u32)), Some(l.as_str()));
        }
        assert_eq!(h.node("nope"), Err(Error::UnknownCapability("nope".into())));
        assert_eq!(h.arcs_from(h.node("c").unwrap()), &[ArcId(1)]);
    }

    #[test]
    fn version_tracks_content() {
        assert_eq!(toy().version(), toy().version());
        assert_ne!(toy().version(), leak().version());
    }

    #[test]
    fn closure_examples() {
        let mut b = Hypergraph::builder();
        b.nodes(["a"]);
        let bare = b.build().unwrap();
        assert_eq!(bare.closure(&set(&bare, &["a"])).unwrap(), set(&bare, &["a"]));

        let h = toy();
        assert_eq!(
            h.closure(&set(&h, &["a", "b"])).unwrap(),
            set(&h, &["a", "b", "c", "d"])
        );

        let h = leak();
        assert_eq!(
            h.closure(&set(&h, &["query_db", "gen"])).unwrap(),
            set(&h, &["query_db", "gen"])
        );
    }

    #[test]
    fn closure_rejects_foreign_nodes() {
        let h = toy();
        let foreign = NodeSet::singleton(NodeId(40));
        assert_eq!(h.closure(&foreign), Err(Error::UnknownNode(NodeId(40))));
    }

    #[test]
    fn closure_unit_examples() {
        let h = toy();
        assert_eq!(h.closure_unit(&set(&h, &["a", "b"])).unwrap(), set(&h, &["a", "b"]));
        assert!(h.closure_unit(&NodeSet::new()).unwrap().is_empty());

        let mut b = Hypergraph::builder();
        b.rule(["a"], ["b"]).rule(["b"], ["c"]);
        let chain = b.build().unwrap();
        assert_eq!(
            chain.closure_unit(&set(&chain, &["a"])).unwrap(),
            set(&chain, &["a", "b", "c"])
        );
    }
}
