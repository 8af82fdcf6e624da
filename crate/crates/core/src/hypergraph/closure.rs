use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ArcId, Hyperarc, Hypergraph};
use crate::nodeset::{NodeId, NodeSet};

/// Resumable worklist closure.
///
/// Keeps one counter per arc holding the number of its sources not yet in
/// the closure. A source entering the closure decrements the counters of the
/// arcs it feeds, and an arc fires when its counter reaches zero. Because the
/// counters persist, seeding more nodes later resumes the fixed point instead
/// of recomputing it: the work done is proportional to the newly derived
/// nodes and the arcs they feed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureState {
    closed: NodeSet,
    remaining: Vec<u32>,
    firings: Vec<ArcId>,
}

impl ClosureState {
    pub fn new(graph: &Hypergraph) -> Self {
        ClosureState {
            closed: NodeSet::with_capacity(graph.node_count()),
            remaining: graph.fan_ins().to_vec(),
            firings: Vec::new(),
        }
    }

    /// Full closure of `seeds`, with the firing order recorded.
    pub fn from_seeds(graph: &Hypergraph, seeds: &NodeSet) -> Self {
        let mut s = ClosureState::new(graph);
        s.extend(graph, seeds);
        s
    }

    pub fn closed(&self) -> &NodeSet {
        &self.closed
    }

    pub fn into_closed(self) -> NodeSet {
        self.closed
    }

    /// Arcs in the order they fired.
    pub fn firings(&self) -> &[ArcId] {
        &self.firings
    }

    /// Unsatisfied-source counter per arc.
    pub fn remaining(&self) -> &[u32] {
        &self.remaining
    }

    /// Adds `seeds` and runs to the fixed point. Returns the nodes that were
    /// not in the closure before.
    pub fn extend(&mut self, graph: &Hypergraph, seeds: &NodeSet) -> NodeSet {
        self.extend_filtered(graph, seeds, |_| true)
    }

    pub(crate) fn extend_filtered<F>(&mut self, graph: &Hypergraph, seeds: &NodeSet, admit: F) -> NodeSet
    where
        F: Fn(&Hyperarc) -> bool,
    {
        let mut delta = NodeSet::new();
        let mut work: Vec<NodeId> = Vec::new();
        for s in seeds.iter() {
            if self.closed.insert(s) {
                delta.insert(s);
                work.push(s);
            }
        }
        while let Some(u) = work.pop() {
            for &e in graph.arcs_from(u) {
                let counter = &mut self.remaining[e.index()];
                *counter -= 1;
                if *counter != 0 {
                    continue;
                }
                let arc = &graph.arcs()[e.index()];
                if !admit(arc) {
                    continue;
                }
                self.firings.push(e);
                for t in arc.targets.iter() {
                    if self.closed.insert(t) {
                        delta.insert(t);
                        work.push(t);
                    }
                }
            }
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn resuming_matches_full_recompute() {
        let h = toy();
        let mut s = ClosureState::new(&h);
        let d1 = s.extend(&h, &set(&h, &["a"]));
        assert_eq!(d1, set(&h, &["a"]));
        let d2 = s.extend(&h, &set(&h, &["b"]));
        assert_eq!(d2, set(&h, &["b", "c", "d"]));
        let full = ClosureState::from_seeds(&h, &set(&h, &["a", "b"]));
        assert_eq!(s.closed(), full.closed());
        assert_eq!(s.remaining(), full.remaining());
        assert!(s.extend(&h, &set(&h, &["b"])).is_empty());
    }

    #[test]
    fn each_arc_fires_once() {
        let h = toy();
        let s = ClosureState::from_seeds(&h, &set(&h, &["a", "b", "c"]));
        assert_eq!(s.firings(), &[ArcId(1), ArcId(0)][..]);
    }
}
