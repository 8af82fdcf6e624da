//! Derivation certificates and why-provenance witnesses.
//!
//! A [`Certificate`] is an ordered list of arc firings that, replayed from
//! its base set, derives a capability. Each firing may only use sources that
//! are already held at that point. A [`Witness`] is the set of base
//! capabilities a derivation consumes. Once a witness is contained in a
//! closure, the answer it supports is derivable there as well.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{ArcId, ClosureState, Hypergraph};
use crate::nodeset::{NodeId, NodeSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    /// Version of the hypergraph whose arc indices `firings` refers to.
    pub graph_version: u64,
    pub base: NodeSet,
    pub firings: Vec<ArcId>,
}

impl Certificate {
    pub fn trivial(graph: &Hypergraph, base: NodeSet) -> Self {
        Certificate {
            graph_version: graph.version(),
            base,
            firings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.firings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firings.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Witness {
    pub members: NodeSet,
}

impl Witness {
    pub fn new(members: NodeSet) -> Self {
        Witness { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_contained_in(&self, closure: &NodeSet) -> bool {
        self.members.is_subset(closure)
    }
}

/// Keeps only the firings on some derivation path to `v`, preserving order.
///
/// `firings` must replay from `base`. Each produced node is attributed to
/// the first firing that produces it, and the slice walks those producers
/// backwards from `v`.
fn backward_slice(graph: &Hypergraph, base: &NodeSet, firings: &[ArcId], v: NodeId) -> Option<Vec<ArcId>> {
    if base.contains(v) {
        return Some(Vec::new());
    }
    let mut producer: Vec<Option<usize>> = vec![None; graph.node_count()];
    for (pos, &e) in firings.iter().enumerate() {
        for t in graph.arc(e)?.targets.iter() {
            if !base.contains(t) && producer[t.index()].is_none() {
                producer[t.index()] = Some(pos);
            }
        }
    }
    producer.get(v.index()).copied().flatten()?;

    let mut keep = vec![false; firings.len()];
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        if base.contains(u) {
            continue;
        }
        let pos = producer[u.index()]?;
        if keep[pos] {
            continue;
        }
        keep[pos] = true;
        stack.extend(graph.arcs()[firings[pos].index()].sources.iter());
    }
    Some(firings.iter().zip(keep).filter_map(|(&e, k)| k.then_some(e)).collect())
}

/// Replays `firings` from `base`, returning the derived set, or `None` if a
/// firing uses a source that is not yet held or an unknown arc.
fn replay(graph: &Hypergraph, base: &NodeSet, firings: &[ArcId]) -> Option<NodeSet> {
    let mut held = base.clone();
    for &e in firings {
        let arc = graph.arc(e)?;
        if !arc.sources.is_subset(&held) {
            return None;
        }
        held.union_with(&arc.targets);
    }
    Some(held)
}

/// Certificate that `v ∈ cl(A)`: the closure's firing order, sliced to the
/// arcs some derivation of `v` needs.
pub fn derive_certificate(graph: &Hypergraph, a: &NodeSet, v: NodeId) -> Result<Certificate> {
    graph.check(a)?;
    let run = ClosureState::from_seeds(graph, a);
    if !run.closed().contains(v) {
        return Err(Error::NotDerivable(v));
    }
    let firings = backward_slice(graph, a, run.firings(), v).ok_or(Error::NotDerivable(v))?;
    Ok(Certificate {
        graph_version: graph.version(),
        base: a.clone(),
        firings,
    })
}

/// Certificate deriving every node of `cl(A)`: the whole firing order.
pub fn closure_certificate(graph: &Hypergraph, a: &NodeSet) -> Result<Certificate> {
    graph.check(a)?;
    let run = ClosureState::from_seeds(graph, a);
    Ok(Certificate {
        graph_version: graph.version(),
        base: a.clone(),
        firings: run.firings().to_vec(),
    })
}

/// The firing subsequence of `cert` needed to derive `v`.
pub fn sub_cert(graph: &Hypergraph, cert: &Certificate, v: NodeId) -> Result<Certificate> {
    if cert.graph_version != graph.version() {
        return Err(Error::VersionMismatch {
            cert: cert.graph_version,
            graph: graph.version(),
        });
    }
    replay(graph, &cert.base, &cert.firings).ok_or(Error::NotDerivable(v))?;
    let firings = backward_slice(graph, &cert.base, &cert.firings, v).ok_or(Error::NotDerivable(v))?;
    Ok(Certificate {
        graph_version: cert.graph_version,
        base: cert.base.clone(),
        firings,
    })
}

/// Minimal witness for `v` relative to the derivation in `cert`.
///
/// Starts from the base capabilities the sliced derivation consumes, then
/// drops members in ascending index order whenever `v` stays derivable from
/// the rest. The result supports `v` and no single member can be removed.
pub fn min_witness(graph: &Hypergraph, a: &NodeSet, cert: &Certificate, v: NodeId) -> Result<Witness> {
    graph.check(a)?;
    if cert.base.contains(v) {
        return Ok(Witness::new(NodeSet::singleton(v)));
    }
    let sub = sub_cert(graph, cert, v)?;
    let mut produced = NodeSet::new();
    let mut leaves = NodeSet::new();
    for &e in &sub.firings {
        let arc = &graph.arcs()[e.index()];
        for s in arc.sources.iter() {
            if !produced.contains(s) {
                leaves.insert(s);
            }
        }
        produced.union_with(&arc.targets);
    }
    for x in leaves.clone().iter() {
        let mut trial = leaves.clone();
        trial.remove(x);
        if graph.closure_unchecked(&trial).contains(v) {
            leaves = trial;
        }
    }
    Ok(Witness::new(leaves))
}

/// Witness for `v` in `cl(A)` together with a certificate based on that
/// witness, so the certificate validates under any `A'` whose closure
/// contains the witness.
pub fn certify(graph: &Hypergraph, a: &NodeSet, cert_main: &Certificate, v: NodeId) -> Result<(Witness, Certificate)> {
    let witness = min_witness(graph, a, cert_main, v)?;
    let cert = derive_certificate(graph, &witness.members, v)?;
    Ok((witness, cert))
}

/// `cert.base ⊆ cl(A)` and replaying `cert` derives `v` without firing an
/// arc before its sources are held.
pub fn check_certificate(graph: &Hypergraph, a: &NodeSet, cert: &Certificate, v: NodeId) -> bool {
    if cert.graph_version != graph.version() {
        return false;
    }
    let Ok(closed) = graph.closure(a) else {
        return false;
    };
    if graph.check(&cert.base).is_err() || !cert.base.is_subset(&closed) {
        return false;
    }
    replay(graph, &cert.base, &cert.firings).is_some_and(|held| held.contains(v))
}
