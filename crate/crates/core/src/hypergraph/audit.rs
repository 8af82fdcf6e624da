//! Safety predicates and the audit surface: emergent capabilities, the
//! near-miss frontier, closure gains, and small-instance diagnostics.

use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ArcId, ClosureState, ForbiddenSet, Hypergraph};
use crate::error::{Error, Result};
use crate::nodeset::{NodeId, NodeSet};

/// An arc exactly one source away from firing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierRecord {
    /// The single source not yet in the closure.
    pub missing: NodeId,
    pub arc: ArcId,
    /// Targets the arc would add.
    pub unlocked: NodeSet,
    /// The arc's targets meet the forbidden set.
    pub forbidden_productive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcDefect {
    pub arc: ArcId,
    pub fan_in: usize,
    /// Lower bound on unsafe pairs `(A, B)` of safe sets whose union is
    /// unsafe, forced by this arc alone: `2^(k-1) - 1`.
    pub forced_pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionalityDefect {
    pub per_arc: Vec<ArcDefect>,
    pub total: u64,
    /// `total` divided by the number of conjunctive forbidden-productive arcs.
    pub mean_per_conjunctive_arc: f64,
}

impl Hypergraph {
    /// `cl(A) ∩ F = ∅`.
    pub fn is_safe(&self, forbidden: &ForbiddenSet, a: &NodeSet) -> Result<bool> {
        self.check(&forbidden.members)?;
        Ok(self.closure(a)?.is_disjoint(&forbidden.members))
    }

    /// `cl(A) \ A \ cl₁(A)`: capabilities reachable only through conjunctive
    /// arcs.
    pub fn emergent(&self, a: &NodeSet) -> Result<NodeSet> {
        let mut out = self.closure(a)?;
        out.difference_with(a);
        out.difference_with(&self.closure_unit(a)?);
        Ok(out)
    }

    /// Every `(arc, missing source)` pair where exactly one source of the arc
    /// lies outside `cl(A)`, ordered by missing node then arc index.
    pub fn near_miss_frontier(&self, forbidden: &ForbiddenSet, a: &NodeSet) -> Result<Vec<FrontierRecord>> {
        let closed = self.closure(a)?;
        Ok(self.frontier_of_closed(forbidden, &closed))
    }

    pub(crate) fn frontier_of_closed(&self, forbidden: &ForbiddenSet, closed: &NodeSet) -> Vec<FrontierRecord> {
        let mut out: Vec<FrontierRecord> = self
            .arcs()
            .iter()
            .enumerate()
            .filter_map(|(i, arc)| {
                let mut outside = arc.sources.iter().filter(|s| !closed.contains(*s));
                let missing = outside.next()?;
                if outside.next().is_some() {
                    return None;
                }
                Some(FrontierRecord {
                    missing,
                    arc: ArcId(i as u32),
                    unlocked: arc.targets.clone(),
                    forbidden_productive: arc.targets.intersects(&forbidden.members),
                })
            })
            .collect();
        out.sort_by_key(|r| (r.missing, r.arc));
        out
    }

    /// `|cl(A ∪ B)| - |cl(A)|`.
    pub fn closure_gain(&self, a: &NodeSet, b: &NodeSet) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        let mut state = ClosureState::from_seeds(self, a);
        Ok(state.extend(self, b).len())
    }

    /// Greedy selection of up to `k` candidates by marginal closure gain
    /// against the cumulatively augmented set. Ties go to the lowest index.
    pub fn greedy_topk_gains(&self, a: &NodeSet, candidates: &NodeSet, k: usize) -> Result<Vec<(NodeId, usize)>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".to_string()));
        }
        self.check(a)?;
        self.check(candidates)?;
        let mut current = ClosureState::from_seeds(self, a);
        let mut pool: Vec<NodeId> = candidates.iter().collect();
        let mut picked = Vec::new();
        while picked.len() < k && !pool.is_empty() {
            let mut best: Option<(usize, usize)> = None;
            for (pos, &x) in pool.iter().enumerate() {
                let gain = current.clone().extend(self, &NodeSet::singleton(x)).len();
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((pos, gain));
                }
            }
            let (pos, gain) = best.expect("pool is non-empty");
            let x = pool.remove(pos);
            current.extend(self, &NodeSet::singleton(x));
            picked.push((x, gain));
        }
        Ok(picked)
    }

    /// Brute-force minimal unsafe antichain: every `A ⊆ V \ F` with
    /// `cl(A) ∩ F ≠ ∅` such that removing any single member makes it safe.
    ///
    /// Sets containing a forbidden node directly are trivially unsafe and are
    /// not enumerated. Refuses graphs with more than `max_n` nodes.
    pub fn minimal_unsafe_antichain_bruteforce(&self, forbidden: &ForbiddenSet, max_n: usize) -> Result<Vec<NodeSet>> {
        let n = self.node_count();
        if n > max_n || n > 30 {
            return Err(Error::TooManyNodes {
                nodes: n,
                cap: max_n.min(30),
            });
        }
        self.check(&forbidden.members)?;
        let pool: Vec<NodeId> = self
            .all_nodes()
            .iter()
            .filter(|id| !forbidden.members.contains(*id))
            .collect();
        let subsets = 1usize << pool.len();
        let to_set = |mask: usize| -> NodeSet {
            pool.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &id)| id)
                .collect()
        };
        let safe: Vec<bool> = (0..subsets)
            .map(|mask| self.closure_unchecked(&to_set(mask)).is_disjoint(&forbidden.members))
            .collect();
        let mut out: Vec<NodeSet> = (0..subsets)
            .filter(|&mask| {
                !safe[mask]
                    && (0..pool.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .all(|i| safe[mask ^ (1 << i)])
            })
            .map(to_set)
            .collect();
        out.sort();
        Ok(out)
    }

    /// Forced unsafe-pair counts for every forbidden-productive arc.
    pub fn compositionality_defect(&self, forbidden: &ForbiddenSet) -> CompositionalityDefect {
        let per_arc: Vec<ArcDefect> = self
            .arcs()
            .iter()
            .enumerate()
            .filter(|(_, arc)| arc.targets.intersects(&forbidden.members))
            .map(|(i, arc)| {
                let k = arc.fan_in();
                ArcDefect {
                    arc: ArcId(i as u32),
                    fan_in: k,
                    forced_pairs: (1u64 << (k - 1)) - 1,
                }
            })
            .collect();
        let total = per_arc.iter().map(|d| d.forced_pairs).sum();
        let conjunctive = per_arc.iter().filter(|d| d.fan_in >= 2).count();
        CompositionalityDefect {
            mean_per_conjunctive_arc: if conjunctive == 0 {
                0.0
            } else {
                total as f64 / conjunctive as f64
            },
            per_arc,
            total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::ArcKind;
    use super::*;
    use alloc::format;
    use alloc::vec;

    #[test]
    fn safety_examples() {
        let h = leak();
        let f = h.forbidden(["f_leak"]).unwrap();
        assert!(h.is_safe(&f, &set(&h, &["query_db", "gen"])).unwrap());
        assert!(!h.is_safe(&f, &set(&h, &["read_PII", "query_db", "gen"])).unwrap());
        let none = ForbiddenSet::empty();
        assert!(h.is_safe(&none, &h.all_nodes()).unwrap());
    }

    #[test]
    fn non_compositionality_on_leak_and_hotel() {
        let h = leak();
        let f = h.forbidden(["f_leak"]).unwrap();
        assert!(h.is_safe(&f, &set(&h, &["read_PII"])).unwrap());
        assert!(h.is_safe(&f, &set(&h, &["gen"])).unwrap());
        assert!(!h.is_safe(&f, &set(&h, &["read_PII", "gen"])).unwrap());

        let h = hotel();
        let f = h.forbidden(["hotel-booked"]).unwrap();
        let a = set(&h, &["cand-retrieved", "name", "day"]);
        let b = set(&h, &["people", "stay"]);
        assert!(h.is_safe(&f, &a).unwrap());
        assert!(h.is_safe(&f, &b).unwrap());
        assert!(!h.is_safe(&f, &a.union(&b)).unwrap());
    }

    #[test]
    fn emergent_examples() {
        let h = toy();
        assert_eq!(h.emergent(&set(&h, &["a", "b"])).unwrap(), set(&h, &["c", "d"]));

        let mut b = Hypergraph::builder();
        b.rule(["a"], ["b"]).rule(["b"], ["c"]);
        let chain = b.build().unwrap();
        assert!(chain.emergent(&set(&chain, &["a"])).unwrap().is_empty());

        let h = hotel();
        let pre = set(&h, &["cand-retrieved", "name", "day", "people", "stay"]);
        assert!(h.emergent(&pre).unwrap().contains(h.node("hotel-booked").unwrap()));
    }

    #[test]
    fn frontier_on_toy() {
        let h = toy();
        let recs = h.near_miss_frontier(&ForbiddenSet::empty(), &set(&h, &["a"])).unwrap();
        let b = h.node("b").unwrap();
        let rec_b = recs.iter().find(|r| r.missing == b).unwrap();
        assert_eq!(rec_b.arc, ArcId(0));
        assert_eq!(rec_b.unlocked, set(&h, &["c"]));
        assert!(!rec_b.forbidden_productive);
        // ({c}→{d}) is also one source short of firing.
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].missing, h.node("c").unwrap());

        let saturated = set(&h, &["a", "b"]);
        assert!(h
            .near_miss_frontier(&ForbiddenSet::empty(), &saturated)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn frontier_flags_forbidden_productive_arcs() {
        let h = leak();
        let f = h.forbidden(["f_leak"]).unwrap();
        let recs = h.near_miss_frontier(&f, &set(&h, &["gen"])).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].missing, h.node("read_PII").unwrap());
        assert_eq!(recs[0].unlocked, set(&h, &["f_leak"]));
        assert!(recs[0].forbidden_productive);
    }

    #[test]
    fn gain_examples() {
        let h = toy();
        assert_eq!(h.closure_gain(&set(&h, &["a"]), &NodeSet::new()).unwrap(), 0);
        assert_eq!(h.closure_gain(&set(&h, &["a"]), &set(&h, &["b"])).unwrap(), 3);
        assert_eq!(h.closure_gain(&set(&h, &["a", "b"]), &set(&h, &["b"])).unwrap(), 0);
    }

    #[test]
    fn greedy_examples() {
        let h = toy();
        let a = set(&h, &["a"]);
        let cands = set(&h, &["b", "d"]);
        let b = h.node("b").unwrap();
        let d = h.node("d").unwrap();
        assert_eq!(h.greedy_topk_gains(&a, &cands, 1).unwrap(), vec![(b, 3)]);
        assert_eq!(h.greedy_topk_gains(&a, &cands, 2).unwrap(), vec![(b, 3), (d, 0)]);
        assert_eq!(h.greedy_topk_gains(&a, &cands, 9).unwrap().len(), 2);
        assert!(h.greedy_topk_gains(&a, &cands, 0).is_err());

        // All-zero gains still come back, lowest index first.
        let full = set(&h, &["a", "b"]);
        let zero = h.greedy_topk_gains(&full, &set(&h, &["c", "d"]), 2).unwrap();
        assert!(zero.iter().all(|&(_, g)| g == 0));
    }

    #[test]
    fn antichain_examples() {
        let h = leak();
        assert!(h
            .minimal_unsafe_antichain_bruteforce(&ForbiddenSet::empty(), 20)
            .unwrap()
            .is_empty());
        let f = h.forbidden(["f_leak"]).unwrap();
        assert_eq!(
            h.minimal_unsafe_antichain_bruteforce(&f, 20).unwrap(),
            vec![set(&h, &["read_PII", "gen"])]
        );

        let h = hotel();
        let f = h.forbidden(["hotel-booked"]).unwrap();
        let pre = set(&h, &["cand-retrieved", "name", "day", "people", "stay"]);
        let anti = h.minimal_unsafe_antichain_bruteforce(&f, 20).unwrap();
        assert_eq!(anti, vec![pre]);
    }

    #[test]
    fn antichain_refuses_large_graphs() {
        let mut b = Hypergraph::builder();
        for i in 0..21 {
            b.node(&format!("n{i}"));
        }
        let h = b.build().unwrap();
        assert_eq!(
            h.minimal_unsafe_antichain_bruteforce(&ForbiddenSet::empty(), 20),
            Err(Error::TooManyNodes { nodes: 21, cap: 20 })
        );
    }

    #[test]
    fn defect_examples() {
        let h = toy();
        assert_eq!(h.compositionality_defect(&ForbiddenSet::empty()).total, 0);

        let h = hotel();
        let d = h.compositionality_defect(&h.forbidden(["hotel-booked"]).unwrap());
        assert_eq!(d.per_arc.len(), 1);
        assert_eq!(d.per_arc[0].forced_pairs, 15);
        assert_eq!(d.total, 15);
    }

    /// Fan-in profile 16×2, 3×3, 5×4, 1×5 over 25 conjunctive arcs, plus 9
    /// unit arcs: 34 arcs, mean fan-in 75/34 ≈ 2.21, max fan-in 5.
    #[test]
    fn defect_on_extraction_profile() {
        let mut b = Hypergraph::builder();
        let mut next = 0;
        let mut fresh = |b: &mut HypergraphBuilderAlias| {
            next += 1;
            b.node(&format!("v{next}"));
            format!("v{next}")
        };
        let mut targets = Vec::new();
        for &(count, k) in &[(16, 2), (3, 3), (5, 4), (1, 5), (9, 1)] {
            for _ in 0..count {
                let srcs: Vec<_> = (0..k).map(|_| fresh(&mut b)).collect();
                let t = fresh(&mut b);
                b.arc(srcs, [t.clone()], 0.8, ArcKind::TypeA);
                targets.push(t);
            }
        }
        let h = b.build().unwrap();
        assert_eq!(h.arc_count(), 34);
        let fan: usize = h.arcs().iter().map(|a| a.fan_in()).sum();
        assert_eq!(fan, 75);
        assert_eq!(h.max_fan_in(), 5);
        let f = h.forbidden(targets.iter()).unwrap();
        let d = h.compositionality_defect(&f);
        assert_eq!(d.total, 75);
        assert!((d.mean_per_conjunctive_arc - 3.0).abs() < 1e-12);
    }

    type HypergraphBuilderAlias = super::super::HypergraphBuilder;
}
