use capcert_core::{ArcKind, ClosureState, ForbiddenSet, Hyperarc, Hypergraph, NodeId, NodeSet};
use proptest::prelude::*;

/// Naive saturation: sweep every arc until nothing changes.
fn saturate(h: &Hypergraph, a: &NodeSet) -> NodeSet {
    let mut held: Vec<bool> = vec![false; h.node_count()];
    for v in a.iter() {
        held[v.index()] = true;
    }
    loop {
        let mut changed = false;
        for arc in h.arcs() {
            if arc.sources.iter().all(|s| held[s.index()]) {
                for t in arc.targets.iter() {
                    if !held[t.index()] {
                        held[t.index()] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..h.node_count())
        .filter(|&i| held[i])
        .map(|i| NodeId(i as u32))
        .collect()
}

fn ids(n: usize, picks: &[usize]) -> NodeSet {
    picks.iter().map(|&p| NodeId((p % n) as u32)).collect()
}

fn graph() -> impl Strategy<Value = Hypergraph> {
    (2usize..=12).prop_flat_map(|n| {
        let arc = (
            proptest::collection::vec(0..n, 1..=4),
            proptest::collection::vec(0..n, 1..=2),
        );
        proptest::collection::vec(arc, 0..=20).prop_map(move |arcs| {
            let labels = (0..n).map(|i| format!("v{i}")).collect();
            let arcs = arcs
                .into_iter()
                .map(|(s, t)| Hyperarc::new(ids(n, &s), ids(n, &t), 1.0, ArcKind::Manual))
                .collect();
            Hypergraph::from_parts(labels, arcs).unwrap()
        })
    })
}

fn subset(h: &Hypergraph, mask: u32) -> NodeSet {
    (0..h.node_count())
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| NodeId(i as u32))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn worklist_matches_saturation(h in graph(), mask in any::<u32>()) {
        let a = subset(&h, mask);
        prop_assert_eq!(h.closure(&a).unwrap(), saturate(&h, &a));
    }

    #[test]
    fn closure_operator_laws(h in graph(), m1 in any::<u32>(), m2 in any::<u32>()) {
        let a = subset(&h, m1 & m2);
        let b = subset(&h, m1);
        let ca = h.closure(&a).unwrap();
        let cb = h.closure(&b).unwrap();
        prop_assert!(a.is_subset(&ca));
        prop_assert!(ca.is_subset(&cb));
        prop_assert_eq!(h.closure(&ca).unwrap(), ca);
    }

    #[test]
    fn safe_region_is_downward_closed(h in graph(), m1 in any::<u32>(), m2 in any::<u32>(), mf in any::<u32>()) {
        let f = ForbiddenSet::new(subset(&h, mf & !m1));
        let a = subset(&h, m1);
        let b = subset(&h, m1 & m2);
        if h.is_safe(&f, &a).unwrap() {
            prop_assert!(h.is_safe(&f, &b).unwrap());
        }
    }

    #[test]
    fn resumed_closure_matches_recompute(h in graph(), steps in proptest::collection::vec(any::<u32>(), 1..8)) {
        let mut state = ClosureState::new(&h);
        let mut a = NodeSet::new();
        let mut total = 0;
        for m in steps {
            let phi = subset(&h, m);
            let before = state.closed().clone();
            let delta = state.extend(&h, &phi);
            a.union_with(&phi);
            prop_assert_eq!(state.closed(), &saturate(&h, &a));
            prop_assert_eq!(delta, state.closed().difference(&before));
            total += state.closed().len() - before.len();
        }
        prop_assert!(total <= h.node_count());
    }

    #[test]
    fn emergent_needs_conjunction(h in graph(), mask in any::<u32>()) {
        let a = subset(&h, mask);
        let unit_only: Vec<Hyperarc> = h.arcs().iter().filter(|e| e.fan_in() == 1).cloned().collect();
        let hu = Hypergraph::from_parts(h.labels().to_vec(), unit_only).unwrap();
        let expected = saturate(&h, &a).difference(&a).difference(&saturate(&hu, &a));
        prop_assert_eq!(h.emergent(&a).unwrap(), expected);
    }

    #[test]
    fn greedy_gains_follow_definition(h in graph(), mask in any::<u32>()) {
        let a = subset(&h, mask);
        let candidates = h.all_nodes().difference(&a);
        let picks = h.greedy_topk_gains(&a, &candidates, 3).unwrap();
        let mut held = a.clone();
        for (v, gain) in picks {
            let best = candidates
                .difference(&held)
                .iter()
                .map(|u| {
                    let mut with = held.clone();
                    with.insert(u);
                    saturate(&h, &with).len() - saturate(&h, &held).len()
                })
                .max()
                .unwrap_or(0);
            prop_assert_eq!(gain, best);
            held.insert(v);
        }
    }
}

#[test]
fn antichain_members_are_minimal_unsafe_sets() {
    let mut b = Hypergraph::builder();
    b.nodes(["p", "q", "r", "s", "bad"]);
    b.rule(["p", "q"], ["bad"])
        .rule(["r"], ["q"])
        .rule(["s", "r", "p"], ["bad"]);
    let h = b.build().unwrap();
    let f = h.forbidden(["bad"]).unwrap();
    let anti = h.minimal_unsafe_antichain_bruteforce(&f, 20).unwrap();
    let pq = h.set(["p", "q"]).unwrap();
    let pr = h.set(["p", "r"]).unwrap();
    assert_eq!(anti, vec![pq, pr]);
    for s in &anti {
        assert!(!h.is_safe(&f, s).unwrap());
        for x in s.iter() {
            let mut smaller = s.clone();
            smaller.remove(x);
            assert!(h.is_safe(&f, &smaller).unwrap());
        }
    }
}
