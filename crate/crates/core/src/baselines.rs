//! Capability-blind semantic caching, kept as a baseline and as a
//! counterexample.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::{embed, Embedding};
use crate::hypergraph::{ForbiddenSet, Hypergraph};
use crate::nodeset::NodeSet;
use crate::provenance::{derive_certificate, Witness};
use crate::store::{CasEntry, CasQuery, CasStore, SnapshotPolicy};

pub const DEFAULT_TAU: f64 = 0.85;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticEntry {
    pub answer: String,
    pub emb: Embedding,
    pub origin_tenant: Option<String>,
    /// Audit only; lookups never read it.
    pub origin_witness: Witness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticCache {
    pub tau: f64,
    entries: Vec<SemanticEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticHit<'a> {
    pub id: usize,
    pub entry: &'a SemanticEntry,
    pub similarity: f64,
}

impl SemanticCache {
    pub fn new(tau: f64) -> Self {
        SemanticCache {
            tau,
            entries: Vec::new(),
        }
    }

    pub fn put(&mut self, answer: &str, origin_tenant: Option<String>, origin_witness: Witness) -> usize {
        self.entries.push(SemanticEntry {
            answer: answer.to_string(),
            emb: embed(answer),
            origin_tenant,
            origin_witness,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most similar entry if its similarity exceeds `tau`; ties go to the
    /// lowest id.
    pub fn lookup(&self, query: &Embedding) -> Option<SemanticHit<'_>> {
        let mut best: Option<SemanticHit<'_>> = None;
        for (id, entry) in self.entries.iter().enumerate() {
            let similarity = entry.emb.cosine(query);
            if best.as_ref().is_none_or(|b| similarity > b.similarity) {
                best = Some(SemanticHit { id, entry, similarity });
            }
        }
        best.filter(|b| b.similarity > self.tau)
    }
}

/// A hit is unsafe when the answer's origin witness is not inside the
/// requester's closure.
pub fn unsafe_hit_audit(hit: &SemanticHit<'_>, closure: &NodeSet) -> bool {
    !hit.entry.origin_witness.is_contained_in(closure)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub tau: f64,
    pub semantic_unsafe_hits: u32,
    pub cas_unsafe_hits: u32,
    /// Hits of the requesting tenant on its own stored answer.
    pub cas_safe_hits: u32,
    pub transcript: Vec<String>,
}

impl DemoReport {
    pub fn holds(&self) -> bool {
        self.semantic_unsafe_hits >= 1 && self.cas_unsafe_hits == 0 && self.cas_safe_hits == 1
    }
}

/// The two-tenant balance leak, replayed against a semantic cache and the CAS.
pub fn unsound_demo(tau: f64) -> DemoReport {
    let mut b = Hypergraph::builder();
    b.nodes(["read_PII", "query_db", "gen", "f_leak"]);
    b.rule(["read_PII", "gen"], ["f_leak"]);
    let h = b.build().expect("fixed demo graph is well formed");
    let set = |labels: &[&str]| h.set(labels.iter().copied()).expect("demo labels exist");
    let node = |label: &str| h.node(label).expect("demo labels exist");

    let f_t1 = ForbiddenSet::new(set(&["f_leak"]));
    let f_t2 = ForbiddenSet::empty();
    let answer = "Balance: $247.50";
    let mut transcript = Vec::new();

    let gen = node("gen");
    let entry = |witness: NodeSet, f_snap: &ForbiddenSet, tenant: &str, t_store: u64| CasEntry {
        capability: gen,
        answer: answer.to_string(),
        cert: derive_certificate(&h, &witness, gen).expect("gen is in its own witness"),
        witness: Witness::new(witness),
        pab: Vec::new(),
        f_snap: f_snap.clone(),
        t_store,
        emb: embed(answer),
        tenant: Some(tenant.to_string()),
    };

    let mut semantic = SemanticCache::new(tau);
    let mut cas = CasStore::new();
    let w_t2 = set(&["read_PII", "query_db", "gen"]);
    semantic.put(answer, Some("T2".into()), Witness::new(w_t2.clone()));
    cas.put(entry(w_t2, &f_t2, "T2", 0));
    transcript.push(format!(
        "T2 stores \"{answer}\" with witness {{read_PII, query_db, gen}}"
    ));

    let a_t1 = set(&["query_db", "gen"]);
    let c_t1 = h.closure(&a_t1).expect("demo set is valid");
    let q = embed(answer);
    let mut report = DemoReport {
        tau,
        semantic_unsafe_hits: 0,
        cas_unsafe_hits: 0,
        cas_safe_hits: 0,
        transcript,
    };

    match semantic.lookup(&q) {
        Some(hit) => {
            let unsafe_hit = unsafe_hit_audit(&hit, &c_t1);
            report.semantic_unsafe_hits += unsafe_hit as u32;
            report.transcript.push(format!(
                "T1 semantic cache: hit entry {} at cosine {:.3} > tau {tau}; origin witness contained: {}",
                hit.id, hit.similarity, !unsafe_hit
            ));
        }
        None => report.transcript.push("T1 semantic cache: miss".into()),
    }

    let query = CasQuery {
        emb: &q,
        capability: Some(gen),
        top: None,
    };
    let cas_verdict = |cas: &CasStore, report: &mut DemoReport, step: &str| match cas.lookup(
        &h,
        &query,
        &c_t1,
        &f_t1,
        SnapshotPolicy::Strict,
    ) {
        Some(hit) => {
            let contained = hit.entry.witness.is_contained_in(&c_t1);
            if contained {
                report.cas_safe_hits += 1;
            } else {
                report.cas_unsafe_hits += 1;
            }
            report
                .transcript
                .push(format!("{step}: hit entry {}; witness contained: {contained}", hit.id));
        }
        None => {
            let rejected = cas
                .entries()
                .iter()
                .filter(|e| !e.witness.is_contained_in(&c_t1))
                .count();
            report.transcript.push(format!(
                "{step}: miss; {rejected} candidate(s) rejected because read_PII is outside cl(query_db, gen)"
            ));
        }
    };
    cas_verdict(&cas, &mut report, "T1 CAS");

    cas.put(entry(a_t1.clone(), &f_t1, "T1", 1));
    report
        .transcript
        .push(format!("T1 stores \"{answer}\" with witness {{query_db, gen}}"));
    cas_verdict(&cas, &mut report, "T1 CAS, repeated query");
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::fixtures::*;

    #[test]
    fn semantic_lookup_examples() {
        let mut cache = SemanticCache::new(DEFAULT_TAU);
        assert!(cache.lookup(&embed("anything")).is_none());
        cache.put("Balance: $247.50", None, Witness::default());
        let hit = cache.lookup(&embed("Balance: $247.50")).unwrap();
        assert!((hit.similarity - 1.0).abs() < 1e-12);
        assert!(cache.lookup(&Embedding::zero()).is_none());
    }

    #[test]
    fn audit_examples() {
        let h = leak();
        let mut cache = SemanticCache::new(DEFAULT_TAU);
        cache.put("x", None, Witness::new(set(&h, &["query_db", "gen"])));
        cache.put("y", None, Witness::new(set(&h, &["read_PII", "query_db", "gen"])));
        let c_t1 = h.closure(&set(&h, &["query_db", "gen"])).unwrap();
        assert!(!unsafe_hit_audit(&cache.lookup(&embed("x")).unwrap(), &c_t1));
        assert!(unsafe_hit_audit(&cache.lookup(&embed("y")).unwrap(), &c_t1));
    }

    #[test]
    fn demo_holds_for_any_tau_below_one() {
        for tau in [0.5, DEFAULT_TAU, 0.99] {
            let r = unsound_demo(tau);
            assert_eq!(r.semantic_unsafe_hits, 1, "{:?}", r.transcript);
            assert_eq!(r.cas_unsafe_hits, 0);
            assert_eq!(r.cas_safe_hits, 1);
            assert!(r.holds());
        }
    }
}
