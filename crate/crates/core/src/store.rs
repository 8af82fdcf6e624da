//! Certified Answer Store and Pre-Answer Blocks.
//!
//! A stored answer is reusable under a closure `C` iff its witness is
//! contained in `C` and the forbidden set has not changed since it was
//! stored. Embedding similarity only orders the scan.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::hypergraph::{ForbiddenSet, Hypergraph};
use crate::nodeset::{NodeId, NodeSet};
use crate::provenance::{certify, Certificate, Witness};

/// Answer templates keyed by capability label, with `{slot}` placeholders.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateDb {
    templates: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    /// Placeholders with no value, rendered as `{slot:unknown}`.
    pub unresolved: Vec<String>,
}

impl TemplateDb {
    pub fn new(templates: BTreeMap<String, String>) -> Self {
        TemplateDb { templates }
    }

    pub fn insert(&mut self, capability: &str, template: &str) {
        self.templates.insert(capability.to_string(), template.to_string());
    }

    pub fn has(&self, capability: &str) -> bool {
        self.templates.contains_key(capability)
    }

    pub fn get(&self, capability: &str) -> Option<&str> {
        self.templates.get(capability).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.templates.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Keeps `⌊p·|templates|⌋` entries, chosen by a seeded shuffle of the
    /// sorted keys.
    pub fn with_coverage(&self, p: f64, seed: u64) -> Result<TemplateDb> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("coverage {p} outside [0, 1]")));
        }
        let keep = libm::floor(p * self.templates.len() as f64) as usize;
        let mut keys: Vec<&String> = self.templates.keys().collect();
        keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let templates = keys
            .into_iter()
            .take(keep)
            .map(|k| (k.clone(), self.templates[k].clone()))
            .collect();
        Ok(TemplateDb { templates })
    }

    pub fn render(&self, capability: &str, facts: &BTreeMap<String, String>) -> Result<Rendered> {
        let template = self
            .get(capability)
            .ok_or_else(|| Error::MissingTemplate(capability.to_string()))?;
        Ok(render_template(template, facts))
    }
}

/// Substitutes `{slot}` placeholders from `facts`.
pub fn render_template(template: &str, facts: &BTreeMap<String, String>) -> Rendered {
    let mut text = String::with_capacity(template.len());
    let mut unresolved = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find(['{', '}']) {
            Some(close) if after.as_bytes()[close] == b'}' => {
                let slot = &after[..close];
                match facts.get(slot) {
                    Some(value) => text.push_str(value),
                    None => {
                        text.push('{');
                        text.push_str(slot);
                        text.push_str(":unknown}");
                        unresolved.push(slot.to_string());
                    }
                }
                rest = &after[close + 1..];
            }
            _ => {
                text.push('{');
                rest = after;
            }
        }
    }
    text.push_str(rest);
    Rendered { text, unresolved }
}

/// A pre-certified follow-up answer `(v, ans_v, W_v, cert_v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PabEntry {
    pub capability: NodeId,
    pub answer: String,
    pub witness: Witness,
    /// Based on `witness`, so it replays under any closure containing it.
    pub cert: Certificate,
    /// Forbidden set the entry was built under.
    pub f_snap: ForbiddenSet,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved_slots: Vec<String>,
}

/// Pre-Answer Block for `A_t`: one entry per templated, non-forbidden
/// capability in `cl(A_t) \ A_t`.
///
/// Refuses to run when `cl(A_t)` meets the forbidden set.
pub fn build_pab(
    graph: &Hypergraph,
    a_t: &NodeSet,
    cl_at: &NodeSet,
    forbidden: &ForbiddenSet,
    cert_main: &Certificate,
    tdb: &TemplateDb,
    facts: &BTreeMap<String, String>,
) -> Result<Vec<PabEntry>> {
    if cl_at.intersects(&forbidden.members) {
        return Err(Error::GateViolation);
    }
    let mut out = Vec::new();
    for v in cl_at.difference(a_t).iter() {
        if forbidden.members.contains(v) {
            continue;
        }
        let label = graph.label(v).ok_or(Error::UnknownNode(v))?;
        if !tdb.has(label) {
            continue;
        }
        let (witness, cert) = certify(graph, a_t, cert_main, v)?;
        let rendered = tdb.render(label, facts)?;
        out.push(PabEntry {
            capability: v,
            answer: rendered.text,
            witness,
            cert,
            f_snap: forbidden.clone(),
            unresolved_slots: rendered.unresolved,
        });
    }
    Ok(out)
}

/// `(ans, W, PAB, F_snap, cert, t_store, emb)`, plus the capability the
/// answer certifies and the tenant that stored it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasEntry {
    pub capability: NodeId,
    pub answer: String,
    pub witness: Witness,
    pub pab: Vec<PabEntry>,
    pub f_snap: ForbiddenSet,
    pub cert: Certificate,
    pub t_store: u64,
    pub emb: Embedding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenant: Option<String>,
}

/// How a stored forbidden-set snapshot is compared with the current one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotPolicy {
    /// Snapshot must equal the current set, version included.
    #[default]
    Strict,
    /// Only newly forbidden capabilities inside `cl(W)` invalidate.
    Refined,
}

#[derive(Clone, Debug)]
pub struct CasQuery<'a> {
    pub emb: &'a Embedding,
    /// When set, only entries certifying this capability qualify.
    pub capability: Option<NodeId>,
    /// Candidates taken from the similarity ranking; `None` scans all.
    pub top: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CasHit<'a> {
    pub id: usize,
    pub entry: &'a CasEntry,
    pub similarity: f64,
}

/// Append-only store of certified answers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CasStore {
    entries: Vec<CasEntry>,
}

impl CasStore {
    pub fn new() -> Self {
        CasStore::default()
    }

    pub fn from_entries(entries: Vec<CasEntry>) -> Self {
        CasStore { entries }
    }

    pub fn put(&mut self, entry: CasEntry) -> usize {
        self.entries.push(entry);
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&CasEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> &[CasEntry] {
        &self.entries
    }

    /// Entries by descending cosine similarity, ties by ascending id.
    pub fn approx_filter(&self, query: &Embedding, top: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(id, e)| (id, e.emb.cosine(query)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top);
        ranked
    }

    /// First candidate whose witness is inside `closure` and whose snapshot
    /// passes `policy`.
    pub fn lookup<'s>(
        &'s self,
        graph: &Hypergraph,
        query: &CasQuery<'_>,
        closure: &NodeSet,
        forbidden: &ForbiddenSet,
        policy: SnapshotPolicy,
    ) -> Option<CasHit<'s>> {
        let qualifies = |entry: &CasEntry| {
            query.capability.is_none_or(|c| c == entry.capability)
                && entry.witness.is_contained_in(closure)
                && snapshot_ok(graph, entry, forbidden, policy)
        };
        match query.top {
            Some(top) => self
                .approx_filter(query.emb, top)
                .into_iter()
                .find_map(|(id, similarity)| {
                    let entry = &self.entries[id];
                    qualifies(entry).then_some(CasHit { id, entry, similarity })
                }),
            // Same answer as ranking everything first: the most similar
            // qualifying entry, ties to the lowest id.
            None => self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| qualifies(e))
                .map(|(id, entry)| CasHit {
                    id,
                    entry,
                    similarity: entry.emb.cosine(query.emb),
                })
                .reduce(|best, c| if c.similarity > best.similarity { c } else { best }),
        }
    }
}

fn snapshot_ok(graph: &Hypergraph, entry: &CasEntry, forbidden: &ForbiddenSet, policy: SnapshotPolicy) -> bool {
    match policy {
        SnapshotPolicy::Strict => entry.f_snap == *forbidden,
        SnapshotPolicy::Refined => {
            let added = forbidden.members.difference(&entry.f_snap.members);
            added.is_empty() || graph.closure_unchecked(&entry.witness.members).is_disjoint(&added)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed;
    use crate::hypergraph::fixtures::*;
    use crate::provenance::{closure_certificate, derive_certificate};
    use alloc::vec;

    fn facts(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn render_examples() {
        let mut tdb = TemplateDb::default();
        tdb.insert("hotel-parking", "Parking: {hotel-parking}");
        tdb.insert("plain", "No placeholders here.");
        tdb.insert("balance", "Balance: {amount}");
        assert_eq!(
            tdb.render("hotel-parking", &facts(&[("hotel-parking", "yes")]))
                .unwrap()
                .text,
            "Parking: yes"
        );
        assert_eq!(tdb.render("plain", &facts(&[])).unwrap().text, "No placeholders here.");
        assert_eq!(
            tdb.render("balance", &facts(&[("amount", "$247.50")])).unwrap().text,
            "Balance: $247.50"
        );
        assert_eq!(
            tdb.render("nope", &facts(&[])),
            Err(Error::MissingTemplate("nope".into()))
        );
    }

    #[test]
    fn unresolved_slots_are_flagged() {
        let r = render_template("Ref {ref} for {name} {", &facts(&[("name", "Acorn")]));
        assert_eq!(r.text, "Ref {ref:unknown} for Acorn {");
        assert_eq!(r.unresolved, vec!["ref".to_string()]);
    }

    #[test]
    fn coverage_keeps_floor_fraction() {
        let mut tdb = TemplateDb::default();
        for i in 0..10 {
            tdb.insert(&format!("c{i}"), "t");
        }
        assert_eq!(tdb.with_coverage(0.75, 1).unwrap().len(), 7);
        assert_eq!(tdb.with_coverage(0.0, 1).unwrap().len(), 0);
        assert_eq!(tdb.with_coverage(1.0, 1).unwrap(), tdb);
        assert_eq!(tdb.with_coverage(0.5, 9).unwrap(), tdb.with_coverage(0.5, 9).unwrap());
        assert!(tdb.with_coverage(1.5, 1).is_err());
    }

    fn toy_tdb() -> TemplateDb {
        let mut tdb = TemplateDb::default();
        tdb.insert("c", "c holds");
        tdb.insert("d", "d holds");
        tdb
    }

    #[test]
    fn pab_examples() {
        let h = toy();
        let none = ForbiddenSet::empty();
        let ab = set(&h, &["a", "b"]);
        let cl = h.closure(&ab).unwrap();
        let cert = closure_certificate(&h, &ab).unwrap();
        let pab = build_pab(&h, &ab, &cl, &none, &cert, &toy_tdb(), &BTreeMap::new()).unwrap();
        assert_eq!(pab.len(), 2);
        assert_eq!(pab[0].capability, h.node("c").unwrap());
        assert_eq!(pab[1].capability, h.node("d").unwrap());
        for e in &pab {
            assert_eq!(e.witness.members, ab);
            assert_eq!(e.cert.base, ab);
        }

        // Nothing derivable beyond the inputs.
        let a = set(&h, &["a"]);
        let cert = closure_certificate(&h, &a).unwrap();
        assert!(build_pab(&h, &a, &a, &none, &cert, &toy_tdb(), &BTreeMap::new())
            .unwrap()
            .is_empty());

        let empty = toy_tdb().with_coverage(0.0, 0).unwrap();
        let cert = closure_certificate(&h, &ab).unwrap();
        assert!(build_pab(&h, &ab, &cl, &none, &cert, &empty, &BTreeMap::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pab_refuses_unsafe_closure() {
        let h = toy();
        let ab = set(&h, &["a", "b"]);
        let cl = h.closure(&ab).unwrap();
        let f = h.forbidden(["d"]).unwrap();
        let cert = closure_certificate(&h, &ab).unwrap();
        assert_eq!(
            build_pab(&h, &ab, &cl, &f, &cert, &toy_tdb(), &BTreeMap::new()),
            Err(Error::GateViolation)
        );
    }

    fn entry(h: &Hypergraph, witness: &[&str], answer: &str, f: &ForbiddenSet) -> CasEntry {
        let w = set(h, witness);
        let v = h.node("gen").unwrap();
        CasEntry {
            capability: v,
            answer: answer.to_string(),
            cert: derive_certificate(h, &w, v).unwrap(),
            witness: Witness::new(w),
            pab: vec![],
            f_snap: f.clone(),
            t_store: 0,
            emb: embed(answer),
            tenant: None,
        }
    }

    #[test]
    fn put_ids_are_monotone_without_dedup() {
        let h = leak();
        let f = h.forbidden(["f_leak"]).unwrap();
        let mut store = CasStore::new();
        let e = entry(&h, &["query_db", "gen"], "Balance: $247.50", &f);
        assert_eq!(store.put(e.clone()), 0);
        assert_eq!(store.put(e.clone()), 1);
        for _ in 0..8 {
            store.put(e.clone());
        }
        assert_eq!(store.put(e), 10);
    }

    #[test]
    fn approx_filter_ranks_by_similarity_then_id() {
        let h = leak();
        let f = ForbiddenSet::empty();
        let mut store = CasStore::new();
        assert!(store.approx_filter(&embed("x"), 3).is_empty());
        store.put(entry(&h, &["gen"], "alpha beta", &f));
        store.put(entry(&h, &["gen"], "gamma delta", &f));
        store.put(entry(&h, &["gen"], "gamma delta", &f));
        let ranked = store.approx_filter(&embed("gamma delta"), 10);
        assert_eq!(ranked.len(), 3);
        assert_eq!((ranked[0].0, ranked[1].0), (1, 2));
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(store.approx_filter(&embed("gamma delta"), 1).len(), 1);
    }

    #[test]
    fn lookup_examples() {
        let h = leak();
        let f = h.forbidden(["f_leak"]).unwrap();
        let q = embed("Balance: $247.50");
        let query = CasQuery {
            emb: &q,
            capability: None,
            top: None,
        };
        let t1 = h.closure(&set(&h, &["query_db", "gen"])).unwrap();

        assert!(CasStore::new()
            .lookup(&h, &query, &t1, &f, SnapshotPolicy::Strict)
            .is_none());

        let mut own = CasStore::new();
        own.put(entry(&h, &["query_db", "gen"], "Balance: $247.50", &f));
        assert!(own.lookup(&h, &query, &t1, &f, SnapshotPolicy::Strict).is_some());

        let mut foreign = CasStore::new();
        foreign.put(entry(&h, &["read_PII", "query_db", "gen"], "Balance: $247.50", &f));
        let ranked = foreign.approx_filter(&q, 1);
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        assert!(foreign.lookup(&h, &query, &t1, &f, SnapshotPolicy::Strict).is_none());
    }

    #[test]
    fn snapshot_policies() {
        let h = toy();
        let old = ForbiddenSet::empty();
        let w = set(&h, &["a", "b"]);
        let c = h.node("c").unwrap();
        let e = CasEntry {
            capability: c,
            answer: "c".into(),
            cert: derive_certificate(&h, &w, c).unwrap(),
            witness: Witness::new(w.clone()),
            pab: vec![],
            f_snap: old.clone(),
            t_store: 0,
            emb: embed("c"),
            tenant: None,
        };
        let mut store = CasStore::new();
        store.put(e);
        let q = embed("c");
        let query = CasQuery {
            emb: &q,
            capability: Some(c),
            top: None,
        };
        let closure = h.closure(&w).unwrap();

        // x is unrelated to cl(W), d is inside it.
        let unrelated = old.mutate(set(&h, &["x"]));
        let related = old.mutate(set(&h, &["d"]));
        assert!(store
            .lookup(&h, &query, &closure, &unrelated, SnapshotPolicy::Strict)
            .is_none());
        assert!(store
            .lookup(&h, &query, &closure, &unrelated, SnapshotPolicy::Refined)
            .is_some());
        assert!(store
            .lookup(&h, &query, &closure, &related, SnapshotPolicy::Refined)
            .is_none());

        let other = CasQuery {
            emb: &q,
            capability: Some(h.node("d").unwrap()),
            top: None,
        };
        assert!(store
            .lookup(&h, &other, &closure, &old, SnapshotPolicy::Strict)
            .is_none());
    }
}
