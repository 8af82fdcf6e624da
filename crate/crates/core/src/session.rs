//! Per-session pipeline state: cumulative capabilities, the incrementally
//! maintained session closure, the session Pre-Answer Block and the tiered
//! Stage-0 lookup.
//!
//! Within a session capabilities are only added, so the closure is extended
//! from persistent arc counters and every node enters it exactly once.
//! Revocation is the one exception and recomputes the closure from scratch.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dialogue::TurnInput;
use crate::embed::embed;
use crate::error::Result;
use crate::hypergraph::{ClosureState, ForbiddenSet, Hypergraph};
use crate::nodeset::{NodeId, NodeSet};
use crate::provenance::{certify, closure_certificate, Certificate, Witness};
use crate::store::{build_pab, CasEntry, CasQuery, CasStore, PabEntry, SnapshotPolicy, TemplateDb};

/// Simulated cost units per serving path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub rag_units: u64,
    pub tier2_units: u64,
    pub tier1_units: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            rag_units: 1000,
            tier2_units: 10,
            tier1_units: 1,
        }
    }
}

/// Which reuse tiers a session may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cost: CostModel,
    pub policy: SnapshotPolicy,
    /// Build and consult the session PAB (Tier 1).
    pub use_pab: bool,
    /// Consult and write the CAS (Tier 2).
    pub use_cas: bool,
    /// Candidates taken from the similarity ranking; `None` scans all.
    pub top: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cost: CostModel::default(),
            policy: SnapshotPolicy::Strict,
            use_pab: true,
            use_cas: true,
            top: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub rag_calls: u64,
    pub tier1_hits: u64,
    pub tier2_hits: u64,
    pub blocked: u64,
    pub delta_total: u64,
    pub cost_units: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServedBy {
    Tier1Pab,
    Tier2Cas,
    Rag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Safety {
    Pass,
    Blocked,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub emergent: usize,
    pub frontier: usize,
    pub forbidden_productive_frontier: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutcome {
    /// `None` exactly when the turn was blocked.
    pub served_by: Option<ServedBy>,
    pub safety: Safety,
    pub capability: NodeId,
    pub answer: String,
    /// Present for reused answers and for RAG answers whose capability is
    /// derivable; absent for blocked turns.
    pub cert: Option<Certificate>,
    pub witness: Option<Witness>,
    pub delta: NodeSet,
    /// Id of the CAS entry written or hit this turn.
    pub cas_entry: Option<usize>,
    pub cost_units: u64,
    pub diagnostics: Diagnostics,
}

/// One JSON-lines record of a session trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: u64,
    pub capability: String,
    pub served_by: Option<ServedBy>,
    pub safety: Safety,
    pub delta: usize,
    pub counters: Counters,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Closure after recomputation.
    pub recomputed: NodeSet,
    /// Capabilities whose PAB entries were dropped, ascending.
    pub invalidated: Vec<NodeId>,
    /// Revoked capabilities that were not in the session set.
    pub absent: NodeSet,
    /// Nodes plus arc sources touched by the recomputation.
    pub cost_units: u64,
    pub gate: Option<Safety>,
}

/// Where a CAS hit's PAB lands on key collision: the existing entry wins.
fn merge_first_writer(pab: &mut BTreeMap<NodeId, PabEntry>, entries: &[PabEntry]) {
    for e in entries {
        pab.entry(e.capability).or_insert_with(|| e.clone());
    }
}

#[derive(Clone, Debug)]
pub struct Session<'g> {
    graph: &'g Hypergraph,
    config: PipelineConfig,
    tenant: Option<String>,
    a: NodeSet,
    engine: ClosureState,
    pab: BTreeMap<NodeId, PabEntry>,
    deltas: Vec<NodeSet>,
    forbidden: ForbiddenSet,
    facts: BTreeMap<String, String>,
    counters: Counters,
    turn: u64,
}

impl<'g> Session<'g> {
    pub fn new(graph: &'g Hypergraph, forbidden: ForbiddenSet, config: PipelineConfig) -> Result<Self> {
        graph.check(&forbidden.members)?;
        Ok(Session {
            graph,
            config,
            tenant: None,
            a: NodeSet::new(),
            engine: ClosureState::new(graph),
            pab: BTreeMap::new(),
            deltas: Vec::new(),
            forbidden,
            facts: BTreeMap::new(),
            counters: Counters::default(),
            turn: 0,
        })
    }

    pub fn with_tenant(mut self, tenant: Option<String>) -> Self {
        self.tenant = tenant;
        self
    }

    pub fn graph(&self) -> &'g Hypergraph {
        self.graph
    }

    pub fn capabilities(&self) -> &NodeSet {
        &self.a
    }

    pub fn closure(&self) -> &NodeSet {
        self.engine.closed()
    }

    pub fn pab(&self) -> &BTreeMap<NodeId, PabEntry> {
        &self.pab
    }

    pub fn deltas(&self) -> &[NodeSet] {
        &self.deltas
    }

    pub fn forbidden(&self) -> &ForbiddenSet {
        &self.forbidden
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn turn(&self) -> u64 {
        self.turn
    }

    /// Replaces the forbidden set; PAB entries built under the old one stop
    /// matching under the strict policy.
    pub fn set_forbidden(&mut self, forbidden: ForbiddenSet) -> Result<()> {
        self.graph.check(&forbidden.members)?;
        self.forbidden = forbidden;
        Ok(())
    }

    /// `A_t ← A_{t−1} ∪ φ`, extending the closure incrementally. Returns `Δ_t`.
    pub fn advance(&mut self, phi: &NodeSet) -> Result<NodeSet> {
        self.graph.check(phi)?;
        self.a.union_with(phi);
        let delta = self.engine.extend(self.graph, phi);
        self.counters.delta_total += delta.len() as u64;
        self.deltas.push(delta.clone());
        Ok(delta)
    }

    pub fn gate(&self) -> Safety {
        if self.engine.closed().is_disjoint(&self.forbidden.members) {
            Safety::Pass
        } else {
            Safety::Blocked
        }
    }

    fn tier1(&self, v: NodeId) -> Option<&PabEntry> {
        let entry = self.pab.get(&v)?;
        let fresh = match self.config.policy {
            SnapshotPolicy::Strict => entry.f_snap == self.forbidden,
            SnapshotPolicy::Refined => {
                let added = self.forbidden.members.difference(&entry.f_snap.members);
                added.is_empty() || self.graph.closure_unchecked(&entry.witness.members).is_disjoint(&added)
            }
        };
        (fresh && entry.witness.is_contained_in(self.engine.closed())).then_some(entry)
    }

    /// Tier 1 then Tier 2, merging a CAS hit's PAB into the session PAB.
    pub fn stage0_lookup(
        &mut self,
        v: NodeId,
        query_text: &str,
        cas: &CasStore,
    ) -> Option<(ServedBy, String, Certificate, Witness, Option<usize>)> {
        if self.config.use_pab {
            if let Some(e) = self.tier1(v) {
                return Some((
                    ServedBy::Tier1Pab,
                    e.answer.clone(),
                    e.cert.clone(),
                    e.witness.clone(),
                    None,
                ));
            }
        }
        if !self.config.use_cas {
            return None;
        }
        let emb = embed(query_text);
        let query = CasQuery {
            emb: &emb,
            capability: Some(v),
            top: self.config.top,
        };
        let hit = cas.lookup(
            self.graph,
            &query,
            self.engine.closed(),
            &self.forbidden,
            self.config.policy,
        )?;
        if self.config.use_pab {
            merge_first_writer(&mut self.pab, &hit.entry.pab);
        }
        let e = hit.entry;
        Some((
            ServedBy::Tier2Cas,
            e.answer.clone(),
            e.cert.clone(),
            e.witness.clone(),
            Some(hit.id),
        ))
    }

    fn diagnostics(&self) -> Diagnostics {
        let closed = self.engine.closed();
        let unit = self.graph.closure_unit(&self.a).unwrap_or_default();
        // An arc's counter is its number of sources outside the closure.
        let (mut frontier, mut productive) = (0, 0);
        for (arc, &left) in self.graph.arcs().iter().zip(self.engine.remaining()) {
            if left == 1 {
                frontier += 1;
                productive += arc.targets.intersects(&self.forbidden.members) as usize;
            }
        }
        Diagnostics {
            emergent: closed.difference(&self.a).difference(&unit).len(),
            frontier,
            forbidden_productive_frontier: productive,
        }
    }

    /// PAB for the current closure; own entries replace stale or absent ones.
    fn rebuild_pab(&mut self, tdb: &TemplateDb) -> Result<Vec<PabEntry>> {
        let cert_main = closure_certificate(self.graph, &self.a)?;
        let built = build_pab(
            self.graph,
            &self.a,
            self.engine.closed(),
            &self.forbidden,
            &cert_main,
            tdb,
            &self.facts,
        )?;
        for e in &built {
            let keep = self
                .pab
                .get(&e.capability)
                .is_some_and(|old| old.f_snap == self.forbidden && old.witness.is_contained_in(self.engine.closed()));
            if !keep {
                self.pab.insert(e.capability, e.clone());
            }
        }
        Ok(built)
    }

    /// Runs one turn through advance, the safety gate, Stage-0 lookup and,
    /// on a miss, simulated retrieval with a CAS write.
    pub fn process_turn(&mut self, input: &TurnInput, cas: &mut CasStore, tdb: &TemplateDb) -> Result<TurnOutcome> {
        self.graph.check(&NodeSet::singleton(input.primary))?;
        let t = self.turn;
        self.turn += 1;
        let delta = self.advance(&input.phi)?;
        for (k, v) in &input.facts {
            self.facts.insert(k.clone(), v.clone());
        }
        let diagnostics = self.diagnostics();
        let label = self.graph.label(input.primary).unwrap_or_default().to_string();

        if self.gate() == Safety::Blocked {
            self.counters.blocked += 1;
            return Ok(TurnOutcome {
                served_by: None,
                safety: Safety::Blocked,
                capability: input.primary,
                answer: String::new(),
                cert: None,
                witness: None,
                delta,
                cas_entry: None,
                cost_units: 0,
                diagnostics,
            });
        }

        let looked_up = self.stage0_lookup(input.primary, &input.query_text, cas);
        if let Some((served_by, answer, cert, witness, cas_entry)) = looked_up {
            let cost = match served_by {
                ServedBy::Tier1Pab => {
                    self.counters.tier1_hits += 1;
                    self.config.cost.tier1_units
                }
                _ => {
                    self.counters.tier2_hits += 1;
                    self.config.cost.tier2_units
                }
            };
            self.counters.cost_units += cost;
            if self.config.use_pab && !delta.is_empty() {
                self.rebuild_pab(tdb)?;
            }
            return Ok(TurnOutcome {
                served_by: Some(served_by),
                safety: Safety::Pass,
                capability: input.primary,
                answer,
                cert: Some(cert),
                witness: Some(witness),
                delta,
                cas_entry,
                cost_units: cost,
                diagnostics,
            });
        }

        self.counters.rag_calls += 1;
        self.counters.cost_units += self.config.cost.rag_units;
        let answer = match tdb.render(&label, &self.facts) {
            Ok(r) => r.text,
            Err(_) => alloc::format!("RAG({label})"),
        };
        let built = if self.config.use_pab {
            self.rebuild_pab(tdb)?
        } else {
            Vec::new()
        };
        let (cert, witness, cas_entry) = if self.engine.closed().contains(input.primary) {
            let cert_main = closure_certificate(self.graph, &self.a)?;
            let (witness, cert) = certify(self.graph, &self.a, &cert_main, input.primary)?;
            let id = self.config.use_cas.then(|| {
                cas.put(CasEntry {
                    capability: input.primary,
                    answer: answer.clone(),
                    witness: witness.clone(),
                    pab: built,
                    f_snap: self.forbidden.clone(),
                    cert: cert.clone(),
                    t_store: t,
                    emb: embed(&answer),
                    tenant: self.tenant.clone(),
                })
            });
            (Some(cert), Some(witness), id)
        } else {
            (None, None, None)
        };
        Ok(TurnOutcome {
            served_by: Some(ServedBy::Rag),
            safety: Safety::Pass,
            capability: input.primary,
            answer,
            cert,
            witness,
            delta,
            cas_entry,
            cost_units: self.config.cost.rag_units,
            diagnostics,
        })
    }

    pub fn trace_record(&self, outcome: &TurnOutcome) -> TraceRecord {
        TraceRecord {
            turn: self.turn.saturating_sub(1),
            capability: self.graph.label(outcome.capability).unwrap_or_default().to_string(),
            served_by: outcome.served_by,
            safety: outcome.safety,
            delta: outcome.delta.len(),
            counters: self.counters,
        }
    }

    /// Removes `revoked` from the session set, recomputes the closure from
    /// scratch and drops PAB entries whose witness met `revoked` or is no
    /// longer contained in the closure.
    pub fn revoke(&mut self, revoked: &NodeSet, recheck_gate: bool) -> Result<RecoveryReport> {
        self.graph.check(revoked)?;
        let absent = revoked.difference(&self.a);
        if revoked.is_subset(&absent) {
            return Ok(RecoveryReport {
                recomputed: self.engine.closed().clone(),
                invalidated: Vec::new(),
                absent,
                cost_units: 0,
                gate: recheck_gate.then(|| self.gate()),
            });
        }
        self.a.difference_with(revoked);
        self.engine = ClosureState::from_seeds(self.graph, &self.a);
        let closed = self.engine.closed();
        let invalidated: Vec<NodeId> = self
            .pab
            .iter()
            .filter(|(_, e)| e.witness.members.intersects(revoked) || !e.witness.is_contained_in(closed))
            .map(|(&v, _)| v)
            .collect();
        for v in &invalidated {
            self.pab.remove(v);
        }
        for v in revoked.iter() {
            if let Some(label) = self.graph.label(v) {
                self.facts.remove(label);
            }
        }
        self.deltas.clear();
        let work = self.graph.node_count() + self.graph.arcs().iter().map(|a| a.fan_in()).sum::<usize>();
        Ok(RecoveryReport {
            recomputed: self.engine.closed().clone(),
            invalidated,
            absent,
            cost_units: work as u64,
            gate: recheck_gate.then(|| self.gate()),
        })
    }
}
