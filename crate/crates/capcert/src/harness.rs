//! Experiment orchestration: corpus replay per method and coverage level,
//! the slot-omission experiment, the hit-rate bound and report emission.
//!
//! Runs for different `(method, coverage)` pairs are independent and execute
//! on the rayon pool. Within a run, sessions replay in corpus order because
//! they share one CAS. Output never depends on thread scheduling.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use capcert_core::baselines::SemanticCache;
use capcert_core::dialogue::{facts, slot_capability, Corpus, Turn, TurnInput};
use capcert_core::embed::embed;
use capcert_core::provenance::{certify, check_certificate, closure_certificate, Witness};
use capcert_core::session::{CostModel, PipelineConfig, Safety, ServedBy, Session, TraceRecord};
use capcert_core::store::{CasStore, SnapshotPolicy, TemplateDb};
use capcert_core::{ArcKind, ForbiddenSet, Hypergraph, NodeId, NodeSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{to_json_string, write_text};
use crate::omission::inject_slot_omission;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoCache,
    Cosine,
    CasOnly,
    CasPab,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::NoCache, Method::Cosine, Method::CasOnly, Method::CasPab];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoCache => "no_cache",
            Method::Cosine => "cosine",
            Method::CasOnly => "cas_only",
            Method::CasPab => "cas_pab",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Lifetime of the CAS during a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CasScope {
    /// One store shared by every session of the run.
    #[default]
    PerRun,
    /// A fresh store per session.
    PerSession,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub coverage: Vec<f64>,
    pub tau: f64,
    pub cost: CostModel,
    pub cas_scope: CasScope,
    pub policy: SnapshotPolicy,
    pub top: Option<usize>,
    /// Keep per-turn trace records.
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            methods: Method::ALL.to_vec(),
            coverage: vec![1.0, 0.75, 0.5, 0.25],
            tau: capcert_core::baselines::DEFAULT_TAU,
            cost: CostModel::default(),
            cas_scope: CasScope::PerRun,
            policy: SnapshotPolicy::Strict,
            top: None,
            trace: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.coverage.is_empty() {
            return Err(Error::Config("need at least one method and one coverage level".into()));
        }
        if let Some(p) = self.coverage.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("coverage {p} outside [0, 1]")));
        }
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} outside (-1, 1]", self.tau)));
        }
        if self.top == Some(0) {
            return Err(Error::Config("top must be at least 1".into()));
        }
        Ok(())
    }
}

/// Graph, forbidden set, corpus and the full template set of an experiment.
#[derive(Clone, Copy, Debug)]
pub struct Inputs<'a> {
    pub graph: &'a Hypergraph,
    pub forbidden: &'a ForbiddenSet,
    pub corpus: &'a Corpus,
    pub templates: &'a TemplateDb,
}

/// φ from the belief state alone.
pub fn belief_phi(graph: &Hypergraph, turn: &Turn) -> Result<NodeSet> {
    let mut out = NodeSet::new();
    for (domain, slots) in &turn.belief_state {
        for (slot, value) in slots {
            out.insert(slot_capability(graph, domain, slot, value)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSession {
    pub session_id: String,
    pub tenant: Option<String>,
    pub inputs: Vec<TurnInput>,
    /// Distinct per-turn closures.
    pub k: usize,
}

pub fn prepare(graph: &Hypergraph, corpus: &Corpus) -> Result<Vec<PreparedSession>> {
    corpus
        .sessions
        .par_iter()
        .map(|s| {
            let inputs = s
                .turns
                .iter()
                .map(|t| {
                    Ok(TurnInput {
                        phi: belief_phi(graph, t)?,
                        primary: graph.node(&t.primary_capability)?,
                        facts: facts(t),
                        query_text: t.answer_text.clone().unwrap_or_else(|| t.primary_capability.clone()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let classes: BTreeSet<NodeSet> = inputs
                .iter()
                .map(|i| graph.closure(&i.phi))
                .collect::<std::result::Result<_, _>>()?;
            Ok(PreparedSession {
                session_id: s.session_id.clone(),
                tenant: s.tenant().map(str::to_string),
                k: classes.len(),
                inputs,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub turns: u64,
    pub k: u64,
    pub rag_calls: u64,
    pub tier1: u64,
    pub tier2: u64,
    pub blocked: u64,
    pub unsafe_hits: u64,
    pub cost_units: u64,
    pub delta_total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sessions: u64,
    pub turns: u64,
    pub mean_turns: f64,
    pub mean_k: f64,
    pub mean_rag: f64,
    pub tier1_rate: f64,
    pub tier2_rate: f64,
    /// `(tier1 + tier2) / turns`.
    pub hit_rate: f64,
    pub rag_rate: f64,
    pub blocked: u64,
    pub unsafe_hits: u64,
    /// Unsafe hits as a percentage of all cache hits.
    pub unsafe_pct: f64,
    pub delta_total: u64,
    pub mean_cost: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Summary {
    pub fn of(sessions: &[SessionMetrics]) -> Summary {
        let sum = |f: fn(&SessionMetrics) -> u64| sessions.iter().map(f).sum::<u64>();
        let n = sessions.len() as u64;
        let turns = sum(|s| s.turns);
        let (t1, t2) = (sum(|s| s.tier1), sum(|s| s.tier2));
        let unsafe_hits = sum(|s| s.unsafe_hits);
        Summary {
            sessions: n,
            turns,
            mean_turns: ratio(turns, n),
            mean_k: ratio(sum(|s| s.k), n),
            mean_rag: ratio(sum(|s| s.rag_calls), n),
            tier1_rate: ratio(t1, turns),
            tier2_rate: ratio(t2, turns),
            hit_rate: ratio(t1 + t2, turns),
            rag_rate: ratio(sum(|s| s.rag_calls), turns),
            blocked: sum(|s| s.blocked),
            unsafe_hits,
            unsafe_pct: 100.0 * ratio(unsafe_hits, t1 + t2),
            delta_total: sum(|s| s.delta_total),
            mean_cost: ratio(sum(|s| s.cost_units), n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub session_id: String,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub method: Method,
    pub coverage: f64,
    pub templates: usize,
    pub summary: Summary,
    pub sessions: Vec<SessionMetrics>,
    #[serde(skip)]
    pub trace: Vec<TraceLine>,
}

/// Sessions by number of ontological classes: `K = 1, 2, 3, ≥ 4`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KHistogram {
    pub counts: [u64; 4],
    pub proportions: [f64; 4],
    pub mean_k: f64,
}

impl KHistogram {
    pub fn of(ks: impl IntoIterator<Item = usize>) -> KHistogram {
        let mut h = KHistogram::default();
        let (mut n, mut total) = (0u64, 0u64);
        for k in ks {
            n += 1;
            total += k as u64;
            if k >= 1 {
                h.counts[(k - 1).min(3)] += 1;
            }
        }
        for i in 0..4 {
            h.proportions[i] = ratio(h.counts[i], n);
        }
        h.mean_k = ratio(total, n);
        h
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub k_histogram: KHistogram,
    pub runs: Vec<RunMetrics>,
}

fn served_is_sound(s: &Session<'_>, v: NodeId, cert: Option<&capcert_core::Certificate>, w: Option<&Witness>) -> bool {
    match (cert, w) {
        (Some(c), Some(w)) => w.is_contained_in(s.closure()) && check_certificate(s.graph(), s.capabilities(), c, v),
        _ => false,
    }
}

fn run_cas(
    inputs: &Inputs<'_>,
    prepared: &[PreparedSession],
    tdb: &TemplateDb,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<(Vec<SessionMetrics>, Vec<TraceLine>)> {
    let pipeline = PipelineConfig {
        cost: cfg.cost,
        policy: cfg.policy,
        use_pab: method == Method::CasPab,
        use_cas: matches!(method, Method::CasOnly | Method::CasPab),
        top: cfg.top,
    };
    let mut cas = CasStore::new();
    let mut out = Vec::with_capacity(prepared.len());
    let mut trace = Vec::new();
    for ps in prepared {
        if cfg.cas_scope == CasScope::PerSession {
            cas = CasStore::new();
        }
        let mut s = Session::new(inputs.graph, inputs.forbidden.clone(), pipeline)?.with_tenant(ps.tenant.clone());
        let mut unsafe_hits = 0;
        for input in &ps.inputs {
            let o = s.process_turn(input, &mut cas, tdb)?;
            if matches!(o.served_by, Some(ServedBy::Tier1Pab | ServedBy::Tier2Cas))
                && !served_is_sound(&s, o.capability, o.cert.as_ref(), o.witness.as_ref())
            {
                unsafe_hits += 1;
            }
            if cfg.trace {
                trace.push(TraceLine {
                    session_id: ps.session_id.clone(),
                    record: s.trace_record(&o),
                });
            }
        }
        let c = s.counters();
        out.push(SessionMetrics {
            session_id: ps.session_id.clone(),
            turns: ps.inputs.len() as u64,
            k: ps.k as u64,
            rag_calls: c.rag_calls,
            tier1: c.tier1_hits,
            tier2: c.tier2_hits,
            blocked: c.blocked,
            unsafe_hits,
            cost_units: c.cost_units,
            delta_total: c.delta_total,
        });
    }
    Ok((out, trace))
}

/// Similarity-only cache keyed on the turn text. Hits are audited against
/// the origin witness but served regardless.
fn run_cosine(
    inputs: &Inputs<'_>,
    prepared: &[PreparedSession],
    cfg: &ExperimentConfig,
) -> Result<(Vec<SessionMetrics>, Vec<TraceLine>)> {
    let pipeline = PipelineConfig {
        use_pab: false,
        use_cas: false,
        ..PipelineConfig::default()
    };
    let mut cache = SemanticCache::new(cfg.tau);
    let mut out = Vec::with_capacity(prepared.len());
    for ps in prepared {
        if cfg.cas_scope == CasScope::PerSession {
            cache = SemanticCache::new(cfg.tau);
        }
        let mut s = Session::new(inputs.graph, inputs.forbidden.clone(), pipeline)?;
        let mut m = SessionMetrics {
            session_id: ps.session_id.clone(),
            turns: ps.inputs.len() as u64,
            k: ps.k as u64,
            ..SessionMetrics::default()
        };
        for input in &ps.inputs {
            m.delta_total += s.advance(&input.phi)?.len() as u64;
            if s.gate() == Safety::Blocked {
                m.blocked += 1;
                continue;
            }
            if let Some(hit) = cache.lookup(&embed(&input.query_text)) {
                m.tier2 += 1;
                m.cost_units += cfg.cost.tier2_units;
                m.unsafe_hits += !hit.entry.origin_witness.is_contained_in(s.closure()) as u64;
                continue;
            }
            m.rag_calls += 1;
            m.cost_units += cfg.cost.rag_units;
            let witness = if s.closure().contains(input.primary) {
                let main = closure_certificate(inputs.graph, s.capabilities())?;
                certify(inputs.graph, s.capabilities(), &main, input.primary)?.0
            } else {
                Witness::new(s.capabilities().clone())
            };
            cache.put(&input.query_text, ps.tenant.clone(), witness);
        }
        out.push(m);
    }
    Ok((out, Vec::new()))
}

/// Replays every session for each configured method and coverage level.
pub fn run_simulation(inputs: &Inputs<'_>, cfg: &ExperimentConfig) -> Result<Metrics> {
    cfg.validate()?;
    inputs.corpus.validate()?;
    let prepared = prepare(inputs.graph, inputs.corpus)?;
    let jobs: Vec<(Method, f64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.coverage.iter().map(move |&p| (m, p)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(method, p)| {
            let tdb = inputs.templates.with_coverage(p, cfg.seed)?;
            let (sessions, trace) = match method {
                Method::Cosine => run_cosine(inputs, &prepared, cfg)?,
                _ => run_cas(inputs, &prepared, &tdb, method, cfg)?,
            };
            Ok(RunMetrics {
                method,
                coverage: p,
                templates: tdb.len(),
                summary: Summary::of(&sessions),
                sessions,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics {
        seed: cfg.seed,
        k_histogram: KHistogram::of(prepared.iter().map(|p| p.k)),
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmissionRow {
    pub r: f64,
    pub sessions: u64,
    /// Sessions where some turn passes the injected gate but not the oracle gate.
    pub safety_violation_rate: f64,
    /// Sessions where some turn fails the injected gate but passes the oracle gate.
    pub false_rejection_rate: f64,
    /// Oracle PAB keys also present in the injected PAB.
    pub pab_recall: f64,
    /// `1 − pab_recall`; zero when nothing was lost.
    pub pab_recall_loss: f64,
    /// Multi-slot turns whose closure certificate fires an arc early.
    pub and_violation_rate: f64,
    pub mean_witness_size: f64,
    /// Mean of `(1 − r)^|W|` over oracle PAB entries.
    pub predicted_recall: f64,
}

struct SessionOutcome {
    gates: Vec<Safety>,
    keys: NodeSet,
    witness_sizes: Vec<usize>,
    multi_slot: u64,
    and_violations: u64,
}

fn replay_violates(graph: &Hypergraph, a: &NodeSet) -> Result<bool> {
    let cert = closure_certificate(graph, a)?;
    let mut held = cert.base.clone();
    for id in &cert.firings {
        let arc = graph
            .arc(*id)
            .ok_or_else(|| Error::Config(format!("certificate names missing arc {}", id.0)))?;
        if !arc.sources.is_subset(&held) {
            return Ok(true);
        }
        held.union_with(&arc.targets);
    }
    Ok(held != graph.closure(a)?)
}

fn omission_session(
    graph: &Hypergraph,
    forbidden: &ForbiddenSet,
    tdb: &TemplateDb,
    phis: &[(NodeSet, NodeId)],
) -> Result<SessionOutcome> {
    let config = PipelineConfig {
        use_cas: false,
        ..PipelineConfig::default()
    };
    let mut s = Session::new(graph, forbidden.clone(), config)?;
    let mut cas = CasStore::new();
    let mut out = SessionOutcome {
        gates: Vec::new(),
        keys: NodeSet::new(),
        witness_sizes: Vec::new(),
        multi_slot: 0,
        and_violations: 0,
    };
    for (phi, primary) in phis {
        let input = TurnInput {
            phi: phi.clone(),
            primary: *primary,
            facts: Default::default(),
            query_text: String::new(),
        };
        let o = s.process_turn(&input, &mut cas, tdb)?;
        out.gates.push(o.safety);
        if s.capabilities().len() >= 2 {
            out.multi_slot += 1;
            out.and_violations += replay_violates(graph, s.capabilities())? as u64;
        }
    }
    for (v, e) in s.pab() {
        out.keys.insert(*v);
        out.witness_sizes.push(e.witness.len());
    }
    Ok(out)
}

/// Compares gate verdicts and PAB contents under injected and oracle φ.
pub fn run_omission_experiment(inputs: &Inputs<'_>, r_levels: &[f64], seed: u64) -> Result<Vec<OmissionRow>> {
    let graph = inputs.graph;
    let phis = |c: &Corpus| -> Result<Vec<Vec<(NodeSet, NodeId)>>> {
        c.sessions
            .par_iter()
            .map(|s| {
                s.turns
                    .iter()
                    .map(|t| Ok((belief_phi(graph, t)?, graph.node(&t.primary_capability)?)))
                    .collect()
            })
            .collect()
    };
    let oracle_phis = phis(inputs.corpus)?;
    let oracle: Vec<SessionOutcome> = oracle_phis
        .par_iter()
        .map(|p| omission_session(graph, inputs.forbidden, inputs.templates, p))
        .collect::<Result<_>>()?;
    r_levels
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let injected_corpus = inject_slot_omission(inputs.corpus, r, seed.wrapping_add(i as u64))?;
            let injected: Vec<SessionOutcome> = phis(&injected_corpus)?
                .par_iter()
                .map(|p| omission_session(graph, inputs.forbidden, inputs.templates, p))
                .collect::<Result<_>>()?;
            let n = oracle.len() as u64;
            let (mut unsafe_pass, mut false_block, mut kept, mut total, mut multi, mut and_v) =
                (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
            let (mut w_sum, mut predicted) = (0.0f64, 0.0f64);
            for (o, j) in oracle.iter().zip(&injected) {
                let pairs = o.gates.iter().zip(&j.gates);
                unsafe_pass += pairs.clone().any(|(a, b)| *a == Safety::Blocked && *b == Safety::Pass) as u64;
                false_block += pairs.clone().any(|(a, b)| *a == Safety::Pass && *b == Safety::Blocked) as u64;
                kept += o.keys.intersection(&j.keys).len() as u64;
                total += o.keys.len() as u64;
                multi += j.multi_slot;
                and_v += j.and_violations;
                for &w in &o.witness_sizes {
                    w_sum += w as f64;
                    predicted += (1.0 - r).powi(w as i32);
                }
            }
            let recall = if total == 0 { 1.0 } else { kept as f64 / total as f64 };
            Ok(OmissionRow {
                r,
                sessions: n,
                safety_violation_rate: ratio(unsafe_pass, n),
                false_rejection_rate: ratio(false_block, n),
                pab_recall: recall,
                pab_recall_loss: 1.0 - recall,
                and_violation_rate: ratio(and_v, multi),
                mean_witness_size: if total == 0 { 0.0 } else { w_sum / total as f64 },
                predicted_recall: if total == 0 { 1.0 } else { predicted / total as f64 },
            })
        })
        .collect()
}

pub const DEFAULT_OMISSION_RATES: [f64; 5] = [0.0, 0.05, 0.10, 0.20, 0.30];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRateBound {
    pub n: usize,
    pub coverage: f64,
    pub delta_star: usize,
    /// Distinct observed query-class closures.
    pub classes: usize,
    /// Greedy `δ*/2`-cover size of the classes.
    pub cover: usize,
    /// Mean number of distinct missing nodes on the near-miss frontier.
    pub near_miss: f64,
    pub bound: f64,
    pub measured: f64,
    pub vacuous: bool,
    /// `measured ≥ bound`, checked only when the bound is not vacuous.
    pub holds: Option<bool>,
}

fn greedy_cover(classes: &[NodeSet], radius: usize) -> usize {
    let dist = |a: &NodeSet, b: &NodeSet| a.difference(b).len() + b.difference(a).len();
    let nbrs: Vec<Vec<usize>> = (0..classes.len())
        .into_par_iter()
        .map(|i| {
            (0..classes.len())
                .filter(|&j| dist(&classes[i], &classes[j]) <= radius)
                .collect()
        })
        .collect();
    let mut covered = vec![false; classes.len()];
    let mut left = classes.len();
    let mut centers = 0;
    while left > 0 {
        let best = (0..classes.len())
            .max_by_key(|&i| (nbrs[i].iter().filter(|&&j| !covered[j]).count(), std::cmp::Reverse(i)))
            .expect("classes is non-empty while some are uncovered");
        for &j in &nbrs[best] {
            if !covered[j] {
                covered[j] = true;
                left -= 1;
            }
        }
        centers += 1;
    }
    centers
}

/// Evaluates `p·(1 − N·e^{−δ*/(2n)})·(1 − |NMF|/n)` over the observed
/// per-turn query-class closures.
pub fn hit_rate_bound_report(
    graph: &Hypergraph,
    forbidden: &ForbiddenSet,
    classes: &[NodeSet],
    p: f64,
    delta_star: usize,
    measured: f64,
) -> Result<HitRateBound> {
    let distinct: Vec<NodeSet> = classes.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = graph.node_count().max(1);
    let cover = greedy_cover(&distinct, delta_star / 2);
    let mut near_miss = 0.0;
    for c in &distinct {
        let missing: BTreeSet<NodeId> = graph
            .near_miss_frontier(forbidden, c)?
            .iter()
            .map(|r| r.missing)
            .collect();
        near_miss += missing.len() as f64;
    }
    if !distinct.is_empty() {
        near_miss /= distinct.len() as f64;
    }
    let nf = n as f64;
    let bound = p * (1.0 - cover as f64 * (-(delta_star as f64) / (2.0 * nf)).exp()) * (1.0 - near_miss / nf);
    // p = 0 would otherwise print as -0 when the middle factor is negative.
    let bound = if p == 0.0 { 0.0 } else { bound };
    let vacuous = bound <= 0.0;
    Ok(HitRateBound {
        n,
        coverage: p,
        delta_star,
        classes: distinct.len(),
        cover,
        near_miss,
        bound,
        measured,
        vacuous,
        holds: (!vacuous).then_some(measured >= bound),
    })
}

/// Per-turn closures of every session.
pub fn observed_classes(graph: &Hypergraph, prepared: &[PreparedSession]) -> Result<Vec<NodeSet>> {
    let mut out = BTreeSet::new();
    for ps in prepared {
        for i in &ps.inputs {
            out.insert(graph.closure(&i.phi)?);
        }
    }
    Ok(out.into_iter().collect())
}

/// Minimal witness size of the first certifiable primary capability.
pub fn first_witness_size(graph: &Hypergraph, prepared: &[PreparedSession]) -> Result<Option<usize>> {
    for ps in prepared {
        let mut a = NodeSet::new();
        for i in &ps.inputs {
            a.union_with(&i.phi);
            if graph.closure(&a)?.contains(i.primary) {
                let main = closure_certificate(graph, &a)?;
                return Ok(Some(certify(graph, &a, &main, i.primary)?.0.len()));
            }
        }
    }
    Ok(None)
}

/// Size and shape of a hypergraph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub nodes: usize,
    pub forbidden: usize,
    pub arcs: usize,
    pub type_a: usize,
    pub type_b: usize,
    pub type_c: usize,
    pub manual: usize,
    pub conjunctive: usize,
    pub conjunctive_pct: f64,
    pub mean_fan_in: f64,
    pub max_fan_in: usize,
    pub min_rate: f64,
}

impl ExtractionSummary {
    pub fn of(graph: &Hypergraph, forbidden: &ForbiddenSet) -> Self {
        let arcs = graph.arcs();
        let count = |k: ArcKind| arcs.iter().filter(|a| a.kind == k).count();
        let conjunctive = arcs.iter().filter(|a| a.is_conjunctive()).count();
        let fan_in: usize = arcs.iter().map(|a| a.fan_in()).sum();
        ExtractionSummary {
            nodes: graph.node_count(),
            forbidden: forbidden.members.len(),
            arcs: arcs.len(),
            type_a: count(ArcKind::TypeA),
            type_b: count(ArcKind::TypeB),
            type_c: count(ArcKind::TypeC),
            manual: count(ArcKind::Manual),
            conjunctive,
            conjunctive_pct: 100.0 * ratio(conjunctive as u64, arcs.len() as u64),
            mean_fan_in: ratio(fan_in as u64, arcs.len() as u64),
            max_fan_in: graph.max_fan_in(),
            min_rate: arcs.iter().map(|a| a.rate).fold(f64::INFINITY, f64::min).min(1.0),
        }
    }
}

/// Everything written by [`emit_report`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: Option<ExperimentConfig>,
    pub extraction: Option<ExtractionSummary>,
    pub metrics: Metrics,
    pub bounds: Vec<HitRateBound>,
    pub omission: Vec<OmissionRow>,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
}

/// Rendered report files as `(name, contents)`, in a fixed order.
pub fn render_report(report: &Report) -> Result<Vec<(&'static str, String)>> {
    let mut files = Vec::new();

    let t1: Vec<Vec<String>> = report
        .extraction
        .iter()
        .map(|e| {
            vec![
                e.nodes.to_string(),
                e.forbidden.to_string(),
                e.arcs.to_string(),
                e.type_a.to_string(),
                e.type_b.to_string(),
                e.type_c.to_string(),
                e.manual.to_string(),
                f6(e.conjunctive_pct),
                f6(e.mean_fan_in),
                e.max_fan_in.to_string(),
                f6(e.min_rate),
            ]
        })
        .collect();
    let h1 = [
        "nodes",
        "forbidden",
        "arcs",
        "type_a",
        "type_b",
        "type_c",
        "manual",
        "conjunctive_pct",
        "mean_fan_in",
        "max_fan_in",
        "min_rate",
    ];
    files.push(("extraction.csv", csv_text(&h1, &t1)?));

    let k = &report.metrics.k_histogram;
    let t2: Vec<Vec<String>> = ["1", "2", "3", ">=4"]
        .iter()
        .enumerate()
        .map(|(i, label)| vec![label.to_string(), k.counts[i].to_string(), f6(k.proportions[i])])
        .collect();
    files.push(("k_distribution.csv", csv_text(&["k", "sessions", "proportion"], &t2)?));

    let runs = &report.metrics.runs;
    let top = runs.iter().map(|r| r.coverage).fold(f64::NEG_INFINITY, f64::max);
    let row = |r: &RunMetrics| {
        let s = &r.summary;
        vec![
            r.method.as_str().to_string(),
            f6(r.coverage),
            f6(s.mean_turns),
            f6(s.mean_k),
            f6(s.mean_rag),
            f6(s.tier1_rate),
            f6(s.tier2_rate),
            f6(s.hit_rate),
            s.blocked.to_string(),
            s.unsafe_hits.to_string(),
            f6(s.unsafe_pct),
            f6(s.mean_cost),
        ]
    };
    let t3: Vec<Vec<String>> = runs.iter().filter(|r| r.coverage == top).map(row).collect();
    let h3 = [
        "method",
        "coverage",
        "mean_turns",
        "mean_k",
        "mean_rag",
        "tier1_rate",
        "tier2_rate",
        "hit_rate",
        "blocked",
        "unsafe_hits",
        "unsafe_pct",
        "mean_cost",
    ];
    files.push(("methods.csv", csv_text(&h3, &t3)?));

    let sweep = if runs.iter().any(|r| r.method == Method::CasPab) {
        Method::CasPab
    } else {
        Method::CasOnly
    };
    let t4: Vec<Vec<String>> = runs
        .iter()
        .filter(|r| r.method == sweep)
        .map(|r| {
            let s = &r.summary;
            vec![
                r.method.as_str().to_string(),
                f6(r.coverage),
                r.templates.to_string(),
                f6(s.hit_rate),
                f6(s.tier1_rate),
                f6(s.tier2_rate),
                f6(s.rag_rate),
                f6(s.mean_rag),
            ]
        })
        .collect();
    let h4 = [
        "method",
        "coverage",
        "templates",
        "hit_rate",
        "tier1_rate",
        "tier2_rate",
        "rag_rate",
        "mean_rag",
    ];
    files.push(("coverage.csv", csv_text(&h4, &t4)?));

    if !report.omission.is_empty() {
        let rows: Vec<Vec<String>> = report
            .omission
            .iter()
            .map(|o| {
                vec![
                    f6(o.r),
                    o.sessions.to_string(),
                    f6(o.safety_violation_rate),
                    f6(o.false_rejection_rate),
                    f6(o.pab_recall),
                    f6(o.and_violation_rate),
                    f6(o.mean_witness_size),
                    f6(o.predicted_recall),
                ]
            })
            .collect();
        let h = [
            "r",
            "sessions",
            "safety_violation_rate",
            "false_rejection_rate",
            "pab_recall",
            "and_violation_rate",
            "mean_witness_size",
            "predicted_recall",
        ];
        files.push(("omission.csv", csv_text(&h, &rows)?));
    }
    files.push(("report.json", to_json_string(report)));
    Ok(files)
}

/// Writes the report files into `dir` and returns their paths.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (name, text) in render_report(report)? {
        let path = dir.join(name);
        write_text(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_metrics_give_header_only_tables() {
        let files = render_report(&Report::default()).unwrap();
        let get = |n: &str| files.iter().find(|(f, _)| *f == n).unwrap().1.clone();
        assert_eq!(get("methods.csv").lines().count(), 1);
        assert_eq!(get("coverage.csv").lines().count(), 1);
        assert_eq!(get("extraction.csv").lines().count(), 1);
        assert_eq!(get("k_distribution.csv").lines().count(), 5);
    }

    #[test]
    fn k_histogram_buckets() {
        let h = KHistogram::of([1, 1, 2, 3, 4, 7]);
        assert_eq!(h.counts, [2, 1, 1, 2]);
        assert!((h.mean_k - 18.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_cover_examples() {
        let s = |ids: &[u32]| ids.iter().map(|&i| NodeId(i)).collect::<NodeSet>();
        let classes = [s(&[0]), s(&[0, 1]), s(&[5, 6, 7])];
        assert_eq!(greedy_cover(&classes, 0), 3);
        assert_eq!(greedy_cover(&classes, 1), 2);
        assert_eq!(greedy_cover(&classes, 10), 1);
    }

    #[test]
    fn zero_coverage_bound_is_zero_and_vacuous() {
        let mut b = Hypergraph::builder();
        b.rule(["a", "b"], ["c"]);
        let h = b.build().unwrap();
        let classes = [h.set(["a", "b", "c"]).unwrap()];
        let r = hit_rate_bound_report(&h, &ForbiddenSet::empty(), &classes, 0.0, 2, 0.5).unwrap();
        assert_eq!(r.bound, 0.0);
        assert!(r.vacuous);
        assert_eq!(r.holds, None);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lru".parse::<Method>().is_err());
    }
}
