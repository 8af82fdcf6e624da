//! θ-sound hyperarc extraction from belief-state corpora.
//!
//! Candidate arcs come in three families. TYPE-A arcs derive
//! `d-candidates-retrieved` from subsets of a domain's informable slots.
//! TYPE-B arcs derive `d-booked` from the retrieved candidates plus the
//! booking slots. TYPE-C arcs are cross-domain patterns seeded by the
//! ontology. An arc is kept when its empirical rate reaches `theta`, and
//! [`minimal_cover`] then drops arcs dominated by a smaller precondition set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dialogue::Corpus;
use crate::error::{Error, Result};
use crate::hypergraph::{ArcId, ArcKind, Hyperarc, Hypergraph};
use crate::nodeset::NodeSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPattern {
    pub sources: Vec<String>,
    pub target: String,
    /// Rate used when the corpus has too few applicable sessions.
    pub rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub domains: BTreeSet<String>,
    pub informable_slots: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub booking_required: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub bookable: BTreeSet<String>,
    #[serde(default)]
    pub cross_domain_patterns: Vec<CrossPattern>,
}

pub fn slot_label(domain: &str, slot: &str) -> String {
    format!("{domain}-{slot}")
}

pub fn candidates_label(domain: &str) -> String {
    format!("{domain}-candidates-retrieved")
}

pub fn booked_label(domain: &str) -> String {
    format!("{domain}-booked")
}

impl Ontology {
    pub fn validate(&self) -> Result<()> {
        for (d, slots) in &self.booking_required {
            let informable = self.informable_slots.get(d);
            if let Some(s) = slots.iter().find(|s| !informable.is_some_and(|i| i.contains(*s))) {
                return Err(Error::InvalidParameter(format!(
                    "booking slot `{d}-{s}` is not informable"
                )));
            }
        }
        let known = |d: &String| self.domains.contains(d);
        if let Some(d) = self
            .informable_slots
            .keys()
            .chain(self.booking_required.keys())
            .chain(self.bookable.iter())
            .find(|d| !known(d))
        {
            return Err(Error::InvalidParameter(format!("unknown domain `{d}`")));
        }
        if let Some(p) = self
            .cross_domain_patterns
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.rate) || p.sources.is_empty())
        {
            return Err(Error::InvalidParameter(format!(
                "cross-domain pattern for `{}` needs sources and a rate in [0, 1]",
                p.target
            )));
        }
        Ok(())
    }

    fn booking_sources(&self, d: &str) -> Vec<String> {
        let mut s: Vec<String> = self
            .booking_required
            .get(d)
            .into_iter()
            .flatten()
            .map(|slot| slot_label(d, slot))
            .collect();
        s.push(candidates_label(d));
        s.sort();
        s
    }

    /// Every capability label extraction may emit, sorted.
    pub fn node_labels(&self) -> Vec<String> {
        let mut out = BTreeSet::new();
        for d in &self.domains {
            out.insert(candidates_label(d));
            for s in self.informable_slots.get(d).into_iter().flatten() {
                out.insert(slot_label(d, s));
            }
        }
        for d in &self.bookable {
            out.insert(booked_label(d));
        }
        for p in &self.cross_domain_patterns {
            out.extend(p.sources.iter().cloned());
            out.insert(p.target.clone());
        }
        out.into_iter().collect()
    }
}

/// Sorted precondition labels and the derived label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StatKey {
    pub target: String,
    pub sources: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatCount {
    pub kind: ArcKind,
    /// Sessions where the sources were held at some turn.
    pub n_s: u64,
    /// Of those, sessions where the target appeared within the horizon.
    pub n_sv: u64,
}

impl StatCount {
    pub fn rate(&self) -> f64 {
        if self.n_s == 0 {
            0.0
        } else {
            self.n_sv as f64 / self.n_s as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct StatRecord {
    sources: Vec<String>,
    target: String,
    kind: ArcKind,
    n_s: u64,
    n_sv: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct StatsFile {
    horizon: usize,
    max_subset: usize,
    entries: Vec<StatRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "StatsFile", from = "StatsFile")]
pub struct CooccurrenceStats {
    pub horizon: usize,
    pub max_subset: usize,
    pub entries: BTreeMap<StatKey, StatCount>,
}

impl From<CooccurrenceStats> for StatsFile {
    fn from(s: CooccurrenceStats) -> Self {
        StatsFile {
            horizon: s.horizon,
            max_subset: s.max_subset,
            entries: s
                .entries
                .into_iter()
                .map(|(k, c)| StatRecord {
                    sources: k.sources,
                    target: k.target,
                    kind: c.kind,
                    n_s: c.n_s,
                    n_sv: c.n_sv,
                })
                .collect(),
        }
    }
}

impl From<StatsFile> for CooccurrenceStats {
    fn from(f: StatsFile) -> Self {
        CooccurrenceStats {
            horizon: f.horizon,
            max_subset: f.max_subset,
            entries: f
                .entries
                .into_iter()
                .map(|r| {
                    (
                        StatKey {
                            target: r.target,
                            sources: r.sources,
                        },
                        StatCount {
                            kind: r.kind,
                            n_s: r.n_s,
                            n_sv: r.n_sv,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl CooccurrenceStats {
    pub fn get(&self, sources: &[String], target: &str) -> Option<&StatCount> {
        let mut sources = sources.to_vec();
        sources.sort();
        self.entries.get(&StatKey {
            target: target.into(),
            sources,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds another shard's counts; kinds keep the first seen.
    pub fn merge(&mut self, other: &CooccurrenceStats) {
        for (k, c) in &other.entries {
            let e = self.entries.entry(k.clone()).or_insert(StatCount {
                kind: c.kind,
                n_s: 0,
                n_sv: 0,
            });
            e.n_s += c.n_s;
            e.n_sv += c.n_sv;
        }
    }
}

/// Non-empty subsets of `items` with at most `max` members.
fn subsets_up_to(items: &[String], max: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let n = items.len();
    for mask in 1u32..(1u32 << n) {
        if mask.count_ones() as usize <= max {
            out.push(
                (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| items[i].clone())
                    .collect(),
            );
        }
    }
    out
}

/// Counts, per session, whether each candidate precondition set was held
/// and whether its target appeared by the end of the horizon window that
/// starts at the first turn holding it.
///
/// A turn holds the slot labels of its belief state plus every outcome seen
/// so far in the session.
pub fn collect_stats(
    corpus: &Corpus,
    ontology: &Ontology,
    horizon: usize,
    max_subset: usize,
) -> Result<CooccurrenceStats> {
    if horizon == 0 || max_subset == 0 {
        return Err(Error::InvalidParameter(
            "horizon and max_subset must be at least 1".into(),
        ));
    }
    if max_subset > 16 {
        return Err(Error::InvalidParameter(format!("max_subset {max_subset} exceeds 16")));
    }
    let mut stats = CooccurrenceStats {
        horizon,
        max_subset,
        entries: BTreeMap::new(),
    };
    for session in &corpus.sessions {
        let mut held: Vec<BTreeSet<String>> = Vec::with_capacity(session.turns.len());
        let mut first_seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut outcomes_so_far = BTreeSet::new();
        for (t, turn) in session.turns.iter().enumerate() {
            outcomes_so_far.extend(turn.outcomes.iter().cloned());
            let mut h: BTreeSet<String> = outcomes_so_far.clone();
            for (d, slots) in &turn.belief_state {
                h.extend(slots.keys().map(|s| slot_label(d, s)));
            }
            for tok in turn.outcomes.iter().chain(h.iter()) {
                first_seen.entry(tok.clone()).or_insert(t);
            }
            held.push(h);
        }

        let mut first: BTreeMap<StatKey, (ArcKind, usize)> = BTreeMap::new();
        let mut note = |key: StatKey, kind: ArcKind, t: usize| {
            first.entry(key).or_insert((kind, t));
        };
        for (t, h) in held.iter().enumerate() {
            for d in &ontology.domains {
                let present: Vec<String> = ontology
                    .informable_slots
                    .get(d)
                    .into_iter()
                    .flatten()
                    .map(|s| slot_label(d, s))
                    .filter(|l| h.contains(l))
                    .collect();
                for sources in subsets_up_to(&present, max_subset) {
                    note(
                        StatKey {
                            target: candidates_label(d),
                            sources,
                        },
                        ArcKind::TypeA,
                        t,
                    );
                }
                if ontology.bookable.contains(d) {
                    let sources = ontology.booking_sources(d);
                    if sources.iter().all(|s| h.contains(s)) {
                        note(
                            StatKey {
                                target: booked_label(d),
                                sources,
                            },
                            ArcKind::TypeB,
                            t,
                        );
                    }
                }
            }
            for p in &ontology.cross_domain_patterns {
                if p.sources.iter().all(|s| h.contains(s)) {
                    let mut sources = p.sources.clone();
                    sources.sort();
                    note(
                        StatKey {
                            target: p.target.clone(),
                            sources,
                        },
                        ArcKind::TypeC,
                        t,
                    );
                }
            }
        }
        for (key, (kind, t)) in first {
            let derived = first_seen.get(&key.target).is_some_and(|&u| u < t + horizon);
            let e = stats.entries.entry(key).or_insert(StatCount { kind, n_s: 0, n_sv: 0 });
            e.n_s += 1;
            e.n_sv += derived as u64;
        }
    }
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatedArc {
    pub sources: Vec<String>,
    pub target: String,
    pub rate: f64,
    pub kind: ArcKind,
    pub n_s: u64,
}

fn is_strict_subset(a: &[String], b: &[String]) -> bool {
    a.len() < b.len() && a.iter().all(|x| b.contains(x))
}

/// Drops `(S, v)` when some `(S', v)` with `S' ⊊ S` has a rate at least as
/// high. Output order: target, then `|S|`, then `S`.
///
/// Domination is transitive, so comparing against every input arc gives the
/// same result as iterating removals to a fixed point.
pub fn minimal_cover(arcs: &[RatedArc]) -> Vec<RatedArc> {
    let mut out: Vec<RatedArc> = arcs
        .iter()
        .filter(|a| {
            !arcs
                .iter()
                .any(|b| b.target == a.target && is_strict_subset(&b.sources, &a.sources) && b.rate >= a.rate)
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| (&a.target, a.sources.len(), &a.sources).cmp(&(&b.target, b.sources.len(), &b.sources)));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    pub theta: f64,
    /// Minimum applicable sessions before an empirical rate is trusted.
    pub n_floor: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            theta: 0.75,
            n_floor: 30,
        }
    }
}

/// Arcs passing the threshold, before the cover is applied.
pub fn candidate_arcs(stats: &CooccurrenceStats, ontology: &Ontology, params: &ExtractParams) -> Result<Vec<RatedArc>> {
    if !(params.theta > 0.0 && params.theta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta {} outside (0, 1]",
            params.theta
        )));
    }
    let mut arcs = Vec::new();
    for (key, c) in &stats.entries {
        if c.kind == ArcKind::TypeC || c.n_s < params.n_floor || c.rate() < params.theta {
            continue;
        }
        arcs.push(RatedArc {
            sources: key.sources.clone(),
            target: key.target.clone(),
            rate: c.rate(),
            kind: c.kind,
            n_s: c.n_s,
        });
    }
    for p in &ontology.cross_domain_patterns {
        let observed = stats.get(&p.sources, &p.target).filter(|c| c.n_s >= params.n_floor);
        let (rate, n_s) = observed.map_or((p.rate, 0), |c| (c.rate(), c.n_s));
        if rate >= params.theta {
            let mut sources = p.sources.clone();
            sources.sort();
            arcs.push(RatedArc {
                sources,
                target: p.target.clone(),
                rate,
                kind: ArcKind::TypeC,
                n_s,
            });
        }
    }
    Ok(arcs)
}

pub fn extract_hypergraph(
    stats: &CooccurrenceStats,
    ontology: &Ontology,
    params: &ExtractParams,
) -> Result<Hypergraph> {
    ontology.validate()?;
    let arcs = minimal_cover(&candidate_arcs(stats, ontology, params)?);
    let labels = ontology.node_labels();
    let index: BTreeMap<&str, u32> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
    let to_set = |items: &[String]| -> Result<NodeSet> {
        items
            .iter()
            .map(|l| {
                index
                    .get(l.as_str())
                    .map(|&i| crate::NodeId(i))
                    .ok_or_else(|| Error::UnknownCapability(l.clone()))
            })
            .collect()
    };
    let mut hyperarcs = Vec::with_capacity(arcs.len());
    for a in &arcs {
        hyperarcs.push(Hyperarc::new(
            to_set(&a.sources)?,
            to_set(core::slice::from_ref(&a.target))?,
            a.rate,
            a.kind,
        ));
    }
    Hypergraph::from_parts(labels, hyperarcs)
}

/// `exp(−2·n_S·ε²)`.
pub fn hoeffding_bound(n_s: u64, epsilon: f64) -> f64 {
    libm::exp(-2.0 * n_s as f64 * epsilon * epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSoundness {
    pub arc: ArcId,
    pub sources: Vec<String>,
    pub target: String,
    pub kind: ArcKind,
    pub rate: f64,
    pub n_s: u64,
    pub bound: f64,
    /// `n_s` below the floor.
    pub flagged: bool,
}

pub const DEFAULT_SOUNDNESS_FLOOR: u64 = 100;

/// Per-arc Hoeffding diagnostics. Arcs with no counts (seeded patterns) get
/// `n_s = 0` and the trivial bound 1.
pub fn soundness_report(graph: &Hypergraph, stats: &CooccurrenceStats, epsilon: f64, floor: u64) -> Vec<ArcSoundness> {
    let mut out = Vec::new();
    for (i, arc) in graph.arcs().iter().enumerate() {
        let sources: Vec<String> = graph.labels_of(&arc.sources).into_iter().map(String::from).collect();
        for t in arc.targets.iter() {
            let target = String::from(graph.label(t).unwrap_or_default());
            let n_s = stats.get(&sources, &target).map_or(0, |c| c.n_s);
            out.push(ArcSoundness {
                arc: ArcId(i as u32),
                sources: sources.clone(),
                target,
                kind: arc.kind,
                rate: arc.rate,
                n_s,
                bound: hoeffding_bound(n_s, epsilon),
                flagged: n_s < floor,
            });
        }
    }
    out
}
