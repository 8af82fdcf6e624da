//! Synthetic task-oriented dialogue world with planted statistics.
//!
//! The world has a few MultiWOZ-like domains. Each session visits `K`
//! distinct domains drawn from a K distribution. The first turn of a visit
//! reveals all of that domain's slots and asks for candidates. Follow-up
//! turns keep the belief state fixed and ask for distinct derived
//! capabilities, so every visit is exactly one ontological class.
//!
//! The reference hypergraph is value-level: every `d-s-v` node projects to
//! `d-s` through a unit arc, and the domain rules fire on slot-level nodes.
//! Witnesses therefore name concrete values. Two sessions share a Tier-2
//! entry only when they agree on the values that entry needed.

use std::collections::{BTreeMap, BTreeSet};

use capcert_core::dialogue::{BeliefState, Corpus, CorpusSource, DialogueSession, Turn};
use capcert_core::extraction::{booked_label, candidates_label, slot_label, CrossPattern, Ontology};
use capcert_core::store::TemplateDb;
use capcert_core::{ArcKind, ForbiddenSet, Hypergraph, NodeSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Answer text shared across tenants and classes when a duplicate is planted.
pub const GENERIC_ANSWER: &str = "Your request has been noted and the details are on file.";

struct DomainSpec {
    name: &'static str,
    query: &'static [&'static str],
    /// The slot that names the chosen entity.
    pick: &'static str,
    /// Slots a booking needs besides the retrieved candidates.
    booking: &'static [&'static str],
    info: &'static [&'static str],
}

const DOMAINS: &[DomainSpec] = &[
    DomainSpec {
        name: "hotel",
        query: &["area", "stars"],
        pick: "name",
        booking: &["name", "day", "people", "stay"],
        info: &["address", "phone", "postcode", "parking"],
    },
    DomainSpec {
        name: "restaurant",
        query: &["area", "food"],
        pick: "name",
        booking: &["name", "day", "people", "time"],
        info: &["address", "phone", "postcode"],
    },
    DomainSpec {
        name: "attraction",
        query: &["area", "type"],
        pick: "name",
        booking: &[],
        info: &["address", "phone", "entrance-fee"],
    },
    DomainSpec {
        name: "train",
        query: &["departure", "destination", "day"],
        pick: "trainid",
        booking: &["trainid", "people"],
        info: &["price", "duration", "arrival"],
    },
    DomainSpec {
        name: "taxi",
        query: &["departure", "destination"],
        pick: "leave",
        booking: &["leave"],
        info: &["car-type", "phone"],
    },
];

/// `(target, sources)` links between domains.
const CROSS_LINKS: &[(&str, &[&str])] = &[
    (
        "hotel-restaurant-nearby",
        &["hotel-candidates-retrieved", "restaurant-candidates-retrieved"],
    ),
    ("train-hotel-transfer", &["train-booked", "hotel-booked"]),
    (
        "taxi-attraction-pickup",
        &["taxi-candidates-retrieved", "attraction-candidates-retrieved"],
    ),
];

pub const DOMAIN_NAMES: &[&str] = &["hotel", "restaurant", "attraction", "train", "taxi"];

fn spec(name: &str) -> Option<&'static DomainSpec> {
    DOMAINS.iter().find(|d| d.name == name)
}

fn base_values(slot: &str) -> &'static [&'static str] {
    match slot {
        "area" => &["centre", "north", "south", "east", "west"],
        "stars" => &["0", "1", "2", "3", "4", "5"],
        "food" => &[
            "british", "chinese", "indian", "italian", "french", "thai", "korean", "spanish",
        ],
        "type" => &[
            "museum",
            "college",
            "park",
            "theatre",
            "cinema",
            "pool",
            "nightclub",
            "church",
        ],
        "departure" | "destination" => &[
            "cambridge",
            "london",
            "ely",
            "norwich",
            "stevenage",
            "peterborough",
            "leicester",
            "stansted",
        ],
        "day" => &[
            "monday",
            "tuesday",
            "wednesday",
            "thursday",
            "friday",
            "saturday",
            "sunday",
        ],
        "people" => &["1", "2", "3", "4", "5", "6", "7", "8"],
        "stay" => &["1", "2", "3", "4", "5"],
        "time" => &["11:30", "12:00", "13:15", "17:45", "18:30", "19:00", "20:15"],
        _ => &[],
    }
}

/// Shape of the reference world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub domains: Vec<String>,
    /// Values per query slot.
    pub query_pool: usize,
    /// Values of the entity-naming slot.
    pub pick_pool: usize,
    /// Query slots only, info derived from the candidates alone. Every
    /// derived answer then needs exactly the query values.
    pub independent: bool,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            domains: DOMAIN_NAMES.iter().map(|s| s.to_string()).collect(),
            query_pool: 20,
            pick_pool: 200,
            independent: false,
        }
    }
}

/// Reference hypergraph, forbidden set, ontology and full template set.
#[derive(Clone, Debug)]
pub struct World {
    pub params: WorldParams,
    pub graph: Hypergraph,
    pub forbidden: ForbiddenSet,
    pub ontology: Ontology,
    pub templates: TemplateDb,
    values: BTreeMap<String, Vec<String>>,
}

impl World {
    pub fn new(params: WorldParams) -> Result<World> {
        if params.domains.is_empty() || params.query_pool == 0 || params.pick_pool == 0 {
            return Err(Error::Config("world needs a domain and non-empty value pools".into()));
        }
        let mut seen = BTreeSet::new();
        for d in &params.domains {
            if spec(d).is_none() || !seen.insert(d.as_str()) {
                return Err(Error::Config(format!("unknown or repeated domain `{d}`")));
            }
        }
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut labels: Vec<String> = Vec::new();
        let mut arcs: Vec<(Vec<String>, String, ArcKind)> = Vec::new();
        let mut templates = TemplateDb::default();
        let mut ontology = Ontology::default();
        let mut forbidden = Vec::new();

        for name in &params.domains {
            let d = spec(name).expect("checked above");
            let slots = World::slots_of(d, params.independent);
            let cand = candidates_label(name);
            ontology.domains.insert(name.clone());
            for s in &slots {
                let pool = if d.query.contains(s) {
                    params.query_pool
                } else if *s == d.pick {
                    params.pick_pool
                } else {
                    base_values(s).len()
                };
                let vals = pool_values(name, s, pool);
                let slot = slot_label(name, s);
                labels.push(slot.clone());
                for v in &vals {
                    let node = format!("{slot}-{v}");
                    labels.push(node.clone());
                    arcs.push((vec![node], slot.clone(), ArcKind::Manual));
                }
                values.insert(slot, vals);
                ontology
                    .informable_slots
                    .entry(name.clone())
                    .or_default()
                    .insert(s.to_string());
            }
            labels.push(cand.clone());
            arcs.push((
                d.query.iter().map(|s| slot_label(name, s)).collect(),
                cand.clone(),
                ArcKind::TypeA,
            ));
            let placeholders = d
                .query
                .iter()
                .map(|s| format!("{{{}}}", slot_label(name, s)))
                .collect::<Vec<_>>();
            templates.insert(
                &cand,
                &format!("Found {name} options for {}.", placeholders.join(" and ")),
            );

            let pick = slot_label(name, d.pick);
            for info in d.info {
                let target = format!("{name}-{info}");
                let sources = if params.independent {
                    vec![cand.clone()]
                } else {
                    vec![cand.clone(), pick.clone()]
                };
                labels.push(target.clone());
                arcs.push((sources.clone(), target.clone(), ArcKind::TypeC));
                ontology.cross_domain_patterns.push(CrossPattern {
                    sources,
                    target: target.clone(),
                    rate: 1.0,
                });
                // Naming every value the answer depends on keeps unrelated answers textually apart.
                let about = if params.independent {
                    placeholders.join(" ")
                } else {
                    format!("{{{pick}}} {}", placeholders.join(" "))
                };
                templates.insert(&target, &format!("{name} {info}: {about}."));
            }
            if params.independent || d.booking.is_empty() {
                continue;
            }
            let booked = booked_label(name);
            let reference = format!("{name}-reference");
            let confirm = slot_label(name, "confirm");
            let unconfirmed = format!("{name}-booked-without-confirmation");
            let mut booking_sources = vec![cand.clone()];
            booking_sources.extend(d.booking.iter().map(|s| slot_label(name, s)));
            ontology.bookable.insert(name.clone());
            ontology
                .booking_required
                .insert(name.clone(), d.booking.iter().map(|s| s.to_string()).collect());
            labels.extend([
                booked.clone(),
                reference.clone(),
                confirm.clone(),
                format!("{confirm}-skip"),
                unconfirmed.clone(),
            ]);
            arcs.push((booking_sources, booked.clone(), ArcKind::TypeB));
            arcs.push((vec![booked.clone()], reference.clone(), ArcKind::TypeC));
            arcs.push((vec![format!("{confirm}-skip")], confirm.clone(), ArcKind::Manual));
            arcs.push((
                vec![booked.clone(), confirm.clone()],
                unconfirmed.clone(),
                ArcKind::TypeC,
            ));
            values.insert(confirm.clone(), vec!["skip".into()]);
            for (sources, target) in [
                (vec![booked.clone()], reference.clone()),
                (vec![booked.clone(), confirm], unconfirmed.clone()),
            ] {
                ontology.cross_domain_patterns.push(CrossPattern {
                    sources,
                    target,
                    rate: 1.0,
                });
            }
            forbidden.push(unconfirmed);
            let booking_slots = d
                .booking
                .iter()
                .map(|s| format!("{{{}}}", slot_label(name, s)))
                .collect::<Vec<_>>();
            templates.insert(
                &booked,
                &format!("Booked {name} {} as requested.", booking_slots.join(", ")),
            );
            templates.insert(
                &reference,
                &format!("Your {name} reference for {} is ready.", booking_slots.join(" ")),
            );
        }
        if !params.independent {
            for (target, sources) in CROSS_LINKS {
                let present: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
                if sources.iter().all(|s| present.contains(s)) {
                    let sources: Vec<String> = sources.iter().map(|s| s.to_string()).collect();
                    labels.push(target.to_string());
                    arcs.push((sources.clone(), target.to_string(), ArcKind::TypeC));
                    ontology.cross_domain_patterns.push(CrossPattern {
                        sources: sources.clone(),
                        target: target.to_string(),
                        rate: 1.0,
                    });
                    let query: Vec<String> = sources
                        .iter()
                        .flat_map(|c| {
                            let (d, booked) = match c.strip_suffix("-booked") {
                                Some(d) => (d, true),
                                None => (
                                    c.strip_suffix("-candidates-retrieved")
                                        .expect("link sources are domain nodes"),
                                    false,
                                ),
                            };
                            let d_spec = spec(d).expect("linked domains exist");
                            let extra = if booked { d_spec.booking } else { &[] };
                            d_spec
                                .query
                                .iter()
                                .chain(extra)
                                .map(move |q| format!("{{{}}}", slot_label(d, q)))
                        })
                        .collect();
                    templates.insert(
                        target,
                        &format!("Linked plans ({}): {}.", target.replace('-', " "), query.join(" ")),
                    );
                }
            }
        }

        let mut b = Hypergraph::builder();
        b.nodes(labels.iter().map(String::as_str));
        for (sources, target, kind) in &arcs {
            b.arc(sources.iter().map(String::as_str), [target.as_str()], 1.0, *kind);
        }
        let graph = b.build()?;
        let forbidden = graph.forbidden(forbidden.iter().map(String::as_str))?;
        ontology.validate()?;
        Ok(World {
            params,
            graph,
            forbidden,
            ontology,
            templates,
            values,
        })
    }

    fn slots_of(d: &DomainSpec, independent: bool) -> Vec<&'static str> {
        let mut slots: Vec<&'static str> = d.query.to_vec();
        if !independent {
            for s in std::iter::once(&d.pick).chain(d.booking) {
                if !slots.contains(s) {
                    slots.push(s);
                }
            }
        }
        slots
    }

    /// Values of a slot-level label, or empty when unknown.
    pub fn values(&self, slot: &str) -> &[String] {
        self.values.get(slot).map_or(&[], Vec::as_slice)
    }
}

fn pool_values(domain: &str, slot: &str, n: usize) -> Vec<String> {
    let base = base_values(slot);
    (0..n)
        .map(|i| match base.get(i) {
            Some(v) => v.to_string(),
            None if base.is_empty() => format!("{}{:02}", slot.replace('-', ""), i + 1),
            None => format!("{}{}", base[i % base.len()], i / base.len() + 1),
        })
        .map(|v| if slot == "name" { format!("{domain}{v}") } else { v })
        .collect()
}

/// True derivation rates for a domain's outcomes in the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRates {
    pub candidates: f64,
    pub booked: f64,
}

impl Default for PlantedRates {
    fn default() -> Self {
        PlantedRates {
            candidates: 1.0,
            booked: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainOrder {
    /// `K` drawn from the distribution, domains shuffled per session.
    #[default]
    Random,
    /// One domain per session, cycling through the domain list.
    RoundRobin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_sessions: usize,
    pub world: WorldParams,
    /// `P(K = 1), P(K = 2), ...`; must sum to 1.
    pub k_distribution: Vec<f64>,
    pub order: DomainOrder,
    /// Per-domain outcome rates; unlisted domains use 1.0.
    pub planted: BTreeMap<String, PlantedRates>,
    pub followups_min: usize,
    pub followups_max: usize,
    /// Chance that a visit reveals only a strict subset of its slots, emits
    /// no outcome and ends after one turn.
    pub partial_rate: f64,
    /// Chance that a bookable visit also carries the confirmation skip.
    pub confirm_skip_rate: f64,
    pub duplicate_answer_rate: f64,
    /// Sessions are assigned to `tenants` tenants round robin; 0 means none.
    pub tenants: usize,
}

/// Reference proportions of sessions with K = 1, 2, 3 and 4 ontological classes.
pub const REFERENCE_K: [f64; 4] = [0.612, 0.287, 0.081, 0.020];

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sessions: 1000,
            world: WorldParams::default(),
            k_distribution: REFERENCE_K.to_vec(),
            order: DomainOrder::Random,
            planted: BTreeMap::new(),
            followups_min: 2,
            followups_max: 8,
            partial_rate: 0.0,
            confirm_skip_rate: 0.0,
            duplicate_answer_rate: 0.02,
            tenants: 4,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let rates = self.planted.values().flat_map(|r| [r.candidates, r.booked]);
        let probs = [self.partial_rate, self.confirm_skip_rate, self.duplicate_answer_rate];
        if !rates.chain(probs).all(unit) {
            return Err(Error::Config("rates must lie in [0, 1]".into()));
        }
        if self.k_distribution.is_empty()
            || !self.k_distribution.iter().all(|&p| unit(p))
            || (self.k_distribution.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return Err(Error::Config(
                "K distribution must be probabilities summing to 1".into(),
            ));
        }
        if self.order == DomainOrder::Random && self.k_distribution.len() > self.world.domains.len() {
            return Err(Error::Config(format!(
                "K up to {} needs at least that many domains, got {}",
                self.k_distribution.len(),
                self.world.domains.len()
            )));
        }
        if self.followups_min > self.followups_max {
            return Err(Error::Config("followups_min exceeds followups_max".into()));
        }
        if let Some(d) = self.planted.keys().find(|d| !self.world.domains.contains(d)) {
            return Err(Error::Config(format!("planted rate for unknown domain `{d}`")));
        }
        Ok(())
    }

    fn rates(&self, domain: &str) -> PlantedRates {
        self.planted.get(domain).copied().unwrap_or_default()
    }
}

fn sample_k(rng: &mut ChaCha8Rng, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    dist.len()
}

struct SessionBuilder<'w> {
    world: &'w World,
    belief: BeliefState,
    turns: Vec<Turn>,
    asked: BTreeSet<String>,
    tenant: Option<String>,
}

impl SessionBuilder<'_> {
    fn facts(&self) -> BTreeMap<String, String> {
        capcert_core::dialogue::facts(&Turn {
            belief_state: self.belief.clone(),
            ..Turn::default()
        })
    }

    fn push(&mut self, rng: &mut ChaCha8Rng, primary: &str, outcomes: Vec<String>, duplicate_rate: f64) {
        let answer = if rng.gen_bool(duplicate_rate) {
            GENERIC_ANSWER.to_string()
        } else {
            match self.world.templates.render(primary, &self.facts()) {
                Ok(r) => r.text,
                Err(_) => format!("Answer about {}.", primary.replace('-', " ")),
            }
        };
        self.asked.insert(primary.to_string());
        self.turns.push(Turn {
            turn_id: self.turns.len() as u32,
            belief_state: self.belief.clone(),
            outcomes,
            primary_capability: primary.to_string(),
            tenant: self.tenant.clone(),
            answer_text: Some(answer),
        });
    }

    /// Derived, templated, not yet asked capabilities of the current belief.
    fn followup_pool(&self) -> Vec<String> {
        let g = &self.world.graph;
        let phi: NodeSet = self
            .belief
            .iter()
            .flat_map(|(d, slots)| slots.iter().map(move |(s, v)| format!("{d}-{s}-{v}")))
            .filter_map(|l| g.try_node(&l))
            .collect();
        let cl = g.closure(&phi).expect("nodes come from the graph");
        cl.difference(&phi)
            .iter()
            .filter(|v| !self.world.forbidden.members.contains(*v))
            .filter_map(|v| g.label(v))
            .filter(|l| self.world.templates.has(l) && !self.asked.contains(*l))
            .map(str::to_string)
            .collect()
    }
}

/// Deterministic synthetic corpus over `world`.
pub fn synth_corpus(world: &World, params: &SynthParams, seed: u64) -> Result<Corpus> {
    params.validate()?;
    if params.world != world.params {
        return Err(Error::Config("synthesis parameters name a different world".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains = &world.params.domains;
    let mut sessions = Vec::with_capacity(params.n_sessions);
    for i in 0..params.n_sessions {
        let visit: Vec<&String> = match params.order {
            DomainOrder::RoundRobin => vec![&domains[i % domains.len()]],
            DomainOrder::Random => {
                let k = sample_k(&mut rng, &params.k_distribution);
                domains.choose_multiple(&mut rng, k).collect()
            }
        };
        let mut sb = SessionBuilder {
            world,
            belief: BeliefState::new(),
            turns: Vec::new(),
            asked: BTreeSet::new(),
            tenant: (params.tenants > 0).then(|| format!("tenant-{}", i % params.tenants)),
        };
        for name in visit {
            let d = spec(name).expect("validated world");
            let mut slots = World::slots_of(d, world.params.independent);
            let partial = slots.len() > 1 && rng.gen_bool(params.partial_rate);
            if partial {
                slots.shuffle(&mut rng);
                let keep = rng.gen_range(1..slots.len());
                slots.truncate(keep);
                slots.sort();
            }
            let entry = sb.belief.entry(name.clone()).or_default();
            for s in &slots {
                let vals = world.values(&slot_label(name, s));
                entry.insert(
                    s.to_string(),
                    vals.choose(&mut rng).expect("pools are non-empty").clone(),
                );
            }
            let bookable = world.ontology.bookable.contains(name.as_str());
            if bookable && !partial && rng.gen_bool(params.confirm_skip_rate) {
                entry.insert("confirm".into(), "skip".into());
            }
            let cand = candidates_label(name);
            let rates = params.rates(name);
            let mut outcomes = Vec::new();
            if !partial {
                if rng.gen_bool(rates.candidates) {
                    outcomes.push(cand.clone());
                }
                if bookable && rng.gen_bool(rates.booked) {
                    outcomes.push(booked_label(name));
                }
            }
            sb.push(&mut rng, &cand, outcomes, params.duplicate_answer_rate);
            if partial {
                continue;
            }
            let n = rng.gen_range(params.followups_min..=params.followups_max);
            for _ in 0..n {
                let pool = sb.followup_pool();
                let Some(next) = pool.choose(&mut rng).cloned() else {
                    break;
                };
                sb.push(&mut rng, &next, Vec::new(), params.duplicate_answer_rate);
            }
        }
        sessions.push(DialogueSession {
            session_id: format!("synth-{i:05}"),
            turns: sb.turns,
        });
    }
    Ok(Corpus {
        sessions,
        ontology: None,
        source: CorpusSource::Synthetic {
            seed,
            params: serde_json::to_string(params).expect("params serialize"),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use capcert_core::dialogue::{ontological_class_count, phi};

    #[test]
    fn world_is_well_formed() {
        let w = World::new(WorldParams::default()).unwrap();
        let f = &w.forbidden;
        assert_eq!(f.members.len(), 4);
        for (label, _) in w.templates.iter() {
            let v = w.graph.node(label).unwrap();
            assert!(!f.members.contains(v));
        }
        let hotel = w
            .graph
            .set([
                "hotel-candidates-retrieved",
                "hotel-name",
                "hotel-day",
                "hotel-people",
                "hotel-stay",
            ])
            .unwrap();
        let booking = w.graph.arcs().iter().find(|a| a.sources == hotel).unwrap();
        assert_eq!(booking.kind, ArcKind::TypeB);
    }

    #[test]
    fn forced_k_one_gives_one_class_per_session() {
        let w = World::new(WorldParams::default()).unwrap();
        let p = SynthParams {
            n_sessions: 50,
            k_distribution: vec![1.0],
            ..SynthParams::default()
        };
        let c = synth_corpus(&w, &p, 3).unwrap();
        for s in &c.sessions {
            let phis: Vec<NodeSet> = s
                .turns
                .iter()
                .map(|t| {
                    phi(
                        &w.graph,
                        &Turn {
                            outcomes: vec![],
                            ..t.clone()
                        },
                    )
                    .unwrap()
                })
                .collect();
            assert_eq!(ontological_class_count(&w.graph, &phis).unwrap(), 1);
        }
    }

    #[test]
    fn empty_and_deterministic() {
        let w = World::new(WorldParams::default()).unwrap();
        let empty = SynthParams {
            n_sessions: 0,
            ..SynthParams::default()
        };
        assert!(synth_corpus(&w, &empty, 1).unwrap().sessions.is_empty());
        let p = SynthParams {
            n_sessions: 30,
            ..SynthParams::default()
        };
        assert_eq!(synth_corpus(&w, &p, 9).unwrap(), synth_corpus(&w, &p, 9).unwrap());
        assert_ne!(synth_corpus(&w, &p, 9).unwrap(), synth_corpus(&w, &p, 10).unwrap());
    }

    #[test]
    fn bad_rates_are_rejected() {
        let p = SynthParams {
            duplicate_answer_rate: 1.5,
            ..SynthParams::default()
        };
        assert!(p.validate().is_err());
    }
}
