//! Best-effort adapter for the MultiWOZ 2.2 release layout.
//!
//! Expected layout under the dataset root: `<split>/dialogues_*.json` and an
//! optional `dialog_acts.json`. Each user turn becomes one [`Turn`] whose
//! belief state is the union of the frames' `slot_values`, whose outcomes
//! come from the next system turn's dialogue acts, and whose answer text is
//! that system utterance. User turns before the first active domain are
//! dropped.
//!
//! Act conventions differ between releases, so the act-to-outcome mapping is
//! configurable. Treat the output as approximate unless the mapping has been
//! checked against the release in use.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use capcert_core::dialogue::{BeliefState, Corpus, CorpusSource, DialogueSession, Turn};
use capcert_core::extraction::{booked_label, candidates_label};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::read_json;

/// Which act intents count as retrieval and as booking outcomes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMapping {
    /// `<Domain>-<Intent>` intents that mean candidates were retrieved.
    pub candidates: BTreeSet<String>,
    /// Intents that mean the active domain was booked. `Booking-*` acts
    /// carry no domain and are attributed to the turn's active domain.
    pub booked: BTreeSet<String>,
}

impl Default for OutcomeMapping {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        OutcomeMapping {
            candidates: set(&["Inform", "Recommend", "Select"]),
            booked: set(&["Book", "OfferBooked"]),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawDialogue {
    dialogue_id: String,
    turns: Vec<RawTurn>,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    turn_id: String,
    speaker: String,
    #[serde(default)]
    utterance: String,
    #[serde(default)]
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
struct RawFrame {
    service: String,
    #[serde(default)]
    state: Option<RawState>,
}

#[derive(Debug, Deserialize)]
struct RawState {
    #[serde(default)]
    active_intent: String,
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawActs {
    #[serde(default)]
    dialog_act: BTreeMap<String, Vec<Vec<String>>>,
}

type ActIndex = BTreeMap<String, BTreeMap<String, RawActs>>;

fn normalize_value(v: &str) -> String {
    v.trim().to_lowercase().split_whitespace().collect::<Vec<_>>().join("_")
}

fn belief_of(frames: &[RawFrame]) -> BeliefState {
    let mut b = BeliefState::new();
    for f in frames {
        let Some(state) = &f.state else { continue };
        for (key, values) in &state.slot_values {
            let Some(value) = values.first() else { continue };
            let slot = key.strip_prefix(&format!("{}-", f.service)).unwrap_or(key);
            b.entry(f.service.clone())
                .or_default()
                .insert(slot.to_string(), normalize_value(value));
        }
    }
    b
}

fn active_domain(frames: &[RawFrame]) -> Option<String> {
    frames
        .iter()
        .find(|f| {
            f.state
                .as_ref()
                .is_some_and(|s| !s.active_intent.is_empty() && s.active_intent != "NONE")
        })
        .map(|f| f.service.clone())
}

fn outcomes_of(acts: Option<&RawActs>, active: Option<&str>, mapping: &OutcomeMapping) -> Vec<String> {
    let mut out = BTreeSet::new();
    for act in acts.into_iter().flat_map(|a| a.dialog_act.keys()) {
        let Some((domain, intent)) = act.split_once('-') else {
            continue;
        };
        let domain = domain.to_lowercase();
        let target = if domain == "booking" {
            active.map(str::to_string)
        } else {
            Some(domain)
        };
        let Some(d) = target.filter(|d| d != "general") else {
            continue;
        };
        if mapping.booked.contains(intent) {
            out.insert(booked_label(&d));
        } else if mapping.candidates.contains(intent) {
            out.insert(candidates_label(&d));
        }
    }
    out.into_iter().collect()
}

fn convert(dialogue: RawDialogue, acts: &ActIndex, mapping: &OutcomeMapping) -> Result<DialogueSession> {
    let dialogue_acts = acts.get(&dialogue.dialogue_id);
    let mut turns = Vec::new();
    let mut belief = BeliefState::new();
    let mut domain: Option<String> = None;
    for (i, raw) in dialogue.turns.iter().enumerate() {
        if !raw.speaker.eq_ignore_ascii_case("USER") {
            continue;
        }
        let turn_id: u32 = raw.turn_id.parse().map_err(|_| {
            Error::Config(format!(
                "dialogue {}: turn id `{}` is not an integer",
                dialogue.dialogue_id, raw.turn_id
            ))
        })?;
        for (d, slots) in belief_of(&raw.frames) {
            belief.entry(d).or_default().extend(slots);
        }
        domain = active_domain(&raw.frames).or(domain);
        let system = dialogue
            .turns
            .get(i + 1)
            .filter(|t| t.speaker.eq_ignore_ascii_case("SYSTEM"));
        let system_acts = system.and_then(|s| dialogue_acts.and_then(|a| a.get(&s.turn_id)));
        let outcomes = outcomes_of(system_acts, domain.as_deref(), mapping);
        let primary = match &domain {
            Some(d) if outcomes.contains(&booked_label(d)) => booked_label(d),
            Some(d) => candidates_label(d),
            // Greetings before any domain is active carry no capability.
            None => continue,
        };
        turns.push(Turn {
            turn_id,
            belief_state: belief.clone(),
            outcomes,
            primary_capability: primary,
            tenant: None,
            answer_text: system.map(|s| s.utterance.clone()),
        });
    }
    Ok(DialogueSession {
        session_id: dialogue.dialogue_id,
        turns,
    })
}

fn dialogue_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("dialogues_") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads one split (`train`, `dev` or `test`) from a MultiWOZ 2.2 root, or a
/// single dialogues file when `root` is a file.
pub fn load_multiwoz(root: &Path, split: &str, mapping: &OutcomeMapping) -> Result<Corpus> {
    let (files, acts_path) = if root.is_file() {
        let parent = root.parent().unwrap_or(Path::new("."));
        (vec![root.to_path_buf()], parent.join("dialog_acts.json"))
    } else {
        (dialogue_files(&root.join(split))?, root.join("dialog_acts.json"))
    };
    let acts: ActIndex = if acts_path.is_file() {
        read_json(&acts_path)?
    } else {
        ActIndex::new()
    };
    let mut sessions = Vec::new();
    for f in files {
        let dialogues: Vec<RawDialogue> = read_json(&f)?;
        for d in dialogues {
            sessions.push(convert(d, &acts, mapping)?);
        }
    }
    let corpus = Corpus {
        sessions,
        ontology: None,
        source: CorpusSource::Multiwoz {
            split: split.to_string(),
        },
    };
    corpus.validate()?;
    Ok(corpus)
}
