//! Slot-level omission injection, modelling a state tracker that
//! consistently misses some slots of a session.

use std::collections::BTreeSet;

use capcert_core::dialogue::Corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Independently per `(session, domain-slot)`, with probability `r`, removes
/// that slot from every belief state of the session. The input is untouched.
///
/// Slots are visited in sorted order per session, so the result depends only
/// on the corpus, `r` and `seed`.
pub fn inject_slot_omission(corpus: &Corpus, r: f64, seed: u64) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("omission rate {r} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for session in &mut out.sessions {
        let slots: BTreeSet<(String, String)> = session
            .turns
            .iter()
            .flat_map(|t| {
                t.belief_state
                    .iter()
                    .flat_map(|(d, s)| s.keys().map(move |k| (d.clone(), k.clone())))
            })
            .collect();
        let dropped: Vec<(String, String)> = slots.into_iter().filter(|_| rng.gen_bool(r)).collect();
        for turn in &mut session.turns {
            for (d, s) in &dropped {
                if let Some(slots) = turn.belief_state.get_mut(d) {
                    slots.remove(s);
                    if slots.is_empty() {
                        turn.belief_state.remove(d);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `(dropped, total)` distinct `(session, domain-slot)` pairs.
pub fn omission_count(original: &Corpus, injected: &Corpus) -> (usize, usize) {
    let keys = |c: &Corpus, i: usize| -> BTreeSet<(String, String)> {
        c.sessions[i]
            .turns
            .iter()
            .flat_map(|t| {
                t.belief_state
                    .iter()
                    .flat_map(|(d, s)| s.keys().map(move |k| (d.clone(), k.clone())))
            })
            .collect()
    };
    (0..original.sessions.len()).fold((0, 0), |(dropped, total), i| {
        let before = keys(original, i);
        let after = keys(injected, i);
        (dropped + before.difference(&after).count(), total + before.len())
    })
}
