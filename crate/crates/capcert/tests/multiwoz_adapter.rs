use std::path::PathBuf;

use capcert::multiwoz::{load_multiwoz, OutcomeMapping};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/multiwoz")
}

#[test]
fn user_turns_become_cumulative_belief_turns() {
    let corpus = load_multiwoz(&fixture(), "train", &OutcomeMapping::default()).unwrap();
    assert_eq!(corpus.sessions.len(), 1);
    let s = &corpus.sessions[0];
    assert_eq!(s.session_id, "PMUL0001.json");
    // The greeting turn has no active domain and is dropped.
    let ids: Vec<u32> = s.turns.iter().map(|t| t.turn_id).collect();
    assert_eq!(ids, [2, 4, 6]);

    let find = &s.turns[0];
    assert_eq!(find.belief_state["hotel"]["area"], "north");
    assert_eq!(find.outcomes, ["hotel-candidates-retrieved"]);
    assert_eq!(find.primary_capability, "hotel-candidates-retrieved");
    assert_eq!(
        find.answer_text.as_deref(),
        Some("Acorn Guest House is a 4 star hotel in the north.")
    );

    let book = &s.turns[1];
    assert_eq!(book.belief_state["hotel"]["name"], "acorn_guest_house");
    assert_eq!(book.belief_state["hotel"]["bookstay"], "3");
    assert_eq!(book.outcomes, ["hotel-booked"]);
    assert_eq!(book.primary_capability, "hotel-booked");

    let switch = &s.turns[2];
    assert_eq!(switch.belief_state["restaurant"]["food"], "italian");
    assert_eq!(switch.belief_state["hotel"]["stars"], "4", "belief is cumulative");
    assert!(switch.outcomes.is_empty());
    assert_eq!(switch.primary_capability, "restaurant-candidates-retrieved");
    assert_eq!(switch.answer_text, None);
}

#[test]
fn single_file_and_custom_mapping() {
    let file = fixture().join("train/dialogues_001.json");
    let mapping = OutcomeMapping {
        candidates: Default::default(),
        booked: Default::default(),
    };
    let corpus = load_multiwoz(&file, "train", &mapping).unwrap();
    let s = &corpus.sessions[0];
    assert!(s.turns.iter().all(|t| t.outcomes.is_empty()));
    assert_eq!(s.turns[1].primary_capability, "hotel-candidates-retrieved");
}

#[test]
fn missing_split_is_an_io_error() {
    let err = load_multiwoz(&fixture(), "dev", &OutcomeMapping::default()).unwrap_err();
    assert!(matches!(err, capcert::Error::Io { .. }), "{err}");
}
