mod common;

use common::{random_playout, random_record, random_tokens};
use proptest::prelude::*;
use xqmimic_core::movespace::{self, ResolveError};
use xqmimic_core::notation::{parse_move_text, parse_record_file, serialize_record, serialize_record_file, GameResult};
use xqmimic_core::rules::{replay, replay_positions, RulesError};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn records_survive_serialization(seed in 0u64..10_000, plies in 0usize..120, red in 800i32..2400, black in 800i32..2400) {
        let mut r = random_record(seed, plies, red, black);
        r.result = [GameResult::RedWins, GameResult::BlackWins, GameResult::Draw, GameResult::Unknown][seed as usize % 4];
        let text = serialize_record(&r);
        let (file, diags) = parse_record_file(text.as_bytes()).unwrap();
        prop_assert!(diags.is_empty(), "{diags:?}");
        prop_assert_eq!(&file.records, &vec![r.clone()]);
        prop_assert_eq!(serialize_record(&file.records[0]), text);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_record_file(&bytes);
    }

    #[test]
    fn arbitrary_move_text_never_panics(text in "[A-Za-z0-9+=.\\-]{0,8}") {
        let _ = parse_move_text(&text, &xqmimic_core::rules::initial_state());
    }
}

#[test]
fn coordinate_and_wxf_text_agree_along_playouts() {
    for seed in 0..30u64 {
        let states = random_playout(seed, 80);
        for pair in states.windows(2) {
            let s = &pair[0];
            let action = s.legal_moves().into_iter().find(|&m| s.apply_move(m).unwrap() == pair[1]).unwrap();
            let coord = format!("{}{}", action.from.coord(), action.to.coord());
            let Ok(token) = movespace::tokenize(action, s) else { continue };
            assert_eq!(parse_move_text(&coord, s).unwrap(), token);
            assert_eq!(parse_move_text(&token.to_string(), s).unwrap(), token);
        }
    }
}

#[test]
fn illegal_tenth_move_drops_only_that_game() {
    let good_a = random_record(1, 30, 1500, 1500);
    let good_b = random_record(2, 30, 1500, 1500);
    let mut bad = random_record(3, 30, 1500, 1500);
    bad.source_id = "bad".into();
    let mut text = serialize_record_file(&[good_a.clone(), bad.clone(), good_b.clone()]);
    // swap ply 10 of the bad game for a move that cannot be played there
    let before = replay(&bad.moves[..9]).unwrap();
    let illegal = ["R1+9", "R9+9", "K5+1", "A4+5", "C2+9", "P1+1"]
        .into_iter()
        .find(|t| {
            let tok: xqmimic_core::MoveToken = t.parse().unwrap();
            movespace::resolve(&tok, &before).is_err() && tok.to_string() != bad.moves[9].to_string()
        })
        .unwrap();
    let game_text = serialize_record(&bad);
    let line = game_text.lines().find(|l| l.starts_with("5. ")).unwrap();
    let words: Vec<&str> = line.split_whitespace().collect();
    // ply 10 is Black's reply in move pair 5
    let replaced = format!("5. {} {}", words[1], illegal);
    text = text.replace(line, &replaced);
    let (file, diags) = parse_record_file(text.as_bytes()).unwrap();
    assert_eq!(file.records, vec![good_a, good_b]);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].ply, Some(10));
    assert_eq!(diags[0].id.as_deref(), Some("bad"));
}

#[test]
fn replay_reports_first_bad_index() {
    let mut moves = random_tokens(5, 6);
    moves[2] = "R1+9".parse().unwrap();
    match replay(&moves) {
        Err(RulesError::IllegalSequence { index, source }) => {
            assert_eq!(index, 2);
            assert!(matches!(source, ResolveError::Unresolvable(_) | ResolveError::LocallyIllegal(_)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn replay_positions_matches_playout() {
    for seed in 0..20u64 {
        let moves = random_tokens(seed, 100);
        let states = random_playout(seed, 100);
        let replayed = replay_positions(&moves).unwrap();
        assert_eq!(replayed.len(), moves.len() + 1);
        assert_eq!(replayed[..], states[..moves.len() + 1]);
    }
}
