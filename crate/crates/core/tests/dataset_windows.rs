mod common;

use std::collections::BTreeSet;

use common::random_record;
use proptest::prelude::*;
use xqmimic_core::dataset::{
    build_split, make_bin_samples, make_samples, partition_by_elo, prepare_dataset, BinPolicy, DatasetDir, EloBin,
    Memory, PrepareOptions, SplitPart, SplitRatios,
};
use xqmimic_core::MoveVocabulary;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn windows_are_literal_prefix_slices(seed in 0u64..5000, plies in 1usize..90, m in 1usize..12) {
        let vocab = MoveVocabulary::standard();
        let r = random_record(seed, plies, 1500, 1500);
        let idx: Vec<u16> = r.moves.iter().map(|t| vocab.encode(t).unwrap() as u16).collect();
        let samples = make_samples(&r, Memory::Steps(m), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        prop_assert_eq!(samples.len(), idx.len());
        for (k, s) in samples.iter().enumerate() {
            // one-based i, window M[max(1, i-m) .. i-1]
            let i = k + 1;
            let lo = if i > m { i - m } else { 1 };
            let expect: Vec<u16> = (lo..i).map(|j| idx[j - 1]).collect();
            prop_assert_eq!(&s.x, &expect);
            prop_assert_eq!(s.y, idx[i - 1]);
            prop_assert_eq!(s.ply as usize, i);
        }
    }

    #[test]
    fn every_ply_lands_in_at_most_one_bin(seed in 0u64..5000, red in 900i32..2100, black in 900i32..2100) {
        let r = random_record(seed, 40, red, black);
        let bins = EloBin::standard_plan();
        let p = partition_by_elo(std::slice::from_ref(&r), &bins, BinPolicy::PerMover);
        let mut seen = BTreeSet::new();
        for (bin, views) in &p.bins {
            for v in views {
                for &ply in &v.plies {
                    prop_assert!(seen.insert(ply), "ply {} in two bins", ply);
                    let elo = if ply % 2 == 1 { red } else { black };
                    prop_assert!(bin.contains(elo));
                }
            }
        }
        // a ply is missing only when its mover is outside (1000, 2000]
        for ply in 1..=r.moves.len() {
            let elo = if ply % 2 == 1 { red } else { black };
            prop_assert_eq!(seen.contains(&ply), elo > 1000 && elo <= 2000);
        }
    }
}

#[test]
fn three_ply_game_under_memory_five() {
    let vocab = MoveVocabulary::standard();
    let r = random_record(11, 3, 1500, 1500);
    let s = make_samples(&r, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
    assert_eq!(s.iter().map(|s| s.x.len()).collect::<Vec<_>>(), [0, 1, 2]);
}

#[test]
fn splits_are_game_disjoint_and_proportional() {
    let vocab = MoveVocabulary::standard();
    let records: Vec<_> = (0..200).map(|i| random_record(i, 30, 1500, 1500)).collect();
    let samples = make_bin_samples(&records, Memory::Steps(8), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
    let split = build_split(samples.clone(), SplitRatios::default(), 3);
    let games = |part: SplitPart| split.part(part).iter().map(|s| s.game_id.clone()).collect::<BTreeSet<_>>();
    let (tr, va, te) = (games(SplitPart::Train), games(SplitPart::Validation), games(SplitPart::Test));
    assert_eq!(tr.len() + va.len() + te.len(), 200);
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    assert_eq!((tr.len(), va.len(), te.len()), (160, 20, 20));
    assert_eq!(split.train.len() + split.validation.len() + split.test.len(), samples.len());
    assert_eq!(split, build_split(samples.clone(), SplitRatios::default(), 3));
    assert_ne!(split.train, build_split(samples, SplitRatios::default(), 4).train);
}

#[test]
fn dataset_directory_round_trip() {
    let dir = std::env::temp_dir().join(format!("xqmimic-ds-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let vocab = MoveVocabulary::standard();
    let records: Vec<_> = (0..40).map(|i| random_record(i, 20, 1150 + (i as i32 % 3) * 100, 1450)).collect();
    let opts = PrepareOptions {
        bins: EloBin::standard_plan(),
        memory: Memory::Steps(5),
        ratios: SplitRatios::default(),
        seed: 1,
        policy: BinPolicy::PerMover,
    };
    let manifest = prepare_dataset(&dir, &records, vocab, &opts).unwrap();
    let loaded = DatasetDir::open(&dir).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.records, records);
    assert_eq!(loaded.memory().unwrap(), Memory::Steps(5));
    let bin = EloBin::new(1400, 1500).unwrap();
    let split = loaded.split(&dir, &bin).unwrap();
    let all = make_bin_samples(&records, Memory::Steps(5), &bin, BinPolicy::PerMover, vocab).unwrap();
    assert_eq!(split.train.len() + split.validation.len() + split.test.len(), all.len());
    // every Black ply is in (1400,1500]
    assert_eq!(all.len(), records.iter().map(|r| r.moves.len() / 2).sum::<usize>());
    std::fs::remove_dir_all(&dir).unwrap();
}
