mod common;

use common::random_playout;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xqmimic_core::dataset::Memory;
use xqmimic_core::model::{
    self, checkpoint, cross_entropy, filter, train, Activation, CheckpointError, Mode, Model, ModelOptions, Policy,
    PredictionDistribution, RnnKind, StructureConfig, TrainOptions,
};
use xqmimic_core::dataset::TrainingSample;
use xqmimic_core::{MoveToken, MoveVocabulary};

const V: usize = 753;

fn narrow() -> ModelOptions {
    ModelOptions { embedding_dim: 16, one_hot: false, hidden_divisor: 32 }
}

/// Shape arithmetic written out independently of the network code.
fn expected_count(e: usize, h: usize, gates: usize, bn: bool, num_fc: usize, v: usize) -> usize {
    let embedding = (v + 1) * e;
    let rnn = gates * h * (e + h) + gates * h;
    let bn = if bn { 4 * h } else { 0 };
    let fc = num_fc * (h * h + h);
    let out = h * v + v;
    embedding + rnn + bn + fc + out
}

#[test]
fn default_parameter_count() {
    let m = Model::<f32>::build(StructureConfig::default(), ModelOptions::default(), V, 0).unwrap();
    assert_eq!(m.parameter_count(), expected_count(128, 512, 4, true, 2, V));
    assert_eq!(m.parameter_count(), 96_512 + 1_312_768 + 2_048 + 525_312 + 386_289);
    // running mean/var are stored but not trained
    assert_eq!(m.trainable_count(), m.parameter_count() - 1024);
}

#[test]
fn parameter_counts_across_structures() {
    for kind in RnnKind::ALL {
        for num_fc in [0, 1, 5] {
            for bn in [false, true] {
                let c = StructureConfig { rnn_kind: kind, num_fc, batch_norm: bn, rnn_hidden: 1024, ..Default::default() };
                let m = Model::<f32>::build(c, narrow(), V, 0).unwrap();
                assert_eq!(m.parameter_count(), expected_count(16, 32, kind.gates(), bn, num_fc, V));
                assert_eq!(m.params.out.w.shape(), [32, V]);
            }
        }
    }
}

#[test]
fn invalid_config_is_rejected() {
    let c = StructureConfig { num_fc: 4, ..Default::default() };
    assert!(matches!(Model::<f32>::build(c, narrow(), V, 0), Err(model::ModelError::InvalidConfig(_))));
}

#[test]
fn builds_are_deterministic() {
    let a = Model::<f32>::build(StructureConfig::default(), narrow(), V, 7).unwrap();
    let b = Model::<f32>::build(StructureConfig::default(), narrow(), V, 7).unwrap();
    let c = Model::<f32>::build(StructureConfig::default(), narrow(), V, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn distributions_are_normalized_and_deterministic() {
    for kind in RnnKind::ALL {
        for act in Activation::ALL {
            let c = StructureConfig { rnn_kind: kind, rnn_activation: act, fc_activation: act, ..Default::default() };
            let m = Model::<f32>::build(c, narrow(), V, 3).unwrap();
            for x in [&[][..], &[1, 2, 3][..], &[752, 0, 5, 9, 100][..]] {
                let d = m.forward(x, Mode::Infer).unwrap();
                assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(d.probs.iter().all(|&p| p >= 0.0));
                assert_eq!(d, m.forward(x, Mode::Infer).unwrap());
            }
        }
    }
}

#[test]
fn out_of_range_token() {
    let m = Model::<f32>::build(StructureConfig::default(), narrow(), V, 3).unwrap();
    assert_eq!(
        m.forward(&[753], Mode::Infer).unwrap_err(),
        model::ModelError::IndexOutOfRange { index: 753, size: V }
    );
}

#[test]
fn backward_kind_reads_reversed_history() {
    for (fwd, bwd) in [(RnnKind::Lstm, RnnKind::BackwardLstm), (RnnKind::Gru, RnnKind::BackwardGru)] {
        let a = Model::<f64>::build(StructureConfig { rnn_kind: fwd, ..Default::default() }, narrow(), V, 5).unwrap();
        let mut b = a.clone();
        b.config.rnn_kind = bwd;
        let x = [4u16, 77, 300, 12, 600];
        let rev: Vec<u16> = x.iter().rev().copied().collect();
        assert_eq!(b.log_probs(&[&x]).unwrap(), a.log_probs(&[&rev]).unwrap());
        assert_ne!(b.log_probs(&[&x]).unwrap(), a.log_probs(&[&x]).unwrap());
    }
}

#[test]
fn batching_matches_single_rows() {
    for kind in RnnKind::ALL {
        let c = StructureConfig { rnn_kind: kind, ..Default::default() };
        let m = Model::<f64>::build(c, narrow(), V, 9).unwrap();
        let xs: Vec<Vec<u16>> = vec![vec![], vec![3], vec![1, 2, 3, 4, 5], vec![700, 2]];
        let views: Vec<&[u16]> = xs.iter().map(Vec::as_slice).collect();
        let batch = m.log_probs(&views).unwrap();
        for (row, x) in views.iter().enumerate() {
            let single = m.log_probs(&[x]).unwrap();
            for (a, b) in batch.row(row).iter().zip(single.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fresh_models_are_near_uniform() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let m = Model::<f32>::build(StructureConfig::default(), ModelOptions::default(), V, seed).unwrap();
        let d = m.forward(&[(seed % 700) as u16, 3, 9], Mode::Infer).unwrap();
        worst = worst.max(d.probs.iter().cloned().fold(0.0, f64::max));
    }
    assert!(worst < 10.0 / V as f64, "max prob {worst}");
}

#[test]
fn filtered_argmax_is_legal_along_playouts() {
    let vocab = MoveVocabulary::standard();
    let m = Model::<f32>::build(StructureConfig::default(), narrow(), V, 1).unwrap();
    for seed in 0..20 {
        let states = random_playout(seed, 40);
        for s in &states {
            let mask = vocab.locally_legal_mask(s);
            if !mask.contains(&true) {
                continue;
            }
            let d = m.forward(&[(seed as u16) * 7], Mode::Infer).unwrap();
            let f = filter(&d, &mask).unwrap();
            assert!(mask[f.argmax()]);
            assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(f.probs.iter().zip(&mask).all(|(&p, &m)| m || p == 0.0));
            // idempotent on its own support
            let again = filter(&f, &mask).unwrap();
            assert!(again.probs.iter().zip(&f.probs).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }
}

#[test]
fn uniform_filtered_to_opening_moves() {
    let vocab = MoveVocabulary::standard();
    let d = PredictionDistribution { probs: vec![1.0 / V as f64; V], filtered: false };
    let f = filter(&d, &vocab.locally_legal_mask(&xqmimic_core::rules::initial_state())).unwrap();
    let legal: Vec<f64> = f.probs.iter().copied().filter(|&p| p > 0.0).collect();
    assert_eq!(legal.len(), 44);
    assert!(legal.iter().all(|&p| (p - 1.0 / 44.0).abs() < 1e-12));
}

#[test]
fn predict_policies() {
    let vocab = MoveVocabulary::standard();
    let m = Model::<f32>::build(StructureConfig::default(), narrow(), V, 2).unwrap();
    let start = xqmimic_core::rules::initial_state();
    let a = m.predict(&[], &start, vocab, Policy::Argmax).unwrap();
    assert_eq!(a, m.predict(&[], &start, vocab, Policy::Argmax).unwrap());
    let s1 = m.predict(&[], &start, vocab, Policy::Sample { seed: 5 }).unwrap();
    assert_eq!(s1, m.predict(&[], &start, vocab, Policy::Sample { seed: 5 }).unwrap());
    xqmimic_core::movespace::resolve(&s1, &start).unwrap();

    let mate = xqmimic_core::GameState::from_board_text(
        "...k....R\n........R\n.........\n.........\n.........\n\
         .........\n.........\n.........\n.........\n....K....",
        xqmimic_core::Side::Black,
    )
    .unwrap();
    assert_eq!(m.predict(&[], &mate, vocab, Policy::Argmax), Err(model::ModelError::NoLegalMove));
}

#[test]
fn sampling_matches_probabilities() {
    let d = PredictionDistribution { probs: vec![0.0, 0.7, 0.0, 0.3], filtered: true };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[d.sample(&mut rng)] += 1;
    }
    assert_eq!(counts[0] + counts[2], 0);
    assert!((counts[1] as f64 / 10_000.0 - 0.7).abs() < 0.02);
}

#[test]
fn loss_laws() {
    let mut perfect = ndarray::Array2::<f64>::from_elem((2, 4), f64::NEG_INFINITY);
    perfect[[0, 1]] = 0.0;
    perfect[[1, 3]] = 0.0;
    assert_eq!(cross_entropy(&perfect, &[1, 3]).unwrap(), 0.0);
    let uniform = ndarray::Array2::<f64>::from_elem((3, V), -(V as f64).ln());
    assert!((cross_entropy(&uniform, &[0, 5, 700]).unwrap() - (V as f64).ln()).abs() < 1e-12);

    let c = StructureConfig { fc_reg: 0.005, ..Default::default() };
    let m = Model::<f64>::build(c, narrow(), V, 4).unwrap();
    let mut doubled = m.clone();
    for d in &mut doubled.params.fc {
        d.w *= 2.0;
    }
    doubled.params.out.w *= 2.0;
    let r1 = m.params.penalized_sq_norm();
    let r2 = doubled.params.penalized_sq_norm();
    assert!((r2 - 4.0 * r1).abs() < 1e-9 * r2);
    let xs: [&[u16]; 2] = [&[1, 2], &[]];
    let ce = m.loss(&xs, &[3, 4], Mode::Infer).unwrap() - 0.005 * r1;
    assert!((ce - cross_entropy(&m.log_probs(&xs).unwrap(), &[3, 4]).unwrap()).abs() < 1e-12);
}

fn tiny_samples(n: usize) -> Vec<TrainingSample> {
    (0..n)
        .map(|i| TrainingSample {
            x: (0..(i % 6) as u16).map(|k| (k * 31 + i as u16) % 753).collect(),
            y: ((i * 17) % 40) as u16,
            mover_elo: 1500,
            game_id: format!("g{}", i / 10).into(),
            ply: (i % 6 + 1) as u32,
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_weights() {
    let vocab_size = V;
    let mut m = Model::<f32>::build(StructureConfig::default(), narrow(), vocab_size, 4).unwrap();
    let before = m.clone();
    let opts = TrainOptions { learning_rate: 0.0, max_epochs: 3, batch_size: 16, ..Default::default() };
    let h = train(&mut m, &tiny_samples(64), &tiny_samples(20), &opts).unwrap();
    let names = m.params.names();
    for ((n, a), b) in names.iter().zip(m.params.slices()).zip(before.params.slices()) {
        if !n.starts_with("bn.mean") && !n.starts_with("bn.var") {
            assert_eq!(a, b, "{n}");
        }
    }
    assert!(h.epochs.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn nominal_training_lowers_loss() {
    let c = StructureConfig { m: Memory::Steps(5), ..Default::default() };
    let mut m = Model::<f32>::build(c, narrow(), V, 4).unwrap();
    let opts = TrainOptions { max_epochs: 15, batch_size: 32, patience: 100, ..Default::default() };
    let h = train(&mut m, &tiny_samples(256), &tiny_samples(64), &opts).unwrap();
    assert!(h.epochs.iter().all(|e| e.train_loss.is_finite()));
    assert!(h.epochs.last().unwrap().train_loss < h.epochs[0].train_loss);
}

#[test]
fn checkpoint_round_trip_and_tampering() {
    let vocab = MoveVocabulary::standard();
    let c = StructureConfig { rnn_kind: RnnKind::BackwardGru, num_fc: 3, m: Memory::Unbounded, ..Default::default() };
    let m = Model::<f32>::build(c, narrow(), V, 6).unwrap();
    let mut meta = checkpoint::CheckpointMeta::new();
    meta.insert("bin".into(), "1200-1300".into());
    let bytes = checkpoint::save(&m, vocab, &meta);
    let (back, meta_back) = checkpoint::load(&bytes, vocab).unwrap();
    assert_eq!(back, m);
    assert_eq!(meta_back, meta);

    for pos in [0, 20, bytes.len() / 2, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert_eq!(checkpoint::load(&bad, vocab).unwrap_err(), CheckpointError::ChecksumMismatch);
    }

    let mut tokens: Vec<MoveToken> = vocab.tokens().to_vec();
    tokens.pop();
    let other = MoveVocabulary::from_tokens(tokens);
    assert_eq!(checkpoint::load(&bytes, &other).unwrap_err(), CheckpointError::VocabularyMismatch);
}
