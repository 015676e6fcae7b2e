//! Memorization probe on 50 random games. Structure overrides as
//! arguments, e.g. `fc_activation=ReLU num_fc=1`.

use std::time::Instant;
use xqmimic_core::dataset::{make_bin_samples, BinPolicy, EloBin};
use xqmimic_core::model::{train::train_with_progress, Model, ModelOptions, StructureConfig, TrainOptions};
use xqmimic_core::synthetic::{generate_games, UniformPolicy};
use xqmimic_core::MoveVocabulary;

fn main() {
    let vocab = MoveVocabulary::standard();
    let games = generate_games(&UniformPolicy, vocab, 50, 60, (1500, 1500), "u", 1);
    let mut config = StructureConfig::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').unwrap();
        config.set_field(k, v).unwrap();
    }
    let samples = make_bin_samples(&games, config.m, &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
    println!("{} samples", samples.len());
    let mut model = Model::<f32>::build_unchecked(config, ModelOptions::default(), vocab.len(), 1);
    let opts = TrainOptions { target_accuracy: Some(0.95), patience: 200, max_epochs: 200, ..Default::default() };
    let t = Instant::now();
    let h = train_with_progress(&mut model, &samples, &[], &opts, |r| {
        println!("epoch {} loss {:.4} acc {:?} {:.1}s", r.epoch, r.train_loss, r.train_accuracy, r.seconds)
    })
    .unwrap();
    println!("{:?} best {} in {:.1}s", h.stop, h.best_accuracy, t.elapsed().as_secs_f64());
}
