//! Central finite-difference check of the analytic gradients in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelOptions, StructureConfig};
use super::network::{is_trainable, Mode, Model};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
}

/// Step for the central difference.
const STEP: f64 = 1e-5;
/// Denominator floor so entries whose gradient is ~0 are judged absolutely.
const FLOOR: f64 = 1e-5;

/// Builds an f64 model of `config` at the given options (use a large
/// `hidden_divisor` and small `vocab_size`), draws a random batch of
/// variable-length windows, and compares at least `samples` randomly chosen
/// trainable parameters. Dropout is off; batch-norm uses batch statistics.
pub fn gradient_check(
    config: StructureConfig,
    options: ModelOptions,
    vocab_size: usize,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f64>::build_unchecked(config, options, vocab_size, rng.random());
    // move batch-norm scale and biases off their initial values so their gradients are generic
    for v in model.params.bn_gamma.iter_mut().chain(model.params.bn_beta.iter_mut()) {
        *v += rng.random_range(-0.5..0.5);
    }
    for v in model.params.rnn_b.iter_mut() {
        *v += rng.random_range(-0.2..0.2);
    }

    let batch = 6;
    let max_len = match config.m {
        crate::dataset::Memory::Steps(m) => m.min(6),
        crate::dataset::Memory::Unbounded => 6,
    };
    let xs: Vec<Vec<u16>> = (0..batch)
        .map(|i| {
            let len = if i == 0 { 0 } else { rng.random_range(0..=max_len) };
            (0..len).map(|_| rng.random_range(0..vocab_size as u16)).collect()
        })
        .collect();
    let ys: Vec<u16> = (0..batch).map(|_| rng.random_range(0..vocab_size as u16)).collect();
    let views: Vec<&[u16]> = xs.iter().map(Vec::as_slice).collect();

    let (_, grads, _) = model.loss_and_gradient(&views, &ys, Mode::Train, None)?;
    let names = model.params.names();
    let sizes: Vec<usize> = model.params.slices().iter().map(|s| s.len()).collect();
    let candidates: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| is_trainable(n, &options))
        .flat_map(|(t, _)| (0..sizes[t]).map(move |i| (t, i)))
        .collect();
    let grad_slices = grads.slices();

    let mut picks: Vec<(usize, usize)> = Vec::new();
    // every tensor gets some coverage, then the rest at random
    for t in 0..names.len() {
        if is_trainable(&names[t], &options) && sizes[t] > 0 {
            for _ in 0..4 {
                picks.push((t, rng.random_range(0..sizes[t])));
            }
        }
    }
    while picks.len() < samples {
        picks.push(candidates[rng.random_range(0..candidates.len())]);
    }

    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0, worst: (String::new(), 0) };
    for (t, i) in picks {
        let original = model.params.slices()[t][i];
        model.params.slices_mut()[t][i] = original + STEP;
        let plus = model.loss(&views, &ys, Mode::Train)?;
        model.params.slices_mut()[t][i] = original - STEP;
        let minus = model.loss(&views, &ys, Mode::Train)?;
        model.params.slices_mut()[t][i] = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = grad_slices[t][i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        report.checked += 1;
        if err > report.max_relative_error || !err.is_finite() {
            report.max_relative_error = err;
            report.worst = (names[t].clone(), i);
        }
    }
    Ok(report)
}
