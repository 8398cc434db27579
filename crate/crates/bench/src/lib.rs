//! Seeded inputs shared by the benchmarks.

use std::collections::BTreeMap;

use ahclip_core::{Label, TimeInterval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random annotation segments inside a ten-minute video.
pub fn segments(n: usize, seed: u64) -> Vec<TimeInterval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let start = rng.random_range(0..600_000);
            let len = rng.random_range(100..20_000);
            TimeInterval::from_millis(start, start + len).expect("positive length")
        })
        .collect()
}

/// `n` clip labels with roughly `positive_rate` positives.
pub fn labels(n: usize, positive_rate: f64, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Label::from(rng.random_bool(positive_rate))).collect()
}

/// Model outputs in the shapes seen in practice, including malformed ones.
pub fn answers(n: usize, seed: u64) -> Vec<String> {
    const SHAPES: [&str; 6] = [
        "<answer>Yes</answer>",
        "<answer>No</answer>",
        "  <ANSWER> yes </ANSWER>",
        "The person hesitates. <answer>No</answer>",
        "maybe",
        "",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SHAPES[rng.random_range(0..SHAPES.len())].to_string())
        .collect()
}

/// Prediction and ground-truth maps over `n` videos.
pub fn prediction_tables(n: usize, seed: u64) -> (BTreeMap<String, Label>, BTreeMap<String, Label>) {
    let preds = labels(n, 0.5, seed);
    let truth = labels(n, 0.5, seed ^ 0x9e37_79b9);
    let key = |i: usize| format!("video{i:06}");
    (
        preds.into_iter().enumerate().map(|(i, l)| (key(i), l)).collect(),
        truth.into_iter().enumerate().map(|(i, l)| (key(i), l)).collect(),
    )
}
