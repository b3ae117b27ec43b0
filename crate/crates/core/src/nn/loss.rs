/// Probabilities are clamped to this value before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-log10(p[label])` for a 0-based label.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).log10()
}

/// Mean cross-entropy over a `B x C` probability matrix.
pub fn mean_cross_entropy(probs: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let total: f64 = probs
        .chunks_exact(classes)
        .zip(labels)
        .map(|(p, &l)| cross_entropy(p, l))
        .sum();
    total / labels.len() as f64
}
