//! Hutchinson trace estimation for implicitly applied symmetric operators.

use serde::Serialize;

use crate::rng::{self, stream_rng};

#[derive(Debug, Clone, Serialize)]
pub struct TraceEstimate {
    pub mean: f64,
    pub num_probes: usize,
    pub probe_values: Vec<f64>,
    pub seed: u64,
}

/// Rademacher probe for index `s` under master `seed`. Probe sets depend only
/// on (seed, s), never on evaluation order, so serial and parallel schedules
/// agree bit-for-bit.
pub fn rademacher_probe(seed: u64, s: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, rng::STREAM_PROBE_BASE + s as u64);
    let mut y = vec![0.0; dim];
    rng::fill_rademacher(&mut rng, &mut y);
    y
}

/// Mean of y^T op(y) over uniform +-1 probes. `op` must behave as a symmetric
/// operator; PSD inputs get the usual (1 +- eps) multiplicative guarantee at
/// Theta(log(1/delta)/eps^2) probes.
pub fn hutchinson_trace(
    op: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    num_probes: usize,
    seed: u64,
) -> TraceEstimate {
    assert!(num_probes >= 1, "need at least one probe");
    let mut probe_values = Vec::with_capacity(num_probes);
    for s in 0..num_probes {
        let y = rademacher_probe(seed, s, dim);
        let oy = op(&y);
        let q: f64 = y.iter().zip(&oy).map(|(a, b)| a * b).sum();
        probe_values.push(q);
    }
    // fixed-order arithmetic mean
    let mean = probe_values.iter().sum::<f64>() / num_probes as f64;
    TraceEstimate {
        mean,
        num_probes,
        probe_values,
        seed,
    }
}
