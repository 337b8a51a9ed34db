//! Deterministic parallel Monte Carlo.
//!
//! Samples run on the rayon pool that is current when these functions are
//! called, but results are always gathered in sample order (or combined
//! batch-by-batch in batch order), so the numbers never depend on how many
//! threads did the work.

use rayon::prelude::*;

/// Runs `f(i)` for `i in 0..samples` and returns the results in index order.
pub fn map_samples<T, F>(samples: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..samples).into_par_iter().map(f).collect()
}

/// Samples are processed in fixed batches of `batch` consecutive indices;
/// each batch folds into a fresh accumulator and the accumulators are
/// combined in batch order.
pub fn batched<A, I, F, C>(samples: usize, batch: usize, init: I, f: F, mut combine: C) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(usize, &mut A) + Sync + Send,
    C: FnMut(&mut A, A),
{
    let batch = batch.max(1);
    let n_batches = samples.div_ceil(batch);
    let parts: Vec<A> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            for i in b * batch..((b + 1) * batch).min(samples) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        combine(&mut total, p);
    }
    total
}

/// Per-node running sums over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSums {
    pub count: Vec<usize>,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub failures: usize,
}

impl NodeSums {
    pub fn new(len: usize) -> Self {
        Self {
            count: vec![0; len],
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
            failures: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    /// Adds one sample's values, node by node.
    pub fn add(&mut self, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            self.count[k] += 1;
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
    }

    pub fn merge(&mut self, other: NodeSums) {
        for k in 0..self.sum.len() {
            self.count[k] += other.count[k];
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
        self.failures += other.failures;
    }

    pub fn mean(&self, k: usize) -> f64 {
        if self.count[k] == 0 {
            f64::NAN
        } else {
            self.sum[k] / self.count[k] as f64
        }
    }

    /// Unbiased sample variance at node `k`.
    pub fn variance(&self, k: usize) -> f64 {
        let n = self.count[k] as f64;
        if self.count[k] < 2 {
            return 0.0;
        }
        let mean = self.sum[k] / n;
        ((self.sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self, k: usize) -> f64 {
        if self.count[k] == 0 {
            return f64::NAN;
        }
        (self.variance(k) / self.count[k] as f64).sqrt()
    }
}

/// Fails with an experiment error when more than half the samples blew up.
pub fn check_failures(failures: usize, samples: usize) -> crate::Result<()> {
    if 2 * failures > samples {
        Err(crate::Error::Experiment { failures, samples })
    } else {
        Ok(())
    }
}
