//! Deterministic parallel trial engine.
//!
//! Every trial draws from its own ChaCha8 substream keyed by
//! `(seed, trial index)`. Per-trial records are reduced with Chan's
//! mean/variance merge over a binary tree whose shape depends only on the
//! trial count, so aggregates are bitwise identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Trials folded sequentially before entering the merge tree.
const LEAF: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub seed: u64,
    pub trials: u64,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl TrialPlan {
    pub fn new(seed: u64, trials: u64) -> Self {
        Self { seed, trials, workers: None }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

/// Random stream of trial `index` under master `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Running moments of a vector-valued record.
///
/// Components are split into consecutive groups of `group` entries; the
/// co-moments are tracked within each group (so `group == 1` keeps only
/// variances).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub count: u64,
    pub mean: Vec<f64>,
    group: usize,
    /// Per-group `group x group` co-moment blocks, row-major.
    cm: Vec<f64>,
}

impl Aggregate {
    fn empty(dims: usize, group: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dims], group, cm: vec![0.0; dims * group] }
    }

    fn push(&mut self, x: &[f64], delta: &mut [f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, d), &v) in self.mean.iter_mut().zip(delta.iter_mut()).zip(x) {
            *d = v - *m;
            *m += *d / n;
        }
        let g = self.group;
        for (b, block) in self.cm.chunks_mut(g * g).enumerate() {
            let base = b * g;
            for i in 0..g {
                for j in 0..g {
                    block[i * g + j] += delta[base + i] * (x[base + j] - self.mean[base + j]);
                }
            }
        }
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let (na, nb) = (a.count as f64, b.count as f64);
        let n = na + nb;
        let g = a.group;
        let mut out = Self::empty(a.mean.len(), g);
        out.count = a.count + b.count;
        let d: Vec<f64> = a.mean.iter().zip(&b.mean).map(|(x, y)| y - x).collect();
        for i in 0..a.mean.len() {
            out.mean[i] = a.mean[i] + d[i] * nb / n;
        }
        for blk in 0..a.mean.len() / g {
            let base = blk * g;
            for i in 0..g {
                for j in 0..g {
                    let idx = blk * g * g + i * g + j;
                    out.cm[idx] = a.cm[idx] + b.cm[idx] + d[base + i] * d[base + j] * na * nb / n;
                }
            }
        }
        out
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn denom(&self) -> f64 {
        (self.count.max(2) - 1) as f64
    }

    /// Unbiased sample variance per component.
    pub fn variance(&self) -> Vec<f64> {
        let g = self.group;
        (0..self.mean.len())
            .map(|i| self.cm[(i / g) * g * g + (i % g) * (g + 1)] / self.denom())
            .collect()
    }

    /// Standard error of each mean.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }

    /// Unbiased sample covariance of group `block`, row-major `group x group`.
    pub fn covariance(&self, block: usize) -> Vec<f64> {
        let g = self.group;
        self.cm[block * g * g..(block + 1) * g * g].iter().map(|c| c / self.denom()).collect()
    }
}

fn run_leaf<F>(plan: &TrialPlan, dims: usize, group: usize, first: u64, last: u64, kernel: &F) -> Result<Aggregate>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let mut agg = Aggregate::empty(dims, group);
    let mut record = vec![0.0; dims];
    let mut delta = vec![0.0; dims];
    for idx in first..last {
        let mut rng = trial_rng(plan.seed, idx);
        record.iter_mut().for_each(|v| *v = 0.0);
        kernel(idx, &mut rng, &mut record).map_err(|e| Error::Trial { trial: idx, source: Box::new(e) })?;
        agg.push(&record, &mut delta);
    }
    Ok(agg)
}

fn reduce<F>(plan: &TrialPlan, dims: usize, group: usize, lo: u64, hi: u64, kernel: &F) -> Result<Aggregate>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let blocks = hi - lo;
    if blocks == 1 {
        let first = lo * LEAF;
        let last = ((lo + 1) * LEAF).min(plan.trials);
        return run_leaf(plan, dims, group, first, last, kernel);
    }
    let mid = lo + blocks / 2;
    let (left, right) = rayon::join(
        || reduce(plan, dims, group, lo, mid, kernel),
        || reduce(plan, dims, group, mid, hi, kernel),
    );
    // the lowest failing trial wins regardless of schedule
    Ok(Aggregate::merge(left?, right?))
}

/// Runs `plan.trials` invocations of `kernel` and aggregates the
/// `dims`-component records it writes.
///
/// The kernel receives the trial index, that trial's random stream and a
/// zeroed record buffer.
pub fn run_trials<F>(plan: &TrialPlan, dims: usize, kernel: F) -> Result<Aggregate>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    run_trials_grouped(plan, dims, 1, kernel)
}

/// [`run_trials`] that also tracks covariances inside each consecutive
/// group of `group` components. `dims` must be a multiple of `group`.
pub fn run_trials_grouped<F>(plan: &TrialPlan, dims: usize, group: usize, kernel: F) -> Result<Aggregate>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if plan.trials == 0 {
        return invalid("trial plan needs at least one trial");
    }
    if group == 0 || dims % group != 0 {
        return invalid(format!("record of {dims} components cannot be split into groups of {group}"));
    }
    let blocks = plan.trials.div_ceil(LEAF);
    match plan.workers {
        None => reduce(plan, dims, group, 0, blocks, &kernel),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            pool.install(|| reduce(plan, dims, group, 0, blocks, &kernel))
        }
    }
}
