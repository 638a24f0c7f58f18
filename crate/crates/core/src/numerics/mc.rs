//! Chunked Monte-Carlo driver.
//!
//! `n` samples are split into chunks of [`CHUNK_SIZE`]; chunk `c` draws
//! from seed `base_seed + c` and sample `j` of that chunk owns the counter
//! stream `j`. Chunk results are merged strictly in chunk order, so the
//! output does not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::CounterRng;

pub const CHUNK_SIZE: u64 = 1 << 16;

/// Sample count, base seed and parallelism for one estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McPlan {
    pub n: u64,
    pub seed: u64,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
}

impl McPlan {
    pub fn new(n: u64, seed: u64) -> Self {
        Self { n, seed, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn chunk_count(&self) -> u64 {
        self.n.div_ceil(CHUNK_SIZE)
    }

    pub fn chunk_seed(&self, chunk: u64) -> u64 {
        self.seed.wrapping_add(chunk)
    }
}

/// Running sums for a sample mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum / self.n as f64
    }

    /// Sample standard deviation (n - 1 denominator).
    pub fn std(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sumsq - n * mean * mean) / (n - 1.0);
        var.max(0.0).sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.std() / (self.n as f64).sqrt()
    }

    pub fn result(&self) -> MCResult {
        MCResult {
            mean: self.mean(),
            stderr: self.stderr(),
            n: self.n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Per-chunk state that can absorb a later chunk.
pub trait Accumulator: Send + Sized {
    fn merge(&mut self, later: Self);
}

impl Accumulator for Moments {
    fn merge(&mut self, later: Self) {
        Moments::merge(self, &later);
    }
}

impl<const K: usize> Accumulator for [Moments; K] {
    fn merge(&mut self, later: Self) {
        for (a, b) in self.iter_mut().zip(later.iter()) {
            a.merge(b);
        }
    }
}

fn in_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

impl Accumulator for Vec<Moments> {
    fn merge(&mut self, later: Self) {
        for (a, b) in self.iter_mut().zip(later.iter()) {
            a.merge(b);
        }
    }
}

/// Runs `step` once per sample index, chunk by chunk, and merges the chunk
/// accumulators in chunk order. `step` receives a fresh generator for the
/// sample's own counter stream.
pub fn run_chunked<A, E, I, S>(plan: &McPlan, init: I, step: S) -> Result<A, E>
where
    A: Accumulator,
    E: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, &mut CounterRng) -> Result<(), E> + Sync + Send,
{
    let chunks = plan.chunk_count();
    let run_chunk = |c: u64| -> Result<A, E> {
        let mut acc = init();
        let start = c * CHUNK_SIZE;
        let count = CHUNK_SIZE.min(plan.n - start);
        let seed = plan.chunk_seed(c);
        for j in 0..count {
            let mut rng = CounterRng::new(seed, j);
            step(&mut acc, &mut rng)?;
        }
        Ok(acc)
    };
    let parts: Vec<Result<A, E>> =
        in_pool(plan.workers, || (0..chunks).into_par_iter().map(run_chunk).collect());
    let mut total = init();
    for p in parts {
        total.merge(p?);
    }
    Ok(total)
}

/// Mean of `integrand` over points drawn by `source`.
pub fn mc_expectation<E, P, F>(source: P, integrand: F, plan: &McPlan) -> Result<MCResult, E>
where
    E: Send,
    P: Fn(&mut CounterRng) -> Result<Vec<f64>, E> + Sync + Send,
    F: Fn(&[f64]) -> Result<f64, E> + Sync + Send,
{
    let m = run_chunked(plan, Moments::default, |acc, rng| {
        let x = source(rng)?;
        acc.push(integrand(&x)?);
        Ok(())
    })?;
    Ok(m.result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn uniform_source(rng: &mut CounterRng) -> Result<Vec<f64>, Infallible> {
        Ok(vec![rng.uniform()])
    }

    #[test]
    fn constant_integrand() {
        let plan = McPlan::new(1000, 5);
        let r = mc_expectation(uniform_source, |_| Ok(2.5), &plan).unwrap();
        assert_eq!(r.mean, 2.5);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(r.n, 1000);
    }

    #[test]
    fn uniform_mean() {
        let plan = McPlan::new(200_000, 9);
        let r = mc_expectation(uniform_source, |x| Ok(x[0]), &plan).unwrap();
        assert!((r.mean - 0.5).abs() < 3.0 * r.stderr, "{r:?}");
        assert!((r.stderr - (1.0f64 / 12.0 / 200_000.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let n = 5 * CHUNK_SIZE + 123;
        let one = mc_expectation(uniform_source, |x| Ok(x[0].ln()), &McPlan::new(n, 77).with_workers(1))
            .unwrap();
        let eight =
            mc_expectation(uniform_source, |x| Ok(x[0].ln()), &McPlan::new(n, 77).with_workers(8))
                .unwrap();
        assert_eq!(one.mean.to_bits(), eight.mean.to_bits());
        assert_eq!(one.stderr.to_bits(), eight.stderr.to_bits());
    }

    #[test]
    fn chunk_seeds_are_offsets() {
        let plan = McPlan::new(3 * CHUNK_SIZE, 10);
        assert_eq!(plan.chunk_count(), 3);
        assert_eq!(plan.chunk_seed(2), 12);
        assert_eq!(McPlan::new(CHUNK_SIZE + 1, 0).chunk_count(), 2);
    }

    #[test]
    fn errors_propagate() {
        let plan = McPlan::new(10, 1);
        let r: Result<MCResult, &str> =
            mc_expectation(|_| Ok(vec![0.0]), |_| Err("boom"), &plan);
        assert_eq!(r.unwrap_err(), "boom");
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&v| whole.push(v));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..40].iter().for_each(|&v| a.push(v));
        xs[40..].iter().for_each(|&v| b.push(v));
        a.merge(&b);
        assert_eq!(a.n, whole.n);
        assert!((a.mean() - whole.mean()).abs() < 1e-15);
        assert!((a.std() - whole.std()).abs() < 1e-14);
    }
}
