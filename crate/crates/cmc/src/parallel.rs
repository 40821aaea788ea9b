//! Parallel path generation. Every path draws from its own RNG stream, and
//! results are collected in path order, so the bundle is the same for any
//! number of workers.

use cmc_core::montecarlo::{bundle_from_paths, simulate_path, PathBundle};
use cmc_core::premium::{price_from_bundle, PoolModel, PremiumQuote};
use cmc_core::CmcModel;
use rayon::prelude::*;

pub const THREADS_ENV: &str = "CMC_THREADS";

/// Worker count: `CMC_THREADS` if set and positive, else the number of CPUs.
pub fn thread_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(available)
}

pub fn simulate_with_threads(model: &CmcModel, n_paths: usize, seed: u64, threads: usize) -> cmc_core::Result<PathBundle> {
    if n_paths == 0 {
        return Err(cmc_core::Error::NoPaths);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("failed to start worker threads");
    let paths = pool.install(|| {
        (0..n_paths).into_par_iter().map(|i| simulate_path(model, seed, i)).collect::<cmc_core::Result<Vec<_>>>()
    })?;
    Ok(bundle_from_paths(model, seed, paths))
}

pub fn simulate(model: &CmcModel, n_paths: usize, seed: u64) -> cmc_core::Result<PathBundle> {
    simulate_with_threads(model, n_paths, seed, thread_count())
}

pub fn price(pool: &PoolModel, n_paths: usize, seed: u64) -> cmc_core::Result<PremiumQuote> {
    let bundle = simulate(&pool.candidate.model, n_paths, seed)?;
    price_from_bundle(pool, &bundle)
}
