//! Exact simulation of piecewise-constant chains along a scenario and the
//! empirical estimators built on the simulated paths.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{for_each_piece, CmcModel, GeneratorPath};
use crate::space::ProductStateSpace;

/// One simulated trajectory: initial state and `(jump time, new state)` events.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplePath {
    pub initial: usize,
    pub events: Vec<(f64, usize)>,
}

impl SamplePath {
    /// State at `t` (paths are right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let n = self.events.partition_point(|&(u, _)| u <= t);
        if n == 0 {
            self.initial
        } else {
            self.events[n - 1].1
        }
    }

    /// Calls `f(state, lo, hi)` for every sojourn intersected with `[s, t]`.
    pub fn for_each_sojourn(&self, s: f64, t: f64, mut f: impl FnMut(usize, f64, f64)) {
        let mut state = self.initial;
        let mut lo: f64 = 0.0;
        for &(u, next) in &self.events {
            let (a, b) = (lo.max(s), u.min(t));
            if b > a {
                f(state, a, b);
            }
            state = next;
            lo = u;
        }
        let a = lo.max(s);
        if t > a {
            f(state, a, t);
        }
    }
}

/// Simulated paths of one model together with the master seed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathBundle {
    pub space: ProductStateSpace,
    pub horizon: f64,
    pub seed: u64,
    pub paths: Vec<SamplePath>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn dim(&self) -> usize {
        self.space.cardinality()
    }

    /// `C^{xy}(s, t)`: number of `x → y` jumps in `(s, t]`, summed over paths.
    pub fn transition_counts(&self, s: f64, t: f64) -> Matrix {
        let d = self.dim();
        let mut c = Matrix::zeros(d, d);
        for p in &self.paths {
            let mut from = p.initial;
            for &(u, to) in &p.events {
                if u > s && u <= t {
                    c[(from, to)] += 1.0;
                }
                from = to;
            }
        }
        c
    }

    /// `O^x(s, t)`: total time spent in each state during `[s, t]`, summed over paths.
    pub fn occupation(&self, s: f64, t: f64) -> Vec<f64> {
        let mut o = vec![0.0; self.dim()];
        for p in &self.paths {
            p.for_each_sojourn(s, t, |x, lo, hi| o[x] += hi - lo);
        }
        o
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { time: t, start: 0.0, end: self.horizon });
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, index: usize) -> Result<ChaCha8Rng> {
    let stream = u64::try_from(index).map_err(|_| Error::InvalidSeedStream(index))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(rng)
}

fn categorical(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = (usize, f64)> + Clone, total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

fn simulate_on(path: &GeneratorPath, initial: &[f64], seed: u64, index: usize) -> Result<SamplePath> {
    let mut rng = stream_rng(seed, index)?;
    let d = path.dim();
    let start = categorical(&mut rng, initial.iter().copied().enumerate(), initial.iter().sum());
    let mut state = start;
    let mut events = Vec::new();
    let grid = path.grid();
    for j in 0..path.n_cells() {
        let g = path.cell(j);
        let (lo, hi) = (grid[j], grid[j + 1]);
        let mut t = lo;
        loop {
            let rate = -g[(state, state)];
            if rate <= 0.0 {
                break;
            }
            let u: f64 = rng.random();
            t += -libm::log1p(-u) / rate;
            if t >= hi {
                break;
            }
            let row = g.row(state);
            let off = (0..d).filter(|&y| y != state).map(|y| (y, row[y]));
            let total: f64 = off.clone().map(|(_, w)| w.max(0.0)).sum();
            state = categorical(&mut rng, off, total);
            events.push((t, state));
        }
    }
    Ok(SamplePath { initial: start, events })
}

/// Path number `index` of the bundle with master `seed`: its own ChaCha
/// stream, so the result does not depend on how paths are scheduled.
pub fn simulate_path(model: &CmcModel, seed: u64, index: usize) -> Result<SamplePath> {
    simulate_on(model.generator(), model.initial().probs(), seed, index)
}

/// Sequential simulation of `n_paths` paths.
pub fn simulate(model: &CmcModel, n_paths: usize, seed: u64) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(Error::NoPaths);
    }
    let paths = (0..n_paths).map(|i| simulate_path(model, seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(bundle_from_paths(model, seed, paths))
}

pub fn bundle_from_paths(model: &CmcModel, seed: u64, paths: Vec<SamplePath>) -> PathBundle {
    PathBundle { space: model.space().clone(), horizon: model.horizon(), seed, paths }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
    pub reference: f64,
    pub z: f64,
}

impl Estimate {
    pub fn new(label: String, value: f64, std_error: f64, reference: f64) -> Self {
        let diff = value - reference;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self { label, value, std_error, reference, z }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z.abs() <= k
    }
}

/// Pearson statistic with its degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorReport {
    pub estimates: Vec<Estimate>,
    pub chi_square: Option<ChiSquare>,
}

impl EstimatorReport {
    pub fn max_abs_z(&self) -> f64 {
        self.estimates.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    pub fn find(&self, label: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.label == label)
    }
}

/// Relative frequencies of `X_t` with binomial standard errors.
pub fn empirical_distribution(bundle: &PathBundle, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    bundle.check_time(t)?;
    let n = bundle.n_paths() as f64;
    let mut counts = vec![0usize; bundle.dim()];
    for p in &bundle.paths {
        counts[p.state_at(t)] += 1;
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let se = probs.iter().map(|&p| libm::sqrt(p * (1.0 - p) / n)).collect();
    Ok((probs, se))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmpiricalTransition {
    pub matrix: Matrix,
    pub std_errors: Matrix,
    pub visits: Vec<usize>,
    /// Rows with no path in the starting state; those rows are the identity.
    pub unvisited: Vec<bool>,
}

/// Row `x` holds the relative frequencies of `X_t` among paths with `X_s = x`.
pub fn empirical_transition(bundle: &PathBundle, s: f64, t: f64) -> Result<EmpiricalTransition> {
    bundle.check_time(s)?;
    bundle.check_time(t)?;
    if s > t {
        return Err(Error::TimeOutOfRange { time: s, start: 0.0, end: t });
    }
    let d = bundle.dim();
    let mut counts = Matrix::zeros(d, d);
    let mut visits = vec![0usize; d];
    for p in &bundle.paths {
        let x = p.state_at(s);
        visits[x] += 1;
        counts[(x, p.state_at(t))] += 1.0;
    }
    let mut matrix = Matrix::zeros(d, d);
    let mut std_errors = Matrix::zeros(d, d);
    let mut unvisited = vec![false; d];
    for x in 0..d {
        if visits[x] == 0 {
            unvisited[x] = true;
            matrix[(x, x)] = 1.0;
            continue;
        }
        let n = visits[x] as f64;
        for y in 0..d {
            let p = counts[(x, y)] / n;
            matrix[(x, y)] = p;
            std_errors[(x, y)] = libm::sqrt(p * (1.0 - p) / n);
        }
    }
    Ok(EmpiricalTransition { matrix, std_errors, visits, unvisited })
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, libm::sqrt(var / nf))
}

/// Per-path `C^{xy}(0,T) − ∫_0^T 1{X_u = x} λ^{xy}_u du` for every ordered
/// pair `x ≠ y`, as `d × d` matrices of sums and sums of squares.
fn residual_moments(bundle: &PathBundle, model: &CmcModel) -> Result<(Matrix, Matrix)> {
    let path = model.generator();
    let d = bundle.dim();
    if path.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: path.dim() });
    }
    let mut sum = Matrix::zeros(d, d);
    let mut sum_sq = Matrix::zeros(d, d);
    let mut r = Matrix::zeros(d, d);
    let horizon = bundle.horizon;
    for p in &bundle.paths {
        r = r.scale(0.0);
        let mut from = p.initial;
        for &(_, to) in &p.events {
            r[(from, to)] += 1.0;
            from = to;
        }
        let mut failure = None;
        p.for_each_sojourn(0.0, horizon, |x, lo, hi| {
            if let Err(e) = for_each_piece(path.grid(), lo, hi, |j, a, b| {
                let row = path.cell(j).row(x);
                for y in (0..d).filter(|&y| y != x) {
                    r[(x, y)] -= row[y] * (b - a);
                }
            }) {
                failure = Some(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        for x in 0..d {
            for y in 0..d {
                let v = r[(x, y)];
                sum[(x, y)] += v;
                sum_sq[(x, y)] += v * v;
            }
        }
    }
    Ok((sum, sum_sq))
}

fn residual_estimate(space: &ProductStateSpace, x: usize, y: usize, sum: f64, sum_sq: f64, n: usize) -> Result<Estimate> {
    let (mean, se) = mean_and_se(sum, sum_sq, n);
    let label = format!("{:?}->{:?}", space.multi_index(x)?, space.multi_index(y)?);
    Ok(Estimate::new(label, mean, se, 0.0))
}

/// Mean compensated count for the pair `x → y` over `[0, T]`; zero in
/// expectation because the compensated counting process is a martingale.
pub fn compensator_residual(bundle: &PathBundle, model: &CmcModel, x: usize, y: usize) -> Result<EstimatorReport> {
    let d = bundle.dim();
    if x >= d || y >= d || x == y {
        return Err(Error::OutOfRange { index: vec![x, y], sizes: vec![d, d] });
    }
    let (sum, sum_sq) = residual_moments(bundle, model)?;
    let est = residual_estimate(&bundle.space, x, y, sum[(x, y)], sum_sq[(x, y)], bundle.n_paths())?;
    Ok(EstimatorReport { estimates: vec![est], chi_square: None })
}

/// Compensator residuals for every ordered pair of distinct states.
pub fn compensator_residuals(bundle: &PathBundle, model: &CmcModel) -> Result<EstimatorReport> {
    let (sum, sum_sq) = residual_moments(bundle, model)?;
    let d = bundle.dim();
    let mut estimates = Vec::with_capacity(d * (d - 1));
    for x in 0..d {
        for y in (0..d).filter(|&y| y != x) {
            estimates.push(residual_estimate(&bundle.space, x, y, sum[(x, y)], sum_sq[(x, y)], bundle.n_paths())?);
        }
    }
    Ok(EstimatorReport { estimates, chi_square: None })
}

/// How paths are grouped, beyond the current component state, when testing
/// whether extra information changes the law of `X^k_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum Stratification {
    /// By the full state `X_s`.
    FullState,
    /// By the component's own earlier state `X^k_{s−lag}`.
    OwnHistory { lag: f64 },
}

/// Compares the conditional law of `X^k_t` across buckets sharing the same
/// `X^k_s`.
///
/// Each bucket with at least `min_bucket` paths is compared against the
/// largest bucket of its group with a pooled two-proportion z-score per
/// outcome; the Pearson statistic of every group's contingency table is
/// summed into `chi_square`.
pub fn empirical_weak_markov_test(
    bundle: &PathBundle,
    k: usize,
    s: f64,
    t: f64,
    stratification: Stratification,
    min_bucket: usize,
) -> Result<EstimatorReport> {
    bundle.check_time(s)?;
    bundle.check_time(t)?;
    if s >= t || k >= bundle.space.n_components() {
        return Err(Error::TimeOutOfRange { time: s, start: 0.0, end: t });
    }
    if let Stratification::OwnHistory { lag } = stratification {
        bundle.check_time(s - lag)?;
    }
    let space = &bundle.space;
    let m = space.component_size(k);
    // (x^k_s, bucket key) -> outcome counts of x^k_t
    let mut table: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for p in &bundle.paths {
        let xs = p.state_at(s);
        let key = match stratification {
            Stratification::FullState => xs,
            Stratification::OwnHistory { lag } => space.component(p.state_at(s - lag), k),
        };
        let outcome = space.component(p.state_at(t), k);
        table.entry((space.component(xs, k), key)).or_insert_with(|| vec![0; m])[outcome] += 1;
    }

    let describe = |key: usize| -> Result<String> {
        Ok(match stratification {
            Stratification::FullState => format!("{:?}", space.multi_index(key)?),
            Stratification::OwnHistory { .. } => format!("{key}"),
        })
    };

    let mut estimates = Vec::new();
    let mut statistic = 0.0;
    let mut dof = 0;
    let mut compared = false;
    for xk in 0..m {
        let buckets: Vec<(usize, &Vec<usize>)> = table
            .iter()
            .filter(|((g, _), c)| *g == xk && c.iter().sum::<usize>() >= min_bucket.max(1))
            .map(|((_, key), c)| (*key, c))
            .collect();
        if buckets.len() < 2 {
            continue;
        }
        compared = true;
        let size = |c: &Vec<usize>| c.iter().sum::<usize>() as f64;
        let reference = buckets.iter().enumerate().max_by(|a, b| size(a.1 .1).total_cmp(&size(b.1 .1)).then(b.0.cmp(&a.0))).map(|(i, _)| i).unwrap_or(0);
        let (ref_key, ref_counts) = buckets[reference];
        let n_ref = size(ref_counts);
        for (i, &(key, counts)) in buckets.iter().enumerate() {
            if i == reference {
                continue;
            }
            let n_b = size(counts);
            for y in 0..m {
                let p_b = counts[y] as f64 / n_b;
                let p_ref = ref_counts[y] as f64 / n_ref;
                let pooled = (counts[y] + ref_counts[y]) as f64 / (n_b + n_ref);
                let se = libm::sqrt(pooled * (1.0 - pooled) * (1.0 / n_b + 1.0 / n_ref));
                let label = format!(
                    "X^{k}_s={xk}: {} vs {} -> X^{k}_t={y}",
                    describe(key)?,
                    describe(ref_key)?
                );
                estimates.push(Estimate::new(label, p_b - p_ref, se, 0.0));
            }
        }

        let total: f64 = buckets.iter().map(|(_, c)| size(c)).sum();
        let columns: Vec<usize> = (0..m).filter(|&y| buckets.iter().any(|(_, c)| c[y] > 0)).collect();
        if columns.len() >= 2 {
            for (_, c) in &buckets {
                let row = size(c);
                for &y in &columns {
                    let col: f64 = buckets.iter().map(|(_, c)| c[y] as f64).sum();
                    let expected = row * col / total;
                    let diff = c[y] as f64 - expected;
                    statistic += diff * diff / expected;
                }
            }
            dof += (buckets.len() - 1) * (columns.len() - 1);
        }
    }
    if !compared {
        return Err(Error::InsufficientSamples(format!(
            "no value of component {k} at s={s} has two buckets with at least {min_bucket} paths"
        )));
    }
    Ok(EstimatorReport { estimates, chi_square: Some(ChiSquare { statistic, dof }) })
}
