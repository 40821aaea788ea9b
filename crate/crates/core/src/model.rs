//! Factor scenarios, piecewise-constant intensity paths, initial laws and the
//! assembled [`CmcModel`].
//!
//! Conditioning on the reference information is realized scenario-wise: a
//! [`FactorScenario`] is one realized path of the driving factor, and the
//! intensity is constant on each cell `[t_j, t_{j+1})` of its grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::generator::{validate_generator, GeneratorMatrix};
use crate::matrix::Matrix;
use crate::space::ProductStateSpace;

/// `steps + 1` equally spaced points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
    if let Some(last) = g.last_mut() {
        *last = horizon;
    }
    g
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid(format!("need at least two points, got {}", grid.len())));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidGrid(format!("grid must start at 0, starts at {}", grid[0])));
    }
    for (j, w) in grid.windows(2).enumerate() {
        if !(w[1].is_finite() && w[1] > w[0]) {
            return Err(Error::InvalidGrid(format!("not strictly increasing at index {}", j + 1)));
        }
    }
    Ok(())
}

/// Locates the cell containing `t`; the right end point belongs to the last cell.
fn locate(grid: &[f64], t: f64) -> Result<usize> {
    let end = grid[grid.len() - 1];
    if !(t >= grid[0] && t <= end) {
        return Err(Error::TimeOutOfRange { time: t, start: grid[0], end });
    }
    let j = grid.partition_point(|&g| g <= t);
    Ok((j.max(1) - 1).min(grid.len() - 2))
}

/// One realized path of the reference factor on a time grid (years).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorScenario {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl FactorScenario {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: values.len() });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite factor value".into()));
        }
        Ok(Self { grid, values })
    }

    /// A scenario carrying no factor values, only the time grid.
    pub fn deterministic(grid: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![Vec::new(); n])
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::deterministic(uniform_grid(horizon, steps))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn n_cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn cell_index(&self, t: f64) -> Result<usize> {
        locate(&self.grid, t)
    }
}

/// A scalar rate process, piecewise constant on a grid (one value per cell).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatePath {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl RatePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() - 1 {
            return Err(Error::DimensionMismatch { expected: grid.len() - 1, actual: values.len() });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntries { row: j, col: 0 });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Vec<f64>, value: f64) -> Result<Self> {
        let n = grid.len().saturating_sub(1);
        Self::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[locate(&self.grid, t)?])
    }

    /// Exact integral over `[s, t]`.
    pub fn integral(&self, s: f64, t: f64) -> Result<f64> {
        let mut total = 0.0;
        for_each_piece(&self.grid, s, t, |j, lo, hi| total += self.values[j] * (hi - lo))?;
        Ok(total)
    }

    /// Whether every value is identically zero on `[s, t]`.
    pub fn vanishes_on(&self, s: f64, t: f64) -> Result<bool> {
        let mut all_zero = true;
        for_each_piece(&self.grid, s, t, |j, _, _| all_zero &= self.values[j] == 0.0)?;
        Ok(all_zero)
    }
}

/// Visits the cells intersecting `[s, t]` as `(cell, lo, hi)` with `lo < hi`.
pub(crate) fn for_each_piece(grid: &[f64], s: f64, t: f64, mut f: impl FnMut(usize, f64, f64)) -> Result<()> {
    let end = grid[grid.len() - 1];
    if !(s >= grid[0] && t <= end && s <= t) {
        return Err(Error::TimeOutOfRange { time: if s < grid[0] || s > t { s } else { t }, start: grid[0], end });
    }
    if s == t {
        return Ok(());
    }
    let mut j = locate(grid, s)?;
    let mut lo = s;
    while lo < t {
        let hi = f64::min(grid[j + 1], t);
        if hi > lo {
            f(j, lo, hi);
        }
        lo = hi;
        j += 1;
        if j >= grid.len() - 1 {
            break;
        }
    }
    Ok(())
}

/// The intensity Λ_t along a scenario, one generator per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPath {
    scenario: FactorScenario,
    cells: Vec<GeneratorMatrix>,
}

impl GeneratorPath {
    pub fn new(scenario: FactorScenario, cells: Vec<Matrix>, tol: f64) -> Result<Self> {
        if cells.len() != scenario.n_cells() {
            return Err(Error::DimensionMismatch { expected: scenario.n_cells(), actual: cells.len() });
        }
        let d = cells[0].rows();
        let cells = cells
            .into_iter()
            .map(|m| {
                if m.rows() != d {
                    return Err(Error::DimensionMismatch { expected: d, actual: m.rows() });
                }
                validate_generator(m, tol)
            })
            .collect::<Result<Vec<_>>>()?;
        let path = Self { scenario, cells };
        let integral = path.integrated_exit_rate();
        if !integral.is_finite() {
            return Err(Error::NonFiniteEntries { row: 0, col: 0 });
        }
        Ok(path)
    }

    pub fn from_generators(scenario: FactorScenario, cells: Vec<GeneratorMatrix>) -> Result<Self> {
        Self::new(scenario, cells.into_iter().map(GeneratorMatrix::into_matrix).collect(), f64::INFINITY)
    }

    /// Same generator in every cell.
    pub fn constant(scenario: FactorScenario, g: Matrix, tol: f64) -> Result<Self> {
        let n = scenario.n_cells();
        Self::new(scenario, vec![g; n], tol)
    }

    /// Evaluates `rule(t_j, Z_{t_0..t_j})` at every cell start, so the
    /// intensity in a cell depends only on the factor history up to its start.
    pub fn from_rule<F>(scenario: FactorScenario, tol: f64, mut rule: F) -> Result<Self>
    where
        F: FnMut(f64, &[Vec<f64>]) -> Matrix,
    {
        let cells = (0..scenario.n_cells()).map(|j| rule(scenario.grid[j], &scenario.values[..=j])).collect();
        Self::new(scenario, cells, tol)
    }

    pub fn scenario(&self) -> &FactorScenario {
        &self.scenario
    }

    pub fn grid(&self) -> &[f64] {
        &self.scenario.grid
    }

    pub fn horizon(&self) -> f64 {
        self.scenario.horizon()
    }

    pub fn dim(&self) -> usize {
        self.cells[0].dim()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[GeneratorMatrix] {
        &self.cells
    }

    pub fn cell(&self, j: usize) -> &GeneratorMatrix {
        &self.cells[j]
    }

    pub fn cell_length(&self, j: usize) -> f64 {
        self.scenario.grid[j + 1] - self.scenario.grid[j]
    }

    pub fn cell_midpoint(&self, j: usize) -> f64 {
        0.5 * (self.scenario.grid[j] + self.scenario.grid[j + 1])
    }

    pub fn cell_index(&self, t: f64) -> Result<usize> {
        self.scenario.cell_index(t)
    }

    pub fn at(&self, t: f64) -> Result<&GeneratorMatrix> {
        Ok(&self.cells[self.cell_index(t)?])
    }

    /// `Σ_cells h_j · max_x |λ^{xx}|`, finite for every valid path.
    pub fn integrated_exit_rate(&self) -> f64 {
        (0..self.n_cells()).map(|j| self.cell_length(j) * self.cells[j].max_exit_rate()).sum()
    }

    /// Per-cell propagator `exp(h_j Λ_j)` over the whole cell.
    pub fn cell_propagator(&self, j: usize) -> Result<Matrix> {
        self.cells[j].scale(self.cell_length(j)).expm()
    }

    /// Exact transition matrix `P(s, t)` for arbitrary `s ≤ t`, splitting
    /// partially covered cells.
    pub fn propagator(&self, s: f64, t: f64) -> Result<Matrix> {
        let mut p = Matrix::identity(self.dim());
        let mut pieces = Vec::new();
        for_each_piece(self.grid(), s, t, |j, lo, hi| pieces.push((j, hi - lo)))?;
        for (j, h) in pieces {
            p = p.matmul(&self.cells[j].scale(h).expm()?);
        }
        Ok(p)
    }
}

/// Law of `X_0`, independent of the scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialLaw {
    probs: Vec<f64>,
}

impl InitialLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLaw("empty law".into()));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidLaw(format!("entry {i} is {}", probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > crate::STRUCTURAL_TOL {
            return Err(Error::InvalidLaw(format!("sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Dirac mass at flat state `i` of a `d`-state space.
    pub fn point(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::OutOfRange { index: vec![i], sizes: vec![d] });
        }
        let mut probs = vec![0.0; d];
        probs[i] = 1.0;
        Ok(Self { probs })
    }

    /// Product law with independent coordinates, in Kronecker order.
    pub fn product(laws: &[InitialLaw]) -> Result<Self> {
        let probs = laws.iter().fold(vec![1.0], |acc, law| {
            acc.iter().flat_map(|a| law.probs.iter().map(move |b| a * b)).collect()
        });
        // products of normalized vectors may drift by a few ulps
        let total: f64 = probs.iter().sum();
        Self::new(probs.into_iter().map(|p| p / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }
}

/// One fully specified conditional Markov chain along a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcModel {
    space: ProductStateSpace,
    generator: GeneratorPath,
    initial: InitialLaw,
}

impl CmcModel {
    pub fn new(space: ProductStateSpace, generator: GeneratorPath, initial: InitialLaw) -> Result<Self> {
        let d = space.cardinality();
        if generator.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: generator.dim() });
        }
        if initial.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: initial.dim() });
        }
        Ok(Self { space, generator, initial })
    }

    pub fn space(&self) -> &ProductStateSpace {
        &self.space
    }

    pub fn generator(&self) -> &GeneratorPath {
        &self.generator
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    pub fn grid(&self) -> &[f64] {
        self.generator.grid()
    }

    pub fn horizon(&self) -> f64 {
        self.generator.horizon()
    }

    pub fn dim(&self) -> usize {
        self.space.cardinality()
    }

    /// Same chain started from a different initial law.
    pub fn with_initial(&self, initial: InitialLaw) -> Result<Self> {
        Self::new(self.space.clone(), self.generator.clone(), initial)
    }
}
