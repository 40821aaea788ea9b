//! Conditional Kolmogorov equations along a scenario.
//!
//! With a piecewise-constant intensity the forward equation
//! `∂_t P(s,t) = P(s,t) Λ_t` and the backward equation
//! `∂_s P(s,t) = -Λ_s P(s,t)` are solved exactly per cell by the matrix
//! exponential and composed across cells. Rows of unreachable states are
//! propagated like any other row, which realizes the identity convention
//! for transitions out of null events.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{kron_all, Matrix};
use crate::model::{for_each_piece, CmcModel, GeneratorPath, RatePath};
use crate::space::ProductStateSpace;

/// Tolerance on row sums of every solved transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Transition matrices `P(t_i, t_j)` for all grid pairs `i ≤ j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionField {
    grid: Vec<f64>,
    dim: usize,
    // upper-triangular pairs, row-major over the anchor index
    mats: Vec<Matrix>,
}

fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    // offset of anchor row i is Σ_{r<i} (n - r)
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

impl TransitionField {
    /// Builds a field from a function of grid index pairs.
    pub fn from_fn(grid: Vec<f64>, dim: usize, mut f: impl FnMut(usize, usize) -> Matrix) -> Self {
        let n = grid.len();
        let mut mats = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let m = f(i, j);
                debug_assert_eq!((m.rows(), m.cols()), (dim, dim));
                mats.push(m);
            }
        }
        Self { grid, dim, mats }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `P(t_i, t_j)` by grid index.
    pub fn get(&self, i: usize, j: usize) -> &Matrix {
        assert!(i <= j, "transition fields are defined for s <= t only");
        &self.mats[pair_slot(self.grid.len(), i, j)]
    }

    /// `P(s, t)` for grid times `s ≤ t`.
    pub fn at(&self, s: f64, t: f64) -> Option<&Matrix> {
        let i = self.grid.iter().position(|&g| g == s)?;
        let j = self.grid.iter().position(|&g| g == t)?;
        (i <= j).then(|| self.get(i, j))
    }

    /// Largest row-sum deviation from one over all stored matrices.
    pub fn max_row_sum_error(&self) -> f64 {
        self.mats.iter().flat_map(|m| m.row_sums()).map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest `‖P(s,u) − P(s,t)P(t,u)‖_∞` over all grid triples.
    pub fn chapman_kolmogorov_error(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let composed = self.get(i, j).matmul(self.get(j, k));
                    worst = worst.max((self.get(i, k) - &composed).norm_inf());
                }
            }
        }
        worst
    }

    /// Largest entrywise difference to another field on the same grid.
    pub fn max_abs_diff(&self, other: &TransitionField) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.mats.iter().zip(&other.mats).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    /// Kronecker product `P_1 ⊗ … ⊗ P_N` of fields sharing one grid.
    pub fn kron(fields: &[TransitionField]) -> Self {
        let grid = fields[0].grid.clone();
        assert!(fields.iter().all(|f| f.grid == grid), "fields must share a grid");
        let dim = fields.iter().map(|f| f.dim).product();
        Self::from_fn(grid, dim, |i, j| kron_all(fields.iter().map(|f| f.get(i, j))))
    }

    fn certify(self) -> Result<Self> {
        for m in &self.mats {
            if let Some((row, col)) = m.first_non_finite() {
                return Err(Error::NonFiniteEntries { row, col });
            }
            for (row, sum) in m.row_sums().into_iter().enumerate() {
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::NotStochastic { row, sum });
                }
            }
        }
        Ok(self)
    }
}

fn cell_propagators(path: &GeneratorPath) -> Result<Vec<Matrix>> {
    (0..path.n_cells()).map(|j| path.cell_propagator(j)).collect()
}

/// Forward solution: for each anchor `s = t_i`, `P(s, t_{j+1}) = P(s, t_j) e^{h_j Λ_j}`.
pub fn forward_field(path: &GeneratorPath) -> Result<TransitionField> {
    let props = cell_propagators(path)?;
    let grid = path.grid().to_vec();
    let n = grid.len();
    let d = path.dim();
    let mut mats = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let mut p = Matrix::identity(d);
        mats.push(p.clone());
        for prop in &props[i..] {
            p = p.matmul(prop);
            mats.push(p.clone());
        }
    }
    TransitionField { grid, dim: d, mats }.certify()
}

/// Backward solution: for each terminal `t = t_j`, `P(t_{i-1}, t) = e^{h_{i-1} Λ_{i-1}} P(t_i, t)`.
pub fn backward_field(path: &GeneratorPath) -> Result<TransitionField> {
    let props = cell_propagators(path)?;
    let grid = path.grid().to_vec();
    let n = grid.len();
    let d = path.dim();
    let mut by_terminal: Vec<Vec<Matrix>> = Vec::with_capacity(n);
    for j in 0..n {
        // column j holds P(t_i, t_j) for i = j, j-1, ..., 0
        let mut col = Vec::with_capacity(j + 1);
        let mut p = Matrix::identity(d);
        col.push(p.clone());
        for prop in props[..j].iter().rev() {
            p = prop.matmul(&p);
            col.push(p.clone());
        }
        col.reverse();
        by_terminal.push(col);
    }
    let field = TransitionField::from_fn(grid, d, |i, j| core::mem::replace(&mut by_terminal[j][i], Matrix::zeros(0, 0)));
    field.certify()
}

pub fn solve_forward(model: &CmcModel) -> Result<TransitionField> {
    forward_field(model.generator())
}

pub fn solve_backward(model: &CmcModel) -> Result<TransitionField> {
    backward_field(model.generator())
}

/// `π_t(x) = P(X_t = x | F_t)` on the scenario grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateDistributionPath {
    pub grid: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

impl StateDistributionPath {
    pub fn at_index(&self, j: usize) -> &[f64] {
        &self.probs[j]
    }

    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.grid.iter().position(|&g| g == t).map(|j| self.probs[j].as_slice())
    }
}

fn clip_distribution(mut v: Vec<f64>) -> Vec<f64> {
    for p in v.iter_mut() {
        if *p < 0.0 && *p >= -1e-12 {
            *p = 0.0;
        }
    }
    v
}

/// `π_t = initialᵀ · P(0, t)` at every grid point.
pub fn state_distribution(model: &CmcModel) -> Result<StateDistributionPath> {
    let path = model.generator();
    let mut pi = model.initial().probs().to_vec();
    let mut probs = vec![pi.clone()];
    for j in 0..path.n_cells() {
        pi = clip_distribution(path.cell_propagator(j)?.left_mul_vec(&pi));
        probs.push(pi.clone());
    }
    Ok(StateDistributionPath { grid: path.grid().to_vec(), probs })
}

/// `π_t` at an arbitrary time in `[0, T]`.
pub fn distribution_at(model: &CmcModel, t: f64) -> Result<Vec<f64>> {
    let p = model.generator().propagator(0.0, t)?;
    Ok(clip_distribution(p.left_mul_vec(model.initial().probs())))
}

fn check_rates(rates: [&RatePath; 3]) -> Result<()> {
    let grid = rates[0].grid();
    for r in rates {
        if r.grid() != grid {
            return Err(Error::InvalidGrid("rate paths must share one grid".into()));
        }
        if let Some(cell) = r.values().iter().position(|&v| v < 0.0) {
            return Err(Error::NegativeRate { cell, value: r.values()[cell] });
        }
    }
    Ok(())
}

/// `∫_s^t b_u e^{-∫_s^u (b_v + c_v) dv} du`, exact for piecewise-constant rates.
fn discounted_rate_integral(b: &RatePath, c: &RatePath, s: f64, t: f64) -> Result<f64> {
    let mut acc = 0.0;
    let mut hazard = 0.0;
    for_each_piece(b.grid(), s, t, |j, lo, hi| {
        let (bj, k) = (b.cell_value(j), b.cell_value(j) + c.cell_value(j));
        let h = hi - lo;
        let piece = if k > 0.0 { -libm::expm1(-k * h) / k } else { h };
        acc += bj * libm::exp(-hazard) * piece;
        hazard += k * h;
    })?;
    Ok(acc)
}

/// `δ(s,t) = e^{-∫_s^t (a+b+c)}` of the weak-only generator.
pub fn weak_only_delta(a: &RatePath, b: &RatePath, c: &RatePath, s: f64, t: f64) -> Result<f64> {
    check_rates([a, b, c])?;
    Ok(libm::exp(-(a.integral(s, t)? + b.integral(s, t)? + c.integral(s, t)?)))
}

/// `α(s,t) = e^{-∫_s^t a} ∫_s^t b_u e^{-∫_s^u (b+c)} du`: probability of `(0,0) → (0,1)`.
pub fn weak_only_alpha(a: &RatePath, b: &RatePath, c: &RatePath, s: f64, t: f64) -> Result<f64> {
    check_rates([a, b, c])?;
    Ok(libm::exp(-a.integral(s, t)?) * discounted_rate_integral(b, c, s, t)?)
}

/// `β(s,t) = e^{-∫_s^t b} ∫_s^t a_u e^{-∫_s^u (a+c)} du`: probability of `(0,0) → (1,0)`.
pub fn weak_only_beta(a: &RatePath, b: &RatePath, c: &RatePath, s: f64, t: f64) -> Result<f64> {
    check_rates([a, b, c])?;
    Ok(libm::exp(-b.integral(s, t)?) * discounted_rate_integral(a, c, s, t)?)
}

/// Closed-form transition matrix of the weak-only copula generator
/// with rows `[−(a+b+c), b, a, c; 0, −a, 0, a; 0, 0, −b, b; 0, 0, 0, 0]`.
pub fn closed_form_weak_only(a: &RatePath, b: &RatePath, c: &RatePath, s: f64, t: f64) -> Result<Matrix> {
    check_rates([a, b, c])?;
    let delta = weak_only_delta(a, b, c, s, t)?;
    let alpha = weak_only_alpha(a, b, c, s, t)?;
    let beta = weak_only_beta(a, b, c, s, t)?;
    let gamma = 1.0 - delta - alpha - beta;
    let ea = libm::exp(-a.integral(s, t)?);
    let eb = libm::exp(-b.integral(s, t)?);
    Ok(Matrix::from_rows(&[
        [delta, alpha, beta, gamma],
        [0.0, ea, 0.0, 1.0 - ea],
        [0.0, 0.0, eb, 1.0 - eb],
        [0.0, 0.0, 0.0, 1.0],
    ]))
}

/// Row aggregates `Σ_{y: y^k = z} p_{xy}(s,t)` of a joint field, per full state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTransitionField {
    space: ProductStateSpace,
    component: usize,
    grid: Vec<f64>,
    // d × |S_k| per grid pair, same slot layout as TransitionField
    aggregates: Vec<Matrix>,
}

impl MarginalTransitionField {
    pub fn component(&self) -> usize {
        self.component
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// The `d × |S_k|` aggregate matrix for grid indices `i ≤ j`.
    pub fn aggregate(&self, i: usize, j: usize) -> &Matrix {
        &self.aggregates[pair_slot(self.grid.len(), i, j)]
    }

    /// Largest spread of the aggregate rows across states sharing `x^k`.
    pub fn max_spread(&self, i: usize, j: usize) -> f64 {
        let agg = self.aggregate(i, j);
        let m = self.space.component_size(self.component);
        let mut worst: f64 = 0.0;
        for xk in 0..m {
            let states = self.space.states_with(self.component, xk);
            let first = agg.row(states[0]);
            for &x in &states[1..] {
                for (u, v) in first.iter().zip(agg.row(x)) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        worst
    }

    /// The component transition matrix for `(t_i, t_j)`, if the aggregates do
    /// not depend on the other coordinates (within `tol`).
    pub fn component_matrix(&self, i: usize, j: usize, tol: f64) -> Option<Matrix> {
        if self.max_spread(i, j) > tol {
            return None;
        }
        let agg = self.aggregate(i, j);
        let m = self.space.component_size(self.component);
        let mut out = Matrix::zeros(m, m);
        for xk in 0..m {
            let x = self.space.states_with(self.component, xk)[0];
            out.row_mut(xk).copy_from_slice(agg.row(x));
        }
        Some(out)
    }

    /// The whole component field, if it is well defined at every grid pair.
    pub fn as_component_field(&self, tol: f64) -> Option<TransitionField> {
        let n = self.grid.len();
        let m = self.space.component_size(self.component);
        let mut mats = Vec::with_capacity(self.aggregates.len());
        for i in 0..n {
            for j in i..n {
                mats.push(self.component_matrix(i, j, tol)?);
            }
        }
        Some(TransitionField { grid: self.grid.clone(), dim: m, mats })
    }
}

/// Aggregates a joint transition field onto component `k`.
pub fn marginal_transition_field(field: &TransitionField, space: &ProductStateSpace, k: usize) -> MarginalTransitionField {
    assert_eq!(field.dim, space.cardinality());
    let m = space.component_size(k);
    let d = field.dim;
    let aggregates = field
        .mats
        .iter()
        .map(|p| {
            let mut agg = Matrix::zeros(d, m);
            for x in 0..d {
                for (y, v) in p.row(x).iter().enumerate() {
                    agg[(x, space.component(y, k))] += v;
                }
            }
            agg
        })
        .collect();
    MarginalTransitionField { space: space.clone(), component: k, grid: field.grid.clone(), aggregates }
}

/// Recovers the cell generator from a one-cell propagator `P = exp(hΛ)`.
pub fn recover_generator(propagator: &Matrix, h: f64) -> Result<Matrix> {
    Ok(propagator.logm()?.scale(1.0 / h))
}

/// Recovers every cell generator from the one-step pairs of a field.
pub fn recover_generators(field: &TransitionField) -> Result<Vec<Matrix>> {
    (0..field.grid.len() - 1)
        .map(|j| recover_generator(field.get(j, j + 1), field.grid[j + 1] - field.grid[j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorScenario, InitialLaw};

    fn weak_only_model(a: f64, b: f64, c: f64, steps: usize) -> CmcModel {
        let scenario = FactorScenario::uniform(1.0, steps).unwrap();
        let g = Matrix::from_rows(&[
            [-(a + b + c), b, a, c],
            [0.0, -a, 0.0, a],
            [0.0, 0.0, -b, b],
            [0.0, 0.0, 0.0, 0.0],
        ]);
        let path = GeneratorPath::constant(scenario, g, 1e-12).unwrap();
        CmcModel::new(ProductStateSpace::new(vec![2, 2]).unwrap(), path, InitialLaw::point(4, 0).unwrap()).unwrap()
    }

    fn rates(v: f64, steps: usize) -> RatePath {
        RatePath::constant(crate::model::uniform_grid(1.0, steps), v).unwrap()
    }

    #[test]
    fn pair_slots_are_dense() {
        let n = 5;
        let mut seen = Vec::new();
        for i in 0..n {
            for j in i..n {
                seen.push(pair_slot(n, i, j));
            }
        }
        let want: Vec<usize> = (0..n * (n + 1) / 2).collect();
        assert_eq!(seen, want);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let scenario = FactorScenario::uniform(1.0, 5).unwrap();
        let path = GeneratorPath::constant(scenario, Matrix::zeros(3, 3), 1e-12).unwrap();
        let model = CmcModel::new(ProductStateSpace::single(3).unwrap(), path, InitialLaw::point(3, 1).unwrap())
            .unwrap();
        for field in [solve_forward(&model).unwrap(), solve_backward(&model).unwrap()] {
            for i in 0..6 {
                for j in i..6 {
                    assert_eq!(*field.get(i, j), Matrix::identity(3));
                }
            }
        }
    }

    #[test]
    fn absorbing_two_state_value() {
        let scenario = FactorScenario::uniform(1.0, 10).unwrap();
        let path = GeneratorPath::constant(scenario, Matrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]]), 1e-12).unwrap();
        let model = CmcModel::new(ProductStateSpace::single(2).unwrap(), path, InitialLaw::point(2, 0).unwrap())
            .unwrap();
        let p = solve_forward(&model).unwrap();
        assert!((p.at(0.0, 1.0).unwrap()[(0, 1)] - 0.632_120_558_828_557_7).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_closed_form_weak_only() {
        let model = weak_only_model(1.0, 1.0, 1.0, 20);
        let field = solve_forward(&model).unwrap();
        let (a, b, c) = (rates(1.0, 20), rates(1.0, 20), rates(1.0, 20));
        let grid = model.grid().to_vec();
        for i in (0..grid.len()).step_by(3) {
            for j in i..grid.len() {
                let cf = closed_form_weak_only(&a, &b, &c, grid[i], grid[j]).unwrap();
                assert!(field.get(i, j).max_abs_diff(&cf) <= 1e-8);
            }
        }
    }

    #[test]
    fn state_distribution_spot_values() {
        let model = weak_only_model(1.0, 1.0, 1.0, 20);
        let pi = state_distribution(&model).unwrap();
        let at1 = pi.at(1.0).unwrap();
        let e = libm::exp;
        assert!((at1[0] - e(-3.0)).abs() < 1e-12);
        assert!((at1[1] - e(-1.0) * (1.0 - e(-2.0)) / 2.0).abs() < 1e-12);
        assert_eq!(pi.at(0.0).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        let mid = distribution_at(&model, 0.37).unwrap();
        assert!((mid.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_edge_cases() {
        let (a, b, zero) = (rates(1.0, 4), rates(1.0, 4), rates(0.0, 4));
        assert!(closed_form_weak_only(&a, &b, &zero, 0.5, 0.5).unwrap().max_abs_diff(&Matrix::identity(4)) < 1e-15);
        let cf = closed_form_weak_only(&a, &b, &zero, 0.0, 0.8).unwrap();
        let e = libm::exp(-0.8);
        let single = Matrix::from_rows(&[[e, 1.0 - e], [0.0, 1.0]]);
        assert!(cf.max_abs_diff(&crate::matrix::kron(&single, &single)) < 1e-14);
        let cf1 = closed_form_weak_only(&a, &b, &rates(1.0, 4), 0.1, 0.9).unwrap();
        for s in cf1.row_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert!(matches!(
            closed_form_weak_only(&a, &b, &rates(-0.1, 4), 0.0, 1.0),
            Err(Error::NegativeRate { cell: 0, .. })
        ));
    }

    #[test]
    fn marginal_of_product_field() {
        let scenario = FactorScenario::uniform(1.0, 4).unwrap();
        let p1 = GeneratorPath::constant(scenario.clone(), Matrix::from_rows(&[[-0.7, 0.7], [0.3, -0.3]]), 1e-12)
            .unwrap();
        let p2 = GeneratorPath::constant(
            scenario,
            Matrix::from_rows(&[[-1.0, 0.5, 0.5], [0.0, -2.0, 2.0], [0.1, 0.0, -0.1]]),
            1e-12,
        )
        .unwrap();
        let (f1, f2) = (forward_field(&p1).unwrap(), forward_field(&p2).unwrap());
        let joint = TransitionField::kron(&[f1.clone(), f2.clone()]);
        let space = ProductStateSpace::new(vec![2, 3]).unwrap();
        let m1 = marginal_transition_field(&joint, &space, 0).as_component_field(1e-14).unwrap();
        let m2 = marginal_transition_field(&joint, &space, 1).as_component_field(1e-14).unwrap();
        assert!(m1.max_abs_diff(&f1) < 1e-14);
        assert!(m2.max_abs_diff(&f2) < 1e-14);
    }

    #[test]
    fn marginal_of_weak_only_depends_on_other_coordinate() {
        let model = weak_only_model(1.0, 1.0, 1.0, 4);
        let field = solve_forward(&model).unwrap();
        let agg = marginal_transition_field(&field, model.space(), 0);
        let a = agg.aggregate(0, 4);
        // from (0,0): δ + α; from (0,1): e^{-1}
        let e = libm::exp;
        assert!((a[(0, 0)] - (e(-3.0) + e(-1.0) * (1.0 - e(-2.0)) / 2.0)).abs() < 1e-12);
        assert!((a[(1, 0)] - e(-1.0)).abs() < 1e-12);
        assert!(agg.component_matrix(0, 4, 1e-8).is_none());
    }

    #[test]
    fn generator_recovery() {
        let model = weak_only_model(0.8, 1.3, 0.4, 5);
        let field = solve_forward(&model).unwrap();
        for g in recover_generators(&field).unwrap() {
            assert!(g.max_abs_diff(model.generator().cell(0)) < 1e-9);
        }
    }
}
