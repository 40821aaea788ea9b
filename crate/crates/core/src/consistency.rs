//! Strong and weak Markovian consistency of single components.
//!
//! For component `k` and a full state `x`, the aggregate
//! `Σ_{y: y^k = z} λ^{xy}` is the rate at which `X^k` jumps from `x^k` to
//! `z` while the chain sits in `x`. Strong consistency asks that this rate
//! not depend on the other coordinates `x^{-k}`: everywhere (ASM), or only
//! on states carrying positive probability (SM). Weak consistency averages
//! it over `x^{-k}` with the conditional law of the chain given the
//! component.
//!
//! Equalities that hold "dt ⊗ dP almost everywhere" are checked once per
//! grid cell at the cell midpoint, which is exact for piecewise-constant
//! intensities.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::generator::validate_generator;
use crate::kolmogorov::{distribution_at, state_distribution};
use crate::matrix::Matrix;
use crate::model::{CmcModel, InitialLaw};
use crate::space::ProductStateSpace;
use crate::{STRUCTURAL_TOL, SUPPORT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Two full states sharing `x^k` whose aggregate jump rates to `y^k` differ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Witness {
    pub cell: usize,
    pub time: f64,
    pub x: Vec<usize>,
    pub x_bar: Vec<usize>,
    pub y_k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Per-cell intensity of one component, `|S_k| × |S_k|` each.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginalIntensityPath {
    pub component: usize,
    pub grid: Vec<f64>,
    /// Time at which each cell value was evaluated (cell midpoints).
    pub eval_times: Vec<f64>,
    pub cells: Vec<Matrix>,
}

impl MarginalIntensityPath {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Rate `λ^{k; x y}` in cell `j`.
    pub fn rate(&self, j: usize, x: usize, y: usize) -> f64 {
        self.cells[j][(x, y)]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsistencyReport {
    pub component: usize,
    pub asm: Verdict,
    pub sm: Verdict,
    pub wm_necessary: Verdict,
    pub witnesses: Vec<Witness>,
    pub marginal: Option<MarginalIntensityPath>,
}

impl ConsistencyReport {
    fn empty(component: usize) -> Self {
        Self {
            component,
            asm: Verdict::NotApplicable,
            sm: Verdict::NotApplicable,
            wm_necessary: Verdict::NotApplicable,
            witnesses: Vec::new(),
            marginal: None,
        }
    }
}

/// `agg[x, z] = Σ_{y ≠ x, y^k = z} λ^{xy}` for every full state `x`.
pub fn component_aggregates(space: &ProductStateSpace, g: &Matrix, k: usize) -> Matrix {
    let d = space.cardinality();
    let mut agg = Matrix::zeros(d, space.component_size(k));
    for x in 0..d {
        for (y, &rate) in g.row(x).iter().enumerate() {
            if y != x {
                agg[(x, space.component(y, k))] += rate;
            }
        }
    }
    agg
}

/// `π` at every cell midpoint.
pub(crate) fn midpoint_distributions(model: &CmcModel) -> Result<Vec<Vec<f64>>> {
    let path = model.generator();
    let at_grid = state_distribution(model)?;
    (0..path.n_cells())
        .map(|j| {
            let half = path.cell(j).scale(0.5 * path.cell_length(j)).expm()?;
            let mut pi = half.left_mul_vec(at_grid.at_index(j));
            for p in pi.iter_mut() {
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            Ok(pi)
        })
        .collect()
}

fn check_component(model: &CmcModel, k: usize) -> Result<()> {
    let n = model.space().n_components();
    if k >= n {
        return Err(Error::DimensionMismatch { expected: n, actual: k });
    }
    Ok(())
}

/// Compares aggregates across `x^{-k}` on the states accepted by `on_support`.
/// Returns the witnesses and the representative rows (one per `x^k`).
fn compare_aggregates(
    model: &CmcModel,
    k: usize,
    tol: f64,
    mut on_support: impl FnMut(usize, usize) -> bool,
) -> (Vec<Witness>, Vec<Matrix>) {
    let space = model.space();
    let path = model.generator();
    let m = space.component_size(k);
    let mut witnesses = Vec::new();
    let mut reps = Vec::with_capacity(path.n_cells());
    for j in 0..path.n_cells() {
        let agg = component_aggregates(space, path.cell(j), k);
        let mut rep = Matrix::zeros(m, m);
        for xk in 0..m {
            let all = space.states_with(k, xk);
            let supported: Vec<usize> = all.iter().copied().filter(|&x| on_support(j, x)).collect();
            // off-support component values are irrelevant; any version will do
            let reference = supported.first().copied().unwrap_or(all[0]);
            for z in (0..m).filter(|&z| z != xk) {
                rep[(xk, z)] = agg[(reference, z)];
                let lhs = agg[(reference, z)];
                let worst = supported
                    .iter()
                    .map(|&x| (x, agg[(x, z)]))
                    .max_by(|a, b| (a.1 - lhs).abs().total_cmp(&(b.1 - lhs).abs()));
                if let Some((x_bar, rhs)) = worst {
                    if (rhs - lhs).abs() > tol {
                        witnesses.push(Witness {
                            cell: j,
                            time: path.cell_midpoint(j),
                            x: space.multi_index(reference).unwrap_or_default(),
                            x_bar: space.multi_index(x_bar).unwrap_or_default(),
                            y_k: z,
                            lhs,
                            rhs,
                        });
                    }
                }
            }
            let off: f64 = rep.row(xk).iter().sum();
            rep[(xk, xk)] = -off;
        }
        reps.push(rep);
    }
    (witnesses, reps)
}

fn marginal_path(model: &CmcModel, k: usize, cells: Vec<Matrix>) -> Result<MarginalIntensityPath> {
    let path = model.generator();
    let cells = cells
        .into_iter()
        .map(|c| validate_generator(c, STRUCTURAL_TOL * 16.0).map(|g| g.into_matrix()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginalIntensityPath {
        component: k,
        grid: path.grid().to_vec(),
        eval_times: (0..path.n_cells()).map(|j| path.cell_midpoint(j)).collect(),
        cells,
    })
}

/// Algebraic strong consistency: aggregates independent of `x^{-k}` for
/// every full state, regardless of the initial law.
pub fn check_asm(model: &CmcModel, k: usize, tol: f64) -> Result<ConsistencyReport> {
    check_component(model, k)?;
    let (witnesses, reps) = compare_aggregates(model, k, tol, |_, _| true);
    let mut report = ConsistencyReport::empty(k);
    report.asm = Verdict::from_bool(witnesses.is_empty());
    if witnesses.is_empty() {
        report.marginal = Some(marginal_path(model, k, reps)?);
    }
    report.witnesses = witnesses;
    Ok(report)
}

/// Marginal intensity `λ^{k; x^k y^k} = Σ_{y^{-k}} λ^{(x)(y)}`; requires ASM-k.
pub fn extract_strong_marginal(model: &CmcModel, k: usize) -> Result<MarginalIntensityPath> {
    let report = check_asm(model, k, STRUCTURAL_TOL)?;
    report.marginal.ok_or(Error::AsmViolated { component: k })
}

/// Strong consistency restricted to the support of the chain: the
/// aggregates need only agree on full states with positive probability.
pub fn check_sm(model: &CmcModel, k: usize, tol: f64) -> Result<ConsistencyReport> {
    check_component(model, k)?;
    let mids = midpoint_distributions(model)?;
    let (witnesses, reps) = compare_aggregates(model, k, tol, |j, x| mids[j][x] > SUPPORT_EPS);
    let mut report = ConsistencyReport::empty(k);
    report.sm = Verdict::from_bool(witnesses.is_empty());
    if witnesses.is_empty() {
        report.marginal = Some(marginal_path(model, k, reps)?);
    }
    report.witnesses = witnesses;
    Ok(report)
}

/// Rows of the weak marginal intensity per cell; `None` where the component
/// state carries no probability.
pub(crate) fn weak_marginal_rows(model: &CmcModel, k: usize) -> Result<Vec<Vec<Option<Vec<f64>>>>> {
    check_component(model, k)?;
    let space = model.space();
    let path = model.generator();
    let m = space.component_size(k);
    let mids = midpoint_distributions(model)?;
    let mut cells = Vec::with_capacity(path.n_cells());
    for (j, pi) in mids.iter().enumerate() {
        let agg = component_aggregates(space, path.cell(j), k);
        let pik = space.marginal(pi, k);
        let rows = (0..m)
            .map(|xk| {
                if pik[xk] <= SUPPORT_EPS {
                    return None;
                }
                let mut row = alloc::vec![0.0; m];
                for x in space.states_with(k, xk) {
                    let w = pi[x] / pik[xk];
                    if w == 0.0 {
                        continue;
                    }
                    for z in (0..m).filter(|&z| z != xk) {
                        row[z] += w * agg[(x, z)];
                    }
                }
                row[xk] = -row.iter().sum::<f64>();
                Some(row)
            })
            .collect();
        cells.push(rows);
    }
    Ok(cells)
}

/// Necessary weak-consistency intensity
/// `λ^{k; x^k y^k}_t = Σ_{x^{-k}, y^{-k}} λ^{(x)(y)}_t π_t(x) / π^k_t(x^k)`.
pub fn weak_marginal_intensity(model: &CmcModel, k: usize) -> Result<MarginalIntensityPath> {
    let rows = weak_marginal_rows(model, k)?;
    let path = model.generator();
    let m = model.space().component_size(k);
    let mut cells = Vec::with_capacity(rows.len());
    for (j, cell_rows) in rows.into_iter().enumerate() {
        let mut data = Vec::with_capacity(m * m);
        for (xk, row) in cell_rows.into_iter().enumerate() {
            let Some(row) = row else {
                let pi = distribution_at(model, path.cell_midpoint(j))?;
                let prob = model.space().marginal(&pi, k)[xk];
                return Err(Error::SupportViolation { time: path.cell_midpoint(j), component: k, state: xk, prob });
            };
            data.extend(row);
        }
        cells.push(Matrix::from_row_major(m, m, data)?);
    }
    marginal_path(model, k, cells)
}

/// Outcome of the structural weak-only test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakOnlyVerdict {
    pub certified: bool,
    pub weak_marginal_ok: bool,
    /// Largest difference of component-k transition rows between two
    /// supported full states sharing `x^k`.
    pub max_deviation: f64,
    pub witness: Option<WeakOnlyWitness>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakOnlyWitness {
    pub s: f64,
    pub t: f64,
    pub x: Vec<usize>,
    pub x_bar: Vec<usize>,
    pub row_x: Vec<f64>,
    pub row_x_bar: Vec<f64>,
}

/// Certifies that component `k` is weakly but not strongly consistent: the
/// weak marginal intensity exists, and for some `s < t` the law of `X^k_t`
/// given `X_s = x` depends on `x^{-k}` between two supported states.
pub fn certify_weak_only(model: &CmcModel, k: usize, s_grid: &[f64], t_grid: &[f64], tol: f64) -> Result<WeakOnlyVerdict> {
    check_component(model, k)?;
    let weak_marginal_ok = match weak_marginal_intensity(model, k) {
        Ok(_) => true,
        Err(Error::SupportViolation { .. }) => false,
        Err(e) => return Err(e),
    };
    let space = model.space();
    let m = space.component_size(k);
    let mut max_deviation: f64 = 0.0;
    let mut witness = None;
    for &s in s_grid {
        let pi = distribution_at(model, s)?;
        for &t in t_grid.iter().filter(|&&t| t > s) {
            let p = model.generator().propagator(s, t)?;
            let agg = |x: usize| {
                let mut row = alloc::vec![0.0; m];
                for (y, v) in p.row(x).iter().enumerate() {
                    row[space.component(y, k)] += v;
                }
                row
            };
            for xk in 0..m {
                let supported: Vec<usize> =
                    space.states_with(k, xk).into_iter().filter(|&x| pi[x] > SUPPORT_EPS).collect();
                let rows: Vec<Vec<f64>> = supported.iter().map(|&x| agg(x)).collect();
                for a in 0..supported.len() {
                    for b in a + 1..supported.len() {
                        let dev = rows[a].iter().zip(&rows[b]).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                        if dev > max_deviation {
                            max_deviation = dev;
                            witness = Some(WeakOnlyWitness {
                                s,
                                t,
                                x: space.multi_index(supported[a])?,
                                x_bar: space.multi_index(supported[b])?,
                                row_x: rows[a].clone(),
                                row_x_bar: rows[b].clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    let violated = max_deviation > tol;
    Ok(WeakOnlyVerdict {
        certified: weak_marginal_ok && violated,
        weak_marginal_ok,
        max_deviation,
        witness: if violated { witness } else { None },
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LawMatch {
    pub passed: bool,
    pub intensity_ok: bool,
    pub initial_ok: bool,
    pub max_intensity_deviation: f64,
    pub initial_deviation: f64,
}

/// Equality in law of two component chains: equal intensities in every
/// cell and equal initial laws.
pub fn check_law_match(
    lambda: &[Matrix],
    mu0: &InitialLaw,
    psi: &[Matrix],
    nu0: &InitialLaw,
    tol: f64,
) -> Result<LawMatch> {
    if lambda.len() != psi.len() {
        return Err(Error::DimensionMismatch { expected: lambda.len(), actual: psi.len() });
    }
    if mu0.dim() != nu0.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), actual: nu0.dim() });
    }
    let mut max_intensity_deviation: f64 = 0.0;
    for (l, p) in lambda.iter().zip(psi) {
        if (l.rows(), l.cols()) != (p.rows(), p.cols()) || l.rows() != mu0.dim() {
            return Err(Error::DimensionMismatch { expected: mu0.dim(), actual: p.rows() });
        }
        max_intensity_deviation = max_intensity_deviation.max((l - p).norm_inf());
    }
    let initial_deviation =
        mu0.probs().iter().zip(nu0.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let intensity_ok = max_intensity_deviation <= tol;
    let initial_ok = initial_deviation <= tol;
    Ok(LawMatch { passed: intensity_ok && initial_ok, intensity_ok, initial_ok, max_intensity_deviation, initial_deviation })
}

/// Runs ASM, SM and the weak necessary condition for component `k`.
///
/// The attached marginal is the strong one when SM holds, otherwise the
/// weak one when it exists. A weak pass is a necessary-condition pass
/// only; it does not prove weak consistency.
pub fn check_all(model: &CmcModel, k: usize, tol: f64) -> Result<ConsistencyReport> {
    let asm = check_asm(model, k, tol)?;
    let sm = check_sm(model, k, tol)?;
    let weak = match weak_marginal_intensity(model, k) {
        Ok(m) => Some(m),
        Err(Error::SupportViolation { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut witnesses = asm.witnesses;
    for w in sm.witnesses {
        if !witnesses.contains(&w) {
            witnesses.push(w);
        }
    }
    Ok(ConsistencyReport {
        component: k,
        asm: asm.asm,
        sm: sm.sm,
        wm_necessary: if weak.is_some() { Verdict::Pass } else { Verdict::NotApplicable },
        witnesses,
        marginal: sm.marginal.or(weak),
    })
}

/// Two binary components that only ever switch together: `(0,0) → (1,1)`
/// at rate `a`, `(1,1) → (0,0)` at rate `b`; mixed states are frozen.
pub fn joint_switch_generator(a: f64, b: f64) -> Matrix {
    Matrix::from_rows(&[
        [-a, 0.0, 0.0, a],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [b, 0.0, 0.0, -b],
    ])
}

/// Another intensity for the same chain as [`joint_switch_generator`] when
/// started off the mixed states: it only differs on `(0,1)` and `(1,0)`,
/// where each component moves at the same aggregate rates as elsewhere.
pub fn joint_switch_generator_balanced(a: f64, b: f64) -> Matrix {
    Matrix::from_rows(&[
        [-a, 0.0, 0.0, a],
        [b, -a - b, 0.0, a],
        [b, 0.0, -a - b, a],
        [b, 0.0, 0.0, -b],
    ])
}
