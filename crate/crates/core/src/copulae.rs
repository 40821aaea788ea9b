//! Strong and weak CMC copulae: product-space chains whose components
//! reproduce prescribed marginal intensities and initial laws.

use alloc::vec;
use alloc::vec::Vec;

use crate::consistency::{component_aggregates, weak_marginal_rows, Verdict};
use crate::error::{Error, Result};
use crate::generator::{kron_sum, validate_generator};
use crate::kolmogorov::{weak_only_alpha, weak_only_beta, weak_only_delta};
use crate::matrix::{kron, Matrix};
use crate::model::{CmcModel, FactorScenario, GeneratorPath, InitialLaw, RatePath};
use crate::space::ProductStateSpace;
use crate::STRUCTURAL_TOL;

/// Target law of one component: intensity per cell and initial law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginalTarget {
    pub intensity: Vec<Matrix>,
    pub initial: InitialLaw,
}

/// Prescribed marginal laws `Ψ^k, ν^k_0` of the family to be coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSpec {
    scenario: FactorScenario,
    components: Vec<MarginalTarget>,
}

impl MarginalSpec {
    pub fn new(scenario: FactorScenario, components: Vec<MarginalTarget>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        for target in &components {
            if target.intensity.len() != scenario.n_cells() {
                return Err(Error::DimensionMismatch { expected: scenario.n_cells(), actual: target.intensity.len() });
            }
            for cell in &target.intensity {
                if cell.rows() != target.initial.dim() {
                    return Err(Error::DimensionMismatch { expected: target.initial.dim(), actual: cell.rows() });
                }
                validate_generator(cell.clone(), STRUCTURAL_TOL)?;
            }
        }
        Ok(Self { scenario, components })
    }

    /// Every component with a time-constant intensity.
    pub fn constant(scenario: FactorScenario, targets: Vec<(Matrix, InitialLaw)>) -> Result<Self> {
        let n = scenario.n_cells();
        let components =
            targets.into_iter().map(|(psi, initial)| MarginalTarget { intensity: vec![psi; n], initial }).collect();
        Self::new(scenario, components)
    }

    /// Two-state absorbing marginals `[[-r, r], [0, 0]]` started in state 0.
    pub fn absorbing(rates: &[&RatePath]) -> Result<Self> {
        let scenario = FactorScenario::deterministic(rates[0].grid().to_vec())?;
        let components = rates
            .iter()
            .map(|r| {
                if r.grid() != scenario.grid() {
                    return Err(Error::InvalidGrid("rate paths must share one grid".into()));
                }
                Ok(MarginalTarget {
                    intensity: r.values().iter().map(|&v| Matrix::from_rows(&[[-v, v], [0.0, 0.0]])).collect(),
                    initial: InitialLaw::point(2, 0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(scenario, components)
    }

    pub fn scenario(&self) -> &FactorScenario {
        &self.scenario
    }

    pub fn components(&self) -> &[MarginalTarget] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &MarginalTarget {
        &self.components[k]
    }

    pub fn space(&self) -> Result<ProductStateSpace> {
        ProductStateSpace::new(self.components.iter().map(|c| c.initial.dim()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum CopulaKind {
    ConditionalIndependence,
    CommonJump { a: RatePath, b: RatePath, c: RatePath },
    PerfectDependence,
    WeakOnly { a: RatePath, b: RatePath, c: RatePath },
    Custom,
}

impl CopulaKind {
    pub fn name(&self) -> &'static str {
        match self {
            CopulaKind::ConditionalIndependence => "conditional-independence",
            CopulaKind::CommonJump { .. } => "common-jump",
            CopulaKind::PerfectDependence => "perfect-dependence",
            CopulaKind::WeakOnly { .. } => "weak-only",
            CopulaKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InitialProvenance {
    Product,
    Supplied,
}

/// A product-space chain together with the marginal targets it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaCandidate {
    pub model: CmcModel,
    pub kind: CopulaKind,
    pub initial_provenance: InitialProvenance,
    pub targets: MarginalSpec,
}

fn joint_initial(spec: &MarginalSpec, space: &ProductStateSpace, joint: Option<InitialLaw>) -> Result<(InitialLaw, InitialProvenance)> {
    match joint {
        None => {
            let laws: Vec<InitialLaw> = spec.components.iter().map(|c| c.initial.clone()).collect();
            Ok((InitialLaw::product(&laws)?, InitialProvenance::Product))
        }
        Some(law) => {
            if law.dim() != space.cardinality() {
                return Err(Error::DimensionMismatch { expected: space.cardinality(), actual: law.dim() });
            }
            for (k, target) in spec.components.iter().enumerate() {
                let margin = space.marginal(law.probs(), k);
                let deviation =
                    margin.iter().zip(target.initial.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if deviation > STRUCTURAL_TOL {
                    return Err(Error::MarginMismatch { component: k, deviation });
                }
            }
            Ok((law, InitialProvenance::Supplied))
        }
    }
}

/// Kronecker-sum intensity with (by default) independent initial coordinates.
pub fn build_conditional_independence(spec: &MarginalSpec, joint: Option<InitialLaw>) -> Result<CopulaCandidate> {
    let space = spec.space()?;
    let n_cells = spec.scenario.n_cells();
    let cells = (0..n_cells)
        .map(|j| {
            let factors: Vec<Matrix> = spec.components.iter().map(|c| c.intensity[j].clone()).collect();
            kron_sum(&factors).map(|g| g.into_matrix())
        })
        .collect::<Result<Vec<_>>>()?;
    let path = GeneratorPath::new(spec.scenario.clone(), cells, STRUCTURAL_TOL * space.cardinality() as f64)?;
    let (initial, initial_provenance) = joint_initial(spec, &space, joint)?;
    Ok(CopulaCandidate {
        model: CmcModel::new(space, path, initial)?,
        kind: CopulaKind::ConditionalIndependence,
        initial_provenance,
        targets: spec.clone(),
    })
}

fn check_shared_grid(rates: [&RatePath; 3]) -> Result<()> {
    if rates.iter().any(|r| r.grid() != rates[0].grid()) {
        return Err(Error::InvalidGrid("rate paths must share one grid".into()));
    }
    Ok(())
}

fn point_00() -> Result<InitialLaw> {
    InitialLaw::point(4, 0)
}

/// Two absorbing components with common jumps `(0,0) → (1,1)` at rate `c`:
/// rows `[−(a+b−c), b−c, a−c, c; 0, −a, 0, a; 0, 0, −b, b; 0, 0, 0, 0]`.
pub fn build_common_jump(a: &RatePath, b: &RatePath, c: &RatePath, tol: f64) -> Result<CopulaCandidate> {
    check_shared_grid([a, b, c])?;
    for j in 0..a.values().len() {
        let (aj, bj, cj) = (a.cell_value(j), b.cell_value(j), c.cell_value(j));
        if aj < 0.0 {
            return Err(Error::NegativeRate { cell: j, value: aj });
        }
        if bj < 0.0 {
            return Err(Error::NegativeRate { cell: j, value: bj });
        }
        if cj < -tol || cj > aj.min(bj) + tol {
            return Err(Error::ConstraintViolated { cell: j, a: aj, b: bj, c: cj });
        }
    }
    let scenario = FactorScenario::deterministic(a.grid().to_vec())?;
    let cells = (0..a.values().len())
        .map(|j| {
            let (a, b, c) = (a.cell_value(j), b.cell_value(j), c.cell_value(j).clamp(0.0, a.cell_value(j).min(b.cell_value(j))));
            Matrix::from_rows(&[
                [-(a + b - c), b - c, a - c, c],
                [0.0, -a, 0.0, a],
                [0.0, 0.0, -b, b],
                [0.0, 0.0, 0.0, 0.0],
            ])
        })
        .collect();
    let path = GeneratorPath::new(scenario, cells, STRUCTURAL_TOL * 4.0)?;
    Ok(CopulaCandidate {
        model: CmcModel::new(ProductStateSpace::new(vec![2, 2])?, path, point_00()?)?,
        kind: CopulaKind::CommonJump { a: a.clone(), b: b.clone(), c: c.clone() },
        initial_provenance: InitialProvenance::Product,
        targets: MarginalSpec::absorbing(&[a, b])?,
    })
}

/// All components equal to one chain: the intensity lives on the diagonal
/// states `(x, …, x)`.
pub fn build_perfect_dependence(spec: &MarginalSpec) -> Result<CopulaCandidate> {
    let first = &spec.components[0];
    for (k, c) in spec.components.iter().enumerate().skip(1) {
        if c != first {
            return Err(Error::HeterogeneousMarginals { component: k });
        }
    }
    let n = spec.components.len();
    let m = first.initial.dim();
    let space = spec.space()?;
    let d = space.cardinality();
    let diag = |x: usize| space.flat_index(&vec![x; n]);
    let cells = first
        .intensity
        .iter()
        .map(|psi| {
            let mut g = Matrix::zeros(d, d);
            for x in 0..m {
                for y in 0..m {
                    g[(diag(x)?, diag(y)?)] = psi[(x, y)];
                }
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let path = GeneratorPath::new(spec.scenario.clone(), cells, STRUCTURAL_TOL * m as f64)?;
    let mut probs = vec![0.0; d];
    for x in 0..m {
        probs[diag(x)?] = first.initial.probs()[x];
    }
    Ok(CopulaCandidate {
        model: CmcModel::new(space, path, InitialLaw::new(probs)?)?,
        kind: CopulaKind::PerfectDependence,
        initial_provenance: InitialProvenance::Supplied,
        targets: spec.clone(),
    })
}

/// Midpoint values `(δ_t, α_t, β_t)` of the weak-only generator from `(0,0)`.
fn weak_only_weights(a: &RatePath, b: &RatePath, c: &RatePath, t: f64) -> Result<(f64, f64, f64)> {
    Ok((weak_only_delta(a, b, c, 0.0, t)?, weak_only_alpha(a, b, c, 0.0, t)?, weak_only_beta(a, b, c, 0.0, t)?))
}

/// Implied marginal rates `ψ^{1;01}_t = (a+c) − c α/(δ+α)` and
/// `ψ^{2;01}_t = (b+c) − c β/(δ+β)` at time `t` inside cell `j`.
pub fn weak_only_marginal_rates(a: &RatePath, b: &RatePath, c: &RatePath, j: usize, t: f64) -> Result<(f64, f64)> {
    let (delta, alpha, beta) = weak_only_weights(a, b, c, t)?;
    let (aj, bj, cj) = (a.cell_value(j), b.cell_value(j), c.cell_value(j));
    Ok(((aj + cj) - cj * alpha / (delta + alpha), (bj + cj) - cj * beta / (delta + beta)))
}

fn weak_only_matrix(a: f64, b: f64, c: f64) -> Matrix {
    Matrix::from_rows(&[
        [-(a + b + c), b, a, c],
        [0.0, -a, 0.0, a],
        [0.0, 0.0, -b, b],
        [0.0, 0.0, 0.0, 0.0],
    ])
}

/// The weak-only copula generator
/// `[−(a+b+c), b, a, c; 0, −a, 0, a; 0, 0, −b, b; 0, 0, 0, 0]` started in
/// `(0,0)`, together with the marginal intensities it induces.
pub fn build_weak_only(a: &RatePath, b: &RatePath, c: &RatePath) -> Result<CopulaCandidate> {
    check_shared_grid([a, b, c])?;
    for r in [a, b, c] {
        if let Some(cell) = r.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::NonPositiveRate { cell, value: r.values()[cell] });
        }
    }
    let scenario = FactorScenario::deterministic(a.grid().to_vec())?;
    let n_cells = scenario.n_cells();
    let cells = (0..n_cells).map(|j| weak_only_matrix(a.cell_value(j), b.cell_value(j), c.cell_value(j))).collect();
    let path = GeneratorPath::new(scenario.clone(), cells, STRUCTURAL_TOL * 4.0)?;
    let mut psi1 = Vec::with_capacity(n_cells);
    let mut psi2 = Vec::with_capacity(n_cells);
    for j in 0..n_cells {
        let (r1, r2) = weak_only_marginal_rates(a, b, c, j, path.cell_midpoint(j))?;
        psi1.push(Matrix::from_rows(&[[-r1, r1], [0.0, 0.0]]));
        psi2.push(Matrix::from_rows(&[[-r2, r2], [0.0, 0.0]]));
    }
    let targets = MarginalSpec::new(
        scenario,
        vec![
            MarginalTarget { intensity: psi1, initial: InitialLaw::point(2, 0)? },
            MarginalTarget { intensity: psi2, initial: InitialLaw::point(2, 0)? },
        ],
    )?;
    Ok(CopulaCandidate {
        model: CmcModel::new(ProductStateSpace::new(vec![2, 2])?, path, point_00()?)?,
        kind: CopulaKind::WeakOnly { a: a.clone(), b: b.clone(), c: c.clone() },
        initial_provenance: InitialProvenance::Product,
        targets,
    })
}

/// A candidate from an arbitrary model, checked against `targets` later.
pub fn custom_candidate(model: CmcModel, targets: MarginalSpec) -> CopulaCandidate {
    CopulaCandidate { model, kind: CopulaKind::Custom, initial_provenance: InitialProvenance::Supplied, targets }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PrecopulaWitness {
    pub condition: &'static str,
    pub component: usize,
    pub cell: usize,
    pub x: Vec<usize>,
    pub y_k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Verdicts for the strong (CMC-1..4) and weak (WCMC-1..4) pre-copula conditions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PrecopulaReport {
    pub cmc: [Verdict; 4],
    pub wcmc: [Verdict; 4],
    pub aggregate_deviation: f64,
    pub weak_intensity_deviation: f64,
    pub initial_deviation: f64,
    pub witnesses: Vec<PrecopulaWitness>,
}

impl PrecopulaReport {
    pub fn strong_pass(&self) -> bool {
        self.cmc.iter().all(|v| v.is_pass())
    }

    pub fn weak_pass(&self) -> bool {
        self.wcmc.iter().all(|v| v.is_pass())
    }
}

/// Checks a candidate against marginal targets.
///
/// Strong: aggregate intensities equal the targets for every full state
/// (CMC-1), per-cell generator validity and integrability (CMC-2), a
/// scenario-independent initial law (CMC-3, true by construction) and
/// matching initial margins (CMC-4). Weak: the same with CMC-1 replaced by
/// the probability-weighted aggregates (WCMC-4), compared only where the
/// component state has positive probability.
pub fn validate_precopula(candidate: &CopulaCandidate, spec: &MarginalSpec, tol: f64) -> Result<PrecopulaReport> {
    let model = &candidate.model;
    let space = model.space();
    let path = model.generator();
    let n = space.n_components();
    if spec.components.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: spec.components.len() });
    }
    for (k, target) in spec.components.iter().enumerate() {
        if target.initial.dim() != space.component_size(k) {
            return Err(Error::DimensionMismatch { expected: space.component_size(k), actual: target.initial.dim() });
        }
        if target.intensity.len() != path.n_cells() {
            return Err(Error::DimensionMismatch { expected: path.n_cells(), actual: target.intensity.len() });
        }
    }

    let mut witnesses = Vec::new();

    let mut aggregate_deviation: f64 = 0.0;
    for (k, target) in spec.components.iter().enumerate() {
        let m = space.component_size(k);
        for j in 0..path.n_cells() {
            let agg = component_aggregates(space, path.cell(j), k);
            let psi = &target.intensity[j];
            let mut worst: Option<PrecopulaWitness> = None;
            for x in 0..space.cardinality() {
                let xk = space.component(x, k);
                for z in (0..m).filter(|&z| z != xk) {
                    let dev = (agg[(x, z)] - psi[(xk, z)]).abs();
                    aggregate_deviation = aggregate_deviation.max(dev);
                    if dev > tol && worst.as_ref().is_none_or(|w| dev > (w.lhs - w.rhs).abs()) {
                        worst = Some(PrecopulaWitness {
                            condition: "CMC-1",
                            component: k,
                            cell: j,
                            x: space.multi_index(x)?,
                            y_k: z,
                            lhs: agg[(x, z)],
                            rhs: psi[(xk, z)],
                        });
                    }
                }
            }
            witnesses.extend(worst);
        }
    }
    let cmc1 = Verdict::from_bool(aggregate_deviation <= tol);

    let canonical = path.cells().iter().all(|g| validate_generator(g.as_matrix().clone(), tol.max(STRUCTURAL_TOL)).is_ok())
        && path.integrated_exit_rate().is_finite();
    let cmc2 = Verdict::from_bool(canonical);
    // initial laws are fixed vectors, independent of the scenario
    let cmc3 = Verdict::Pass;

    let mut initial_deviation: f64 = 0.0;
    for (k, target) in spec.components.iter().enumerate() {
        let margin = space.marginal(model.initial().probs(), k);
        for (a, b) in margin.iter().zip(target.initial.probs()) {
            initial_deviation = initial_deviation.max((a - b).abs());
        }
    }
    let cmc4 = Verdict::from_bool(initial_deviation <= tol);

    let mut weak_intensity_deviation: f64 = 0.0;
    for (k, target) in spec.components.iter().enumerate() {
        let rows = weak_marginal_rows(model, k)?;
        for (j, cell_rows) in rows.iter().enumerate() {
            let psi = &target.intensity[j];
            for (xk, row) in cell_rows.iter().enumerate() {
                let Some(row) = row else { continue };
                for (z, v) in row.iter().enumerate().filter(|(z, _)| *z != xk) {
                    let dev = (v - psi[(xk, z)]).abs();
                    if dev > tol && dev > weak_intensity_deviation {
                        witnesses.push(PrecopulaWitness {
                            condition: "WCMC-4",
                            component: k,
                            cell: j,
                            x: vec![xk],
                            y_k: z,
                            lhs: *v,
                            rhs: psi[(xk, z)],
                        });
                    }
                    weak_intensity_deviation = weak_intensity_deviation.max(dev);
                }
            }
        }
    }
    let wcmc4 = Verdict::from_bool(weak_intensity_deviation <= tol);

    Ok(PrecopulaReport {
        cmc: [cmc1, cmc2, cmc3, cmc4],
        wcmc: [cmc2, cmc3, cmc4, wcmc4],
        aggregate_deviation,
        weak_intensity_deviation,
        initial_deviation,
        witnesses,
    })
}

/// `Λ = Ψ¹ ⊗ I + I ⊗ Ψ² + B_12 − B_1 − B_2` for one cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakOnlyDecomposition {
    pub kron_part: Matrix,
    pub b12: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
}

impl WeakOnlyDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        &(&(&self.kron_part + &self.b12) - &self.b1) - &self.b2
    }
}

/// Splits the weak-only generator into its conditionally independent part
/// and the dependence corrections, cell by cell.
pub fn decompose_weak_only(candidate: &CopulaCandidate) -> Result<Vec<WeakOnlyDecomposition>> {
    let CopulaKind::WeakOnly { a, b, c } = &candidate.kind else {
        return Err(Error::WrongKind { expected: "weak-only" });
    };
    let path = candidate.model.generator();
    let ident = Matrix::identity(2);
    (0..path.n_cells())
        .map(|j| {
            let (delta, alpha, beta) = weak_only_weights(a, b, c, path.cell_midpoint(j))?;
            let cj = c.cell_value(j);
            let (r1, r2) = weak_only_marginal_rates(a, b, c, j, path.cell_midpoint(j))?;
            let psi1 = Matrix::from_rows(&[[-r1, r1], [0.0, 0.0]]);
            let psi2 = Matrix::from_rows(&[[-r2, r2], [0.0, 0.0]]);
            let kron_part = &kron(&psi1, &ident) + &kron(&ident, &psi2);
            let u = cj * delta / (delta + beta);
            let v = cj * delta / (delta + alpha);
            let b12 = Matrix::from_rows(&[[-cj, 0.0, 0.0, cj], [0.0; 4], [0.0; 4], [0.0; 4]]);
            let b1 = Matrix::from_rows(&[[-u, u, 0.0, 0.0], [0.0; 4], [0.0, 0.0, -u, u], [0.0; 4]]);
            let b2 = Matrix::from_rows(&[[-v, 0.0, v, 0.0], [0.0, -v, 0.0, v], [0.0; 4], [0.0; 4]]);
            Ok(WeakOnlyDecomposition { kron_part, b12, b1, b2 })
        })
        .collect()
}
