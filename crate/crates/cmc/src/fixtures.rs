//! Named reproduction fixtures. Each fixture checks a list of claims and
//! reports the measured quantities behind every verdict.

use cmc_core::consistency::{
    certify_weak_only, check_asm, check_sm, extract_strong_marginal, joint_switch_generator,
    joint_switch_generator_balanced, weak_marginal_intensity, Verdict,
};
use cmc_core::copulae::{
    build_common_jump, build_conditional_independence, build_weak_only, decompose_weak_only, validate_precopula,
    weak_only_marginal_rates, MarginalSpec,
};
use cmc_core::kolmogorov::{distribution_at, forward_field, state_distribution, TransitionField};
use cmc_core::model::uniform_grid;
use cmc_core::premium::{price_closed_form, price_from_bundle, PoolModel, PremiumQuote, Stratum};
use cmc_core::{CmcModel, FactorScenario, GeneratorPath, InitialLaw, Matrix, ProductStateSpace, RatePath};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::parallel;

pub const FIXTURES: [&str; 6] = ["example-3.6", "example-3.8", "kron-copula", "common-jump", "weak-only", "premium"];

#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub statement: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub passed: bool,
    pub claims: Vec<Claim>,
    pub summary: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReproduceOptions {
    pub seed: u64,
    pub paths: usize,
    pub tol: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self { seed: 20_140_601, paths: 100_000, tol: cmc_core::STRUCTURAL_TOL }
    }
}

struct Claims(Vec<Claim>);

impl Claims {
    fn check(&mut self, statement: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Claim { statement: statement.into(), passed, detail: detail.into() });
    }

    fn finish(self, name: &str, summary: Vec<String>) -> FixtureOutcome {
        let passed = self.0.iter().all(|c| c.passed);
        FixtureOutcome { name: name.into(), passed, claims: self.0, summary }
    }
}

pub fn reproduce(name: &str, opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    match name {
        "example-3.6" => joint_switch(opts),
        "example-3.8" => joint_switch_balanced(opts),
        "kron-copula" => kron_copula(opts),
        "common-jump" => common_jump(opts),
        "weak-only" => weak_only(opts),
        "premium" => premium(opts),
        other => Err(CliError::Usage(format!("unknown fixture {other:?}; known: {}", FIXTURES.join(", ")))),
    }
}

const STEPS: usize = 20;

fn unit_rate(v: f64) -> RatePath {
    RatePath::constant(uniform_grid(1.0, STEPS), v).unwrap_or_else(|_| unreachable!())
}

/// Scenario-driven switching rates `a_t = 1 + t/2`, `b_t = 2 − t` on `[0, 1]`.
fn switching_rates(t: f64) -> (f64, f64) {
    (1.0 + 0.5 * t, 2.0 - t)
}

fn joint_switch_model(balanced: bool, initial: Vec<f64>) -> CliResult<CmcModel> {
    let scenario = FactorScenario::uniform(1.0, STEPS)?;
    let path = GeneratorPath::from_rule(scenario, 1e-12, |t, _| {
        let (a, b) = switching_rates(t);
        if balanced {
            joint_switch_generator_balanced(a, b)
        } else {
            joint_switch_generator(a, b)
        }
    })?;
    Ok(CmcModel::new(ProductStateSpace::new(vec![2, 2])?, path, InitialLaw::new(initial)?)?)
}

const MIXTURE: [f64; 4] = [0.4, 0.0, 0.0, 0.6];

/// Largest deviation of marginal rates from `(a_t, b_t)` over all cells.
fn switching_marginal_error(cells: &[Matrix], grid: &[f64]) -> f64 {
    cells
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let (a, b) = switching_rates(grid[j]);
            (m[(0, 1)] - a).abs().max((m[(1, 0)] - b).abs())
        })
        .fold(0.0, f64::max)
}

fn joint_switch(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let model = joint_switch_model(false, MIXTURE.to_vec())?;
    let grid = model.grid().to_vec();

    for k in 0..2 {
        let r = check_asm(&model, k, opts.tol)?;
        let w = r.witnesses.iter().find(|w| w.x == [0, 0] && w.y_k == 1);
        let detail = w.map_or("no witness".into(), |w| {
            format!("cell {}: rate from {:?} is {} vs {} from {:?}", w.cell, w.x, w.lhs, w.rhs, w.x_bar)
        });
        let ok = r.asm == Verdict::Fail && w.is_some_and(|w| w.lhs == switching_rates(grid[w.cell]).0 && w.rhs == 0.0);
        claims.check(format!("ASM-{} fails with witness a_t vs 0", k + 1), ok, detail);
    }

    for k in 0..2 {
        let r = check_sm(&model, k, opts.tol)?;
        let err = r.marginal.as_ref().map_or(f64::INFINITY, |m| switching_marginal_error(&m.cells, &grid));
        claims.check(
            format!("SM-{} holds under m0 δ(0,0) + m1 δ(1,1) with rates a_t, b_t", k + 1),
            r.sm == Verdict::Pass && err <= opts.tol,
            format!("marginal rate error {err:e}"),
        );
    }

    let charged = joint_switch_model(false, vec![0.5, 0.5, 0.0, 0.0])?;
    let r = check_sm(&charged, 0, opts.tol)?;
    claims.check(
        "SM-1 fails once (0,1) carries mass next to (0,0)",
        r.sm == Verdict::Fail,
        format!("{} witnesses", r.witnesses.len()),
    );
    Ok(claims.finish("example-3.6", Vec::new()))
}

fn joint_switch_balanced(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let gamma = joint_switch_model(true, MIXTURE.to_vec())?;
    let lambda = joint_switch_model(false, MIXTURE.to_vec())?;
    let grid = gamma.grid().to_vec();
    for k in 0..2 {
        let r = check_asm(&gamma, k, opts.tol)?;
        let err = r.marginal.as_ref().map_or(f64::INFINITY, |m| switching_marginal_error(&m.cells, &grid));
        claims.check(
            format!("ASM-{} holds for the balanced version with rates a_t, b_t", k + 1),
            r.asm == Verdict::Pass && err <= opts.tol,
            format!("marginal rate error {err:e}"),
        );
    }
    let (g, l) = (state_distribution(&gamma)?, state_distribution(&lambda)?);
    let diff = g.probs.iter().flatten().zip(l.probs.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    claims.check("both versions give the same law from m0 δ(0,0) + m1 δ(1,1)", diff <= 1e-12, format!("max difference {diff:e}"));
    Ok(claims.finish("example-3.8", Vec::new()))
}

fn kron_copula(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let psi1 = Matrix::from_rows(&[[-0.5, 0.5], [1.0, -1.0]]);
    let psi2 = Matrix::from_rows(&[[-0.9, 0.6, 0.3], [0.2, -0.2, 0.0], [0.4, 0.4, -0.8]]);
    let scenario = FactorScenario::uniform(1.0, STEPS)?;
    let spec = MarginalSpec::constant(
        scenario.clone(),
        vec![(psi1.clone(), InitialLaw::new(vec![0.7, 0.3])?), (psi2.clone(), InitialLaw::new(vec![0.2, 0.5, 0.3])?)],
    )?;
    let cand = build_conditional_independence(&spec, None)?;
    let report = validate_precopula(&cand, &spec, opts.tol)?;
    claims.check("CMC-1..4 hold", report.strong_pass(), format!("aggregate deviation {:e}", report.aggregate_deviation));

    for (k, psi) in [(0, &psi1), (1, &psi2)] {
        let m = extract_strong_marginal(&cand.model, k)?;
        let err = m.cells.iter().map(|c| c.max_abs_diff(psi)).fold(0.0, f64::max);
        claims.check(format!("strong marginal {} equals its target", k + 1), err <= opts.tol, format!("{err:e}"));
    }

    let joint = forward_field(cand.model.generator())?;
    let parts = [psi1, psi2]
        .into_iter()
        .map(|p| forward_field(&GeneratorPath::constant(scenario.clone(), p, 1e-12)?))
        .collect::<cmc_core::Result<Vec<_>>>()?;
    let err = joint.max_abs_diff(&TransitionField::kron(&parts));
    claims.check("transition field is the Kronecker product of the marginal fields", err <= 1e-8, format!("{err:e}"));
    Ok(claims.finish("kron-copula", Vec::new()))
}

fn common_jump(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let (a, b) = (unit_rate(1.0), unit_rate(2.0));
    let targets = [Matrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]]), Matrix::from_rows(&[[-2.0, 2.0], [0.0, 0.0]])];
    let mut joint_mass = Vec::new();
    let mut summary = Vec::new();
    for c in [0.0, 0.25, 0.5] {
        let cand = build_common_jump(&a, &b, &unit_rate(c), opts.tol)?;
        let report = validate_precopula(&cand, &cand.targets, opts.tol)?;
        let err = (0..2)
            .map(|k| {
                extract_strong_marginal(&cand.model, k)
                    .map(|m| m.cells.iter().map(|x| x.max_abs_diff(&targets[k])).fold(0.0, f64::max))
            })
            .collect::<cmc_core::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        claims.check(
            format!("c={c}: strong pre-copula with marginals [[-a,a],[0,0]], [[-b,b],[0,0]]"),
            report.strong_pass() && err <= opts.tol,
            format!("marginal error {err:e}"),
        );
        let mass = distribution_at(&cand.model, 1.0)?[3];
        summary.push(format!("c={c}: P(X_1 = (1,1)) = {mass:.6}"));
        joint_mass.push(mass);
    }
    let distinct = joint_mass.windows(2).all(|w| w[1] > w[0] + 1e-6);
    claims.check("same marginals, different joint laws", distinct, format!("{joint_mass:?}"));
    Ok(claims.finish("common-jump", summary))
}

fn weak_only(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let one = unit_rate(1.0);
    let cand = build_weak_only(&one, &one, &one)?;
    let report = validate_precopula(&cand, &cand.targets, 1e-7)?;
    claims.check(
        "weak pre-copula but not strong (CMC-1 fails, WCMC-4 holds)",
        report.cmc[0] == Verdict::Fail && report.weak_pass(),
        format!("aggregate deviation {:.4}, weak deviation {:e}", report.aggregate_deviation, report.weak_intensity_deviation),
    );

    let mut err: f64 = 0.0;
    for k in 0..2 {
        let weak = weak_marginal_intensity(&cand.model, k)?;
        for j in 0..weak.n_cells() {
            let (r1, r2) = weak_only_marginal_rates(&one, &one, &one, j, weak.eval_times[j])?;
            err = err.max((weak.rate(j, 0, 1) - if k == 0 { r1 } else { r2 }).abs());
        }
    }
    claims.check("weak marginal intensities match (a+c) − c α/(δ+α)", err <= 1e-7, format!("{err:e}"));

    let times = uniform_grid(1.0, 4);
    let certified = certify_weak_only(&cand.model, 0, &times, &times, cmc_core::TRANSITION_TOL)?;
    claims.check("certified weak-only for c=1", certified.certified, format!("max deviation {:.6}", certified.max_deviation));
    let zero = build_common_jump(&one, &one, &unit_rate(0.0), opts.tol)?;
    let uncertified = certify_weak_only(&zero.model, 0, &times, &times, cmc_core::TRANSITION_TOL)?;
    claims.check("not certified for c=0", !uncertified.certified, format!("max deviation {:e}", uncertified.max_deviation));

    let recon = decompose_weak_only(&cand)?
        .iter()
        .enumerate()
        .map(|(j, p)| p.reconstruct().max_abs_diff(cand.model.generator().cell(j)))
        .fold(0.0, f64::max);
    claims.check("Λ = Ψ¹⊗I + I⊗Ψ² + B12 − B1 − B2", recon <= 1e-10, format!("{recon:e}"));
    let summary = vec![format!("weak-only certified: {} (c=1)", certified.certified)];
    Ok(claims.finish("weak-only", summary))
}

/// Weak-only pool of two, `a = b = 1`, evaluated at `t = 0.5` without discounting.
/// For `c = 0` the common-jump form is used, which then coincides with independence.
pub fn weak_only_pool(c: f64) -> cmc_core::Result<PoolModel> {
    let one = unit_rate(1.0);
    let cand = if c > 0.0 { build_weak_only(&one, &one, &unit_rate(c))? } else { build_common_jump(&one, &one, &unit_rate(0.0), 0.0)? };
    PoolModel::new(cand, 0.0, 1.0, 0.5)
}

fn stratum<'a>(q: &'a PremiumQuote, pool_state: Option<&[usize]>) -> CliResult<&'a Stratum> {
    let s = match pool_state {
        Some(state) => q.pool(0, state),
        None => q.individual(0, 0),
    };
    s.ok_or_else(|| CliError::FixtureFailed("premium".into(), format!("stratum {pool_state:?} not observed")))
}

/// `|x − y|` in units of the combined standard error.
fn z_gap(x: &Stratum, y: &Stratum) -> f64 {
    let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
    (x.premium - y.premium).abs() / se
}

fn premium(opts: &ReproduceOptions) -> CliResult<FixtureOutcome> {
    let mut claims = Claims(Vec::new());
    let mut summary = Vec::new();
    for (i, c) in [1.0, 0.0].into_iter().enumerate() {
        let pool = weak_only_pool(c)?;
        let bundle = parallel::simulate(&pool.candidate.model, opts.paths, opts.seed.wrapping_add(i as u64))?;
        let mc = price_from_bundle(&pool, &bundle)?;
        let cf = price_closed_form(&pool)?;
        let (own, both, other_out) = (stratum(&mc, None)?, stratum(&mc, Some(&[0, 0]))?, stratum(&mc, Some(&[0, 1]))?);
        summary.push(format!(
            "c={c}: pool|(0,0) = {:.5} ± {:.5}, individual|0 = {:.5} ± {:.5}, pool|(0,1) = {:.5} ± {:.5}",
            both.premium, both.std_error, own.premium, own.std_error, other_out.premium, other_out.std_error
        ));
        let mut worst_z: f64 = 0.0;
        for (q_mc, q_cf) in mc.individuals.iter().zip(&cf.individuals) {
            for s in q_mc.individual.iter().chain(&q_mc.pool) {
                if let Some(e) = q_cf.individual.iter().chain(&q_cf.pool).find(|e| e.state == s.state) {
                    let z = if s.std_error > 0.0 { (s.premium - e.premium).abs() / s.std_error } else { 0.0 };
                    worst_z = worst_z.max(z);
                }
            }
        }
        claims.check(format!("c={c}: Monte Carlo within 4 SE of the closed form"), worst_z <= 4.0, format!("max |z| {worst_z:.2}"));
        let gap = z_gap(both, own).max(z_gap(other_out, own));
        if c > 0.0 {
            claims.check(
                "c=1: pool premium differs from individual premium",
                gap > 4.0,
                format!("largest gap {gap:.1} SE"),
            );
        } else {
            claims.check("c=0: pool and individual premia agree within noise", gap <= 4.0, format!("largest gap {gap:.2} SE"));
        }
    }
    Ok(claims.finish("premium", summary))
}
