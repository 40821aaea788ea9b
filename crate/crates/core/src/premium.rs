//! Unemployment-insurance premia for a pool whose employment chains are
//! coupled by a copula candidate. State 0 is employed, 1 is unemployed.
//!
//! The payoff of individual `k` is the discounted benefit paid while
//! unemployed, `b ∫_t^T e^{−r(u−t)} 1{Y^k_u = 1} du`. Conditioning on the
//! individual's own state or on the whole pool's state at `t` is done by
//! stratifying on that state.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::copulae::{CopulaCandidate, CopulaKind};
use crate::error::{Error, Result};
use crate::kolmogorov::distribution_at;
use crate::matrix::Matrix;
use crate::model::for_each_piece;
use crate::montecarlo::{simulate, PathBundle, SamplePath};
use crate::SUPPORT_EPS;

pub const UNEMPLOYED: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolModel {
    pub candidate: CopulaCandidate,
    pub discount_rate: f64,
    pub benefit_rate: f64,
    pub eval_time: f64,
}

impl PoolModel {
    pub fn new(candidate: CopulaCandidate, discount_rate: f64, benefit_rate: f64, eval_time: f64) -> Result<Self> {
        let space = candidate.model.space();
        if let Some(k) = space.sizes().iter().position(|&m| m != 2) {
            return Err(Error::DimensionMismatch { expected: 2, actual: space.component_size(k) });
        }
        if discount_rate.is_nan() || discount_rate < 0.0 {
            return Err(Error::NegativeRate { cell: 0, value: discount_rate });
        }
        if !(benefit_rate >= 0.0 && benefit_rate.is_finite()) {
            return Err(Error::NegativeRate { cell: 0, value: benefit_rate });
        }
        let horizon = candidate.model.horizon();
        if !(0.0..=horizon).contains(&eval_time) {
            return Err(Error::TimeOutOfRange { time: eval_time, start: 0.0, end: horizon });
        }
        Ok(Self { candidate, discount_rate, benefit_rate, eval_time })
    }

    pub fn horizon(&self) -> f64 {
        self.candidate.model.horizon()
    }

    pub fn n_individuals(&self) -> usize {
        self.candidate.model.space().n_components()
    }

    /// `∫_lo^hi e^{−r(u−t)} du`.
    fn discounted_length(&self, lo: f64, hi: f64) -> f64 {
        let r = self.discount_rate;
        if r == 0.0 {
            hi - lo
        } else {
            let t = self.eval_time;
            libm::exp(-r * (lo - t)) * -libm::expm1(-r * (hi - lo)) / r
        }
    }

    /// Discounted benefit of each individual along one path.
    fn payoffs(&self, path: &SamplePath) -> Vec<f64> {
        let space = self.candidate.model.space();
        let mut out = vec![0.0; space.n_components()];
        path.for_each_sojourn(self.eval_time, self.horizon(), |x, lo, hi| {
            let w = self.discounted_length(lo, hi);
            for (k, v) in out.iter_mut().enumerate() {
                if space.component(x, k) == UNEMPLOYED {
                    *v += w;
                }
            }
        });
        out.iter().map(|v| v * self.benefit_rate).collect()
    }
}

/// Premium conditional on one observed state at the evaluation time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stratum {
    /// `[y^k]` for an individual stratum, the full pool state otherwise.
    pub state: Vec<usize>,
    pub n_paths: usize,
    /// Probability of the observed state at the evaluation time.
    pub weight: f64,
    pub premium: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IndividualQuote {
    pub component: usize,
    pub individual: Vec<Stratum>,
    pub pool: Vec<Stratum>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum PricingMethod {
    MonteCarlo { n_paths: usize, seed: u64 },
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PremiumQuote {
    pub method: PricingMethod,
    pub eval_time: f64,
    pub horizon: f64,
    pub discount_rate: f64,
    pub benefit_rate: f64,
    pub individuals: Vec<IndividualQuote>,
}

impl PremiumQuote {
    pub fn individual(&self, k: usize, y_k: usize) -> Option<&Stratum> {
        self.individuals.get(k)?.individual.iter().find(|s| s.state == [y_k])
    }

    pub fn pool(&self, k: usize, state: &[usize]) -> Option<&Stratum> {
        self.individuals.get(k)?.pool.iter().find(|s| s.state == state)
    }
}

/// Monte Carlo premia from `n_paths` freshly simulated paths.
pub fn price(pool: &PoolModel, n_paths: usize, seed: u64) -> Result<PremiumQuote> {
    let bundle = simulate(&pool.candidate.model, n_paths, seed)?;
    price_from_bundle(pool, &bundle)
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn stratum(&self, state: Vec<usize>, total: usize) -> Stratum {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Stratum { state, n_paths: self.n, weight: n / total as f64, premium: mean, std_error: libm::sqrt(var / n) }
    }
}

/// Monte Carlo premia from an existing bundle of paths of the pool's model.
///
/// Strata observed on fewer than two paths carry no standard error and are
/// left out of the quote.
pub fn price_from_bundle(pool: &PoolModel, bundle: &PathBundle) -> Result<PremiumQuote> {
    let space = pool.candidate.model.space();
    if bundle.space != *space {
        return Err(Error::DimensionMismatch { expected: space.cardinality(), actual: bundle.dim() });
    }
    let n_comp = space.n_components();
    let mut own: Vec<[Moments; 2]> = vec![[Moments::default(); 2]; n_comp];
    let mut full: Vec<BTreeMap<usize, Moments>> = vec![BTreeMap::new(); n_comp];
    for path in &bundle.paths {
        let y = path.state_at(pool.eval_time);
        for (k, v) in pool.payoffs(path).into_iter().enumerate() {
            own[k][space.component(y, k)].push(v);
            full[k].entry(y).or_default().push(v);
        }
    }
    let total = bundle.n_paths();
    let mut individuals = Vec::with_capacity(n_comp);
    for k in 0..n_comp {
        let individual: Vec<Stratum> =
            (0..2).filter(|&y| own[k][y].n >= 2).map(|y| own[k][y].stratum(vec![y], total)).collect();
        if individual.is_empty() {
            return Err(Error::InsufficientSamples(format!("individual {k}: no state observed on two paths")));
        }
        let pool_strata = full[k]
            .iter()
            .filter(|(_, m)| m.n >= 2)
            .map(|(&y, m)| Ok(m.stratum(space.multi_index(y)?, total)))
            .collect::<Result<Vec<_>>>()?;
        individuals.push(IndividualQuote { component: k, individual, pool: pool_strata });
    }
    Ok(PremiumQuote {
        method: PricingMethod::MonteCarlo { n_paths: total, seed: bundle.seed },
        eval_time: pool.eval_time,
        horizon: pool.horizon(),
        discount_rate: pool.discount_rate,
        benefit_rate: pool.benefit_rate,
        individuals,
    })
}

/// `∫_t^T e^{−r(u−t)} P(t, u) du`, integrated exactly cell by cell through
/// the block exponential `exp(h [[Λ − rI, I], [0, 0]])`.
fn discounted_occupation_kernel(pool: &PoolModel) -> Result<Matrix> {
    let path = pool.candidate.model.generator();
    let d = path.dim();
    let r = pool.discount_rate;
    let mut pieces = Vec::new();
    for_each_piece(path.grid(), pool.eval_time, pool.horizon(), |j, lo, hi| pieces.push((j, hi - lo)))?;
    let mut running = Matrix::identity(d);
    let mut kernel = Matrix::zeros(d, d);
    for (j, h) in pieces {
        let g = path.cell(j);
        let mut block = Matrix::zeros(2 * d, 2 * d);
        for x in 0..d {
            for y in 0..d {
                block[(x, y)] = g[(x, y)] * h;
            }
            block[(x, x)] -= r * h;
            block[(x, d + x)] = h;
        }
        let e = block.expm()?;
        let mut step = Matrix::zeros(d, d);
        let mut integral = Matrix::zeros(d, d);
        for x in 0..d {
            for y in 0..d {
                step[(x, y)] = e[(x, y)];
                integral[(x, y)] = e[(x, d + y)];
            }
        }
        kernel = &kernel + &running.matmul(&integral);
        running = running.matmul(&step);
    }
    Ok(kernel)
}

/// Premia from the transition field, with no sampling.
pub fn price_closed_form(pool: &PoolModel) -> Result<PremiumQuote> {
    match pool.candidate.kind {
        CopulaKind::CommonJump { .. } | CopulaKind::WeakOnly { .. } | CopulaKind::ConditionalIndependence => {}
        ref other => return Err(Error::UnsupportedKind(other.name())),
    }
    let model = &pool.candidate.model;
    let space = model.space();
    let d = space.cardinality();
    let kernel = discounted_occupation_kernel(pool)?;
    let pi = distribution_at(model, pool.eval_time)?;
    let mut individuals = Vec::with_capacity(space.n_components());
    for k in 0..space.n_components() {
        let conditional: Vec<f64> = (0..d)
            .map(|y| pool.benefit_rate * (0..d).filter(|&z| space.component(z, k) == UNEMPLOYED).map(|z| kernel[(y, z)]).sum::<f64>())
            .collect();
        let mut pool_strata = Vec::new();
        for y in (0..d).filter(|&y| pi[y] > SUPPORT_EPS) {
            pool_strata.push(Stratum {
                state: space.multi_index(y)?,
                n_paths: 0,
                weight: pi[y],
                premium: conditional[y],
                std_error: 0.0,
            });
        }
        let mut individual = Vec::new();
        for y_k in 0..2 {
            let states: Vec<usize> = space.states_with(k, y_k).into_iter().filter(|&y| pi[y] > SUPPORT_EPS).collect();
            let weight: f64 = states.iter().map(|&y| pi[y]).sum();
            if states.is_empty() {
                continue;
            }
            let premium = states.iter().map(|&y| pi[y] * conditional[y]).sum::<f64>() / weight;
            individual.push(Stratum { state: vec![y_k], n_paths: 0, weight, premium, std_error: 0.0 });
        }
        individuals.push(IndividualQuote { component: k, individual, pool: pool_strata });
    }
    Ok(PremiumQuote {
        method: PricingMethod::ClosedForm,
        eval_time: pool.eval_time,
        horizon: pool.horizon(),
        discount_rate: pool.discount_rate,
        benefit_rate: pool.benefit_rate,
        individuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulae::{build_common_jump, build_conditional_independence, build_weak_only, MarginalSpec};
    use crate::model::{uniform_grid, RatePath};

    fn rate(v: f64) -> RatePath {
        RatePath::constant(uniform_grid(1.0, 20), v).unwrap()
    }

    #[test]
    fn start_unemployed_absorbing_pays_remaining_time() {
        let spec = MarginalSpec::absorbing(&[&rate(1.0), &rate(1.0)]).unwrap();
        let joint = crate::model::InitialLaw::point(4, 3).unwrap();
        let cand = build_conditional_independence(&spec, Some(joint));
        // the absorbing marginals start employed, so a fully unemployed
        // pool needs its own targets
        assert!(cand.is_err());
        let mut cand = build_conditional_independence(&spec, None).unwrap();
        cand.model = cand.model.with_initial(crate::model::InitialLaw::point(4, 3).unwrap()).unwrap();
        let pool = PoolModel::new(cand, 0.0, 1.0, 0.25).unwrap();
        let mc = price(&pool, 50, 1).unwrap();
        assert_eq!(mc.individual(0, 1).unwrap().premium, 0.75);
        assert_eq!(mc.individual(0, 1).unwrap().std_error, 0.0);
        let cf = price_closed_form(&pool).unwrap();
        assert!((cf.individual(1, 1).unwrap().premium - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_time_left_costs_nothing() {
        let cand = build_weak_only(&rate(1.0), &rate(1.0), &rate(1.0)).unwrap();
        let pool = PoolModel::new(cand, 0.0, 1.0, 1.0).unwrap();
        let cf = price_closed_form(&pool).unwrap();
        assert!(cf.individuals.iter().flat_map(|q| q.pool.iter().chain(&q.individual)).all(|s| s.premium == 0.0));
    }

    #[test]
    fn heavy_discounting_kills_premium() {
        let cand = build_weak_only(&rate(1.0), &rate(1.0), &rate(1.0)).unwrap();
        let pool = PoolModel::new(cand, 1e6, 1.0, 0.5).unwrap();
        let cf = price_closed_form(&pool).unwrap();
        for s in cf.individuals.iter().flat_map(|q| q.pool.iter()) {
            assert!(s.premium >= 0.0 && s.premium <= 1.01e-6, "{}", s.premium);
        }
    }

    #[test]
    fn absorbed_other_does_not_change_own_rate() {
        // from (0,1) individual 1 leaves employment at rate a whatever c is
        let premia: Vec<f64> = [0.0, 0.25, 0.5]
            .iter()
            .map(|&c| {
                let cand = build_common_jump(&rate(1.0), &rate(1.0), &rate(c), 1e-12).unwrap();
                let pool = PoolModel::new(cand, 0.0, 1.0, 0.5).unwrap();
                price_closed_form(&pool).unwrap().pool(0, &[0, 1]).unwrap().premium
            })
            .collect();
        // ∫_0^{0.5} (1 − e^{−u}) du
        let want = 0.5 - (1.0 - libm::exp(-0.5));
        for p in premia {
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unsupported_kind() {
        let spec = MarginalSpec::absorbing(&[&rate(1.0), &rate(1.0)]).unwrap();
        let cand = crate::copulae::build_perfect_dependence(&spec).unwrap();
        let pool = PoolModel::new(cand, 0.0, 1.0, 0.5).unwrap();
        assert!(matches!(price_closed_form(&pool), Err(Error::UnsupportedKind("perfect-dependence"))));
    }
}
