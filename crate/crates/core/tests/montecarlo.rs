mod common;

use cmc_core::copulae::{build_common_jump, build_conditional_independence, build_perfect_dependence, build_weak_only, MarginalSpec};
use cmc_core::kolmogorov::closed_form_weak_only;
use cmc_core::montecarlo::{
    compensator_residual, compensator_residuals, empirical_distribution, empirical_transition,
    empirical_weak_markov_test, simulate, Stratification,
};
use cmc_core::{CmcModel, FactorScenario, GeneratorPath, InitialLaw, Matrix, ProductStateSpace};
use common::{generator, rate};
use proptest::prelude::*;

const N: usize = 20_000;

fn absorbing(a: f64) -> CmcModel {
    let g = Matrix::from_rows(&[[-a, a], [0.0, 0.0]]);
    let path = GeneratorPath::constant(FactorScenario::uniform(1.0, 20).unwrap(), g, 1e-12).unwrap();
    CmcModel::new(ProductStateSpace::single(2).unwrap(), path, InitialLaw::point(2, 0).unwrap()).unwrap()
}

#[test]
fn absorption_frequency() {
    let bundle = simulate(&absorbing(1.0), N, 7).unwrap();
    let (p, se) = empirical_distribution(&bundle, 1.0).unwrap();
    let want = 1.0 - (-1.0f64).exp();
    assert!((p[1] - want).abs() <= 4.0 * se[1], "{} vs {want}", p[1]);
}

#[test]
fn bundle_invariants() {
    let one = rate(1.0, 20, 1.0);
    let model = build_weak_only(&one, &one, &one).unwrap().model;
    let bundle = simulate(&model, 2_000, 3).unwrap();
    for p in &bundle.paths {
        assert!(p.events.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(p.events.iter().all(|&(t, _)| t > 0.0 && t <= 1.0));
    }
    let occ: f64 = bundle.occupation(0.0, 1.0).iter().sum();
    assert!((occ - 2_000.0).abs() < 1e-9);
    let counts = bundle.transition_counts(0.0, 1.0);
    assert!(counts.as_slice().iter().all(|&c| c >= 0.0));
    assert_eq!(simulate(&model, 2_000, 3).unwrap(), bundle);
}

#[test]
fn perfect_dependence_paths_coincide() {
    let spec = MarginalSpec::absorbing(&[&rate(1.0, 10, 1.3), &rate(1.0, 10, 1.3)]).unwrap();
    let model = build_perfect_dependence(&spec).unwrap().model;
    let bundle = simulate(&model, 2_000, 4).unwrap();
    let space = &bundle.space;
    for p in &bundle.paths {
        for x in std::iter::once(p.initial).chain(p.events.iter().map(|e| e.1)) {
            assert_eq!(space.component(x, 0), space.component(x, 1));
        }
    }
}

#[test]
fn weak_only_row_matches_closed_form() {
    let one = rate(1.0, 20, 1.0);
    let model = build_weak_only(&one, &one, &one).unwrap().model;
    let bundle = simulate(&model, N, 8).unwrap();
    let et = empirical_transition(&bundle, 0.0, 1.0).unwrap();
    let cf = closed_form_weak_only(&one, &one, &one, 0.0, 1.0).unwrap();
    for y in 0..4 {
        let se = et.std_errors[(0, y)].max(1.0 / N as f64);
        assert!((et.matrix[(0, y)] - cf[(0, y)]).abs() <= 4.0 * se, "entry {y}");
    }
}

#[test]
fn independent_components_factorize() {
    let spec = MarginalSpec::absorbing(&[&rate(1.0, 10, 0.8), &rate(1.0, 10, 1.6)]).unwrap();
    let model = build_conditional_independence(&spec, None).unwrap().model;
    let bundle = simulate(&model, N, 9).unwrap();
    let joint = empirical_transition(&bundle, 0.0, 1.0).unwrap();
    let space = &bundle.space;
    let marginal = |k: usize, v: usize| {
        bundle.paths.iter().filter(|p| space.component(p.state_at(1.0), k) == v).count() as f64 / N as f64
    };
    for y in 0..4 {
        let ys = space.multi_index(y).unwrap();
        let product = marginal(0, ys[0]) * marginal(1, ys[1]);
        assert!((joint.matrix[(0, y)] - product).abs() <= 4.0 * joint.std_errors[(0, y)].max(1e-4));
    }
}

#[test]
fn common_jump_count_matches_occupation() {
    let model = build_common_jump(&rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0), &rate(1.0, 20, 0.5), 1e-12).unwrap().model;
    let bundle = simulate(&model, N, 10).unwrap();
    let mean_count = bundle.transition_counts(0.0, 1.0)[(0, 3)] / N as f64;
    let expected = 0.5 * (1.0 - (-1.5f64).exp()) / 1.5;
    // counts are Bernoulli here: at most one common jump per path
    let se = (expected * (1.0 - expected) / N as f64).sqrt();
    assert!((mean_count - expected).abs() <= 4.0 * se);
    let r = compensator_residual(&bundle, &model, 0, 3).unwrap();
    assert!(r.estimates[0].within(4.0));
}

#[test]
fn residuals_add_up_over_targets() {
    let one = rate(1.0, 20, 1.0);
    let model = build_weak_only(&one, &one, &one).unwrap().model;
    let bundle = simulate(&model, 5_000, 12).unwrap();
    let all = compensator_residuals(&bundle, &model).unwrap();
    assert_eq!(all.estimates.len(), 12);
    assert!(all.max_abs_z() <= 4.0);
    // total exits from (0,0) minus the integrated exit rate
    let exits: f64 = (1..4).map(|y| bundle.transition_counts(0.0, 1.0)[(0, y)]).sum();
    let compensator = 3.0 * bundle.occupation(0.0, 1.0)[0];
    let total = (exits - compensator) / 5_000.0;
    let summed: f64 = all.estimates[..3].iter().map(|e| e.value).sum();
    assert!((total - summed).abs() < 1e-9);
}

#[test]
fn stratified_tests_separate_weak_from_strong() {
    let one = rate(1.0, 20, 1.0);
    let weak = build_weak_only(&one, &one, &one).unwrap().model;
    let bundle = simulate(&weak, N, 13).unwrap();
    let full = empirical_weak_markov_test(&bundle, 0, 0.5, 1.0, Stratification::FullState, 50).unwrap();
    assert!(full.max_abs_z() > 4.0);
    let own = empirical_weak_markov_test(&bundle, 0, 0.5, 1.0, Stratification::OwnHistory { lag: 0.25 }, 50).unwrap();
    assert!(own.max_abs_z() <= 4.0);

    let spec = MarginalSpec::absorbing(&[&rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0)]).unwrap();
    let ci = build_conditional_independence(&spec, None).unwrap().model;
    let bundle = simulate(&ci, N, 14).unwrap();
    let full = empirical_weak_markov_test(&bundle, 0, 0.5, 1.0, Stratification::FullState, 50).unwrap();
    assert!(full.max_abs_z() <= 4.0);
}

#[test]
fn empty_buckets_are_reported() {
    let bundle = simulate(&absorbing(1.0), 100, 1).unwrap();
    let r = empirical_weak_markov_test(&bundle, 0, 0.5, 1.0, Stratification::FullState, 10);
    assert!(matches!(r, Err(cmc_core::Error::InsufficientSamples(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn empirical_rows_are_distributions(g in generator(3, 2.0), seed in any::<u64>()) {
        let path = GeneratorPath::constant(FactorScenario::uniform(1.0, 5).unwrap(), g, 1e-10).unwrap();
        let model = CmcModel::new(
            ProductStateSpace::single(3).unwrap(),
            path,
            InitialLaw::new(vec![0.3, 0.3, 0.4]).unwrap(),
        ).unwrap();
        let bundle = simulate(&model, 300, seed).unwrap();
        let et = empirical_transition(&bundle, 0.2, 0.8).unwrap();
        for x in 0..3 {
            let s: f64 = et.matrix.row(x).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
        let occ: f64 = bundle.occupation(0.0, 1.0).iter().sum();
        prop_assert!((occ - 300.0).abs() <= 1e-9);
    }
}
