mod common;

use cmc_core::consistency::{extract_strong_marginal, weak_marginal_intensity, Verdict};
use cmc_core::copulae::{
    build_common_jump, build_conditional_independence, build_perfect_dependence, build_weak_only, custom_candidate,
    decompose_weak_only, validate_precopula, weak_only_marginal_rates, MarginalSpec, MarginalTarget,
};
use cmc_core::kolmogorov::{distribution_at, solve_forward};
use cmc_core::{Error, FactorScenario, InitialLaw, Matrix, ProductStateSpace};
use common::{generator, rate};
use proptest::prelude::*;

#[test]
fn common_jump_family_round_trips() {
    let (a, b) = (rate(1.0, 20, 1.0), rate(1.0, 20, 2.0));
    let spec = MarginalSpec::absorbing(&[&a, &b]).unwrap();
    let ci = build_conditional_independence(&spec, None).unwrap();
    let mut candidates = vec![ci];
    for c in [0.0, 0.25, 0.5] {
        candidates.push(build_common_jump(&a, &b, &rate(1.0, 20, c), 1e-12).unwrap());
    }
    let laws: Vec<_> = candidates.iter().map(|c| distribution_at(&c.model, 1.0).unwrap()).collect();
    for cand in &candidates {
        let report = validate_precopula(cand, &spec, 1e-12).unwrap();
        assert!(report.strong_pass(), "{:?}", cand.kind);
        for k in 0..2 {
            let m = extract_strong_marginal(&cand.model, k).unwrap();
            for (got, want) in m.cells.iter().zip(&spec.component(k).intensity) {
                assert!(got.max_abs_diff(want) <= 1e-12);
            }
        }
    }
    // same marginals, different joint laws: P((1,1)) grows with c
    assert!(laws[1][3] < laws[2][3] && laws[2][3] < laws[3][3]);
    assert!((laws[0][3] - laws[1][3]).abs() < 1e-14);
}

#[test]
fn perfect_dependence_moves_together() {
    let psi = Matrix::from_rows(&[[-1.0, 0.6, 0.4], [0.5, -0.5, 0.0], [0.2, 0.3, -0.5]]);
    let law = InitialLaw::new(vec![0.2, 0.5, 0.3]).unwrap();
    let spec = MarginalSpec::constant(FactorScenario::uniform(1.0, 4).unwrap(), vec![(psi.clone(), law); 3]).unwrap();
    let cand = build_perfect_dependence(&spec).unwrap();
    // off-diagonal states have zero rows, so aggregate equality over every
    // full state fails; on the support it holds
    let report = validate_precopula(&cand, &spec, 1e-12).unwrap();
    assert_eq!(report.cmc[0], Verdict::Fail);
    assert!(report.cmc[1..].iter().all(|v| v.is_pass()));
    for k in 0..3 {
        let sm = cmc_core::consistency::check_sm(&cand.model, k, 1e-12).unwrap();
        assert_eq!(sm.sm, Verdict::Pass);
        assert!(sm.marginal.unwrap().cells.iter().all(|c| c.max_abs_diff(&psi) <= 1e-15));
    }
    let field = solve_forward(&cand.model).unwrap();
    let space = cand.model.space();
    // mass never leaves the diagonal states
    let p = field.get(0, 4);
    for x in 0..3 {
        let dx = space.flat_index(&[x, x, x]).unwrap();
        let diag: f64 = (0..3).map(|y| p[(dx, space.flat_index(&[y, y, y]).unwrap())]).sum();
        assert!((diag - 1.0).abs() < 1e-12);
    }
}

#[test]
fn weak_only_marginals_follow_formula() {
    let one = rate(1.0, 20, 1.0);
    let cand = build_weak_only(&one, &one, &one).unwrap();
    for k in 0..2 {
        let weak = weak_marginal_intensity(&cand.model, k).unwrap();
        for j in 0..20 {
            let (r1, r2) = weak_only_marginal_rates(&one, &one, &one, j, weak.eval_times[j]).unwrap();
            let r = if k == 0 { r1 } else { r2 };
            assert!((weak.rate(j, 0, 1) - r).abs() <= 1e-7);
        }
    }
    let report = validate_precopula(&cand, &cand.targets, 1e-7).unwrap();
    assert_eq!(report.cmc[0], Verdict::Fail);
    assert_eq!(report.wcmc[3], Verdict::Pass);
}

#[test]
fn mismatched_targets_fail_validation() {
    let a = rate(1.0, 5, 1.0);
    let spec = MarginalSpec::absorbing(&[&a, &a]).unwrap();
    let other = MarginalSpec::absorbing(&[&a, &rate(1.0, 5, 1.5)]).unwrap();
    let cand = build_conditional_independence(&spec, None).unwrap();
    let report = validate_precopula(&cand, &other, 1e-12).unwrap();
    assert_eq!(report.cmc[0], Verdict::Fail);
    assert!(report.witnesses.iter().any(|w| w.condition == "CMC-1" && w.component == 1));
}

#[test]
fn builder_errors() {
    let one = rate(1.0, 4, 1.0);
    assert!(matches!(
        build_common_jump(&one, &rate(1.0, 4, 0.5), &rate(1.0, 4, 0.75), 1e-12),
        Err(Error::ConstraintViolated { cell: 0, .. })
    ));
    assert!(matches!(build_weak_only(&one, &rate(1.0, 4, -1.0), &one), Err(Error::NonPositiveRate { .. })));
    assert!(matches!(build_weak_only(&one, &one, &rate(1.0, 5, 1.0)), Err(Error::InvalidGrid(_))));
}

#[test]
fn custom_candidate_is_checked_against_targets() {
    let g = Matrix::from_rows(&[
        [-2.0, 1.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    let scenario = FactorScenario::uniform(1.0, 3).unwrap();
    let path = cmc_core::GeneratorPath::constant(scenario.clone(), g, 1e-12).unwrap();
    let model = cmc_core::CmcModel::new(
        ProductStateSpace::new(vec![2, 2]).unwrap(),
        path,
        InitialLaw::point(4, 0).unwrap(),
    )
    .unwrap();
    let target = MarginalTarget {
        intensity: vec![Matrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]]); 3],
        initial: InitialLaw::point(2, 0).unwrap(),
    };
    let spec = MarginalSpec::new(scenario, vec![target.clone(), target]).unwrap();
    let cand = custom_candidate(model, spec.clone());
    assert!(validate_precopula(&cand, &spec, 1e-12).unwrap().strong_pass());
    assert!(matches!(decompose_weak_only(&cand), Err(Error::WrongKind { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conditional_independence_reproduces_random_marginals(
        a in generator(2, 2.0), b in generator(3, 2.0), w in prop::collection::vec(0.01..1.0f64, 5)
    ) {
        let l1 = InitialLaw::new(vec![w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])]).unwrap();
        let s: f64 = w[2..].iter().sum();
        let l2 = InitialLaw::new(w[2..].iter().map(|v| v / s).collect()).unwrap();
        let spec = MarginalSpec::constant(
            FactorScenario::uniform(1.0, 3).unwrap(),
            vec![(a, l1), (b, l2)],
        ).unwrap();
        let cand = build_conditional_independence(&spec, None).unwrap();
        let report = validate_precopula(&cand, &spec, 1e-12).unwrap();
        prop_assert!(report.strong_pass());
        prop_assert!(report.weak_pass() || report.weak_intensity_deviation <= 1e-9);
    }

    #[test]
    fn weak_only_decomposition_reconstructs(a in 0.1..3.0f64, b in 0.1..3.0f64, c in 0.1..3.0f64) {
        let cand = build_weak_only(&rate(1.0, 10, a), &rate(1.0, 10, b), &rate(1.0, 10, c)).unwrap();
        for (j, part) in decompose_weak_only(&cand).unwrap().iter().enumerate() {
            prop_assert!(part.reconstruct().max_abs_diff(cand.model.generator().cell(j)) <= 1e-10);
        }
    }

    #[test]
    fn common_jump_marginals_do_not_depend_on_c(a in 0.1..3.0f64, b in 0.1..3.0f64, frac in 0.0..1.0f64) {
        let c = frac * a.min(b);
        let cand = build_common_jump(&rate(1.0, 4, a), &rate(1.0, 4, b), &rate(1.0, 4, c), 1e-12).unwrap();
        let r = validate_precopula(&cand, &cand.targets, 1e-12).unwrap();
        prop_assert!(r.strong_pass());
    }
}
