mod common;

use cmc_core::consistency::{
    certify_weak_only, check_asm, check_law_match, check_sm, extract_strong_marginal, joint_switch_generator,
    joint_switch_generator_balanced, weak_marginal_intensity, Verdict,
};
use cmc_core::copulae::{build_common_jump, build_weak_only};
use cmc_core::model::uniform_grid;
use cmc_core::{kron_sum, CmcModel, FactorScenario, GeneratorPath, InitialLaw, Matrix, ProductStateSpace};
use common::{generator, rate};
use proptest::prelude::*;

fn joint_model(g: Matrix, initial: Vec<f64>) -> CmcModel {
    let path = GeneratorPath::constant(FactorScenario::uniform(1.0, 10).unwrap(), g, 1e-12).unwrap();
    CmcModel::new(ProductStateSpace::new(vec![2, 2]).unwrap(), path, InitialLaw::new(initial).unwrap()).unwrap()
}

#[test]
fn joint_switch_fails_algebraic_condition() {
    let (a, b) = (0.7, 1.3);
    let model = joint_model(joint_switch_generator(a, b), vec![0.5, 0.0, 0.0, 0.5]);
    for k in 0..2 {
        let report = check_asm(&model, k, 1e-12).unwrap();
        assert_eq!(report.asm, Verdict::Fail);
        assert!(report.marginal.is_none());
    }
    let report = check_asm(&model, 0, 1e-12).unwrap();
    let w = report.witnesses.iter().find(|w| w.x == [0, 0] && w.y_k == 1).unwrap();
    assert_eq!((w.lhs, w.rhs), (a, 0.0));
    assert_eq!(w.x_bar, vec![0, 1]);
}

#[test]
fn balanced_version_passes_with_expected_marginals() {
    let (a, b) = (0.7, 1.3);
    let model = joint_model(joint_switch_generator_balanced(a, b), vec![0.5, 0.0, 0.0, 0.5]);
    let want = Matrix::from_rows(&[[-a, a], [b, -b]]);
    for k in 0..2 {
        assert_eq!(check_asm(&model, k, 1e-12).unwrap().asm, Verdict::Pass);
        let m = extract_strong_marginal(&model, k).unwrap();
        assert!(m.cells.iter().all(|c| c.max_abs_diff(&want) <= 1e-15));
    }
}

#[test]
fn versions_induce_the_same_law_off_mixed_states() {
    let (a, b) = (0.7, 1.3);
    let law = vec![0.25, 0.0, 0.0, 0.75];
    let p1 = joint_model(joint_switch_generator(a, b), law.clone());
    let p2 = joint_model(joint_switch_generator_balanced(a, b), law);
    for t in [0.2, 0.5, 1.0] {
        let x = cmc_core::kolmogorov::distribution_at(&p1, t).unwrap();
        let y = cmc_core::kolmogorov::distribution_at(&p2, t).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-13));
    }
}

#[test]
fn support_condition_holds_off_mixed_states() {
    let model = joint_model(joint_switch_generator(1.0, 2.0), vec![0.3, 0.0, 0.0, 0.7]);
    for k in 0..2 {
        let r = check_sm(&model, k, 1e-12).unwrap();
        assert_eq!(r.sm, Verdict::Pass);
        let m = r.marginal.unwrap();
        assert_eq!(m.rate(0, 0, 1), 1.0);
        assert_eq!(m.rate(0, 1, 0), 2.0);
    }
}

#[test]
fn support_condition_fails_when_mixed_and_joint_states_are_charged() {
    // both (0,0) and (0,1) carry mass, and their aggregate rates differ
    let model = joint_model(joint_switch_generator(1.0, 2.0), vec![0.5, 0.5, 0.0, 0.0]);
    let r = check_sm(&model, 0, 1e-12).unwrap();
    assert_eq!(r.sm, Verdict::Fail);
    assert!(!r.witnesses.is_empty());
}

#[test]
fn frozen_mixed_state_is_trivially_consistent() {
    // started in (0,1) the chain never moves
    let model = joint_model(joint_switch_generator(1.0, 2.0), vec![0.0, 1.0, 0.0, 0.0]);
    assert_eq!(check_sm(&model, 0, 1e-12).unwrap().sm, Verdict::Pass);
}

#[test]
fn weak_only_is_certified_only_with_common_jumps() {
    let s_grid = uniform_grid(1.0, 4);
    let t_grid = uniform_grid(1.0, 4);
    let weak = build_weak_only(&rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0)).unwrap();
    for k in 0..2 {
        let v = certify_weak_only(&weak.model, k, &s_grid, &t_grid, 1e-8).unwrap();
        assert!(v.certified && v.weak_marginal_ok);
        assert!(v.witness.is_some());
    }
    let independent = build_common_jump(&rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0), &rate(1.0, 20, 0.0), 1e-12).unwrap();
    let v = certify_weak_only(&independent.model, 0, &s_grid, &t_grid, 1e-8).unwrap();
    assert!(!v.certified && v.max_deviation <= 1e-12);
}

#[test]
fn weak_only_fails_algebraic_condition_with_sum_witness() {
    let weak = build_weak_only(&rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0), &rate(1.0, 20, 1.0)).unwrap();
    let r = check_asm(&weak.model, 0, 1e-12).unwrap();
    assert_eq!(r.asm, Verdict::Fail);
    // from (0,0) component 0 leaves at a + c, from (0,1) at a
    let w = r.witnesses.iter().find(|w| w.x == [0, 0]).unwrap();
    assert_eq!((w.lhs, w.rhs), (2.0, 1.0));
}

#[test]
fn law_match_of_extracted_marginal() {
    let cj = build_common_jump(&rate(1.0, 20, 1.0), &rate(1.0, 20, 2.0), &rate(1.0, 20, 0.5), 1e-12).unwrap();
    let m = extract_strong_marginal(&cj.model, 1).unwrap();
    let target = &cj.targets.component(1);
    let r = check_law_match(&m.cells, &target.initial, &target.intensity, &target.initial, 1e-12).unwrap();
    assert!(r.passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn products_are_strongly_consistent(a in generator(2, 3.0), b in generator(3, 3.0)) {
        let g = kron_sum(&[a.clone(), b.clone()]).unwrap().into_matrix();
        let path = GeneratorPath::constant(FactorScenario::uniform(1.0, 4).unwrap(), g, 1e-12).unwrap();
        let model = CmcModel::new(
            ProductStateSpace::new(vec![2, 3]).unwrap(),
            path,
            InitialLaw::new(vec![1.0 / 6.0; 6]).unwrap(),
        ).unwrap();
        for (k, want) in [(0, &a), (1, &b)] {
            let asm = check_asm(&model, k, 1e-12).unwrap();
            prop_assert_eq!(asm.asm, Verdict::Pass);
            prop_assert_eq!(check_sm(&model, k, 1e-12).unwrap().sm, Verdict::Pass);
            let strong = asm.marginal.unwrap();
            let weak = weak_marginal_intensity(&model, k).unwrap();
            for (s, w) in strong.cells.iter().zip(&weak.cells) {
                prop_assert!(s.max_abs_diff(want) <= 1e-12);
                prop_assert!(w.max_abs_diff(s) <= 1e-9);
            }
        }
    }

    #[test]
    fn algebraic_pass_implies_support_pass(g in generator(4, 2.0), w in prop::collection::vec(0.01..1.0f64, 4)) {
        let total: f64 = w.iter().sum();
        let law: Vec<f64> = w.iter().map(|v| v / total).collect();
        let model = joint_model(g, law);
        for k in 0..2 {
            if check_asm(&model, k, 1e-12).unwrap().asm.is_pass() {
                prop_assert!(check_sm(&model, k, 1e-12).unwrap().sm.is_pass());
            }
            let sm = check_sm(&model, k, 1e-12).unwrap();
            prop_assert_eq!(sm.sm.is_pass(), sm.witnesses.is_empty());
        }
    }
}
