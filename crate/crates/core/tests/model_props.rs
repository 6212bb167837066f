//! Model-level properties on random quantum and classical models.

use std::collections::BTreeMap;

use proptest::prelude::*;
use qcf_core::classical::random_psm;
use qcf_core::counterfactual::{classify, evaluate, CfQuery, Evidence};
use qcf_core::instruments::make_do_instrument;
use qcf_core::lift::{binarize, lift, plan_copies, reversify};
use qcf_core::process::{born_raw, check_no_influence, Assignment};
use qcf_core::qsm::{check_structural_compatibility, conditional_process, marginal_process, validate_qsm};
use qcf_core::random::{random_qsm, random_state};
use qcf_core::tensor::Tolerance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn born_rule_is_normalized(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.6);
        let sigma = marginal_process(&q).unwrap();
        let mut total = 0.0;
        for k in 0..(1usize << n) {
            let chosen: BTreeMap<String, Assignment<'_>> = q
                .instruments
                .iter()
                .enumerate()
                .map(|(i, ins)| (ins.node.name.clone(), Assignment::Element(&ins.elements[(k >> i) & 1])))
                .collect();
            let p = born_raw(&sigma, &chosen).unwrap();
            prop_assert!(p >= -EPS);
            total += p;
        }
        prop_assert!((total - 1.0).abs() <= EPS, "sum {}", total);
    }

    #[test]
    fn marginal_is_mixture_of_conditionals(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.6);
        let sigma = marginal_process(&q).unwrap();
        let mut acc: Option<qcf_core::tensor::LabeledOperator> = None;
        for (lambda, p) in q.lambda_assignments() {
            let s = conditional_process(&q, &lambda).unwrap().op.scale_real(p);
            acc = Some(match acc {
                None => s,
                Some(a) => a.add(&s).unwrap(),
            });
        }
        prop_assert!(acc.unwrap().approx_eq(&sigma.op, EPS));
    }

    #[test]
    fn markov_iff_structural(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.6);
        let tol = Tolerance::default();
        let sigma = marginal_process(&q).unwrap();
        let own = check_structural_compatibility(&sigma, &q.dag, &q, &tol).unwrap();
        prop_assert!(own.markov && own.structural, "{:?}", own.residuals);
        for (a, b) in &q.dag.edges {
            let r = check_structural_compatibility(&sigma, &q.dag.without_edge(a, b), &q, &tol).unwrap();
            prop_assert_eq!(r.markov, r.structural);
        }
    }

    #[test]
    fn influence_routes_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, 2, 0.5);
        let tol = Tolerance::default();
        let choi = q.circuit.choi().unwrap();
        let outputs: Vec<&str> = q.circuit.outputs.iter().map(|l| l.name.as_str()).collect();
        for from in &q.circuit.inputs {
            for to in q.endogenous.iter().map(|n| n.in_space.name.as_str()) {
                let cj = check_no_influence(&choi, &outputs, &[from.name.as_str()], &[to], &tol).unwrap();
                let heis = q.circuit.influence_residual(&from.name, to).unwrap();
                prop_assert_eq!(cj.holds, heis <= tol.eps_trace, "{} -> {}: {} vs {}", from.name, to, cj.residual, heis);
            }
        }
    }

    #[test]
    fn random_models_validate(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.6);
        let rep = validate_qsm(&q, &Tolerance::default()).unwrap();
        prop_assert!(rep.valid);
    }

    #[test]
    fn counterfactuals_are_probabilities_or_star(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.7);
        let tol = Tolerance::default();
        let settings: BTreeMap<_, _> = q.instruments.iter().map(|i| (i.node.name.clone(), i.clone())).collect();
        let names = q.node_names();
        let first = names[0].clone();
        let last = names[n - 1].clone();
        let mut cf = settings.clone();
        let node = q.node(&first).unwrap();
        let rho = random_state(&mut rng, node.dout(), 1);
        cf.insert(first.clone(), make_do_instrument(node, "1", &rho).unwrap());
        for (cf_settings, do_like) in [(settings.clone(), false), (cf, true)] {
            let query = CfQuery {
                evidence: Evidence {
                    settings: settings.clone(),
                    outcomes: [(last.clone(), "0".to_string())].into_iter().collect(),
                },
                cf_settings,
                antecedent: [(first.clone(), "1".to_string())].into_iter().collect(),
                consequent: [(last.clone(), "1".to_string())].into_iter().collect(),
            };
            prop_assert_eq!(classify(&query, &tol).is_active(), do_like);
            let r = evaluate(&q, &query, &tol).unwrap();
            let total: f64 = r.posterior.entries.iter().map(|e| e.posterior).sum();
            prop_assert!((total - 1.0).abs() <= EPS);
            if let Some(p) = r.value.prob() {
                prop_assert!((0.0..=1.0).contains(&p));
            }
            prop_assert_eq!(r.value.is_counterpossible(), !r.triggers.is_empty());
        }
    }

    #[test]
    fn reversible_extension_invariants(seed in any::<u64>(), n in 1usize..=3, card in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psm = random_psm(&mut rng, n, card, 1..=3);
        let b = binarize(&psm.csm).unwrap();
        for v in &b.csm.endogenous {
            prop_assert!(v.card().is_power_of_two());
        }
        let r = reversify(&b).unwrap();
        let csm = r.csm();
        for (i, node) in r.nodes.iter().enumerate() {
            let base = csm.exogenous[i].card() * csm.parent_card(i);
            prop_assert!(node.is_bijection());
            prop_assert!(node.s_card.is_power_of_two() && node.s_card >= node.max_preimage);
            prop_assert_eq!(node.t_card * base, csm.endogenous[i].card() * node.s_card);
            for d in 0..base {
                prop_assert_eq!(node.table[d] / node.s_card, csm.tables[i][d]);
            }
        }
        let plan = plan_copies(&r);
        for (i, nc) in plan.nodes.iter().enumerate() {
            let bits = csm.endogenous[i].card().trailing_zeros() as usize;
            prop_assert_eq!(nc.gates.len(), nc.children.len() * bits);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lifted_models_validate(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psm = random_psm(&mut rng, n, 2, 1..=2);
        let l = lift(&psm).unwrap();
        let rep = validate_qsm(&l.qsm, &Tolerance::default()).unwrap();
        prop_assert!(rep.valid, "{:?}", rep.violations());
    }
}
