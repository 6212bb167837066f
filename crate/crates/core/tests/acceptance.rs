//! Acceptance run: one pass/fail line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use qcf_core::circuit::{xor_copy_gate, Circuit, Gate};
use qcf_core::classical::{classical_counterfactual, random_psm, random_query};
use qcf_core::counterfactual::{abduct, bell_demo, evaluate, CfQuery, CfValue, Evidence};
use qcf_core::instruments::Instrument;
use qcf_core::lift::{equivalence_on, joint_distance, lift, lifted_query};
use qcf_core::models::{bell, example1, example2};
use qcf_core::process::{born_raw, Assignment};
use qcf_core::qsm::{check_structural_compatibility, marginal_process, validate_qsm, Qsm};
use qcf_core::random::{random_instrument, random_qsm, random_state};
use qcf_core::tensor::{
    partial_trace, partial_transpose, permute_factors, tensor, CMatrix, LabeledOperator, SpaceLabel, Tolerance, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn lam(a: &str) -> Vec<String> {
    vec![a.to_string(), "*".to_string()]
}

fn prob(v: CfValue, what: &str) -> Result<f64, String> {
    v.prob().ok_or_else(|| format!("{what}: got *"))
}

/// Evidence a = + under setting "1" at A and B; antecedent a′ = −, consequent b′ = −.
fn chain_query(q: &Qsm, a_setting: &str) -> CfQuery {
    let mut settings = BTreeMap::new();
    settings.insert("A".to_string(), q.instrument("A", "1").unwrap().clone());
    settings.insert("B".to_string(), q.instrument("B", "1").unwrap().clone());
    let mut cf = settings.clone();
    cf.insert("A".to_string(), q.instrument("A", a_setting).unwrap().clone());
    CfQuery {
        evidence: Evidence {
            settings,
            outcomes: map(&[("A", "+")]),
        },
        cf_settings: cf,
        antecedent: map(&[("A", "-")]),
        consequent: map(&[("B", "-")]),
    }
}

fn chain_value(q: &Qsm, a_setting: &str, tol: &Tolerance) -> Result<CfValue, String> {
    evaluate(q, &chain_query(q, a_setting), tol)
        .map(|r| r.value)
        .map_err(|e| e.to_string())
}

fn criterion1(tol: &Tolerance) -> Check {
    let start = Instant::now();
    let q = example1();
    let post = abduct(&q, &chain_query(&q, "1").evidence, tol).map_err(|e| e.to_string())?;
    for l in ["0", "1"] {
        let p = post.get(&lam(l)).ok_or("missing posterior entry")?;
        ensure!((p - 0.5).abs() <= EPS, "P(λ={l}|a=+) = {p}");
    }
    for (setting, what) in [("1", "passive"), ("2", "do"), ("3", "active generic φ"), ("3-phi+", "active φ=+")] {
        let v = prob(chain_value(&q, setting, tol)?, what)?;
        ensure!((v - 1.0).abs() <= EPS, "{what}: {v}");
    }
    let v = chain_value(&q, "3-phi0", tol)?;
    ensure!(v.is_counterpossible(), "active φ=0: expected *, got {v}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "runtime {elapsed:?}");
    Ok(())
}

fn criterion2(tol: &Tolerance) -> Check {
    let q2 = example2();
    let post = abduct(&q2, &chain_query(&q2, "1").evidence, tol).map_err(|e| e.to_string())?;
    let (pp, pm) = (post.get(&lam("+")).unwrap_or(0.0), post.get(&lam("-")).unwrap_or(0.0));
    ensure!((pp - 1.0).abs() <= EPS && pm.abs() <= EPS, "posterior + {pp}, - {pm}");
    let passive = chain_value(&q2, "1", tol)?;
    ensure!(passive.is_counterpossible(), "passive: expected *, got {passive}");
    for (setting, what) in [("2", "do"), ("3", "active generic φ"), ("3-phi0", "active φ=0"), ("3-phi1", "active φ=1")] {
        let v = prob(chain_value(&q2, setting, tol)?, what)?;
        ensure!((v - 1.0).abs() <= EPS, "{what}: {v}");
    }
    let q1 = example1();
    let s1 = marginal_process(&q1).map_err(|e| e.to_string())?;
    let s2 = marginal_process(&q2).map_err(|e| e.to_string())?;
    let d = s1.distance(&s2).map_err(|e| e.to_string())?;
    ensure!(d <= EPS, "marginal processes differ by {d}");
    let passive1 = chain_value(&q1, "1", tol)?;
    ensure!(passive1 != passive, "passive queries agree across the two models");
    Ok(())
}

fn criterion3(tol: &Tolerance) -> Check {
    let start = Instant::now();
    let q = bell();
    let r = bell_demo(&q, tol).map_err(|e| e.to_string())?;
    for (v, want, what) in [
        (r.passive_q1, 1.0, "passive Q1"),
        (r.passive_q2, 0.0, "passive Q2"),
        (r.do_q1, 0.5, "do Q1"),
        (r.do_q2, 0.5, "do Q2"),
    ] {
        let p = prob(v, what)?;
        ensure!((p - want).abs() <= EPS, "{what}: {p}, expected {want}");
    }
    ensure!(!r.a_causes_b, "model has an A->B edge");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "runtime {elapsed:?}");
    Ok(())
}

/// Criteria 4 and 5 share one random suite of binary PSMs.
fn lift_suite(tol: &Tolerance) -> (Check, Check, usize) {
    const MODELS: usize = 200;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut eq: Check = Ok(());
    let mut joint: Check = Ok(());
    let mut worst_delta: f64 = 0.0;
    for k in 0..MODELS {
        let n = rng.random_range(2..=3);
        let psm = random_psm(&mut rng, n, 2, 1..=2);
        let query = random_query(&mut rng, &psm);
        let l = match lift(&psm) {
            Ok(l) => l,
            Err(e) => return (Err(format!("model {k}: lift failed: {e}")), Err("lift failed".into()), k),
        };
        if eq.is_ok() {
            eq = (|| {
                let classical = classical_counterfactual(&psm, &query).map_err(|e| e.to_string())?;
                let e = equivalence_on(&l, &query, tol, classical).map_err(|e| e.to_string())?;
                let delta = e.delta.ok_or_else(|| format!("model {k}: lifted value is *"))?;
                worst_delta = worst_delta.max(delta);
                ensure!(delta <= EPS, "model {k}: classical {classical}, quantum {}", e.quantum);
                lifted_query(&l, &query).map_err(|e| e.to_string())?;
                Ok(())
            })();
        }
        if joint.is_ok() {
            joint = (|| {
                let tv = joint_distance(&psm, &l).map_err(|e| e.to_string())?;
                ensure!(tv <= EPS, "model {k}: total variation {tv}");
                let rep = validate_qsm(&l.qsm, tol).map_err(|e| e.to_string())?;
                let iso = rep.isometry.residual();
                ensure!(iso <= EPS && rep.isometry_ok, "model {k}: isometry residual {iso}");
                let bad = rep.violations();
                ensure!(bad.is_empty(), "model {k}: no-influence violated: {:?}", bad.iter().map(|c| (&c.from, &c.to)).collect::<Vec<_>>());
                Ok(())
            })();
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        eq = Err(format!("runtime {elapsed:?}"));
    }
    println!("  lift suite: {MODELS} models, worst |delta| {worst_delta:.2e}, {:.1}s", elapsed.as_secs_f64());
    (eq, joint, MODELS)
}

fn random_op(rng: &mut ChaCha8Rng, factors: &[(&str, usize)]) -> LabeledOperator {
    let labels: Vec<SpaceLabel> = factors.iter().map(|(n, d)| SpaceLabel::new(*n, *d)).collect();
    let d: usize = factors.iter().map(|f| f.1).product();
    let m = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    LabeledOperator::new(labels, m).unwrap()
}

fn sorted_eigs(op: &LabeledOperator) -> Vec<f64> {
    let mut e = op.eigenvalues();
    e.sort_by(f64::total_cmp);
    e
}

fn algebra_identities(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..50 {
        let a = random_op(rng, &[("a", 2), ("b", 3)]);
        let b = random_op(rng, &[("c", 2)]);
        let ab = tensor(&a, &b).map_err(|e| e.to_string())?;
        ensure!((ab.trace() - a.trace() * b.trace()).norm() <= EPS, "trace of tensor");
        let pt = partial_trace(&ab, &["c"]).map_err(|e| e.to_string())?;
        ensure!(pt.approx_eq(&a.scale(b.trace()), EPS), "partial trace of tensor");
        let t = partial_transpose(&ab, &["a", "c"]).map_err(|e| e.to_string())?;
        let tt = partial_transpose(&t, &["a", "c"]).map_err(|e| e.to_string())?;
        ensure!(tt.approx_eq(&ab, EPS), "partial transpose involution");
        let x = partial_trace(&partial_transpose(&ab, &["a"]).map_err(|e| e.to_string())?, &["b"]).map_err(|e| e.to_string())?;
        let y = partial_transpose(&partial_trace(&ab, &["b"]).map_err(|e| e.to_string())?, &["a"]).map_err(|e| e.to_string())?;
        ensure!(x.approx_eq(&y, EPS), "partial transpose and trace commute");
        let h = ab.add(&ab.dagger()).map_err(|e| e.to_string())?;
        let p = permute_factors(&h, &["c", "a", "b"]).map_err(|e| e.to_string())?;
        let (e1, e2) = (sorted_eigs(&h), sorted_eigs(&p));
        ensure!(e1.iter().zip(&e2).all(|(x, y)| (x - y).abs() <= EPS), "permutation changes eigenvalues");
        ensure!(p.approx_eq(&h, EPS), "equality up to factor order");
    }
    Ok(())
}

/// Printed 8×8 matrix of the two CNOTs copying A onto both ancillas, factor order [L_B.cA, A, L_C.cA].
fn printed_copy_matrix() -> CMatrix {
    let image = [0, 1, 7, 6, 4, 5, 3, 2];
    let mut m = CMatrix::zeros(8, 8);
    for (col, row) in image.iter().enumerate() {
        m[(*row, col)] = C64::new(1.0, 0.0);
    }
    m
}

fn copy_identity(rng: &mut ChaCha8Rng) -> Check {
    let (x, a, z) = (SpaceLabel::new("L_B.cA", 2), SpaceLabel::new("A", 2), SpaceLabel::new("L_C.cA", 2));
    let circuit = Circuit::new(
        vec![x.clone(), a.clone(), z.clone()],
        vec![SpaceLabel::new("x", 2), SpaceLabel::new("a", 2), SpaceLabel::new("z", 2)],
        vec![
            xor_copy_gate("cnot C", a.clone(), z.clone()).map_err(|e| e.to_string())?,
            xor_copy_gate("cnot B", a.clone(), x.clone()).map_err(|e| e.to_string())?,
            Gate::wire(x.clone(), "x"),
            Gate::wire(a.clone(), "a"),
            Gate::wire(z.clone(), "z"),
        ],
    )
    .map_err(|e| e.to_string())?;
    let w = circuit.to_matrix().map_err(|e| e.to_string())?;
    ensure!((&w - printed_copy_matrix()).norm() <= EPS, "copy circuit differs from the printed matrix");
    let factors = vec![x.clone(), a.clone(), z.clone()];
    let out = |rx: &CMatrix, raz: &CMatrix| -> Result<(LabeledOperator, LabeledOperator), String> {
        let rho = rx.kronecker(raz);
        let o = LabeledOperator::new(factors.clone(), &w * rho * w.adjoint()).map_err(|e| e.to_string())?;
        let c = partial_trace(&o, &["L_B.cA", "A"]).map_err(|e| e.to_string())?;
        let b = partial_trace(&o, &["A", "L_C.cA"]).map_err(|e| e.to_string())?;
        Ok((b, c))
    };
    for _ in 0..50 {
        let (rx1, rx2) = (random_state(rng, 2, 2), random_state(rng, 2, 1));
        let rank = rng.random_range(1..=4);
        let raz = random_state(rng, 4, rank);
        let (_, c1) = out(&rx1, &raz)?;
        let (_, c2) = out(&rx2, &raz)?;
        ensure!(c1.approx_eq(&c2, EPS), "ancilla of B influences C");
        // Direct evaluation: ρ_C = [[1−f−k, b+l*], [b*+l, f+k]] in the entries of ρ_{A L_C.cA}.
        let (b, f, k, l) = (raz[(0, 1)], raz[(1, 1)].re, raz[(2, 2)].re, raz[(2, 3)]);
        let mut expect = CMatrix::zeros(2, 2);
        expect[(0, 0)] = C64::new(1.0 - f - k, 0.0);
        expect[(0, 1)] = b + l.conj();
        expect[(1, 0)] = b.conj() + l;
        expect[(1, 1)] = C64::new(f + k, 0.0);
        ensure!((c1.data() - &expect).norm() <= EPS, "closed form for the C ancilla");
        let ra = random_state(rng, 2, 2);
        let (s1, s2) = (random_state(rng, 2, 2), random_state(rng, 2, 1));
        let (b1, _) = out(&rx1, &ra.kronecker(&s1))?;
        let (b2, _) = out(&rx1, &ra.kronecker(&s2))?;
        ensure!(b1.approx_eq(&b2, EPS), "ancilla of C influences B");
    }
    Ok(())
}

fn outcome_combos(instrs: &[&Instrument]) -> Vec<Vec<usize>> {
    let mut combos = vec![vec![]];
    for ins in instrs {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..ins.elements.len()).map(move |k| {
                    let mut c = c.clone();
                    c.push(k);
                    c
                })
            })
            .collect();
    }
    combos
}

fn criterion6(tol: &Tolerance) -> Check {
    const MODELS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compat_checked = 0;
    for m in 0..MODELS {
        let n = 1 + m % 3;
        let q = random_qsm(&mut rng, n, 0.6);
        let sigma = marginal_process(&q).map_err(|e| e.to_string())?;
        let fresh: Vec<Instrument> = q
            .endogenous
            .iter()
            .map(|nd| {
                let k = rng.random_range(2..=3);
                random_instrument(&mut rng, nd, "fresh", k)
            })
            .collect();
        for set in [q.instruments.iter().collect::<Vec<_>>(), fresh.iter().collect()] {
            let mut total = 0.0;
            for combo in outcome_combos(&set) {
                let chosen: BTreeMap<String, Assignment<'_>> = q
                    .endogenous
                    .iter()
                    .zip(&set)
                    .zip(&combo)
                    .map(|((nd, ins), &k)| (nd.name.clone(), Assignment::Element(&ins.elements[k])))
                    .collect();
                total += born_raw(&sigma, &chosen).map_err(|e| e.to_string())?;
            }
            ensure!((total - 1.0).abs() <= EPS, "model {m}: outcome probabilities sum to {total}");
        }
        let mut dags = vec![q.dag.clone()];
        dags.extend(q.dag.edges.iter().map(|(a, b)| q.dag.without_edge(a, b)));
        for (k, dag) in dags.iter().enumerate() {
            let rep = check_structural_compatibility(&sigma, dag, &q, tol).map_err(|e| e.to_string())?;
            ensure!(rep.markov == rep.structural, "model {m}, graph {k}: markov {} structural {}", rep.markov, rep.structural);
            ensure!(k > 0 || rep.markov, "model {m}: own graph not compatible ({:?})", rep.residuals);
            ensure!(k == 0 || !rep.markov, "model {m}: compatible with graph missing an edge");
            compat_checked += 1;
        }
    }
    algebra_identities(&mut rng)?;
    copy_identity(&mut rng)?;
    println!("  property suites: {MODELS} random models, {compat_checked} compatibility checks");
    Ok(())
}

/// Consistency of "*" with the per-λ terms, on cases known to trigger and on random lifted passive queries.
fn criterion7(tol: &Tolerance) -> Check {
    let mut cases: Vec<(String, Qsm, CfQuery, bool)> = vec![
        ("example2 passive".into(), example2(), chain_query(&example2(), "1"), true),
        ("example1 active φ=0".into(), example1(), chain_query(&example1(), "3-phi0"), true),
        ("example1 active φ=1".into(), example1(), chain_query(&example1(), "3-phi1"), true),
        ("example1 passive".into(), example1(), chain_query(&example1(), "1"), false),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut k = 0;
    while k < 20 {
        let psm = random_psm(&mut rng, 2, 2, 1..=2);
        let mut query = random_query(&mut rng, &psm);
        let (node, value) = query.antecedent.iter().next().map(|(a, b)| (a.clone(), b.clone())).unwrap();
        let flipped = if value == "0" { "1" } else { "0" };
        query.evidence.insert(node.clone(), flipped.to_string());
        if classical_counterfactual(&psm, &query).is_err() {
            continue;
        }
        let l = lift(&psm).map_err(|e| e.to_string())?;
        let mut cq = lifted_query(&l, &query).map_err(|e| e.to_string())?;
        cq.cf_settings = cq.evidence.settings.clone();
        cases.push((format!("lifted passive {k}"), l.qsm, cq, true));
        k += 1;
    }
    let mut triggered = 0;
    for (name, q, query, expect_star) in &cases {
        let r = evaluate(q, query, tol).map_err(|e| format!("{name}: {e}"))?;
        let expected: Vec<String> = r
            .terms
            .iter()
            .filter(|t| t.posterior > tol.eps_prob && t.denominator <= tol.eps_prob)
            .map(|t| t.lambda.clone())
            .collect();
        for t in r.terms.iter().filter(|t| !t.skipped && t.denominator <= tol.eps_prob) {
            ensure!(t.value.is_counterpossible(), "{name}: λ {} has zero denominator but value {}", t.lambda, t.value);
        }
        ensure!(r.triggers == expected, "{name}: triggers {:?}, expected {:?}", r.triggers, expected);
        ensure!(r.value.is_counterpossible() == !expected.is_empty(), "{name}: value {}", r.value);
        ensure!(r.value.is_counterpossible() == *expect_star, "{name}: value {}", r.value);
        triggered += r.triggers.len();
    }
    println!("  counterpossibles: {} cases, {triggered} triggering λ", cases.len());
    Ok(())
}

fn main() {
    let tol = Tolerance::default();
    let mut results: Vec<(usize, &str, Check, Duration)> = Vec::new();
    let timed = |f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = f();
        (r, t.elapsed())
    };
    let (r, d) = timed(&|| criterion1(&tol));
    results.push((1, "example 1 reproduction", r, d));
    let (r, d) = timed(&|| criterion2(&tol));
    results.push((2, "example 2 reproduction", r, d));
    let (r, d) = timed(&|| criterion3(&tol));
    results.push((3, "Bell scenario", r, d));
    let t = Instant::now();
    let (eq, joint, _) = lift_suite(&tol);
    let d = t.elapsed();
    results.push((4, "classical vs lifted counterfactuals", eq, d));
    results.push((5, "lifted joint, isometry and no-influence", joint, d));
    let (r, d) = timed(&|| criterion6(&tol));
    results.push((6, "property suites", r, d));
    let (r, d) = timed(&|| criterion7(&tol));
    results.push((7, "counterpossible semantics", r, d));
    let mut failed = 0;
    for (n, name, r, d) in &results {
        match r {
            Ok(()) => println!("criterion {n} ({name}): PASS [{:.2}s]", d.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{:.2}s] {e}", d.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
