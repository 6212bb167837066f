//! Finite classical structural causal models with explicit function tables,
//! do-surgery, and counterfactuals by exhaustive enumeration of u.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::process::{Dag, ProcessError};

/// Enumeration guard for exogenous and endogenous state spaces.
pub const ENUMERATION_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassicalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{var}` has no value `{value}`")]
    UnknownValue { var: String, value: String },
    #[error("evidence has probability zero")]
    ZeroEvidenceProbability,
    #[error("state space of size {0} exceeds the enumeration limit")]
    TooLarge(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] ProcessError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        Variable {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Values "0".."n-1".
    pub fn numeric(name: impl Into<String>, n: usize) -> Self {
        Variable {
            name: name.into(),
            values: (0..n).map(|v| v.to_string()).collect(),
        }
    }

    pub fn card(&self) -> usize {
        self.values.len()
    }

    pub fn index(&self, value: &str) -> Result<usize, ClassicalError> {
        self.values.iter().position(|v| v == value).ok_or_else(|| ClassicalError::UnknownValue {
            var: self.name.clone(),
            value: value.to_string(),
        })
    }
}

/// v_i = f_i(pa_i, u_i). `tables[i][u·|Pa_i| + pa]` with parents in mixed radix,
/// first parent most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalCsm {
    pub endogenous: Vec<Variable>,
    /// `exogenous[i]` is U_i.
    pub exogenous: Vec<Variable>,
    pub parents: Vec<Vec<usize>>,
    pub tables: Vec<Vec<usize>>,
    pub dag: Dag,
    order: Vec<usize>,
}

impl ClassicalCsm {
    pub fn new(
        endogenous: Vec<Variable>,
        exogenous: Vec<Variable>,
        parents: Vec<Vec<usize>>,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self, ClassicalError> {
        let n = endogenous.len();
        if exogenous.len() != n || parents.len() != n || tables.len() != n {
            return Err(ClassicalError::Invalid("one exogenous variable, parent list and table per node".into()));
        }
        for v in endogenous.iter().chain(&exogenous) {
            if v.values.is_empty() {
                return Err(ClassicalError::Invalid(format!("`{}` has no values", v.name)));
            }
        }
        let mut names: Vec<&str> = endogenous.iter().chain(&exogenous).map(|v| v.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ClassicalError::Invalid("variable names must be distinct".into()));
        }
        let mut edges = Vec::new();
        for (i, ps) in parents.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                if p >= n || p == i || ps[..k].contains(&p) {
                    return Err(ClassicalError::Invalid(format!("bad parent list for `{}`", endogenous[i].name)));
                }
                edges.push((endogenous[p].name.clone(), endogenous[i].name.clone()));
            }
        }
        let dag = Dag::new(endogenous.iter().map(|v| v.name.clone()).collect(), edges)?;
        for i in 0..n {
            let pa: usize = parents[i].iter().map(|&p| endogenous[p].card()).product();
            let want = exogenous[i].card() * pa;
            if tables[i].len() != want {
                return Err(ClassicalError::Invalid(format!(
                    "table for `{}` has {} rows, domain has {want}",
                    endogenous[i].name,
                    tables[i].len()
                )));
            }
            if let Some(bad) = tables[i].iter().find(|&&v| v >= endogenous[i].card()) {
                return Err(ClassicalError::Invalid(format!("table for `{}` outputs {bad}", endogenous[i].name)));
            }
        }
        let order = dag
            .topological_order()?
            .iter()
            .map(|name| endogenous.iter().position(|v| v.name == *name).expect("dag node"))
            .collect();
        Ok(ClassicalCsm {
            endogenous,
            exogenous,
            parents,
            tables,
            dag,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.endogenous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endogenous.is_empty()
    }

    pub fn var_index(&self, name: &str) -> Result<usize, ClassicalError> {
        self.endogenous
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ClassicalError::UnknownVariable(name.to_string()))
    }

    pub fn parent_card(&self, i: usize) -> usize {
        self.parents[i].iter().map(|&p| self.endogenous[p].card()).product()
    }

    /// Mixed-radix index of the parent values of node `i` within `v`.
    pub fn parent_index(&self, i: usize, v: &[usize]) -> usize {
        self.parents[i].iter().fold(0, |acc, &p| acc * self.endogenous[p].card() + v[p])
    }

    pub fn eval(&self, i: usize, u: usize, pa: usize) -> usize {
        self.tables[i][u * self.parent_card(i) + pa]
    }

    pub fn exogenous_space(&self) -> usize {
        self.exogenous.iter().map(Variable::card).product()
    }

    pub fn endogenous_space(&self) -> usize {
        self.endogenous.iter().map(Variable::card).product()
    }

    /// Decode a mixed-radix exogenous index, first variable most significant.
    pub fn decode_u(&self, mut idx: usize) -> Vec<usize> {
        let mut u = vec![0; self.len()];
        for i in (0..self.len()).rev() {
            let c = self.exogenous[i].card();
            u[i] = idx % c;
            idx /= c;
        }
        u
    }

    pub fn encode_v(&self, v: &[usize]) -> usize {
        v.iter().zip(&self.endogenous).fold(0, |acc, (x, var)| acc * var.card() + x)
    }
}

/// The unique solution v(u) by evaluation in topological order.
pub fn solve(csm: &ClassicalCsm, u: &[usize]) -> Vec<usize> {
    let mut v = vec![0; csm.len()];
    for &i in &csm.order {
        let pa = csm.parent_index(i, &v);
        v[i] = csm.eval(i, u[i], pa);
    }
    v
}

/// Submodel M_x: the functions at X become the constants x and lose their parents.
pub fn do_submodel(csm: &ClassicalCsm, x: &BTreeMap<String, String>) -> Result<ClassicalCsm, ClassicalError> {
    let mut parents = csm.parents.clone();
    let mut tables = csm.tables.clone();
    for (name, value) in x {
        let i = csm.var_index(name)?;
        let val = csm.endogenous[i].index(value)?;
        parents[i].clear();
        tables[i] = vec![val; csm.exogenous[i].card()];
    }
    ClassicalCsm::new(csm.endogenous.clone(), csm.exogenous.clone(), parents, tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPsm {
    pub csm: ClassicalCsm,
    /// Independent P(u_i) per exogenous variable.
    pub priors: Vec<Vec<f64>>,
    /// Optional joint P(u) over the mixed-radix exogenous index; overrides `priors`.
    pub joint: Option<Vec<f64>>,
}

impl ClassicalPsm {
    pub fn new(csm: ClassicalCsm, priors: Vec<Vec<f64>>, joint: Option<Vec<f64>>) -> Result<Self, ClassicalError> {
        if priors.len() != csm.len() {
            return Err(ClassicalError::Invalid("one prior per exogenous variable".into()));
        }
        for (p, u) in priors.iter().zip(&csm.exogenous) {
            check_distribution(p, u.card(), &u.name)?;
        }
        if let Some(j) = &joint {
            check_distribution(j, csm.exogenous_space(), "joint prior")?;
        }
        Ok(ClassicalPsm { csm, priors, joint })
    }

    pub fn prior(&self, u: &[usize]) -> f64 {
        match &self.joint {
            Some(j) => j[u.iter().zip(&self.csm.exogenous).fold(0, |acc, (x, var)| acc * var.card() + x)],
            None => u.iter().zip(&self.priors).map(|(&x, p)| p[x]).product(),
        }
    }

    /// (u, P(u)) for every u with nonzero prior.
    pub fn support(&self) -> Result<Vec<(Vec<usize>, f64)>, ClassicalError> {
        let total = self.csm.exogenous_space();
        if total > ENUMERATION_LIMIT {
            return Err(ClassicalError::TooLarge(total));
        }
        Ok((0..total)
            .map(|k| self.csm.decode_u(k))
            .map(|u| {
                let p = self.prior(&u);
                (u, p)
            })
            .filter(|(_, p)| *p > 0.0)
            .collect())
    }
}

fn check_distribution(p: &[f64], n: usize, what: &str) -> Result<(), ClassicalError> {
    if p.len() != n {
        return Err(ClassicalError::Invalid(format!("{what}: {} probabilities for {n} values", p.len())));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(ClassicalError::Invalid(format!("{what}: negative or non-finite probability")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(ClassicalError::Invalid(format!("{what}: probabilities sum to {s}")));
    }
    Ok(())
}

/// Evidence E = e, antecedent X = x, consequent Y = y, all by value label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassicalQuery {
    pub evidence: BTreeMap<String, String>,
    pub antecedent: BTreeMap<String, String>,
    pub consequent: BTreeMap<String, String>,
}

fn resolve(csm: &ClassicalCsm, m: &BTreeMap<String, String>) -> Result<Vec<(usize, usize)>, ClassicalError> {
    m.iter()
        .map(|(k, v)| {
            let i = csm.var_index(k)?;
            Ok((i, csm.endogenous[i].index(v)?))
        })
        .collect()
}

/// P(Y_x = y | E = e): abduction over u, surgery at X, prediction.
pub fn classical_counterfactual(psm: &ClassicalPsm, query: &ClassicalQuery) -> Result<f64, ClassicalError> {
    let csm = &psm.csm;
    let e = resolve(csm, &query.evidence)?;
    let y = resolve(csm, &query.consequent)?;
    resolve(csm, &query.antecedent)?;
    let sub = do_submodel(csm, &query.antecedent)?;
    let (mut pe, mut pey) = (0.0, 0.0);
    for (u, p) in psm.support()? {
        let v = solve(csm, &u);
        if e.iter().all(|&(i, x)| v[i] == x) {
            pe += p;
            let vx = solve(&sub, &u);
            if y.iter().all(|&(i, x)| vx[i] == x) {
                pey += p;
            }
        }
    }
    if pe <= 0.0 {
        return Err(ClassicalError::ZeroEvidenceProbability);
    }
    Ok(pey / pe)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    /// Cardinalities of the endogenous variables, first most significant.
    pub dims: Vec<usize>,
    pub probs: Vec<f64>,
}

impl JointTable {
    pub fn get(&self, v: &[usize]) -> f64 {
        self.probs[v.iter().zip(&self.dims).fold(0, |acc, (x, d)| acc * d + x)]
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut v = vec![0; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            v[i] = idx % self.dims[i];
            idx /= self.dims[i];
        }
        v
    }

    pub fn total_variation(&self, other: &JointTable) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// P(v) = Σ_{u : v(u) = v} P(u).
pub fn brute_force_joint(psm: &ClassicalPsm) -> Result<JointTable, ClassicalError> {
    let csm = &psm.csm;
    let size = csm.endogenous_space();
    if size > ENUMERATION_LIMIT {
        return Err(ClassicalError::TooLarge(size));
    }
    let mut probs = vec![0.0; size];
    for (u, p) in psm.support()? {
        probs[csm.encode_v(&solve(csm, &u))] += p;
    }
    Ok(JointTable {
        dims: csm.endogenous.iter().map(Variable::card).collect(),
        probs,
    })
}

/// Random PSM over `n` variables of cardinality `card`, exogenous cardinalities in
/// `u_cards`, edges j → i (j < i) with probability ½, random tables and priors.
pub fn random_psm<R: Rng + ?Sized>(rng: &mut R, n: usize, card: usize, u_cards: std::ops::RangeInclusive<usize>) -> ClassicalPsm {
    let endogenous: Vec<Variable> = (0..n).map(|i| Variable::numeric(format!("V{i}"), card)).collect();
    let exogenous: Vec<Variable> = (0..n)
        .map(|i| Variable::numeric(format!("U{i}"), rng.random_range(u_cards.clone())))
        .collect();
    let parents: Vec<Vec<usize>> = (0..n).map(|i| (0..i).filter(|_| rng.random_bool(0.5)).collect()).collect();
    let tables: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let rows = exogenous[i].card() * card.pow(parents[i].len() as u32);
            (0..rows).map(|_| rng.random_range(0..card)).collect()
        })
        .collect();
    let priors: Vec<Vec<f64>> = exogenous
        .iter()
        .map(|u| {
            let w: Vec<f64> = (0..u.card()).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let csm = ClassicalCsm::new(endogenous, exogenous, parents, tables).expect("generated model is valid");
    ClassicalPsm::new(csm, priors, None).expect("generated priors are valid")
}

/// Random query with attainable evidence: a sampled world's values on a random
/// subset of nodes, one antecedent node and one distinct consequent node.
pub fn random_query<R: Rng + ?Sized>(rng: &mut R, psm: &ClassicalPsm) -> ClassicalQuery {
    let csm = &psm.csm;
    let n = csm.len();
    assert!(n >= 2, "queries need two variables");
    let support = psm.support().expect("small model");
    let (u, _) = &support[rng.random_range(0..support.len())];
    let v = solve(csm, u);
    let mut evidence = BTreeMap::new();
    for (var, &x) in csm.endogenous.iter().zip(&v) {
        if rng.random_bool(0.5) {
            evidence.insert(var.name.clone(), var.values[x].clone());
        }
    }
    let x = rng.random_range(0..n);
    let mut y = rng.random_range(0..n - 1);
    if y >= x {
        y += 1;
    }
    let label = |i: usize, rng: &mut R| {
        let var = &csm.endogenous[i];
        (var.name.clone(), var.values[rng.random_range(0..var.card())].clone())
    };
    ClassicalQuery {
        evidence,
        antecedent: [label(x, rng)].into_iter().collect(),
        consequent: [label(y, rng)].into_iter().collect(),
    }
}

/// v1 = u1, v2 = v1 ⊕ u2 with uniform binary priors.
pub fn xor_chain() -> ClassicalPsm {
    let csm = ClassicalCsm::new(
        vec![Variable::numeric("V1", 2), Variable::numeric("V2", 2)],
        vec![Variable::numeric("U1", 2), Variable::numeric("U2", 2)],
        vec![vec![], vec![0]],
        vec![vec![0, 1], vec![0, 1, 1, 0]],
    )
    .expect("valid");
    ClassicalPsm::new(csm, vec![vec![0.5, 0.5], vec![0.5, 0.5]], None).expect("valid")
}

/// A → B, A → C with a = u_A, b = a ⊕ u_B, c = a ∧ u_C.
pub fn fork_psm() -> ClassicalPsm {
    let csm = ClassicalCsm::new(
        vec![Variable::numeric("A", 2), Variable::numeric("B", 2), Variable::numeric("C", 2)],
        vec![Variable::numeric("U_A", 2), Variable::numeric("U_B", 2), Variable::numeric("U_C", 2)],
        vec![vec![], vec![0], vec![0]],
        vec![vec![0, 1], vec![0, 1, 1, 0], vec![0, 0, 0, 1]],
    )
    .expect("valid");
    ClassicalPsm::new(csm, vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.4, 0.6]], None).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn solve_examples() {
        let m = xor_chain();
        assert_eq!(solve(&m.csm, &[1, 1]), vec![1, 0]);
        let one = ClassicalCsm::new(
            vec![Variable::numeric("V", 3)],
            vec![Variable::numeric("U", 3)],
            vec![vec![]],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        for u in 0..3 {
            assert_eq!(solve(&one, &[u]), vec![u]);
        }
        let constant = do_submodel(&m.csm, &map(&[("V1", "1"), ("V2", "0")])).unwrap();
        for k in 0..4 {
            assert_eq!(solve(&constant, &m.csm.decode_u(k)), vec![1, 0]);
        }
        assert!(constant.dag.edges.is_empty());
    }

    #[test]
    fn surgery_removes_incoming_edges_only() {
        let m = xor_chain();
        let root = do_submodel(&m.csm, &map(&[("V1", "0")])).unwrap();
        assert!(root.dag.has_edge("V1", "V2"));
        let cut = do_submodel(&m.csm, &map(&[("V2", "1")])).unwrap();
        assert!(!cut.dag.has_edge("V1", "V2"));
        assert!(matches!(
            do_submodel(&m.csm, &map(&[("W", "1")])),
            Err(ClassicalError::UnknownVariable(_))
        ));
    }

    #[test]
    fn xor_counterfactual() {
        // Evidence v1 = v2 = 0 forces u2 = 0, so under do(v1 = 1), v2 = 1.
        let q = ClassicalQuery {
            evidence: map(&[("V1", "0"), ("V2", "0")]),
            antecedent: map(&[("V1", "1")]),
            consequent: map(&[("V2", "1")]),
        };
        assert_eq!(classical_counterfactual(&xor_chain(), &q).unwrap(), 1.0);
        let none = ClassicalQuery {
            evidence: BTreeMap::new(),
            antecedent: map(&[("V1", "1")]),
            consequent: map(&[("V2", "1")]),
        };
        assert!((classical_counterfactual(&xor_chain(), &none).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn impossible_evidence_is_an_error() {
        let m = xor_chain();
        let mut priors = m.priors.clone();
        priors[0] = vec![1.0, 0.0];
        let psm = ClassicalPsm::new(m.csm.clone(), priors, None).unwrap();
        let q = ClassicalQuery {
            evidence: map(&[("V1", "1")]),
            antecedent: map(&[("V1", "0")]),
            consequent: map(&[("V2", "0")]),
        };
        assert_eq!(classical_counterfactual(&psm, &q), Err(ClassicalError::ZeroEvidenceProbability));
    }

    #[test]
    fn joints() {
        let j = brute_force_joint(&xor_chain()).unwrap();
        for p in &j.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let m = xor_chain();
        let psm = ClassicalPsm::new(m.csm.clone(), vec![vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        let j = brute_force_joint(&psm).unwrap();
        assert_eq!(j.get(&[1, 1]), 1.0);
        assert!((j.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    /// ∏_i P(v_i | pa_i) with P(v_i | pa_i) = Σ_{u_i} P(u_i) [f_i(pa_i, u_i) = v_i].
    fn markov_product(psm: &ClassicalPsm, v: &[usize]) -> f64 {
        let csm = &psm.csm;
        (0..csm.len())
            .map(|i| {
                let pa = csm.parent_index(i, v);
                (0..csm.exogenous[i].card())
                    .filter(|&u| csm.eval(i, u, pa) == v[i])
                    .map(|u| psm.priors[i][u])
                    .sum::<f64>()
            })
            .product()
    }

    #[test]
    fn joint_matches_markov_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..=4);
            let card = rng.random_range(2..=3);
            let psm = random_psm(&mut rng, n, card, 1..=3);
            let j = brute_force_joint(&psm).unwrap();
            for k in 0..j.probs.len() {
                let v = j.decode(k);
                assert!((j.probs[k] - markov_product(&psm, &v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let psm = random_psm(&mut rng, 3, 2, 1..=3);
            let x = map(&[("V1", "1")]);
            let sub = ClassicalPsm::new(do_submodel(&psm.csm, &x).unwrap(), psm.priors.clone(), None).unwrap();
            let j = brute_force_joint(&sub).unwrap();
            for k in 0..j.probs.len() {
                let v = j.decode(k);
                let expected = if v[1] == 1 {
                    (0..3).filter(|&i| i != 1).map(|i| {
                        let pa = psm.csm.parent_index(i, &v);
                        (0..psm.csm.exogenous[i].card())
                            .filter(|&u| psm.csm.eval(i, u, pa) == v[i])
                            .map(|u| psm.priors[i][u])
                            .sum::<f64>()
                    }).product()
                } else {
                    0.0
                };
                assert!((j.probs[k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chain_factual_antecedent_is_ordinary_conditional() {
        // V1 → V2 with no confounding: P(V2_{v1} = y) = P(y | v1).
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let mut psm = random_psm(&mut rng, 2, 2, 2..=3);
            if psm.csm.parents[1].is_empty() {
                let csm = &psm.csm;
                let tables = vec![csm.tables[0].clone(), (0..csm.exogenous[1].card() * 2).map(|_| rng.random_range(0..2)).collect()];
                let c = ClassicalCsm::new(csm.endogenous.clone(), csm.exogenous.clone(), vec![vec![], vec![0]], tables).unwrap();
                psm = ClassicalPsm::new(c, psm.priors.clone(), None).unwrap();
            }
            let j = brute_force_joint(&psm).unwrap();
            for x in 0..2 {
                let px: f64 = (0..2).map(|y| j.get(&[x, y])).sum();
                if px <= 0.0 {
                    continue;
                }
                let q = ClassicalQuery {
                    evidence: BTreeMap::new(),
                    antecedent: map(&[("V0", &x.to_string())]),
                    consequent: map(&[("V1", "1")]),
                };
                let cf = classical_counterfactual(&psm, &q).unwrap();
                assert!((cf - j.get(&[x, 1]) / px).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn counterfactual_is_posterior_mass_of_true_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..30 {
            let psm = random_psm(&mut rng, 3, 2, 1..=3);
            let q = random_query(&mut rng, &psm);
            let sub = do_submodel(&psm.csm, &q.antecedent).unwrap();
            let e = resolve(&psm.csm, &q.evidence).unwrap();
            let y = resolve(&psm.csm, &q.consequent).unwrap();
            let mut post = Vec::new();
            for k in 0..psm.csm.exogenous_space() {
                let u = psm.csm.decode_u(k);
                let v = solve(&psm.csm, &u);
                let w = if e.iter().all(|&(i, x)| v[i] == x) { psm.prior(&u) } else { 0.0 };
                post.push((u, w));
            }
            let z: f64 = post.iter().map(|(_, w)| w).sum();
            let truth: f64 = post
                .iter()
                .filter(|(u, _)| y.iter().all(|&(i, x)| solve(&sub, u)[i] == x))
                .map(|(_, w)| w / z)
                .sum();
            assert!((classical_counterfactual(&psm, &q).unwrap() - truth).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let r = ClassicalCsm::new(
            vec![Variable::numeric("V", 2)],
            vec![Variable::numeric("U", 2)],
            vec![vec![]],
            vec![vec![0]],
        );
        assert!(matches!(r, Err(ClassicalError::Invalid(_))));
        let r = ClassicalCsm::new(
            vec![Variable::numeric("A", 2), Variable::numeric("B", 2)],
            vec![Variable::numeric("UA", 1), Variable::numeric("UB", 1)],
            vec![vec![1], vec![0]],
            vec![vec![0, 1], vec![0, 1]],
        );
        assert!(matches!(r, Err(ClassicalError::Graph(_))));
    }
}
