//! Process operators, the generalized Born rule, the quantum Markov check and
//! the CJ-operator no-influence test.
//!
//! Process operators use the CJ convention ρ = Σ E(|i⟩⟨j|) ⊗ |i⟩⟨j| with the
//! channel output first. The canonical factor order of a process over nodes
//! A_1..A_n is `[A_1.in, A_1.out, ..., A_n.in, A_n.out]`.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::instruments::{Instrument, InstrumentElement, QuantumNode};
use crate::random::random_channel;
use crate::tensor::{
    commutator_norm, partial_trace, permute_factors, tensor, tensor_all, CMatrix, LabeledOperator, SpaceLabel,
    TensorError, Tolerance,
};

pub use crate::qsm::{conditional_process, likelihood};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("no instrument assigned to node `{0}`")]
    MissingAssignment(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("factor coverage: {0}")]
    CoverageError(String),
    #[error("graph: {0}")]
    Graph(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dag {
    pub nodes: Vec<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl Dag {
    pub fn new(nodes: Vec<String>, edges: impl IntoIterator<Item = (String, String)>) -> Result<Self, ProcessError> {
        let set: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
        if set.len() != nodes.len() {
            return Err(ProcessError::Graph("duplicate node name".into()));
        }
        let edges: BTreeSet<(String, String)> = edges.into_iter().collect();
        for (a, b) in &edges {
            if !set.contains(a.as_str()) || !set.contains(b.as_str()) {
                return Err(ProcessError::Graph(format!("edge {a} -> {b} references an unknown node")));
            }
        }
        let dag = Dag { nodes, edges };
        dag.topological_order()?;
        Ok(dag)
    }

    pub fn empty(nodes: Vec<String>) -> Self {
        Dag {
            nodes,
            edges: BTreeSet::new(),
        }
    }

    pub fn parents(&self, node: &str) -> Vec<String> {
        // node order, not edge order, so parent lists are deterministic
        self.nodes
            .iter()
            .filter(|p| self.edges.contains(&(p.to_string(), node.to_string())))
            .cloned()
            .collect()
    }

    pub fn children(&self, node: &str) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|c| self.edges.contains(&(node.to_string(), c.to_string())))
            .cloned()
            .collect()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string()))
    }

    pub fn without_edge(&self, from: &str, to: &str) -> Dag {
        let mut d = self.clone();
        d.edges.remove(&(from.to_string(), to.to_string()));
        d
    }

    pub fn topological_order(&self) -> Result<Vec<String>, ProcessError> {
        let mut indeg: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b.as_str()).expect("validated") += 1;
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut ready: Vec<&str> = self.nodes.iter().map(String::as_str).filter(|n| indeg[n] == 0).collect();
        while let Some(n) = ready.first().copied() {
            ready.remove(0);
            order.push(n.to_string());
            for c in self.children(n) {
                let e = indeg.get_mut(c.as_str()).expect("known");
                *e -= 1;
                if *e == 0 {
                    let pos = self.nodes.iter().position(|x| *x == c).expect("known");
                    let at = ready
                        .iter()
                        .position(|r| self.nodes.iter().position(|x| x == r).expect("known") > pos)
                        .unwrap_or(ready.len());
                    ready.insert(at, self.nodes[pos].as_str());
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(ProcessError::Graph("graph has a cycle".into()));
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOperator {
    pub nodes: Vec<QuantumNode>,
    pub op: LabeledOperator,
}

pub fn canonical_factors(nodes: &[QuantumNode]) -> Vec<SpaceLabel> {
    nodes
        .iter()
        .flat_map(|n| [n.in_space.clone(), n.out_space.clone()])
        .collect()
}

impl ProcessOperator {
    /// Permutes `op` into canonical order; fails if the factor set differs.
    pub fn new(nodes: Vec<QuantumNode>, op: LabeledOperator) -> Result<Self, ProcessError> {
        let factors = canonical_factors(&nodes);
        if op.factors().len() != factors.len() {
            return Err(ProcessError::LabelMismatch(format!(
                "process has factors {:?}, nodes need {:?}",
                op.factor_names(),
                factors.iter().map(|f| &f.name).collect::<Vec<_>>()
            )));
        }
        for f in &factors {
            match op.position(&f.name) {
                Some(p) if op.factors()[p].dim == f.dim => {}
                _ => return Err(ProcessError::LabelMismatch(format!("factor `{}` missing or wrong dim", f.name))),
            }
        }
        let names: Vec<&str> = factors.iter().map(|f| f.name.as_str()).collect();
        let op = permute_factors(&op, &names)?;
        Ok(ProcessOperator { nodes, op })
    }

    pub fn node(&self, name: &str) -> Option<&QuantumNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn distance(&self, other: &ProcessOperator) -> Result<f64, ProcessError> {
        Ok(self.op.distance(&other.op)?)
    }
}

/// What a node contributes to a Born-rule evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Assignment<'a> {
    /// A fixed outcome.
    Element(&'a InstrumentElement),
    /// The outcome-summed channel of an instrument.
    Channel(&'a Instrument),
    /// Any operator over `[node.out, node.in]`.
    Operator(&'a LabeledOperator),
}

fn assignment_operator(node: &QuantumNode, a: &Assignment<'_>) -> Result<LabeledOperator, ProcessError> {
    let op = match a {
        Assignment::Element(e) => e.choi.clone(),
        Assignment::Channel(i) => {
            if i.node != *node {
                return Err(ProcessError::LabelMismatch(format!(
                    "instrument for `{}` assigned to node `{}`",
                    i.node.name, node.name
                )));
            }
            i.channel()
        }
        Assignment::Operator(o) => (*o).clone(),
    };
    let names = [node.in_space.name.as_str(), node.out_space.name.as_str()];
    let ok = op.factors().len() == 2
        && op.position(names[0]).is_some_and(|p| op.factors()[p].dim == node.din())
        && op.position(names[1]).is_some_and(|p| op.factors()[p].dim == node.dout());
    if !ok {
        return Err(ProcessError::LabelMismatch(format!(
            "operator on {:?} assigned to node `{}`",
            op.factor_names(),
            node.name
        )));
    }
    Ok(permute_factors(&op, &names)?)
}

/// Tr[σ (⊗τ)] without clamping.
pub fn born_raw(proc: &ProcessOperator, chosen: &BTreeMap<String, Assignment<'_>>) -> Result<f64, ProcessError> {
    let mut ops = Vec::with_capacity(proc.nodes.len());
    for n in &proc.nodes {
        let a = chosen.get(&n.name).ok_or_else(|| ProcessError::MissingAssignment(n.name.clone()))?;
        ops.push(assignment_operator(n, a)?);
    }
    for k in chosen.keys() {
        if proc.node(k).is_none() {
            return Err(ProcessError::LabelMismatch(format!("assignment for unknown node `{k}`")));
        }
    }
    let t = tensor_all(ops.iter())?;
    let (s, t) = (proc.op.data(), t.data());
    let n = s.nrows();
    let mut acc = crate::tensor::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += s[(i, j)] * t[(j, i)];
        }
    }
    Ok(acc.re)
}

/// Generalized Born rule, clamped to [0, 1].
pub fn born_probability(proc: &ProcessOperator, chosen: &BTreeMap<String, Assignment<'_>>) -> Result<f64, ProcessError> {
    Ok(born_raw(proc, chosen)?.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProcessReport {
    pub min_eigenvalue: f64,
    pub psd: bool,
    /// ‖Tr_{in}[σ] − I_{out}‖
    pub trace_condition_residual: f64,
    /// max |Σ_outcomes P − 1| over the random product-channel battery
    pub battery_residual: f64,
    pub battery_size: usize,
    pub valid: bool,
}

pub const BATTERY_SIZE: usize = 64;

/// PSD check, the trace condition and a seeded battery of random product channels.
pub fn validate_process(proc: &ProcessOperator, tol: &Tolerance, seed: u64) -> Result<ProcessReport, ProcessError> {
    let min_eigenvalue = proc.op.min_eigenvalue();
    let psd = proc.op.is_psd(tol);
    let ins: Vec<&str> = proc.nodes.iter().map(|n| n.in_space.name.as_str()).collect();
    let reduced = partial_trace(&proc.op, &ins)?;
    let trace_condition_residual = (reduced.data() - CMatrix::identity(reduced.dim(), reduced.dim())).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut battery_residual: f64 = 0.0;
    for _ in 0..BATTERY_SIZE {
        let channels: Vec<Instrument> = proc.nodes.iter().map(|n| random_channel(&mut rng, n)).collect();
        let chosen: BTreeMap<String, Assignment<'_>> = channels
            .iter()
            .map(|c| (c.node.name.clone(), Assignment::Channel(c)))
            .collect();
        battery_residual = battery_residual.max((born_raw(proc, &chosen)? - 1.0).abs());
    }
    let valid = psd && trace_condition_residual <= tol.eps_trace && battery_residual <= tol.eps_trace;
    Ok(ProcessReport {
        min_eigenvalue,
        psd,
        trace_condition_residual,
        battery_residual,
        battery_size: BATTERY_SIZE,
        valid,
    })
}

/// ρ_{A_i|Pa(A_i)} over `[A_i.in, parents' out...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOperator {
    pub target: String,
    pub parents: Vec<String>,
    pub op: LabeledOperator,
}

impl ChannelOperator {
    /// ‖Tr_{A_i^in}[ρ] − I_{Pa^out}‖ (root nodes: |Tr ρ − 1|).
    pub fn channel_residual(&self, target_in: &str) -> Result<f64, ProcessError> {
        let r = partial_trace(&self.op, &[target_in])?;
        Ok((r.data() - CMatrix::identity(r.dim(), r.dim())).norm())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovReport {
    pub markov: bool,
    pub parent_mismatches: Vec<String>,
    pub max_commutator: f64,
    pub product_residual: f64,
    pub channel_residuals: Vec<(String, f64)>,
    pub all_psd: bool,
}

/// Checks σ = ∏ ρ_{A_i|Pa(A_i)} with pairwise commuting factors.
pub fn check_markov(
    proc: &ProcessOperator,
    dag: &Dag,
    factors: &[ChannelOperator],
    tol: &Tolerance,
) -> Result<MarkovReport, ProcessError> {
    for n in &proc.nodes {
        let count = factors.iter().filter(|f| f.target == n.name).count();
        if count != 1 {
            return Err(ProcessError::CoverageError(format!("node `{}` covered {count} times", n.name)));
        }
    }
    if factors.len() != proc.nodes.len() {
        return Err(ProcessError::CoverageError("factor for an unknown node".into()));
    }
    let mut parent_mismatches = Vec::new();
    let mut channel_residuals = Vec::new();
    let mut all_psd = true;
    let canon = canonical_factors(&proc.nodes);
    let mut padded = Vec::with_capacity(factors.len());
    for f in factors {
        let node = proc.node(&f.target).expect("covered");
        let mut want: BTreeSet<String> = dag.parents(&f.target).into_iter().collect();
        let have: BTreeSet<String> = f.parents.iter().cloned().collect();
        if want != have {
            parent_mismatches.push(f.target.clone());
        }
        want.clear();
        let mut expected: Vec<&str> = vec![node.in_space.name.as_str()];
        let outs: Vec<String> = f
            .parents
            .iter()
            .map(|p| proc.node(p).map(|n| n.out_space.name.clone()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ProcessError::CoverageError(format!("unknown parent of `{}`", f.target)))?;
        expected.extend(outs.iter().map(String::as_str));
        let names = f.op.factor_names();
        if names.len() != expected.len() || expected.iter().any(|e| !names.contains(e)) {
            return Err(ProcessError::LabelMismatch(format!(
                "factor for `{}` acts on {:?}, expected {:?}",
                f.target, names, expected
            )));
        }
        channel_residuals.push((f.target.clone(), f.channel_residual(&node.in_space.name)?));
        all_psd &= f.op.is_psd(tol);
        padded.push(f.op.embed(&canon)?);
    }
    let mut max_commutator: f64 = 0.0;
    for i in 0..factors.len() {
        for j in (i + 1)..factors.len() {
            max_commutator = max_commutator.max(commutator_norm(&factors[i].op, &factors[j].op)?);
        }
    }
    let mut product = padded[0].clone();
    for p in &padded[1..] {
        product = product.matmul(p)?;
    }
    let product_residual = product.distance(&proc.op)?;
    let markov = parent_mismatches.is_empty()
        && max_commutator <= tol.eps_herm
        && product_residual <= tol.eps_trace
        && all_psd
        && channel_residuals.iter().all(|(_, r)| *r <= tol.eps_trace);
    Ok(MarkovReport {
        markov,
        parent_mismatches,
        max_commutator,
        product_residual,
        channel_residuals,
        all_psd,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoInfluence {
    pub holds: bool,
    pub residual: f64,
}

/// CJ-operator test of `from ↛ to` for a unitary/isometry CJ operator whose
/// output factors are `outputs`: Tr_C[ρ] must equal (Tr_A[Tr_C ρ]/d_A) ⊗ I_A,
/// where C is every output outside `to` and A is `from`.
pub fn check_no_influence(
    unitary_choi: &LabeledOperator,
    outputs: &[&str],
    from: &[&str],
    to: &[&str],
    tol: &Tolerance,
) -> Result<NoInfluence, ProcessError> {
    for n in outputs.iter().chain(from).chain(to) {
        if !unitary_choi.has_factor(n) {
            return Err(ProcessError::Tensor(TensorError::UnknownLabel(n.to_string())));
        }
    }
    for t in to {
        if !outputs.contains(t) {
            return Err(ProcessError::LabelMismatch(format!("`{t}` is not an output")));
        }
    }
    for f in from {
        if outputs.contains(f) {
            return Err(ProcessError::LabelMismatch(format!("`{f}` is not an input")));
        }
    }
    let c: Vec<&str> = outputs.iter().copied().filter(|o| !to.contains(o)).collect();
    let r = partial_trace(unitary_choi, &c)?;
    let d_a: usize = from
        .iter()
        .map(|f| r.factors()[r.position(f).expect("present")].dim)
        .product();
    let m = partial_trace(&r, from)?.scale_real(1.0 / d_a as f64);
    let a_labels: Vec<SpaceLabel> = from
        .iter()
        .map(|f| r.factors()[r.position(f).expect("present")].clone())
        .collect();
    let rebuilt = tensor(&m, &LabeledOperator::identity(a_labels)?)?;
    let residual = rebuilt.distance(&r)?;
    Ok(NoInfluence {
        holds: residual <= tol.eps_trace,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Circuit, Gate};
    use crate::instruments::qubit::*;
    use crate::instruments::InstrumentElement;
    use crate::tensor::{C64, ONE};

    fn identity_process_cj(from: &QuantumNode, to: &QuantumNode) -> LabeledOperator {
        // ρ^id_{to.in | from.out} = Σ |i⟩⟨j| ⊗ |i⟩⟨j|
        let d = from.dout();
        let mut m = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                m[(i * d + i, j * d + j)] = ONE;
            }
        }
        LabeledOperator::new(vec![to.in_space.clone(), from.out_space.clone()], m).unwrap()
    }

    /// Example-one style chain: σ = ρ^id_{B.in|A.out} ⊗ (I/2)_{A.in}.
    fn chain() -> (ProcessOperator, Vec<ChannelOperator>, Dag) {
        let a = QuantumNode::new("A", 2, 2);
        let b = QuantumNode::new("B", 2, 2);
        let rho_b = identity_process_cj(&a, &b);
        let rho_a = LabeledOperator::identity(vec![a.in_space.clone()]).unwrap().scale_real(0.5);
        let sigma = tensor(&tensor(&rho_b, &rho_a).unwrap(), &LabeledOperator::identity(vec![b.out_space.clone()]).unwrap())
            .unwrap();
        let proc = ProcessOperator::new(vec![a, b], sigma).unwrap();
        let factors = vec![
            ChannelOperator {
                target: "A".into(),
                parents: vec![],
                op: rho_a,
            },
            ChannelOperator {
                target: "B".into(),
                parents: vec!["A".into()],
                op: rho_b,
            },
        ];
        let dag = Dag::new(vec!["A".into(), "B".into()], [("A".into(), "B".into())]).unwrap();
        (proc, factors, dag)
    }

    fn pm_instrument(node: &QuantumNode) -> Instrument {
        let (p, m) = (proj(&plus()), proj(&minus()));
        Instrument::new(
            node.clone(),
            "1",
            vec![
                InstrumentElement::measure_prepare(node, "+", &p, &p).unwrap(),
                InstrumentElement::measure_prepare(node, "-", &m, &m).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn dag_basics() {
        let (_, _, dag) = chain();
        assert_eq!(dag.parents("B"), vec!["A".to_string()]);
        assert_eq!(dag.topological_order().unwrap(), vec!["A".to_string(), "B".to_string()]);
        assert!(Dag::new(vec!["A".into(), "B".into()], [("A".into(), "B".into()), ("B".into(), "A".into())]).is_err());
    }

    #[test]
    fn born_all_channels_is_one() {
        let (proc, _, _) = chain();
        let ia = pm_instrument(&proc.nodes[0]);
        let ib = pm_instrument(&proc.nodes[1]);
        let chosen = BTreeMap::from([
            ("A".to_string(), Assignment::Channel(&ia)),
            ("B".to_string(), Assignment::Channel(&ib)),
        ]);
        assert!((born_probability(&proc, &chosen).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_example_one_plus_is_half() {
        // Brute force: A.in is I/2, so P(+) = Tr[(I/2)[+]] = 1/2 whatever B does.
        let (proc, _, _) = chain();
        let ia = pm_instrument(&proc.nodes[0]);
        let ib = pm_instrument(&proc.nodes[1]);
        let chosen = BTreeMap::from([
            ("A".to_string(), Assignment::Element(ia.element("+").unwrap())),
            ("B".to_string(), Assignment::Channel(&ib)),
        ]);
        assert!((born_probability(&proc, &chosen).unwrap() - 0.5).abs() < 1e-12);
        // Perfect correlation through the identity channel.
        let joint = BTreeMap::from([
            ("A".to_string(), Assignment::Element(ia.element("+").unwrap())),
            ("B".to_string(), Assignment::Element(ib.element("-").unwrap())),
        ]);
        assert!(born_probability(&proc, &joint).unwrap().abs() < 1e-12);
    }

    #[test]
    fn born_single_node_is_standard_rule() {
        let a = QuantumNode::new("A", 2, 1);
        let rho = CMatrix::from_row_slice(2, 2, &[C64::new(0.8, 0.0), C64::new(0.1, 0.1), C64::new(0.1, -0.1), C64::new(0.2, 0.0)]);
        let sigma = tensor(
            &LabeledOperator::new(vec![a.in_space.clone()], rho.clone()).unwrap(),
            &LabeledOperator::identity(vec![a.out_space.clone()]).unwrap(),
        )
        .unwrap();
        let proc = ProcessOperator::new(vec![a.clone()], sigma).unwrap();
        let p = proj(&plus());
        let el = InstrumentElement::measure_prepare(&a, "+", &CMatrix::identity(1, 1), &p).unwrap();
        let chosen = BTreeMap::from([("A".to_string(), Assignment::Element(&el))]);
        let expected = (rho * p).trace().re;
        assert!((born_probability(&proc, &chosen).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(born_probability(&proc, &BTreeMap::new()), Err(ProcessError::MissingAssignment(_))));
    }

    #[test]
    fn validate_chain_process() {
        let (proc, _, _) = chain();
        let rep = validate_process(&proc, &Tolerance::default(), 3).unwrap();
        assert!(rep.valid, "{rep:?}");
    }

    #[test]
    fn markov_chain_and_edge_removed() {
        let (proc, factors, dag) = chain();
        let tol = Tolerance::default();
        assert!(check_markov(&proc, &dag, &factors, &tol).unwrap().markov);
        let rep = check_markov(&proc, &dag.without_edge("A", "B"), &factors, &tol).unwrap();
        assert!(!rep.markov);
        assert_eq!(rep.parent_mismatches, vec!["B".to_string()]);
    }

    #[test]
    fn markov_noncommuting_factors() {
        // Two factors on the same A.out with non-commuting parent dependence.
        let a = QuantumNode::new("A", 1, 2);
        let b = QuantumNode::new("B", 2, 1);
        let c = QuantumNode::new("C", 2, 1);
        let fb = LabeledOperator::new(
            vec![b.in_space.clone(), a.out_space.clone()],
            proj(&ket(0)).kronecker(&proj(&ket(0))) + proj(&ket(1)).kronecker(&proj(&ket(1))),
        )
        .unwrap();
        let fc = LabeledOperator::new(
            vec![c.in_space.clone(), a.out_space.clone()],
            proj(&plus()).kronecker(&proj(&plus())) + proj(&minus()).kronecker(&proj(&minus())),
        )
        .unwrap();
        let fa = LabeledOperator::identity(vec![a.in_space.clone()]).unwrap();
        let nodes = vec![a, b, c];
        let canon = canonical_factors(&nodes);
        let sigma = fa.embed(&canon).unwrap();
        let proc = ProcessOperator::new(nodes, sigma).unwrap();
        let dag = Dag::new(
            vec!["A".into(), "B".into(), "C".into()],
            [("A".into(), "B".into()), ("A".into(), "C".into())],
        )
        .unwrap();
        let factors = vec![
            ChannelOperator { target: "A".into(), parents: vec![], op: fa },
            ChannelOperator { target: "B".into(), parents: vec!["A".into()], op: fb },
            ChannelOperator { target: "C".into(), parents: vec!["A".into()], op: fc },
        ];
        let rep = check_markov(&proc, &dag, &factors, &Tolerance::default()).unwrap();
        assert!(!rep.markov);
        assert!(rep.max_commutator > 0.1);
    }

    #[test]
    fn markov_coverage_error() {
        let (proc, factors, dag) = chain();
        assert!(matches!(
            check_markov(&proc, &dag, &factors[..1], &Tolerance::default()),
            Err(ProcessError::CoverageError(_))
        ));
    }

    fn two_qubit_circuit(m: CMatrix) -> Circuit {
        let l = |n: &str| SpaceLabel::new(n, 2);
        Circuit::new(
            vec![l("a"), l("b")],
            vec![l("c"), l("d")],
            vec![
                Gate::new("u", vec![l("a"), l("b")], vec![l("c"), l("d")], m).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn no_influence_swap_and_product() {
        let tol = Tolerance::default();
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(2 * j + i, 2 * i + j)] = ONE;
            }
        }
        let choi = two_qubit_circuit(swap).choi().unwrap();
        assert!(!check_no_influence(&choi, &["c", "d"], &["a"], &["d"], &tol).unwrap().holds);
        assert!(check_no_influence(&choi, &["c", "d"], &["a"], &["c"], &tol).unwrap().holds);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)]);
        let choi = two_qubit_circuit(h.kronecker(&h)).choi().unwrap();
        assert!(check_no_influence(&choi, &["c", "d"], &["a"], &["d"], &tol).unwrap().holds);
        assert!(!check_no_influence(&choi, &["c", "d"], &["a"], &["c"], &tol).unwrap().holds);
    }
}
