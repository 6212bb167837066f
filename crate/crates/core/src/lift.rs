//! Classical PSM → QSM: binary padding, reversible extension, XOR copy
//! ancillas, and assembly of the global isometry as a circuit.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate};
use crate::classical::{
    brute_force_joint, classical_counterfactual, ClassicalCsm, ClassicalError, ClassicalPsm, ClassicalQuery, JointTable,
    Variable,
};
use crate::counterfactual::{evaluate, CfError, CfQuery, CfValue, Evidence};
use crate::instruments::{make_do_instrument, ExogenousInstrument, Instrument, InstrumentError, QuantumNode};
use crate::process::Assignment;
use crate::qsm::{marginal_process, Qsm, QsmError, SinkNode};
use crate::tensor::{CMatrix, SpaceLabel, Tolerance, ONE};

/// Largest circuit input dimension a lift may produce.
pub const LIFT_DIM_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("lifted model would need input dimension {0}")]
    TooLarge(usize),
    #[error("joint exogenous priors are not supported; give one prior per exogenous variable")]
    NonProductPrior,
    #[error("function table of `{0}` is not total")]
    NonTotalFunction(String),
    #[error("inconsistent copy plan: {0}")]
    InconsistentPlan(String),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Qsm(#[from] QsmError),
    #[error(transparent)]
    Cf(#[from] CfError),
}

fn pow2_at_least(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// A CSM padded so every value set has power-of-two size.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCsm {
    pub csm: ClassicalCsm,
    /// Original cardinalities of V_i and U_i; values keep their indices.
    pub orig_v: Vec<usize>,
    pub orig_u: Vec<usize>,
}

fn pad_variable(v: &Variable) -> Variable {
    let n = pow2_at_least(v.card());
    let mut values = v.values.clone();
    for k in v.card()..n {
        values.push(format!("#{k}"));
    }
    Variable {
        name: v.name.clone(),
        values,
    }
}

/// Pads V_i and U_i to powers of two; any padded argument maps to f(*,*), the
/// value at the lexicographically smallest element of U_i × Pa_i.
pub fn binarize(csm: &ClassicalCsm) -> Result<BinaryCsm, LiftError> {
    let endogenous: Vec<Variable> = csm.endogenous.iter().map(pad_variable).collect();
    let exogenous: Vec<Variable> = csm.exogenous.iter().map(pad_variable).collect();
    let mut tables = Vec::with_capacity(csm.len());
    for (i, u_var) in exogenous.iter().enumerate() {
        let pcards: Vec<usize> = csm.parents[i].iter().map(|&p| endogenous[p].card()).collect();
        let pa_b: usize = pcards.iter().product();
        let star = csm.eval(i, 0, 0);
        let mut t = Vec::with_capacity(u_var.card() * pa_b);
        for u in 0..u_var.card() {
            for pa in 0..pa_b {
                let mut rest = pa;
                let mut digits = vec![0; pcards.len()];
                for k in (0..pcards.len()).rev() {
                    digits[k] = rest % pcards[k];
                    rest /= pcards[k];
                }
                let inside = u < csm.exogenous[i].card()
                    && digits.iter().zip(&csm.parents[i]).all(|(&d, &p)| d < csm.endogenous[p].card());
                t.push(if inside {
                    let orig_pa = digits
                        .iter()
                        .zip(&csm.parents[i])
                        .fold(0, |acc, (&d, &p)| acc * csm.endogenous[p].card() + d);
                    csm.eval(i, u, orig_pa)
                } else {
                    star
                });
            }
        }
        tables.push(t);
    }
    Ok(BinaryCsm {
        csm: ClassicalCsm::new(endogenous, exogenous, csm.parents.clone(), tables)?,
        orig_v: csm.endogenous.iter().map(Variable::card).collect(),
        orig_u: csm.exogenous.iter().map(Variable::card).collect(),
    })
}

/// f′_i : T′_i × U_i × Pa_i → V_i × S′_i as a table over the domain index
/// (t·|U| + u)·|Pa| + pa, with values v·|S′| + s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibleNode {
    pub t_card: usize,
    pub s_card: usize,
    /// max_v |f⁻¹(v)| before padding to a power of two.
    pub max_preimage: usize,
    pub table: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleCsm {
    pub binary: BinaryCsm,
    pub nodes: Vec<ReversibleNode>,
}

impl ReversibleCsm {
    pub fn csm(&self) -> &ClassicalCsm {
        &self.binary.csm
    }
}

/// Bijective extension of each function. Preimage classes are filled from the
/// t′ = 0 slice first, then padded with t′ ≥ 1 elements in lexicographic
/// order; within a class, s is the lexicographic rank.
pub fn reversify(b: &BinaryCsm) -> Result<ReversibleCsm, LiftError> {
    let csm = &b.csm;
    let mut nodes = Vec::with_capacity(csm.len());
    for i in 0..csm.len() {
        let vc = csm.endogenous[i].card();
        let base = csm.exogenous[i].card() * csm.parent_card(i);
        if csm.tables[i].len() != base {
            return Err(LiftError::NonTotalFunction(csm.endogenous[i].name.clone()));
        }
        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); vc];
        for (d, &v) in csm.tables[i].iter().enumerate() {
            classes[v].push(d);
        }
        let max_preimage = classes.iter().map(Vec::len).max().unwrap_or(0);
        let s_card = pow2_at_least(max_preimage);
        let t_card = vc * s_card / base;
        debug_assert_eq!(t_card * base, vc * s_card);
        let mut next = 0;
        for d in base..t_card * base {
            while classes[next].len() == s_card {
                next += 1;
            }
            classes[next].push(d);
        }
        let mut table = vec![usize::MAX; t_card * base];
        for (v, class) in classes.iter().enumerate() {
            for (s, &d) in class.iter().enumerate() {
                table[d] = v * s_card + s;
            }
        }
        nodes.push(ReversibleNode {
            t_card,
            s_card,
            max_preimage,
            table,
        });
    }
    Ok(ReversibleCsm {
        binary: b.clone(),
        nodes,
    })
}

impl ReversibleNode {
    /// Every codomain element hit exactly once.
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.table.len()];
        self.table.iter().all(|&x| x < seen.len() && !std::mem::replace(&mut seen[x], true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CopyGate {
    /// Register copied (a parent's output).
    pub control: String,
    /// Ancilla receiving the copy.
    pub target: String,
    /// Bit position within the registers.
    pub bit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeCopies {
    pub node: String,
    pub children: Vec<String>,
    /// Ancilla label per child, each owned by that child's exogenous node.
    pub ancillas: Vec<String>,
    pub gates: Vec<CopyGate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CopyPlan {
    pub nodes: Vec<NodeCopies>,
}

pub fn ancilla_label(child: &str, parent: &str) -> String {
    format!("L_{child}.c{parent}")
}

/// One XOR copy of V_i per child, as |Ch(V_i)|·N_i single-bit CNOTs.
pub fn plan_copies(r: &ReversibleCsm) -> CopyPlan {
    let csm = r.csm();
    let nodes = (0..csm.len())
        .map(|i| {
            let name = &csm.endogenous[i].name;
            let children = csm.dag.children(name);
            let bits = csm.endogenous[i].card().trailing_zeros() as usize;
            let ancillas: Vec<String> = children.iter().map(|c| ancilla_label(c, name)).collect();
            let gates = ancillas
                .iter()
                .flat_map(|a| {
                    (0..bits).map(move |k| CopyGate {
                        control: format!("{name}.out"),
                        target: a.clone(),
                        bit: k,
                    })
                })
                .collect();
            NodeCopies {
                node: name.clone(),
                children,
                ancillas,
                gates,
            }
        })
        .collect();
    CopyPlan { nodes }
}

/// Product of the single-bit CNOTs of one copy, on d-level control and target registers.
pub fn cnot_block(name: &str, control: SpaceLabel, target: SpaceLabel, bits: &[usize]) -> Result<Gate, LiftError> {
    let d = control.dim;
    if target.dim != d {
        return Err(LiftError::InconsistentPlan(format!("copy `{name}` between registers of different size")));
    }
    let mut m = CMatrix::identity(d * d, d * d);
    for &k in bits {
        let cnot = CMatrix::from_fn(d * d, d * d, |row, col| {
            let (x, y) = (col / d, col % d);
            let image = x * d + (y ^ (x & (1 << k)));
            if row == image {
                ONE
            } else {
                crate::tensor::ZERO
            }
        });
        m = cnot * m;
    }
    Ok(Gate::new(name, vec![control.clone(), target.clone()], vec![control, target], m)?)
}

/// Builds the QSM for `r` with exogenous priors `priors` (padded, per node).
pub fn assemble_isometry(r: &ReversibleCsm, plan: &CopyPlan, priors: &[Vec<f64>]) -> Result<Qsm, LiftError> {
    let csm = r.csm();
    let n = csm.len();
    if plan.nodes.len() != n || priors.len() != n {
        return Err(LiftError::InconsistentPlan("plan and priors must cover every node".into()));
    }
    let name = |i: usize| csm.endogenous[i].name.clone();
    let endo: Vec<QuantumNode> = (0..n)
        .map(|i| QuantumNode::new(name(i), csm.endogenous[i].card(), csm.endogenous[i].card()))
        .collect();
    let mut exo_labels: Vec<Vec<SpaceLabel>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut parts = vec![
            SpaceLabel::new(format!("L_{}.t", name(i)), r.nodes[i].t_card),
            SpaceLabel::new(format!("L_{}.u", name(i)), csm.exogenous[i].card()),
        ];
        for &p in &csm.parents[i] {
            parts.push(SpaceLabel::new(ancilla_label(&name(i), &name(p)), csm.endogenous[p].card()));
        }
        exo_labels.push(parts);
    }
    let exo_nodes: Vec<QuantumNode> = (0..n)
        .map(|i| QuantumNode::new(format!("L_{}", name(i)), 1, exo_labels[i].iter().map(|l| l.dim).product()))
        .collect();

    let mut gates = Vec::new();
    for i in 0..n {
        gates.push(Gate::regroup(vec![exo_nodes[i].out_space.clone()], exo_labels[i].clone())?);
    }
    for (i, copies) in plan.nodes.iter().enumerate() {
        if copies.node != name(i) {
            return Err(LiftError::InconsistentPlan(format!("plan entry {i} is for `{}`", copies.node)));
        }
        for anc in &copies.ancillas {
            let bits: Vec<usize> = copies.gates.iter().filter(|g| g.target == *anc).map(|g| g.bit).collect();
            let target = SpaceLabel::new(anc.clone(), csm.endogenous[i].card());
            gates.push(cnot_block(&format!("copy {} -> {anc}", name(i)), endo[i].out_space.clone(), target, &bits)?);
        }
    }
    let mut sink = Vec::new();
    for i in 0..n {
        let s_label = SpaceLabel::new(format!("S.{}.s", name(i)), r.nodes[i].s_card);
        let table = r.nodes[i].table.clone();
        gates.push(Gate::permutation(
            format!("f' {}", name(i)),
            exo_labels[i].clone(),
            vec![endo[i].in_space.clone(), s_label.clone()],
            move |d| table[d],
        )?);
        sink.push(s_label);
    }
    for (i, e) in endo.iter().enumerate() {
        let v_label = format!("S.{}.v", name(i));
        gates.push(Gate::wire(e.out_space.clone(), v_label.clone()));
        sink.push(SpaceLabel::new(v_label, e.dout()));
    }

    let mut inputs: Vec<SpaceLabel> = endo.iter().map(|e| e.out_space.clone()).collect();
    inputs.extend(exo_nodes.iter().map(|e| e.out_space.clone()));
    let din: usize = inputs.iter().map(|l| l.dim).product();
    if din > LIFT_DIM_LIMIT {
        return Err(LiftError::TooLarge(din));
    }
    let mut outputs: Vec<SpaceLabel> = endo.iter().map(|e| e.in_space.clone()).collect();
    outputs.extend(sink.iter().cloned());
    let circuit = Circuit::new(inputs, outputs, gates)?;

    let tol = Tolerance::default();
    let mut exogenous = Vec::with_capacity(n);
    for i in 0..n {
        let d = exo_nodes[i].dout();
        let stride = d / (r.nodes[i].t_card * csm.exogenous[i].card());
        let outcomes = (0..csm.exogenous[i].card())
            .map(|u| {
                let mut st = CMatrix::zeros(d, d);
                let k = u * stride;
                st[(k, k)] = ONE;
                (csm.exogenous[i].values[u].clone(), priors[i][u], st)
            })
            .collect();
        exogenous.push(ExogenousInstrument::new(exo_nodes[i].clone(), outcomes, &tol)?);
    }
    let mut instruments = Vec::with_capacity(n);
    let mut do_states = BTreeMap::new();
    for (i, e) in endo.iter().enumerate() {
        instruments.push(Instrument::basis_measurement(e.clone(), "z", &csm.endogenous[i].values)?);
        let d = e.dout();
        let table: BTreeMap<String, CMatrix> = csm.endogenous[i]
            .values
            .iter()
            .enumerate()
            .map(|(v, label)| {
                let mut p = CMatrix::zeros(d, d);
                p[(v, v)] = ONE;
                (label.clone(), p)
            })
            .collect();
        do_states.insert(name(i), table);
    }
    Ok(Qsm::new(
        "lifted",
        endo,
        exogenous,
        SinkNode {
            name: "S".into(),
            factors: sink,
        },
        circuit,
        csm.dag.clone(),
        instruments,
        do_states,
    )?)
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    pub qsm: Qsm,
    pub binary: BinaryCsm,
    pub reversible: ReversibleCsm,
    pub plan: CopyPlan,
    /// Sink factor dimensions as built.
    pub sink_dims: Vec<(String, usize)>,
}

pub fn lift(psm: &ClassicalPsm) -> Result<LiftResult, LiftError> {
    if psm.joint.is_some() {
        return Err(LiftError::NonProductPrior);
    }
    let binary = binarize(&psm.csm)?;
    let reversible = reversify(&binary)?;
    let plan = plan_copies(&reversible);
    let priors: Vec<Vec<f64>> = psm
        .priors
        .iter()
        .zip(&binary.csm.exogenous)
        .map(|(p, u)| {
            let mut q = p.clone();
            q.resize(u.card(), 0.0);
            q
        })
        .collect();
    let qsm = assemble_isometry(&reversible, &plan, &priors)?;
    let sink_dims = qsm.sink.factors.iter().map(|f| (f.name.clone(), f.dim)).collect();
    Ok(LiftResult {
        qsm,
        binary,
        reversible,
        plan,
        sink_dims,
    })
}

/// Joint of basis-measurement outcomes on the lifted model, over the original
/// value sets, plus the probability mass landing on padding values.
pub fn quantum_joint(l: &LiftResult) -> Result<(JointTable, f64), LiftError> {
    let q = &l.qsm;
    let sigma = marginal_process(q)?;
    let csm = &l.binary.csm;
    let dims: Vec<usize> = csm.endogenous.iter().map(Variable::card).collect();
    let total: usize = dims.iter().product();
    let instr: Vec<&Instrument> = q
        .endogenous
        .iter()
        .map(|n| q.instrument(&n.name, "z"))
        .collect::<Result<_, _>>()?;
    let orig = &l.binary.orig_v;
    let mut probs = vec![0.0; orig.iter().product()];
    let mut padding = 0.0;
    for k in 0..total {
        let mut rest = k;
        let mut v = vec![0; dims.len()];
        for i in (0..dims.len()).rev() {
            v[i] = rest % dims[i];
            rest /= dims[i];
        }
        let chosen: BTreeMap<String, Assignment<'_>> = q
            .endogenous
            .iter()
            .zip(&instr)
            .zip(&v)
            .map(|((n, ins), &x)| (n.name.clone(), Assignment::Element(&ins.elements[x])))
            .collect();
        let p = crate::process::born_raw(&sigma, &chosen).map_err(QsmError::from)?;
        if v.iter().zip(orig).all(|(x, o)| x < o) {
            let idx = v.iter().zip(orig).fold(0, |acc, (x, o)| acc * o + x);
            probs[idx] = p;
        } else {
            padding += p.abs();
        }
    }
    Ok((
        JointTable {
            dims: orig.clone(),
            probs,
        },
        padding,
    ))
}

/// The do-interventional query on the lifted model matching a classical query:
/// basis measurements everywhere, do(|x′⟩) at the antecedent nodes.
pub fn lifted_query(l: &LiftResult, query: &ClassicalQuery) -> Result<CfQuery, LiftError> {
    let q = &l.qsm;
    let mut settings = BTreeMap::new();
    for n in &q.endogenous {
        settings.insert(n.name.clone(), q.instrument(&n.name, "z")?.clone());
    }
    let mut cf = settings.clone();
    for (node, value) in &query.antecedent {
        let n = q.node(node)?;
        let state = q
            .do_states
            .get(node)
            .and_then(|t| t.get(value))
            .ok_or_else(|| ClassicalError::UnknownValue {
                var: node.clone(),
                value: value.clone(),
            })?;
        let mut instr = make_do_instrument(n, value.clone(), state)?;
        instr.setting = format!("do({value})");
        cf.insert(node.clone(), instr);
    }
    Ok(CfQuery {
        evidence: Evidence {
            settings,
            outcomes: query.evidence.clone(),
        },
        cf_settings: cf,
        antecedent: query.antecedent.clone(),
        consequent: query.consequent.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Equivalence {
    pub classical: f64,
    pub quantum: CfValue,
    pub delta: Option<f64>,
}

/// Classical three-step value against the lifted do-interventional value.
pub fn equivalence_check(psm: &ClassicalPsm, query: &ClassicalQuery, tol: &Tolerance) -> Result<Equivalence, LiftError> {
    let classical = classical_counterfactual(psm, query)?;
    let l = lift(psm)?;
    equivalence_on(&l, query, tol, classical)
}

/// [`equivalence_check`] reusing an existing lift.
pub fn equivalence_on(
    l: &LiftResult,
    query: &ClassicalQuery,
    tol: &Tolerance,
    classical: f64,
) -> Result<Equivalence, LiftError> {
    let cq = lifted_query(l, query)?;
    let quantum = evaluate(&l.qsm, &cq, tol)?.value;
    Ok(Equivalence {
        classical,
        quantum,
        delta: quantum.prob().map(|p| (p - classical).abs()),
    })
}

/// Total variation between the classical joint and the lifted basis-measurement joint.
pub fn joint_distance(psm: &ClassicalPsm, l: &LiftResult) -> Result<f64, LiftError> {
    let classical = brute_force_joint(psm)?;
    let (quantum, padding) = quantum_joint(l)?;
    Ok(classical.total_variation(&quantum) + 0.5 * padding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::xor_copy_gate;
    use crate::classical::{fork_psm, random_psm, random_query, xor_chain};
    use crate::process::check_no_influence;
    use crate::qsm::validate_qsm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn and_csm() -> ClassicalCsm {
        ClassicalCsm::new(
            vec![Variable::numeric("P", 2), Variable::numeric("V", 2)],
            vec![Variable::numeric("U_P", 2), Variable::numeric("U_V", 2)],
            vec![vec![], vec![0]],
            vec![vec![0, 1], vec![0, 0, 0, 1]],
        )
        .unwrap()
    }

    #[test]
    fn and_node_extension() {
        let r = reversify(&binarize(&and_csm()).unwrap()).unwrap();
        let node = &r.nodes[1];
        assert_eq!((node.max_preimage, node.s_card, node.t_card), (3, 4, 2));
        assert!(node.is_bijection());
        // Oracle: on the t′ = 0 slice the value part reproduces u ∧ p.
        for u in 0..2 {
            for p in 0..2 {
                assert_eq!(node.table[u * 2 + p] / node.s_card, u & p);
            }
        }
        // Filler (1,0,0) tops up class 0; (1,0,1), (1,1,0), (1,1,1) fill class 1.
        assert_eq!(node.table, vec![0, 1, 2, 4, 3, 5, 6, 7]);
    }

    #[test]
    fn binarize_pads_with_star_value() {
        let csm = ClassicalCsm::new(
            vec![Variable::new("X", &["a", "b", "c"]), Variable::numeric("Y", 2)],
            vec![Variable::numeric("U_X", 3), Variable::numeric("U_Y", 1)],
            vec![vec![], vec![0]],
            vec![vec![2, 0, 1], vec![1, 0, 1]],
        )
        .unwrap();
        let b = binarize(&csm).unwrap();
        assert_eq!(b.csm.endogenous[0].values, vec!["a", "b", "c", "#3"]);
        assert_eq!(b.csm.tables[0], vec![2, 0, 1, 2]);
        assert_eq!(b.csm.tables[1], vec![1, 0, 1, 1]);
        let r = reversify(&b).unwrap();
        assert!(r.nodes.iter().all(ReversibleNode::is_bijection));
    }

    #[test]
    fn copy_plan_for_fork() {
        let l = lift(&fork_psm()).unwrap();
        let a = &l.plan.nodes[0];
        assert_eq!(a.children, vec!["B", "C"]);
        assert_eq!(a.ancillas, vec!["L_B.cA", "L_C.cA"]);
        assert_eq!(a.gates.len(), 2);
        assert!(l.plan.nodes[1].gates.is_empty() && l.plan.nodes[2].gates.is_empty());
    }

    #[test]
    fn cnot_block_is_xor() {
        let c = SpaceLabel::new("c", 8);
        let t = SpaceLabel::new("t", 8);
        let g = cnot_block("g", c.clone(), t.clone(), &[0, 1, 2]).unwrap();
        let x = xor_copy_gate("x", c, t).unwrap();
        assert!((&g.matrix - &x.matrix).norm() < 1e-12);
    }

    #[test]
    fn xor_chain_lift_is_valid() {
        let psm = xor_chain();
        let l = lift(&psm).unwrap();
        let tol = Tolerance::default();
        let report = validate_qsm(&l.qsm, &tol).unwrap();
        assert!(report.valid, "{:?}", report.violations());
        assert!(joint_distance(&psm, &l).unwrap() < 1e-9);
        // CJ-route cross-check of the Heisenberg no-influence test.
        let choi = l.qsm.circuit.choi().unwrap();
        let outputs: Vec<&str> = l.qsm.circuit.outputs.iter().map(|o| o.name.as_str()).collect();
        let cj = |from: &str, to: &str| check_no_influence(&choi, &outputs, &[from], &[to], &tol).unwrap().holds;
        assert!(cj("V2.out", "V1.in"));
        assert!(cj("L_V2.out", "V1.in"));
        assert!(cj("L_V1.out", "V2.in"));
        assert!(!cj("V1.out", "V2.in"));
        assert!(!cj("L_V2.out", "V2.in"));
    }

    #[test]
    fn xor_chain_counterfactual_matches() {
        let psm = xor_chain();
        let q = ClassicalQuery {
            evidence: map(&[("V1", "0"), ("V2", "1")]),
            antecedent: map(&[("V1", "1")]),
            consequent: map(&[("V2", "0")]),
        };
        let e = equivalence_check(&psm, &q, &Tolerance::default()).unwrap();
        assert!((e.classical - 1.0).abs() < 1e-12);
        assert!(e.delta.unwrap() < 1e-9);
    }

    #[test]
    fn fork_joint_and_queries() {
        let psm = fork_psm();
        let l = lift(&psm).unwrap();
        assert!(joint_distance(&psm, &l).unwrap() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let q = random_query(&mut rng, &psm);
            let classical = classical_counterfactual(&psm, &q).unwrap();
            let e = equivalence_on(&l, &q, &Tolerance::default(), classical).unwrap();
            assert!(e.delta.unwrap() < 1e-9, "{q:?}: {e:?}");
        }
    }

    #[test]
    fn random_models_reproduce_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let psm = random_psm(&mut rng, 3, 2, 1..=3);
            let l = lift(&psm).unwrap();
            assert!(l.reversible.nodes.iter().all(ReversibleNode::is_bijection));
            assert!(joint_distance(&psm, &l).unwrap() < 1e-9);
        }
    }

    #[test]
    fn joint_priors_rejected() {
        let mut psm = xor_chain();
        psm.joint = Some(vec![0.25; 4]);
        assert_eq!(lift(&psm).unwrap_err(), LiftError::NonProductPrior);
    }
}
