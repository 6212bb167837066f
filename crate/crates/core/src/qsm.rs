//! Quantum structural causal models: a global isometry from endogenous and
//! exogenous outputs to endogenous inputs and a sink, with one
//! discard-and-prepare exogenous instrument per endogenous node.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, IsometryReport};
use crate::instruments::{
    validate_instrument, ExogenousInstrument, Instrument, InstrumentError, InstrumentReport, QuantumNode,
};
use crate::process::{born_probability, check_markov, Assignment, ChannelOperator, Dag, MarkovReport, ProcessError, ProcessOperator};
use crate::tensor::{CMatrix, LabeledOperator, SpaceLabel, TensorError, Tolerance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsmError {
    #[error("model structure: {0}")]
    Structure(String),
    #[error("exogenous assignment {0} has zero prior probability")]
    ZeroProbabilityOutcome(String),
    #[error("node mismatch: {0}")]
    NodeMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no instrument `{setting}` declared for node `{node}`")]
    UnknownInstrument { node: String, setting: String },
    #[error("node `{node}` has no outcome `{outcome}` under setting `{setting}`")]
    UnknownOutcome {
        node: String,
        setting: String,
        outcome: String,
    },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Sink node: composite in-space over `factors`, trivial out-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkNode {
    pub name: String,
    pub factors: Vec<SpaceLabel>,
}

impl SinkNode {
    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn node(&self) -> QuantumNode {
        QuantumNode::new(self.name.clone(), self.dim(), 1)
    }
}

/// One outcome label per exogenous node, in endogenous order.
pub type Lambda = Vec<String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Qsm {
    pub name: String,
    pub endogenous: Vec<QuantumNode>,
    /// `exogenous[i]` belongs to `endogenous[i]`.
    pub exogenous: Vec<ExogenousInstrument>,
    pub sink: SinkNode,
    pub circuit: Circuit,
    pub dag: Dag,
    /// Declared instruments, looked up by (node, setting).
    pub instruments: Vec<Instrument>,
    /// Per node: outcome label ↦ state prepared by the do-fallback.
    pub do_states: BTreeMap<String, BTreeMap<String, CMatrix>>,
}

fn same_labels(a: &[SpaceLabel], b: &[SpaceLabel]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

impl Qsm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        endogenous: Vec<QuantumNode>,
        exogenous: Vec<ExogenousInstrument>,
        sink: SinkNode,
        circuit: Circuit,
        dag: Dag,
        instruments: Vec<Instrument>,
        do_states: BTreeMap<String, BTreeMap<String, CMatrix>>,
    ) -> Result<Self, QsmError> {
        if exogenous.len() != endogenous.len() {
            return Err(QsmError::Structure(format!(
                "{} endogenous nodes but {} exogenous nodes",
                endogenous.len(),
                exogenous.len()
            )));
        }
        let names: Vec<String> = endogenous.iter().map(|n| n.name.clone()).collect();
        if dag.nodes != names {
            return Err(QsmError::Structure("graph nodes differ from endogenous nodes".into()));
        }
        let mut expected_in: Vec<SpaceLabel> = endogenous.iter().map(|n| n.out_space.clone()).collect();
        expected_in.extend(exogenous.iter().map(|e| e.node.out_space.clone()));
        if !same_labels(&expected_in, &circuit.inputs) {
            return Err(QsmError::Structure(format!(
                "circuit inputs {:?} must be the endogenous and exogenous outputs {:?}",
                circuit.inputs.iter().map(|l| &l.name).collect::<Vec<_>>(),
                expected_in.iter().map(|l| &l.name).collect::<Vec<_>>()
            )));
        }
        let mut expected_out: Vec<SpaceLabel> = endogenous.iter().map(|n| n.in_space.clone()).collect();
        expected_out.extend(sink.factors.iter().cloned());
        if !same_labels(&expected_out, &circuit.outputs) {
            return Err(QsmError::Structure(format!(
                "circuit outputs {:?} must be the endogenous inputs and sink factors {:?}",
                circuit.outputs.iter().map(|l| &l.name).collect::<Vec<_>>(),
                expected_out.iter().map(|l| &l.name).collect::<Vec<_>>()
            )));
        }
        for ins in &instruments {
            if !endogenous.contains(&ins.node) {
                return Err(QsmError::UnknownNode(ins.node.name.clone()));
            }
            let dup = instruments
                .iter()
                .filter(|o| o.node.name == ins.node.name && o.setting == ins.setting)
                .count();
            if dup > 1 {
                return Err(QsmError::Structure(format!(
                    "instrument `{}` declared twice for `{}`",
                    ins.setting, ins.node.name
                )));
            }
        }
        for (node, table) in &do_states {
            let n = endogenous
                .iter()
                .find(|e| e.name == *node)
                .ok_or_else(|| QsmError::UnknownNode(node.clone()))?;
            for (label, st) in table {
                if st.nrows() != n.dout() || st.ncols() != n.dout() {
                    return Err(QsmError::Structure(format!("do state `{label}` at `{node}` has wrong dimension")));
                }
            }
        }
        Ok(Qsm {
            name: name.into(),
            endogenous,
            exogenous,
            sink,
            circuit,
            dag,
            instruments,
            do_states,
        })
    }

    pub fn node(&self, name: &str) -> Result<&QuantumNode, QsmError> {
        self.endogenous
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| QsmError::UnknownNode(name.to_string()))
    }

    pub fn node_index(&self, name: &str) -> Result<usize, QsmError> {
        self.endogenous
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| QsmError::UnknownNode(name.to_string()))
    }

    pub fn instrument(&self, node: &str, setting: &str) -> Result<&Instrument, QsmError> {
        self.instruments
            .iter()
            .find(|i| i.node.name == node && i.setting == setting)
            .ok_or_else(|| QsmError::UnknownInstrument {
                node: node.to_string(),
                setting: setting.to_string(),
            })
    }

    pub fn node_names(&self) -> Vec<String> {
        self.endogenous.iter().map(|n| n.name.clone()).collect()
    }

    /// Product prior of a λ-assignment.
    pub fn prior(&self, lambda: &[String]) -> Result<f64, QsmError> {
        if lambda.len() != self.exogenous.len() {
            return Err(QsmError::Structure("λ-assignment has the wrong length".into()));
        }
        let mut p = 1.0;
        for (ex, l) in self.exogenous.iter().zip(lambda) {
            let o = ex
                .outcome(l)
                .ok_or_else(|| QsmError::Structure(format!("`{}` has no outcome `{l}`", ex.node.name)))?;
            p *= o.prob;
        }
        Ok(p)
    }

    /// All λ-assignments with nonzero prior, in lexicographic order of the
    /// declared outcome lists.
    pub fn lambda_assignments(&self) -> Vec<(Lambda, f64)> {
        let mut out: Vec<(Lambda, f64)> = vec![(Vec::new(), 1.0)];
        for ex in &self.exogenous {
            let mut next = Vec::new();
            for (l, p) in &out {
                for o in &ex.outcomes {
                    if o.prob > 0.0 {
                        let mut l2 = l.clone();
                        l2.push(o.label.clone());
                        next.push((l2, p * o.prob));
                    }
                }
            }
            out = next;
        }
        out
    }

    pub fn lambda_label(&self, lambda: &[String]) -> String {
        self.exogenous
            .iter()
            .zip(lambda)
            .map(|(e, l)| format!("{}={}", e.node.name, l))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Process operator of the channel from all endogenous outputs to all
    /// endogenous inputs when each exogenous output is fed `states[i]`.
    fn process_with_states(&self, states: &[LabeledOperator]) -> Result<ProcessOperator, QsmError> {
        let open: Vec<&str> = self.endogenous.iter().map(|n| n.out_space.name.as_str()).collect();
        let keep: Vec<&str> = self.endogenous.iter().map(|n| n.in_space.name.as_str()).collect();
        let fixed: Vec<(&str, &LabeledOperator)> = self
            .exogenous
            .iter()
            .zip(states)
            .map(|(e, s)| (e.node.out_space.name.as_str(), s))
            .collect();
        let rho = self.circuit.reduced_choi(&open, &fixed, &keep)?;
        Ok(ProcessOperator::new(self.endogenous.clone(), rho)?)
    }

    /// Channel operator ρ_{A_i|parents} with non-parent endogenous outputs fed
    /// the maximally mixed state and exogenous outputs their average states.
    pub fn derived_channel(&self, target: &str, parents: &[String]) -> Result<ChannelOperator, QsmError> {
        let node = self.node(target)?;
        let mut open: Vec<&str> = Vec::new();
        for p in parents {
            open.push(self.node(p)?.out_space.name.as_str());
        }
        let mixed: Vec<(String, LabeledOperator)> = self
            .endogenous
            .iter()
            .filter(|n| !parents.contains(&n.name))
            .map(|n| {
                let op = LabeledOperator::identity(vec![n.out_space.clone()])
                    .expect("valid label")
                    .scale_real(1.0 / n.dout() as f64);
                (n.out_space.name.clone(), op)
            })
            .chain(self.exogenous.iter().map(|e| (e.node.out_space.name.clone(), e.average_state())))
            .collect();
        let fixed: Vec<(&str, &LabeledOperator)> = mixed.iter().map(|(n, o)| (n.as_str(), o)).collect();
        let op = self.circuit.reduced_choi(&open, &fixed, &[node.in_space.name.as_str()])?;
        Ok(ChannelOperator {
            target: target.to_string(),
            parents: parents.to_vec(),
            op,
        })
    }
}

/// σ^λ: the endogenous process conditioned on the exogenous outcomes λ.
pub fn conditional_process(q: &Qsm, lambda: &[String]) -> Result<ProcessOperator, QsmError> {
    let p = q.prior(lambda)?;
    if p <= 0.0 {
        return Err(QsmError::ZeroProbabilityOutcome(q.lambda_label(lambda)));
    }
    let states: Vec<LabeledOperator> = q
        .exogenous
        .iter()
        .zip(lambda)
        .map(|(e, l)| e.outcome(l).expect("checked by prior").state.clone())
        .collect();
    q.process_with_states(&states)
}

/// σ: the endogenous process with exogenous outcomes marginalized.
pub fn marginal_process(q: &Qsm) -> Result<ProcessOperator, QsmError> {
    let states: Vec<LabeledOperator> = q.exogenous.iter().map(|e| e.average_state()).collect();
    q.process_with_states(&states)
}

/// Born probability of `outcomes` under `settings` on a process.
/// Nodes without an outcome contribute their outcome-summed channel.
pub fn evidence_probability(
    proc: &ProcessOperator,
    settings: &BTreeMap<String, Instrument>,
    outcomes: &BTreeMap<String, String>,
) -> Result<f64, QsmError> {
    let mut chosen: BTreeMap<String, Assignment<'_>> = BTreeMap::new();
    for n in &proc.nodes {
        let instr = settings.get(&n.name).ok_or_else(|| ProcessError::MissingAssignment(n.name.clone()))?;
        let a = match outcomes.get(&n.name) {
            Some(o) => Assignment::Element(instr.element(o).ok_or_else(|| QsmError::UnknownOutcome {
                node: n.name.clone(),
                setting: instr.setting.clone(),
                outcome: o.clone(),
            })?),
            None => Assignment::Channel(instr),
        };
        chosen.insert(n.name.clone(), a);
    }
    Ok(born_probability(proc, &chosen)?)
}

/// P_z(a|λ).
pub fn likelihood(
    q: &Qsm,
    lambda: &[String],
    settings: &BTreeMap<String, Instrument>,
    outcomes: &BTreeMap<String, String>,
) -> Result<f64, QsmError> {
    let sigma = conditional_process(q, lambda)?;
    evidence_probability(&sigma, settings, outcomes)
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceCheck {
    pub from: String,
    pub to: String,
    /// "exogenous" (Λ_j ↛ A_i, j ≠ i) or "graph" (A_j ↛ A_i for non-parents).
    pub kind: &'static str,
    pub residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QsmReport {
    pub isometry: IsometryReport,
    pub isometry_ok: bool,
    pub no_influence: Vec<InfluenceCheck>,
    pub instruments: Vec<InstrumentReport>,
    pub valid: bool,
}

impl QsmReport {
    pub fn violations(&self) -> Vec<&InfluenceCheck> {
        self.no_influence.iter().filter(|c| !c.holds).collect()
    }
}

/// Every no-influence condition required of `q` relative to `dag`.
pub fn no_influence_checks(q: &Qsm, dag: &Dag, tol: &Tolerance) -> Result<Vec<InfluenceCheck>, QsmError> {
    let mut out = Vec::new();
    for (i, target) in q.endogenous.iter().enumerate() {
        let parents = dag.parents(&target.name);
        let mut froms: Vec<(String, &'static str)> = Vec::new();
        for (j, ex) in q.exogenous.iter().enumerate() {
            if j != i {
                froms.push((ex.node.out_space.name.clone(), "exogenous"));
            }
        }
        for src in &q.endogenous {
            if !parents.contains(&src.name) {
                froms.push((src.out_space.name.clone(), "graph"));
            }
        }
        let names: Vec<&str> = froms.iter().map(|(f, _)| f.as_str()).collect();
        let residuals = q.circuit.influence_residuals(&names, &target.in_space.name)?;
        for ((from, kind), residual) in froms.into_iter().zip(residuals) {
            out.push(InfluenceCheck {
                from,
                to: target.in_space.name.clone(),
                kind,
                residual,
                holds: residual <= tol.eps_trace,
            });
        }
    }
    Ok(out)
}

pub fn validate_qsm(q: &Qsm, tol: &Tolerance) -> Result<QsmReport, QsmError> {
    validate_qsm_seeded(q, tol, 0)
}

/// [`validate_qsm`] with the isometry probes drawn from `seed`.
pub fn validate_qsm_seeded(q: &Qsm, tol: &Tolerance, seed: u64) -> Result<QsmReport, QsmError> {
    let isometry = q.circuit.isometry_residual(seed)?;
    let isometry_ok = isometry.residual() <= tol.eps_trace;
    let no_influence = no_influence_checks(q, &q.dag, tol)?;
    let instruments: Vec<InstrumentReport> = q.instruments.iter().map(|i| validate_instrument(i, tol)).collect();
    let valid = isometry_ok && no_influence.iter().all(|c| c.holds) && instruments.iter().all(|r| r.valid);
    Ok(QsmReport {
        isometry,
        isometry_ok,
        no_influence,
        instruments,
        valid,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub markov: bool,
    pub structural: bool,
    pub residuals: BTreeMap<String, f64>,
    pub markov_detail: Option<MarkovReport>,
}

/// Structural compatibility of σ with `dag` via `q`, alongside the Markov
/// verdict on the factorization derived from `q` for `dag`.
pub fn check_structural_compatibility(
    sigma: &ProcessOperator,
    dag: &Dag,
    q: &Qsm,
    tol: &Tolerance,
) -> Result<CompatibilityReport, QsmError> {
    if sigma.nodes != q.endogenous {
        return Err(QsmError::NodeMismatch(format!(
            "process nodes {:?} vs model nodes {:?}",
            sigma.nodes.iter().map(|n| &n.name).collect::<Vec<_>>(),
            q.node_names()
        )));
    }
    if dag.nodes != q.node_names() {
        return Err(QsmError::NodeMismatch("graph nodes differ from model nodes".into()));
    }
    let mut residuals = BTreeMap::new();
    let marginal = marginal_process(q)?;
    let dist = marginal.distance(sigma)?;
    residuals.insert("marginal_distance".to_string(), dist);
    let checks = no_influence_checks(q, dag, tol)?;
    let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    residuals.insert("max_influence_residual".to_string(), worst);
    let structural = dist <= tol.eps_trace && checks.iter().all(|c| c.holds);
    let factors = q
        .endogenous
        .iter()
        .map(|n| q.derived_channel(&n.name, &dag.parents(&n.name)))
        .collect::<Result<Vec<_>, _>>()?;
    let detail = check_markov(sigma, dag, &factors, tol)?;
    residuals.insert("markov_product_residual".to_string(), detail.product_residual);
    residuals.insert("markov_max_commutator".to_string(), detail.max_commutator);
    Ok(CompatibilityReport {
        markov: detail.markov,
        structural,
        residuals,
        markov_detail: Some(detail),
    })
}
