//! Quantum nodes, instruments in Choi form, and the discard-and-prepare family.
//!
//! Instrument Choi operators carry factors `[node.out, node.in]` and follow
//! τ = Σ_ij M(|i⟩⟨j|)^T ⊗ |j⟩⟨i|, so Tr_out τ is the effect on the input.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::tensor::{
    partial_trace, partial_transpose, tensor, CMatrix, LabeledOperator, SpaceLabel, TensorError, Tolerance, C64, ONE,
    ZERO,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstrumentError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad state: {0}")]
    BadState(String),
    #[error("duplicate outcome `{0}`")]
    DuplicateOutcome(String),
    #[error("instrument has no elements")]
    Empty,
    #[error("exogenous probabilities invalid: {0}")]
    BadProbabilities(String),
    #[error("invalid instrument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantumNode {
    pub name: String,
    pub in_space: SpaceLabel,
    pub out_space: SpaceLabel,
}

impl QuantumNode {
    pub fn new(name: impl Into<String>, din: usize, dout: usize) -> Self {
        let name = name.into();
        QuantumNode {
            in_space: SpaceLabel::new(format!("{name}.in"), din),
            out_space: SpaceLabel::new(format!("{name}.out"), dout),
            name,
        }
    }

    pub fn din(&self) -> usize {
        self.in_space.dim
    }

    pub fn dout(&self) -> usize {
        self.out_space.dim
    }

    /// Factor list `[out, in]` used by instrument Choi operators.
    pub fn choi_factors(&self) -> Vec<SpaceLabel> {
        vec![self.out_space.clone(), self.in_space.clone()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentElement {
    pub outcome: String,
    pub choi: LabeledOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub node: QuantumNode,
    pub setting: String,
    pub elements: Vec<InstrumentElement>,
}

/// Choi operator of a linear map from L(H_in) to L(H_out).
pub fn choi_of_map<F>(node: &QuantumNode, map: F) -> Result<LabeledOperator, InstrumentError>
where
    F: Fn(&CMatrix) -> CMatrix,
{
    let (din, dout) = (node.din(), node.dout());
    let mut images = Vec::with_capacity(din * din);
    for b in 0..din {
        for a in 0..din {
            let mut e = CMatrix::zeros(din, din);
            e[(b, a)] = ONE;
            let img = map(&e);
            if img.nrows() != dout || img.ncols() != dout {
                return Err(InstrumentError::DimensionMismatch(format!(
                    "map image is {}x{}, node `{}` out dim is {}",
                    img.nrows(),
                    img.ncols(),
                    node.name,
                    dout
                )));
            }
            images.push(img);
        }
    }
    // τ[(o1,a),(o2,b)] = M(|b⟩⟨a|)[o2,o1]
    let n = din * dout;
    let data = CMatrix::from_fn(n, n, |r, c| {
        let (o1, a) = (r / din, r % din);
        let (o2, b) = (c / din, c % din);
        images[b * din + a][(o2, o1)]
    });
    Ok(LabeledOperator::new(node.choi_factors(), data)?)
}

/// Choi operator of the CP map X ↦ Σ_k K_k X K_k†.
pub fn choi_of_kraus(node: &QuantumNode, kraus: &[CMatrix]) -> Result<LabeledOperator, InstrumentError> {
    for k in kraus {
        if k.nrows() != node.dout() || k.ncols() != node.din() {
            return Err(InstrumentError::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                node.dout(),
                node.din()
            )));
        }
    }
    choi_of_map(node, |x| {
        let mut acc = CMatrix::zeros(node.dout(), node.dout());
        for k in kraus {
            acc += k * x * k.adjoint();
        }
        acc
    })
}

fn check_state(m: &CMatrix, dim: usize, what: &str, tol: &Tolerance) -> Result<(), InstrumentError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(InstrumentError::BadState(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    let op = LabeledOperator::new(vec![SpaceLabel::new("s", dim)], m.clone())?;
    if !op.is_hermitian(tol) {
        return Err(InstrumentError::BadState(format!("{what} is not Hermitian")));
    }
    let min = op.min_eigenvalue();
    if min < -tol.eps_psd {
        return Err(InstrumentError::BadState(format!(
            "{what} is not positive semi-definite (min eigenvalue {min:e})"
        )));
    }
    let tr = op.trace();
    if (tr - ONE).norm() > tol.eps_trace {
        return Err(InstrumentError::BadState(format!("{what} has trace {} (expected 1)", tr.re)));
    }
    Ok(())
}

impl InstrumentElement {
    pub fn from_choi(node: &QuantumNode, outcome: impl Into<String>, choi: CMatrix) -> Result<Self, InstrumentError> {
        Ok(InstrumentElement {
            outcome: outcome.into(),
            choi: LabeledOperator::new(node.choi_factors(), choi)?,
        })
    }

    pub fn from_kraus(node: &QuantumNode, outcome: impl Into<String>, kraus: &[CMatrix]) -> Result<Self, InstrumentError> {
        Ok(InstrumentElement {
            outcome: outcome.into(),
            choi: choi_of_kraus(node, kraus)?,
        })
    }

    /// Measure-and-prepare element ρ^T ⊗ E: effect E on the input, state ρ prepared on the output.
    pub fn measure_prepare(
        node: &QuantumNode,
        outcome: impl Into<String>,
        prepared: &CMatrix,
        effect: &CMatrix,
    ) -> Result<Self, InstrumentError> {
        if prepared.nrows() != node.dout() || prepared.ncols() != node.dout() {
            return Err(InstrumentError::DimensionMismatch(format!(
                "prepared state must be {0}x{0}",
                node.dout()
            )));
        }
        if effect.nrows() != node.din() || effect.ncols() != node.din() {
            return Err(InstrumentError::DimensionMismatch(format!("effect must be {0}x{0}", node.din())));
        }
        let out = LabeledOperator::new(vec![node.out_space.clone()], prepared.transpose())?;
        let inp = LabeledOperator::new(vec![node.in_space.clone()], effect.clone())?;
        Ok(InstrumentElement {
            outcome: outcome.into(),
            choi: tensor(&out, &inp)?,
        })
    }
}

impl Instrument {
    /// Structural checks only (factor labels, distinct outcomes); see [`validate_instrument`].
    pub fn new(node: QuantumNode, setting: impl Into<String>, elements: Vec<InstrumentElement>) -> Result<Self, InstrumentError> {
        if elements.is_empty() {
            return Err(InstrumentError::Empty);
        }
        let mut seen = BTreeSet::new();
        let factors = node.choi_factors();
        let names: Vec<&str> = factors.iter().map(|f| f.name.as_str()).collect();
        let mut fixed = Vec::with_capacity(elements.len());
        for el in elements {
            if !seen.insert(el.outcome.clone()) {
                return Err(InstrumentError::DuplicateOutcome(el.outcome));
            }
            let probe = LabeledOperator::identity(factors.clone())?;
            let choi = el
                .choi
                .reorder_like(&probe)
                .map_err(|_| InstrumentError::DimensionMismatch(format!("element `{}` must act on {:?}", el.outcome, names)))?;
            fixed.push(InstrumentElement {
                outcome: el.outcome,
                choi,
            });
        }
        Ok(Instrument {
            node,
            setting: setting.into(),
            elements: fixed,
        })
    }

    /// Structural checks plus the CP and trace conditions.
    pub fn validated(
        node: QuantumNode,
        setting: impl Into<String>,
        elements: Vec<InstrumentElement>,
        tol: &Tolerance,
    ) -> Result<Self, InstrumentError> {
        let instr = Instrument::new(node, setting, elements)?;
        let report = validate_instrument(&instr, tol);
        if !report.valid {
            return Err(InstrumentError::Invalid(report.summary()));
        }
        Ok(instr)
    }

    /// Projective measurement in the computational basis that re-prepares the
    /// observed basis state: τ^v = [v]^T ⊗ [v].
    pub fn basis_measurement(node: QuantumNode, setting: impl Into<String>, labels: &[String]) -> Result<Self, InstrumentError> {
        if node.din() != node.dout() || labels.len() != node.din() {
            return Err(InstrumentError::DimensionMismatch(format!(
                "basis measurement on `{}` needs equal in/out dims and one label per basis state",
                node.name
            )));
        }
        let d = node.din();
        let elements = labels
            .iter()
            .enumerate()
            .map(|(v, label)| {
                let mut p = CMatrix::zeros(d, d);
                p[(v, v)] = ONE;
                InstrumentElement::measure_prepare(&node, label.clone(), &p, &p)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Instrument::new(node, setting, elements)
    }

    pub fn element(&self, outcome: &str) -> Option<&InstrumentElement> {
        self.elements.iter().find(|e| e.outcome == outcome)
    }

    pub fn outcomes(&self) -> Vec<&str> {
        self.elements.iter().map(|e| e.outcome.as_str()).collect()
    }

    /// The outcome-summed channel τ^{|z}.
    pub fn channel(&self) -> LabeledOperator {
        let mut acc = self.elements[0].choi.clone();
        for e in &self.elements[1..] {
            acc = acc.add(&e.choi).expect("elements share factors");
        }
        acc
    }

    /// The state ρ if this is a single-element instrument of the form ρ^T ⊗ I.
    pub fn do_state(&self, tol: &Tolerance) -> Option<CMatrix> {
        if self.elements.len() != 1 {
            return None;
        }
        let choi = &self.elements[0].choi;
        let din = self.node.din() as f64;
        let reduced = partial_trace(choi, &[self.node.in_space.name.as_str()]).ok()?;
        let rho_t = reduced.scale_real(1.0 / din);
        let rebuilt = tensor(&rho_t, &LabeledOperator::identity(vec![self.node.in_space.clone()]).ok()?).ok()?;
        if rebuilt.distance(choi).ok()? > tol.eps_trace {
            return None;
        }
        let rho = rho_t.data().transpose();
        check_state(&rho, self.node.dout(), "do state", tol).ok()?;
        Some(rho)
    }

    pub fn is_do_instrument(&self, tol: &Tolerance) -> bool {
        self.do_state(tol).is_some()
    }

    /// Equal setting, node and elements (Choi operators within `eps`).
    pub fn approx_eq(&self, other: &Instrument, eps: f64) -> bool {
        self.node == other.node
            && self.setting == other.setting
            && self.elements.len() == other.elements.len()
            && self
                .elements
                .iter()
                .all(|e| other.element(&e.outcome).is_some_and(|o| e.choi.approx_eq(&o.choi, eps)))
    }
}

/// Single-element instrument (ρ_out)^T ⊗ I_in.
pub fn make_do_instrument(node: &QuantumNode, outcome: impl Into<String>, state: &CMatrix) -> Result<Instrument, InstrumentError> {
    make_do_instrument_with(node, outcome, state, &Tolerance::default())
}

pub fn make_do_instrument_with(
    node: &QuantumNode,
    outcome: impl Into<String>,
    state: &CMatrix,
    tol: &Tolerance,
) -> Result<Instrument, InstrumentError> {
    check_state(state, node.dout(), "do state", tol)?;
    let id = CMatrix::identity(node.din(), node.din());
    let el = InstrumentElement::measure_prepare(node, outcome, state, &id)?;
    Instrument::new(node.clone(), "do", vec![el])
}

#[derive(Debug, Clone, Serialize)]
pub struct ElementStatus {
    pub outcome: String,
    pub min_eigenvalue: f64,
    pub hermitian_residual: f64,
    pub psd: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstrumentReport {
    pub node: String,
    pub setting: String,
    pub elements: Vec<ElementStatus>,
    pub trace_residual: f64,
    pub valid: bool,
}

impl InstrumentReport {
    pub fn summary(&self) -> String {
        let bad: Vec<String> = self
            .elements
            .iter()
            .filter(|e| !e.psd)
            .map(|e| format!("element `{}` not positive (min eigenvalue {:e})", e.outcome, e.min_eigenvalue))
            .collect();
        let mut parts = bad;
        parts.push(format!("trace residual {:e}", self.trace_residual));
        format!("instrument `{}` at `{}`: {}", self.setting, self.node, parts.join("; "))
    }
}

pub fn validate_instrument(instr: &Instrument, tol: &Tolerance) -> InstrumentReport {
    let elements: Vec<ElementStatus> = instr
        .elements
        .iter()
        .map(|e| {
            let min = e.choi.min_eigenvalue();
            let herm = e.choi.hermitian_residual();
            ElementStatus {
                outcome: e.outcome.clone(),
                min_eigenvalue: min,
                hermitian_residual: herm,
                psd: herm <= tol.eps_herm && min >= -tol.eps_psd,
            }
        })
        .collect();
    let effect = partial_trace(&instr.channel(), &[instr.node.out_space.name.as_str()]).expect("out factor present");
    let trace_residual = (effect.data() - CMatrix::identity(instr.node.din(), instr.node.din())).norm();
    let valid = elements.iter().all(|e| e.psd) && trace_residual <= tol.eps_trace;
    InstrumentReport {
        node: instr.node.name.clone(),
        setting: instr.setting.clone(),
        elements,
        trace_residual,
        valid,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousOutcome {
    pub label: String,
    pub prob: f64,
    pub state: LabeledOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousInstrument {
    pub node: QuantumNode,
    pub outcomes: Vec<ExogenousOutcome>,
}

impl ExogenousInstrument {
    pub fn new(node: QuantumNode, outcomes: Vec<(String, f64, CMatrix)>, tol: &Tolerance) -> Result<Self, InstrumentError> {
        if outcomes.is_empty() {
            return Err(InstrumentError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut total = 0.0;
        let mut out = Vec::with_capacity(outcomes.len());
        for (label, prob, state) in outcomes {
            if !seen.insert(label.clone()) {
                return Err(InstrumentError::DuplicateOutcome(label));
            }
            if !(0.0..=1.0 + tol.eps_trace).contains(&prob) || !prob.is_finite() {
                return Err(InstrumentError::BadProbabilities(format!("P({label}) = {prob}")));
            }
            check_state(&state, node.dout(), &format!("state for outcome `{label}`"), tol)?;
            total += prob;
            out.push(ExogenousOutcome {
                label,
                prob,
                state: LabeledOperator::new(vec![node.out_space.clone()], state)?,
            });
        }
        if (total - 1.0).abs() > tol.eps_trace {
            return Err(InstrumentError::BadProbabilities(format!("probabilities sum to {total}")));
        }
        Ok(ExogenousInstrument { node, outcomes: out })
    }

    /// Single deterministic preparation.
    pub fn deterministic(node: QuantumNode, label: impl Into<String>, state: CMatrix) -> Result<Self, InstrumentError> {
        ExogenousInstrument::new(node, vec![(label.into(), 1.0, state)], &Tolerance::default())
    }

    /// Trivial exogenous node: dim-1 output, one outcome with probability 1.
    pub fn trivial(name: impl Into<String>) -> Self {
        let node = QuantumNode::new(name, 1, 1);
        ExogenousInstrument::deterministic(node, "*", CMatrix::identity(1, 1)).expect("1x1 identity is a state")
    }

    pub fn outcome(&self, label: &str) -> Option<&ExogenousOutcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }

    /// Σ_λ P(λ) ρ^λ.
    pub fn average_state(&self) -> LabeledOperator {
        let d = self.node.dout();
        let mut acc = CMatrix::zeros(d, d);
        for o in &self.outcomes {
            acc += o.state.data() * C64::new(o.prob, 0.0);
        }
        LabeledOperator::new(vec![self.node.out_space.clone()], acc).expect("dims match")
    }
}

/// τ̃^λ = P(λ) (ρ^λ)^T ⊗ I/d_in over `[node.out, node.in]`.
pub fn make_exogenous_tilde(ex: &ExogenousInstrument) -> Vec<(String, LabeledOperator)> {
    let din = ex.node.din();
    let mixed = LabeledOperator::identity(vec![ex.node.in_space.clone()])
        .expect("valid label")
        .scale_real(1.0 / din as f64);
    ex.outcomes
        .iter()
        .map(|o| {
            let out_name = ex.node.out_space.name.as_str();
            let rho_t = partial_transpose(&o.state, &[out_name]).expect("own factor").scale_real(o.prob);
            (o.label.clone(), tensor(&rho_t, &mixed).expect("disjoint factors"))
        })
        .collect()
}

/// Qubit helpers used by examples and tests.
pub mod qubit {
    use super::*;

    pub fn ket(k: usize) -> Vec<C64> {
        let mut v = vec![ZERO, ZERO];
        v[k] = ONE;
        v
    }

    pub fn plus() -> Vec<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![C64::new(s, 0.0), C64::new(s, 0.0)]
    }

    pub fn minus() -> Vec<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![C64::new(s, 0.0), C64::new(-s, 0.0)]
    }

    pub fn proj(v: &[C64]) -> CMatrix {
        CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }
}
