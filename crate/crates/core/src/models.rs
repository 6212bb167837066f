//! Bundled worked models: the two-node chain with two exogenous preparation
//! contexts, and the common-cause Bell model.

use std::collections::BTreeMap;

use crate::circuit::{Circuit, Gate};
use crate::instruments::qubit::{ket, minus, plus, proj};
use crate::instruments::{make_do_instrument, ExogenousInstrument, Instrument, InstrumentElement, QuantumNode};
use crate::process::Dag;
use crate::qsm::{Qsm, SinkNode};
use crate::tensor::{CMatrix, SpaceLabel, Tolerance, C64};

/// Orthonormal complement of a qubit ket.
pub fn qubit_complement(phi: &[C64]) -> Vec<C64> {
    vec![-phi[1].conj(), phi[0].conj()]
}

/// Normalized cos θ|0⟩ + e^{iφ} sin θ|1⟩.
pub fn qubit_ket(theta: f64, phase: f64) -> Vec<C64> {
    vec![C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phase)]
}

/// Generic φ used for the bundled active instrument: neither a Z nor an X eigenstate.
pub fn generic_phi() -> Vec<C64> {
    qubit_ket(std::f64::consts::PI / 8.0, 0.0)
}

/// {([+])^T ⊗ [+], ([−])^T ⊗ [−]}: measure in the ± basis, re-prepare the result.
pub fn pm_instrument(node: &QuantumNode, setting: &str) -> Instrument {
    let (p, m) = (proj(&plus()), proj(&minus()));
    let elements = vec![
        InstrumentElement::measure_prepare(node, "+", &p, &p).expect("qubit node"),
        InstrumentElement::measure_prepare(node, "-", &m, &m).expect("qubit node"),
    ];
    Instrument::new(node.clone(), setting, elements).expect("distinct outcomes")
}

/// {([+])^T ⊗ [φ], ([−])^T ⊗ [φ̄]}: measure {φ, φ̄}, prepare ± accordingly.
pub fn active_instrument(node: &QuantumNode, setting: &str, phi: &[C64]) -> Instrument {
    let (p, m) = (proj(&plus()), proj(&minus()));
    let elements = vec![
        InstrumentElement::measure_prepare(node, "+", &p, &proj(phi)).expect("qubit node"),
        InstrumentElement::measure_prepare(node, "-", &m, &proj(&qubit_complement(phi))).expect("qubit node"),
    ];
    Instrument::new(node.clone(), setting, elements).expect("distinct outcomes")
}

fn with_setting(mut instr: Instrument, setting: &str) -> Instrument {
    instr.setting = setting.to_string();
    instr
}

fn chain_model(name: &str, exo: ExogenousInstrument) -> Qsm {
    let a = QuantumNode::new("A", 2, 2);
    let b = QuantumNode::new("B", 2, 2);
    let la = exo;
    let lb = ExogenousInstrument::trivial("L_B");
    let sink = SinkNode {
        name: "S".into(),
        factors: vec![SpaceLabel::new("S.B", 2), SpaceLabel::new("S.L_B", 1)],
    };
    let circuit = Circuit::new(
        vec![
            a.out_space.clone(),
            b.out_space.clone(),
            la.node.out_space.clone(),
            lb.node.out_space.clone(),
        ],
        vec![a.in_space.clone(), b.in_space.clone(), sink.factors[0].clone(), sink.factors[1].clone()],
        vec![
            Gate::wire(la.node.out_space.clone(), "A.in"),
            Gate::wire(a.out_space.clone(), "B.in"),
            Gate::wire(b.out_space.clone(), "S.B"),
            Gate::wire(lb.node.out_space.clone(), "S.L_B"),
        ],
    )
    .expect("chain wiring");
    let dag = Dag::new(vec!["A".into(), "B".into()], [("A".to_string(), "B".to_string())]).expect("acyclic");
    let minus_state = proj(&minus());
    let instruments = vec![
        pm_instrument(&a, "1"),
        with_setting(make_do_instrument(&a, "-", &minus_state).expect("state"), "2"),
        active_instrument(&a, "3", &generic_phi()),
        active_instrument(&a, "3-phi0", &ket(0)),
        active_instrument(&a, "3-phi1", &ket(1)),
        active_instrument(&a, "3-phi+", &plus()),
        pm_instrument(&b, "1"),
        pm_instrument(&b, "2"),
        pm_instrument(&b, "3"),
        Instrument::basis_measurement(b.clone(), "z", &["0".into(), "1".into()]).expect("qubit"),
    ];
    let mut do_states = BTreeMap::new();
    for node in ["A", "B"] {
        let table: BTreeMap<String, CMatrix> =
            [("+".to_string(), proj(&plus())), ("-".to_string(), proj(&minus()))].into_iter().collect();
        do_states.insert(node.to_string(), table);
    }
    Qsm::new(
        name,
        vec![a, b],
        vec![la, lb],
        sink,
        circuit,
        dag,
        instruments,
        do_states,
    )
    .expect("chain model is well formed")
}

/// Chain A → B with identity channels; the exogenous node of A prepares [0] or
/// [1] with probability ½ each.
pub fn example1() -> Qsm {
    let node = QuantumNode::new("L_A", 1, 2);
    let exo = ExogenousInstrument::new(
        node,
        vec![("0".into(), 0.5, proj(&ket(0))), ("1".into(), 0.5, proj(&ket(1)))],
        &Tolerance::default(),
    )
    .expect("valid preparation");
    chain_model("example1", exo)
}

/// Same chain, but the exogenous node of A prepares [+] or [−] with probability ½ each.
pub fn example2() -> Qsm {
    let node = QuantumNode::new("L_A", 1, 2);
    let exo = ExogenousInstrument::new(
        node,
        vec![("+".into(), 0.5, proj(&plus())), ("-".into(), 0.5, proj(&minus()))],
        &Tolerance::default(),
    )
    .expect("valid preparation");
    chain_model("example2", exo)
}

/// |Φ+⟩ = (|00⟩ + |11⟩)/√2.
pub fn phi_plus() -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]
}

/// Common cause C → A, C → B: C prepares |Φ+⟩ on C_A ⊗ C_B, identity channels
/// to A and B, computational-basis instruments "z" at A and B.
pub fn bell() -> Qsm {
    let c = QuantumNode::new("C", 1, 4);
    let a = QuantumNode::new("A", 2, 2);
    let b = QuantumNode::new("B", 2, 2);
    let exo: Vec<ExogenousInstrument> = ["L_C", "L_A", "L_B"].iter().map(|n| ExogenousInstrument::trivial(*n)).collect();
    let sink = SinkNode {
        name: "S".into(),
        factors: vec![
            SpaceLabel::new("S.A", 2),
            SpaceLabel::new("S.B", 2),
            SpaceLabel::new("S.L_A", 1),
            SpaceLabel::new("S.L_B", 1),
        ],
    };
    let ca = SpaceLabel::new("C_A", 2);
    let cb = SpaceLabel::new("C_B", 2);
    let mut inputs = vec![c.out_space.clone(), a.out_space.clone(), b.out_space.clone()];
    inputs.extend(exo.iter().map(|e| e.node.out_space.clone()));
    let mut outputs = vec![c.in_space.clone(), a.in_space.clone(), b.in_space.clone()];
    outputs.extend(sink.factors.iter().cloned());
    let circuit = Circuit::new(
        inputs,
        outputs,
        vec![
            Gate::regroup(vec![c.out_space.clone()], vec![ca.clone(), cb.clone()]).expect("4 = 2·2"),
            Gate::wire(ca, "A.in"),
            Gate::wire(cb, "B.in"),
            Gate::wire(exo[0].node.out_space.clone(), "C.in"),
            Gate::wire(a.out_space.clone(), "S.A"),
            Gate::wire(b.out_space.clone(), "S.B"),
            Gate::wire(exo[1].node.out_space.clone(), "S.L_A"),
            Gate::wire(exo[2].node.out_space.clone(), "S.L_B"),
        ],
    )
    .expect("bell wiring");
    let dag = Dag::new(
        vec!["C".into(), "A".into(), "B".into()],
        [("C".to_string(), "A".to_string()), ("C".to_string(), "B".to_string())],
    )
    .expect("acyclic");
    let prep = InstrumentElement::measure_prepare(&c, "Phi+", &proj(&phi_plus()), &CMatrix::identity(1, 1))
        .expect("C dims");
    let labels = ["0".to_string(), "1".to_string()];
    let instruments = vec![
        Instrument::new(c.clone(), "prep", vec![prep]).expect("one element"),
        Instrument::basis_measurement(a.clone(), "z", &labels).expect("qubit"),
        Instrument::basis_measurement(b.clone(), "z", &labels).expect("qubit"),
    ];
    let mut do_states = BTreeMap::new();
    for node in ["A", "B"] {
        let table: BTreeMap<String, CMatrix> =
            [("0".to_string(), proj(&ket(0))), ("1".to_string(), proj(&ket(1)))].into_iter().collect();
        do_states.insert(node.to_string(), table);
    }
    Qsm::new("bell", vec![c, a, b], exo, sink, circuit, dag, instruments, do_states).expect("bell model is well formed")
}
