//! Seeded random states, isometries and instruments for validation batteries and tests.

use rand::Rng;

use std::collections::BTreeMap;

use crate::circuit::{Circuit, Gate};
use crate::instruments::{ExogenousInstrument, Instrument, InstrumentElement, QuantumNode};
use crate::process::Dag;
use crate::qsm::{Qsm, SinkNode};
use crate::tensor::{CMatrix, SpaceLabel, Tolerance, C64};

fn gaussian_like<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Random isometry V (rows × cols, rows ≥ cols) from the QR factor of a random matrix.
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let q = gaussian_like(rng, rows, cols).qr().q();
    q.columns(0, cols).into_owned()
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    random_isometry(rng, d, d)
}

pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<C64> {
    let v = gaussian_like(rng, d, 1);
    let n = v.norm();
    v.iter().map(|x| x / n).collect()
}

/// Random density matrix of the given rank (unit trace).
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> CMatrix {
    let g = gaussian_like(rng, d, rank.max(1));
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

/// Kraus operators of a random channel with `k` Kraus operators; needs `dout·k ≥ din`.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, din: usize, dout: usize, k: usize) -> Vec<CMatrix> {
    let v = random_isometry(rng, dout * k, din);
    (0..k).map(|j| v.rows(j * dout, dout).into_owned()).collect()
}

/// Random instrument with `n_outcomes` outcomes labeled "0", "1", ...
pub fn random_instrument<R: Rng + ?Sized>(rng: &mut R, node: &QuantumNode, setting: &str, n_outcomes: usize) -> Instrument {
    let per = 2;
    let kraus = random_kraus(rng, node.din(), node.dout(), n_outcomes * per);
    let elements = (0..n_outcomes)
        .map(|a| {
            InstrumentElement::from_kraus(node, a.to_string(), &kraus[a * per..(a + 1) * per]).expect("dims match")
        })
        .collect();
    Instrument::new(node.clone(), setting, elements).expect("distinct outcomes")
}

/// Random CPTP channel as a one-element instrument.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, node: &QuantumNode) -> Instrument {
    random_instrument(rng, node, "channel", 1)
}

/// Random QSM on `n` nodes (named "N0", "N1", ...) whose global map is built
/// from unitary gates only. Each edge i → j (i < j) is present with
/// probability `edge_prob`. A node's output carries one qubit per child (one
/// qubit, sent to the sink, if it has none); its input qubit is a random
/// unitary image of its parents' qubits and its own exogenous qubit, the rest
/// going to the sink. Exogenous nodes prepare one of two random states. Each
/// node carries a random two-outcome instrument "r".
pub fn random_qsm<R: Rng + ?Sized>(rng: &mut R, n: usize, edge_prob: f64) -> Qsm {
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(edge_prob) {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    let dag = Dag::new(names.clone(), edges).expect("edges follow index order");
    let nodes: Vec<QuantumNode> = names
        .iter()
        .map(|s| QuantumNode::new(s.clone(), 2, 1 << dag.children(s).len().max(1)))
        .collect();
    let tol = Tolerance::default();
    let exogenous: Vec<ExogenousInstrument> = names
        .iter()
        .map(|s| {
            let p: f64 = rng.random_range(0.05..0.95);
            let outcomes = vec![
                ("0".to_string(), p, random_state(rng, 2, 1)),
                ("1".to_string(), 1.0 - p, random_state(rng, 2, 2)),
            ];
            ExogenousInstrument::new(QuantumNode::new(format!("L_{s}"), 1, 2), outcomes, &tol).expect("valid states")
        })
        .collect();
    let piece = |from: &str, to: &str| SpaceLabel::new(format!("{from}.to.{to}"), 2);
    let mut gates = Vec::new();
    let mut sink = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let kids = dag.children(&names[i]);
        if kids.is_empty() {
            let s = SpaceLabel::new(format!("S.out.{}", names[i]), 2);
            gates.push(Gate::wire(node.out_space.clone(), s.name.clone()));
            sink.push(s);
        } else {
            let outs = kids.iter().map(|c| piece(&names[i], c)).collect();
            gates.push(Gate::regroup(vec![node.out_space.clone()], outs).expect("one qubit per child"));
        }
    }
    for (i, node) in nodes.iter().enumerate() {
        let mut ins: Vec<SpaceLabel> = dag.parents(&names[i]).iter().map(|p| piece(p, &names[i])).collect();
        ins.push(exogenous[i].node.out_space.clone());
        let d: usize = 1 << ins.len();
        let s = SpaceLabel::new(format!("S.in.{}", names[i]), d / 2);
        let outs = vec![node.in_space.clone(), s.clone()];
        sink.push(s);
        let m = random_unitary(rng, d);
        gates.push(Gate::new(format!("node {}", names[i]), ins, outs, m).expect("shape"));
    }
    let mut inputs: Vec<SpaceLabel> = nodes.iter().map(|n| n.out_space.clone()).collect();
    inputs.extend(exogenous.iter().map(|e| e.node.out_space.clone()));
    let mut outputs: Vec<SpaceLabel> = nodes.iter().map(|n| n.in_space.clone()).collect();
    outputs.extend(sink.iter().cloned());
    let circuit = Circuit::new(inputs, outputs, gates).expect("wiring follows the graph");
    let instruments = nodes.iter().map(|nd| random_instrument(rng, nd, "r", 2)).collect();
    Qsm::new(
        "random",
        nodes,
        exogenous,
        SinkNode {
            name: "S".into(),
            factors: sink,
        },
        circuit,
        dag,
        instruments,
        BTreeMap::new(),
    )
    .expect("generated model is well formed")
}
