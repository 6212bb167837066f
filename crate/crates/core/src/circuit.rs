//! Isometries as ordered lists of local gates on labeled wires.
//!
//! A gate consumes live wire labels and produces new ones; a label may be
//! reproduced by the gate that consumed it (in-place gates). The composed map
//! W is never formed densely except on request.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{
    partial_trace, permute_factors, sub_offsets, tensor, CMatrix, LabeledOperator, SpaceLabel, TensorError, C64, ONE,
    ZERO,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("wiring: {0}")]
    Wiring(String),
    #[error("gate `{gate}`: matrix is {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    Shape {
        gate: String,
        rows: usize,
        cols: usize,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error("unknown wire `{0}`")]
    UnknownLabel(String),
    #[error("bad input assignment: {0}")]
    BadAssignment(String),
    #[error("dense materialization of dimension {0} refused")]
    TooLarge(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub inputs: Vec<SpaceLabel>,
    pub outputs: Vec<SpaceLabel>,
    /// d_out × d_in, row-major composite indices over `outputs` / `inputs`.
    pub matrix: CMatrix,
}

fn prod(labels: &[SpaceLabel]) -> usize {
    labels.iter().map(|l| l.dim).product()
}

impl Gate {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<SpaceLabel>,
        outputs: Vec<SpaceLabel>,
        matrix: CMatrix,
    ) -> Result<Self, CircuitError> {
        let name = name.into();
        let (r, c) = (prod(&outputs), prod(&inputs));
        if matrix.nrows() != r || matrix.ncols() != c {
            return Err(CircuitError::Shape {
                gate: name,
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                exp_rows: r,
                exp_cols: c,
            });
        }
        Ok(Gate {
            name,
            inputs,
            outputs,
            matrix,
        })
    }

    /// Classical reversible gate: basis state i ↦ basis state map(i).
    pub fn permutation<F: Fn(usize) -> usize>(
        name: impl Into<String>,
        inputs: Vec<SpaceLabel>,
        outputs: Vec<SpaceLabel>,
        map: F,
    ) -> Result<Self, CircuitError> {
        let (r, c) = (prod(&outputs), prod(&inputs));
        let mut m = CMatrix::zeros(r, c);
        for i in 0..c {
            let j = map(i);
            if j >= r {
                return Err(CircuitError::Wiring(format!("permutation image {j} out of range {r}")));
            }
            m[(j, i)] = ONE;
        }
        Gate::new(name, inputs, outputs, m)
    }

    /// Identity map between two groupings of the same total dimension
    /// (relabel, split or merge wires).
    pub fn regroup(inputs: Vec<SpaceLabel>, outputs: Vec<SpaceLabel>) -> Result<Self, CircuitError> {
        let d = prod(&inputs);
        if d != prod(&outputs) {
            return Err(CircuitError::Wiring(format!(
                "regroup of {:?} into {:?} changes dimension",
                inputs.iter().map(|l| &l.name).collect::<Vec<_>>(),
                outputs.iter().map(|l| &l.name).collect::<Vec<_>>()
            )));
        }
        let name = format!(
            "regroup {} -> {}",
            inputs.iter().map(|l| l.name.as_str()).collect::<Vec<_>>().join(","),
            outputs.iter().map(|l| l.name.as_str()).collect::<Vec<_>>().join(",")
        );
        Gate::new(name, inputs, outputs, CMatrix::identity(d, d))
    }

    pub fn wire(from: SpaceLabel, to: impl Into<String>) -> Self {
        let to = SpaceLabel::new(to, from.dim);
        Gate::regroup(vec![from], vec![to]).expect("same dimension")
    }

    /// ‖G†G − I‖_F.
    pub fn isometry_residual(&self) -> f64 {
        let n = self.matrix.ncols();
        (self.matrix.adjoint() * &self.matrix - CMatrix::identity(n, n)).norm()
    }
}

/// Pure (unnormalized) vector over labeled factors.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub factors: Vec<SpaceLabel>,
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn new(factors: Vec<SpaceLabel>, amps: Vec<C64>) -> Result<Self, CircuitError> {
        if prod(&factors) != amps.len() {
            return Err(CircuitError::BadAssignment(format!(
                "vector length {} does not match factors",
                amps.len()
            )));
        }
        Ok(StateVector { factors, amps })
    }

    pub fn kron(&self, other: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        StateVector { factors, amps }
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn apply(&self, gate: &Gate) -> Result<StateVector, CircuitError> {
        let mut pos = Vec::with_capacity(gate.inputs.len());
        for l in &gate.inputs {
            let p = self
                .position(&l.name)
                .ok_or_else(|| CircuitError::UnknownLabel(l.name.clone()))?;
            pos.push(p);
        }
        let rest: Vec<usize> = (0..self.factors.len()).filter(|p| !pos.contains(p)).collect();
        let dims = self.dims();
        let off_in = sub_offsets(&dims, &pos);
        let off_rest = sub_offsets(&dims, &rest);
        let d_rest = off_rest.len();
        let d_out = gate.matrix.nrows();
        let mut amps = vec![ZERO; d_out * d_rest];
        for (i, &oi) in off_in.iter().enumerate() {
            for (r, &or) in off_rest.iter().enumerate() {
                let a = self.amps[oi + or];
                if a == ZERO {
                    continue;
                }
                for o in 0..d_out {
                    let g = gate.matrix[(o, i)];
                    if g != ZERO {
                        amps[o * d_rest + r] += g * a;
                    }
                }
            }
        }
        let mut factors = gate.outputs.clone();
        factors.extend(rest.iter().map(|&p| self.factors[p].clone()));
        Ok(StateVector { factors, amps })
    }

    /// Reduced operator |v⟩⟨v| traced down to `keep` (in that order).
    pub fn reduced(&self, keep: &[&str]) -> Result<LabeledOperator, CircuitError> {
        let mut kp = Vec::with_capacity(keep.len());
        for k in keep {
            kp.push(self.position(k).ok_or_else(|| CircuitError::UnknownLabel(k.to_string()))?);
        }
        let tp: Vec<usize> = (0..self.factors.len()).filter(|p| !kp.contains(p)).collect();
        let dims = self.dims();
        let ok = sub_offsets(&dims, &kp);
        let ot = sub_offsets(&dims, &tp);
        let m = CMatrix::from_fn(ok.len(), ot.len(), |a, t| self.amps[ok[a] + ot[t]]);
        let rho = &m * m.adjoint();
        Ok(LabeledOperator::new(
            kp.iter().map(|&p| self.factors[p].clone()).collect(),
            rho,
        )?)
    }

    /// Amplitudes reordered to the given factor order.
    pub fn ordered(&self, order: &[&str]) -> Result<Vec<C64>, CircuitError> {
        let mut pos = Vec::with_capacity(order.len());
        for n in order {
            pos.push(self.position(n).ok_or_else(|| CircuitError::UnknownLabel(n.to_string()))?);
        }
        if pos.len() != self.factors.len() {
            return Err(CircuitError::Wiring("ordering does not cover all factors".into()));
        }
        let map = sub_offsets(&self.dims(), &pos);
        Ok(map.iter().map(|&i| self.amps[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub inputs: Vec<SpaceLabel>,
    pub outputs: Vec<SpaceLabel>,
    pub gates: Vec<Gate>,
}

const DENSE_LIMIT: usize = 1 << 12;

impl Circuit {
    pub fn new(inputs: Vec<SpaceLabel>, outputs: Vec<SpaceLabel>, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        let mut live: BTreeMap<String, usize> = BTreeMap::new();
        for l in &inputs {
            if live.insert(l.name.clone(), l.dim).is_some() {
                return Err(CircuitError::Wiring(format!("duplicate input `{}`", l.name)));
            }
        }
        for l in &outputs {
            if live.contains_key(&l.name) {
                return Err(CircuitError::Wiring(format!(
                    "`{}` is both an input and an output; relabel with a wire gate",
                    l.name
                )));
            }
        }
        for g in &gates {
            for l in &g.inputs {
                match live.remove(&l.name) {
                    Some(d) if d == l.dim => {}
                    Some(d) => {
                        return Err(CircuitError::Wiring(format!(
                            "gate `{}` expects `{}` of dim {}, wire has dim {d}",
                            g.name, l.name, l.dim
                        )))
                    }
                    None => {
                        return Err(CircuitError::Wiring(format!(
                            "gate `{}` consumes `{}`, which is not live",
                            g.name, l.name
                        )))
                    }
                }
            }
            for l in &g.outputs {
                if live.insert(l.name.clone(), l.dim).is_some() {
                    return Err(CircuitError::Wiring(format!(
                        "gate `{}` produces `{}`, which is already live",
                        g.name, l.name
                    )));
                }
            }
        }
        for l in &outputs {
            match live.remove(&l.name) {
                Some(d) if d == l.dim => {}
                _ => return Err(CircuitError::Wiring(format!("output `{}` is not produced", l.name))),
            }
        }
        if let Some(name) = live.keys().next() {
            return Err(CircuitError::Wiring(format!("wire `{name}` is left dangling")));
        }
        Ok(Circuit { inputs, outputs, gates })
    }

    pub fn input_dim(&self) -> usize {
        prod(&self.inputs)
    }

    pub fn output_dim(&self) -> usize {
        prod(&self.outputs)
    }

    pub fn run(&self, state: &StateVector) -> Result<StateVector, CircuitError> {
        let mut s = state.clone();
        for g in &self.gates {
            s = s.apply(g)?;
        }
        Ok(s)
    }

    /// Dense W (d_out × d_in) in the declared output/input orders.
    pub fn to_matrix(&self) -> Result<CMatrix, CircuitError> {
        let (din, dout) = (self.input_dim(), self.output_dim());
        if din * dout > DENSE_LIMIT * DENSE_LIMIT / 16 {
            return Err(CircuitError::TooLarge(din.max(dout)));
        }
        let order: Vec<&str> = self.outputs.iter().map(|l| l.name.as_str()).collect();
        let mut w = CMatrix::zeros(dout, din);
        for k in 0..din {
            let mut amps = vec![ZERO; din];
            amps[k] = ONE;
            let out = self.run(&StateVector::new(self.inputs.clone(), amps)?)?;
            for (r, a) in out.ordered(&order)?.into_iter().enumerate() {
                w[(r, k)] = a;
            }
        }
        Ok(w)
    }

    /// ρ^W = Σ_ij W|i⟩⟨j|W† ⊗ |i⟩⟨j| over `[outputs..., inputs...]`.
    pub fn choi(&self) -> Result<LabeledOperator, CircuitError> {
        let open: Vec<&str> = self.inputs.iter().map(|l| l.name.as_str()).collect();
        let keep: Vec<&str> = self.outputs.iter().map(|l| l.name.as_str()).collect();
        if self.input_dim() * self.output_dim() > DENSE_LIMIT {
            return Err(CircuitError::TooLarge(self.input_dim() * self.output_dim()));
        }
        self.reduced_choi(&open, &[], &keep)
    }

    /// CJ operator (process convention) of the channel from the `open` inputs to the
    /// `keep` outputs, with the remaining inputs fed the given states and the
    /// remaining outputs traced. Factors: `[keep..., open...]`.
    pub fn reduced_choi(
        &self,
        open: &[&str],
        fixed: &[(&str, &LabeledOperator)],
        keep: &[&str],
    ) -> Result<LabeledOperator, CircuitError> {
        let mut initial = StateVector {
            factors: Vec::new(),
            amps: vec![ONE],
        };
        let mut refs: Vec<(String, String)> = Vec::new();
        for inp in &self.inputs {
            let name = inp.name.as_str();
            let is_open = open.contains(&name);
            let state = fixed.iter().find(|(n, _)| *n == name).map(|(_, s)| *s);
            let piece = match (is_open, state) {
                (true, None) => {
                    let r = format!("{name}#ref");
                    refs.push((r.clone(), name.to_string()));
                    maximally_entangled(inp, &r)
                }
                (false, Some(rho)) => purify(inp, rho)?,
                (true, Some(_)) => {
                    return Err(CircuitError::BadAssignment(format!("`{name}` is both open and fixed")))
                }
                (false, None) => return Err(CircuitError::BadAssignment(format!("input `{name}` unassigned"))),
            };
            initial = initial.kron(&piece);
        }
        for o in open {
            if !self.inputs.iter().any(|l| l.name == *o) {
                return Err(CircuitError::UnknownLabel(o.to_string()));
            }
        }
        for (f, _) in fixed {
            if !self.inputs.iter().any(|l| l.name == *f) {
                return Err(CircuitError::UnknownLabel(f.to_string()));
            }
        }
        for k in keep {
            if !self.outputs.iter().any(|l| l.name == *k) {
                return Err(CircuitError::UnknownLabel(k.to_string()));
            }
        }
        let out = self.run(&initial)?;
        let mut kept: Vec<&str> = keep.to_vec();
        for o in open {
            let r = refs.iter().find(|(_, n)| n == o).expect("ref created");
            kept.push(r.0.as_str());
        }
        let rho = out.reduced(&kept)?;
        let renames: Vec<(&str, &str)> = refs.iter().map(|(r, n)| (r.as_str(), n.as_str())).collect();
        Ok(rho.relabel(&renames)?)
    }

    /// Max per-gate residual ‖G†G − I‖ and a global check: dense W†W when the
    /// input dimension is small, otherwise Gram matrices of seeded random probes.
    pub fn isometry_residual(&self, seed: u64) -> Result<IsometryReport, CircuitError> {
        let gate_residual = self.gates.iter().map(|g| g.isometry_residual()).fold(0.0, f64::max);
        let din = self.input_dim();
        let global_residual = if din <= 256 && self.output_dim() <= DENSE_LIMIT {
            let w = self.to_matrix()?;
            (w.adjoint() * &w - CMatrix::identity(din, din)).norm()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probes: Vec<Vec<C64>> = (0..4)
                .map(|_| {
                    (0..din)
                        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let order: Vec<&str> = self.outputs.iter().map(|l| l.name.as_str()).collect();
            let images = probes
                .iter()
                .map(|p| {
                    let out = self.run(&StateVector::new(self.inputs.clone(), p.clone())?)?;
                    out.ordered(&order)
                })
                .collect::<Result<Vec<_>, CircuitError>>()?;
            let mut worst: f64 = 0.0;
            for a in 0..probes.len() {
                for b in 0..probes.len() {
                    let before: C64 = probes[a].iter().zip(&probes[b]).map(|(x, y)| x.conj() * y).sum();
                    let after: C64 = images[a].iter().zip(&images[b]).map(|(x, y)| x.conj() * y).sum();
                    worst = worst.max((before - after).norm() / din as f64);
                }
            }
            worst
        };
        Ok(IsometryReport {
            gate_residual,
            global_residual,
            dense: din <= 256,
        })
    }

    /// Heisenberg-picture no-influence test of input `from` on output `to`:
    /// for every matrix unit O on `to`, W†(O ⊗ I)W must act as the identity on
    /// `from`. Returns the largest residual.
    pub fn influence_residual(&self, from: &str, to: &str) -> Result<f64, CircuitError> {
        Ok(self.influence_residuals(&[from], to)?[0])
    }

    /// [`Circuit::influence_residual`] for several inputs sharing one output.
    pub fn influence_residuals(&self, froms: &[&str], to: &str) -> Result<Vec<f64>, CircuitError> {
        let mut from_labels = Vec::with_capacity(froms.len());
        for from in froms {
            from_labels.push(
                self.inputs
                    .iter()
                    .find(|l| l.name == *from)
                    .ok_or_else(|| CircuitError::UnknownLabel(from.to_string()))?
                    .clone(),
            );
        }
        let to_label = self
            .outputs
            .iter()
            .find(|l| l.name == to)
            .ok_or_else(|| CircuitError::UnknownLabel(to.to_string()))?
            .clone();
        let d = to_label.dim;
        let mut worst = vec![0.0f64; froms.len()];
        for a in 0..d {
            for b in 0..d {
                let mut m = CMatrix::zeros(d, d);
                m[(a, b)] = ONE;
                let op = LabeledOperator::new(vec![to_label.clone()], m)?;
                let k = self.heisenberg(op)?;
                for (idx, from_label) in from_labels.iter().enumerate() {
                    let from = from_label.name.as_str();
                    if !k.has_factor(from) {
                        continue;
                    }
                    let reduced = partial_trace(&k, &[from])?.scale_real(1.0 / from_label.dim as f64);
                    let rebuilt = tensor(&reduced, &LabeledOperator::identity(vec![from_label.clone()])?)?;
                    worst[idx] = worst[idx].max(rebuilt.distance(&k)?);
                }
            }
        }
        Ok(worst)
    }

    /// Pull an operator on some outputs back to the inputs: W†(O ⊗ I)W restricted to its support.
    pub fn heisenberg(&self, op: LabeledOperator) -> Result<LabeledOperator, CircuitError> {
        let mut cur = op;
        for g in self.gates.iter().rev() {
            if !g.outputs.iter().any(|l| cur.has_factor(&l.name)) {
                continue;
            }
            let mut support = cur.factors().to_vec();
            for l in &g.outputs {
                if !cur.has_factor(&l.name) {
                    support.push(l.clone());
                }
            }
            let extended = cur.embed(&support)?;
            let rest: Vec<SpaceLabel> = support
                .iter()
                .filter(|l| !g.outputs.iter().any(|o| o.name == l.name))
                .cloned()
                .collect();
            let mut order: Vec<&str> = g.outputs.iter().map(|l| l.name.as_str()).collect();
            order.extend(rest.iter().map(|l| l.name.as_str()));
            let arranged = permute_factors(&extended, &order)?;
            let data = conjugate_block(arranged.data(), &g.matrix, prod(&rest));
            let mut factors = g.inputs.clone();
            factors.extend(rest);
            cur = LabeledOperator::new(factors, data)?;
        }
        Ok(cur)
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IsometryReport {
    pub gate_residual: f64,
    pub global_residual: f64,
    pub dense: bool,
}

impl IsometryReport {
    pub fn residual(&self) -> f64 {
        self.gate_residual.max(self.global_residual)
    }
}

/// (G† ⊗ I_r) O (G ⊗ I_r) with O indexed (gate_out, rest).
fn conjugate_block(o: &CMatrix, g: &CMatrix, d_r: usize) -> CMatrix {
    let (d_go, d_gi) = (g.nrows(), g.ncols());
    let rows = d_go * d_r;
    // X = O (G ⊗ I)
    let mut x = CMatrix::zeros(rows, d_gi * d_r);
    for row in 0..rows {
        for o2 in 0..d_go {
            for i2 in 0..d_gi {
                let gv = g[(o2, i2)];
                if gv == ZERO {
                    continue;
                }
                for r2 in 0..d_r {
                    x[(row, i2 * d_r + r2)] += o[(row, o2 * d_r + r2)] * gv;
                }
            }
        }
    }
    let cols = d_gi * d_r;
    let mut y = CMatrix::zeros(d_gi * d_r, cols);
    for o1 in 0..d_go {
        for i1 in 0..d_gi {
            let gv = g[(o1, i1)].conj();
            if gv == ZERO {
                continue;
            }
            for r1 in 0..d_r {
                for col in 0..cols {
                    y[(i1 * d_r + r1, col)] += gv * x[(o1 * d_r + r1, col)];
                }
            }
        }
    }
    y
}

fn maximally_entangled(label: &SpaceLabel, ref_name: &str) -> StateVector {
    let d = label.dim;
    let mut amps = vec![ZERO; d * d];
    for i in 0..d {
        amps[i * d + i] = ONE;
    }
    StateVector {
        factors: vec![label.clone(), SpaceLabel::new(ref_name, d)],
        amps,
    }
}

/// Σ_k √p_k |ψ_k⟩|k⟩ for ρ = Σ_k p_k |ψ_k⟩⟨ψ_k|.
fn purify(label: &SpaceLabel, rho: &LabeledOperator) -> Result<StateVector, CircuitError> {
    if rho.dim() != label.dim {
        return Err(CircuitError::BadAssignment(format!(
            "state for `{}` has dim {}, wire has dim {}",
            label.name,
            rho.dim(),
            label.dim
        )));
    }
    let d = label.dim;
    let is_pure_basis = (0..d).find(|&k| (rho.data()[(k, k)] - ONE).norm() < 1e-15);
    let comps: Vec<(f64, Vec<C64>)> = match is_pure_basis {
        Some(k) if (rho.data().norm() - 1.0).abs() < 1e-15 => {
            let mut v = vec![ZERO; d];
            v[k] = ONE;
            vec![(1.0, v)]
        }
        _ => rho
            .eigen_decomposition()
            .into_iter()
            .filter(|(p, _)| *p > 1e-14)
            .collect(),
    };
    if comps.is_empty() {
        return Err(CircuitError::BadAssignment(format!("state for `{}` is zero", label.name)));
    }
    let r = comps.len();
    let mut amps = vec![ZERO; d * r];
    for (k, (p, v)) in comps.iter().enumerate() {
        let s = C64::new(p.sqrt(), 0.0);
        for i in 0..d {
            amps[i * r + k] = s * v[i];
        }
    }
    Ok(StateVector {
        factors: vec![label.clone(), SpaceLabel::new(format!("{}#pur", label.name), r)],
        amps,
    })
}

/// CNOT-style XOR of `control` into `target` on d-level registers (d a power of two).
pub fn xor_copy_gate(name: impl Into<String>, control: SpaceLabel, target: SpaceLabel) -> Result<Gate, CircuitError> {
    let (dc, dt) = (control.dim, target.dim);
    if dc != dt {
        return Err(CircuitError::Wiring("copy gate needs equal register sizes".into()));
    }
    Gate::permutation(
        name,
        vec![control.clone(), target.clone()],
        vec![control, target],
        |i| {
            let (x, y) = (i / dt, i % dt);
            x * dt + (y ^ x)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::partial_trace_keep;

    fn l(n: &str, d: usize) -> SpaceLabel {
        SpaceLabel::new(n, d)
    }

    fn cnot() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for (r, c) in [(0, 0), (1, 1), (3, 2), (2, 3)] {
            m[(r, c)] = ONE;
        }
        m
    }

    #[test]
    fn wiring_errors() {
        let g = Gate::wire(l("a", 2), "b");
        assert!(Circuit::new(vec![l("a", 2)], vec![l("b", 2)], vec![g.clone()]).is_ok());
        assert!(matches!(
            Circuit::new(vec![l("a", 2)], vec![l("c", 2)], vec![g.clone()]),
            Err(CircuitError::Wiring(_))
        ));
        assert!(matches!(
            Circuit::new(vec![l("a", 2), l("x", 2)], vec![l("b", 2)], vec![g]),
            Err(CircuitError::Wiring(_))
        ));
    }

    #[test]
    fn choi_of_identity_wire_is_unnormalized_bell() {
        let c = Circuit::new(vec![l("a", 2)], vec![l("b", 2)], vec![Gate::wire(l("a", 2), "b")]).unwrap();
        let choi = c.choi().unwrap();
        assert_eq!(choi.factor_names(), vec!["b", "a"]);
        let mut expected = CMatrix::zeros(4, 4);
        for (r, cc) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            expected[(r, cc)] = ONE;
        }
        assert!((choi.data() - expected).norm() < 1e-15);
    }

    #[test]
    fn to_matrix_matches_gate_product() {
        let g1 = Gate::new("cx", vec![l("a", 2), l("b", 2)], vec![l("a", 2), l("b", 2)], cnot()).unwrap();
        let g2 = Gate::regroup(vec![l("a", 2), l("b", 2)], vec![l("b2", 2), l("a2", 2)]).unwrap();
        let c = Circuit::new(vec![l("a", 2), l("b", 2)], vec![l("a2", 2), l("b2", 2)], vec![g1, g2]).unwrap();
        let w = c.to_matrix().unwrap();
        // regroup to (b2,a2) then reorder outputs to (a2,b2) swaps the two qubits.
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(2 * j + i, 2 * i + j)] = ONE;
            }
        }
        assert!((w - swap * cnot()).norm() < 1e-15);
    }

    #[test]
    fn reduced_choi_with_fixed_input() {
        // CNOT with control a, target fixed |0⟩: channel a → target is the dephasing copy.
        let g = Gate::new("cx", vec![l("a", 2), l("t", 2)], vec![l("a", 2), l("t", 2)], cnot()).unwrap();
        let c = Circuit::new(
            vec![l("a", 2), l("t", 2)],
            vec![l("ka", 2), l("kt", 2)],
            vec![g, Gate::wire(l("a", 2), "ka"), Gate::wire(l("t", 2), "kt")],
        )
        .unwrap();
        let zero = LabeledOperator::basis_projector(l("t", 2), 0);
        let rho = c.reduced_choi(&["a"], &[("t", &zero)], &["kt"]).unwrap();
        assert_eq!(rho.factor_names(), vec!["kt", "a"]);
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 0)] = ONE;
        expected[(3, 3)] = ONE;
        assert!((rho.data() - &expected).norm() < 1e-14);
        // Oracle route on the full CJ operator: Tr_{t,ka}[ρ^W (|0⟩⟨0|^T_t ⊗ I)].
        let full = c.choi().unwrap();
        let zt = zero.embed(full.factors()).unwrap();
        let contracted = partial_trace_keep(&full.matmul(&zt).unwrap(), &["kt", "a"]).unwrap();
        assert!(contracted.approx_eq(&rho, 1e-14));
    }

    #[test]
    fn isometry_residuals() {
        let g = Gate::new("cx", vec![l("a", 2), l("b", 2)], vec![l("a", 2), l("b", 2)], cnot()).unwrap();
        let c = Circuit::new(vec![l("a", 2), l("b", 2)], vec![l("a", 2), l("b", 2)], vec![g.clone()]);
        assert!(c.is_err());
        let c = Circuit::new(
            vec![l("a", 2), l("b", 2)],
            vec![l("x", 2), l("y", 2)],
            vec![g, Gate::wire(l("a", 2), "x"), Gate::wire(l("b", 2), "y")],
        )
        .unwrap();
        assert!(c.isometry_residual(1).unwrap().residual() < 1e-15);
        let bad = Gate::new("bad", vec![l("p", 2)], vec![l("q", 2)], CMatrix::identity(2, 2) * C64::new(2.0, 0.0)).unwrap();
        assert!(bad.isometry_residual() > 1.0);
    }

    #[test]
    fn heisenberg_influence_of_cnot() {
        let g = Gate::new("cx", vec![l("a", 2), l("b", 2)], vec![l("a", 2), l("b", 2)], cnot()).unwrap();
        let c = Circuit::new(
            vec![l("a", 2), l("b", 2)],
            vec![l("x", 2), l("y", 2)],
            vec![g, Gate::wire(l("a", 2), "x"), Gate::wire(l("b", 2), "y")],
        )
        .unwrap();
        // Phase kickback: the target input also reaches the control output.
        assert!(c.influence_residual("a", "y").unwrap() > 0.1);
        assert!(c.influence_residual("b", "y").unwrap() > 0.1);
        assert!(c.influence_residual("b", "x").unwrap() > 0.1);
        assert!(c.influence_residual("a", "x").unwrap() > 0.1);
        let h = Gate::new("h", vec![l("a", 2)], vec![l("a", 2)], hadamard()).unwrap();
        let local = Circuit::new(
            vec![l("a", 2), l("b", 2)],
            vec![l("x", 2), l("y", 2)],
            vec![h, Gate::wire(l("a", 2), "x"), Gate::wire(l("b", 2), "y")],
        )
        .unwrap();
        assert!(local.influence_residual("b", "x").unwrap() < 1e-15);
        assert!(local.influence_residual("a", "y").unwrap() < 1e-15);
        assert!(local.influence_residual("a", "x").unwrap() > 0.1);
    }

    fn hadamard() -> CMatrix {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
    }

    #[test]
    fn xor_copy_gate_matches_cnot_for_qubits() {
        let g = xor_copy_gate("c", l("a", 2), l("b", 2)).unwrap();
        assert!((g.matrix - cnot()).norm() < 1e-15);
        let g4 = xor_copy_gate("c", l("a", 4), l("b", 4)).unwrap();
        assert!(g4.isometry_residual() < 1e-15);
    }
}
