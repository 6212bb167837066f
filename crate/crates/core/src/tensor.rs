//! Dense complex operators over labeled composite Hilbert spaces.
//!
//! Composite indices are row-major in the factor list: the first factor is the
//! most significant digit.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceLabel {
    pub name: String,
    pub dim: usize,
}

impl SpaceLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        SpaceLabel {
            name: name.into(),
            dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub eps_herm: f64,
    pub eps_psd: f64,
    pub eps_trace: f64,
    pub eps_prob: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps_herm: 1e-9,
            eps_psd: 1e-9,
            eps_trace: 1e-9,
            eps_prob: 1e-12,
        }
    }
}

impl Tolerance {
    /// Same validation epsilon for hermiticity, positivity and trace checks.
    pub fn with_validation_eps(eps: f64) -> Self {
        Tolerance {
            eps_herm: eps,
            eps_psd: eps,
            eps_trace: eps,
            ..Tolerance::default()
        }
    }

    /// Defaults, with the validation epsilons overridden by `QCF_EPS` when set.
    pub fn from_env() -> Self {
        match std::env::var("QCF_EPS").ok().and_then(|s| s.trim().parse::<f64>().ok()) {
            Some(eps) if eps >= 0.0 && eps.is_finite() => Tolerance::with_validation_eps(eps),
            _ => Tolerance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),
    #[error("new factor order is not a permutation of the existing factors")]
    NotAPermutation,
    #[error("matrix side {found} does not match product of factor dims {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("factor `{0}` has dimension 0")]
    ZeroDim(String),
    #[error("factor sets differ: {0}")]
    FactorMismatch(String),
}

#[derive(Debug, Clone)]
pub struct LabeledOperator {
    factors: Vec<SpaceLabel>,
    data: CMatrix,
}

fn check_labels(factors: &[SpaceLabel]) -> Result<usize, TensorError> {
    let mut seen = BTreeSet::new();
    let mut dim = 1usize;
    for f in factors {
        if f.dim == 0 {
            return Err(TensorError::ZeroDim(f.name.clone()));
        }
        if !seen.insert(f.name.as_str()) {
            return Err(TensorError::DuplicateLabel(f.name.clone()));
        }
        dim *= f.dim;
    }
    Ok(dim)
}

/// Full-space offsets of every multi-index over the factors at `positions`,
/// enumerated row-major in the order given.
pub(crate) fn sub_offsets(dims: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for &base in &out {
            for k in 0..dims[p] {
                next.push(base + k * strides[p]);
            }
        }
        out = next;
    }
    out
}

impl LabeledOperator {
    pub fn new(factors: Vec<SpaceLabel>, data: CMatrix) -> Result<Self, TensorError> {
        let dim = check_labels(&factors)?;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(TensorError::ShapeMismatch {
                expected: dim,
                found: data.nrows().max(data.ncols()),
            });
        }
        Ok(LabeledOperator { factors, data })
    }

    pub fn identity(factors: Vec<SpaceLabel>) -> Result<Self, TensorError> {
        let dim = check_labels(&factors)?;
        Ok(LabeledOperator {
            factors,
            data: CMatrix::identity(dim, dim),
        })
    }

    pub fn scalar(c: C64) -> Self {
        LabeledOperator {
            factors: Vec::new(),
            data: CMatrix::from_element(1, 1, c),
        }
    }

    /// Projector |ψ⟩⟨ψ| for an (unnormalized) vector.
    pub fn from_ket(factors: Vec<SpaceLabel>, ket: &[C64]) -> Result<Self, TensorError> {
        let dim = check_labels(&factors)?;
        if ket.len() != dim {
            return Err(TensorError::ShapeMismatch {
                expected: dim,
                found: ket.len(),
            });
        }
        let data = CMatrix::from_fn(dim, dim, |i, j| ket[i] * ket[j].conj());
        Ok(LabeledOperator { factors, data })
    }

    /// Computational-basis projector |k⟩⟨k| on one factor.
    pub fn basis_projector(label: SpaceLabel, k: usize) -> Self {
        let mut data = CMatrix::zeros(label.dim, label.dim);
        data[(k, k)] = ONE;
        LabeledOperator {
            factors: vec![label],
            data,
        }
    }

    pub fn factors(&self) -> &[SpaceLabel] {
        &self.factors
    }

    pub fn factor_names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn has_factor(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn dagger(&self) -> Self {
        LabeledOperator {
            factors: self.factors.clone(),
            data: self.data.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        LabeledOperator {
            factors: self.factors.clone(),
            data: &self.data * c,
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Sum of two operators on the same factor set (`other` is permuted to `self`'s order).
    pub fn add(&self, other: &LabeledOperator) -> Result<Self, TensorError> {
        let o = other.reorder_like(self)?;
        Ok(LabeledOperator {
            factors: self.factors.clone(),
            data: &self.data + o.data,
        })
    }

    pub fn sub(&self, other: &LabeledOperator) -> Result<Self, TensorError> {
        let o = other.reorder_like(self)?;
        Ok(LabeledOperator {
            factors: self.factors.clone(),
            data: &self.data - o.data,
        })
    }

    /// Operator product on a common factor set.
    pub fn matmul(&self, other: &LabeledOperator) -> Result<Self, TensorError> {
        let o = other.reorder_like(self)?;
        Ok(LabeledOperator {
            factors: self.factors.clone(),
            data: &self.data * o.data,
        })
    }

    /// Rename factors; names not in the map are kept.
    pub fn relabel(&self, map: &[(&str, &str)]) -> Result<Self, TensorError> {
        let factors: Vec<SpaceLabel> = self
            .factors
            .iter()
            .map(|f| {
                let name = map
                    .iter()
                    .find(|(from, _)| *from == f.name)
                    .map(|(_, to)| to.to_string())
                    .unwrap_or_else(|| f.name.clone());
                SpaceLabel::new(name, f.dim)
            })
            .collect();
        LabeledOperator::new(factors, self.data.clone())
    }

    /// Permute `self` into the factor order of `like`.
    pub fn reorder_like(&self, like: &LabeledOperator) -> Result<Self, TensorError> {
        if self.factors.len() != like.factors.len() {
            return Err(TensorError::FactorMismatch(format!(
                "{:?} vs {:?}",
                self.factor_names(),
                like.factor_names()
            )));
        }
        for f in &like.factors {
            match self.position(&f.name) {
                Some(p) if self.factors[p].dim == f.dim => {}
                _ => {
                    return Err(TensorError::FactorMismatch(format!(
                        "{:?} vs {:?}",
                        self.factor_names(),
                        like.factor_names()
                    )))
                }
            }
        }
        permute_factors(self, &like.factor_names())
    }

    /// `self ⊗ I` on the factors of `target` that `self` lacks, in `target`'s order.
    pub fn embed(&self, target: &[SpaceLabel]) -> Result<Self, TensorError> {
        let mut missing = Vec::new();
        for t in target {
            match self.position(&t.name) {
                Some(p) if self.factors[p].dim == t.dim => {}
                Some(_) => return Err(TensorError::FactorMismatch(t.name.clone())),
                None => missing.push(t.clone()),
            }
        }
        if self.factors.len() + missing.len() != target.len() {
            let extra = self
                .factors
                .iter()
                .find(|f| !target.iter().any(|t| t.name == f.name))
                .map(|f| f.name.clone())
                .unwrap_or_default();
            return Err(TensorError::UnknownLabel(extra));
        }
        let full = tensor(self, &LabeledOperator::identity(missing)?)?;
        let names: Vec<&str> = target.iter().map(|t| t.name.as_str()).collect();
        permute_factors(&full, &names)
    }

    /// Frobenius distance after permuting `other` into `self`'s order.
    pub fn distance(&self, other: &LabeledOperator) -> Result<f64, TensorError> {
        let o = other.reorder_like(self)?;
        Ok((&self.data - o.data).norm())
    }

    pub fn approx_eq(&self, other: &LabeledOperator, eps: f64) -> bool {
        matches!(self.distance(other), Ok(d) if d <= eps)
    }

    pub fn hermitian_residual(&self) -> f64 {
        (&self.data - self.data.adjoint()).norm()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Eigen-decomposition of the Hermitian part: (eigenvalue, normalized eigenvector).
    pub fn eigen_decomposition(&self) -> Vec<(f64, Vec<C64>)> {
        let h = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        (0..eig.eigenvalues.len())
            .map(|k| {
                (
                    eig.eigenvalues[k],
                    eig.eigenvectors.column(k).iter().copied().collect(),
                )
            })
            .collect()
    }

    pub fn is_hermitian(&self, tol: &Tolerance) -> bool {
        is_hermitian(self, tol)
    }

    pub fn is_psd(&self, tol: &Tolerance) -> bool {
        is_psd(self, tol)
    }
}

impl PartialEq for LabeledOperator {
    /// Exact equality up to factor permutation.
    fn eq(&self, other: &Self) -> bool {
        match other.reorder_like(self) {
            Ok(o) => o.data == self.data,
            Err(_) => false,
        }
    }
}

pub fn tensor(a: &LabeledOperator, b: &LabeledOperator) -> Result<LabeledOperator, TensorError> {
    for f in &b.factors {
        if a.has_factor(&f.name) {
            return Err(TensorError::DuplicateLabel(f.name.clone()));
        }
    }
    let mut factors = a.factors.clone();
    factors.extend(b.factors.iter().cloned());
    Ok(LabeledOperator {
        factors,
        data: a.data.kronecker(&b.data),
    })
}

/// Tensor product of a list of operators, in order.
pub fn tensor_all<'a, I>(ops: I) -> Result<LabeledOperator, TensorError>
where
    I: IntoIterator<Item = &'a LabeledOperator>,
{
    let mut acc = LabeledOperator::scalar(ONE);
    for op in ops {
        acc = tensor(&acc, op)?;
    }
    Ok(acc)
}

fn positions_of(op: &LabeledOperator, names: &[&str]) -> Result<Vec<usize>, TensorError> {
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        let p = op
            .position(n)
            .ok_or_else(|| TensorError::UnknownLabel(n.to_string()))?;
        if out.contains(&p) {
            return Err(TensorError::DuplicateLabel(n.to_string()));
        }
        out.push(p);
    }
    Ok(out)
}

fn dims(op: &LabeledOperator) -> Vec<usize> {
    op.factors.iter().map(|f| f.dim).collect()
}

pub fn partial_trace(op: &LabeledOperator, discard: &[&str]) -> Result<LabeledOperator, TensorError> {
    let traced = positions_of(op, discard)?;
    if traced.is_empty() {
        return Ok(op.clone());
    }
    let keep: Vec<usize> = (0..op.factors.len()).filter(|p| !traced.contains(p)).collect();
    let d = dims(op);
    let off_k = sub_offsets(&d, &keep);
    let off_t = sub_offsets(&d, &traced);
    let n = off_k.len();
    let mut data = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut s = ZERO;
            for &t in &off_t {
                s += op.data[(off_k[a] + t, off_k[b] + t)];
            }
            data[(a, b)] = s;
        }
    }
    Ok(LabeledOperator {
        factors: keep.iter().map(|&p| op.factors[p].clone()).collect(),
        data,
    })
}

/// Partial trace keeping only the named factors (in their existing relative order).
pub fn partial_trace_keep(op: &LabeledOperator, keep: &[&str]) -> Result<LabeledOperator, TensorError> {
    positions_of(op, keep)?;
    let discard: Vec<&str> = op
        .factors
        .iter()
        .map(|f| f.name.as_str())
        .filter(|n| !keep.contains(n))
        .collect();
    partial_trace(op, &discard)
}

pub fn partial_transpose(op: &LabeledOperator, on: &[&str]) -> Result<LabeledOperator, TensorError> {
    let tp = positions_of(op, on)?;
    if tp.is_empty() {
        return Ok(op.clone());
    }
    let keep: Vec<usize> = (0..op.factors.len()).filter(|p| !tp.contains(p)).collect();
    let d = dims(op);
    let off_k = sub_offsets(&d, &keep);
    let off_t = sub_offsets(&d, &tp);
    let mut data = CMatrix::zeros(op.dim(), op.dim());
    for &ka in &off_k {
        for &kc in &off_k {
            for &tb in &off_t {
                for &td in &off_t {
                    data[(ka + tb, kc + td)] = op.data[(ka + td, kc + tb)];
                }
            }
        }
    }
    Ok(LabeledOperator {
        factors: op.factors.clone(),
        data,
    })
}

pub fn permute_factors(op: &LabeledOperator, new_order: &[&str]) -> Result<LabeledOperator, TensorError> {
    if new_order.len() != op.factors.len() {
        return Err(TensorError::NotAPermutation);
    }
    let perm = positions_of(op, new_order).map_err(|_| TensorError::NotAPermutation)?;
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(op.clone());
    }
    let map = sub_offsets(&dims(op), &perm);
    let n = op.dim();
    let data = CMatrix::from_fn(n, n, |i, j| op.data[(map[i], map[j])]);
    Ok(LabeledOperator {
        factors: perm.iter().map(|&p| op.factors[p].clone()).collect(),
        data,
    })
}

pub fn is_hermitian(op: &LabeledOperator, tol: &Tolerance) -> bool {
    op.hermitian_residual() <= tol.eps_herm
}

pub fn is_psd(op: &LabeledOperator, tol: &Tolerance) -> bool {
    is_hermitian(op, tol) && op.min_eigenvalue() >= -tol.eps_psd
}

/// Frobenius norm of [a, b] on the union of their factors.
pub fn commutator_norm(a: &LabeledOperator, b: &LabeledOperator) -> Result<f64, TensorError> {
    let mut union: Vec<SpaceLabel> = a.factors.clone();
    for f in &b.factors {
        if !union.iter().any(|u| u.name == f.name) {
            union.push(f.clone());
        }
    }
    let ea = a.embed(&union)?;
    let eb = b.embed(&union)?;
    Ok((&ea.data * &eb.data - &eb.data * &ea.data).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn lab(n: &str, d: usize) -> SpaceLabel {
        SpaceLabel::new(n, d)
    }

    fn ket_plus() -> Vec<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![c(s), c(s)]
    }

    fn ket_minus() -> Vec<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![c(s), c(-s)]
    }

    fn phi_plus(a: &str, b: &str) -> LabeledOperator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        LabeledOperator::from_ket(vec![lab(a, 2), lab(b, 2)], &[c(s), ZERO, ZERO, c(s)]).unwrap()
    }

    #[test]
    fn identity_tensor_identity() {
        let a = LabeledOperator::identity(vec![lab("X", 2)]).unwrap();
        let b = LabeledOperator::identity(vec![lab("Y", 3)]).unwrap();
        let t = tensor(&a, &b).unwrap();
        assert_eq!(t.factor_names(), vec!["X", "Y"]);
        assert_eq!(t.data(), &CMatrix::identity(6, 6));
    }

    #[test]
    fn basis_tensor_basis() {
        let t = tensor(
            &LabeledOperator::basis_projector(lab("X", 2), 0),
            &LabeledOperator::basis_projector(lab("Y", 2), 1),
        )
        .unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(1, 1)] = ONE;
        assert_eq!(t.data(), &expected);
    }

    #[test]
    fn plus_tensor_minus_sign_pattern() {
        // |+⟩|−⟩ = ½(|00⟩ − |01⟩ + |10⟩ − |11⟩): entries ¼ s_i s_j, s = (1, −1, 1, −1).
        let p = LabeledOperator::from_ket(vec![lab("X", 2)], &ket_plus()).unwrap();
        let m = LabeledOperator::from_ket(vec![lab("Y", 2)], &ket_minus()).unwrap();
        let t = tensor(&p, &m).unwrap();
        let s = [1.0, -1.0, 1.0, -1.0];
        for i in 0..4 {
            for j in 0..4 {
                assert!((t.data()[(i, j)] - c(0.25 * s[i] * s[j])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn tensor_rejects_duplicate() {
        let a = LabeledOperator::identity(vec![lab("X", 2)]).unwrap();
        assert!(matches!(tensor(&a, &a), Err(TensorError::DuplicateLabel(n)) if n == "X"));
    }

    #[test]
    fn trace_of_product_state() {
        let rx = LabeledOperator::from_ket(vec![lab("X", 2)], &ket_plus()).unwrap();
        let ry = LabeledOperator::identity(vec![lab("Y", 3)]).unwrap();
        let r = partial_trace(&tensor(&rx, &ry).unwrap(), &["Y"]).unwrap();
        assert!(r.approx_eq(&rx.scale_real(3.0), 1e-14));
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let r = partial_trace(&phi_plus("A", "B"), &["B"]).unwrap();
        let half = LabeledOperator::identity(vec![lab("A", 2)]).unwrap().scale_real(0.5);
        assert!(r.approx_eq(&half, 1e-15));
    }

    #[test]
    fn full_trace_is_scalar_one() {
        let r = partial_trace(&phi_plus("A", "B"), &["A", "B"]).unwrap();
        assert_eq!(r.dim(), 1);
        assert!((r.trace() - ONE).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_unknown_label() {
        assert_eq!(
            partial_trace(&phi_plus("A", "B"), &["Q"]).unwrap_err(),
            TensorError::UnknownLabel("Q".into())
        );
    }

    #[test]
    fn transpose_empty_set_is_noop() {
        let r = phi_plus("A", "B");
        assert_eq!(partial_transpose(&r, &[]).unwrap(), r);
    }

    #[test]
    fn transpose_basis_unit() {
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 1)] = ONE;
        let op = LabeledOperator::new(vec![lab("X", 2)], d).unwrap();
        let t = partial_transpose(&op, &["X"]).unwrap();
        assert_eq!(t.data()[(1, 0)], ONE);
        assert_eq!(t.data()[(0, 1)], ZERO);
    }

    #[test]
    fn partial_transpose_of_bell_is_half_swap() {
        // Oracle: Σ_ij |ii⟩⟨jj|/2 with the B digits swapped gives Σ_ij |ij⟩⟨ji|/2.
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(2 * i + j, 2 * j + i)] = c(0.5);
            }
        }
        let t = partial_transpose(&phi_plus("A", "B"), &["B"]).unwrap();
        assert!((t.data() - swap).norm() < 1e-15);
    }

    #[test]
    fn permute_product_state() {
        let rx = LabeledOperator::from_ket(vec![lab("X", 2)], &ket_plus()).unwrap();
        let ry = LabeledOperator::basis_projector(lab("Y", 3), 2);
        let xy = tensor(&rx, &ry).unwrap();
        let yx = permute_factors(&xy, &["Y", "X"]).unwrap();
        let direct = tensor(&ry, &rx).unwrap();
        assert_eq!(yx.factor_names(), vec!["Y", "X"]);
        assert!((yx.data() - direct.data()).norm() < 1e-15);
        let back = permute_factors(&yx, &["X", "Y"]).unwrap();
        assert_eq!(back.data(), xy.data());
        assert_eq!(permute_factors(&xy, &["X", "Y"]).unwrap().data(), xy.data());
        assert_eq!(permute_factors(&xy, &["X"]).unwrap_err(), TensorError::NotAPermutation);
    }

    #[test]
    fn psd_and_hermitian_checks() {
        let tol = Tolerance::default();
        let half = LabeledOperator::identity(vec![lab("A", 2)]).unwrap().scale_real(0.5);
        assert!(is_psd(&half, &tol));
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 0)] = ONE;
        d[(1, 1)] = c(-0.1);
        assert!(!is_psd(&LabeledOperator::new(vec![lab("A", 2)], d).unwrap(), &tol));
        assert!(is_psd(&phi_plus("A", "B"), &tol));
        let mut nh = CMatrix::zeros(2, 2);
        nh[(0, 1)] = ONE;
        assert!(!is_hermitian(&LabeledOperator::new(vec![lab("A", 2)], nh).unwrap(), &tol));
    }

    #[test]
    fn embed_pads_with_identity() {
        let p = LabeledOperator::basis_projector(lab("B", 2), 1);
        let e = p.embed(&[lab("A", 3), lab("B", 2)]).unwrap();
        let direct = tensor(&LabeledOperator::identity(vec![lab("A", 3)]).unwrap(), &p).unwrap();
        assert_eq!(e.data(), direct.data());
    }

    #[test]
    fn commutator_of_overlapping_factors() {
        let z = LabeledOperator::basis_projector(lab("A", 2), 0);
        let x = LabeledOperator::from_ket(vec![lab("A", 2)], &ket_plus()).unwrap();
        assert!(commutator_norm(&z, &x).unwrap() > 0.1);
        let other = LabeledOperator::basis_projector(lab("B", 2), 0);
        assert!(commutator_norm(&z, &other).unwrap() < 1e-15);
    }
}
