//! Python module `qcf`: load models, validate them, evaluate counterfactual
//! queries and lift classical models. Reports come back as plain dicts.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyComplex;
use serde::Serialize;

use qcf_core::classical::{brute_force_joint, classical_counterfactual, fork_psm, xor_chain, ClassicalPsm};
use qcf_core::counterfactual::{bell_demo, disambiguate_minimal, evaluate};
use qcf_core::format::{parse_model, parse_query, BuiltQuery, ModelDocument, PsmDoc, QsmDoc};
use qcf_core::lift::{equivalence_on, joint_distance, lift};
use qcf_core::models;
use qcf_core::qsm::{marginal_process, validate_qsm_seeded};
use qcf_core::report::{QueryReport, ValidationReport};
use qcf_core::tensor::Tolerance;

fn invalid(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(invalid)?;
    py.import("json")?.call_method1("loads", (s,))
}

/// Factor labels with dimensions, and the matrix as rows of complex numbers.
type LabeledMatrix<'py> = (Vec<(String, usize)>, Vec<Vec<Bound<'py, PyComplex>>>);

fn read(path: &str) -> PyResult<String> {
    std::fs::read_to_string(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))
}

/// A quantum structural causal model.
#[pyclass(name = "Qsm", module = "qcf", frozen)]
struct PyQsm {
    inner: qcf_core::qsm::Qsm,
}

#[pymethods]
impl PyQsm {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        match parse_model(text).map_err(invalid)? {
            ModelDocument::Qsm(d) => Ok(PyQsm {
                inner: d.build(&Tolerance::from_env()).map_err(invalid)?,
            }),
            ModelDocument::Psm(_) => Err(PyValueError::new_err("document describes a classical model")),
        }
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::from_text(&read(path)?)
    }

    #[staticmethod]
    fn example1() -> Self {
        PyQsm { inner: models::example1() }
    }

    #[staticmethod]
    fn example2() -> Self {
        PyQsm { inner: models::example2() }
    }

    #[staticmethod]
    fn bell() -> Self {
        PyQsm { inner: models::bell() }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.node_names()
    }

    #[getter]
    fn edges(&self) -> Vec<(String, String)> {
        self.inner.dag.edges.iter().cloned().collect()
    }

    fn to_text(&self) -> String {
        QsmDoc::from_qsm(&self.inner).to_text()
    }

    #[pyo3(signature = (seed = 0))]
    fn validate<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let rep = validate_qsm_seeded(&self.inner, &Tolerance::from_env(), seed).map_err(invalid)?;
        to_py(py, &ValidationReport::from_qsm(self.inner.name.clone(), &rep))
    }

    /// Evaluates a query document (quantum or ambiguous) and returns its report.
    #[pyo3(signature = (text, name = "query", seed = 0))]
    fn query<'py>(&self, py: Python<'py>, text: &str, name: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let tol = Tolerance::from_env();
        let q = &self.inner;
        let doc = parse_query(text).map_err(invalid)?;
        let isometry = q.circuit.isometry_residual(seed).map_err(invalid)?.residual();
        let report = match doc.build_quantum(q).map_err(invalid)? {
            BuiltQuery::Quantum(cq) => QueryReport::new(name, &evaluate(q, &cq, &tol).map_err(invalid)?, None, isometry),
            BuiltQuery::Ambiguous(amb) => {
                let (cq, decision) = disambiguate_minimal(q, &amb, &tol).map_err(invalid)?;
                QueryReport::new(name, &evaluate(q, &cq, &tol).map_err(invalid)?, Some(&decision), isometry)
            }
            BuiltQuery::Classical(_) => return Err(PyValueError::new_err("classical query on a quantum model")),
        };
        to_py(py, &report)
    }

    /// Factor labels and matrix of the marginal process operator.
    fn marginal_process<'py>(&self, py: Python<'py>) -> PyResult<LabeledMatrix<'py>> {
        let sigma = marginal_process(&self.inner).map_err(invalid)?;
        let labels = sigma.op.factors().iter().map(|l| (l.name.clone(), l.dim)).collect();
        let m = sigma.op.data();
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| PyComplex::from_doubles(py, m[(i, j)].re, m[(i, j)].im)).collect())
            .collect();
        Ok((labels, rows))
    }

    fn bell_demo<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &bell_demo(&self.inner, &Tolerance::from_env()).map_err(invalid)?)
    }

    fn __repr__(&self) -> String {
        format!("Qsm(name={:?}, nodes={:?})", self.inner.name, self.inner.node_names())
    }
}

/// A classical probabilistic structural causal model.
#[pyclass(name = "Psm", module = "qcf", frozen)]
struct PyPsm {
    name: String,
    inner: ClassicalPsm,
}

#[pymethods]
impl PyPsm {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        match parse_model(text).map_err(invalid)? {
            ModelDocument::Psm(d) => Ok(PyPsm {
                inner: d.build().map_err(invalid)?,
                name: d.name,
            }),
            ModelDocument::Qsm(_) => Err(PyValueError::new_err("document describes a quantum model")),
        }
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::from_text(&read(path)?)
    }

    #[staticmethod]
    fn xor_chain() -> Self {
        PyPsm {
            name: "xor_chain".into(),
            inner: xor_chain(),
        }
    }

    #[staticmethod]
    fn fork() -> Self {
        PyPsm {
            name: "fork".into(),
            inner: fork_psm(),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.name.clone()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.csm.endogenous.iter().map(|v| v.name.clone()).collect()
    }

    fn to_text(&self) -> String {
        PsmDoc::from_psm(self.name.clone(), &self.inner).to_text()
    }

    /// Cardinalities and probabilities of the joint over the variables, first variable most significant.
    fn joint(&self) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let j = brute_force_joint(&self.inner).map_err(invalid)?;
        Ok((j.dims, j.probs))
    }

    /// P(Y_x = y | E = e) for a classical query document.
    fn counterfactual(&self, text: &str) -> PyResult<f64> {
        let query = parse_query(text).map_err(invalid)?.build_classical(&self.inner).map_err(invalid)?;
        classical_counterfactual(&self.inner, &query).map_err(invalid)
    }

    fn lift(&self) -> PyResult<PyQsm> {
        let mut qsm = lift(&self.inner).map_err(invalid)?.qsm;
        qsm.name = format!("{}_lifted", self.name);
        Ok(PyQsm { inner: qsm })
    }

    /// Classical value against the lifted do-interventional value, plus the joint distance.
    fn compare<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let tol = Tolerance::from_env();
        let query = parse_query(text).map_err(invalid)?.build_classical(&self.inner).map_err(invalid)?;
        let classical = classical_counterfactual(&self.inner, &query).map_err(invalid)?;
        let l = lift(&self.inner).map_err(invalid)?;
        let eq = equivalence_on(&l, &query, &tol, classical).map_err(invalid)?;
        #[derive(Serialize)]
        struct Comparison {
            #[serde(flatten)]
            eq: qcf_core::lift::Equivalence,
            joint_distance: f64,
        }
        let joint_distance = joint_distance(&self.inner, &l).map_err(invalid)?;
        to_py(py, &Comparison { eq, joint_distance })
    }

    fn __repr__(&self) -> String {
        format!("Psm(name={:?}, variables={:?})", self.name, self.variables())
    }
}

/// Runs the command-line interface in-process; returns (exit code, stdout, stderr).
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let mut argv = vec!["qcf".to_string()];
    argv.extend(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = qcf_core::cli::run_cli(&argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

#[pymodule]
fn qcf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQsm>()?;
    m.add_class::<PyPsm>()?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
