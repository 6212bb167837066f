//! `qcf` command line: validate, query, classical, lift, compare, bell-demo.
//!
//! Exit codes: 0 success, 1 I/O error, 2 invalid input or failed check,
//! 3 counterpossible result under `--fail-on-counterpossible`, 64 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classical::{classical_counterfactual, ClassicalPsm};
use crate::counterfactual::{bell_demo, disambiguate_minimal, evaluate, format_prob, BellReport, CfValue};
use crate::format::{parse_model, parse_query, BuiltQuery, ModelDocument, QsmDoc};
use crate::lift::{equivalence_on, joint_distance, lift, LiftResult};
use crate::models::bell;
use crate::qsm::{validate_qsm_seeded, Qsm};
use crate::report::{sig3, QueryBatchReport, QueryReport, ValidationReport, SCHEMA_VERSION};
use crate::syntax::Diagnostic;
use crate::tensor::Tolerance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_COUNTERPOSSIBLE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Agreement required by `compare`.
pub const COMPARE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "qcf", version, about = "Counterfactual queries in quantum and classical structural causal models")]
struct Cli {
    /// Seed for randomized check batteries.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file: isometry, no-influence conditions and instruments.
    Validate {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
    /// Evaluate counterfactual queries against a quantum model.
    Query {
        model: PathBuf,
        #[arg(required = true)]
        queries: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
        /// Evaluate up to N queries in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Exit with status 3 if any result is counterpossible.
        #[arg(long)]
        fail_on_counterpossible: bool,
    },
    /// Evaluate a classical query against a classical model.
    Classical {
        model: PathBuf,
        query: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
    /// Lift a classical model to a quantum one and check it.
    Lift {
        model: PathBuf,
        /// Write the lifted model in `.qsm` format.
        #[arg(long)]
        emit_qsm: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
    /// Evaluate a classical query classically and on the lifted model.
    Compare {
        model: PathBuf,
        query: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
    /// Passive and do-interventional readings of the common-cause scenario.
    BellDemo {
        /// Model to use instead of the bundled one.
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

type Outcome = Result<(String, i32), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn located(path: &Path, d: Diagnostic) -> Failure {
    Failure::invalid(format!("{}:{d}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelDocument, Failure> {
    parse_model(&read(path)?).map_err(|d| located(path, d))
}

fn load_qsm(path: &Path, tol: &Tolerance) -> Result<Qsm, Failure> {
    match load_model(path)? {
        ModelDocument::Qsm(d) => d.build(tol).map_err(|e| located(path, e)),
        ModelDocument::Psm(_) => Err(Failure::invalid(format!("{}: expected a quantum model (`qsm`)", path.display()))),
    }
}

fn load_psm(path: &Path) -> Result<(String, ClassicalPsm), Failure> {
    match load_model(path)? {
        ModelDocument::Psm(d) => Ok((d.name.clone(), d.build().map_err(|e| located(path, e))?)),
        ModelDocument::Qsm(_) => Err(Failure::invalid(format!("{}: expected a classical model (`psm`)", path.display()))),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned())
}

fn validate(path: &Path, format: ReportFormat, tol: &Tolerance, seed: u64) -> Outcome {
    match load_model(path)? {
        ModelDocument::Qsm(d) => {
            let q = d.build(tol).map_err(|e| located(path, e))?;
            let rep = validate_qsm_seeded(&q, tol, seed).map_err(|e| Failure::invalid(e.to_string()))?;
            let v = ValidationReport::from_qsm(q.name.clone(), &rep);
            let code = if v.valid { EXIT_OK } else { EXIT_INVALID };
            let text = match format {
                ReportFormat::Text => v.render(),
                ReportFormat::Json => json(&v),
            };
            Ok((text, code))
        }
        ModelDocument::Psm(d) => {
            let psm = d.build().map_err(|e| located(path, e))?;
            #[derive(Serialize)]
            struct PsmValidation<'a> {
                schema_version: u32,
                model: &'a str,
                variables: usize,
                exogenous_assignments: usize,
                valid: bool,
            }
            let v = PsmValidation {
                schema_version: SCHEMA_VERSION,
                model: &d.name,
                variables: psm.csm.len(),
                exogenous_assignments: psm.csm.exogenous_space(),
                valid: true,
            };
            let text = match format {
                ReportFormat::Text => format!(
                    "model: {}\nvariables: {}\nexogenous assignments: {}\nvalid: yes\n",
                    v.model, v.variables, v.exogenous_assignments
                ),
                ReportFormat::Json => json(&v),
            };
            Ok((text, EXIT_OK))
        }
    }
}

fn one_query(q: &Qsm, path: &Path, tol: &Tolerance, isometry: f64) -> Result<QueryReport, Failure> {
    let doc = parse_query(&read(path)?).map_err(|d| located(path, d))?;
    let built = doc.build_quantum(q).map_err(|d| located(path, d))?;
    let fail = |e: crate::counterfactual::CfError| Failure::invalid(format!("{}: {e}", path.display()));
    let name = display_name(path);
    match built {
        BuiltQuery::Quantum(cq) => {
            let r = evaluate(q, &cq, tol).map_err(fail)?;
            Ok(QueryReport::new(name, &r, None, isometry))
        }
        BuiltQuery::Ambiguous(amb) => {
            let (cq, decision) = disambiguate_minimal(q, &amb, tol).map_err(fail)?;
            let r = evaluate(q, &cq, tol).map_err(fail)?;
            Ok(QueryReport::new(name, &r, Some(&decision), isometry))
        }
        BuiltQuery::Classical(_) => unreachable!("build_quantum rejects classical queries"),
    }
}

fn query(model: &Path, queries: &[PathBuf], format: ReportFormat, jobs: usize, fail_cp: bool, tol: &Tolerance, seed: u64) -> Outcome {
    let q = load_qsm(model, tol)?;
    let isometry = q
        .circuit
        .isometry_residual(seed)
        .map_err(|e| Failure::invalid(e.to_string()))?
        .residual();
    let mut results: Vec<Option<Result<QueryReport, Failure>>> = (0..queries.len()).map(|_| None).collect();
    if jobs <= 1 || queries.len() <= 1 {
        for (slot, path) in results.iter_mut().zip(queries) {
            *slot = Some(one_query(&q, path, tol, isometry));
        }
    } else {
        let chunk = queries.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for (slots, paths) in results.chunks_mut(chunk).zip(queries.chunks(chunk)) {
                let q = &q;
                s.spawn(move || {
                    for (slot, path) in slots.iter_mut().zip(paths) {
                        *slot = Some(one_query(q, path, tol, isometry));
                    }
                });
            }
        });
    }
    let reports = results
        .into_iter()
        .map(|r| r.expect("every query evaluated"))
        .collect::<Result<Vec<_>, _>>()?;
    let counterpossible = reports.iter().any(|r| r.value.is_counterpossible());
    let batch = QueryBatchReport {
        schema_version: SCHEMA_VERSION,
        model: q.name.clone(),
        queries: reports,
    };
    let text = match format {
        ReportFormat::Text => batch.render(),
        ReportFormat::Json => json(&batch),
    };
    let code = if fail_cp && counterpossible { EXIT_COUNTERPOSSIBLE } else { EXIT_OK };
    Ok((text, code))
}

fn load_classical_query(path: &Path, psm: &ClassicalPsm) -> Result<crate::classical::ClassicalQuery, Failure> {
    let doc = parse_query(&read(path)?).map_err(|d| located(path, d))?;
    doc.build_classical(psm).map_err(|d| located(path, d))
}

fn classical(model: &Path, query: &Path, format: ReportFormat) -> Outcome {
    let (name, psm) = load_psm(model)?;
    let cq = load_classical_query(query, &psm)?;
    let value = classical_counterfactual(&psm, &cq).map_err(|e| Failure::invalid(format!("{}: {e}", query.display())))?;
    #[derive(Serialize)]
    struct ClassicalReport {
        schema_version: u32,
        model: String,
        query: String,
        value: f64,
    }
    let rep = ClassicalReport {
        schema_version: SCHEMA_VERSION,
        model: name,
        query: display_name(query),
        value: crate::counterfactual::round_prob(value),
    };
    let text = match format {
        ReportFormat::Text => format!("model: {}\nquery: {}\nresult: {}\n", rep.model, rep.query, format_prob(value)),
        ReportFormat::Json => json(&rep),
    };
    Ok((text, EXIT_OK))
}

#[derive(Serialize)]
struct LiftNodeRow {
    name: String,
    values: usize,
    binary_values: usize,
    exogenous_values: usize,
    binary_exogenous_values: usize,
    ancilla_t: usize,
    sink_s: usize,
    max_preimage: usize,
    copy_gates: usize,
    ancillas: Vec<String>,
}

#[derive(Serialize)]
struct LiftReport {
    schema_version: u32,
    model: String,
    nodes: Vec<LiftNodeRow>,
    sink: Vec<(String, usize)>,
    circuit_input_dim: usize,
    isometry_residual: f64,
    no_influence_ok: bool,
    joint_total_variation: f64,
    valid: bool,
}

fn lift_report(name: &str, psm: &ClassicalPsm, l: &LiftResult, tol: &Tolerance, seed: u64) -> Result<LiftReport, Failure> {
    let rep = validate_qsm_seeded(&l.qsm, tol, seed).map_err(|e| Failure::invalid(e.to_string()))?;
    let tv = joint_distance(psm, l).map_err(|e| Failure::invalid(e.to_string()))?;
    let b = &l.binary;
    let nodes = (0..b.csm.len())
        .map(|i| LiftNodeRow {
            name: b.csm.endogenous[i].name.clone(),
            values: b.orig_v[i],
            binary_values: b.csm.endogenous[i].card(),
            exogenous_values: b.orig_u[i],
            binary_exogenous_values: b.csm.exogenous[i].card(),
            ancilla_t: l.reversible.nodes[i].t_card,
            sink_s: l.reversible.nodes[i].s_card,
            max_preimage: l.reversible.nodes[i].max_preimage,
            copy_gates: l.plan.nodes[i].gates.len(),
            ancillas: l.plan.nodes[i].ancillas.clone(),
        })
        .collect();
    let no_influence_ok = rep.no_influence.iter().all(|c| c.holds);
    Ok(LiftReport {
        schema_version: SCHEMA_VERSION,
        model: name.to_string(),
        nodes,
        sink: l.sink_dims.clone(),
        circuit_input_dim: l.qsm.circuit.input_dim(),
        isometry_residual: sig3(rep.isometry.residual()),
        no_influence_ok,
        joint_total_variation: sig3(tv),
        valid: rep.valid && tv <= COMPARE_TOL,
    })
}

fn render_lift(r: &LiftReport) -> String {
    let mut s = format!("model: {}\n", r.model);
    for n in &r.nodes {
        s.push_str(&format!(
            "node {}: |V| {} -> {}, |U| {} -> {}, |T'| {}, |S'| {} (max preimage {}), copy gates {}{}\n",
            n.name,
            n.values,
            n.binary_values,
            n.exogenous_values,
            n.binary_exogenous_values,
            n.ancilla_t,
            n.sink_s,
            n.max_preimage,
            n.copy_gates,
            if n.ancillas.is_empty() {
                String::new()
            } else {
                format!(" into {}", n.ancillas.join(", "))
            }
        ));
    }
    let sink: Vec<String> = r.sink.iter().map(|(n, d)| format!("{n}:{d}")).collect();
    s.push_str(&format!("sink factors: {}\n", sink.join(", ")));
    s.push_str(&format!("circuit input dimension: {}\n", r.circuit_input_dim));
    s.push_str(&format!("isometry residual: {:.3e}\n", r.isometry_residual));
    s.push_str(&format!("no-influence checks: {}\n", if r.no_influence_ok { "ok" } else { "FAIL" }));
    s.push_str(&format!("joint total variation: {:.3e}\n", r.joint_total_variation));
    s.push_str(&format!("valid: {}\n", if r.valid { "yes" } else { "no" }));
    s
}

fn lift_cmd(model: &Path, emit: Option<&Path>, format: ReportFormat, tol: &Tolerance, seed: u64) -> Outcome {
    let (name, psm) = load_psm(model)?;
    let mut l = lift(&psm).map_err(|e| Failure::invalid(format!("{}: {e}", model.display())))?;
    l.qsm.name = format!("{name}_lifted");
    let rep = lift_report(&name, &psm, &l, tol, seed)?;
    if let Some(path) = emit {
        std::fs::write(path, QsmDoc::from_qsm(&l.qsm).to_text()).map_err(|e| Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    let text = match format {
        ReportFormat::Text => render_lift(&rep),
        ReportFormat::Json => json(&rep),
    };
    Ok((text, if rep.valid { EXIT_OK } else { EXIT_INVALID }))
}

fn compare(model: &Path, query: &Path, format: ReportFormat, tol: &Tolerance) -> Outcome {
    let (name, psm) = load_psm(model)?;
    let cq = load_classical_query(query, &psm)?;
    let classical = classical_counterfactual(&psm, &cq).map_err(|e| Failure::invalid(format!("{}: {e}", query.display())))?;
    let l = lift(&psm).map_err(|e| Failure::invalid(format!("{}: {e}", model.display())))?;
    let eq = equivalence_on(&l, &cq, tol, classical).map_err(|e| Failure::invalid(e.to_string()))?;
    let agree = eq.delta.is_some_and(|d| d <= COMPARE_TOL);
    #[derive(Serialize)]
    struct CompareReport {
        schema_version: u32,
        model: String,
        query: String,
        classical: f64,
        quantum: CfValue,
        delta: Option<f64>,
        agree: bool,
    }
    let rep = CompareReport {
        schema_version: SCHEMA_VERSION,
        model: name,
        query: display_name(query),
        classical: crate::counterfactual::round_prob(classical),
        quantum: eq.quantum,
        delta: eq.delta.map(sig3),
        agree,
    };
    let text = match format {
        ReportFormat::Text => format!(
            "model: {}\nquery: {}\nclassical: {}\nquantum: {}\n|delta|: {}\nagree: {}\n",
            rep.model,
            rep.query,
            format_prob(classical),
            eq.quantum,
            eq.delta.map_or("n/a".to_string(), |d| format!("{d:.3e}")),
            if agree { "yes" } else { "no" }
        ),
        ReportFormat::Json => json(&rep),
    };
    Ok((text, if agree { EXIT_OK } else { EXIT_INVALID }))
}

fn bell_cmd(model: Option<&Path>, format: ReportFormat, tol: &Tolerance) -> Outcome {
    let q = match model {
        Some(p) => load_qsm(p, tol)?,
        None => bell(),
    };
    let rep: BellReport = bell_demo(&q, tol).map_err(|e| Failure::invalid(e.to_string()))?;
    let text = match format {
        ReportFormat::Text => rep.render(),
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Wrapped<'a> {
                schema_version: u32,
                model: &'a str,
                #[serde(flatten)]
                report: &'a BellReport,
            }
            json(&Wrapped {
                schema_version: SCHEMA_VERSION,
                model: &q.name,
                report: &rep,
            })
        }
    };
    Ok((text, EXIT_OK))
}

/// Runs the command line `args` (program name first), writing reports to
/// `out` and diagnostics to `err`; returns the exit code.
pub fn run_cli<O: Write, E: Write>(args: &[String], out: &mut O, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let tol = Tolerance::from_env();
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Validate { model, report } => validate(model, *report, &tol, seed),
        Command::Query {
            model,
            queries,
            report,
            jobs,
            fail_on_counterpossible,
        } => query(model, queries, *report, *jobs as usize, *fail_on_counterpossible, &tol, seed),
        Command::Classical { model, query, report } => classical(model, query, *report),
        Command::Lift { model, emit_qsm, report } => lift_cmd(model, emit_qsm.as_deref(), *report, &tol, seed),
        Command::Compare { model, query, report } => compare(model, query, *report, &tol),
        Command::BellDemo { model, report } => bell_cmd(model.as_deref(), *report, &tol),
    };
    match result {
        Ok((text, code)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
