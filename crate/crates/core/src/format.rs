//! Text formats: `.qsm` quantum models, `.psm` classical models and `.cf`
//! queries. Parsing yields typed documents that serialize back to text;
//! building turns a document into a model or query, reporting semantic
//! errors at the offending declaration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::circuit::{Circuit, Gate};
use crate::classical::{ClassicalCsm, ClassicalPsm, ClassicalQuery, Variable};
use crate::counterfactual::{AmbiguousQuery, CfQuery, Evidence};
use crate::instruments::{make_do_instrument, ExogenousInstrument, Instrument, InstrumentElement, QuantumNode};
use crate::process::Dag;
use crate::qsm::{Qsm, SinkNode};
use crate::syntax::{fmt_complex, fmt_num, is_ident, quote, Cursor, Diagnostic, Span, Tok};
use crate::tensor::{CMatrix, LabeledOperator, SpaceLabel, Tolerance, C64, ONE, ZERO};

// ---------------------------------------------------------------- documents

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixLit {
    /// Pure state |ψ⟩, used as [ψ].
    Ket(Vec<C64>),
    /// Row-major entries.
    Dense(Vec<Vec<C64>>),
    Identity(usize),
    /// |k⟩⟨k| in dimension `dim`.
    Projector { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub din: usize,
    pub dout: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDecl {
    pub from: String,
    pub to: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparationDecl {
    pub label: String,
    pub prob: f64,
    pub state: MatrixLit,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousDecl {
    pub name: String,
    pub owner: String,
    pub dim: usize,
    /// Empty: trivial node (dimension 1, outcome "*").
    pub outcomes: Vec<PreparationDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkDecl {
    pub name: String,
    pub factors: Vec<(String, usize)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    Wire { from: String, to: String },
    Regroup { inputs: Vec<String>, outputs: Vec<(String, usize)> },
    Permutation { name: String, inputs: Vec<String>, outputs: Vec<(String, usize)>, map: Vec<usize> },
    Matrix { name: String, inputs: Vec<String>, outputs: Vec<(String, usize)>, matrix: MatrixLit },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDecl {
    pub kind: GateKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    /// ρ^T ⊗ E: effect E on the input, ρ prepared on the output.
    MeasurePrepare { prepare: MatrixLit, effect: MatrixLit },
    /// ρ^T ⊗ I.
    Do { state: MatrixLit },
    /// Raw CJ operator over [out, in].
    Choi { matrix: MatrixLit },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementDecl {
    pub outcome: String,
    pub kind: ElementKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstrumentBody {
    Basis(Vec<String>),
    Elements(Vec<ElementDecl>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentDecl {
    pub node: String,
    pub setting: String,
    pub body: InstrumentBody,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoDecl {
    pub node: String,
    pub outcome: String,
    pub state: MatrixLit,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsmDoc {
    pub name: String,
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
    pub exogenous: Vec<ExogenousDecl>,
    pub sink: Option<SinkDecl>,
    pub gates: Vec<GateDecl>,
    pub instruments: Vec<InstrumentDecl>,
    pub do_states: Vec<DoDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDecl {
    pub name: String,
    pub values: Vec<String>,
    pub parents: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalExogenousDecl {
    pub name: String,
    pub owner: String,
    pub values: Vec<String>,
    pub prior: Vec<f64>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDecl {
    pub variable: String,
    /// Value labels indexed by u·|Pa| + pa.
    pub entries: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsmDoc {
    pub name: String,
    pub variables: Vec<VariableDecl>,
    pub exogenous: Vec<ClassicalExogenousDecl>,
    pub tables: Vec<TableDecl>,
    pub joint: Option<(Vec<f64>, Span)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelDocument {
    Qsm(QsmDoc),
    Psm(PsmDoc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Classical,
    Quantum,
    Ambiguous,
}

impl QueryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Classical => "classical",
            QueryKind::Quantum => "quantum",
            QueryKind::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceDecl {
    pub node: String,
    pub setting: Option<String>,
    pub outcome: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SettingRef {
    Named(String),
    /// do(ρ) with ρ from the model's do-state table for this outcome.
    Do(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfSettingDecl {
    pub node: String,
    pub setting: SettingRef,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDecl {
    pub node: String,
    pub outcome: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryDocument {
    pub kind: QueryKind,
    pub evidence: Vec<EvidenceDecl>,
    pub counterfactual: Vec<CfSettingDecl>,
    pub antecedent: Vec<OutcomeDecl>,
    pub consequent: Vec<OutcomeDecl>,
    pub span: Span,
}

// ------------------------------------------------------------------ parsing

fn empty_error(c: &Cursor, expected: &str) -> Diagnostic {
    Diagnostic::syntax(c.span(), "empty document", expected)
}

fn header(c: &mut Cursor, kinds: &[&str]) -> Result<(String, Span), Diagnostic> {
    let expected = kinds.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(" or ");
    if c.at_eof() {
        return Err(empty_error(c, &expected));
    }
    match &c.peek().tok {
        Tok::Ident(k) if kinds.contains(&k.as_str()) => {
            let k = k.clone();
            Ok((k, c.advance().span))
        }
        _ => Err(c.error(expected)),
    }
}

fn matrix_lit(c: &mut Cursor) -> Result<MatrixLit, Diagnostic> {
    if c.eat_keyword("ket") {
        return Ok(MatrixLit::Ket(c.list(Cursor::complex)?));
    }
    if c.eat_keyword("matrix") {
        return Ok(MatrixLit::Dense(c.list(|c| c.list(Cursor::complex))?));
    }
    if c.eat_keyword("identity") {
        return Ok(MatrixLit::Identity(c.count("a dimension")?));
    }
    if c.eat_keyword("projector") {
        let index = c.count("a basis index")?;
        c.keyword("of")?;
        let dim = c.count("a dimension")?;
        return Ok(MatrixLit::Projector { index, dim });
    }
    Err(c.error("`ket`, `matrix`, `identity` or `projector`"))
}

fn typed_label(c: &mut Cursor) -> Result<(String, usize), Diagnostic> {
    let (name, _) = c.ident("a wire name")?;
    c.expect(Tok::Colon)?;
    Ok((name, c.count("a dimension")?))
}

fn label_list(c: &mut Cursor) -> Result<Vec<String>, Diagnostic> {
    c.list(|c| c.ident("a wire name").map(|x| x.0))
}

fn typed_list(c: &mut Cursor) -> Result<Vec<(String, usize)>, Diagnostic> {
    c.list(typed_label)
}

fn string_list(c: &mut Cursor) -> Result<Vec<String>, Diagnostic> {
    c.list(|c| c.string("a quoted label"))
}

fn number_list(c: &mut Cursor) -> Result<Vec<f64>, Diagnostic> {
    c.list(|c| c.number("a number"))
}

fn gate_decl(c: &mut Cursor) -> Result<GateDecl, Diagnostic> {
    let span = c.span();
    let kind = if c.eat_keyword("wire") {
        let (from, _) = c.ident("a wire name")?;
        c.expect(Tok::Arrow)?;
        let (to, _) = c.ident("a wire name")?;
        GateKind::Wire { from, to }
    } else if c.eat_keyword("regroup") {
        let inputs = label_list(c)?;
        c.expect(Tok::Arrow)?;
        GateKind::Regroup {
            inputs,
            outputs: typed_list(c)?,
        }
    } else if c.eat_keyword("permutation") {
        let name = c.string("a quoted gate name")?;
        let inputs = label_list(c)?;
        c.expect(Tok::Arrow)?;
        let outputs = typed_list(c)?;
        c.keyword("map")?;
        let map = c.list(|c| c.count("an output index"))?;
        GateKind::Permutation { name, inputs, outputs, map }
    } else if c.eat_keyword("gate") {
        let name = c.string("a quoted gate name")?;
        let inputs = label_list(c)?;
        c.expect(Tok::Arrow)?;
        let outputs = typed_list(c)?;
        GateKind::Matrix {
            name,
            inputs,
            outputs,
            matrix: matrix_lit(c)?,
        }
    } else {
        return Err(c.error("`wire`, `regroup`, `permutation` or `gate`"));
    };
    c.expect(Tok::Semi)?;
    Ok(GateDecl { kind, span })
}

fn element_decl(c: &mut Cursor) -> Result<ElementDecl, Diagnostic> {
    let span = c.keyword("element")?;
    let outcome = c.string("a quoted outcome label")?;
    let kind = if c.eat_keyword("prepare") {
        let prepare = matrix_lit(c)?;
        c.keyword("effect")?;
        ElementKind::MeasurePrepare {
            prepare,
            effect: matrix_lit(c)?,
        }
    } else if c.eat_keyword("do") {
        ElementKind::Do { state: matrix_lit(c)? }
    } else if c.eat_keyword("choi") {
        ElementKind::Choi { matrix: matrix_lit(c)? }
    } else {
        return Err(c.error("`prepare`, `do` or `choi`"));
    };
    c.expect(Tok::Semi)?;
    Ok(ElementDecl { outcome, kind, span })
}

fn block<T>(c: &mut Cursor, mut item: impl FnMut(&mut Cursor) -> Result<T, Diagnostic>) -> Result<Vec<T>, Diagnostic> {
    c.expect(Tok::LBrace)?;
    let mut out = Vec::new();
    while !c.eat(&Tok::RBrace) {
        if c.at_eof() {
            return Err(c.error("`}`"));
        }
        out.push(item(c)?);
    }
    Ok(out)
}

fn parse_qsm_body(c: &mut Cursor, name: String, span: Span) -> Result<QsmDoc, Diagnostic> {
    let mut doc = QsmDoc {
        name,
        nodes: Vec::new(),
        edges: Vec::new(),
        exogenous: Vec::new(),
        sink: None,
        gates: Vec::new(),
        instruments: Vec::new(),
        do_states: Vec::new(),
        span,
    };
    while !c.at_eof() {
        let span = c.span();
        if c.eat_keyword("node") {
            let (name, _) = c.ident("a node name")?;
            c.keyword("in")?;
            let din = c.count("an input dimension")?;
            c.keyword("out")?;
            let dout = c.count("an output dimension")?;
            c.expect(Tok::Semi)?;
            doc.nodes.push(NodeDecl { name, din, dout, span });
        } else if c.eat_keyword("edge") {
            let (from, _) = c.ident("a node name")?;
            c.expect(Tok::Arrow)?;
            let (to, _) = c.ident("a node name")?;
            c.expect(Tok::Semi)?;
            doc.edges.push(EdgeDecl { from, to, span });
        } else if c.eat_keyword("exogenous") {
            let (name, _) = c.ident("an exogenous node name")?;
            c.keyword("for")?;
            let (owner, _) = c.ident("a node name")?;
            c.keyword("dim")?;
            let dim = c.count("a dimension")?;
            let outcomes = if c.eat(&Tok::Semi) {
                Vec::new()
            } else {
                block(c, |c| {
                    let span = c.keyword("outcome")?;
                    let label = c.string("a quoted outcome label")?;
                    c.keyword("prob")?;
                    let prob = c.number("a probability")?;
                    c.keyword("state")?;
                    let state = matrix_lit(c)?;
                    c.expect(Tok::Semi)?;
                    Ok(PreparationDecl { label, prob, state, span })
                })?
            };
            doc.exogenous.push(ExogenousDecl {
                name,
                owner,
                dim,
                outcomes,
                span,
            });
        } else if c.eat_keyword("sink") {
            let (name, _) = c.ident("a sink name")?;
            let factors = block(c, |c| {
                c.keyword("factor")?;
                let (f, _) = c.ident("a wire name")?;
                let d = c.count("a dimension")?;
                c.expect(Tok::Semi)?;
                Ok((f, d))
            })?;
            if doc.sink.is_some() {
                return Err(Diagnostic::semantic(span, "second sink declaration"));
            }
            doc.sink = Some(SinkDecl { name, factors, span });
        } else if c.eat_keyword("circuit") {
            let gates = block(c, gate_decl)?;
            doc.gates.extend(gates);
        } else if c.eat_keyword("instrument") {
            let (node, _) = c.ident("a node name")?;
            let setting = c.string("a quoted setting name")?;
            let body = if c.eat_keyword("basis") {
                let labels = string_list(c)?;
                c.expect(Tok::Semi)?;
                InstrumentBody::Basis(labels)
            } else {
                InstrumentBody::Elements(block(c, element_decl)?)
            };
            doc.instruments.push(InstrumentDecl {
                node,
                setting,
                body,
                span,
            });
        } else if c.eat_keyword("do") {
            let (node, _) = c.ident("a node name")?;
            let outcome = c.string("a quoted outcome label")?;
            let state = matrix_lit(c)?;
            c.expect(Tok::Semi)?;
            doc.do_states.push(DoDecl {
                node,
                outcome,
                state,
                span,
            });
        } else {
            return Err(c.error("`node`, `edge`, `exogenous`, `sink`, `circuit`, `instrument` or `do`"));
        }
    }
    Ok(doc)
}

fn parse_psm_body(c: &mut Cursor, name: String, span: Span) -> Result<PsmDoc, Diagnostic> {
    let mut doc = PsmDoc {
        name,
        variables: Vec::new(),
        exogenous: Vec::new(),
        tables: Vec::new(),
        joint: None,
        span,
    };
    while !c.at_eof() {
        let span = c.span();
        if c.eat_keyword("variable") {
            let (name, _) = c.ident("a variable name")?;
            c.keyword("values")?;
            let values = string_list(c)?;
            let parents = if c.eat_keyword("parents") {
                c.list(|c| c.ident("a variable name").map(|x| x.0))?
            } else {
                Vec::new()
            };
            c.expect(Tok::Semi)?;
            doc.variables.push(VariableDecl {
                name,
                values,
                parents,
                span,
            });
        } else if c.eat_keyword("exogenous") {
            let (name, _) = c.ident("an exogenous variable name")?;
            c.keyword("for")?;
            let (owner, _) = c.ident("a variable name")?;
            c.keyword("values")?;
            let values = string_list(c)?;
            c.keyword("prior")?;
            let prior = number_list(c)?;
            c.expect(Tok::Semi)?;
            doc.exogenous.push(ClassicalExogenousDecl {
                name,
                owner,
                values,
                prior,
                span,
            });
        } else if c.eat_keyword("table") {
            let (variable, _) = c.ident("a variable name")?;
            let entries = string_list(c)?;
            c.expect(Tok::Semi)?;
            doc.tables.push(TableDecl { variable, entries, span });
        } else if c.eat_keyword("joint") {
            let probs = number_list(c)?;
            c.expect(Tok::Semi)?;
            if doc.joint.is_some() {
                return Err(Diagnostic::semantic(span, "second joint prior"));
            }
            doc.joint = Some((probs, span));
        } else {
            return Err(c.error("`variable`, `exogenous`, `table` or `joint`"));
        }
    }
    Ok(doc)
}

fn header_name(c: &mut Cursor) -> Result<String, Diagnostic> {
    let (name, _) = c.ident("a model name")?;
    c.expect(Tok::Semi)?;
    Ok(name)
}

pub fn parse_model(text: &str) -> Result<ModelDocument, Diagnostic> {
    let mut c = Cursor::new(text)?;
    let (kind, span) = header(&mut c, &["qsm", "psm"])?;
    let name = header_name(&mut c)?;
    if kind == "qsm" {
        Ok(ModelDocument::Qsm(parse_qsm_body(&mut c, name, span)?))
    } else {
        Ok(ModelDocument::Psm(parse_psm_body(&mut c, name, span)?))
    }
}

pub fn parse_query(text: &str) -> Result<QueryDocument, Diagnostic> {
    let mut c = Cursor::new(text)?;
    let (_, span) = header(&mut c, &["query"])?;
    let kind = match c.ident("`classical`, `quantum` or `ambiguous`")? {
        (k, _) if k == "classical" => QueryKind::Classical,
        (k, _) if k == "quantum" => QueryKind::Quantum,
        (k, _) if k == "ambiguous" => QueryKind::Ambiguous,
        (k, s) => {
            return Err(Diagnostic::syntax(s, format!("unknown query kind `{k}`"), "`classical`, `quantum` or `ambiguous`"))
        }
    };
    c.expect(Tok::Semi)?;
    let mut doc = QueryDocument {
        kind,
        evidence: Vec::new(),
        counterfactual: Vec::new(),
        antecedent: Vec::new(),
        consequent: Vec::new(),
        span,
    };
    while !c.at_eof() {
        let span = c.span();
        if c.eat_keyword("evidence") {
            let (node, _) = c.ident("a node name")?;
            let setting = if c.eat_keyword("setting") {
                Some(c.string("a quoted setting name")?)
            } else {
                None
            };
            let outcome = if c.eat_keyword("outcome") {
                Some(c.string("a quoted outcome label")?)
            } else {
                None
            };
            c.expect(Tok::Semi)?;
            doc.evidence.push(EvidenceDecl {
                node,
                setting,
                outcome,
                span,
            });
        } else if c.eat_keyword("counterfactual") {
            let (node, _) = c.ident("a node name")?;
            let setting = if c.eat_keyword("setting") {
                SettingRef::Named(c.string("a quoted setting name")?)
            } else if c.eat_keyword("do") {
                SettingRef::Do(c.string("a quoted outcome label")?)
            } else {
                return Err(c.error("`setting` or `do`"));
            };
            c.expect(Tok::Semi)?;
            doc.counterfactual.push(CfSettingDecl { node, setting, span });
        } else if c.is_keyword("antecedent") || c.is_keyword("consequent") {
            let antecedent = c.is_keyword("antecedent");
            c.advance();
            let (node, _) = c.ident("a node name")?;
            c.keyword("outcome")?;
            let outcome = c.string("a quoted outcome label")?;
            c.expect(Tok::Semi)?;
            let d = OutcomeDecl { node, outcome, span };
            if antecedent {
                doc.antecedent.push(d);
            } else {
                doc.consequent.push(d);
            }
        } else {
            return Err(c.error("`evidence`, `counterfactual`, `antecedent` or `consequent`"));
        }
    }
    Ok(doc)
}

// ------------------------------------------------------------ serialization

fn write_matrix(m: &MatrixLit) -> String {
    let row = |r: &[C64]| format!("[{}]", r.iter().map(|c| fmt_complex(*c)).collect::<Vec<_>>().join(", "));
    match m {
        MatrixLit::Ket(v) => format!("ket {}", row(v)),
        MatrixLit::Dense(rows) => format!("matrix [{}]", rows.iter().map(|r| row(r)).collect::<Vec<_>>().join(", ")),
        MatrixLit::Identity(d) => format!("identity {d}"),
        MatrixLit::Projector { index, dim } => format!("projector {index} of {dim}"),
    }
}

fn ident_or_quote(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn names(v: &[String]) -> String {
    format!("[{}]", v.iter().map(|s| ident_or_quote(s)).collect::<Vec<_>>().join(", "))
}

fn typed(v: &[(String, usize)]) -> String {
    format!("[{}]", v.iter().map(|(s, d)| format!("{}:{d}", ident_or_quote(s))).collect::<Vec<_>>().join(", "))
}

fn strings(v: &[String]) -> String {
    format!("[{}]", v.iter().map(|s| quote(s)).collect::<Vec<_>>().join(", "))
}

fn numbers(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", "))
}

impl QsmDoc {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "qsm {};", self.name);
        if !self.nodes.is_empty() {
            s.push('\n');
        }
        for n in &self.nodes {
            let _ = writeln!(s, "node {} in {} out {};", n.name, n.din, n.dout);
        }
        for e in &self.edges {
            let _ = writeln!(s, "edge {} -> {};", e.from, e.to);
        }
        for x in &self.exogenous {
            s.push('\n');
            let _ = write!(s, "exogenous {} for {} dim {}", x.name, x.owner, x.dim);
            if x.outcomes.is_empty() {
                s.push_str(";\n");
                continue;
            }
            s.push_str(" {\n");
            for o in &x.outcomes {
                let _ = writeln!(s, "  outcome {} prob {} state {};", quote(&o.label), fmt_num(o.prob), write_matrix(&o.state));
            }
            s.push_str("}\n");
        }
        if let Some(sink) = &self.sink {
            let _ = writeln!(s, "\nsink {} {{", sink.name);
            for (f, d) in &sink.factors {
                let _ = writeln!(s, "  factor {f} {d};");
            }
            s.push_str("}\n");
        }
        if !self.gates.is_empty() {
            s.push_str("\ncircuit {\n");
            for g in &self.gates {
                let line = match &g.kind {
                    GateKind::Wire { from, to } => format!("wire {from} -> {to};"),
                    GateKind::Regroup { inputs, outputs } => format!("regroup {} -> {};", names(inputs), typed(outputs)),
                    GateKind::Permutation { name, inputs, outputs, map } => format!(
                        "permutation {} {} -> {} map [{}];",
                        quote(name),
                        names(inputs),
                        typed(outputs),
                        map.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
                    ),
                    GateKind::Matrix {
                        name,
                        inputs,
                        outputs,
                        matrix,
                    } => format!("gate {} {} -> {} {};", quote(name), names(inputs), typed(outputs), write_matrix(matrix)),
                };
                let _ = writeln!(s, "  {line}");
            }
            s.push_str("}\n");
        }
        for i in &self.instruments {
            s.push('\n');
            match &i.body {
                InstrumentBody::Basis(labels) => {
                    let _ = writeln!(s, "instrument {} {} basis {};", i.node, quote(&i.setting), strings(labels));
                }
                InstrumentBody::Elements(els) => {
                    let _ = writeln!(s, "instrument {} {} {{", i.node, quote(&i.setting));
                    for e in els {
                        let body = match &e.kind {
                            ElementKind::MeasurePrepare { prepare, effect } => {
                                format!("prepare {} effect {}", write_matrix(prepare), write_matrix(effect))
                            }
                            ElementKind::Do { state } => format!("do {}", write_matrix(state)),
                            ElementKind::Choi { matrix } => format!("choi {}", write_matrix(matrix)),
                        };
                        let _ = writeln!(s, "  element {} {body};", quote(&e.outcome));
                    }
                    s.push_str("}\n");
                }
            }
        }
        if !self.do_states.is_empty() {
            s.push('\n');
        }
        for d in &self.do_states {
            let _ = writeln!(s, "do {} {} {};", d.node, quote(&d.outcome), write_matrix(&d.state));
        }
        s
    }
}

impl PsmDoc {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "psm {};\n", self.name);
        for v in &self.variables {
            let _ = write!(s, "variable {} values {}", v.name, strings(&v.values));
            if !v.parents.is_empty() {
                let _ = write!(s, " parents {}", names(&v.parents));
            }
            s.push_str(";\n");
        }
        for x in &self.exogenous {
            let _ = writeln!(
                s,
                "exogenous {} for {} values {} prior {};",
                x.name,
                x.owner,
                strings(&x.values),
                numbers(&x.prior)
            );
        }
        for t in &self.tables {
            let _ = writeln!(s, "table {} {};", t.variable, strings(&t.entries));
        }
        if let Some((p, _)) = &self.joint {
            let _ = writeln!(s, "joint {};", numbers(p));
        }
        s
    }
}

impl ModelDocument {
    pub fn to_text(&self) -> String {
        match self {
            ModelDocument::Qsm(d) => d.to_text(),
            ModelDocument::Psm(d) => d.to_text(),
        }
    }
}

impl QueryDocument {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "query {};\n", self.kind.as_str());
        for e in &self.evidence {
            let _ = write!(s, "evidence {}", e.node);
            if let Some(z) = &e.setting {
                let _ = write!(s, " setting {}", quote(z));
            }
            if let Some(o) = &e.outcome {
                let _ = write!(s, " outcome {}", quote(o));
            }
            s.push_str(";\n");
        }
        for c in &self.counterfactual {
            match &c.setting {
                SettingRef::Named(z) => {
                    let _ = writeln!(s, "counterfactual {} setting {};", c.node, quote(z));
                }
                SettingRef::Do(o) => {
                    let _ = writeln!(s, "counterfactual {} do {};", c.node, quote(o));
                }
            }
        }
        for a in &self.antecedent {
            let _ = writeln!(s, "antecedent {} outcome {};", a.node, quote(&a.outcome));
        }
        for a in &self.consequent {
            let _ = writeln!(s, "consequent {} outcome {};", a.node, quote(&a.outcome));
        }
        s
    }
}

// ----------------------------------------------------------------- building

fn to_matrix(m: &MatrixLit, dim: usize, span: Span, what: &str) -> Result<CMatrix, Diagnostic> {
    let wrong = |got: String| Diagnostic::semantic(span, format!("{what} must be {dim}x{dim}, got {got}"));
    match m {
        MatrixLit::Ket(v) => {
            if v.len() != dim {
                return Err(wrong(format!("a ket of length {}", v.len())));
            }
            let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Diagnostic::semantic(span, format!("{what}: zero ket")));
            }
            Ok(CMatrix::from_fn(dim, dim, |i, j| v[i] * v[j].conj() / C64::new(norm * norm, 0.0)))
        }
        MatrixLit::Dense(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(wrong(format!("{} rows", rows.len())));
            }
            Ok(CMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
        }
        MatrixLit::Identity(d) => {
            if *d != dim {
                return Err(wrong(format!("identity {d}")));
            }
            Ok(CMatrix::identity(dim, dim))
        }
        MatrixLit::Projector { index, dim: d } => {
            if *d != dim {
                return Err(wrong(format!("projector of dim {d}")));
            }
            if index >= d {
                return Err(Diagnostic::semantic(span, format!("{what}: basis index {index} out of range {d}")));
            }
            let mut p = CMatrix::zeros(dim, dim);
            p[(*index, *index)] = ONE;
            Ok(p)
        }
    }
}

fn rect_matrix(m: &MatrixLit, rows: usize, cols: usize, span: Span) -> Result<CMatrix, Diagnostic> {
    match m {
        MatrixLit::Dense(r) if r.len() == rows && r.iter().all(|x| x.len() == cols) => Ok(CMatrix::from_fn(rows, cols, |i, j| r[i][j])),
        MatrixLit::Identity(d) if *d == rows && *d == cols => Ok(CMatrix::identity(rows, cols)),
        _ if rows == cols => to_matrix(m, rows, span, "gate matrix"),
        _ => Err(Diagnostic::semantic(span, format!("gate matrix must be {rows}x{cols}"))),
    }
}

/// Hermitian, PSD and unit trace, with the spectrum reported on failure.
fn check_density(m: &CMatrix, span: Span, what: &str, tol: &Tolerance) -> Result<(), Diagnostic> {
    let op = LabeledOperator::new(vec![SpaceLabel::new("s", m.nrows())], m.clone()).map_err(|e| Diagnostic::semantic(span, e.to_string()))?;
    if !op.is_hermitian(tol) {
        return Err(Diagnostic::semantic(span, format!("{what} is not Hermitian")));
    }
    let eig = op.eigenvalues();
    if eig.iter().any(|&x| x < -tol.eps_psd) {
        let list = eig.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
        return Err(Diagnostic::semantic(span, format!("{what} is not positive semi-definite; eigenvalues [{list}]")));
    }
    let tr = op.trace().re;
    if (tr - 1.0).abs() > tol.eps_trace {
        return Err(Diagnostic::semantic(span, format!("{what} has trace {tr}, expected 1")));
    }
    Ok(())
}

fn sem<E: std::fmt::Display>(span: Span) -> impl Fn(E) -> Diagnostic {
    move |e| Diagnostic::semantic(span, e.to_string())
}

impl QsmDoc {
    pub fn build(&self, tol: &Tolerance) -> Result<Qsm, Diagnostic> {
        let mut endogenous: Vec<QuantumNode> = Vec::new();
        for n in &self.nodes {
            if endogenous.iter().any(|e| e.name == n.name) {
                return Err(Diagnostic::semantic(n.span, format!("node `{}` declared twice", n.name)));
            }
            if n.din == 0 || n.dout == 0 {
                return Err(Diagnostic::semantic(n.span, "dimensions must be positive"));
            }
            endogenous.push(QuantumNode::new(n.name.clone(), n.din, n.dout));
        }
        let node = |name: &str, span: Span| -> Result<&QuantumNode, Diagnostic> {
            endogenous
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Diagnostic::semantic(span, format!("undeclared node `{name}`")))
        };
        for e in &self.edges {
            node(&e.from, e.span)?;
            node(&e.to, e.span)?;
        }
        let dag = Dag::new(
            endogenous.iter().map(|n| n.name.clone()).collect(),
            self.edges.iter().map(|e| (e.from.clone(), e.to.clone())),
        )
        .map_err(sem(self.edges.first().map_or(self.span, |e| e.span)))?;

        let mut exogenous = Vec::with_capacity(endogenous.len());
        for x in &self.exogenous {
            node(&x.owner, x.span)?;
            if self.exogenous.iter().filter(|y| y.owner == x.owner).count() > 1 {
                return Err(Diagnostic::semantic(x.span, format!("node `{}` has two exogenous nodes", x.owner)));
            }
        }
        for n in &endogenous {
            let x = self
                .exogenous
                .iter()
                .find(|x| x.owner == n.name)
                .ok_or_else(|| Diagnostic::semantic(self.span, format!("node `{}` has no exogenous node", n.name)))?;
            if x.outcomes.is_empty() {
                if x.dim != 1 {
                    return Err(Diagnostic::semantic(x.span, "an exogenous node without outcomes must have dim 1"));
                }
                exogenous.push(ExogenousInstrument::trivial(x.name.clone()));
                continue;
            }
            let mut outcomes = Vec::with_capacity(x.outcomes.len());
            for o in &x.outcomes {
                let st = to_matrix(&o.state, x.dim, o.span, &format!("state of outcome `{}`", o.label))?;
                check_density(&st, o.span, &format!("state of outcome `{}`", o.label), tol)?;
                outcomes.push((o.label.clone(), o.prob, st));
            }
            exogenous.push(ExogenousInstrument::new(QuantumNode::new(x.name.clone(), 1, x.dim), outcomes, tol).map_err(sem(x.span))?);
        }

        let sink_decl = self
            .sink
            .as_ref()
            .ok_or_else(|| Diagnostic::semantic(self.span, "model has no sink declaration"))?;
        let sink = SinkNode {
            name: sink_decl.name.clone(),
            factors: sink_decl.factors.iter().map(|(f, d)| SpaceLabel::new(f.clone(), *d)).collect(),
        };

        let mut inputs: Vec<SpaceLabel> = endogenous.iter().map(|n| n.out_space.clone()).collect();
        inputs.extend(exogenous.iter().map(|e| e.node.out_space.clone()));
        let mut outputs: Vec<SpaceLabel> = endogenous.iter().map(|n| n.in_space.clone()).collect();
        outputs.extend(sink.factors.iter().cloned());
        let mut live: BTreeMap<String, SpaceLabel> = inputs.iter().map(|l| (l.name.clone(), l.clone())).collect();
        let mut gates = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let take = |live: &mut BTreeMap<String, SpaceLabel>, names: &[String]| -> Result<Vec<SpaceLabel>, Diagnostic> {
                names
                    .iter()
                    .map(|n| live.remove(n).ok_or_else(|| Diagnostic::semantic(g.span, format!("wire `{n}` is not live here"))))
                    .collect()
            };
            let outs = |v: &[(String, usize)]| v.iter().map(|(n, d)| SpaceLabel::new(n.clone(), *d)).collect::<Vec<_>>();
            let gate = match &g.kind {
                GateKind::Wire { from, to } => {
                    let from = take(&mut live, std::slice::from_ref(from))?.remove(0);
                    Gate::wire(from, to.clone())
                }
                GateKind::Regroup { inputs, outputs } => Gate::regroup(take(&mut live, inputs)?, outs(outputs)).map_err(sem(g.span))?,
                GateKind::Permutation { name, inputs, outputs, map } => {
                    let ins = take(&mut live, inputs)?;
                    let din: usize = ins.iter().map(|l| l.dim).product();
                    if map.len() != din {
                        return Err(Diagnostic::semantic(g.span, format!("map has {} entries for input dimension {din}", map.len())));
                    }
                    if map.iter().collect::<BTreeSet<_>>().len() != map.len() {
                        return Err(Diagnostic::semantic(g.span, "map is not injective"));
                    }
                    Gate::permutation(name.clone(), ins, outs(outputs), |i| map[i]).map_err(sem(g.span))?
                }
                GateKind::Matrix {
                    name,
                    inputs,
                    outputs,
                    matrix,
                } => {
                    let ins = take(&mut live, inputs)?;
                    let o = outs(outputs);
                    let m = rect_matrix(
                        matrix,
                        o.iter().map(|l| l.dim).product(),
                        ins.iter().map(|l| l.dim).product(),
                        g.span,
                    )?;
                    Gate::new(name.clone(), ins, o, m).map_err(sem(g.span))?
                }
            };
            for l in &gate.outputs {
                if live.insert(l.name.clone(), l.clone()).is_some() {
                    return Err(Diagnostic::semantic(g.span, format!("wire `{}` is already live", l.name)));
                }
            }
            gates.push(gate);
        }
        let circuit_span = self.gates.first().map_or(self.span, |g| g.span);
        let circuit = Circuit::new(inputs, outputs, gates).map_err(sem(circuit_span))?;

        let mut instruments = Vec::with_capacity(self.instruments.len());
        for i in &self.instruments {
            let n = node(&i.node, i.span)?;
            let instr = match &i.body {
                InstrumentBody::Basis(labels) => Instrument::basis_measurement(n.clone(), i.setting.clone(), labels).map_err(sem(i.span))?,
                InstrumentBody::Elements(els) => {
                    let mut elements = Vec::with_capacity(els.len());
                    for e in els {
                        let el = match &e.kind {
                            ElementKind::MeasurePrepare { prepare, effect } => {
                                let p = to_matrix(prepare, n.dout(), e.span, "prepared state")?;
                                let f = to_matrix(effect, n.din(), e.span, "effect")?;
                                InstrumentElement::measure_prepare(n, e.outcome.clone(), &p, &f)
                            }
                            ElementKind::Do { state } => {
                                let p = to_matrix(state, n.dout(), e.span, "do state")?;
                                check_density(&p, e.span, "do state", tol)?;
                                InstrumentElement::measure_prepare(n, e.outcome.clone(), &p, &CMatrix::identity(n.din(), n.din()))
                            }
                            ElementKind::Choi { matrix } => {
                                let d = n.din() * n.dout();
                                let m = to_matrix(matrix, d, e.span, "CJ operator")?;
                                InstrumentElement::from_choi(n, e.outcome.clone(), m)
                            }
                        }
                        .map_err(sem(e.span))?;
                        elements.push(el);
                    }
                    Instrument::validated(n.clone(), i.setting.clone(), elements, tol).map_err(sem(i.span))?
                }
            };
            instruments.push(instr);
        }

        let mut do_states: BTreeMap<String, BTreeMap<String, CMatrix>> = BTreeMap::new();
        for d in &self.do_states {
            let n = node(&d.node, d.span)?;
            let st = to_matrix(&d.state, n.dout(), d.span, "do state")?;
            check_density(&st, d.span, "do state", tol)?;
            if do_states.entry(d.node.clone()).or_default().insert(d.outcome.clone(), st).is_some() {
                return Err(Diagnostic::semantic(d.span, format!("do state `{}` at `{}` declared twice", d.outcome, d.node)));
            }
        }
        Qsm::new(self.name.clone(), endogenous, exogenous, sink, circuit, dag, instruments, do_states).map_err(sem(self.span))
    }
}

impl PsmDoc {
    /// Document describing `psm` under the given model name.
    pub fn from_psm(name: impl Into<String>, psm: &ClassicalPsm) -> PsmDoc {
        let span = Span::default();
        let csm = &psm.csm;
        let variables = csm
            .endogenous
            .iter()
            .zip(&csm.parents)
            .map(|(v, ps)| VariableDecl {
                name: v.name.clone(),
                values: v.values.clone(),
                parents: ps.iter().map(|&j| csm.endogenous[j].name.clone()).collect(),
                span,
            })
            .collect();
        let exogenous = csm
            .exogenous
            .iter()
            .zip(&csm.endogenous)
            .zip(&psm.priors)
            .map(|((u, v), p)| ClassicalExogenousDecl {
                name: u.name.clone(),
                owner: v.name.clone(),
                values: u.values.clone(),
                prior: p.clone(),
                span,
            })
            .collect();
        let tables = csm
            .endogenous
            .iter()
            .zip(&csm.tables)
            .map(|(v, t)| TableDecl {
                variable: v.name.clone(),
                entries: t.iter().map(|&k| v.values[k].clone()).collect(),
                span,
            })
            .collect();
        PsmDoc {
            name: name.into(),
            variables,
            exogenous,
            tables,
            joint: psm.joint.clone().map(|j| (j, span)),
            span,
        }
    }

    pub fn build(&self) -> Result<ClassicalPsm, Diagnostic> {
        let mut endogenous = Vec::with_capacity(self.variables.len());
        let mut parents = Vec::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            if self.variables[..i].iter().any(|w| w.name == v.name) {
                return Err(Diagnostic::semantic(v.span, format!("variable `{}` declared twice", v.name)));
            }
            let mut ps = Vec::with_capacity(v.parents.len());
            for p in &v.parents {
                let j = self.variables[..i]
                    .iter()
                    .position(|w| w.name == *p)
                    .ok_or_else(|| Diagnostic::semantic(v.span, format!("parent `{p}` must be declared before `{}`", v.name)))?;
                ps.push(j);
            }
            endogenous.push(Variable {
                name: v.name.clone(),
                values: v.values.clone(),
            });
            parents.push(ps);
        }
        for x in &self.exogenous {
            if !self.variables.iter().any(|v| v.name == x.owner) {
                return Err(Diagnostic::semantic(x.span, format!("undeclared variable `{}`", x.owner)));
            }
            if self.exogenous.iter().filter(|y| y.owner == x.owner).count() > 1 {
                return Err(Diagnostic::semantic(x.span, format!("variable `{}` has two exogenous variables", x.owner)));
            }
        }
        for t in &self.tables {
            if !self.variables.iter().any(|v| v.name == t.variable) {
                return Err(Diagnostic::semantic(t.span, format!("undeclared variable `{}`", t.variable)));
            }
            if self.tables.iter().filter(|s| s.variable == t.variable).count() > 1 {
                return Err(Diagnostic::semantic(t.span, format!("variable `{}` has two tables", t.variable)));
            }
        }
        let mut exogenous = Vec::new();
        let mut priors = Vec::new();
        let mut tables = Vec::new();
        for v in &self.variables {
            let x = self
                .exogenous
                .iter()
                .find(|x| x.owner == v.name)
                .ok_or_else(|| Diagnostic::semantic(v.span, format!("variable `{}` has no exogenous variable", v.name)))?;
            if x.prior.len() != x.values.len() {
                return Err(Diagnostic::semantic(x.span, format!("{} prior entries for {} values", x.prior.len(), x.values.len())));
            }
            exogenous.push(Variable {
                name: x.name.clone(),
                values: x.values.clone(),
            });
            priors.push(x.prior.clone());
            let t = self
                .tables
                .iter()
                .find(|t| t.variable == v.name)
                .ok_or_else(|| Diagnostic::semantic(v.span, format!("variable `{}` has no table", v.name)))?;
            let entries = t
                .entries
                .iter()
                .map(|e| {
                    v.values
                        .iter()
                        .position(|x| x == e)
                        .ok_or_else(|| Diagnostic::semantic(t.span, format!("`{e}` is not a value of `{}`", v.name)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            tables.push(entries);
        }
        let csm = ClassicalCsm::new(endogenous, exogenous, parents, tables).map_err(sem(self.span))?;
        let (joint, span) = match &self.joint {
            Some((p, s)) => (Some(p.clone()), *s),
            None => (None, self.span),
        };
        ClassicalPsm::new(csm, priors, joint).map_err(sem(span))
    }
}

pub enum BuiltQuery {
    Classical(ClassicalQuery),
    Quantum(CfQuery),
    Ambiguous(AmbiguousQuery),
}

fn outcome_map(v: &[OutcomeDecl], what: &str) -> Result<BTreeMap<String, String>, Diagnostic> {
    let mut m = BTreeMap::new();
    for d in v {
        if m.insert(d.node.clone(), d.outcome.clone()).is_some() {
            return Err(Diagnostic::semantic(d.span, format!("{what} repeats node `{}`", d.node)));
        }
    }
    Ok(m)
}

impl QueryDocument {
    pub fn build_classical(&self, psm: &ClassicalPsm) -> Result<ClassicalQuery, Diagnostic> {
        if self.kind != QueryKind::Classical {
            return Err(Diagnostic::semantic(self.span, format!("a classical model needs a classical query, not `{}`", self.kind.as_str())));
        }
        if let Some(c) = self.counterfactual.first() {
            return Err(Diagnostic::semantic(c.span, "classical queries take no counterfactual settings"));
        }
        let mut evidence = BTreeMap::new();
        for e in &self.evidence {
            if e.setting.is_some() {
                return Err(Diagnostic::semantic(e.span, "classical evidence takes no setting"));
            }
            let o = e
                .outcome
                .clone()
                .ok_or_else(|| Diagnostic::semantic(e.span, "classical evidence needs an outcome"))?;
            if evidence.insert(e.node.clone(), o).is_some() {
                return Err(Diagnostic::semantic(e.span, format!("evidence repeats `{}`", e.node)));
            }
        }
        let q = ClassicalQuery {
            evidence,
            antecedent: outcome_map(&self.antecedent, "antecedent")?,
            consequent: outcome_map(&self.consequent, "consequent")?,
        };
        let all = self
            .evidence
            .iter()
            .map(|e| (&e.node, e.outcome.as_deref().unwrap_or(""), e.span))
            .chain(self.antecedent.iter().chain(&self.consequent).map(|d| (&d.node, d.outcome.as_str(), d.span)));
        for (node, value, span) in all {
            let i = psm.csm.var_index(node).map_err(sem(span))?;
            psm.csm.endogenous[i].index(value).map_err(sem(span))?;
        }
        if q.antecedent.is_empty() {
            return Err(Diagnostic::semantic(self.span, "query has no antecedent"));
        }
        Ok(q)
    }

    pub fn build_quantum(&self, q: &Qsm) -> Result<BuiltQuery, Diagnostic> {
        if self.kind == QueryKind::Classical {
            return Err(Diagnostic::semantic(self.span, "a quantum model needs a `quantum` or `ambiguous` query"));
        }
        let mut settings = BTreeMap::new();
        let mut outcomes = BTreeMap::new();
        for e in &self.evidence {
            let z = e
                .setting
                .as_ref()
                .ok_or_else(|| Diagnostic::semantic(e.span, format!("evidence at `{}` needs a setting", e.node)))?;
            let instr = q.instrument(&e.node, z).map_err(sem(e.span))?;
            if settings.insert(e.node.clone(), instr.clone()).is_some() {
                return Err(Diagnostic::semantic(e.span, format!("evidence repeats `{}`", e.node)));
            }
            if let Some(o) = &e.outcome {
                outcomes.insert(e.node.clone(), o.clone());
            }
        }
        for n in &q.endogenous {
            if !settings.contains_key(&n.name) {
                return Err(Diagnostic::semantic(self.span, format!("evidence gives no setting for `{}`", n.name)));
            }
        }
        let antecedent = outcome_map(&self.antecedent, "antecedent")?;
        let consequent = outcome_map(&self.consequent, "consequent")?;
        let mut cf = BTreeMap::new();
        for c in &self.counterfactual {
            let instr = match &c.setting {
                SettingRef::Named(z) => q.instrument(&c.node, z).map_err(sem(c.span))?.clone(),
                SettingRef::Do(o) => {
                    let n = q.node(&c.node).map_err(sem(c.span))?;
                    let st = q
                        .do_states
                        .get(&c.node)
                        .and_then(|t| t.get(o))
                        .ok_or_else(|| Diagnostic::semantic(c.span, format!("no do state `{o}` declared for `{}`", c.node)))?;
                    let mut i = make_do_instrument(n, o.clone(), st).map_err(sem(c.span))?;
                    i.setting = format!("do({o})");
                    i
                }
            };
            if self.kind == QueryKind::Ambiguous && antecedent.contains_key(&c.node) {
                return Err(Diagnostic::semantic(c.span, format!("ambiguous queries leave the antecedent node `{}` open", c.node)));
            }
            if cf.insert(c.node.clone(), instr).is_some() {
                return Err(Diagnostic::semantic(c.span, format!("counterfactual setting repeats `{}`", c.node)));
            }
        }
        let evidence = Evidence { settings, outcomes };
        if self.kind == QueryKind::Ambiguous {
            let amb = AmbiguousQuery {
                evidence,
                cf_settings: cf,
                antecedent,
                consequent,
            };
            amb.passive_completion().validate(q).map_err(sem(self.span))?;
            return Ok(BuiltQuery::Ambiguous(amb));
        }
        for a in &self.antecedent {
            if !cf.contains_key(&a.node) {
                return Err(Diagnostic::semantic(
                    a.span,
                    format!("antecedent node `{}` needs a counterfactual setting (or use `query ambiguous`)", a.node),
                ));
            }
        }
        for (node, instr) in &evidence.settings {
            cf.entry(node.clone()).or_insert_with(|| instr.clone());
        }
        let query = CfQuery {
            evidence,
            cf_settings: cf,
            antecedent,
            consequent,
        };
        query.validate(q).map_err(sem(self.span))?;
        Ok(BuiltQuery::Quantum(query))
    }
}

// ------------------------------------------------------------------ emitting

fn lit_of(m: &CMatrix) -> MatrixLit {
    let d = m.nrows();
    if m.ncols() == d {
        if *m == CMatrix::identity(d, d) {
            return MatrixLit::Identity(d);
        }
        let ones: Vec<usize> = (0..d).filter(|&i| m[(i, i)] == ONE).collect();
        if ones.len() == 1 && m.iter().filter(|&&x| x != ZERO).count() == 1 {
            return MatrixLit::Projector { index: ones[0], dim: d };
        }
    }
    MatrixLit::Dense((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
}

/// Column images of a 0/1 matrix with one 1 per column, if it is one.
fn permutation_map(m: &CMatrix) -> Option<Vec<usize>> {
    let mut map = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut hit = None;
        for i in 0..m.nrows() {
            let x = m[(i, j)];
            if x == ONE && hit.is_none() {
                hit = Some(i);
            } else if x != ZERO {
                return None;
            }
        }
        map.push(hit?);
    }
    Some(map)
}

fn labels(v: &[SpaceLabel]) -> Vec<String> {
    v.iter().map(|l| l.name.clone()).collect()
}

fn typed_labels(v: &[SpaceLabel]) -> Vec<(String, usize)> {
    v.iter().map(|l| (l.name.clone(), l.dim)).collect()
}

impl QsmDoc {
    /// Document describing `q`; identity gates become wires or regroups and
    /// 0/1 gates become permutations.
    pub fn from_qsm(q: &Qsm) -> QsmDoc {
        let span = Span::default();
        let nodes = q
            .endogenous
            .iter()
            .map(|n| NodeDecl {
                name: n.name.clone(),
                din: n.din(),
                dout: n.dout(),
                span,
            })
            .collect();
        let edges = q
            .dag
            .edges
            .iter()
            .map(|(a, b)| EdgeDecl {
                from: a.clone(),
                to: b.clone(),
                span,
            })
            .collect();
        let exogenous = q
            .exogenous
            .iter()
            .zip(&q.endogenous)
            .map(|(x, n)| {
                let trivial = x.node.dout() == 1 && x.outcomes.len() == 1 && x.outcomes[0].label == "*";
                ExogenousDecl {
                    name: x.node.name.clone(),
                    owner: n.name.clone(),
                    dim: x.node.dout(),
                    outcomes: if trivial {
                        Vec::new()
                    } else {
                        x.outcomes
                            .iter()
                            .map(|o| PreparationDecl {
                                label: o.label.clone(),
                                prob: o.prob,
                                state: lit_of(o.state.data()),
                                span,
                            })
                            .collect()
                    },
                    span,
                }
            })
            .collect();
        let gates = q
            .circuit
            .gates
            .iter()
            .map(|g| {
                let din: usize = g.inputs.iter().map(|l| l.dim).product();
                let dout: usize = g.outputs.iter().map(|l| l.dim).product();
                let kind = if din == dout && g.matrix == CMatrix::identity(din, din) {
                    if g.inputs.len() == 1 && g.outputs.len() == 1 {
                        GateKind::Wire {
                            from: g.inputs[0].name.clone(),
                            to: g.outputs[0].name.clone(),
                        }
                    } else {
                        GateKind::Regroup {
                            inputs: labels(&g.inputs),
                            outputs: typed_labels(&g.outputs),
                        }
                    }
                } else if let Some(map) = permutation_map(&g.matrix) {
                    GateKind::Permutation {
                        name: g.name.clone(),
                        inputs: labels(&g.inputs),
                        outputs: typed_labels(&g.outputs),
                        map,
                    }
                } else {
                    GateKind::Matrix {
                        name: g.name.clone(),
                        inputs: labels(&g.inputs),
                        outputs: typed_labels(&g.outputs),
                        matrix: lit_of(&g.matrix),
                    }
                };
                GateDecl { kind, span }
            })
            .collect();
        let instruments = q
            .instruments
            .iter()
            .map(|i| {
                let labels: Vec<String> = i.elements.iter().map(|e| e.outcome.clone()).collect();
                let basis = Instrument::basis_measurement(i.node.clone(), i.setting.clone(), &labels)
                    .is_ok_and(|b| b.approx_eq(i, 0.0));
                let body = if basis {
                    InstrumentBody::Basis(labels)
                } else {
                    InstrumentBody::Elements(
                        i.elements
                            .iter()
                            .map(|e| ElementDecl {
                                outcome: e.outcome.clone(),
                                kind: ElementKind::Choi {
                                    matrix: lit_of(e.choi.data()),
                                },
                                span,
                            })
                            .collect(),
                    )
                };
                InstrumentDecl {
                    node: i.node.name.clone(),
                    setting: i.setting.clone(),
                    body,
                    span,
                }
            })
            .collect();
        let do_states = q
            .do_states
            .iter()
            .flat_map(|(node, t)| {
                t.iter().map(move |(o, st)| DoDecl {
                    node: node.clone(),
                    outcome: o.clone(),
                    state: lit_of(st),
                    span,
                })
            })
            .collect();
        QsmDoc {
            name: q.name.clone(),
            nodes,
            edges,
            exogenous,
            sink: Some(SinkDecl {
                name: q.sink.name.clone(),
                factors: typed_labels(&q.sink.factors),
                span,
            }),
            gates,
            instruments,
            do_states,
            span,
        }
    }
}
