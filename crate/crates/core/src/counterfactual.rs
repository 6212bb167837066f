//! Counterfactual queries on a QSM: abduction over exogenous outcomes,
//! instrument substitution, and the posterior-weighted counterfactual
//! probability, with "*" for counterpossibles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::instruments::{make_do_instrument, Instrument};
use crate::process::ProcessOperator;
use crate::qsm::{conditional_process, evidence_probability, Lambda, Qsm, QsmError};
use crate::tensor::Tolerance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CfError {
    #[error("evidence has probability {0:e}; nothing to condition on")]
    ZeroEvidenceProbability(f64),
    #[error("no do-state declared for outcome `{outcome}` at node `{node}`")]
    NoDoStateDeclared { node: String, outcome: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Qsm(#[from] QsmError),
}

impl From<crate::process::ProcessError> for CfError {
    fn from(e: crate::process::ProcessError) -> Self {
        CfError::Qsm(e.into())
    }
}

/// Instruments actually used (z) and the outcomes observed (a).
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub settings: BTreeMap<String, Instrument>,
    pub outcomes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfQuery {
    pub evidence: Evidence,
    /// z′ for every endogenous node.
    pub cf_settings: BTreeMap<String, Instrument>,
    /// b′ at the nodes B.
    pub antecedent: BTreeMap<String, String>,
    /// c′ at the nodes C.
    pub consequent: BTreeMap<String, String>,
}

/// A query whose instruments on the antecedent nodes are left open.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguousQuery {
    pub evidence: Evidence,
    /// z′ for nodes outside B; nodes missing here keep their evidence instrument.
    pub cf_settings: BTreeMap<String, Instrument>,
    pub antecedent: BTreeMap<String, String>,
    pub consequent: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfValue {
    Prob(f64),
    /// Impossible antecedent.
    Counterpossible,
}

impl CfValue {
    pub fn prob(&self) -> Option<f64> {
        match self {
            CfValue::Prob(p) => Some(*p),
            CfValue::Counterpossible => None,
        }
    }

    pub fn is_counterpossible(&self) -> bool {
        matches!(self, CfValue::Counterpossible)
    }
}

impl fmt::Display for CfValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CfValue::Prob(p) => write!(f, "{}", format_prob(*p)),
            CfValue::Counterpossible => write!(f, "*"),
        }
    }
}

impl Serialize for CfValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CfValue::Prob(p) => s.serialize_f64(round_prob(*p)),
            CfValue::Counterpossible => s.serialize_str("*"),
        }
    }
}

impl<'de> Deserialize<'de> for CfValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Star(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(CfValue::Prob(p)),
            Raw::Star(s) if s == "*" => Ok(CfValue::Counterpossible),
            Raw::Star(s) => Err(serde::de::Error::custom(format!("expected a number or \"*\", got {s:?}"))),
        }
    }
}

/// Rounds to 12 decimals so reports are stable across platforms.
pub fn round_prob(p: f64) -> f64 {
    let r = (p * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn format_prob(p: f64) -> String {
    let s = format!("{:.12}", round_prob(p));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CfKind {
    Passive,
    Active,
    DoInterventional,
}

impl CfKind {
    /// Do-interventional queries are a special case of active ones.
    pub fn is_active(&self) -> bool {
        !matches!(self, CfKind::Passive)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CfKind::Passive => "passive",
            CfKind::Active => "active",
            CfKind::DoInterventional => "do-interventional",
        }
    }
}

impl Evidence {
    pub fn validate(&self, q: &Qsm) -> Result<(), CfError> {
        check_settings(q, &self.settings, "evidence")?;
        check_outcomes(&self.settings, &self.outcomes, "evidence")
    }
}

fn check_settings(q: &Qsm, settings: &BTreeMap<String, Instrument>, what: &str) -> Result<(), CfError> {
    for n in &q.endogenous {
        match settings.get(&n.name) {
            Some(i) if i.node == *n => {}
            Some(_) => return Err(CfError::InvalidQuery(format!("{what} instrument for `{}` acts on another node", n.name))),
            None => return Err(CfError::InvalidQuery(format!("{what} gives no instrument for `{}`", n.name))),
        }
    }
    if let Some(k) = settings.keys().find(|k| q.node(k).is_err()) {
        return Err(CfError::InvalidQuery(format!("{what} names unknown node `{k}`")));
    }
    Ok(())
}

fn check_outcomes(
    settings: &BTreeMap<String, Instrument>,
    outcomes: &BTreeMap<String, String>,
    what: &str,
) -> Result<(), CfError> {
    for (node, o) in outcomes {
        let instr = settings
            .get(node)
            .ok_or_else(|| CfError::InvalidQuery(format!("{what} outcome at unknown node `{node}`")))?;
        if instr.element(o).is_none() {
            return Err(CfError::InvalidQuery(format!(
                "{what}: instrument `{}` at `{node}` has no outcome `{o}`",
                instr.setting
            )));
        }
    }
    Ok(())
}

impl CfQuery {
    pub fn validate(&self, q: &Qsm) -> Result<(), CfError> {
        self.evidence.validate(q)?;
        check_settings(q, &self.cf_settings, "counterfactual settings")?;
        check_outcomes(&self.cf_settings, &self.antecedent, "antecedent")?;
        check_outcomes(&self.cf_settings, &self.consequent, "consequent")?;
        if let Some(n) = self.antecedent.keys().find(|n| self.consequent.contains_key(*n)) {
            return Err(CfError::InvalidQuery(format!("`{n}` is in both antecedent and consequent")));
        }
        if self.antecedent.is_empty() {
            return Err(CfError::InvalidQuery("empty antecedent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorEntry {
    pub lambda: String,
    #[serde(skip)]
    pub assignment: Lambda,
    pub prior: f64,
    pub likelihood: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Posterior {
    pub evidence_probability: f64,
    pub entries: Vec<PosteriorEntry>,
}

impl Posterior {
    pub fn get(&self, lambda: &[String]) -> Option<f64> {
        self.entries.iter().find(|e| e.assignment == lambda).map(|e| e.posterior)
    }
}

fn conditional_processes(q: &Qsm) -> Result<Vec<(Lambda, f64, ProcessOperator)>, CfError> {
    q.lambda_assignments()
        .into_iter()
        .map(|(l, p)| Ok((l.clone(), p, conditional_process(q, &l)?)))
        .collect()
}

fn abduct_with(q: &Qsm, procs: &[(Lambda, f64, ProcessOperator)], ev: &Evidence, tol: &Tolerance) -> Result<Posterior, CfError> {
    let mut entries = Vec::with_capacity(procs.len());
    let mut total = 0.0;
    for (l, prior, sigma) in procs {
        let lik = evidence_probability(sigma, &ev.settings, &ev.outcomes)?;
        total += prior * lik;
        entries.push(PosteriorEntry {
            lambda: q.lambda_label(l),
            assignment: l.clone(),
            prior: *prior,
            likelihood: lik,
            posterior: prior * lik,
        });
    }
    if total <= tol.eps_prob {
        return Err(CfError::ZeroEvidenceProbability(total));
    }
    for e in &mut entries {
        e.posterior /= total;
    }
    Ok(Posterior {
        evidence_probability: total,
        entries,
    })
}

/// P_z(λ|a) over every λ with nonzero prior.
pub fn abduct(q: &Qsm, ev: &Evidence, tol: &Tolerance) -> Result<Posterior, CfError> {
    ev.validate(q)?;
    abduct_with(q, &conditional_processes(q)?, ev, tol)
}

#[derive(Debug, Clone, Copy)]
struct Ratio {
    numerator: f64,
    denominator: f64,
    value: CfValue,
}

fn ratio_on(sigma: &ProcessOperator, query: &CfQuery, tol: &Tolerance) -> Result<Ratio, CfError> {
    let denominator = evidence_probability(sigma, &query.cf_settings, &query.antecedent)?;
    let mut joint = query.antecedent.clone();
    joint.extend(query.consequent.iter().map(|(k, v)| (k.clone(), v.clone())));
    let numerator = evidence_probability(sigma, &query.cf_settings, &joint)?;
    let value = if denominator <= tol.eps_prob {
        CfValue::Counterpossible
    } else {
        CfValue::Prob((numerator / denominator).clamp(0.0, 1.0))
    };
    Ok(Ratio {
        numerator,
        denominator,
        value,
    })
}

/// P^λ_{z′}(c′|b′), or "*" when P^λ_{z′}(b′) ≤ eps_prob.
pub fn counterfactual_probability(q: &Qsm, lambda: &[String], query: &CfQuery, tol: &Tolerance) -> Result<CfValue, CfError> {
    query.validate(q)?;
    let sigma = conditional_process(q, lambda)?;
    Ok(ratio_on(&sigma, query, tol)?.value)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaTerm {
    pub lambda: String,
    pub posterior: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub value: CfValue,
    /// Posterior ≤ eps_prob: excluded from the expectation.
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CfReport {
    pub kind: CfKind,
    pub posterior: Posterior,
    pub terms: Vec<LambdaTerm>,
    pub value: CfValue,
    /// λ-assignments with posterior > eps_prob whose antecedent is impossible.
    pub triggers: Vec<String>,
}

/// Σ_λ P_z(λ|a) P^λ_{z′}(c′|b′); "*" if any posterior-supported λ is a counterpossible.
pub fn evaluate(q: &Qsm, query: &CfQuery, tol: &Tolerance) -> Result<CfReport, CfError> {
    query.validate(q)?;
    let procs = conditional_processes(q)?;
    let posterior = abduct_with(q, &procs, &query.evidence, tol)?;
    let mut terms = Vec::with_capacity(procs.len());
    let mut triggers = Vec::new();
    let mut acc = 0.0;
    for ((_, _, sigma), entry) in procs.iter().zip(&posterior.entries) {
        let r = ratio_on(sigma, query, tol)?;
        let skipped = entry.posterior <= tol.eps_prob;
        if !skipped {
            match r.value {
                CfValue::Prob(p) => acc += entry.posterior * p,
                CfValue::Counterpossible => triggers.push(entry.lambda.clone()),
            }
        }
        terms.push(LambdaTerm {
            lambda: entry.lambda.clone(),
            posterior: entry.posterior,
            numerator: r.numerator,
            denominator: r.denominator,
            value: r.value,
            skipped,
        });
    }
    let value = if triggers.is_empty() {
        CfValue::Prob(acc.clamp(0.0, 1.0))
    } else {
        CfValue::Counterpossible
    };
    Ok(CfReport {
        kind: classify(query, tol),
        posterior,
        terms,
        value,
        triggers,
    })
}

/// Passive if z′ = z on the antecedent nodes, do-interventional if every
/// antecedent node gets a single-element do-instrument, active otherwise.
pub fn classify(query: &CfQuery, tol: &Tolerance) -> CfKind {
    let same = query.antecedent.keys().all(|n| {
        match (query.cf_settings.get(n), query.evidence.settings.get(n)) {
            (Some(a), Some(b)) => a.approx_eq(b, tol.eps_trace),
            _ => false,
        }
    });
    if same {
        return CfKind::Passive;
    }
    let all_do = query
        .antecedent
        .keys()
        .all(|n| query.cf_settings.get(n).is_some_and(|i| i.is_do_instrument(tol)));
    if all_do {
        CfKind::DoInterventional
    } else {
        CfKind::Active
    }
}

impl AmbiguousQuery {
    fn completion(&self, b_settings: BTreeMap<String, Instrument>) -> CfQuery {
        let mut cf = self.evidence.settings.clone();
        for (k, v) in &self.cf_settings {
            cf.insert(k.clone(), v.clone());
        }
        cf.extend(b_settings);
        CfQuery {
            evidence: self.evidence.clone(),
            cf_settings: cf,
            antecedent: self.antecedent.clone(),
            consequent: self.consequent.clone(),
        }
    }

    pub fn passive_completion(&self) -> CfQuery {
        let b = self
            .antecedent
            .keys()
            .filter_map(|n| self.evidence.settings.get(n).map(|i| (n.clone(), i.clone())))
            .collect();
        self.completion(b)
    }

    /// do(ρ_{b′}) at every antecedent node, with ρ_{b′} taken from the model's do-state table.
    pub fn do_completion(&self, q: &Qsm) -> Result<CfQuery, CfError> {
        let mut b = BTreeMap::new();
        for (node, outcome) in &self.antecedent {
            let state = q
                .do_states
                .get(node)
                .and_then(|t| t.get(outcome))
                .ok_or_else(|| CfError::NoDoStateDeclared {
                    node: node.clone(),
                    outcome: outcome.clone(),
                })?;
            let n = q.node(node)?;
            let mut instr = make_do_instrument(n, outcome.clone(), state).map_err(QsmError::from)?;
            instr.setting = format!("do({outcome})");
            b.insert(node.clone(), instr);
        }
        Ok(self.completion(b))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityDecision {
    pub kind: CfKind,
    /// λ-assignments with posterior > eps_prob where the passive antecedent is impossible.
    pub blocking: Vec<String>,
}

/// Passive reading unless its antecedent is impossible for some
/// posterior-supported λ; then the do-interventional reading.
pub fn disambiguate_minimal(q: &Qsm, amb: &AmbiguousQuery, tol: &Tolerance) -> Result<(CfQuery, MinimalityDecision), CfError> {
    let passive = amb.passive_completion();
    passive.validate(q)?;
    let procs = conditional_processes(q)?;
    let posterior = abduct_with(q, &procs, &amb.evidence, tol)?;
    let mut blocking = Vec::new();
    for ((_, _, sigma), entry) in procs.iter().zip(&posterior.entries) {
        if entry.posterior <= tol.eps_prob {
            continue;
        }
        let pb = evidence_probability(sigma, &passive.cf_settings, &passive.antecedent)?;
        if pb <= tol.eps_prob {
            blocking.push(entry.lambda.clone());
        }
    }
    if blocking.is_empty() {
        return Ok((
            passive,
            MinimalityDecision {
                kind: CfKind::Passive,
                blocking,
            },
        ));
    }
    let fallback = amb.do_completion(q)?;
    Ok((
        fallback,
        MinimalityDecision {
            kind: CfKind::DoInterventional,
            blocking,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct BellReport {
    pub passive_q1: CfValue,
    pub passive_q2: CfValue,
    pub do_q1: CfValue,
    pub do_q2: CfValue,
    pub edges: Vec<(String, String)>,
    pub a_causes_b: bool,
}

impl BellReport {
    pub fn render(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        format!(
            "passive Q1 P(b'=1 | a'=1): {}\npassive Q2 P(b'=1 | a'=0): {}\ndo Q1 P(b'=1 | do(a'=1)): {}\ndo Q2 P(b'=1 | do(a'=0)): {}\nedges: {}\nA->B edge: {}\n",
            self.passive_q1,
            self.passive_q2,
            self.do_q1,
            self.do_q2,
            edges.join(" "),
            if self.a_causes_b { "yes" } else { "no" }
        )
    }
}

fn setting<'a>(q: &'a Qsm, node: &str, name: &str) -> Result<&'a Instrument, CfError> {
    q.instrument(node, name)
        .map_err(|_| CfError::ModelMismatch(format!("expected instrument `{name}` at node `{node}`")))
}

/// Evidence a = b = 0; Q1 asks for b′ = 1 had a′ been 1, Q2 for b′ = 1 had a′ been 0,
/// each read passively and do-interventionally.
pub fn bell_demo(q: &Qsm, tol: &Tolerance) -> Result<BellReport, CfError> {
    for n in ["A", "B", "C"] {
        q.node(n).map_err(|_| CfError::ModelMismatch(format!("missing node `{n}`")))?;
    }
    let mut settings = BTreeMap::new();
    settings.insert("A".to_string(), setting(q, "A", "z")?.clone());
    settings.insert("B".to_string(), setting(q, "B", "z")?.clone());
    settings.insert("C".to_string(), setting(q, "C", "prep")?.clone());
    if settings.len() != q.endogenous.len() {
        return Err(CfError::ModelMismatch("expected exactly the nodes A, B, C".into()));
    }
    let evidence = Evidence {
        settings,
        outcomes: [("A", "0"), ("B", "0")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
    };
    let amb = |a_prime: &str| AmbiguousQuery {
        evidence: evidence.clone(),
        cf_settings: BTreeMap::new(),
        antecedent: [("A".to_string(), a_prime.to_string())].into_iter().collect(),
        consequent: [("B".to_string(), "1".to_string())].into_iter().collect(),
    };
    let run = |query: &CfQuery| evaluate(q, query, tol).map(|r| r.value);
    let (q1, q2) = (amb("1"), amb("0"));
    Ok(BellReport {
        passive_q1: run(&q1.passive_completion())?,
        passive_q2: run(&q2.passive_completion())?,
        do_q1: run(&q1.do_completion(q)?)?,
        do_q2: run(&q2.do_completion(q)?)?,
        edges: q.dag.edges.iter().cloned().collect(),
        a_causes_b: q.dag.has_edge("A", "B"),
    })
}
