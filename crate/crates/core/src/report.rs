//! Query and validation reports: a JSON form with a schema version, and a
//! plain-text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::counterfactual::{format_prob, round_prob, CfReport, CfValue, MinimalityDecision};
use crate::qsm::QsmReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub lambda: String,
    pub prior: f64,
    pub likelihood: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub lambda: String,
    pub posterior: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub value: CfValue,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// |Σ_λ P(λ|a) − 1|.
    pub posterior_normalization: f64,
    /// ‖W†W − I‖ on random probes.
    pub isometry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: String,
    /// "passive", "active" or "do-interventional".
    pub kind: String,
    /// For ambiguous queries: the reading chosen by minimality and the λ that blocked the passive one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimality: Option<MinimalityRow>,
    pub evidence_probability: f64,
    pub posterior: Vec<PosteriorRow>,
    pub terms: Vec<TermRow>,
    pub value: CfValue,
    pub triggers: Vec<String>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityRow {
    pub reading: String,
    pub blocking: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatchReport {
    pub schema_version: u32,
    pub model: String,
    pub queries: Vec<QueryReport>,
}

fn r(x: f64) -> f64 {
    round_prob(x)
}

/// Three significant digits, for residuals.
pub fn sig3(x: f64) -> f64 {
    format!("{x:.2e}").parse().unwrap_or(x)
}

impl QueryReport {
    pub fn new(query: impl Into<String>, cf: &CfReport, minimality: Option<&MinimalityDecision>, isometry: f64) -> Self {
        let total: f64 = cf.posterior.entries.iter().map(|e| e.posterior).sum();
        QueryReport {
            query: query.into(),
            kind: cf.kind.as_str().to_string(),
            minimality: minimality.map(|m| MinimalityRow {
                reading: m.kind.as_str().to_string(),
                blocking: m.blocking.clone(),
            }),
            evidence_probability: r(cf.posterior.evidence_probability),
            posterior: cf
                .posterior
                .entries
                .iter()
                .map(|e| PosteriorRow {
                    lambda: e.lambda.clone(),
                    prior: r(e.prior),
                    likelihood: r(e.likelihood),
                    posterior: r(e.posterior),
                })
                .collect(),
            terms: cf
                .terms
                .iter()
                .map(|t| TermRow {
                    lambda: t.lambda.clone(),
                    posterior: r(t.posterior),
                    numerator: r(t.numerator),
                    denominator: r(t.denominator),
                    value: t.value,
                    skipped: t.skipped,
                })
                .collect(),
            value: cf.value,
            triggers: cf.triggers.clone(),
            residuals: Residuals {
                posterior_normalization: sig3((total - 1.0).abs()),
                isometry: sig3(isometry),
            },
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "query: {}", self.query);
        let _ = writeln!(s, "kind: {}", self.kind);
        if let Some(m) = &self.minimality {
            if m.blocking.is_empty() {
                let _ = writeln!(s, "minimality: {} reading", m.reading);
            } else {
                let _ = writeln!(s, "minimality: {} reading (passive antecedent impossible at {})", m.reading, m.blocking.join("; "));
            }
        }
        let _ = writeln!(s, "evidence probability: {}", format_prob(self.evidence_probability));
        s.push_str("posterior:\n");
        for p in &self.posterior {
            let _ = writeln!(
                s,
                "  {}  prior {}  likelihood {}  posterior {}",
                p.lambda,
                format_prob(p.prior),
                format_prob(p.likelihood),
                format_prob(p.posterior)
            );
        }
        s.push_str("terms:\n");
        for t in &self.terms {
            let _ = write!(
                s,
                "  {}  numerator {}  denominator {}  value {}",
                t.lambda,
                format_prob(t.numerator),
                format_prob(t.denominator),
                t.value
            );
            s.push_str(if t.skipped { "  (skipped)\n" } else { "\n" });
        }
        let _ = writeln!(s, "result: {}", self.value);
        if !self.triggers.is_empty() {
            let _ = writeln!(s, "counterpossible at: {}", self.triggers.join("; "));
        }
        s
    }
}

impl QueryBatchReport {
    pub fn render(&self) -> String {
        let mut s = format!("model: {}\n", self.model);
        for q in &self.queries {
            s.push('\n');
            s.push_str(&q.render());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub from: String,
    pub to: String,
    pub kind: String,
    pub residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentRow {
    pub node: String,
    pub setting: String,
    pub trace_residual: f64,
    pub min_eigenvalue: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub model: String,
    pub isometry_residual: f64,
    pub isometry_ok: bool,
    pub no_influence: Vec<InfluenceRow>,
    pub instruments: Vec<InstrumentRow>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn from_qsm(model: impl Into<String>, rep: &QsmReport) -> Self {
        ValidationReport {
            schema_version: SCHEMA_VERSION,
            model: model.into(),
            isometry_residual: sig3(rep.isometry.residual()),
            isometry_ok: rep.isometry_ok,
            no_influence: rep
                .no_influence
                .iter()
                .map(|c| InfluenceRow {
                    from: c.from.clone(),
                    to: c.to.clone(),
                    kind: c.kind.to_string(),
                    residual: sig3(c.residual),
                    holds: c.holds,
                })
                .collect(),
            instruments: rep
                .instruments
                .iter()
                .map(|i| InstrumentRow {
                    node: i.node.clone(),
                    setting: i.setting.clone(),
                    trace_residual: sig3(i.trace_residual),
                    min_eigenvalue: sig3(i.elements.iter().map(|e| e.min_eigenvalue).fold(f64::INFINITY, f64::min)),
                    valid: i.valid,
                })
                .collect(),
            valid: rep.valid,
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("model: {}\n", self.model);
        let _ = writeln!(
            s,
            "isometry residual: {:.3e} ({})",
            self.isometry_residual,
            if self.isometry_ok { "ok" } else { "FAIL" }
        );
        let bad: Vec<&InfluenceRow> = self.no_influence.iter().filter(|c| !c.holds).collect();
        let _ = writeln!(s, "no-influence checks: {} of {} hold", self.no_influence.len() - bad.len(), self.no_influence.len());
        for c in bad {
            let _ = writeln!(s, "  violated: {} -> {} ({}, residual {:.3e})", c.from, c.to, c.kind, c.residual);
        }
        for i in &self.instruments {
            let _ = writeln!(
                s,
                "instrument {} \"{}\": trace residual {:.3e}, min eigenvalue {:.3e} ({})",
                i.node,
                i.setting,
                i.trace_residual,
                i.min_eigenvalue,
                if i.valid { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(s, "valid: {}", if self.valid { "yes" } else { "no" });
        s
    }
}
