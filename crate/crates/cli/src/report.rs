//! Report types and the two output formats.
//!
//! The machine format is pretty-printed JSON whose top-level
//! `schema_version` is `MAJOR.MINOR`; readers accept any minor revision of
//! the major version they know.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use lipgeom::coarse::{BiLipschitzReport, QIReport};
use lipgeom::construct::ConstructionReport;
use lipgeom::{Certificate, Element, MetricMeta, RootChain};

use crate::config::{ExperimentConfig, TaskSpec};
use crate::error::CliError;

pub const SCHEMA_MAJOR: u64 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Constructed,
    Refuted,
    Inconclusive,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    /// Crate name to version.
    pub versions: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub group: String,
    /// Absent when the metric could not be built.
    pub metric: Option<MetricMeta>,
    pub tasks: Vec<TaskReport>,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    /// Position in the config's task list.
    pub index: usize,
    pub task: TaskSpec,
    pub status: Status,
    pub result: TaskResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskResult {
    Certificate {
        certificate: Certificate,
        /// Whether the witness (if any) re-evaluated to its recorded trace.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        witness_replayed: Option<bool>,
    },
    Construction {
        report: ConstructionReport,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nodes: Option<Vec<(Element, f64)>>,
    },
    Oneparam(OneParamResult),
    Compare(CompareResult),
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneParamResult {
    pub chain: RootChain,
    pub max_contraction_ratio: f64,
    /// Depth the chain would need for `eval_tol`.
    pub needed_depth: usize,
    pub eval_tol: f64,
    /// `2^{k - depth}·ε`, the tail bound at the built depth.
    pub truncation_bound: f64,
    pub evaluations: Vec<Evaluation>,
    /// `(α, d(h^α, 1), bound)` for every grid point over its bound.
    pub digit_bound_violations: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub alpha: f64,
    pub element: Element,
    pub distance: f64,
    /// `d(h^α, exp(αA))` when the base came from a tangent `A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    pub other: String,
    pub quasi_isometry: QIReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bilipschitz: Option<BiLipschitzReport>,
    pub notes: Vec<String>,
}

impl Report {
    /// 0 when every task holds or was constructed, 1 when any is refuted,
    /// otherwise 2.
    pub fn exit_code(&self) -> i32 {
        let worst = self.tasks.iter().map(|t| t.status);
        let mut code = 0;
        for s in worst {
            match s {
                Status::Refuted => return 1,
                Status::Inconclusive | Status::Error => code = 2,
                Status::Holds | Status::Constructed => {}
            }
        }
        code
    }

    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_machine(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Report(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| CliError::Report("missing schema_version".into()))?;
        let major = found.split('.').next().and_then(|m| m.parse::<u64>().ok());
        if major != Some(SCHEMA_MAJOR) {
            return Err(CliError::SchemaVersion {
                found: found.to_string(),
                supported: SCHEMA_MAJOR,
            });
        }
        // parse from the text rather than the Value so floats keep every bit
        serde_json::from_str(text).map_err(|e| CliError::Report(e.to_string()))
    }

    /// The same report with the wall clock zeroed, for reproducibility checks.
    pub fn without_wall_clock(&self) -> Self {
        Self {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "group  {}", self.group);
        if let Some(m) = &self.metric {
            let _ = writeln!(out, "metric {} ({:?}, {:?})", m.label, m.provenance, m.exactness);
        }
        let _ = writeln!(out, "seed {}  budget {}", self.config.seed, self.config.budget);
        if self.tasks.is_empty() {
            let _ = writeln!(out, "no tasks");
        }
        for t in &self.tasks {
            let _ = writeln!(out);
            let _ = writeln!(out, "[{}] {}: {:?}", t.index, t.task.kind(), t.status);
            text_result(&mut out, &t.result);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "wall clock {} ms", self.wall_clock_ms);
        out
    }
}

fn text_certificate(out: &mut String, c: &Certificate) {
    let _ = writeln!(out, "  condition {:?}  verdict {:?}", c.condition, c.verdict);
    let k = &c.constants;
    let _ = writeln!(
        out,
        "  radius {}  K {}  samples {}",
        opt(k.u_radius.or(k.epsilon)),
        opt(k.k),
        c.samples_checked
    );
    for (name, v) in &c.observed {
        let _ = writeln!(out, "  {name} = {v}");
    }
    if !c.table.is_empty() {
        let _ = writeln!(out, "  {:>14}  {:>14}", "target", "value");
        for row in &c.table {
            let _ = writeln!(out, "  {:>14.6e}  {:>14}", row.target, opt(row.value));
        }
    }
    if let Some(w) = &c.witness {
        let _ = writeln!(out, "  witness {}", w.element);
        if let Some(p) = &w.partner {
            let _ = writeln!(out, "  partner {p}");
        }
        let _ = writeln!(out, "  violated: {}", w.violated);
        let _ = writeln!(out, "  {:>10}  {:>22}", "exponent", "distance");
        for (e, d) in &w.power_trace {
            let _ = writeln!(out, "  {e:>10}  {d:>22.15e}");
        }
    }
    for n in &c.notes {
        let _ = writeln!(out, "  note: {n}");
    }
}

fn text_result(out: &mut String, r: &TaskResult) {
    match r {
        TaskResult::Certificate {
            certificate,
            witness_replayed,
        } => {
            text_certificate(out, certificate);
            if let Some(ok) = witness_replayed {
                let _ = writeln!(out, "  witness replay: {}", if *ok { "ok" } else { "MISMATCH" });
            }
        }
        TaskResult::Construction { report, nodes } => {
            let _ = writeln!(
                out,
                "  law {:?}  nodes {}  exact {}",
                report.law, report.nodes, report.exact
            );
            if let Some(s) = report.sandwich_holds {
                let _ = writeln!(out, "  sandwich holds: {s}  min d/δ {}", opt(report.min_ratio));
            }
            if report.c.is_some() || report.big_c.is_some() {
                let _ = writeln!(
                    out,
                    "  c {}  C {}  C/c {}",
                    opt(report.c),
                    opt(report.big_c),
                    opt(report.ratio)
                );
            }
            if let Some(nodes) = nodes {
                for (g, d) in nodes {
                    let _ = writeln!(out, "  {g}  {d}");
                }
            }
        }
        TaskResult::Oneparam(o) => {
            let _ = writeln!(
                out,
                "  k {}  depth {}  epsilon {}  max contraction {:.6}",
                o.chain.k, o.chain.depth, o.chain.epsilon, o.max_contraction_ratio
            );
            let _ = writeln!(
                out,
                "  truncation bound {:.3e}  depth needed for {:.1e}: {}",
                o.truncation_bound, o.eval_tol, o.needed_depth
            );
            let _ = writeln!(out, "  {:>10}  {:>14}  {:>14}", "alpha", "d(h^a,1)", "ref error");
            for e in &o.evaluations {
                let r = e.reference_error.map_or("-".to_string(), |x| format!("{x:.3e}"));
                let _ = writeln!(out, "  {:>10.6}  {:>14.6e}  {:>14}", e.alpha, e.distance, r);
            }
            let _ = writeln!(out, "  digit bound violations: {}", o.digit_bound_violations.len());
        }
        TaskResult::Compare(c) => {
            let q = &c.quasi_isometry;
            let _ = writeln!(out, "  against {}", c.other);
            let _ = writeln!(out, "  K {}  C {}  refuted {}", q.k, q.c, q.refuted);
            let _ = writeln!(out, "  {:>14}  {:>14}", "scale", "ratio");
            for (s, r) in &q.scale_ratios {
                let _ = writeln!(out, "  {s:>14.6e}  {r:>14.6}");
            }
            if let Some(b) = &c.bilipschitz {
                let _ = writeln!(
                    out,
                    "  bi-Lipschitz L {}  (forward {}, backward {})  empirical {}",
                    b.l, b.l_forward, b.l_backward, b.empirical_ratio
                );
            }
            for n in q.notes.iter().chain(&c.notes) {
                let _ = writeln!(out, "  note: {n}");
            }
        }
        TaskResult::Error { message } => {
            let _ = writeln!(out, "  error: {message}");
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| x.to_string())
}
