//! Plain-text rendering of test results and refinement sessions.

use std::fmt::Write;

use crate::refine::{RefinementSession, SessionStatus};
use crate::stats::{Method, TestResult};

const HEADER: [&str; 5] = ["Hypothesis", "Method", "Statistic", "p-value", "Decision"];

fn method_label(m: Method) -> &'static str {
    match m {
        Method::DistanceCovariance => "dcov",
        Method::KernelConditional => "kci",
    }
}

fn row(index: usize, r: &TestResult) -> [String; 5] {
    [
        format!("H{} {}", index + 1, r.claim),
        method_label(r.outcome.method).to_string(),
        format!("{:.6}", r.outcome.statistic),
        format!("{:.6e}", r.outcome.p_value),
        r.outcome.decision.label().to_string(),
    ]
}

/// Fixed-width table, one row per result; header only when empty.
pub fn render_table(results: &[TestResult]) -> String {
    let rows: Vec<[String; 5]> = results.iter().enumerate().map(|(i, r)| row(i, r)).collect();
    let mut widths = HEADER.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&HEADER);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for r in &rows {
        line(&r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

fn status_label(s: SessionStatus) -> &'static str {
    match s {
        SessionStatus::Pending => "pending",
        SessionStatus::Consistent => "consistent",
        SessionStatus::Exhausted => "exhausted",
        SessionStatus::Aborted => "aborted",
    }
}

/// Step-by-step narrative: tested hypotheses, the failure examined, the edit applied.
pub fn render_session(session: &RefinementSession) -> String {
    let mut out = String::new();
    for (k, step) in session.steps.iter().enumerate() {
        let _ = writeln!(
            out,
            "Step {} (dag {}): {} passed, {} failed",
            k + 1,
            &step.dag_fingerprint[..12.min(step.dag_fingerprint.len())],
            step.summary.passed,
            step.summary.failed
        );
        out.push_str(&render_table(&step.results));
        if let Some(d) = &step.diagnosis {
            let _ = writeln!(out, "Failed: {}", d.failed_claim);
            if let Some(a) = &d.auxiliary {
                let _ = writeln!(
                    out,
                    "  unconditional {} _||_ {}: statistic {:.6}, p-value {:.6e}, {}",
                    a.claim.x,
                    a.claim.y,
                    a.outcome.statistic,
                    a.outcome.p_value,
                    a.outcome.decision.label()
                );
            }
            for (i, c) in d.candidates.iter().enumerate() {
                let _ = writeln!(out, "  [{i}] {} ({})", c.edit, c.mechanism.label());
                for f in &c.followup_results {
                    let _ = writeln!(
                        out,
                        "      follow-up {}: p-value {:.6e}, {}",
                        f.claim,
                        f.outcome.p_value,
                        f.outcome.decision.label()
                    );
                }
            }
        }
        match &step.applied {
            Some(a) => {
                let who = match a.decider {
                    crate::refine::DeciderKind::Auto => "automatic",
                    crate::refine::DeciderKind::Human => "human",
                };
                let _ = writeln!(out, "Applied: {} ({}, {})", a.edit, a.mechanism.label(), who);
            }
            None if step.diagnosis.is_some() => out.push_str("Applied: none\n"),
            None => {}
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Status: {}", status_label(session.status));
    if !session.undetermined_edges.is_empty() {
        let edges: Vec<String> = session
            .undetermined_edges
            .iter()
            .map(|e| format!("{} -> {}", e.from, e.to))
            .collect();
        let _ = writeln!(out, "Orientation not determined: {}", edges.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_dag, DagEdit};
    use crate::implications::IndependenceClaim;
    use crate::refine::{AppliedEdit, DeciderKind, Mechanism, RefineOptions, SessionStep};
    use crate::stats::{Decision, Summary, TestConfig, TestOutcome};

    fn result(claim: &str, p: f64) -> TestResult {
        TestResult {
            claim: claim.parse().unwrap(),
            outcome: TestOutcome {
                method: Method::KernelConditional,
                statistic: 1.5,
                p_value: p,
                alpha: 0.05,
                decision: Decision::from_p(p, 0.05),
                seed: 0,
                permutations: 0,
                degenerate: false,
            },
        }
    }

    #[test]
    fn empty_is_header_only() {
        let t = render_table(&[]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.starts_with("Hypothesis"));
    }

    #[test]
    fn four_rows_fail_to_reject() {
        let rs: Vec<TestResult> = [
            "Age _||_ MergeConflicts | CI, CommitFrequency",
            "BugReport _||_ MergeConflicts | CI, CommitFrequency",
            "Communication _||_ MergeConflicts | CI, CommitFrequency",
            "MergeConflicts _||_ TestsVolume | CI, CommitFrequency",
        ]
        .iter()
        .map(|c| result(c, 0.4))
        .collect();
        let t = render_table(&rs);
        assert_eq!(t.lines().count(), 6);
        assert_eq!(t.matches("fail to reject").count(), 4);
    }

    #[test]
    fn session_names_edge() {
        let dag = parse_dag("A -> B\nC -> B").unwrap();
        let failed: IndependenceClaim = "A _||_ C".parse().unwrap();
        let edit = DagEdit::add("A", "C");
        let session = RefinementSession {
            initial_dag: dag.clone(),
            config: TestConfig::default(),
            options: RefineOptions::default(),
            steps: vec![SessionStep {
                dag_fingerprint: dag.fingerprint(),
                summary: Summary { passed: 0, failed: 1, degenerate: 0 },
                results: vec![result(&failed.to_string(), 0.001)],
                diagnosis: None,
                applied: Some(AppliedEdit {
                    edit,
                    mechanism: Mechanism::AddDirectEdge,
                    candidate: 0,
                    decider: DeciderKind::Auto,
                }),
            }],
            status: SessionStatus::Consistent,
            final_dag: dag,
            undetermined_edges: Vec::new(),
        };
        let text = render_session(&session);
        assert!(text.contains("Applied: add A -> C"));
        assert_eq!(text, render_session(&session));
    }
}
