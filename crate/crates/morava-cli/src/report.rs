//! Report rendering and output routing: every command produces either a
//! text report or a `{"config": ..., "results": ...}` JSON document,
//! written to an explicit path, to the directory named by the output
//! environment variable, or to standard output.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use morava::checks::{CheckReport, CheckStatus};
use serde_json::{json, Value};

use crate::config::{OutputFormat, RunConfig, OUT_DIR_VAR};

/// Wrap results with the run configuration, the stable JSON envelope.
pub fn envelope(config_json: Value, results: Value) -> Value {
    json!({
        "config": config_json,
        "results": results,
    })
}

/// Where a report ends up: an explicit path wins, then the environment
/// variable's directory with a default file name, then standard output.
pub fn resolve_out(
    explicit: Option<&PathBuf>,
    stem: &str,
    format: OutputFormat,
) -> Option<PathBuf> {
    if let Some(path) = explicit {
        return Some(path.clone());
    }
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if !dir.is_empty() => {
            let name = format!("{}.{}", stem, format.extension());
            Some(PathBuf::from(dir).join(name))
        }
        _ => None,
    }
}

/// Write the rendered report. When it goes to a file, return a note
/// saying where; stdout delivery speaks for itself.
pub fn deliver(config: &RunConfig, stem: &str, rendered: &str) -> Result<Option<String>, String> {
    match resolve_out(config.out.as_ref(), stem, config.format) {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .map_err(|e| format!("cannot create {}: {}", parent.display(), e))?;
                }
            }
            fs::write(&path, rendered.as_bytes())
                .map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
            Ok(Some(format!("report written to {}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .and_then(|_| {
                    if rendered.ends_with('\n') {
                        Ok(())
                    } else {
                        stdout.write_all(b"\n")
                    }
                })
                .map_err(|e| format!("cannot write to standard output: {}", e))?;
            Ok(None)
        }
    }
}

/// One verification row: case id, family tag, cell, status, first
/// violating coefficient if any, and wall time.
pub fn verify_row(report: &CheckReport) -> Value {
    let family = report.id.split('@').next().unwrap_or("").to_string();
    let mut row = json!({
        "id": report.id,
        "tag": family,
        "p": report.p,
        "h": report.h,
        "status": report.status.as_str(),
        "millis": report.millis as u64,
    });
    let obj = row.as_object_mut().expect("row object");
    match report.status {
        CheckStatus::Failed => {
            obj.insert(
                "first_violation".to_string(),
                json!(report.detail.clone().unwrap_or_default()),
            );
        }
        CheckStatus::Skipped => {
            obj.insert("reason".to_string(), json!(report.detail.clone().unwrap_or_default()));
        }
        CheckStatus::Passed => {}
    }
    if !report.notes.is_empty() {
        obj.insert("notes".to_string(), json!(report.notes));
    }
    row
}

pub fn verify_text(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    let mut passed = 0usize;
    let mut failed = 0usize;
    let mut skipped = 0usize;
    for r in reports {
        let status = match r.status {
            CheckStatus::Passed => {
                passed += 1;
                "pass"
            }
            CheckStatus::Failed => {
                failed += 1;
                "FAIL"
            }
            CheckStatus::Skipped => {
                skipped += 1;
                "skip"
            }
        };
        out.push_str(&format!("[{}] {} — {} ({} ms)\n", status, r.id, r.title, r.millis));
        if let Some(detail) = &r.detail {
            match r.status {
                CheckStatus::Failed => out.push_str(&format!("       first violation: {}\n", detail)),
                CheckStatus::Skipped => out.push_str(&format!("       reason: {}\n", detail)),
                CheckStatus::Passed => {}
            }
        }
        for note in &r.notes {
            out.push_str(&format!("       {}\n", note));
        }
    }
    out.push_str(&format!(
        "{} passed, {} failed, {} skipped ({} total)\n",
        passed,
        failed,
        skipped,
        reports.len()
    ));
    out
}

/// Pretty-print the JSON envelope.
pub fn render_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON rendering") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(status: CheckStatus, detail: Option<&str>) -> CheckReport {
        CheckReport {
            id: "law-form@p3h3".to_string(),
            title: "sample".to_string(),
            p: 3,
            h: 3,
            status,
            detail: detail.map(|s| s.to_string()),
            notes: vec![],
            millis: 5,
        }
    }

    #[test]
    fn failed_rows_carry_the_witness() {
        let row = verify_row(&sample(CheckStatus::Failed, Some("x^3 y^6 differs")));
        assert_eq!(row["status"], "fail");
        assert_eq!(row["first_violation"], "x^3 y^6 differs");
        assert_eq!(row["tag"], "law-form");
    }

    #[test]
    fn text_report_counts_outcomes() {
        let text = verify_text(&[
            sample(CheckStatus::Passed, None),
            sample(CheckStatus::Skipped, Some("out of hypothesis")),
        ]);
        assert!(text.contains("1 passed, 0 failed, 1 skipped (2 total)"));
        assert!(text.contains("reason: out of hypothesis"));
    }
}
