//! End-to-end tests of the `morava` binary: exit codes, report shapes,
//! output routing, determinism, and the dump/reload round trip.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_morava"));
    // Keep ambient configuration out of the tests; the routing test sets
    // the variable explicitly.
    cmd.env_remove("MORAVA_OUT_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn usage_errors_exit_two() {
    let cases: &[&[&str]] = &[
        &["deformation", "--p", "4"],
        &["deformation", "--h", "2", "--closed-form"],
        &["action", "--g", "1; b", "--modulus", "a^3+2a+1"],
        &["action", "--g", "1; a"],
        &["verify", "--case", "no-such-family"],
        &["verify", "--p", "6"],
        &["action", "--g", "1; a", "--modulus", "a^2+1"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(code(&out), 2, "args {:?} gave {:?}", args, stderr(&out));
        assert!(
            stderr(&out).starts_with("error:"),
            "args {:?} stderr {:?}",
            args,
            stderr(&out)
        );
    }
}

#[test]
fn malformed_flags_exit_two() {
    // clap-level errors must also land on the usage exit code.
    let out = run(&["action", "--engine", "warp"]);
    assert_eq!(code(&out), 2);
    let out = run(&["verify", "--all", "--case", "exp-form"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_fast_case_passes_in_text_and_json() {
    let out = run(&["verify", "--case", "exp-form"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("[pass]").count(), 3, "{}", text);
    assert!(text.contains("3 passed, 0 failed, 0 skipped"), "{}", text);

    let out = run(&["verify", "--case", "exp-form", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert!(doc.get("config").is_some() && doc.get("results").is_some());
    let results = doc["results"].as_array().expect("results array");
    assert_eq!(results.len(), 3);
    for row in results {
        assert_eq!(row["status"], "pass", "{}", row);
        assert_eq!(row["tag"], "exp-form");
    }
}

#[test]
fn verify_pinned_out_of_hypothesis_skips_with_reason() {
    let out = run(&["verify", "--case", "exp-form", "--h", "2", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let results = doc["results"].as_array().expect("results array");
    // Pinning collapses (3,3) and (3,4) onto the same cell.
    assert_eq!(results.len(), 2);
    for row in results {
        assert_eq!(row["status"], "skip", "{}", row);
        assert!(
            row["reason"].as_str().unwrap_or("").contains("height"),
            "{}",
            row
        );
    }
}

#[test]
fn verify_heavy_cells_skip_without_the_switch() {
    let out = run(&["verify", "--case", "engines-agree", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let results = doc["results"].as_array().expect("results array");
    let mut skipped = Vec::new();
    for row in results {
        if row["status"] == "skip" {
            assert!(
                row["reason"].as_str().unwrap_or("").contains("heavy"),
                "{}",
                row
            );
            skipped.push(row["id"].as_str().unwrap_or("").to_string());
        }
    }
    skipped.sort();
    assert_eq!(skipped, ["engines-agree@p3h4", "engines-agree@p5h3"]);
}

#[test]
fn composition_probe_reports_without_asserting() {
    let out = run(&["verify", "--case", "composition-probe"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("[pass] composition-probe@p3h3"), "{}", text);
    assert!(text.contains("neither order is asserted"), "{}", text);
}

#[test]
fn deformation_closed_form_agrees() {
    let out = run(&["deformation", "--closed-form"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("agrees with the construction exactly"),
        "{}",
        stdout(&out)
    );

    let out = run(&["deformation", "--closed-form", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(doc["results"]["agrees_with_construction"], true);
}

#[test]
fn action_dump_round_trips_and_stays_clean() {
    let out = run(&["action", "--engine", "both", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let results = &doc["results"];
    assert_eq!(results["engine"], "both");
    assert_eq!(results["diff"].as_array().map(Vec::len), Some(0));
    assert_eq!(results["residual"]["clean"], true);

    // Reload the dumped coefficient series and verify the functional
    // equation again from scratch: the reloaded action must be exactly
    // as clean as the one that was dumped.
    use morava::fgl::{universal_f, DeformationParams};
    use morava::stabilizer::{residual_with, ActionData, GroupElement};
    let params = DeformationParams::new(3, 3).expect("params");
    let reloaded = ActionData::from_json(&results["action"]).expect("reload");
    let ctx = params.ring_ctx().expect("ctx");
    let g = GroupElement::symbolic(ctx);
    let f_fp = universal_f(&params)
        .expect("law")
        .f_mod_p()
        .expect("reduction");
    let residual = residual_with(&reloaded, &g, &f_fp, &params).expect("residual");
    assert!(residual.is_clean(), "{:?}", residual.violations);
}

#[test]
fn identity_element_acts_trivially() {
    let out = run(&["action", "--g", "identity", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let t = doc["results"]["action"]["t"].as_array().expect("t array");
    // t_0 = 1 and every higher coefficient vanishes.
    let t0 = t[0]["series"]["terms"].as_array().expect("terms");
    assert_eq!(t0.len(), 1);
    assert_eq!(t0[0]["coeff"], "1");
    assert!(t0[0]["monomial"].as_array().expect("monomial").is_empty());
    for tk in &t[1..] {
        assert!(
            tk["series"]["terms"].as_array().expect("terms").is_empty(),
            "{}",
            tk
        );
    }
}

#[test]
fn concrete_element_values_match_symbolic_specialization() {
    let out = run(&[
        "action",
        "--g",
        "1; a; a^2; 1+a",
        "--modulus",
        "a^3+2a+1",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let results = &doc["results"];
    assert_eq!(results["residual"]["clean"], true);
    let concrete = results["concrete"].as_array().expect("concrete rows");
    assert_eq!(concrete.len(), 4);
    // t_3 specializes to g_3 = 1 + a.
    assert_eq!(concrete[3]["value"], "(1 + a)");
    // In F_27 with a^3 = a + 2 the u-coefficient of t_1 is (a^2)^9 = 1 + 2a + a^2.
    let t1 = concrete[1]["value"].as_str().expect("t_1 rendered");
    assert!(t1.starts_with("a + (1 + 2*a + a^2)*u"), "{}", t1);
}

#[test]
fn action_is_deterministic() {
    let first = run(&["action", "--engine", "both", "--format", "json", "--seed", "7"]);
    let second = run(&["action", "--engine", "both", "--format", "json", "--seed", "7"]);
    assert_eq!(code(&first), 0);
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn verify_is_deterministic_up_to_timing() {
    let scrub = |out: &Output| -> Value {
        let mut doc: Value = serde_json::from_str(&stdout(out)).expect("valid json");
        for row in doc["results"].as_array_mut().expect("results") {
            row.as_object_mut().expect("row").remove("millis");
        }
        doc
    };
    let args = ["verify", "--case", "order-probe", "--format", "json", "--seed", "11"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(scrub(&first), scrub(&second));
}

#[test]
fn reports_route_to_files() {
    let dir = tempfile::tempdir().expect("tempdir");

    // Explicit --out wins.
    let explicit = dir.path().join("law.json");
    let out = run(&[
        "deformation",
        "--format",
        "json",
        "--out",
        explicit.to_str().expect("utf-8 path"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).is_empty(), "{}", stdout(&out));
    assert!(stderr(&out).contains("report written to"), "{}", stderr(&out));
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(&explicit).expect("file")).expect("json");
    assert!(doc.get("config").is_some() && doc.get("results").is_some());

    // Otherwise the environment variable supplies a directory and the
    // command picks the file name.
    let routed = bin()
        .env("MORAVA_OUT_DIR", dir.path())
        .args(["verify", "--case", "t0-height3-identity", "--p", "3"])
        .output()
        .expect("binary runs");
    assert_eq!(code(&routed), 0, "{}", stderr(&routed));
    let expected = dir.path().join("verify.txt");
    assert!(Path::new(&expected).is_file());
    let text = std::fs::read_to_string(&expected).expect("report");
    assert!(text.contains("1 passed, 0 failed, 0 skipped"), "{}", text);
}
