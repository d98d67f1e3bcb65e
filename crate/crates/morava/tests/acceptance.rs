//! Acceptance gate: every shipped closed form and both engines are
//! cross-checked, one criterion per test, one printed pass/fail line
//! per criterion (visible with `--nocapture`, and on any failure).
//!
//! Cells whose estimated cost exceeds the default budget run as
//! `#[ignore]`d twins; enable them with `cargo test -- --ignored`.

use std::sync::OnceLock;

use morava::checks::{run_case, CaseKey, CheckEnv, CheckReport, CheckStatus};

const SEED: u64 = 0xACCE9;

fn env() -> &'static CheckEnv {
    static ENV: OnceLock<CheckEnv> = OnceLock::new();
    ENV.get_or_init(|| CheckEnv::new(SEED, false))
}

fn heavy_env() -> &'static CheckEnv {
    static ENV: OnceLock<CheckEnv> = OnceLock::new();
    ENV.get_or_init(|| CheckEnv::new(SEED, true))
}

fn run(family: &str, p: u64, h: u32, env: &CheckEnv) -> CheckReport {
    run_case(&CaseKey::new(family, p, h), env)
}

/// Print the criterion line and panic on the first non-passing cell.
/// `budget_ms`, when given, bounds the wall time of every cell.
fn require(criterion: u32, what: &str, reports: &[CheckReport], budget_ms: Option<u128>) {
    let times: Vec<String> = reports.iter().map(|r| format!("{} ms", r.millis)).collect();
    let cells: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
    for r in reports {
        if r.status != CheckStatus::Passed {
            println!(
                "[FAIL] criterion {}: {} — {} {}: {}",
                criterion,
                what,
                r.id,
                r.status.as_str(),
                r.detail.clone().unwrap_or_default()
            );
            panic!(
                "criterion {} failed at {}: {}",
                criterion,
                r.id,
                r.detail.clone().unwrap_or_default()
            );
        }
        if let Some(b) = budget_ms {
            if r.millis >= b {
                println!(
                    "[FAIL] criterion {}: {} — {} exceeded the {} ms budget ({} ms)",
                    criterion, what, r.id, b, r.millis
                );
                panic!("criterion {}: {} took {} ms (budget {} ms)", criterion, r.id, r.millis, b);
            }
        }
    }
    println!(
        "[PASS] criterion {}: {} [{}; {}]",
        criterion,
        what,
        cells.join(", "),
        times.join(", ")
    );
}

#[test]
fn criterion_01_log_inverse_closed_form() {
    let reports = [
        run("exp-form", 3, 3, env()),
        run("exp-form", 5, 3, env()),
        run("exp-form", 3, 4, env()),
    ];
    require(
        1,
        "the inverted logarithm matches the closed-form coefficients in every degree",
        &reports,
        Some(10_000),
    );
}

#[test]
fn criterion_02_group_law_closed_form() {
    let reports = [run("law-form", 3, 3, env()), run("law-form", 3, 4, env())];
    assert!(reports[0].millis < 30_000, "the (3,3) cell must stay under 30 s");
    require(
        2,
        "the constructed group law equals its closed form (the largest cell is gated)",
        &reports,
        None,
    );
}

#[test]
#[ignore = "heavy cell"]
fn criterion_02_heavy_cell_p5h3() {
    let reports = [run("law-form", 5, 3, heavy_env())];
    require(2, "the constructed group law equals its closed form (gated cell)", &reports, None);
}

#[test]
fn criterion_03_group_law_axioms() {
    let reports = [run("law-axioms", 3, 3, env())];
    require(
        3,
        "unit, commutativity, and associativity hold on the examined truncations",
        &reports,
        Some(60_000),
    );
}

#[test]
fn criterion_04_integrality() {
    let reports = [
        run("law-integrality", 3, 3, env()),
        run("law-integrality", 3, 4, env()),
    ];
    require(
        4,
        "every group-law and closed-form coefficient is p-integral",
        &reports,
        None,
    );
}

#[test]
fn criterion_05_parameter_transport() {
    let reports = [
        run("param-transport", 3, 3, env()),
        run("param-transport", 3, 4, env()),
    ];
    assert!(reports[0].millis < 120_000, "the (3,3) cell must stay under 2 min");
    require(
        5,
        "the solved substitution on u equals u*t_0^(p^(h-1)-1)",
        &reports,
        None,
    );
}

#[test]
fn criterion_06_engines_agree() {
    let reports = [run("engines-agree", 3, 3, env())];
    require(
        6,
        "the equation solver and the recursion unfolding agree to every scheduled accuracy (larger cells are gated)",
        &reports,
        None,
    );
}

#[test]
#[ignore = "heavy cell"]
fn criterion_06_heavy_cell_p3h4() {
    let reports = [run("engines-agree", 3, 4, heavy_env())];
    require(6, "the two engines agree to every scheduled accuracy (gated cell)", &reports, None);
}

#[test]
#[ignore = "heavy cell"]
fn criterion_06_heavy_cell_p5h3() {
    let reports = [run("engines-agree", 5, 3, heavy_env())];
    require(6, "the two engines agree to every scheduled accuracy (gated cell)", &reports, None);
}

#[test]
fn criterion_07_height3_t0_forms() {
    let identity = [
        run("t0-height3-identity", 3, 3, env()),
        run("t0-height3-identity", 5, 3, env()),
        run("t0-height3-identity", 7, 3, env()),
    ];
    for r in &identity {
        assert!(r.millis < 10_000, "{} must stay under 10 s", r.id);
    }
    let engines = [
        run("t0-height3-engines", 3, 3, env()),
        run("t0-height3-engines", 5, 3, env()),
    ];
    let mut all = identity.to_vec();
    all.extend(engines.to_vec());
    require(
        7,
        "the flat and nested height-3 forms of t_0 agree and match both engines",
        &all,
        None,
    );
}

#[test]
fn criterion_08_residual_and_its_negative_control() {
    let reports = [run("residual-check", 3, 3, env())];
    require(
        8,
        "the residual is clean on solved data and flags a corrupted coefficient",
        &reports,
        None,
    );
}

#[test]
fn criterion_09_randomized_suites() {
    let reports = [
        run("prop-binomial-signs", 3, 3, env()),
        run("prop-frobenius-defect", 3, 3, env()),
        run("prop-sum-regroup", 3, 3, env()),
        run("prop-power-linearize", 3, 3, env()),
    ];
    for r in &reports {
        for note in &r.notes {
            println!("       {}: {}", r.id, note);
        }
    }
    require(
        9,
        "seeded randomized suites (binomial signs, carry reduction, regrouping, power linearization) pass",
        &reports,
        None,
    );
}

#[test]
fn criterion_10_top_stratum_order_report() {
    let reports = [run("order-probe", 3, 3, env())];
    for note in &reports[0].notes {
        println!("       {}", note);
    }
    require(
        10,
        "top-stratum accuracy observed and reported; proved floors hold",
        &reports,
        None,
    );
}
