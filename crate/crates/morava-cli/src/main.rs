//! Command-line driver: construct truncated universal deformations,
//! run the action engines on group elements, and execute the
//! verification matrix.
//!
//! Exit codes are a stable contract: 0 when everything requested
//! passed, 1 when a verification case failed, 2 for configuration or
//! usage errors (including infeasible truncation orders and malformed
//! element specifications).

mod cases;
mod config;
mod ff;
mod gspec;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morava::checks::{CheckEnv, CheckStatus};
use morava::fgl::{f_closed_form, universal_f, FGLData};
use morava::scalars::Rat;
use morava::series::XYSeries;
use morava::stabilizer::{
    residual_with, solve_action_with, unfold_action, ActionData, GroupElement,
};

use crate::config::{OutputFormat, RunConfig};
use crate::gspec::GSpec;

const DEFAULT_SEED: u64 = 0xACCE9;

#[derive(Parser)]
#[command(
    name = "morava",
    version,
    about = "Exact constructions of truncated universal deformations and the induced action on their coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the deformation: logarithm, its inverse, the group
    /// law, and the multiplication-by-p series.
    Deformation {
        #[command(flatten)]
        common: Common,
        /// Also emit the closed form of the group law and whether it
        /// agrees with the construction (needs height above 2).
        #[arg(long)]
        closed_form: bool,
    },
    /// Compute the action coefficients for a group element.
    Action {
        #[command(flatten)]
        common: Common,
        /// Which engine to run.
        #[arg(long, value_enum, default_value_t = EngineArg::Unfold)]
        engine: EngineArg,
        /// Element: `symbolic`, `identity`, or `;`-separated
        /// coefficients as polynomials in the field generator `a`.
        #[arg(long, default_value = "symbolic")]
        g: String,
        /// Monic irreducible polynomial in `a` defining the extension
        /// field (required for concrete elements).
        #[arg(long)]
        modulus: Option<String>,
    },
    /// Run verification cases and report pass/fail/skip per case.
    Verify {
        /// Restrict to one case family (repeatable).
        #[arg(long = "case", conflicts_with = "all")]
        cases: Vec<String>,
        /// Run every case (the default when no --case is given).
        #[arg(long)]
        all: bool,
        /// Pin every selected family to this prime.
        #[arg(long)]
        p: Option<u64>,
        /// Pin every selected family to this height.
        #[arg(long)]
        h: Option<u32>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        /// Report destination (default: stdout, or the directory named
        /// by MORAVA_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the randomized suites.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Run cells whose estimated cost exceeds the default budget.
        #[arg(long)]
        allow_heavy: bool,
    },
}

#[derive(Args)]
struct Common {
    /// The prime.
    #[arg(long, default_value_t = 3)]
    p: u64,
    /// The height.
    #[arg(long, default_value_t = 3)]
    h: u32,
    /// Univariate truncation order override.
    #[arg(long)]
    x_order: Option<usize>,
    /// u-adic truncation order override.
    #[arg(long)]
    u_order: Option<u32>,
    /// Bivariate total-degree truncation override.
    #[arg(long)]
    xy_order: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Report destination (default: stdout, or the directory named by
    /// MORAVA_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized components.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Run configurations whose estimated cost exceeds the default
    /// budget.
    #[arg(long)]
    allow_heavy: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> OutputFormat {
        match f {
            FormatArg::Text => OutputFormat::Text,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Unfold,
    Solve,
    Both,
}

impl EngineArg {
    fn as_str(self) -> &'static str {
        match self {
            EngineArg::Unfold => "unfold",
            EngineArg::Solve => "solve",
            EngineArg::Both => "both",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Deformation { common, closed_form } => cmd_deformation(common, closed_form),
        Command::Action { common, engine, g, modulus } => {
            cmd_action(common, engine, g, modulus.as_deref())
        }
        Command::Verify { cases, all, p, h, format, out, seed, allow_heavy } => {
            cmd_verify(cases, all, p, h, format, out, seed, allow_heavy)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}

fn build_config(common: &Common) -> Result<RunConfig, String> {
    RunConfig::build(
        common.p,
        common.h,
        common.x_order,
        common.u_order,
        common.xy_order,
        common.format.into(),
        common.out.clone(),
        common.seed,
        common.allow_heavy,
    )
}

// ---------------------------------------------------------------------------
// deformation
// ---------------------------------------------------------------------------

fn cmd_deformation(common: Common, closed_form: bool) -> Result<ExitCode, String> {
    let cfg = build_config(&common)?;
    if closed_form && cfg.params.h <= 2 {
        return Err(format!(
            "the closed form of the group law covers heights above 2; height {} has none",
            cfg.params.h
        ));
    }
    config::check_deformation_feasible(&cfg.params, cfg.allow_heavy)?;

    let data = universal_f(&cfg.params).map_err(|e| e.to_string())?;
    let closed = if closed_form {
        Some(f_closed_form(&cfg.params).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let agreement = closed.as_ref().map(|c| first_xy_difference(&data.f, c));

    let stem = format!("deformation-p{}h{}", cfg.params.p, cfg.params.h);
    let rendered = match cfg.format {
        OutputFormat::Json => {
            let mut results = serde_json::json!({
                "log": data.log.to_json(),
                "exp": data.exp.to_json(),
                "f": data.f.to_json(),
                "p_series": data.p_series.to_json(),
            });
            if let Some(c) = &closed {
                let obj = results.as_object_mut().expect("results object");
                obj.insert("closed_form".to_string(), c.to_json());
                obj.insert(
                    "agrees_with_construction".to_string(),
                    serde_json::json!(agreement.as_ref().is_some_and(|a| a.is_none())),
                );
                if let Some(Some(w)) = &agreement {
                    obj.insert("first_difference".to_string(), serde_json::json!(w));
                }
            }
            report::render_json(&report::envelope(cfg.to_json("deformation"), results))
        }
        OutputFormat::Text => deformation_text(&cfg, &data, agreement.as_ref()),
    };
    if let Some(note) = report::deliver(&cfg, &stem, &rendered)? {
        eprintln!("{}", note);
    }
    if let Some(Some(w)) = agreement {
        eprintln!("closed form disagrees with the construction: {}", w);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn deformation_text(
    cfg: &RunConfig,
    data: &FGLData,
    agreement: Option<&Option<String>>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "deformation at p = {}, h = {} (x-order {}, bivariate order {}, u-order {})\n",
        cfg.params.p, cfg.params.h, cfg.params.x_order, cfg.params.xy_order, cfg.params.u_order
    ));
    let log_support: Vec<usize> = data.log.support().collect();
    out.push_str(&format!("logarithm support (x-degrees): {:?}\n", log_support));
    let exp_support: Vec<usize> = data.exp.support().collect();
    out.push_str(&format!("inverse support (x-degrees): {:?}\n", exp_support));
    out.push_str(&format!(
        "group law: {} nonzero bivariate coefficients through total degree {}\n",
        data.f.iter().count(),
        data.f.xy_order() - 1
    ));
    let p_support: Vec<usize> = data.p_series.support().collect();
    out.push_str(&format!(
        "multiplication-by-p series support (x-degrees): {:?}\n",
        p_support
    ));
    match agreement {
        None => {}
        Some(None) => out.push_str("closed form: agrees with the construction exactly\n"),
        Some(Some(w)) => out.push_str(&format!("closed form: DISAGREES at {}\n", w)),
    }
    out
}

/// First differing coefficient of two bivariate series over the
/// rationals, if any.
fn first_xy_difference(a: &XYSeries<Rat>, b: &XYSeries<Rat>) -> Option<String> {
    let mut keys: std::collections::BTreeSet<(usize, usize)> =
        a.iter().map(|(d, _)| d).collect();
    keys.extend(b.iter().map(|(d, _)| d));
    for (i, j) in keys {
        if a.coeff(i, j) != b.coeff(i, j) {
            return Some(format!("x^{} y^{}", i, j));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// action
// ---------------------------------------------------------------------------

fn cmd_action(
    common: Common,
    engine: EngineArg,
    g: String,
    modulus: Option<&str>,
) -> Result<ExitCode, String> {
    let cfg = build_config(&common)?;
    config::check_action_feasible(&cfg.params, cfg.allow_heavy)?;
    let spec = gspec::parse_gspec(&g, modulus, cfg.params.p, cfg.params.h)?;

    let ctx = cfg.params.ring_ctx().map_err(|e| e.to_string())?;
    // Engines always run on an exact element; concrete points only
    // change how the output is presented.
    let element = match &spec {
        GSpec::Identity => GroupElement::identity(ctx),
        _ => GroupElement::symbolic(ctx),
    };

    // One group law serves the engines and the residual check.
    let f_fp = universal_f(&cfg.params)
        .and_then(|d| d.f_mod_p().map_err(Into::into))
        .map_err(|e| e.to_string())?;

    let unfolded = match engine {
        EngineArg::Unfold | EngineArg::Both => {
            Some(unfold_action(&element, &cfg.params).map_err(|e| e.to_string())?)
        }
        EngineArg::Solve => None,
    };
    let solved = match engine {
        EngineArg::Solve | EngineArg::Both => {
            Some(solve_action_with(&element, &f_fp, &cfg.params).map_err(|e| e.to_string())?)
        }
        EngineArg::Unfold => None,
    };

    let primary: &ActionData = solved
        .as_ref()
        .map(|s| &s.action)
        .or(unfolded.as_ref())
        .expect("at least one engine ran");

    // Engine disagreement is a verification failure, not a dump.
    let diff = match (&unfolded, &solved) {
        (Some(u), Some(s)) => Some(action_diff(u, &s.action)),
        _ => None,
    };

    let residual =
        residual_with(primary, &element, &f_fp, &cfg.params).map_err(|e| e.to_string())?;

    let concrete = match &spec {
        GSpec::Concrete { field, coeffs } => {
            let values = gspec::evaluate_action(primary, field, coeffs);
            Some(
                values
                    .iter()
                    .zip(primary.accuracy.iter())
                    .enumerate()
                    .map(|(k, (v, acc))| {
                        let mut shown = v.clone();
                        shown.coeffs.truncate(*acc as usize);
                        (k, *acc, shown.render(field))
                    })
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };

    let stem = format!("action-p{}h{}", cfg.params.p, cfg.params.h);
    let rendered = match cfg.format {
        OutputFormat::Json => {
            let mut results = serde_json::json!({
                "element": spec.label(),
                "engine": engine.as_str(),
                "accuracy": primary.accuracy,
                "action": primary.to_json(),
                "residual": {
                    "clean": residual.is_clean(),
                    "tracked": residual.tracked,
                    "violations": residual.violations.iter().map(|v| serde_json::json!({
                        "x_degree": v.x_degree,
                        "monomial": v.monomial,
                        "coefficient": v.coefficient,
                    })).collect::<Vec<_>>(),
                },
            });
            let obj = results.as_object_mut().expect("results object");
            if let Some(s) = &solved {
                obj.insert(
                    "solver".to_string(),
                    serde_json::json!({
                        "sweeps": s.sweeps,
                        "transported_parameter": s.g_star_u.to_json(),
                    }),
                );
            }
            if let Some(d) = &diff {
                obj.insert("diff".to_string(), serde_json::json!(d));
            }
            if let Some(c) = &concrete {
                obj.insert(
                    "concrete".to_string(),
                    serde_json::json!(c
                        .iter()
                        .map(|(k, acc, value)| serde_json::json!({
                            "level": k,
                            "accuracy": acc,
                            "value": value,
                        }))
                        .collect::<Vec<_>>()),
                );
            }
            report::render_json(&report::envelope(cfg.to_json("action"), results))
        }
        OutputFormat::Text => {
            action_text(&cfg, &spec, engine, primary, &solved, &diff, &residual, &concrete)
        }
    };
    if let Some(note) = report::deliver(&cfg, &stem, &rendered)? {
        eprintln!("{}", note);
    }

    let engines_disagree = diff.as_ref().is_some_and(|d| !d.is_empty());
    if !residual.is_clean() || engines_disagree {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

/// Per-level differences between two action computations (empty on
/// agreement).
fn action_diff(a: &ActionData, b: &ActionData) -> Vec<String> {
    let mut out = Vec::new();
    if a.accuracy != b.accuracy {
        out.push(format!(
            "accuracy schedules differ: {:?} vs {:?}",
            a.accuracy, b.accuracy
        ));
    }
    for (k, (x, y)) in a.t.iter().zip(b.t.iter()).enumerate() {
        if x != y {
            let d = x.sub(y);
            out.push(format!("level {} differs; difference {}", k, d));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn action_text(
    cfg: &RunConfig,
    spec: &GSpec,
    engine: EngineArg,
    primary: &ActionData,
    solved: &Option<morava::stabilizer::SolveResult>,
    diff: &Option<Vec<String>>,
    residual: &morava::stabilizer::ResidualReport,
    concrete: &Option<Vec<(usize, u32, String)>>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "action at p = {}, h = {} via {} for the {} element\n",
        cfg.params.p,
        cfg.params.h,
        engine.as_str(),
        spec.label()
    ));
    for (k, (t, acc)) in primary.t.iter().zip(primary.accuracy.iter()).enumerate() {
        out.push_str(&format!("t_{} (tracked through u^{}): {}\n", k, acc, t));
    }
    if let Some(s) = solved {
        out.push_str(&format!(
            "solver: {} sweeps; transported parameter {}\n",
            s.sweeps, s.g_star_u
        ));
    }
    match diff {
        Some(d) if d.is_empty() => out.push_str("engines: agree on every level\n"),
        Some(d) => {
            for line in d {
                out.push_str(&format!("engines DISAGREE: {}\n", line));
            }
        }
        None => {}
    }
    if residual.is_clean() {
        let strata: Vec<String> = residual
            .tracked
            .iter()
            .map(|(d, w)| format!("x^{} through u^{}", d, w.saturating_sub(1)))
            .collect();
        out.push_str(&format!("residual: clean ({})\n", strata.join(", ")));
    } else {
        for v in &residual.violations {
            out.push_str(&format!(
                "residual violation at x^{}: {} -> {}\n",
                v.x_degree, v.monomial, v.coefficient
            ));
        }
    }
    if let Some(values) = concrete {
        out.push_str("concrete values:\n");
        for (k, acc, value) in values {
            out.push_str(&format!("  t_{} (through u^{}): {}\n", k, acc, value));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    families: Vec<String>,
    _all: bool,
    p: Option<u64>,
    h: Option<u32>,
    format: FormatArg,
    out: Option<PathBuf>,
    seed: u64,
    allow_heavy: bool,
) -> Result<ExitCode, String> {
    if let Some(p) = p {
        // Probe the cell parameters early so bad cells are usage errors.
        morava::polyring::RingCtx::new(p, h.unwrap_or(3).max(2), 2)
            .map_err(|e| e.to_string())?;
    }
    if let Some(h) = h {
        if h < 2 {
            return Err("the deformation parameter needs height at least 2".to_string());
        }
    }
    let selected = cases::select_cases(&families, p, h)?;
    let env = CheckEnv::new(seed, allow_heavy);
    let reports = cases::run_selected(&selected, &env);

    // The config block for verify records the filters rather than one
    // deformation cell.
    let config_json = serde_json::json!({
        "command": "verify",
        "cases": if families.is_empty() {
            serde_json::json!("all")
        } else {
            serde_json::json!(families)
        },
        "p": p,
        "h": h,
        "seed": seed,
        "allow_heavy": allow_heavy,
        "format": OutputFormat::from(format).as_str(),
    });
    let rows: Vec<serde_json::Value> = reports.iter().map(report::verify_row).collect();

    let fake_common = Common {
        p: p.unwrap_or(3),
        h: h.unwrap_or(3),
        x_order: None,
        u_order: None,
        xy_order: None,
        format,
        out,
        seed,
        allow_heavy,
    };
    let cfg = build_config(&fake_common)?;
    let rendered = match cfg.format {
        OutputFormat::Json => {
            report::render_json(&report::envelope(config_json, serde_json::json!(rows)))
        }
        OutputFormat::Text => report::verify_text(&reports),
    };
    if let Some(note) = report::deliver(&cfg, "verify", &rendered)? {
        eprintln!("{}", note);
    }

    if reports.iter().any(|r| r.status == CheckStatus::Failed) {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
