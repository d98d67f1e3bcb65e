//! Run configuration: flag validation, truncation-order overrides, the
//! work estimator that gates expensive cells, and output routing.

use std::path::PathBuf;

use morava::fgl::DeformationParams;
use serde_json::{json, Value};

/// Environment variable naming the default output directory. When it is
/// set and no explicit path is given, reports land there instead of on
/// standard output.
pub const OUT_DIR_VAR: &str = "MORAVA_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Text => "text",
            OutputFormat::Json => "json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Text => "txt",
            OutputFormat::Json => "json",
        }
    }
}

/// Validated run configuration shared by every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: DeformationParams,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub allow_heavy: bool,
}

impl RunConfig {
    /// Build deformation parameters from the prime, the height, and
    /// optional truncation overrides, revalidating the result.
    pub fn build(
        p: u64,
        h: u32,
        x_order: Option<usize>,
        u_order: Option<u32>,
        xy_order: Option<usize>,
        format: OutputFormat,
        out: Option<PathBuf>,
        seed: u64,
        allow_heavy: bool,
    ) -> Result<RunConfig, String> {
        let mut params = DeformationParams::new(p, h).map_err(|e| e.to_string())?;
        if let Some(x) = x_order {
            params.x_order = x;
        }
        if let Some(u) = u_order {
            params.u_order = u;
        }
        if let Some(xy) = xy_order {
            params.xy_order = xy;
        }
        if params.x_order < 2 || params.xy_order < 2 {
            return Err("truncation orders must be at least 2".to_string());
        }
        params.ring_ctx().map_err(|e| e.to_string())?;
        Ok(RunConfig { params, format, out, seed, allow_heavy })
    }

    pub fn to_json(&self, command: &str) -> Value {
        json!({
            "command": command,
            "p": self.params.p,
            "h": self.params.h,
            "x_order": self.params.x_order,
            "u_order": self.params.u_order,
            "xy_order": self.params.xy_order,
            "format": self.format.as_str(),
            "seed": self.seed,
            "allow_heavy": self.allow_heavy,
        })
    }
}

/// Estimated work units for constructing the deformation at the
/// configured truncations (series terms times coefficient width).
pub fn deformation_cost(params: &DeformationParams) -> u128 {
    let xy = params.xy_order as u128;
    let u = params.u_order as u128;
    let x = params.x_order as u128;
    xy * xy * u + x * u
}

/// Estimated work units for running an action engine.
pub fn action_cost(params: &DeformationParams) -> u128 {
    let x = params.x_order as u128;
    let u = params.u_order as u128;
    x * u * u
}

const DEFORMATION_CAP: u128 = 5_000_000;
const ACTION_CAP: u128 = 1_000_000;
/// Even with the heavy switch, refuse configurations that could not
/// finish in reasonable time.
const HARD_CAP: u128 = 1 << 44;

/// Gate a command on its estimated cost: over the default cap the
/// heavy switch is required, over the hard cap the run is refused.
pub fn check_feasible(
    what: &str,
    cost: u128,
    cap: u128,
    allow_heavy: bool,
) -> Result<(), String> {
    if cost > HARD_CAP {
        return Err(format!(
            "{} at these truncation orders is infeasible (estimated {} work units, limit {})",
            what, cost, HARD_CAP
        ));
    }
    if cost > cap && !allow_heavy {
        return Err(format!(
            "{} at these truncation orders is expensive (estimated {} work units, default budget {}); \
             pass --allow-heavy to run it",
            what, cost, cap
        ));
    }
    Ok(())
}

pub fn check_deformation_feasible(params: &DeformationParams, allow_heavy: bool) -> Result<(), String> {
    check_feasible(
        "constructing the deformation",
        deformation_cost(params),
        DEFORMATION_CAP,
        allow_heavy,
    )
}

pub fn check_action_feasible(params: &DeformationParams, allow_heavy: bool) -> Result<(), String> {
    check_deformation_feasible(params, allow_heavy)?;
    check_feasible("running an action engine", action_cost(params), ACTION_CAP, allow_heavy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_primes_are_rejected() {
        let err = RunConfig::build(
            4,
            3,
            None,
            None,
            None,
            OutputFormat::Text,
            None,
            0,
            false,
        )
        .unwrap_err();
        assert!(err.contains('4'), "{}", err);
    }

    #[test]
    fn default_cells_are_feasible_and_large_cells_are_gated() {
        let small = DeformationParams::new(3, 3).unwrap();
        assert!(check_action_feasible(&small, false).is_ok());
        let large = DeformationParams::new(5, 3).unwrap();
        assert!(check_action_feasible(&large, false).is_err());
        assert!(check_action_feasible(&large, true).is_ok());
    }
}
