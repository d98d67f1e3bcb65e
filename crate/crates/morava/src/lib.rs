//! Exact-arithmetic construction of truncated universal deformations of
//! Honda formal group laws, together with the induced action of the
//! automorphism group on the deformation parameter.
//!
//! Everything is computed over exact coefficient domains (arbitrary
//! precision rationals, or prime fields); there is no floating point in
//! this crate. The main entry points:
//!
//! * [`fgl::araki_log`] / [`fgl::universal_f`]: the logarithm of the
//!   universal deformation and the formal group law it defines, truncated
//!   in the formal variables and the deformation parameter.
//! * [`fgl::f_closed_form`]: the same group law assembled from explicit
//!   coefficient formulas instead of exponential/logarithm composition.
//! * [`stabilizer::solve_action`] / [`stabilizer::unfold_action`]: two
//!   independent engines computing how a unit of the noncommutative
//!   endomorphism algebra transports the deformation parameter and the
//!   conjugation series coefficients.
//! * [`checks`]: the verification suites the command line tool and the
//!   acceptance tests share.

pub mod checks;
pub mod fgl;
pub mod polyring;
pub mod scalars;
pub mod series;
pub mod stabilizer;

pub use fgl::{
    araki_log, f_closed_form, p_m, p_series_mod_p, universal_f, verify_fgl_axioms,
    AxiomReport, DeformationParams, Domain, FGLData, FglError,
};
pub use polyring::{g_reduce, Monomial, Poly, RingCtx, RingError, VarId};
pub use scalars::{Fp, Int, PadicVal, Rat, Scalar, ScalarError};
pub use series::{SeriesError, UCaps, XSeries, XYSeries};
pub use stabilizer::{
    accuracy_schedule, act_on_u, equation_sides, residual, residual_with, solve_action,
    solve_action_with, stabilizer_mul, t0_h3_closed_form, t0_h3_nested_form, unfold_action,
    ActionData, GroupElement, ResidualReport, SolveResult, StabilizerError, Violation,
};
pub use checks::{
    default_matrix, run_case, CaseKey, CheckEnv, CheckReport, CheckStatus, LawPool,
};

/// Polynomial with exact rational coefficients.
pub type RatPoly = Poly<Rat>;
/// Polynomial with prime-field coefficients.
pub type FpPoly = Poly<Fp>;
/// Univariate series with exact rational coefficients.
pub type RatXSeries = XSeries<Rat>;
/// Univariate series with prime-field coefficients.
pub type FpXSeries = XSeries<Fp>;
/// Bivariate series with exact rational coefficients.
pub type RatXYSeries = XYSeries<Rat>;
/// Bivariate series with prime-field coefficients.
pub type FpXYSeries = XYSeries<Fp>;
