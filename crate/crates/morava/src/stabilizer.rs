//! The automorphism-group action on the deformation parameter.
//!
//! A group element is a truncated twisted power series `g = sum g_i S^i`
//! over the field with p^h elements, with `S a = a^p S` and `S^h = p`.
//! Acting on the deformed group law, it admits an isomorphism
//! `h_g(x) = t_0 x +_F t_1 x^p +_F ... +_F t_h x^(p^h)` back to the base
//! law, characterized by the functional equation
//!
//! ```text
//! h_g([p]_{g*F}(x)) = [p]_F(h_g(x)),
//! ```
//!
//! where `g*F` applies the induced substitution on the deformation
//! parameter `u`. Two engines compute the coefficients `t_i` to a fixed
//! u-adic accuracy schedule:
//!
//! * [`unfold_action`] iterates explicit coefficient recursions;
//! * [`solve_action`] knows nothing about those recursions (nor about
//!   the closed form of the induced substitution) and solves the
//!   functional equation stratum by stratum, with the substitution
//!   `u -> W` kept as an independent unknown whose sensitivity is
//!   measured by probing the equation itself.
//!
//! Agreement between the two, and the identity `W = u * t_0^(p^(h-1)-1)`
//! emerging from the second, are the main verification targets.

use std::fmt;

use crate::fgl::{universal_f, DeformationParams, FglError};
use crate::polyring::{Monomial, Poly, RingCtx, RingError, VarId};
use crate::scalars::{binom_p_over_p, int_mod_p, Fp, ScalarError};
use crate::series::{eval_capped, fgl_sum, SeriesError, UCaps, XSeries, XYSeries};

/// Errors from the action engines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StabilizerError {
    Ring(RingError),
    Series(SeriesError),
    Scalar(ScalarError),
    Fgl(FglError),
    /// A group element failed a structural requirement.
    BadElement { detail: String },
    /// The engines require the leading coefficient to be 1.
    BadNormalization { detail: String },
    /// The fixpoint iteration did not stabilize.
    NonConvergence { sweeps: u32 },
    /// A residual coefficient cannot be matched by any unknown.
    Inconsistent { x_degree: usize, detail: String },
    /// Closed forms exist for odd primes only.
    BadPrime { p: u64 },
    /// The requested truncation cannot support the accuracy schedule.
    InsufficientOrder { needed: usize, have: usize },
}

impl fmt::Display for StabilizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilizerError::Ring(e) => write!(f, "{}", e),
            StabilizerError::Series(e) => write!(f, "{}", e),
            StabilizerError::Scalar(e) => write!(f, "{}", e),
            StabilizerError::Fgl(e) => write!(f, "{}", e),
            StabilizerError::BadElement { detail } => {
                write!(f, "malformed group element: {}", detail)
            }
            StabilizerError::BadNormalization { detail } => {
                write!(f, "element is not normalized: {}", detail)
            }
            StabilizerError::NonConvergence { sweeps } => {
                write!(f, "no fixpoint after {} sweeps", sweeps)
            }
            StabilizerError::Inconsistent { x_degree, detail } => {
                write!(
                    f,
                    "functional equation unsolvable at x^{}: {}",
                    x_degree, detail
                )
            }
            StabilizerError::BadPrime { p } => {
                write!(f, "no closed form at p = {}", p)
            }
            StabilizerError::InsufficientOrder { needed, have } => {
                write!(
                    f,
                    "truncation order {} needed but only {} given",
                    needed, have
                )
            }
        }
    }
}

impl std::error::Error for StabilizerError {}

impl From<RingError> for StabilizerError {
    fn from(e: RingError) -> StabilizerError {
        StabilizerError::Ring(e)
    }
}

impl From<SeriesError> for StabilizerError {
    fn from(e: SeriesError) -> StabilizerError {
        StabilizerError::Series(e)
    }
}

impl From<ScalarError> for StabilizerError {
    fn from(e: ScalarError) -> StabilizerError {
        StabilizerError::Scalar(e)
    }
}

impl From<FglError> for StabilizerError {
    fn from(e: FglError) -> StabilizerError {
        StabilizerError::Fgl(e)
    }
}

/// How many u-adic digits of each `t_k` the engines pin down:
/// `schedule(p, h)[k]` is the exponent `N` with `t_k` determined modulo
/// `u^N`.
///
/// ```text
/// schedule[h]   = 1
/// schedule[h-1] = p^(h-1) + 1
/// schedule[k]   = 2 p^(h-1) + p^(k+1) + ... + p^(h-2) + 1   (k <= h-2)
/// ```
///
/// Consecutive entries differ by `p^(k+1)`, which is exactly the u-power
/// carried by the coupling between level `k` and level `k+1`, so the
/// schedule is the tightest self-consistent accuracy profile.
pub fn accuracy_schedule(p: u64, h: u32) -> Vec<u32> {
    assert!(h >= 2, "the deformation parameter needs height at least 2");
    let h = h as usize;
    let q = p.pow(h as u32 - 1) as u32;
    let mut acc = vec![0u32; h + 1];
    acc[h] = 1;
    acc[h - 1] = q + 1;
    for k in (0..h - 1).rev() {
        let tail: u32 = (k + 1..h - 1).map(|i| p.pow(i as u32) as u32).sum();
        acc[k] = 2 * q + tail + 1;
    }
    acc
}

/// Reinterpret a polynomial in another truncation of the same ring. All
/// terms must survive; this never invents information, it only moves a
/// value whose correctness the caller vouches for into a wider context.
fn recontext(p: &Poly<Fp>, ctx: RingCtx) -> Poly<Fp> {
    p.ctx().assert_same_ring(&ctx);
    let mut out = Poly::zero(ctx);
    for (m, c) in p.iter() {
        assert!(
            m.u_exp() < ctx.u_order,
            "term u^{} does not fit in the target truncation",
            m.u_exp()
        );
        out.set_term(*m, *c);
    }
    out
}

/// A truncated element of the automorphism group: coefficients
/// `g_0 .. g_h` of `sum g_i S^i`, each a u-free polynomial over the
/// prime field in the unit coordinates. Coefficients beyond `S^h` never
/// influence the action at the supported accuracy, so they are not
/// carried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupElement {
    coeffs: Vec<Poly<Fp>>,
    ctx: RingCtx,
}

impl GroupElement {
    /// The element `1 + g_1 S + ... + g_h S^h` with symbolic unit
    /// coordinates.
    pub fn symbolic(ctx: RingCtx) -> GroupElement {
        let mut coeffs = vec![Poly::one(ctx)];
        for i in 1..=ctx.h {
            coeffs.push(Poly::var(VarId::G(i as u8), ctx));
        }
        GroupElement { coeffs, ctx }
    }

    pub fn identity(ctx: RingCtx) -> GroupElement {
        let mut coeffs = vec![Poly::one(ctx)];
        coeffs.resize(ctx.h as usize + 1, Poly::zero(ctx));
        GroupElement { coeffs, ctx }
    }

    /// Build from explicit coefficients (padded with zeros up to `S^h`).
    pub fn from_coeffs(
        coeffs: Vec<Poly<Fp>>,
        ctx: RingCtx,
    ) -> Result<GroupElement, StabilizerError> {
        if coeffs.is_empty() || coeffs.len() > ctx.h as usize + 1 {
            return Err(StabilizerError::BadElement {
                detail: format!(
                    "need between 1 and {} coefficients, got {}",
                    ctx.h + 1,
                    coeffs.len()
                ),
            });
        }
        let mut out = Vec::with_capacity(ctx.h as usize + 1);
        for (i, c) in coeffs.into_iter().enumerate() {
            c.ctx().assert_same_ring(&ctx);
            if c.max_u_exp().unwrap_or(0) > 0 {
                return Err(StabilizerError::BadElement {
                    detail: format!("coefficient {} involves the deformation parameter", i),
                });
            }
            out.push(recontext(&c, ctx));
        }
        out.resize(ctx.h as usize + 1, Poly::zero(ctx));
        Ok(GroupElement { coeffs: out, ctx })
    }

    pub fn ctx(&self) -> &RingCtx {
        &self.ctx
    }

    pub fn coeff(&self, i: usize) -> &Poly<Fp> {
        &self.coeffs[i]
    }

    pub fn coeffs(&self) -> &[Poly<Fp>] {
        &self.coeffs
    }

    pub fn is_normalized(&self) -> bool {
        self.coeffs[0] == Poly::one(self.ctx)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let coeff = if i == 0 || c.is_constant() {
                format!("{}", c)
            } else {
                format!("({})", c)
            };
            match i {
                0 => parts.push(coeff),
                1 => parts.push(format!("{}*S", coeff)),
                _ => parts.push(format!("{}*S^{}", coeff, i)),
            }
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// The twisted product: `S a = a^p S`, so
/// `c_k = sum_(i+j=k) a_i * (b_j)^(p^i)`, truncated past `S^h`. Additive
/// carries between coefficients live beyond `S^h` (where `S^h = p`), so
/// the coefficient-wise formula is exact there.
pub fn stabilizer_mul(a: &GroupElement, b: &GroupElement) -> GroupElement {
    a.ctx.assert_same_ring(&b.ctx);
    let n = a.ctx.h as usize + 1;
    let mut coeffs = Vec::with_capacity(n);
    for k in 0..n {
        let mut c = Poly::zero(a.ctx);
        for i in 0..=k {
            let term = a.coeffs[i].mul(&b.coeffs[k - i].frobenius(i as u32));
            c = c.add(&term);
        }
        coeffs.push(c);
    }
    GroupElement { coeffs, ctx: a.ctx }
}

/// The action coefficients: `t[k]` is determined modulo
/// `u^accuracy[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionData {
    pub t: Vec<Poly<Fp>>,
    pub accuracy: Vec<u32>,
}

impl ActionData {
    pub fn ctx(&self) -> &RingCtx {
        self.t[0].ctx()
    }

    /// One entry per coefficient index: the tracked u-adic accuracy and
    /// the coefficient itself.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .t
            .iter()
            .zip(self.accuracy.iter())
            .map(|(t, acc)| serde_json::json!({ "accuracy": acc, "series": t.to_json() }))
            .collect();
        serde_json::json!({ "t": entries })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<ActionData, StabilizerError> {
        let entries = v
            .get("t")
            .and_then(|t| t.as_array())
            .ok_or_else(|| StabilizerError::BadElement {
                detail: "action data must carry a 't' array".to_string(),
            })?;
        let mut t = Vec::with_capacity(entries.len());
        let mut accuracy = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let acc = e.get("accuracy").and_then(|a| a.as_u64()).ok_or_else(|| {
                StabilizerError::BadElement {
                    detail: format!("entry {} lacks an accuracy", i),
                }
            })?;
            let series = e.get("series").ok_or_else(|| StabilizerError::BadElement {
                detail: format!("entry {} lacks a series", i),
            })?;
            let poly = Poly::<Fp>::from_json(series).map_err(|err| StabilizerError::BadElement {
                detail: format!("entry {}: {}", i, err),
            })?;
            t.push(poly);
            accuracy.push(acc as u32);
        }
        if t.is_empty() {
            return Err(StabilizerError::BadElement {
                detail: "action data must have at least one coefficient".to_string(),
            });
        }
        Ok(ActionData { t, accuracy })
    }
}

/// The induced substitution on the deformation parameter:
/// `u -> u * t_0^(p^(h-1) - 1)`, one u-adic digit beyond the accuracy
/// of `t_0`.
pub fn act_on_u(t0: &Poly<Fp>) -> Poly<Fp> {
    let ctx = *t0.ctx();
    let e = ctx.p.pow(ctx.h - 1) - 1;
    t0.pow(e).mul_u_pow(1)
}

/// One application of the level-`k` coefficient recursion (`k < h-1`):
///
/// ```text
/// t_k = t_k^(p^h) + u * t_(k+1)^(p^(h-1))
///     - u^(p^(k+1)) * t_(k+1) * t_0^(p^(k+1)(p^(h-1)-1))
/// ```
///
/// truncated to the schedule accuracy of level `k`.
pub fn recursion_tk(data: &ActionData, k: usize) -> Poly<Fp> {
    let ctx = *data.ctx();
    let h = ctx.h;
    assert!(
        (k as u32) < h - 1,
        "level {} has its own recursion; this one covers levels below {}",
        k,
        h - 1
    );
    let p = ctx.p;
    let q = p.pow(h - 1);
    let acc = data.accuracy[k];
    let frob = data.t[k].p_power(h);
    let lift = data.t[k + 1].p_power(h - 1).mul_u_pow(1);
    let twist = data.t[k + 1]
        .mul(&data.t[0].pow(p.pow(k as u32 + 1) * (q - 1)))
        .mul_u_pow(p.pow(k as u32 + 1) as u32);
    frob.add(&lift).sub(&twist).truncate_u(acc)
}

/// One application of the top-level recursion for `t_(h-1)`:
///
/// ```text
/// t_(h-1) = t_(h-1)^(p^h) + u * t_h^(p^(h-1))
///         - sum_(j=1)^(p-1) (1/p) binom(p, j)
///           * u^(j p^(h-2) + 1) * t_1^(j p^(2h-3)) * t_0^(p^(2h-2)(p-j))
/// ```
///
/// truncated modulo `u^(p^(h-1) + 1)`.
pub fn recursion_th(data: &ActionData) -> Result<Poly<Fp>, StabilizerError> {
    let ctx = *data.ctx();
    let h = ctx.h as usize;
    let p = ctx.p;
    let acc = data.accuracy[h - 1];
    let frob = data.t[h - 1].p_power(ctx.h);
    let lift = data.t[h].p_power(ctx.h - 1).mul_u_pow(1);
    let mut out = frob.add(&lift);
    for j in 1..p {
        let coeff = int_mod_p(&binom_p_over_p(p, j)?, p);
        let term = data.t[1]
            .pow(j * p.pow(2 * ctx.h - 3))
            .mul(&data.t[0].pow(p.pow(2 * ctx.h - 2) * (p - j)))
            .mul_u_pow((j * p.pow(ctx.h - 2)) as u32 + 1)
            .mul_scalar(&coeff);
        out = out.sub(&term);
    }
    Ok(out.truncate_u(acc))
}

fn require_normalized(g: &GroupElement) -> Result<(), StabilizerError> {
    if !g.is_normalized() {
        return Err(StabilizerError::BadNormalization {
            detail: format!("leading coefficient {} instead of 1", g.coeff(0)),
        });
    }
    Ok(())
}

/// Compute the action coefficients by iterating the explicit recursions
/// to their joint fixpoint (top level first, then each level downward,
/// repeated until a full sweep changes nothing).
pub fn unfold_action(
    g: &GroupElement,
    params: &DeformationParams,
) -> Result<ActionData, StabilizerError> {
    let ctx = params.ring_ctx()?;
    g.ctx().assert_same_ring(&ctx);
    require_normalized(g)?;
    let h = params.h as usize;
    let acc = accuracy_schedule(params.p, params.h);
    if params.u_order < acc[0] {
        return Err(StabilizerError::InsufficientOrder {
            needed: acc[0] as usize,
            have: params.u_order as usize,
        });
    }
    let mut data = ActionData {
        t: (0..=h)
            .map(|i| {
                let seed = recontext(g.coeff(i), ctx);
                // The top coefficient stays frozen at its seed; the rest
                // start at their scheduled accuracy.
                if i == h {
                    seed
                } else {
                    seed.truncate_u(acc[i])
                }
            })
            .collect(),
        accuracy: acc,
    };
    let sweeps_max = params.h + 12;
    for _sweep in 1..=sweeps_max {
        let mut changed = false;
        let top = recursion_th(&data)?;
        if top != data.t[h - 1] {
            data.t[h - 1] = top;
            changed = true;
        }
        for k in (0..h - 1).rev() {
            let next = recursion_tk(&data, k);
            if next != data.t[k] {
                data.t[k] = next;
                changed = true;
            }
        }
        if !changed {
            return Ok(data);
        }
    }
    Err(StabilizerError::NonConvergence { sweeps: sweeps_max })
}

/// Outcome of the functional-equation solver.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub action: ActionData,
    /// The solved substitution on the deformation parameter, one u-adic
    /// digit beyond the accuracy of `t_0`. The solver treats it as an
    /// independent unknown; its agreement with [`act_on_u`]`(t_0)` is a
    /// checked consequence, not an input.
    pub g_star_u: Poly<Fp>,
    /// Correction sweeps performed before the residual vanished.
    pub sweeps: u32,
}

/// Per-degree u-adic caps for the solver: reading degree `d` of the
/// residual only ever needs the accuracy of the stratum tracked there.
fn solver_caps(params: &DeformationParams, acc: &[u32]) -> UCaps {
    let p = params.p as usize;
    let h = params.h as usize;
    let q = p.pow(h as u32 - 1);
    let m = params.u_order;
    let mut bps = vec![(q, (acc[0] + 1).min(m))];
    for k in 0..h {
        bps.push((q * p.pow(k as u32 + 1), acc[k].min(m)));
    }
    UCaps::new(bps)
}

/// Rebuild a group law over the prime field at the working context and
/// the total degree the equation engines need.
fn anchor_law(f_fp: &XYSeries<Fp>, ctx: RingCtx, order: usize) -> XYSeries<Fp> {
    let trunc = f_fp.truncate_xy(order);
    let mut out = XYSeries::zero(ctx, order);
    for (d, poly) in trunc.iter() {
        out.set_coeff(d, recontext(&poly.truncate_u(ctx.u_order), ctx));
    }
    out
}

/// Drop u-slices of every coefficient that its degree's cap says can
/// never influence a tracked stratum.
fn trim_series(s: &XSeries<Fp>, caps: &UCaps) -> XSeries<Fp> {
    let mut out = XSeries::zero(*s.ctx(), s.x_order());
    for (d, poly) in s.iter() {
        out.set_coeff(d, caps.trim(d, poly));
    }
    out
}

/// Multiplicative inverse of a polynomial whose u-free slice is 1, by
/// u-adic Newton iteration (each step doubles the correct digits).
fn inv_unit(a: &Poly<Fp>) -> Option<Poly<Fp>> {
    let ctx = *a.ctx();
    if a.u_graded(0) != Poly::one(ctx) {
        return None;
    }
    let two = Poly::one(ctx).add(&Poly::one(ctx));
    let mut v = Poly::one(ctx);
    let mut digits = 1u32;
    while digits < ctx.u_order {
        v = v.mul(&two.sub(&a.mul(&v)));
        digits *= 2;
    }
    Some(v)
}

/// Evaluate both sides of the functional equation and return their
/// difference (left minus right). `t` and `w` live at the full working
/// truncation; `f` is the group law over the prime field at total degree
/// `p^h + 1`.
fn equation_residual(
    f: &XYSeries<Fp>,
    t: &[Poly<Fp>],
    w: &Poly<Fp>,
    x_ord: usize,
    caps: &UCaps,
) -> Result<XSeries<Fp>, StabilizerError> {
    let (lhs, rhs) = equation_sides_at(f, t, w, x_ord, caps)?;
    Ok(lhs.sub(&rhs))
}

/// Both sides of the functional equation, in the order (isomorphism
/// applied to the transported multiplication by p, multiplication by p
/// applied to the isomorphism).
fn equation_sides_at(
    f: &XYSeries<Fp>,
    t: &[Poly<Fp>],
    w: &Poly<Fp>,
    x_ord: usize,
    caps: &UCaps,
) -> Result<(XSeries<Fp>, XSeries<Fp>), StabilizerError> {
    let ctx = *f.ctx();
    let p = ctx.p as usize;
    let q = p.pow(ctx.h - 1);
    let ph = q * p;

    // Left side: the isomorphism applied to multiplication by p for the
    // transported law, whose parameter is W instead of u.
    let mut gf = XYSeries::zero(ctx, f.xy_order());
    for (degree, poly) in f.iter() {
        gf.set_coeff(degree, poly.substitute_u(w));
    }
    let za = XSeries::from_poly(w.clone(), q, x_ord);
    let zb = XSeries::from_poly(Poly::one(ctx), ph, x_ord);
    let z = eval_capped(&gf, &za, &zb, Some(caps))?;
    let mut lhs = trim_series(&z.mul_poly(&t[0]), caps);
    for (i, ti) in t.iter().enumerate().skip(1) {
        let zi = z.p_power(i as u32).truncate_x(x_ord);
        let term = trim_series(&zi.mul_poly(ti), caps);
        if term.is_zero() {
            continue;
        }
        lhs = eval_capped(f, &lhs, &term, Some(caps))?;
    }

    // Right side: multiplication by p for the base law, applied to the
    // isomorphism. The inner fold runs at a small order; its p-power
    // images cover the full one.
    let y_ord = (x_ord - 1) / q + 1;
    let y_terms: Vec<XSeries<Fp>> = t
        .iter()
        .enumerate()
        .map(|(i, ti)| XSeries::from_poly(ti.clone(), p.pow(i as u32), y_ord))
        .collect();
    let y = fgl_sum(f, &y_terms)?;
    let y1 = y
        .p_power(ctx.h - 1)
        .truncate_x(x_ord)
        .mul_poly(&Poly::var(VarId::U, ctx));
    let y2 = y.p_power(ctx.h).truncate_x(x_ord);
    let rhs = eval_capped(f, &y1, &y2, Some(caps))?;

    Ok((lhs, rhs))
}

/// Both sides of the functional equation built from given action data —
/// the isomorphism applied to the transported multiplication by p, and
/// multiplication by p applied to the isomorphism — with every x-degree
/// carried to the uniform u-adic window `window` instead of the
/// per-stratum schedule. The substituted parameter is taken from the
/// closed form on `t_0`, as in [`residual`]. This is a probe for
/// inspecting strata beyond their scheduled accuracy; subtracting the
/// two series gives the raw residual.
pub fn equation_sides(
    data: &ActionData,
    f_fp: &XYSeries<Fp>,
    params: &DeformationParams,
    window: u32,
) -> Result<(XSeries<Fp>, XSeries<Fp>), StabilizerError> {
    let ctx = params.ring_ctx()?;
    f_fp.ctx().assert_same_ring(&ctx);
    let p = params.p as usize;
    let q = p.pow(params.h - 1);
    let ph = q * p;
    let x_ord = q * ph + 1;
    if params.x_order < x_ord || f_fp.xy_order() < ph + 1 {
        return Err(StabilizerError::InsufficientOrder {
            needed: x_ord,
            have: params.x_order.min(f_fp.xy_order()),
        });
    }
    let caps = UCaps::new(vec![(1, window.min(params.u_order))]);
    let f = anchor_law(f_fp, ctx, ph + 1);
    let t: Vec<Poly<Fp>> = data.t.iter().map(|ti| recontext(ti, ctx)).collect();
    let w = recontext(&act_on_u(&data.t[0]).truncate_u(ctx.u_order), ctx);
    equation_sides_at(&f, &t, &w, x_ord, &caps)
}

/// Solve the functional equation by correction sweeps on the tracked
/// residual strata. The unknowns are `t_0 .. t_(h-1)` and the
/// substituted parameter `W`; `t_h` stays frozen at `g_h`. Nothing here
/// assumes a formula for `W`: its stratum is solved with a sensitivity
/// measured from the equation itself.
pub fn solve_action(
    g: &GroupElement,
    params: &DeformationParams,
) -> Result<SolveResult, StabilizerError> {
    let data = universal_f(params)?;
    solve_action_with(g, &data.f_mod_p()?, params)
}

/// [`solve_action`] against a caller-supplied group law over the prime
/// field (so one expensive law can serve many elements).
pub fn solve_action_with(
    g: &GroupElement,
    f_fp: &XYSeries<Fp>,
    params: &DeformationParams,
) -> Result<SolveResult, StabilizerError> {
    let ctx = params.ring_ctx()?;
    g.ctx().assert_same_ring(&ctx);
    f_fp.ctx().assert_same_ring(&ctx);
    require_normalized(g)?;
    let p = params.p as usize;
    let h = params.h as usize;
    let q = p.pow(params.h - 1);
    let ph = q * p;
    let acc = accuracy_schedule(params.p, params.h);
    let x_ord = q * ph + 1;
    if params.x_order < x_ord {
        return Err(StabilizerError::InsufficientOrder {
            needed: x_ord,
            have: params.x_order,
        });
    }
    if params.u_order < acc[0] + 1 {
        return Err(StabilizerError::InsufficientOrder {
            needed: acc[0] as usize + 1,
            have: params.u_order as usize,
        });
    }
    if f_fp.xy_order() < ph + 1 {
        return Err(StabilizerError::InsufficientOrder {
            needed: ph + 1,
            have: f_fp.xy_order(),
        });
    }
    let caps = solver_caps(params, &acc);
    let f = anchor_law(f_fp, ctx, ph + 1);
    let u_poly = Poly::<Fp>::var(VarId::U, ctx);

    let mut t: Vec<Poly<Fp>> = (0..=h).map(|i| recontext(g.coeff(i), ctx)).collect();
    let mut omega = Poly::one(ctx);
    let cap0 = (acc[0] + 1).min(params.u_order);
    let sweeps_max = params.h + 12;
    for sweep in 1..=sweeps_max {
        let w = omega.mul_u_pow(1).truncate_u(params.u_order);
        let r = equation_residual(&f, &t, &w, x_ord, &caps)?;
        let r_q = r.coeff(q).truncate_u(cap0);
        let mut deltas = Vec::with_capacity(h);
        let mut done = r_q.is_zero();
        for k in 0..h {
            let d = r.coeff(q * p.pow(k as u32 + 1)).truncate_u(acc[k]);
            done &= d.is_zero();
            deltas.push(d);
        }
        if done {
            let g_star_u = omega.truncate_u(acc[0]).mul_u_pow(1);
            let action = ActionData {
                t: (0..=h)
                    .map(|i| {
                        if i == h {
                            t[i].clone()
                        } else {
                            t[i].truncate_u(acc[i])
                        }
                    })
                    .collect(),
                accuracy: acc,
            };
            return Ok(SolveResult {
                action,
                g_star_u,
                sweeps: sweep - 1,
            });
        }
        if !r_q.is_zero() {
            // The stratum at x^(p^(h-1)) is where the substituted
            // parameter lives. Measure how it responds to W (by probing
            // the equation at W + u) and take one Newton step with the
            // measured sensitivity.
            let w_probe = w.add(&u_poly);
            let r_probe = equation_residual(&f, &t, &w_probe, x_ord, &caps)?;
            let moved = r_probe.coeff(q).truncate_u(cap0).sub(&r_q);
            let jac = match moved.div_exact_u(1) {
                Some(j) => j,
                None => {
                    return Err(StabilizerError::Inconsistent {
                        x_degree: q,
                        detail: "the residual does not respond to the substituted \
                                 parameter through the u-ideal"
                            .to_string(),
                    })
                }
            };
            let jac_inv = match inv_unit(&jac) {
                Some(v) => v,
                None => {
                    return Err(StabilizerError::Inconsistent {
                        x_degree: q,
                        detail: format!(
                            "the measured sensitivity {} is not a unit",
                            jac.u_graded(0)
                        ),
                    })
                }
            };
            let num = match r_q.div_exact_u(1) {
                Some(n) => n,
                None => {
                    return Err(StabilizerError::Inconsistent {
                        x_degree: q,
                        detail: format!(
                            "residual {} has a u-free part, but the substituted \
                             parameter must preserve the u-ideal",
                            r_q
                        ),
                    })
                }
            };
            let step = num.mul(&jac_inv);
            omega = omega.sub(&recontext(&step, ctx));
        }
        for (k, delta) in deltas.iter().enumerate() {
            if !delta.u_graded(0).is_zero() {
                return Err(StabilizerError::Inconsistent {
                    x_degree: q * p.pow(k as u32 + 1),
                    detail: format!(
                        "u-free residual {} cannot be absorbed without moving \
                         t_{} off its unit seed",
                        delta.u_graded(0),
                        k
                    ),
                });
            }
            t[k] = t[k].sub(&recontext(delta, ctx));
        }
    }
    Err(StabilizerError::NonConvergence { sweeps: sweeps_max })
}

/// One reported failure of the functional equation.
#[derive(Debug, Clone)]
pub struct Violation {
    pub x_degree: usize,
    pub monomial: String,
    pub coefficient: String,
}

/// Result of checking the functional equation against given action data,
/// with the substituted parameter taken from the closed form
/// `W = u * t_0^(p^(h-1)-1)`.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// Nonzero residual terms inside the soundly determined window.
    pub violations: Vec<Violation>,
    /// `(x-degree, u-accuracy)` pairs the engines pin down.
    pub tracked: Vec<(usize, u32)>,
}

impl ResidualReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify the functional equation for given action data.
pub fn residual(
    data: &ActionData,
    g: &GroupElement,
    params: &DeformationParams,
) -> Result<ResidualReport, StabilizerError> {
    let fgl = universal_f(params)?;
    residual_with(data, g, &fgl.f_mod_p()?, params)
}

/// [`residual`] against a caller-supplied group law.
pub fn residual_with(
    data: &ActionData,
    g: &GroupElement,
    f_fp: &XYSeries<Fp>,
    params: &DeformationParams,
) -> Result<ResidualReport, StabilizerError> {
    let ctx = params.ring_ctx()?;
    g.ctx().assert_same_ring(&ctx);
    require_normalized(g)?;
    let p = params.p as usize;
    let h = params.h as usize;
    let q = p.pow(params.h - 1);
    let ph = q * p;
    let acc = &data.accuracy;
    let x_ord = q * ph + 1;
    if params.x_order < x_ord || f_fp.xy_order() < ph + 1 {
        return Err(StabilizerError::InsufficientOrder {
            needed: x_ord,
            have: params.x_order.min(f_fp.xy_order()),
        });
    }
    let caps = solver_caps(params, acc);
    let f = anchor_law(f_fp, ctx, ph + 1);
    let t: Vec<Poly<Fp>> = data.t.iter().map(|ti| recontext(ti, ctx)).collect();
    let w = recontext(&act_on_u(&data.t[0]).truncate_u(ctx.u_order), ctx);
    let r = equation_residual(&f, &t, &w, x_ord, &caps)?;
    let mut violations = Vec::new();
    for (d, poly) in r.iter() {
        let window = caps.cap(d);
        for (m, c) in poly.iter() {
            if m.u_exp() < window {
                violations.push(Violation {
                    x_degree: d,
                    monomial: format_monomial(m),
                    coefficient: format!("{}", c),
                });
            }
        }
    }
    let mut tracked = vec![(q, (acc[0] + 1).min(params.u_order))];
    for k in 0..h {
        tracked.push((q * p.pow(k as u32 + 1), acc[k].min(params.u_order)));
    }
    Ok(ResidualReport { violations, tracked })
}

fn format_monomial(m: &Monomial) -> String {
    if m.is_one() {
        return "1".to_string();
    }
    m.factors()
        .into_iter()
        .map(|(v, e)| {
            if e == 1 {
                v.name()
            } else {
                format!("{}^{}", v.name(), e)
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

fn closed_form_ctx(p: u64) -> Result<RingCtx, StabilizerError> {
    if p < 3 {
        return Err(StabilizerError::BadPrime { p });
    }
    let m = (2 * p * p + p + 1) as u32;
    Ok(RingCtx::new(p, 3, m)?)
}

/// The height-3 closed form of `t_0` for a symbolic normalized element,
/// modulo `u^(2p^2 + p + 1)` (and the prime, as always): an explicit
/// polynomial in `g_1, g_2, g_3`. Odd primes only.
pub fn t0_h3_closed_form(p: u64) -> Result<Poly<Fp>, StabilizerError> {
    let ctx = closed_form_ctx(p)?;
    let pp = p * p;
    let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
    let g2 = Poly::<Fp>::var(VarId::G(2), ctx);
    let g3 = Poly::<Fp>::var(VarId::G(3), ctx);
    let u = |e: u64| Poly::<Fp>::var_pow(VarId::U, e, ctx);
    let sign = |k: u64| -> Poly<Fp> {
        if k % 2 == 0 {
            Poly::one(ctx)
        } else {
            Poly::one(ctx).neg()
        }
    };
    let binom_fp = |n: u64, k: i64| -> Fp { int_mod_p(&crate::scalars::binom(n, k), p) };

    let mut t0 = Poly::one(ctx);
    t0 = t0.add(&u(1).mul(&g1.pow(pp)));
    for i in 0..p {
        let term = u((i + 1) * p).mul(&g1.pow(i + 1));
        t0 = t0.sub(&sign(i).mul(&term));
    }
    for i in 0..p - 1 {
        let term = u((i + 1) * p + 1).mul(&g1.pow(i)).mul(&g2.pow(pp));
        t0 = t0.sub(&sign(i).mul(&term));
    }
    t0 = t0.add(&u(pp + 1).mul(&g2.pow(p).sub(&g1.pow(p - 1).mul(&g2.pow(pp)))));
    for i in 0..=p {
        let mut inner = sign(p + i).mul(&g1.pow(p + 1));
        inner = inner.add(&g1.pow(p + 1).mul_scalar(&binom_fp(pp - 2, i as i64)));
        inner = inner.add(&sign(i + 1).mul(&g2));
        inner = inner.add(&g2.mul_scalar(&binom_fp(pp - 2, i as i64 - 1)));
        let term = u(pp + (i + 1) * p).mul(&g1.pow(i)).mul(&inner);
        t0 = t0.sub(&term);
    }
    t0 = t0.sub(&u(pp + p + 1).mul(&g3.pow(p).sub(&g3.pow(pp))));
    for j in 1..p {
        let dg3 = g3.pow(p).sub(&g3.pow(pp));
        let mut c_j = sign(j + p).mul(&g1.pow(p + 1)).mul(&g2.pow(pp));
        c_j = c_j.add(
            &g1.mul(
                &sign(j).mul(&dg3).add(
                    &g1.pow(p)
                        .mul(&g2.pow(pp))
                        .mul_scalar(&binom_fp(pp - 2, j as i64)),
                ),
            ),
        );
        c_j = c_j.add(&g2.pow(pp + 1).mul_scalar(&binom_fp(pp - 2, j as i64 - 1)));
        let mut tail = Poly::zero(ctx);
        for i in 1..=j {
            let coeff = int_mod_p(&binom_p_over_p(p, i)?, p);
            tail = tail.add(&sign(j - i).mul(&g1).mul_scalar(&coeff));
        }
        let term = u(pp + (j + 1) * p + 1)
            .mul(&g1.pow(j - 1))
            .mul(&c_j.add(&tail));
        t0 = t0.sub(&term);
    }
    Ok(t0)
}

/// The same height-3 value of `t_0`, left in its nested (unexpanded)
/// shape; expanding must reproduce [`t0_h3_closed_form`]. Odd primes
/// only.
pub fn t0_h3_nested_form(p: u64) -> Result<Poly<Fp>, StabilizerError> {
    let ctx = closed_form_ctx(p)?;
    let pp = p * p;
    let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
    let g2 = Poly::<Fp>::var(VarId::G(2), ctx);
    let g3 = Poly::<Fp>::var(VarId::G(3), ctx);
    let u = |e: u64| Poly::<Fp>::var_pow(VarId::U, e, ctx);

    // The p^2-th power of t_0, to the accuracy the nesting needs.
    let t0_pp = Poly::one(ctx).add(&u(pp).mul(&g1.pow(p)));
    let t0_pp_pow = t0_pp.pow(pp - 1);
    let mut t2 = g2.add(&u(1).mul(&g3.pow(pp)));
    for j in 1..p {
        let coeff = int_mod_p(&binom_p_over_p(p, j)?, p);
        t2 = t2.sub(&u(j * p + 1).mul(&g1.pow(j)).mul_scalar(&coeff));
    }
    let t1 = g1
        .add(&u(1).mul(&g2.pow(pp).add(&u(pp).mul(&g3.pow(p)))))
        .sub(&u(pp).mul(&t2).mul(&t0_pp_pow));
    let t0_p = Poly::one(ctx)
        .add(&u(p).mul(&g1))
        .sub(&u(pp).mul(&g1.pow(p).add(&u(p).mul(&g2))).mul(&t0_pp_pow));
    let t0 = Poly::one(ctx)
        .add(&u(1).mul(&g1.pow(pp).add(&u(pp).mul(&g2.pow(p)))))
        .sub(&u(p).mul(&t1).mul(&t0_p.pow(pp - 1)));
    Ok(t0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx33() -> RingCtx {
        RingCtx::new(3, 3, 28).unwrap()
    }

    #[test]
    fn schedule_values() {
        assert_eq!(accuracy_schedule(3, 3), vec![22, 19, 10, 1]);
        assert_eq!(accuracy_schedule(3, 4), vec![67, 64, 55, 28, 1]);
        assert_eq!(accuracy_schedule(5, 3), vec![56, 51, 26, 1]);
        assert_eq!(accuracy_schedule(3, 2), vec![7, 4, 1]);
    }

    #[test]
    fn twisted_product() {
        let ctx = ctx33();
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        let g2 = Poly::<Fp>::var(VarId::G(2), ctx);
        let one = Poly::<Fp>::one(ctx);
        let a = GroupElement::from_coeffs(vec![one.clone(), g1.clone()], ctx).unwrap();
        let b = GroupElement::from_coeffs(vec![one.clone(), g2.clone()], ctx).unwrap();
        let prod = stabilizer_mul(&a, &b);
        assert_eq!(prod.coeff(0), &one);
        assert_eq!(prod.coeff(1), &g1.add(&g2));
        assert_eq!(prod.coeff(2), &g1.mul(&g2.pow(3)));
        assert!(prod.coeff(3).is_zero());
        // The identity is neutral on both sides.
        let e = GroupElement::identity(ctx);
        assert_eq!(stabilizer_mul(&e, &a), a);
        assert_eq!(stabilizer_mul(&a, &e), a);
        // Coefficients involving the deformation parameter are rejected.
        let bad = GroupElement::from_coeffs(vec![one, Poly::var(VarId::U, ctx)], ctx);
        assert!(matches!(bad, Err(StabilizerError::BadElement { .. })));
    }

    #[test]
    fn recursion_seeds() {
        let ctx = ctx33();
        let g = GroupElement::symbolic(ctx);
        let data = ActionData {
            t: g.coeffs().to_vec(),
            accuracy: accuracy_schedule(3, 3),
        };
        let u = Poly::<Fp>::var(VarId::U, ctx);
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        let g3 = Poly::<Fp>::var(VarId::G(3), ctx);
        let t0 = recursion_tk(&data, 0);
        assert_eq!(
            t0.truncate_u(2),
            Poly::one(ctx).add(&u.mul(&g1.pow(9))).truncate_u(2)
        );
        let th = recursion_th(&data).unwrap();
        assert_eq!(
            th.truncate_u(2),
            Poly::var(VarId::G(2), ctx)
                .add(&u.mul(&g3.pow(9)))
                .truncate_u(2)
        );
    }

    #[test]
    fn unfolded_low_terms() {
        let params = DeformationParams::new(3, 3).unwrap();
        let ctx = params.ring_ctx().unwrap();
        let g = GroupElement::symbolic(ctx);
        let data = unfold_action(&g, &params).unwrap();
        let u = Poly::<Fp>::var(VarId::U, ctx);
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        let g2 = Poly::<Fp>::var(VarId::G(2), ctx);
        let want = Poly::one(ctx)
            .add(&u.mul(&g1.pow(9)))
            .sub(&u.pow(3).mul(&g1))
            .sub(&u.pow(4).mul(&g2.pow(9)));
        assert_eq!(data.t[0].truncate_u(5), want.truncate_u(5));
        // The identity is a fixpoint.
        let e = GroupElement::identity(ctx);
        let trivial = unfold_action(&e, &params).unwrap();
        assert_eq!(trivial.t[0], Poly::one(ctx).truncate_u(22));
        for k in 1..=3 {
            assert!(trivial.t[k].is_zero());
        }
    }

    #[test]
    fn closed_form_low_terms() {
        let t0 = t0_h3_closed_form(3).unwrap();
        let ctx = *t0.ctx();
        assert_eq!(ctx.u_order, 22);
        let u = Poly::<Fp>::var(VarId::U, ctx);
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        let g2 = Poly::<Fp>::var(VarId::G(2), ctx);
        let want = Poly::one(ctx)
            .add(&u.mul(&g1.pow(9)))
            .sub(&u.pow(3).mul(&g1))
            .sub(&u.pow(4).mul(&g2.pow(9)));
        assert_eq!(t0.truncate_u(5), want.truncate_u(5));
        // The slice at u^(p^2+1) carries g2^p - g1^(p-1) g2^(p^2).
        let slice = t0.u_graded(10).div_exact_u(10).unwrap();
        assert_eq!(
            slice,
            g2.pow(3).sub(&g1.pow(2).mul(&g2.pow(9))).truncate_u(12)
        );
        assert!(t0_h3_closed_form(2).is_err());
    }

    #[test]
    fn nested_form_expands_to_closed_form() {
        let nested = t0_h3_nested_form(3).unwrap();
        let closed = t0_h3_closed_form(3).unwrap();
        assert_eq!(nested, closed);
    }

    #[test]
    fn unfold_matches_closed_form() {
        let params = DeformationParams::new(3, 3).unwrap();
        let ctx = params.ring_ctx().unwrap();
        let g = GroupElement::symbolic(ctx);
        let data = unfold_action(&g, &params).unwrap();
        let closed = t0_h3_closed_form(3).unwrap();
        assert_eq!(data.t[0], recontext(&closed, ctx).truncate_u(22));
    }

    #[test]
    fn solved_action_emerges() {
        let params = DeformationParams::new(3, 3).unwrap();
        let ctx = params.ring_ctx().unwrap();
        let fgl = universal_f(&params).unwrap();
        let f_fp = fgl.f_mod_p().unwrap();
        // The identity solves immediately, with the trivial substitution.
        let e = GroupElement::identity(ctx);
        let se = solve_action_with(&e, &f_fp, &params).unwrap();
        assert_eq!(se.sweeps, 0);
        assert_eq!(se.g_star_u, Poly::one(ctx).truncate_u(22).mul_u_pow(1));
        // A symbolic element: the solver agrees with the recursions...
        let g = GroupElement::symbolic(ctx);
        let solved = solve_action_with(&g, &f_fp, &params).unwrap();
        let unfolded = unfold_action(&g, &params).unwrap();
        for k in 0..=3 {
            assert_eq!(
                solved.action.t[k], unfolded.t[k],
                "engines disagree at level {}",
                k
            );
        }
        // ...the substitution on u, solved as an unknown, matches the
        // closed form...
        assert_eq!(solved.g_star_u, act_on_u(&solved.action.t[0]));
        // ...and the full residual check is clean.
        let report = residual_with(&solved.action, &g, &f_fp, &params).unwrap();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        // A normalization failure is rejected up front.
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        let off = GroupElement::from_coeffs(vec![g1], ctx).unwrap();
        assert!(matches!(
            solve_action_with(&off, &f_fp, &params),
            Err(StabilizerError::BadNormalization { .. })
        ));
    }
}
