//! The truncated universal deformation of a Honda formal group law.
//!
//! Over the rationals the group law is `F = exp(log(x) + log(y))`, where
//! the logarithm coefficients satisfy a two-term recursion in the
//! deformation parameter `u` and `exp` is the compositional inverse of
//! `log`. Everything is computed modulo the maximal ideal of middle
//! deformation coordinates, so the only variables are `u` and (later, in
//! the stabilizer) the unit coordinates; modulo `p` the reduction of `F`
//! is exact because all its coefficients are p-integral.
//!
//! Two independent routes to `F` are provided: [`universal_f`] via
//! exponential/logarithm composition, and [`f_closed_form`] assembling
//! explicit coefficient blocks. They must agree coefficient for
//! coefficient; the verification suites compare them.

use std::collections::BTreeMap;
use std::fmt;

use crate::polyring::{Poly, RingCtx, RingError, VarId};
use crate::scalars::{int_pow, rat_from_int, Fp, Int, PadicVal, Rat, Scalar, ScalarError};
use crate::series::{
    c_pn, eval, eval_xy, fgl_sum, revert, SeriesError, XSeries, XYSeries,
};

/// Coefficient domain a command-line run works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Rational,
    ModP,
}

/// Errors from deformation construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FglError {
    Ring(RingError),
    Series(SeriesError),
    Scalar(ScalarError),
    /// The deformation square needs at least height 2; closed forms need
    /// at least height 3.
    HeightTooSmall { h: u32 },
    /// Block index outside `1..=p-1`.
    BadBlockIndex { m: u64, p: u64 },
    /// A coefficient that must be p-integral is not.
    NotIntegral { degree: (usize, usize), witness: String },
    /// The requested order exceeds what the inputs determine.
    InsufficientOrder { needed: usize, have: usize },
}

impl fmt::Display for FglError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FglError::Ring(e) => write!(f, "{}", e),
            FglError::Series(e) => write!(f, "{}", e),
            FglError::Scalar(e) => write!(f, "{}", e),
            FglError::HeightTooSmall { h } => {
                write!(f, "height {} below the supported range", h)
            }
            FglError::BadBlockIndex { m, p } => {
                write!(f, "block index {} outside 1..{}", m, p)
            }
            FglError::NotIntegral { degree, witness } => {
                write!(
                    f,
                    "coefficient at x^{} y^{} is not p-integral: {}",
                    degree.0, degree.1, witness
                )
            }
            FglError::InsufficientOrder { needed, have } => {
                write!(f, "order {} requested but only {} determined", needed, have)
            }
        }
    }
}

impl std::error::Error for FglError {}

impl From<RingError> for FglError {
    fn from(e: RingError) -> FglError {
        FglError::Ring(e)
    }
}

impl From<SeriesError> for FglError {
    fn from(e: SeriesError) -> FglError {
        FglError::Series(e)
    }
}

impl From<ScalarError> for FglError {
    fn from(e: ScalarError) -> FglError {
        FglError::Scalar(e)
    }
}

/// Shape of one deformation computation: the prime, the height, and the
/// three truncation orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeformationParams {
    pub p: u64,
    pub h: u32,
    /// Univariate series are computed modulo `x^x_order`.
    pub x_order: usize,
    /// The group law is computed modulo total degree `xy_order`.
    pub xy_order: usize,
    /// Everything is computed modulo `u^u_order`.
    pub u_order: u32,
    pub domain: Domain,
}

impl DeformationParams {
    /// Defaults: the group law modulo total degree `p^h + 1`, univariate
    /// series modulo `x^(p^(2h-1) + 1)`, and `u^(p^h + 1)`.
    pub fn new(p: u64, h: u32) -> Result<DeformationParams, FglError> {
        if h < 2 {
            return Err(FglError::HeightTooSmall { h });
        }
        let ph = match p.checked_pow(h) {
            Some(v) if v <= 65536 => v as usize,
            _ => return Err(FglError::Ring(RingError::FieldTooLarge { p, h })),
        };
        let params = DeformationParams {
            p,
            h,
            x_order: ph * ph / p as usize + 1,
            xy_order: ph + 1,
            u_order: (ph + 1) as u32,
            domain: Domain::Rational,
        };
        params.ring_ctx()?;
        Ok(params)
    }

    pub fn ring_ctx(&self) -> Result<RingCtx, FglError> {
        if self.h < 2 {
            return Err(FglError::HeightTooSmall { h: self.h });
        }
        Ok(RingCtx::new(self.p, self.h, self.u_order)?)
    }

    /// `p^k` as a machine integer; exponents here always fit.
    pub fn p_pow(&self, k: u32) -> usize {
        (self.p as usize).pow(k)
    }
}

fn u_pow_or_zero(e: u64, ctx: RingCtx) -> Poly<Rat> {
    if e >= ctx.u_order as u64 {
        Poly::zero(ctx)
    } else {
        Poly::var_pow(VarId::U, e, ctx)
    }
}

/// Logarithm of the universal deformation: `sum L_n x^(p^n)` where
/// `L_0 = 1`, `L_n = 0` for `0 < n < h-1`, and for `n >= h-1`
///
/// ```text
/// L_n * (p - p^(p^n)) = L_(n-h+1) * u^(p^(n-h+1)) + L_(n-h)
/// ```
///
/// with vanishing negative-index terms.
pub fn araki_log(params: &DeformationParams) -> Result<XSeries<Rat>, FglError> {
    let ctx = params.ring_ctx()?;
    let h = params.h as usize;
    let n_max = {
        // Largest n with p^n < x_order.
        let mut n = 0usize;
        let mut pw = 1usize;
        while pw.saturating_mul(params.p as usize) < params.x_order {
            pw *= params.p as usize;
            n += 1;
        }
        n
    };
    let mut coeffs: Vec<Poly<Rat>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let l_n = if n == 0 {
            Poly::one(ctx)
        } else if n < h - 1 {
            Poly::zero(ctx)
        } else {
            let lower = if n >= h { coeffs[n - h].clone() } else { Poly::zero(ctx) };
            let upper = {
                let prev = &coeffs[n + 1 - h];
                if prev.is_zero() {
                    Poly::zero(ctx)
                } else {
                    let e = (params.p as u64).pow((n + 1 - h) as u32);
                    prev.mul(&u_pow_or_zero(e, ctx))
                }
            };
            let divisor = Rat::new(
                Int::from(1),
                Int::from(params.p) - int_pow(params.p, params.p.pow(n as u32) as u32),
            );
            upper.add(&lower).mul_scalar(&divisor)
        };
        coeffs.push(l_n);
    }
    let mut log = XSeries::zero(ctx, params.x_order);
    let mut pw = 1usize;
    for l_n in coeffs {
        log.set_coeff(pw, l_n);
        pw = pw.saturating_mul(params.p as usize);
    }
    Ok(log)
}

/// A constructed deformation: the logarithm, its compositional inverse,
/// the group law, and the rational multiplication-by-p series.
#[derive(Debug, Clone)]
pub struct FGLData {
    pub params: DeformationParams,
    pub log: XSeries<Rat>,
    pub exp: XSeries<Rat>,
    pub f: XYSeries<Rat>,
    /// `[p](x) = p*x +_F u*x^(p^(h-1)) +_F x^(p^h)`, determined modulo
    /// `x^min(x_order, xy_order)`.
    pub p_series: XSeries<Rat>,
}

impl FGLData {
    pub fn f_mod_p(&self) -> Result<XYSeries<Fp>, ScalarError> {
        self.f.reduce_mod_p()
    }
}

/// Construct the universal deformation `F = exp(log(x) + log(y))` and
/// its multiplication-by-p series, verifying p-integrality of every
/// group-law coefficient on the way.
pub fn universal_f(params: &DeformationParams) -> Result<FGLData, FglError> {
    let ctx = params.ring_ctx()?;
    let t = params.xy_order;
    let log = araki_log(params)?;
    let exp = revert(&log.truncate_x(t.max(2)))?;
    let log_x = XYSeries::embed_x(&log.truncate_x(t));
    let arg = log_x.add(&log_x.swap_xy());
    let f = eval_xy(&exp, &arg)?;
    // The logarithm starts with x, so F(x, 0) = x; anything else is an
    // arithmetic bug, not bad input.
    assert_eq!(
        f.set_y_zero(),
        XSeries::x(ctx, f.xy_order()),
        "group law does not restrict to x on the first axis"
    );
    for (degree, poly) in f.iter() {
        if poly.min_valuation() < PadicVal::Finite(0) {
            return Err(FglError::NotIntegral {
                degree,
                witness: poly.to_string(),
            });
        }
    }
    let x_ord = params.x_order;
    let q = params.p_pow(params.h - 1);
    let terms = [
        XSeries::x(ctx, x_ord).mul_scalar(&Rat::from_integer(Int::from(params.p))),
        XSeries::from_poly(Poly::var(VarId::U, ctx), q, x_ord),
        XSeries::from_poly(Poly::one(ctx), q * params.p as usize, x_ord),
    ];
    let p_series = fgl_sum(&f, &terms)?;
    Ok(FGLData { params: *params, log, exp, f, p_series })
}

/// `(x + y)^k` expanded with one rolling binomial row, with both
/// variables raised to the q-th power first.
fn binomial_xy_pow(ctx: RingCtx, order: usize, q: usize, k: u64) -> XYSeries<Rat> {
    let mut out = XYSeries::zero(ctx, order);
    let mut row = Int::from(1);
    out.set_coeff((0, q * k as usize), Poly::one(ctx));
    for i in 1..=k {
        row = row * Int::from(k - i + 1) / Int::from(i);
        let deg = (q * i as usize, q * (k - i) as usize);
        out.set_coeff(deg, Poly::constant(rat_from_int(row.clone()), ctx));
    }
    out
}

/// The degree-`(p^(h-1)(m+1) - m)` homogeneous block multiplying
/// `u^(m+1)` in the closed form of the group law:
///
/// ```text
/// P_m = (p - p^(p^(h-1)))^-(m+1) * sum_(j=0)^m (-1)^(j+1)/(j+1)
///       * binom(p^(h-1)(j+1), j) * binom(j(p^(h-1)-1) + p^(h-1), m-j)
///       * (x+y)^(p^(h-1)(j+1)-m) * (x^(p^(h-1)) + y^(p^(h-1)))^(m-j)
/// ```
///
/// Only the whole sum is p-integral; the summands separately are not.
pub fn p_m(m: u64, params: &DeformationParams) -> Result<XYSeries<Rat>, FglError> {
    if params.h < 3 {
        return Err(FglError::HeightTooSmall { h: params.h });
    }
    if m == 0 || m >= params.p {
        return Err(FglError::BadBlockIndex { m, p: params.p });
    }
    let ctx = params.ring_ctx()?;
    let q = params.p_pow(params.h - 1);
    let lead = Rat::new(
        Int::from(1),
        (Int::from(params.p) - int_pow(params.p, q as u32)).pow(m as u32 + 1),
    );
    let mut acc = XYSeries::zero(ctx, params.xy_order);
    for j in 0..=m {
        let sign = if (j + 1) % 2 == 0 { 1 } else { -1 };
        let scalar = Rat::new(
            Int::from(sign)
                * crate::scalars::binom((q as u64) * (j + 1), j as i64)
                * crate::scalars::binom(j * (q as u64 - 1) + q as u64, (m - j) as i64),
            Int::from(j + 1),
        );
        let outer = binomial_xy_pow(ctx, params.xy_order, 1, (q as u64) * (j + 1) - m);
        let inner = binomial_xy_pow(ctx, params.xy_order, q, m - j);
        acc = acc.add(&outer.mul(&inner).mul_scalar(&scalar));
    }
    Ok(acc.mul_scalar(&lead))
}

/// The group law assembled from explicit blocks (heights 3 and up):
///
/// ```text
/// F = x + y - u/(1 - p^(p^(h-1)-1)) * C_(p^(h-1))(x, y)
///           -   1/(1 - p^(p^h-1))   * C_(p^h)(x, y)
///           + sum_(m=1)^(p-1) u^(m+1) * P_m(x, y)
/// ```
///
/// where `C_(p^n)(x, y) = ((x+y)^(p^n) - x^(p^n) - y^(p^n))/p`.
pub fn f_closed_form(params: &DeformationParams) -> Result<XYSeries<Rat>, FglError> {
    if params.h < 3 {
        return Err(FglError::HeightTooSmall { h: params.h });
    }
    let ctx = params.ring_ctx()?;
    let t = params.xy_order;
    let x = XYSeries::<Rat>::x(ctx, t);
    let y = XYSeries::<Rat>::y(ctx, t);
    let q = params.h - 1;
    let mid_scalar = Rat::new(
        Int::from(1),
        Int::from(1) - int_pow(params.p, params.p.pow(q) as u32 - 1),
    );
    let top_scalar = Rat::new(
        Int::from(1),
        Int::from(1) - int_pow(params.p, params.p.pow(params.h) as u32 - 1),
    );
    let mid = c_pn(q, &x, &y)
        .mul_poly(&Poly::var(VarId::U, ctx))
        .mul_scalar(&mid_scalar);
    let top = c_pn(params.h, &x, &y).mul_scalar(&top_scalar);
    let mut f = x.add(&y).sub(&mid).sub(&top);
    for m in 1..params.p {
        let block = p_m(m, params)?;
        f = f.add(&block.mul_poly(&Poly::var_pow(VarId::U, m + 1, ctx)));
    }
    Ok(f)
}

/// Multiplication by p modulo p: `[p](x) = F(u*x^(p^(h-1)), x^(p^h))`,
/// evaluated directly over the prime field. The group law's total-degree
/// truncation `T` determines the result to `x^(T * p^(h-1))`; an error is
/// returned when that does not cover the requested order.
pub fn p_series_mod_p(
    f_fp: &XYSeries<Fp>,
    x_order: usize,
) -> Result<XSeries<Fp>, FglError> {
    let ctx = *f_fp.ctx();
    let p = ctx.p as usize;
    let q = p.pow(ctx.h - 1);
    let a = XSeries::from_poly(Poly::var(VarId::U, ctx), q, x_order);
    let b = XSeries::from_poly(Poly::one(ctx), q * p, x_order);
    let s = eval(f_fp, &a, &b)?;
    if s.x_order() < x_order {
        return Err(FglError::InsufficientOrder {
            needed: x_order,
            have: s.x_order(),
        });
    }
    Ok(s.truncate_x(x_order))
}

/// Outcome of the group-law axiom checks.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub unit: bool,
    pub commutative: bool,
    pub associative: bool,
    /// Total-degree order of the bivariate checks.
    pub bi_order: usize,
    /// Total-degree order of the associativity check.
    pub tri_order: usize,
    pub first_violation: Option<String>,
}

impl AxiomReport {
    pub fn all_hold(&self) -> bool {
        self.unit && self.commutative && self.associative
    }
}

/// Trivariate truncated series, just enough for associativity.
struct TriSeries<C: Scalar> {
    coeffs: BTreeMap<(usize, usize, usize), Poly<C>>,
    order: usize,
    ctx: RingCtx,
}

impl<C: Scalar> TriSeries<C> {
    fn zero(ctx: RingCtx, order: usize) -> TriSeries<C> {
        TriSeries { coeffs: BTreeMap::new(), order, ctx }
    }

    fn var(axis: usize, ctx: RingCtx, order: usize) -> TriSeries<C> {
        let mut s = TriSeries::zero(ctx, order);
        let mut d = (0, 0, 0);
        match axis {
            0 => d.0 = 1,
            1 => d.1 = 1,
            _ => d.2 = 1,
        }
        s.add_term(d, Poly::one(ctx));
        s
    }

    fn add_term(&mut self, d: (usize, usize, usize), p: Poly<C>) {
        if d.0 + d.1 + d.2 >= self.order || p.is_zero() {
            return;
        }
        match self.coeffs.get_mut(&d) {
            Some(cur) => {
                *cur = cur.add(&p);
                if cur.is_zero() {
                    self.coeffs.remove(&d);
                }
            }
            None => {
                self.coeffs.insert(d, p);
            }
        }
    }

    fn add(&self, o: &TriSeries<C>) -> TriSeries<C> {
        let mut out = TriSeries::zero(self.ctx, self.order.min(o.order));
        for (d, p) in self.coeffs.iter().chain(o.coeffs.iter()) {
            out.add_term(*d, p.clone());
        }
        out
    }

    fn mul(&self, o: &TriSeries<C>) -> TriSeries<C> {
        let mut out = TriSeries::zero(self.ctx, self.order.min(o.order));
        for (da, pa) in &self.coeffs {
            for (db, pb) in &o.coeffs {
                let d = (da.0 + db.0, da.1 + db.1, da.2 + db.2);
                if d.0 + d.1 + d.2 >= out.order {
                    continue;
                }
                out.add_term(d, pa.mul(pb));
            }
        }
        out
    }

    fn min_total_degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|d| d.0 + d.1 + d.2)
            .min()
            .unwrap_or(self.order)
    }
}

/// Evaluate a bivariate series on trivariate arguments vanishing at the
/// origin.
fn eval_tri<C: Scalar>(
    f: &XYSeries<C>,
    a: &TriSeries<C>,
    b: &TriSeries<C>,
    order: usize,
) -> TriSeries<C> {
    assert!(a.min_total_degree() >= 1 && b.min_total_degree() >= 1);
    let ctx = *f.ctx();
    let f = f.truncate_xy(order.min(f.xy_order()));
    let mut by_i: BTreeMap<usize, Vec<(usize, Poly<C>)>> = BTreeMap::new();
    for ((i, j), p) in f.iter() {
        by_i.entry(i).or_default().push((j, p.clone()));
    }
    let mut b_pows: BTreeMap<usize, TriSeries<C>> = BTreeMap::new();
    {
        let mut needed: Vec<usize> = f.iter().map(|((_, j), _)| j).filter(|&j| j > 0).collect();
        needed.sort_unstable();
        needed.dedup();
        let mut cur: Option<(usize, TriSeries<C>)> = None;
        for j in needed {
            let (start, mut acc) = match cur.take() {
                None => (1, b.clone_at(order)),
                Some((e, s)) => (e, s),
            };
            for _ in start..j {
                acc = acc.mul(b);
            }
            b_pows.insert(j, acc.clone_ref());
            cur = Some((j, acc));
        }
    }
    let mut out = TriSeries::zero(ctx, order);
    let mut a_cur: Option<(usize, TriSeries<C>)> = None;
    for (i, terms) in by_i {
        let mut inner = TriSeries::zero(ctx, order);
        for (j, p) in terms {
            if j == 0 {
                inner.add_term((0, 0, 0), p);
            } else {
                for (d, q) in &b_pows[&j].coeffs {
                    inner.add_term(*d, q.mul(&p));
                }
            }
        }
        if inner.coeffs.is_empty() {
            continue;
        }
        if i == 0 {
            out = out.add(&inner);
            continue;
        }
        let a_i = match a_cur.take() {
            None => {
                let mut acc = a.clone_at(order);
                for _ in 1..i {
                    acc = acc.mul(a);
                }
                acc
            }
            Some((e, s)) => {
                let mut acc = s;
                for _ in e..i {
                    acc = acc.mul(a);
                }
                acc
            }
        };
        out = out.add(&a_i.mul(&inner));
        a_cur = Some((i, a_i));
    }
    out
}

impl<C: Scalar> TriSeries<C> {
    fn clone_at(&self, order: usize) -> TriSeries<C> {
        let mut out = TriSeries::zero(self.ctx, order.min(self.order));
        for (d, p) in &self.coeffs {
            out.add_term(*d, p.clone());
        }
        out
    }

    fn clone_ref(&self) -> TriSeries<C> {
        self.clone_at(self.order)
    }
}

/// Check unit, commutativity, and associativity of a group law. The
/// bivariate checks run at the law's own truncation; associativity runs
/// modulo total degree `tri_order`.
pub fn verify_fgl_axioms<C: Scalar>(f: &XYSeries<C>, tri_order: usize) -> AxiomReport {
    let ctx = *f.ctx();
    let t = f.xy_order();
    let mut report = AxiomReport {
        unit: true,
        commutative: true,
        associative: true,
        bi_order: t,
        tri_order,
        first_violation: None,
    };
    let note = |report: &mut AxiomReport, msg: String| {
        if report.first_violation.is_none() {
            report.first_violation = Some(msg);
        }
    };
    let on_x = f.set_y_zero();
    if on_x != XSeries::x(ctx, t) {
        report.unit = false;
        note(&mut report, format!("F(x, 0) = {}", on_x));
    }
    let on_y = f.swap_xy().set_y_zero();
    if on_y != XSeries::x(ctx, t) {
        report.unit = false;
        note(&mut report, format!("F(0, y) = {}", on_y));
    }
    if !f.is_symmetric() {
        report.commutative = false;
        note(&mut report, "F(x, y) != F(y, x)".to_string());
    }
    let xt = TriSeries::<C>::var(0, ctx, tri_order);
    let yt = TriSeries::<C>::var(1, ctx, tri_order);
    let zt = TriSeries::<C>::var(2, ctx, tri_order);
    let fxy = eval_tri(f, &xt, &yt, tri_order);
    let fyz = eval_tri(f, &yt, &zt, tri_order);
    let left = eval_tri(f, &fxy, &zt, tri_order);
    let right = eval_tri(f, &xt, &fyz, tri_order);
    if left.coeffs != right.coeffs {
        report.associative = false;
        let diff = left
            .coeffs
            .iter()
            .map(|(d, p)| (*d, p.clone()))
            .find(|(d, p)| right.coeffs.get(d) != Some(p));
        note(
            &mut report,
            format!("associativity defect at {:?}", diff.map(|(d, _)| d)),
        );
    }
    report
}
