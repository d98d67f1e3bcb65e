//! Truncated power series in one or two formal variables, with
//! polynomial coefficients from the ambient ring.
//!
//! A univariate series is known modulo `x^x_order`; a bivariate series is
//! truncated by total degree. Binary operations track how far the result
//! is determined: sums meet at the minimum order, while a product of
//! series known to orders `N_a, N_b` with minimum degrees `m_a, m_b` is
//! determined to `min(N_a + m_b, N_b + m_a)`.
//!
//! Coefficients of degrees at or beyond the declared order are never
//! stored, and stored polynomials all live in the series' ring context.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use crate::polyring::{Poly, RingCtx, RingError};
use crate::scalars::{binom, rat_from_int, Fp, Int, Rat, Scalar};

/// Errors from series-level operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeriesError {
    /// An argument that must vanish at the origin does not.
    NonzeroConstantTerm { what: String },
    /// A leading or constant coefficient that must be an invertible
    /// scalar is not.
    NonUnitCoefficient { what: String },
    /// The requested closed form only exists above this height.
    HeightTooSmall { h: u32 },
    /// The logarithm does not have the three-term shape the coefficient
    /// formula requires.
    UnsupportedLogShape { detail: String },
    /// Index beyond the range the formula covers.
    IndexTooLarge { n: usize, max: usize },
    /// A formal group sum of no terms.
    EmptySum,
    /// Malformed serialized form.
    BadJson(String),
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::NonzeroConstantTerm { what } => {
                write!(f, "{} must have zero constant term", what)
            }
            SeriesError::NonUnitCoefficient { what } => {
                write!(f, "{} must be an invertible scalar", what)
            }
            SeriesError::HeightTooSmall { h } => {
                write!(f, "no closed form at height {}", h)
            }
            SeriesError::UnsupportedLogShape { detail } => {
                write!(f, "unsupported logarithm shape: {}", detail)
            }
            SeriesError::IndexTooLarge { n, max } => {
                write!(f, "index {} beyond covered range {}", n, max)
            }
            SeriesError::EmptySum => write!(f, "formal group sum of no terms"),
            SeriesError::BadJson(msg) => write!(f, "bad series JSON: {}", msg),
        }
    }
}

impl std::error::Error for SeriesError {}

/// Univariate truncated power series with polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XSeries<C: Scalar> {
    coeffs: BTreeMap<usize, Poly<C>>,
    x_order: usize,
    ctx: RingCtx,
}

impl<C: Scalar> XSeries<C> {
    pub fn zero(ctx: RingCtx, x_order: usize) -> XSeries<C> {
        assert!(x_order >= 1, "series order must be at least 1");
        XSeries { coeffs: BTreeMap::new(), x_order, ctx }
    }

    /// The series `x`.
    pub fn x(ctx: RingCtx, x_order: usize) -> XSeries<C> {
        XSeries::from_poly(Poly::one(ctx), 1, x_order)
    }

    /// A single term `poly * x^degree`.
    pub fn from_poly(poly: Poly<C>, degree: usize, x_order: usize) -> XSeries<C> {
        let ctx = *poly.ctx();
        let mut s = XSeries::zero(ctx, x_order);
        s.set_coeff(degree, poly);
        s
    }

    pub fn ctx(&self) -> &RingCtx {
        &self.ctx
    }

    pub fn x_order(&self) -> usize {
        self.x_order
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Smallest degree with a nonzero coefficient; the declared order for
    /// the zero series (a vanishing tail is all we know).
    pub fn min_degree(&self) -> usize {
        self.coeffs.keys().next().copied().unwrap_or(self.x_order)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Poly<C>)> {
        self.coeffs.iter().map(|(d, p)| (*d, p))
    }

    pub fn coeff(&self, degree: usize) -> Poly<C> {
        self.coeffs
            .get(&degree)
            .cloned()
            .unwrap_or_else(|| Poly::zero(self.ctx))
    }

    pub fn get(&self, degree: usize) -> Option<&Poly<C>> {
        self.coeffs.get(&degree)
    }

    pub fn set_coeff(&mut self, degree: usize, poly: Poly<C>) {
        if degree >= self.x_order {
            return;
        }
        self.ctx.assert_same_ring(poly.ctx());
        let poly = poly.truncate_u(self.ctx.u_order);
        if poly.is_zero() {
            self.coeffs.remove(&degree);
        } else {
            self.coeffs.insert(degree, poly);
        }
    }

    /// Joint context of a binary operation; orders meet at the minimum.
    fn join(&self, o: &XSeries<C>) -> (RingCtx, usize) {
        self.ctx.assert_same_ring(&o.ctx);
        let ctx = self.ctx.with_u_order(self.ctx.u_order.min(o.ctx.u_order));
        (ctx, self.x_order.min(o.x_order))
    }

    pub fn add(&self, o: &XSeries<C>) -> XSeries<C> {
        let (ctx, n) = self.join(o);
        let mut out = XSeries::zero(ctx, n);
        for (d, p) in self.coeffs.iter().chain(o.coeffs.iter()) {
            if *d >= n {
                continue;
            }
            let cur = out.coeff(*d);
            out.set_coeff(*d, cur.add(&p.truncate_u(ctx.u_order)));
        }
        out
    }

    pub fn sub(&self, o: &XSeries<C>) -> XSeries<C> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> XSeries<C> {
        XSeries {
            coeffs: self.coeffs.iter().map(|(d, p)| (*d, p.neg())).collect(),
            x_order: self.x_order,
            ctx: self.ctx,
        }
    }

    pub fn mul(&self, o: &XSeries<C>) -> XSeries<C> {
        self.mul_capped(o, None)
    }

    /// Product with an optional per-degree u-adic cap on the result.
    pub fn mul_capped(&self, o: &XSeries<C>, caps: Option<&UCaps>) -> XSeries<C> {
        let (ctx, _) = self.join(o);
        let n = (self.x_order.saturating_add(o.min_degree()))
            .min(o.x_order.saturating_add(self.min_degree()));
        let mut acc: BTreeMap<usize, Poly<C>> = BTreeMap::new();
        for (da, pa) in &self.coeffs {
            let ua = pa.min_u_exp().unwrap_or(0);
            for (db, pb) in &o.coeffs {
                let d = da + db;
                if d >= n {
                    continue;
                }
                let prod = match caps {
                    Some(caps) => {
                        let cap = caps.cap(d);
                        if ua + pb.min_u_exp().unwrap_or(0) >= cap {
                            continue;
                        }
                        pa.mul_u_capped(pb, cap)
                    }
                    None => pa.mul(pb),
                };
                if prod.is_zero() {
                    continue;
                }
                match acc.get_mut(&d) {
                    Some(cur) => *cur = cur.add(&prod),
                    None => {
                        acc.insert(d, prod);
                    }
                }
            }
        }
        acc.retain(|_, p| !p.is_zero());
        XSeries { coeffs: acc, x_order: n, ctx }
    }

    pub fn mul_poly(&self, p: &Poly<C>) -> XSeries<C> {
        self.ctx.assert_same_ring(p.ctx());
        let mut out = XSeries::zero(
            self.ctx.with_u_order(self.ctx.u_order.min(p.ctx().u_order)),
            self.x_order,
        );
        for (d, c) in &self.coeffs {
            out.set_coeff(*d, c.mul(p));
        }
        out
    }

    pub fn mul_scalar(&self, c: &C) -> XSeries<C> {
        let mut out = XSeries::zero(self.ctx, self.x_order);
        for (d, p) in &self.coeffs {
            out.set_coeff(*d, p.mul_scalar(c));
        }
        out
    }

    /// Binary exponentiation; `k = 0` gives the unit series.
    pub fn pow(&self, k: u64) -> XSeries<C> {
        self.pow_capped(k, None)
    }

    /// [`XSeries::pow`] with the per-degree u-adic cap applied to every
    /// intermediate product.
    pub fn pow_capped(&self, k: u64, caps: Option<&UCaps>) -> XSeries<C> {
        if k == 0 {
            return XSeries::from_poly(Poly::one(self.ctx), 0, self.x_order);
        }
        let mut acc: Option<XSeries<C>> = None;
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    Some(a) => a.mul_capped(&base, caps),
                    None => base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_capped(&base, caps);
            }
        }
        acc.unwrap()
    }

    pub fn truncate_x(&self, n: usize) -> XSeries<C> {
        assert!(n >= 1, "series order must be at least 1");
        let n = n.min(self.x_order);
        XSeries {
            coeffs: self
                .coeffs
                .iter()
                .filter(|(d, _)| **d < n)
                .map(|(d, p)| (*d, p.clone()))
                .collect(),
            x_order: n,
            ctx: self.ctx,
        }
    }

    /// Declare a higher order without new information. Only sound when
    /// the caller has a mathematical argument that the missing
    /// coefficients are correct; the doubling step of reversion is the
    /// intended use.
    fn assume_order(&self, n: usize) -> XSeries<C> {
        assert!(n >= self.x_order, "use truncate_x to lower the order");
        XSeries { coeffs: self.coeffs.clone(), x_order: n, ctx: self.ctx }
    }

    pub fn truncate_u(&self, m: u32) -> XSeries<C> {
        let ctx = self.ctx.with_u_order(m.min(self.ctx.u_order));
        let mut coeffs = BTreeMap::new();
        for (d, p) in &self.coeffs {
            let t = p.truncate_u(ctx.u_order);
            if !t.is_zero() {
                coeffs.insert(*d, t);
            }
        }
        XSeries { coeffs, x_order: self.x_order, ctx }
    }

    /// Formal derivative; one order of information is consumed.
    pub fn derivative(&self) -> XSeries<C> {
        assert!(self.x_order >= 2, "cannot differentiate below order 2");
        let mut out = XSeries::zero(self.ctx, self.x_order - 1);
        for (d, p) in &self.coeffs {
            if *d == 0 {
                continue;
            }
            out.set_coeff(*d - 1, p.mul_scalar(&C::from_i64(*d as i64, self.ctx.p)));
        }
        out
    }

    /// Inverse of a series whose constant coefficient is an invertible
    /// scalar constant.
    pub fn inv_unit_const(&self) -> Result<XSeries<C>, SeriesError> {
        let c0 = self.coeff(0);
        let unit_err = || SeriesError::NonUnitCoefficient {
            what: "the constant coefficient of the series to invert".to_string(),
        };
        if !c0.is_constant() {
            return Err(unit_err());
        }
        let c = c0.constant_coeff();
        let cinv = c.inv(self.ctx.p).ok_or_else(unit_err)?;
        let cinv = Poly::constant(cinv, self.ctx);
        let mut out = XSeries::zero(self.ctx, self.x_order);
        out.set_coeff(0, cinv.clone());
        let support: Vec<usize> = self.support().filter(|&d| d > 0).collect();
        for n in 1..self.x_order {
            let mut acc = Poly::zero(self.ctx);
            for &k in support.iter().take_while(|&&k| k <= n) {
                acc = acc.add(&self.coeffs[&k].mul(&out.coeff(n - k)));
            }
            if !acc.is_zero() {
                out.set_coeff(n, acc.mul(&cinv).neg());
            }
        }
        Ok(out)
    }

    /// Serialize with the ring context once at the top.
    pub fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = self
            .coeffs
            .iter()
            .map(|(d, p)| json!({ "degree": d, "terms": p.terms_json() }))
            .collect();
        json!({
            "p": self.ctx.p,
            "h": self.ctx.h,
            "u_order": self.ctx.u_order,
            "x_order": self.x_order,
            "coeffs": coeffs,
        })
    }

    pub fn from_json(v: &Value) -> Result<XSeries<C>, SeriesError> {
        let bad = |msg: &str| SeriesError::BadJson(msg.to_string());
        let p = v.get("p").and_then(Value::as_u64).ok_or_else(|| bad("missing p"))?;
        let h = v.get("h").and_then(Value::as_u64).ok_or_else(|| bad("missing h"))?;
        let m = v
            .get("u_order")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing u_order"))?;
        let n = v
            .get("x_order")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing x_order"))?;
        let ctx = RingCtx::new(p, h as u32, m as u32)
            .map_err(|e| SeriesError::BadJson(e.to_string()))?;
        let coeffs = v
            .get("coeffs")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing coeffs"))?;
        let mut out = XSeries::zero(ctx, n as usize);
        for c in coeffs {
            let d = c
                .get("degree")
                .and_then(Value::as_u64)
                .ok_or_else(|| bad("coefficient missing degree"))?;
            let terms = c.get("terms").ok_or_else(|| bad("coefficient missing terms"))?;
            let poly = Poly::from_terms_json(terms, ctx)
                .map_err(|e: RingError| SeriesError::BadJson(e.to_string()))?;
            out.set_coeff(d as usize, poly);
        }
        Ok(out)
    }
}

impl XSeries<Rat> {
    pub fn reduce_mod_p(&self) -> Result<XSeries<Fp>, crate::scalars::ScalarError> {
        let mut out = XSeries::zero(self.ctx, self.x_order);
        for (d, p) in &self.coeffs {
            out.set_coeff(*d, p.reduce_mod_p()?);
        }
        Ok(out)
    }
}

impl XSeries<Fp> {
    /// The p^j-th power in characteristic p: degrees scale by p^j, and
    /// each coefficient is powered the same way. The tail being unknown
    /// from degree N on means the power is known to N * p^j.
    pub fn p_power(&self, j: u32) -> XSeries<Fp> {
        if j == 0 {
            return self.clone();
        }
        let scale = (self.ctx.p as usize).pow(j);
        let n = self.x_order.saturating_mul(scale);
        let mut coeffs = BTreeMap::new();
        for (d, p) in &self.coeffs {
            // Slices at or above the series' own u-order can never reach
            // a readable coefficient, so drop them here.
            let q = p.p_power(j).truncate_u(self.ctx.u_order);
            if !q.is_zero() {
                coeffs.insert(d * scale, q);
            }
        }
        XSeries { coeffs, x_order: n, ctx: self.ctx }
    }
}

impl<C: Scalar> fmt::Display for XSeries<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (d, p) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})", p)?;
            if *d > 0 {
                write!(f, "*x^{}", d)?;
            }
        }
        Ok(())
    }
}

/// Per-x-degree u-adic caps: degree `d` of a working series only ever
/// feeds tracked coefficients that need u-accuracy `cap(d)`, so higher
/// u-slices can be dropped. Soundness needs the cap to be non-increasing
/// in the degree, because degrees and u-orders both only grow under
/// multiplication.
#[derive(Debug, Clone)]
pub struct UCaps {
    /// `(degree_threshold, cap)` with thresholds strictly increasing and
    /// caps non-increasing; `cap(d)` is the cap of the first threshold
    /// at or above `d`, and the last cap beyond the final threshold.
    breakpoints: Vec<(usize, u32)>,
}

impl UCaps {
    pub fn new(breakpoints: Vec<(usize, u32)>) -> UCaps {
        assert!(!breakpoints.is_empty(), "need at least one cap breakpoint");
        for w in breakpoints.windows(2) {
            assert!(w[0].0 < w[1].0, "cap thresholds must increase");
            assert!(w[0].1 >= w[1].1, "caps must not increase with degree");
        }
        UCaps { breakpoints }
    }

    pub fn cap(&self, d: usize) -> u32 {
        for &(thr, cap) in &self.breakpoints {
            if d <= thr {
                return cap;
            }
        }
        self.breakpoints.last().unwrap().1
    }

    /// Drop u-slices the degree never needs. The declared u-order is left
    /// alone: the result is only meaningful modulo `u^cap(d)`, which is
    /// exactly how the solver reads it.
    pub fn trim<C: Scalar>(&self, d: usize, p: &Poly<C>) -> Poly<C> {
        p.drop_u_from(self.cap(d))
    }
}

/// Substitute `g` into `f` (univariate into univariate). `g` must vanish
/// at the origin. The result is determined to
/// `min(order(g), order(f) * mindeg(g))`.
pub fn compose<C: Scalar>(f: &XSeries<C>, g: &XSeries<C>) -> Result<XSeries<C>, SeriesError> {
    if g.get(0).is_some() {
        return Err(SeriesError::NonzeroConstantTerm {
            what: "the inner series of a composition".to_string(),
        });
    }
    f.ctx.assert_same_ring(&g.ctx);
    let ctx = f.ctx.with_u_order(f.ctx.u_order.min(g.ctx.u_order));
    let w = g.x_order.min(f.x_order.saturating_mul(g.min_degree()));
    let mut support: Vec<usize> = f.support().collect();
    let constant = match support.first() {
        Some(0) => {
            support.remove(0);
            Some(f.coeff(0))
        }
        _ => None,
    };
    let mut acc = XSeries::zero(ctx, w);
    // Horner over the sparse support, highest degree first.
    for (i, &d) in support.iter().enumerate().rev() {
        if i + 1 == support.len() {
            acc = XSeries::from_poly(f.coeff(d), 0, w);
        } else {
            acc = acc.mul(&g.pow((support[i + 1] - d) as u64));
            let mut c = XSeries::from_poly(f.coeff(d), 0, w);
            c = c.add(&acc);
            acc = c;
        }
    }
    if let Some(&d0) = support.first() {
        acc = acc.mul(&g.pow(d0 as u64));
    }
    if let Some(c0) = constant {
        let mut c = XSeries::from_poly(c0, 0, w);
        c = c.add(&acc);
        acc = c;
    }
    Ok(acc.truncate_x(w))
}

/// Compositional inverse of a series `f = a*x + ...` with `a` an
/// invertible scalar: the unique `g` with `f(g(x)) = x`. Newton iteration
/// doubles the correct order each step.
pub fn revert<C: Scalar>(f: &XSeries<C>) -> Result<XSeries<C>, SeriesError> {
    if f.get(0).is_some() {
        return Err(SeriesError::NonzeroConstantTerm {
            what: "a series to revert".to_string(),
        });
    }
    let n = f.x_order;
    let lead = f.coeff(1);
    let unit_err = || SeriesError::NonUnitCoefficient {
        what: "the linear coefficient of a series to revert".to_string(),
    };
    if !lead.is_constant() {
        return Err(unit_err());
    }
    let ainv = lead.constant_coeff().inv(f.ctx.p).ok_or_else(unit_err)?;
    let mut g = XSeries::from_poly(Poly::constant(ainv, f.ctx), 1, 2.min(n));
    if n <= 2 {
        return Ok(g.truncate_x(n));
    }
    let fprime = f.derivative();
    let mut prec = 2usize;
    while prec < n {
        let next = (2 * prec).min(n);
        let gw = g.assume_order(next);
        let fg = compose(&f.truncate_x(next), &gw)?;
        let err = fg.sub(&XSeries::x(f.ctx, next));
        if !err.is_zero() {
            let dg = compose(&fprime, &gw)?;
            let correction = err.mul(&dg.inv_unit_const()?);
            g = gw.sub(&correction).truncate_x(next);
        } else {
            g = gw;
        }
        prec = next;
    }
    Ok(g)
}

/// Coefficient `n` of the compositional inverse of a three-term
/// logarithm `x + L*x^(p^(h-1)) + K*x^(p^h)`, by the closed formula the
/// inversion integral gives: nonzero only at `x`, at the strata
/// `n = i*(p^(h-1) - 1) + 1` for `1 <= i <= p` where it equals
/// `((-1)^i / i) * binom(p^(h-1) * i, i - 1) * L^i`, and at `n = p^h`
/// where it equals `-K`.
///
/// At height 2 the last stratum collides with `p^h`, so only `h > 2` is
/// covered.
pub fn lagrange_b_n(log: &XSeries<Rat>, n: usize) -> Result<Poly<Rat>, SeriesError> {
    let ctx = *log.ctx();
    if ctx.h <= 2 {
        return Err(SeriesError::HeightTooSmall { h: ctx.h });
    }
    let p = ctx.p as usize;
    let q = p.pow(ctx.h - 1);
    let ph = q * p;
    if n == 0 || n > ph {
        return Err(SeriesError::IndexTooLarge { n, max: ph });
    }
    for d in log.support() {
        if d != 1 && d != q && d != ph {
            return Err(SeriesError::UnsupportedLogShape {
                detail: format!("unexpected term at degree {}", d),
            });
        }
    }
    if log.coeff(1) != Poly::one(ctx) {
        return Err(SeriesError::UnsupportedLogShape {
            detail: "linear coefficient must be 1".to_string(),
        });
    }
    if n == 1 {
        return Ok(Poly::one(ctx));
    }
    if n == ph {
        return Ok(log.coeff(ph).neg());
    }
    // Strata n = i*(q-1) + 1 for 1 <= i <= p.
    if n >= 2 && (n - 1) % (q - 1) == 0 {
        let i = (n - 1) / (q - 1);
        if (1..=p).contains(&i) {
            let l = log.coeff(q);
            let b = binom((q * i) as u64, i as i64 - 1);
            let sign = if i % 2 == 0 { 1 } else { -1 };
            let scalar = Rat::new(Int::from(sign) * b, Int::from(i as i64));
            return Ok(l.pow(i as u64).mul_scalar(&scalar));
        }
    }
    Ok(Poly::zero(ctx))
}

/// Bivariate truncated power series; `xy_order` truncates by total
/// degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XYSeries<C: Scalar> {
    coeffs: BTreeMap<(usize, usize), Poly<C>>,
    xy_order: usize,
    ctx: RingCtx,
}

impl<C: Scalar> XYSeries<C> {
    pub fn zero(ctx: RingCtx, xy_order: usize) -> XYSeries<C> {
        assert!(xy_order >= 1, "series order must be at least 1");
        XYSeries { coeffs: BTreeMap::new(), xy_order, ctx }
    }

    pub fn x(ctx: RingCtx, xy_order: usize) -> XYSeries<C> {
        XYSeries::from_poly(Poly::one(ctx), (1, 0), xy_order)
    }

    pub fn y(ctx: RingCtx, xy_order: usize) -> XYSeries<C> {
        XYSeries::from_poly(Poly::one(ctx), (0, 1), xy_order)
    }

    pub fn from_poly(poly: Poly<C>, degree: (usize, usize), xy_order: usize) -> XYSeries<C> {
        let ctx = *poly.ctx();
        let mut s = XYSeries::zero(ctx, xy_order);
        s.set_coeff(degree, poly);
        s
    }

    /// Embed a univariate series along the first variable.
    pub fn embed_x(xs: &XSeries<C>) -> XYSeries<C> {
        let mut out = XYSeries::zero(*xs.ctx(), xs.x_order());
        for (d, p) in xs.iter() {
            out.set_coeff((d, 0), p.clone());
        }
        out
    }

    pub fn ctx(&self) -> &RingCtx {
        &self.ctx
    }

    pub fn xy_order(&self) -> usize {
        self.xy_order
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min_total_degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|(i, j)| i + j)
            .min()
            .unwrap_or(self.xy_order)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &Poly<C>)> {
        self.coeffs.iter().map(|(d, p)| (*d, p))
    }

    pub fn coeff(&self, i: usize, j: usize) -> Poly<C> {
        self.coeffs
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| Poly::zero(self.ctx))
    }

    pub fn set_coeff(&mut self, degree: (usize, usize), poly: Poly<C>) {
        if degree.0 + degree.1 >= self.xy_order {
            return;
        }
        self.ctx.assert_same_ring(poly.ctx());
        let poly = poly.truncate_u(self.ctx.u_order);
        if poly.is_zero() {
            self.coeffs.remove(&degree);
        } else {
            self.coeffs.insert(degree, poly);
        }
    }

    fn join(&self, o: &XYSeries<C>) -> (RingCtx, usize) {
        self.ctx.assert_same_ring(&o.ctx);
        let ctx = self.ctx.with_u_order(self.ctx.u_order.min(o.ctx.u_order));
        (ctx, self.xy_order.min(o.xy_order))
    }

    pub fn add(&self, o: &XYSeries<C>) -> XYSeries<C> {
        let (ctx, n) = self.join(o);
        let mut out = XYSeries::zero(ctx, n);
        for (d, p) in self.coeffs.iter().chain(o.coeffs.iter()) {
            if d.0 + d.1 >= n {
                continue;
            }
            let cur = out.coeff(d.0, d.1);
            out.set_coeff(*d, cur.add(&p.truncate_u(ctx.u_order)));
        }
        out
    }

    pub fn sub(&self, o: &XYSeries<C>) -> XYSeries<C> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> XYSeries<C> {
        XYSeries {
            coeffs: self.coeffs.iter().map(|(d, p)| (*d, p.neg())).collect(),
            xy_order: self.xy_order,
            ctx: self.ctx,
        }
    }

    pub fn mul(&self, o: &XYSeries<C>) -> XYSeries<C> {
        let (ctx, _) = self.join(o);
        let n = (self.xy_order.saturating_add(o.min_total_degree()))
            .min(o.xy_order.saturating_add(self.min_total_degree()));
        let mut acc: BTreeMap<(usize, usize), Poly<C>> = BTreeMap::new();
        for (da, pa) in &self.coeffs {
            for (db, pb) in &o.coeffs {
                let d = (da.0 + db.0, da.1 + db.1);
                if d.0 + d.1 >= n {
                    continue;
                }
                let prod = pa.mul(pb);
                if prod.is_zero() {
                    continue;
                }
                match acc.get_mut(&d) {
                    Some(cur) => *cur = cur.add(&prod),
                    None => {
                        acc.insert(d, prod);
                    }
                }
            }
        }
        acc.retain(|_, p| !p.is_zero());
        XYSeries { coeffs: acc, xy_order: n, ctx }
    }

    pub fn mul_poly(&self, p: &Poly<C>) -> XYSeries<C> {
        self.ctx.assert_same_ring(p.ctx());
        let mut out = XYSeries::zero(
            self.ctx.with_u_order(self.ctx.u_order.min(p.ctx().u_order)),
            self.xy_order,
        );
        for (d, c) in &self.coeffs {
            out.set_coeff(*d, c.mul(p));
        }
        out
    }

    pub fn mul_scalar(&self, c: &C) -> XYSeries<C> {
        let mut out = XYSeries::zero(self.ctx, self.xy_order);
        for (d, p) in &self.coeffs {
            out.set_coeff(*d, p.mul_scalar(c));
        }
        out
    }

    pub fn pow(&self, k: u64) -> XYSeries<C> {
        if k == 0 {
            return XYSeries::from_poly(Poly::one(self.ctx), (0, 0), self.xy_order);
        }
        let mut acc: Option<XYSeries<C>> = None;
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    Some(a) => a.mul(&base),
                    None => base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc.unwrap()
    }

    pub fn truncate_xy(&self, n: usize) -> XYSeries<C> {
        assert!(n >= 1, "series order must be at least 1");
        let n = n.min(self.xy_order);
        XYSeries {
            coeffs: self
                .coeffs
                .iter()
                .filter(|(d, _)| d.0 + d.1 < n)
                .map(|(d, p)| (*d, p.clone()))
                .collect(),
            xy_order: n,
            ctx: self.ctx,
        }
    }

    pub fn swap_xy(&self) -> XYSeries<C> {
        XYSeries {
            coeffs: self.coeffs.iter().map(|(d, p)| ((d.1, d.0), p.clone())).collect(),
            xy_order: self.xy_order,
            ctx: self.ctx,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.swap_xy() == *self
    }

    /// Restrict to the second variable's zero locus.
    pub fn set_y_zero(&self) -> XSeries<C> {
        let mut out = XSeries::zero(self.ctx, self.xy_order);
        for ((i, j), p) in &self.coeffs {
            if *j == 0 {
                out.set_coeff(*i, p.clone());
            }
        }
        out
    }

    /// Keep only coefficient terms of exact u-degree k.
    pub fn u_graded(&self, k: u32) -> XYSeries<C> {
        let mut out = XYSeries::zero(self.ctx, self.xy_order);
        for (d, p) in &self.coeffs {
            out.set_coeff(*d, p.u_graded(k));
        }
        out
    }

    pub fn max_u_exp(&self) -> Option<u32> {
        self.coeffs.values().filter_map(|p| p.max_u_exp()).max()
    }

    pub fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = self
            .coeffs
            .iter()
            .map(|(d, p)| json!({ "degree": [d.0, d.1], "terms": p.terms_json() }))
            .collect();
        json!({
            "p": self.ctx.p,
            "h": self.ctx.h,
            "u_order": self.ctx.u_order,
            "xy_order": self.xy_order,
            "coeffs": coeffs,
        })
    }

    pub fn from_json(v: &Value) -> Result<XYSeries<C>, SeriesError> {
        let bad = |msg: &str| SeriesError::BadJson(msg.to_string());
        let p = v.get("p").and_then(Value::as_u64).ok_or_else(|| bad("missing p"))?;
        let h = v.get("h").and_then(Value::as_u64).ok_or_else(|| bad("missing h"))?;
        let m = v
            .get("u_order")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing u_order"))?;
        let n = v
            .get("xy_order")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing xy_order"))?;
        let ctx = RingCtx::new(p, h as u32, m as u32)
            .map_err(|e| SeriesError::BadJson(e.to_string()))?;
        let coeffs = v
            .get("coeffs")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing coeffs"))?;
        let mut out = XYSeries::zero(ctx, n as usize);
        for c in coeffs {
            let d = c
                .get("degree")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 2)
                .ok_or_else(|| bad("coefficient degree must be [i, j]"))?;
            let i = d[0].as_u64().ok_or_else(|| bad("bad degree"))? as usize;
            let j = d[1].as_u64().ok_or_else(|| bad("bad degree"))? as usize;
            let terms = c.get("terms").ok_or_else(|| bad("coefficient missing terms"))?;
            let poly = Poly::from_terms_json(terms, ctx)
                .map_err(|e: RingError| SeriesError::BadJson(e.to_string()))?;
            out.set_coeff((i, j), poly);
        }
        Ok(out)
    }
}

impl XYSeries<Rat> {
    pub fn reduce_mod_p(&self) -> Result<XYSeries<Fp>, crate::scalars::ScalarError> {
        let mut out = XYSeries::zero(self.ctx, self.xy_order);
        for (d, p) in &self.coeffs {
            out.set_coeff(*d, p.reduce_mod_p()?);
        }
        Ok(out)
    }
}

impl XYSeries<Fp> {
    /// See [`XSeries::p_power`].
    pub fn p_power(&self, j: u32) -> XYSeries<Fp> {
        if j == 0 {
            return self.clone();
        }
        let scale = (self.ctx.p as usize).pow(j);
        let n = self.xy_order.saturating_mul(scale);
        let mut coeffs = BTreeMap::new();
        for (d, p) in &self.coeffs {
            let q = p.p_power(j).truncate_u(self.ctx.u_order);
            if !q.is_zero() {
                coeffs.insert((d.0 * scale, d.1 * scale), q);
            }
        }
        XYSeries { coeffs, xy_order: n, ctx: self.ctx }
    }
}

/// Evaluate a bivariate series on a pair of univariate series, both
/// vanishing at the origin. The result is determined to
/// `min(order(a), order(b), xy_order(f) * min(mindeg(a), mindeg(b)))`.
pub fn eval<C: Scalar>(
    f: &XYSeries<C>,
    a: &XSeries<C>,
    b: &XSeries<C>,
) -> Result<XSeries<C>, SeriesError> {
    eval_capped(f, a, b, None)
}

/// [`eval`] with a per-degree u-adic cap applied to every intermediate.
pub fn eval_capped<C: Scalar>(
    f: &XYSeries<C>,
    a: &XSeries<C>,
    b: &XSeries<C>,
    caps: Option<&UCaps>,
) -> Result<XSeries<C>, SeriesError> {
    for (s, name) in [(a, "the first"), (b, "the second")] {
        if s.get(0).is_some() {
            return Err(SeriesError::NonzeroConstantTerm {
                what: format!("{} argument of a bivariate evaluation", name),
            });
        }
    }
    f.ctx.assert_same_ring(a.ctx());
    f.ctx.assert_same_ring(b.ctx());
    let ctx = f
        .ctx
        .with_u_order(f.ctx.u_order.min(a.ctx().u_order).min(b.ctx().u_order));
    let w = a
        .x_order()
        .min(b.x_order())
        .min(f.xy_order.saturating_mul(a.min_degree().min(b.min_degree())));
    if f.is_zero() {
        return Ok(XSeries::zero(ctx, w));
    }
    // Group terms by the first exponent; per group, accumulate the
    // polynomial-weighted powers of b, then multiply by a^i once.
    let mut by_i: BTreeMap<usize, Vec<(usize, &Poly<C>)>> = BTreeMap::new();
    for ((i, j), p) in f.iter() {
        by_i.entry(i).or_default().push((j, p));
    }
    let mut b_pows: BTreeMap<usize, XSeries<C>> = BTreeMap::new();
    let mut needed_j: Vec<usize> = f.iter().map(|((_, j), _)| j).collect();
    needed_j.sort_unstable();
    needed_j.dedup();
    {
        let mut cur: Option<(usize, XSeries<C>)> = None;
        for &j in &needed_j {
            if j == 0 {
                continue;
            }
            // Powers of b past the truncation can never contribute.
            if j.saturating_mul(b.min_degree()) >= w {
                break;
            }
            let next = match &cur {
                None => b.pow_capped(j as u64, caps),
                Some((e, s)) => s.mul_capped(&b.pow_capped((j - e) as u64, caps), caps),
            };
            b_pows.insert(j, next.clone());
            cur = Some((j, next));
        }
    }
    let a_min = a.min_degree();
    let mut out = XSeries::zero(ctx, w);
    let mut a_cur: Option<(usize, XSeries<C>)> = None;
    for (i, terms) in by_i {
        // Contributions of this row start at degree i * a_min.
        let room = w.saturating_sub(i.saturating_mul(a_min));
        if room == 0 {
            break;
        }
        let mut inner = XSeries::zero(ctx, room);
        for (j, p) in terms {
            let contrib = if j == 0 {
                XSeries::from_poly((*p).clone(), 0, room)
            } else {
                match b_pows.get(&j) {
                    Some(bj) => bj.truncate_x(room.min(bj.x_order())).mul_poly(p),
                    None => continue,
                }
            };
            inner = inner.add(&contrib);
        }
        if inner.is_zero() {
            continue;
        }
        let inner = XSeries { coeffs: inner.coeffs, x_order: w, ctx };
        let with_a = if i == 0 {
            inner
        } else {
            let a_i = match &a_cur {
                None => a.pow_capped(i as u64, caps),
                Some((e, s)) => {
                    if i == *e {
                        s.clone()
                    } else {
                        s.mul_capped(&a.pow_capped((i - e) as u64, caps), caps)
                    }
                }
            };
            a_cur = Some((i, a_i.clone()));
            a_i.mul_capped(&inner, caps)
        };
        out = out.add(&with_a);
    }
    Ok(out.truncate_x(w))
}

/// Substitute a bivariate argument into a univariate series. The
/// argument must vanish at the origin.
pub fn eval_xy<C: Scalar>(
    f: &XSeries<C>,
    arg: &XYSeries<C>,
) -> Result<XYSeries<C>, SeriesError> {
    if arg.coeffs.contains_key(&(0, 0)) {
        return Err(SeriesError::NonzeroConstantTerm {
            what: "the argument of a substitution".to_string(),
        });
    }
    f.ctx.assert_same_ring(&arg.ctx);
    let ctx = f.ctx.with_u_order(f.ctx.u_order.min(arg.ctx.u_order));
    let w = arg
        .xy_order
        .min(f.x_order().saturating_mul(arg.min_total_degree()));
    let mut support: Vec<usize> = f.support().collect();
    let constant = match support.first() {
        Some(0) => {
            support.remove(0);
            Some(f.coeff(0))
        }
        _ => None,
    };
    let mut acc = XYSeries::zero(ctx, w);
    for (i, &d) in support.iter().enumerate().rev() {
        if i + 1 == support.len() {
            acc = XYSeries::from_poly(f.coeff(d), (0, 0), w);
        } else {
            acc = acc.mul(&arg.pow((support[i + 1] - d) as u64));
            acc = XYSeries::from_poly(f.coeff(d), (0, 0), w).add(&acc);
        }
    }
    if let Some(&d0) = support.first() {
        acc = acc.mul(&arg.pow(d0 as u64));
    }
    if let Some(c0) = constant {
        acc = XYSeries::from_poly(c0, (0, 0), w).add(&acc);
    }
    Ok(acc.truncate_xy(w))
}

/// Left fold of a formal group law over a list of summands, all
/// vanishing at the origin.
pub fn fgl_sum<C: Scalar>(
    f: &XYSeries<C>,
    terms: &[XSeries<C>],
) -> Result<XSeries<C>, SeriesError> {
    let mut iter = terms.iter();
    let first = iter.next().ok_or(SeriesError::EmptySum)?;
    let mut acc = first.clone();
    if acc.get(0).is_some() {
        return Err(SeriesError::NonzeroConstantTerm {
            what: "a formal group summand".to_string(),
        });
    }
    for t in iter {
        acc = eval(f, &acc, t)?;
    }
    Ok(acc)
}

/// The symmetric integer-coefficient form
/// `((a + b)^(p^n) - a^(p^n) - b^(p^n)) / p`.
///
/// When both arguments are single terms the binomial row is generated
/// directly with exact division, which keeps large `p^n` cheap; general
/// arguments fall back to powering.
pub fn c_pn(n: u32, a: &XYSeries<Rat>, b: &XYSeries<Rat>) -> XYSeries<Rat> {
    let (ctx, _) = a.join(b);
    let p = ctx.p;
    let pn = p.pow(n);
    let single = |s: &XYSeries<Rat>| -> Option<((usize, usize), Poly<Rat>)> {
        let mut it = s.coeffs.iter();
        match (it.next(), it.next()) {
            (Some((d, c)), None) => Some((*d, c.clone())),
            _ => None,
        }
    };
    if let (Some((da, ca)), Some((db, cb))) = (single(a), single(b)) {
        let order = a.xy_order.min(b.xy_order);
        let mut out = XYSeries::zero(ctx, order);
        // Rolling binomial row over k = 1..p^n-1; ends are cancelled.
        let mut row = Int::from(1u32);
        for k in 1..pn {
            row = row * Int::from(pn - k + 1) / Int::from(k);
            let coeff = rat_from_int(row.clone() / Int::from(p));
            let ck = ca.pow(k).mul(&cb.pow(pn - k)).mul_scalar(&coeff);
            let deg = (
                da.0 * k as usize + db.0 * (pn - k) as usize,
                da.1 * k as usize + db.1 * (pn - k) as usize,
            );
            if ck.is_zero() {
                continue;
            }
            let cur = out.coeff(deg.0, deg.1);
            out.set_coeff(deg, cur.add(&ck));
        }
        return out;
    }
    let sum_pow = a.add(b).pow(pn);
    let diff = sum_pow.sub(&a.pow(pn)).sub(&b.pow(pn));
    diff.mul_scalar(&Rat::new(Int::from(1), Int::from(p)))
}

impl<C: Scalar> fmt::Display for XYSeries<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((i, j), p) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})", p)?;
            if *i > 0 {
                write!(f, "*x^{}", i)?;
            }
            if *j > 0 {
                write!(f, "*y^{}", j)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyring::VarId;
    use crate::scalars::{int_pow, rat};

    fn ctx33(m: u32) -> RingCtx {
        RingCtx::new(3, 3, m).unwrap()
    }

    fn xs_rat(ctx: RingCtx, n: usize, terms: &[(usize, Rat)]) -> XSeries<Rat> {
        let mut s = XSeries::zero(ctx, n);
        for (d, c) in terms {
            s.set_coeff(*d, Poly::constant(c.clone(), ctx));
        }
        s
    }

    #[test]
    fn multiplication_tracks_sharp_order() {
        let ctx = ctx33(4);
        let x = XSeries::<Rat>::x(ctx, 5);
        let f = x.add(&x.pow(2));
        // x * (x + x^2): both factors have min degree 1, orders 6 and 5.
        let prod = x.mul(&f);
        assert_eq!(prod.x_order(), 6);
        assert_eq!(prod.coeff(2), Poly::one(ctx));
        assert_eq!(prod.coeff(3), Poly::one(ctx));
        // pow through squaring: (x + x^2)^2 = x^2 + 2x^3 + x^4.
        let sq = f.pow(2);
        assert_eq!(sq.coeff(3), Poly::constant(rat(2, 1), ctx));
        assert_eq!(sq.coeff(4), Poly::one(ctx));
    }

    #[test]
    fn geometric_series_inverse() {
        let ctx = ctx33(4);
        let one_minus_x = xs_rat(ctx, 6, &[(0, rat(1, 1)), (1, rat(-1, 1))]);
        let inv = one_minus_x.inv_unit_const().unwrap();
        for d in 0..6 {
            assert_eq!(inv.coeff(d), Poly::one(ctx), "degree {}", d);
        }
        assert!(one_minus_x.mul(&inv).truncate_x(6).sub(&xs_rat(ctx, 6, &[(0, rat(1, 1))])).is_zero());
        // Non-unit constants are refused.
        let x = XSeries::<Rat>::x(ctx, 6);
        assert!(matches!(
            x.inv_unit_const(),
            Err(SeriesError::NonUnitCoefficient { .. })
        ));
    }

    #[test]
    fn composition_substitutes() {
        let ctx = ctx33(4);
        // f = x + x^3, g = x^2  =>  f(g) = x^2 + x^6
        let x = XSeries::<Rat>::x(ctx, 9);
        let f = x.add(&x.pow(3));
        let g = x.pow(2);
        let fg = compose(&f, &g).unwrap();
        assert_eq!(fg.coeff(2), Poly::one(ctx));
        assert_eq!(fg.coeff(6), Poly::one(ctx));
        assert_eq!(fg.support().count(), 2);
        // Constant inner series are refused.
        let c = xs_rat(ctx, 9, &[(0, rat(1, 1))]);
        assert!(matches!(
            compose(&f, &c),
            Err(SeriesError::NonzeroConstantTerm { .. })
        ));
    }

    #[test]
    fn reversion_catalan_numbers() {
        let ctx = ctx33(4);
        let x = XSeries::<Rat>::x(ctx, 6);
        let f = x.add(&x.pow(2));
        let g = revert(&f).unwrap();
        let want = xs_rat(
            ctx,
            6,
            &[
                (1, rat(1, 1)),
                (2, rat(-1, 1)),
                (3, rat(2, 1)),
                (4, rat(-5, 1)),
                (5, rat(14, 1)),
            ],
        );
        assert_eq!(g, want);
        // Round trips both ways.
        let fg = compose(&f, &g).unwrap();
        assert_eq!(fg, XSeries::x(ctx, 6));
        let gf = compose(&g, &f).unwrap();
        assert_eq!(gf, XSeries::x(ctx, 6));
    }

    #[test]
    fn derivative_shifts_degrees() {
        let ctx = ctx33(4);
        let x = XSeries::<Rat>::x(ctx, 6);
        let f = x.pow(3).mul_scalar(&rat(2, 1)).add(&x);
        let d = f.derivative();
        assert_eq!(d.x_order(), 5);
        assert_eq!(d.coeff(0), Poly::one(ctx));
        assert_eq!(d.coeff(2), Poly::constant(rat(6, 1), ctx));
    }

    fn three_term_log(ctx: RingCtx, n: usize) -> XSeries<Rat> {
        // x + L*x^9 + K*x^27 with L = u/(3 - 3^9), K = 1/(3 - 3^27).
        let l_scalar = Rat::new(Int::from(1), Int::from(3) - int_pow(3, 9));
        let k_scalar = Rat::new(Int::from(1), Int::from(3) - int_pow(3, 27));
        let mut log = XSeries::zero(ctx, n);
        log.set_coeff(1, Poly::one(ctx));
        log.set_coeff(9, Poly::var(VarId::U, ctx).mul_scalar(&l_scalar));
        log.set_coeff(27, Poly::constant(k_scalar, ctx));
        log
    }

    #[test]
    fn inversion_coefficients_match_reversion() {
        let ctx = ctx33(10);
        let log = three_term_log(ctx, 28);
        let g = revert(&log).unwrap();
        for n in 1..28 {
            let b = lagrange_b_n(&log, n).unwrap();
            assert_eq!(b, g.coeff(n), "coefficient {}", n);
        }
        // Spot values: the strata carry powers of the x^9 coefficient.
        let l = log.coeff(9);
        assert_eq!(lagrange_b_n(&log, 9).unwrap(), l.neg());
        assert_eq!(
            lagrange_b_n(&log, 17).unwrap(),
            l.pow(2).mul_scalar(&rat(9, 1))
        );
        assert_eq!(
            lagrange_b_n(&log, 25).unwrap(),
            l.pow(3).mul_scalar(&rat(-117, 1))
        );
        assert_eq!(lagrange_b_n(&log, 27).unwrap(), log.coeff(27).neg());
        assert!(lagrange_b_n(&log, 2).unwrap().is_zero());
        assert!(lagrange_b_n(&log, 26).unwrap().is_zero());
    }

    #[test]
    fn inversion_coefficient_guards() {
        let ctx = ctx33(10);
        let log = three_term_log(ctx, 28);
        assert!(matches!(
            lagrange_b_n(&log, 28),
            Err(SeriesError::IndexTooLarge { .. })
        ));
        let ctx2 = RingCtx::new(3, 2, 10).unwrap();
        let log2 = XSeries::<Rat>::x(ctx2, 10);
        assert!(matches!(
            lagrange_b_n(&log2, 1),
            Err(SeriesError::HeightTooSmall { .. })
        ));
        let mut bad = three_term_log(ctx, 28);
        bad.set_coeff(2, Poly::one(ctx));
        assert!(matches!(
            lagrange_b_n(&bad, 1),
            Err(SeriesError::UnsupportedLogShape { .. })
        ));
        let mut scaled = three_term_log(ctx, 28);
        scaled.set_coeff(1, Poly::constant(rat(2, 1), ctx));
        assert!(matches!(
            lagrange_b_n(&scaled, 1),
            Err(SeriesError::UnsupportedLogShape { .. })
        ));
    }

    #[test]
    fn bivariate_evaluation() {
        let ctx = ctx33(4);
        // f = x + y + x*y on a = x, b = x^2: x + x^2 + x^3.
        let mut f = XYSeries::<Rat>::x(ctx, 10).add(&XYSeries::y(ctx, 10));
        f.set_coeff((1, 1), Poly::one(ctx));
        let a = XSeries::<Rat>::x(ctx, 10);
        let b = a.pow(2);
        let got = eval(&f, &a, &b).unwrap();
        assert_eq!(got.coeff(1), Poly::one(ctx));
        assert_eq!(got.coeff(2), Poly::one(ctx));
        assert_eq!(got.coeff(3), Poly::one(ctx));
        assert_eq!(got.support().count(), 3);
        // Formal sum over x + y + xy is Horner-consistent.
        let s = fgl_sum(&f, &[a.clone(), b.clone(), a.pow(3)]).unwrap();
        let step = eval(&f, &eval(&f, &a, &b).unwrap(), &a.pow(3)).unwrap();
        assert_eq!(s, step);
        assert!(matches!(fgl_sum::<Rat>(&f, &[]), Err(SeriesError::EmptySum)));
    }

    #[test]
    fn substitution_of_bivariate_argument() {
        let ctx = ctx33(4);
        // f = x - x^2, arg = x + y: coefficient of xy is -2.
        let x = XSeries::<Rat>::x(ctx, 8);
        let f = x.sub(&x.pow(2));
        let arg = XYSeries::<Rat>::x(ctx, 8).add(&XYSeries::y(ctx, 8));
        let got = eval_xy(&f, &arg).unwrap();
        assert_eq!(got.coeff(1, 0), Poly::one(ctx));
        assert_eq!(got.coeff(0, 1), Poly::one(ctx));
        assert_eq!(got.coeff(1, 1), Poly::constant(rat(-2, 1), ctx));
        assert_eq!(got.coeff(2, 0), Poly::constant(rat(-1, 1), ctx));
        assert!(got.is_symmetric());
    }

    #[test]
    fn symmetric_integer_form() {
        let ctx = ctx33(4);
        let x = XYSeries::<Rat>::x(ctx, 30);
        let y = XYSeries::<Rat>::y(ctx, 30);
        // C at n=1 is x^2 y + x y^2 for p = 3.
        let c3 = c_pn(1, &x, &y);
        assert_eq!(c3.coeff(2, 1), Poly::one(ctx));
        assert_eq!(c3.coeff(1, 2), Poly::one(ctx));
        assert_eq!(c3.iter().count(), 2);
        // The general route agrees with the single-term fast path.
        let two_term = x.add(&XYSeries::zero(ctx, 30));
        let slow = c_pn(1, &two_term, &y);
        assert_eq!(slow, c3);
        // n=2: coefficient of x y^8 is binom(9,1)/3 = 3.
        let c9 = c_pn(2, &x, &y);
        assert_eq!(c9.coeff(1, 8), Poly::constant(rat(3, 1), ctx));
        assert_eq!(c9.coeff(3, 6), Poly::constant(rat(28, 1), ctx));
        assert!(c9.is_symmetric());
    }

    #[test]
    fn characteristic_p_powers() {
        let ctx = ctx33(30);
        let u = Poly::<Fp>::var(VarId::U, ctx);
        let s = XSeries::from_poly(u.clone(), 2, 5);
        let cubed = s.p_power(1);
        assert_eq!(cubed.x_order(), 15);
        assert_eq!(cubed.coeff(6), u.pow(3));
        // Agrees with plain powering where both are defined.
        assert_eq!(s.pow(3).coeff(6), u.pow(3));
        let xy = XYSeries::from_poly(u, (1, 1), 5);
        let xyc = xy.p_power(1);
        assert_eq!(xyc.xy_order(), 15);
        assert!(!xyc.coeff(3, 3).is_zero());
    }

    #[test]
    fn per_degree_caps_trim_high_u_slices() {
        let caps = UCaps::new(vec![(27, 22), (81, 10), (243, 4)]);
        assert_eq!(caps.cap(1), 22);
        assert_eq!(caps.cap(27), 22);
        assert_eq!(caps.cap(28), 10);
        assert_eq!(caps.cap(100), 4);
        assert_eq!(caps.cap(9999), 4);
        let ctx = ctx33(30);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let p = Poly::one(ctx).add(&u.pow(5)).add(&u.pow(15));
        let trimmed = caps.trim(100, &p);
        assert_eq!(trimmed, Poly::one(ctx).truncate_u(30));
        assert_eq!(trimmed.ctx().u_order, 30);
        let a = XSeries::from_poly(p.clone(), 50, 300);
        let b = XSeries::from_poly(u.pow(2), 51, 300);
        let capped = a.mul_capped(&b, Some(&caps));
        // 101 falls in the cap-4 band: u^2 * (1 + u^5 + u^15) keeps u^2 only.
        assert_eq!(capped.coeff(101), u.pow(2));
    }

    #[test]
    fn json_round_trips() {
        let ctx = ctx33(9);
        let log = three_term_log(ctx, 28);
        let v = log.to_json();
        assert_eq!(XSeries::<Rat>::from_json(&v).unwrap(), log);
        let mut f = XYSeries::<Rat>::x(ctx, 10);
        f.set_coeff((2, 3), Poly::var(VarId::G(1), ctx).mul_scalar(&rat(-1, 2)));
        let v = f.to_json();
        assert_eq!(XYSeries::<Rat>::from_json(&v).unwrap(), f);
        assert!(XSeries::<Rat>::from_json(&json!({"p": 3})).is_err());
    }
}
