//! Sparse multivariate polynomials over an exact scalar domain.
//!
//! The variable set is fixed by the ring context: one deformation
//! parameter `u` and the unit coordinates `g0, ..., gh`. Polynomials are
//! always truncated in `u`: a context carries `u_order = M` and every
//! operation discards terms of u-degree `>= M`. Exponents of the `g`
//! variables are kept reduced under the field relation `g^(p^h) = g`,
//! i.e. inside `[1, p^h - 1]` (or zero).
//!
//! Terms live in a sorted map keyed by packed exponent vectors, which
//! fixes a deterministic term order (u-degree first, then `g0, g1, ...`).

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use crate::scalars::{is_prime, Fp, Rat, Scalar, ScalarError};
use crate::scalars::{p_valuation, PadicVal};

/// Largest supported height.
pub const MAX_H: u32 = 10;
/// Packed exponent-vector width: `u` plus `g0..g10`.
pub const VAR_SLOTS: usize = 12;
/// Largest supported u-adic truncation order.
pub const MAX_U_ORDER: u32 = 30000;

/// Errors from ring construction and deserialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RingError {
    /// The characteristic must be prime.
    NotPrime { p: u64 },
    /// The height must lie in `1..=MAX_H`.
    BadHeight { h: u32 },
    /// `p^h` must fit in the packed exponent width.
    FieldTooLarge { p: u64, h: u32 },
    /// The u-adic order must lie in `1..=MAX_U_ORDER`.
    BadOrder { u_order: u32 },
    /// Malformed serialized form.
    BadJson(String),
}

impl fmt::Display for RingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RingError::NotPrime { p } => write!(f, "{} is not prime", p),
            RingError::BadHeight { h } => {
                write!(f, "height {} outside supported range 1..={}", h, MAX_H)
            }
            RingError::FieldTooLarge { p, h } => {
                write!(f, "p^h too large for packed exponents (p={}, h={})", p, h)
            }
            RingError::BadOrder { u_order } => {
                write!(f, "u-adic order {} outside 1..={}", u_order, MAX_U_ORDER)
            }
            RingError::BadJson(msg) => write!(f, "bad ring JSON: {}", msg),
        }
    }
}

impl std::error::Error for RingError {}

/// Immutable description of the ambient ring: the prime, the height, the
/// u-adic truncation order, and the cached field size `p^h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingCtx {
    pub p: u64,
    pub h: u32,
    pub u_order: u32,
    /// `p^h`, cached for exponent reduction.
    pub ph: u64,
}

impl RingCtx {
    pub fn new(p: u64, h: u32, u_order: u32) -> Result<RingCtx, RingError> {
        if !is_prime(p) {
            return Err(RingError::NotPrime { p });
        }
        if h == 0 || h > MAX_H {
            return Err(RingError::BadHeight { h });
        }
        let ph = p.checked_pow(h).filter(|&v| v <= 65536);
        let ph = match ph {
            Some(v) => v,
            None => return Err(RingError::FieldTooLarge { p, h }),
        };
        if u_order == 0 || u_order > MAX_U_ORDER {
            return Err(RingError::BadOrder { u_order });
        }
        Ok(RingCtx { p, h, u_order, ph })
    }

    /// Same ring up to truncation order, with len `u_order = m`.
    pub fn with_u_order(self, m: u32) -> RingCtx {
        assert!(m >= 1 && m <= MAX_U_ORDER, "u-adic order {} out of range", m);
        RingCtx { u_order: m, ..self }
    }

    /// Panics unless both contexts share prime and height.
    pub fn assert_same_ring(&self, other: &RingCtx) {
        assert!(
            self.p == other.p && self.h == other.h,
            "cannot combine elements of different rings (p={}, h={} vs p={}, h={})",
            self.p,
            self.h,
            other.p,
            other.h
        );
    }

    /// Number of live variables: `u` and `g0..gh`.
    pub fn var_count(&self) -> usize {
        self.h as usize + 2
    }
}

/// A variable of the ring: the deformation parameter or a unit coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarId {
    U,
    G(u8),
}

impl VarId {
    /// Slot in the packed exponent vector.
    pub fn slot(self) -> usize {
        match self {
            VarId::U => 0,
            VarId::G(i) => 1 + i as usize,
        }
    }

    pub fn name(self) -> String {
        match self {
            VarId::U => "u".to_string(),
            VarId::G(i) => format!("g{}", i),
        }
    }

    pub fn parse(s: &str) -> Option<VarId> {
        if s == "u" {
            return Some(VarId::U);
        }
        let idx: u8 = s.strip_prefix('g')?.parse().ok()?;
        if idx as u32 > MAX_H {
            return None;
        }
        Some(VarId::G(idx))
    }
}

/// Reduce a unit-coordinate exponent under `g^(p^h) = g`: exponents at or
/// above `p^h` fold into `[1, p^h - 1]`, small exponents are untouched.
pub fn g_reduce(e: u64, p: u64, h: u32) -> u64 {
    let ph = p.pow(h);
    g_reduce_ph(e, ph)
}

#[inline]
fn g_reduce_ph(e: u64, ph: u64) -> u64 {
    if e < ph {
        e
    } else {
        (e - 1) % (ph - 1) + 1
    }
}

/// Packed exponent vector: slot 0 is the u-exponent, slots `1..` the unit
/// coordinates. Derived ordering is exponent-lexicographic, so terms sort
/// by u-degree first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    exps: [u16; VAR_SLOTS],
}

impl Monomial {
    pub fn one() -> Monomial {
        Monomial { exps: [0; VAR_SLOTS] }
    }

    /// Single-variable monomial; unit-coordinate exponents are reduced.
    pub fn var(v: VarId, e: u64, ctx: &RingCtx) -> Monomial {
        let mut m = Monomial::one();
        let e = match v {
            VarId::U => e,
            VarId::G(i) => {
                assert!(
                    (i as u32) <= ctx.h,
                    "unit coordinate g{} outside height {}",
                    i,
                    ctx.h
                );
                g_reduce_ph(e, ctx.ph)
            }
        };
        assert!(e <= u16::MAX as u64, "exponent {} does not pack", e);
        m.exps[v.slot()] = e as u16;
        m
    }

    pub fn u_exp(&self) -> u32 {
        self.exps[0] as u32
    }

    pub fn exp(&self, v: VarId) -> u32 {
        self.exps[v.slot()] as u32
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    /// Smallest monomial of u-degree `e`: the exclusive range bound for
    /// "every monomial of u-degree below `e`" (monomials sort by
    /// u-degree first).
    fn u_floor(e: u32) -> Monomial {
        let mut m = Monomial::one();
        m.exps[0] = e.min(u16::MAX as u32) as u16;
        m
    }

    /// Strictly positive exponents with their variables, in slot order.
    pub fn factors(&self) -> Vec<(VarId, u32)> {
        let mut out = Vec::new();
        if self.exps[0] > 0 {
            out.push((VarId::U, self.exps[0] as u32));
        }
        for i in 1..VAR_SLOTS {
            if self.exps[i] > 0 {
                out.push((VarId::G((i - 1) as u8), self.exps[i] as u32));
            }
        }
        out
    }

    /// Product, or `None` when the u-degree falls outside the truncation
    /// order. Unit-coordinate exponents reduce.
    pub fn mul_checked(&self, o: &Monomial, ctx: &RingCtx) -> Option<Monomial> {
        let u = self.exps[0] as u64 + o.exps[0] as u64;
        if u >= ctx.u_order as u64 {
            return None;
        }
        let mut m = Monomial::one();
        m.exps[0] = u as u16;
        for i in 1..VAR_SLOTS {
            let e = g_reduce_ph(self.exps[i] as u64 + o.exps[i] as u64, ctx.ph);
            m.exps[i] = e as u16;
        }
        Some(m)
    }

    /// k-th power, or `None` when truncated away in u.
    pub fn pow_checked(&self, k: u64, ctx: &RingCtx) -> Option<Monomial> {
        let u = self.exps[0] as u64 * k;
        if u >= ctx.u_order as u64 {
            return None;
        }
        let mut m = Monomial::one();
        m.exps[0] = u as u16;
        for i in 1..VAR_SLOTS {
            let e = g_reduce_ph(self.exps[i] as u64 * k, ctx.ph);
            m.exps[i] = e as u16;
        }
        Some(m)
    }

    fn display_factors(&self) -> String {
        self.factors()
            .iter()
            .map(|&(v, e)| {
                if e == 1 {
                    v.name()
                } else {
                    format!("{}^{}", v.name(), e)
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// Sparse polynomial in `u, g0, ..., gh` over an exact scalar domain,
/// truncated at `u^u_order`. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly<C: Scalar> {
    terms: BTreeMap<Monomial, C>,
    ctx: RingCtx,
}

impl<C: Scalar> Poly<C> {
    pub fn zero(ctx: RingCtx) -> Poly<C> {
        Poly { terms: BTreeMap::new(), ctx }
    }

    pub fn one(ctx: RingCtx) -> Poly<C> {
        Poly::constant(C::one(), ctx)
    }

    pub fn constant(c: C, ctx: RingCtx) -> Poly<C> {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        Poly { terms, ctx }
    }

    pub fn from_i64(n: i64, ctx: RingCtx) -> Poly<C> {
        Poly::constant(C::from_i64(n, ctx.p), ctx)
    }

    /// The variable itself; zero when `u` falls outside a u-order-1 ring.
    pub fn var(v: VarId, ctx: RingCtx) -> Poly<C> {
        Poly::monomial(C::one(), Monomial::var(v, 1, &ctx), ctx)
    }

    pub fn var_pow(v: VarId, e: u64, ctx: RingCtx) -> Poly<C> {
        Poly::monomial(C::one(), Monomial::var(v, e, &ctx), ctx)
    }

    pub fn monomial(c: C, m: Monomial, ctx: RingCtx) -> Poly<C> {
        let mut terms = BTreeMap::new();
        if !c.is_zero() && (m.u_exp() as u64) < ctx.u_order as u64 {
            terms.insert(m, c);
        }
        Poly { terms, ctx }
    }

    pub fn ctx(&self) -> &RingCtx {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    pub fn get(&self, m: &Monomial) -> Option<&C> {
        self.terms.get(m)
    }

    pub fn constant_coeff(&self) -> C {
        self.coeff(&Monomial::one())
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn set_term(&mut self, m: Monomial, c: C) {
        if (m.u_exp() as u64) >= self.ctx.u_order as u64 {
            return;
        }
        if c.is_zero() {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, c);
        }
    }

    fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        let p = self.ctx.p;
        let entry = self.terms.entry(m).or_insert_with(C::zero);
        *entry = entry.add(&c, p);
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    /// Shared context for a binary operation: prime and height must agree
    /// (panic otherwise), truncation orders meet at the minimum.
    fn join_ctx(&self, o: &Poly<C>) -> RingCtx {
        self.ctx.assert_same_ring(&o.ctx);
        self.ctx.with_u_order(self.ctx.u_order.min(o.ctx.u_order))
    }

    pub fn add(&self, o: &Poly<C>) -> Poly<C> {
        let ctx = self.join_ctx(o);
        let mut out = Poly::zero(ctx);
        for (m, c) in self.terms.iter().chain(o.terms.iter()) {
            if (m.u_exp() as u64) < ctx.u_order as u64 {
                out.add_term(*m, c.clone());
            }
        }
        out
    }

    pub fn sub(&self, o: &Poly<C>) -> Poly<C> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Poly<C> {
        let p = self.ctx.p;
        Poly {
            terms: self.terms.iter().map(|(m, c)| (*m, c.neg(p))).collect(),
            ctx: self.ctx,
        }
    }

    pub fn mul(&self, o: &Poly<C>) -> Poly<C> {
        let ctx = self.join_ctx(o);
        let p = ctx.p;
        let mut acc: BTreeMap<Monomial, C> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                let m = match ma.mul_checked(mb, &ctx) {
                    Some(m) => m,
                    None => continue,
                };
                let prod = ca.mul(cb, p);
                if prod.is_zero() {
                    continue;
                }
                let entry = acc.entry(m).or_insert_with(C::zero);
                *entry = entry.add(&prod, p);
            }
        }
        acc.retain(|_, c| !c.is_zero());
        Poly { terms: acc, ctx }
    }

    /// Product modulo `u^cap`: term pairs whose u-degrees already sum to
    /// the cap are skipped before multiplying. Because monomials sort by
    /// u-degree first, both scans stop early. Equivalent to
    /// `self.mul(o).drop_u_from(cap)`.
    pub fn mul_u_capped(&self, o: &Poly<C>, cap: u32) -> Poly<C> {
        let ctx = self.join_ctx(o);
        let cap = cap.min(ctx.u_order);
        let p = ctx.p;
        let mut out = Poly::zero(ctx);
        for (ma, ca) in &self.terms {
            let ua = ma.u_exp();
            if ua >= cap {
                break;
            }
            let bound = Monomial::u_floor(cap - ua);
            for (mb, cb) in o.terms.range(..bound) {
                let m = match ma.mul_checked(mb, &ctx) {
                    Some(m) => m,
                    None => continue,
                };
                out.add_term(m, ca.mul(cb, p));
            }
        }
        out
    }

    pub fn mul_scalar(&self, c: &C) -> Poly<C> {
        if c.is_zero() {
            return Poly::zero(self.ctx);
        }
        let p = self.ctx.p;
        let mut terms = BTreeMap::new();
        for (m, a) in &self.terms {
            let prod = a.mul(c, p);
            if !prod.is_zero() {
                terms.insert(*m, prod);
            }
        }
        Poly { terms, ctx: self.ctx }
    }

    /// Binary exponentiation; `k = 0` gives the unit.
    pub fn pow(&self, k: u64) -> Poly<C> {
        let mut acc = Poly::one(self.ctx);
        if k == 0 {
            return acc;
        }
        // Single-term bases power directly.
        if self.terms.len() == 1 {
            let (m, c) = self.terms.iter().next().unwrap();
            let mut coeff = C::one();
            let mut base = c.clone();
            let mut e = k;
            while e > 0 {
                if e & 1 == 1 {
                    coeff = coeff.mul(&base, self.ctx.p);
                }
                base = base.mul(&base, self.ctx.p);
                e >>= 1;
            }
            return match m.pow_checked(k, &self.ctx) {
                Some(mk) => Poly::monomial(coeff, mk, self.ctx),
                None => Poly::zero(self.ctx),
            };
        }
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Discard terms of u-degree `>= m` and tighten the declared order.
    pub fn truncate_u(&self, m: u32) -> Poly<C> {
        assert!(m >= 1, "u-adic truncation order must be at least 1");
        let m = m.min(self.ctx.u_order);
        let ctx = self.ctx.with_u_order(m);
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(mono, _)| mono.u_exp() < m)
                .map(|(mono, c)| (*mono, c.clone()))
                .collect(),
            ctx,
        }
    }

    /// Drop terms of u-degree `>= m` without tightening the declared
    /// order. The result only represents the original modulo `u^m`; the
    /// per-degree capped arithmetic in the action solver is the intended
    /// use.
    pub fn drop_u_from(&self, m: u32) -> Poly<C> {
        if self.max_u_exp().map_or(true, |e| e < m) {
            return self.clone();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(mono, _)| mono.u_exp() < m)
                .map(|(mono, c)| (*mono, c.clone()))
                .collect(),
            ctx: self.ctx,
        }
    }

    /// The u^k slice, with the power of u still attached.
    pub fn u_graded(&self, k: u32) -> Poly<C> {
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.u_exp() == k)
                .map(|(m, c)| (*m, c.clone()))
                .collect(),
            ctx: self.ctx,
        }
    }

    pub fn max_u_exp(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::u_exp).max()
    }

    pub fn min_u_exp(&self) -> Option<u32> {
        // Monomials sort by u-degree first.
        self.terms.keys().next().map(Monomial::u_exp)
    }

    /// Multiply by u^k. The result is known one order further per power
    /// of u, so the declared order grows by k.
    pub fn mul_u_pow(&self, k: u32) -> Poly<C> {
        let m = (self.ctx.u_order + k).min(MAX_U_ORDER);
        let ctx = self.ctx.with_u_order(m);
        let shift = Monomial::var(VarId::U, k as u64, &ctx);
        let mut terms = BTreeMap::new();
        for (mono, c) in &self.terms {
            if let Some(shifted) = mono.mul_checked(&shift, &ctx) {
                terms.insert(shifted, c.clone());
            }
        }
        Poly { terms, ctx }
    }

    /// Exact division by u^k: `None` unless every term has u-degree
    /// `>= k`. The result is only known to order `u_order - k`.
    pub fn div_exact_u(&self, k: u32) -> Option<Poly<C>> {
        assert!(self.ctx.u_order > k, "quotient order would vanish");
        let ctx = self.ctx.with_u_order(self.ctx.u_order - k);
        let mut terms = BTreeMap::new();
        for (mono, c) in &self.terms {
            if mono.u_exp() < k {
                return None;
            }
            let mut m = *mono;
            m.exps[0] -= k as u16;
            terms.insert(m, c.clone());
        }
        Some(Poly { terms, ctx })
    }

    /// Substitute `u := w`, leaving the unit coordinates alone. Powers of
    /// `w` are computed once per distinct u-degree.
    pub fn substitute_u(&self, w: &Poly<C>) -> Poly<C> {
        self.ctx.assert_same_ring(w.ctx());
        let ctx = self.ctx.with_u_order(self.ctx.u_order.min(w.ctx.u_order));
        let mut slices: BTreeMap<u32, Poly<C>> = BTreeMap::new();
        for (mono, c) in &self.terms {
            let e = mono.u_exp();
            let mut m = *mono;
            m.exps[0] = 0;
            slices
                .entry(e)
                .or_insert_with(|| Poly::zero(ctx))
                .add_term(m, c.clone());
        }
        let mut out = Poly::zero(ctx);
        let mut cur_exp = 0u32;
        let mut cur_pow = Poly::one(ctx);
        for (e, slice) in slices {
            if e > cur_exp {
                cur_pow = cur_pow.mul(&w.pow((e - cur_exp) as u64));
                cur_exp = e;
            }
            out = out.add(&slice.mul(&cur_pow));
        }
        out
    }

    pub fn map_coeffs<D: Scalar>(&self, ctx: RingCtx, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let d = f(c);
            if !d.is_zero() {
                terms.insert(*m, d);
            }
        }
        Poly { terms, ctx }
    }

    pub fn try_map_coeffs<D: Scalar, E>(
        &self,
        ctx: RingCtx,
        f: impl Fn(&C) -> Result<D, E>,
    ) -> Result<Poly<D>, E> {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let d = f(c)?;
            if !d.is_zero() {
                terms.insert(*m, d);
            }
        }
        Ok(Poly { terms, ctx })
    }

    /// Equality of all terms of u-degree `< k`. Both sides must be known
    /// to at least that order.
    pub fn eq_mod_u(&self, o: &Poly<C>, k: u32) -> bool {
        self.ctx.assert_same_ring(&o.ctx);
        assert!(
            self.ctx.u_order >= k && o.ctx.u_order >= k,
            "comparing beyond known u-adic order"
        );
        let low = |p: &Poly<C>| {
            p.terms
                .iter()
                .filter(|(m, _)| m.u_exp() < k)
                .map(|(m, c)| (*m, c.clone()))
                .collect::<BTreeMap<_, _>>()
        };
        low(self) == low(o)
    }

    /// Terms as a JSON array; the ring context is serialized separately,
    /// once per document.
    pub fn terms_json(&self) -> Value {
        let arr: Vec<Value> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mono: Vec<Value> = m
                    .factors()
                    .iter()
                    .map(|&(v, e)| json!([v.name(), e]))
                    .collect();
                json!({ "monomial": mono, "coeff": c.coeff_string() })
            })
            .collect();
        Value::Array(arr)
    }

    pub fn from_terms_json(v: &Value, ctx: RingCtx) -> Result<Poly<C>, RingError> {
        let bad = |msg: &str| RingError::BadJson(msg.to_string());
        let arr = v.as_array().ok_or_else(|| bad("terms must be an array"))?;
        let mut out = Poly::zero(ctx);
        for t in arr {
            let mono = t
                .get("monomial")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("term missing monomial array"))?;
            let mut m = Monomial::one();
            for f in mono {
                let pair = f.as_array().filter(|a| a.len() == 2);
                let pair = pair.ok_or_else(|| bad("monomial factor must be [name, exp]"))?;
                let name = pair[0].as_str().ok_or_else(|| bad("variable name"))?;
                let e = pair[1].as_u64().ok_or_else(|| bad("variable exponent"))?;
                let var = VarId::parse(name).ok_or_else(|| bad("unknown variable"))?;
                if let VarId::G(i) = var {
                    if i as u32 > ctx.h {
                        return Err(bad("unit coordinate outside height"));
                    }
                }
                let single = Monomial::var(var, e, &ctx);
                m = m
                    .mul_checked(&single, &ctx.with_u_order(MAX_U_ORDER))
                    .ok_or_else(|| bad("u-exponent out of range"))?;
            }
            let cs = t
                .get("coeff")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("term missing coeff string"))?;
            let c = C::parse_coeff(cs, ctx.p)
                .map_err(|e| RingError::BadJson(e.to_string()))?;
            if (m.u_exp() as u64) < ctx.u_order as u64 {
                out.add_term(m, c);
            }
        }
        Ok(out)
    }

    /// Standalone JSON document: ring context plus terms.
    pub fn to_json(&self) -> Value {
        json!({
            "p": self.ctx.p,
            "h": self.ctx.h,
            "u_order": self.ctx.u_order,
            "terms": self.terms_json(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Poly<C>, RingError> {
        let bad = |msg: &str| RingError::BadJson(msg.to_string());
        let p = v.get("p").and_then(Value::as_u64).ok_or_else(|| bad("missing p"))?;
        let h = v.get("h").and_then(Value::as_u64).ok_or_else(|| bad("missing h"))?;
        let m = v
            .get("u_order")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing u_order"))?;
        let ctx = RingCtx::new(p, h as u32, m as u32)?;
        let terms = v.get("terms").ok_or_else(|| bad("missing terms"))?;
        Poly::from_terms_json(terms, ctx)
    }
}

impl Poly<Rat> {
    /// Coefficientwise residue map; errors on any coefficient with a
    /// p-divisible denominator.
    pub fn reduce_mod_p(&self) -> Result<Poly<Fp>, ScalarError> {
        let p = self.ctx.p;
        self.try_map_coeffs(self.ctx, |c| crate::scalars::reduce_mod_p(c, p))
    }

    /// Minimum p-adic valuation over all coefficients; infinite for zero.
    pub fn min_valuation(&self) -> PadicVal {
        self.terms
            .values()
            .map(|c| p_valuation(c, self.ctx.p))
            .min()
            .unwrap_or(PadicVal::Infinity)
    }
}

impl Poly<Fp> {
    /// The field automorphism raising unit coordinates to the p^k-th
    /// power: unit-coordinate exponents scale by p^k (then reduce), while
    /// u and the coefficients are fixed. Scaling by a unit mod `p^h - 1`
    /// is injective on exponents, so terms never collide.
    pub fn frobenius(&self, k: u32) -> Poly<Fp> {
        // p^h scales reduced exponents trivially, so only k mod h matters.
        let r = k % self.ctx.h;
        if r == 0 {
            return self.clone();
        }
        let scale = self.ctx.p.pow(r);
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut out = *m;
            for i in 1..VAR_SLOTS {
                let e = g_reduce_ph(m.exps[i] as u64 * scale, self.ctx.ph);
                out.exps[i] = e as u16;
            }
            terms.insert(out, *c);
        }
        Poly { terms, ctx: self.ctx }
    }

    /// The p^j-th power in characteristic p: every exponent scales by
    /// p^j (coefficients are fixed by Fermat). A value known modulo `u^m`
    /// has its p^j-th power known modulo `u^(m * p^j)`, so the declared
    /// order scales too (clamped to the representable range).
    pub fn p_power(&self, j: u32) -> Poly<Fp> {
        if j == 0 {
            return self.clone();
        }
        let scale = self.ctx.p.pow(j);
        let order = (self.ctx.u_order as u64 * scale).min(MAX_U_ORDER as u64) as u32;
        let ctx = self.ctx.with_u_order(order);
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let u = m.exps[0] as u64 * scale;
            if u >= order as u64 {
                continue;
            }
            let mut out = Monomial::one();
            out.exps[0] = u as u16;
            for i in 1..VAR_SLOTS {
                let e = g_reduce_ph(m.exps[i] as u64 * scale, self.ctx.ph);
                out.exps[i] = e as u16;
            }
            terms.insert(out, *c);
        }
        Poly { terms, ctx }
    }
}

impl<C: Scalar> fmt::Display for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            let cs = c.coeff_string();
            let (neg, mag) = match cs.strip_prefix('-') {
                Some(rest) => (true, rest.to_string()),
                None => (false, cs),
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{}", mag)?;
            } else if mag == "1" {
                write!(f, "{}", m.display_factors())?;
            } else {
                write!(f, "{}*{}", mag, m.display_factors())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::rat;

    fn ctx33(m: u32) -> RingCtx {
        RingCtx::new(3, 3, m).unwrap()
    }

    #[test]
    fn context_validation() {
        assert!(RingCtx::new(4, 3, 10).is_err());
        assert!(RingCtx::new(3, 0, 10).is_err());
        assert!(RingCtx::new(3, 11, 10).is_err());
        assert!(RingCtx::new(2, 17, 10).is_err());
        assert!(RingCtx::new(3, 3, 0).is_err());
        assert!(RingCtx::new(3, 3, 30001).is_err());
        let c = ctx33(22);
        assert_eq!(c.ph, 27);
        assert_eq!(c.var_count(), 5);
    }

    #[test]
    fn g_exponent_reduction() {
        assert_eq!(g_reduce(30, 3, 3), 4);
        assert_eq!(g_reduce(53, 3, 3), 1);
        assert_eq!(g_reduce(26, 3, 3), 26);
        assert_eq!(g_reduce(27, 3, 3), 1);
        assert_eq!(g_reduce(0, 3, 3), 0);
        // Reduced exponents are fixed points.
        for e in 0..27 {
            assert_eq!(g_reduce(e, 3, 3), e);
        }
    }

    #[test]
    fn term_order_is_u_degree_first() {
        let ctx = ctx33(10);
        let ug = Monomial::var(VarId::U, 1, &ctx);
        let g_sq = Monomial::var(VarId::G(1), 2, &ctx);
        assert!(g_sq < ug, "u-free terms sort before u-divisible ones");
    }

    #[test]
    fn binomial_power_with_truncation() {
        // (1 + u*g1)^8 over F_3 keeps binomial coefficients 1,2,1,2 below u^4.
        let ctx = ctx33(4);
        let f = Poly::<Fp>::one(ctx).add(&Poly::monomial(
            Fp::new(1, 3),
            Monomial::var(VarId::U, 1, &ctx).mul_checked(&Monomial::var(VarId::G(1), 1, &ctx), &ctx).unwrap(),
            ctx,
        ));
        let g = f.pow(8);
        let mut want = Poly::<Fp>::one(ctx);
        for (k, c) in [(1u64, 2u64), (2, 1), (3, 2)] {
            let m = Monomial::var(VarId::U, k, &ctx)
                .mul_checked(&Monomial::var(VarId::G(1), k, &ctx), &ctx)
                .unwrap();
            want = want.add(&Poly::monomial(Fp::new(c, 3), m, ctx));
        }
        assert_eq!(g, want);
    }

    #[test]
    fn frobenius_scales_unit_exponents_only() {
        let ctx = ctx33(10);
        let g1 = Poly::<Fp>::var(VarId::G(1), ctx);
        assert_eq!(g1.frobenius(1), Poly::var_pow(VarId::G(1), 3, ctx));
        let m = Monomial::var(VarId::G(1), 2, &ctx)
            .mul_checked(&Monomial::var(VarId::G(2), 1, &ctx), &ctx)
            .unwrap();
        let f = Poly::monomial(Fp::new(1, 3), m, ctx);
        let fr = f.frobenius(1);
        let want_m = Monomial::var(VarId::G(1), 6, &ctx)
            .mul_checked(&Monomial::var(VarId::G(2), 3, &ctx), &ctx)
            .unwrap();
        assert_eq!(fr, Poly::monomial(Fp::new(1, 3), want_m, ctx));
        // Iterating h times is the identity on reduced exponents.
        let big = f.add(&g1.mul_u_pow(2).truncate_u(10));
        assert_eq!(big.frobenius(1).frobenius(1).frobenius(1), big);
        assert_eq!(big.frobenius(3), big);
    }

    #[test]
    fn p_power_scales_all_exponents() {
        let ctx = ctx33(10);
        let ug = Poly::<Fp>::var(VarId::U, ctx).mul(&Poly::var(VarId::G(1), ctx));
        let cubed = ug.p_power(1);
        // A cube of something known mod u^10 is known mod u^30.
        assert_eq!(cubed.ctx().u_order, 30);
        let want_m = Monomial::var(VarId::U, 3, &ctx)
            .mul_checked(&Monomial::var(VarId::G(1), 3, &ctx), &ctx)
            .unwrap();
        assert_eq!(cubed.truncate_u(10), Poly::monomial(Fp::new(1, 3), want_m, ctx));
        // Agrees with plain exponentiation (freshman's dream).
        assert_eq!(cubed.truncate_u(10), ug.pow(3));
        // Scaled terms stay representable instead of being dropped.
        let u4 = Poly::<Fp>::var_pow(VarId::U, 4, ctx);
        let young = u4.p_power(1);
        assert_eq!(young.min_u_exp(), Some(12));
        assert!(young.truncate_u(10).is_zero());
    }

    #[test]
    fn substitution_of_u() {
        let ctx = ctx33(5);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let g1 = Poly::<Rat>::var(VarId::G(1), ctx);
        // f = 1 + u*g1 + u^2
        let f = Poly::one(ctx).add(&u.mul(&g1)).add(&u.pow(2));
        let w = u.pow(2);
        let got = f.substitute_u(&w);
        let want = Poly::one(ctx).add(&u.pow(2).mul(&g1)).add(&u.pow(4));
        assert_eq!(got, want);
    }

    #[test]
    fn truncation_and_grading() {
        let ctx = ctx33(10);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let f = Poly::one(ctx)
            .add(&u.pow(3).mul_scalar(&rat(2, 1)))
            .add(&u.pow(7));
        assert_eq!(f.max_u_exp(), Some(7));
        assert_eq!(f.min_u_exp(), Some(0));
        let t = f.truncate_u(4);
        assert_eq!(t.ctx().u_order, 4);
        assert_eq!(t.max_u_exp(), Some(3));
        let sl = f.u_graded(3);
        assert_eq!(sl, u.pow(3).mul_scalar(&rat(2, 1)));
        assert!(f.eq_mod_u(&t.truncate_u(4), 4));
    }

    #[test]
    fn shifts_track_known_order() {
        let ctx = ctx33(5);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let f = Poly::one(ctx).add(&u.pow(4));
        let up = f.mul_u_pow(2);
        assert_eq!(up.ctx().u_order, 7);
        assert_eq!(up.max_u_exp(), Some(6));
        let down = up.div_exact_u(2).unwrap();
        assert_eq!(down.ctx().u_order, 5);
        assert!(f.eq_mod_u(&down, 5));
        assert_eq!(u.add(&Poly::one(ctx)).div_exact_u(1), None);
    }

    #[test]
    #[should_panic(expected = "different rings")]
    fn mixed_ring_operations_panic() {
        let a = Poly::<Rat>::one(ctx33(5));
        let b = Poly::<Rat>::one(RingCtx::new(5, 3, 5).unwrap());
        let _ = a.add(&b);
    }

    #[test]
    fn reduction_to_prime_field() {
        let ctx = ctx33(5);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        // 5/2 = 1 mod 3 on u, and a 3-divisible term vanishes.
        let f = u.mul_scalar(&rat(5, 2)).add(&u.pow(2).mul_scalar(&rat(3, 1)));
        let r = f.reduce_mod_p().unwrap();
        assert_eq!(r, Poly::<Fp>::var(VarId::U, ctx));
        let bad = u.mul_scalar(&rat(1, 3));
        assert!(bad.reduce_mod_p().is_err());
        assert_eq!(f.min_valuation(), PadicVal::Finite(0));
        assert_eq!(bad.min_valuation(), PadicVal::Finite(-1));
        assert_eq!(Poly::<Rat>::zero(ctx).min_valuation(), PadicVal::Infinity);
    }

    #[test]
    fn display_formatting() {
        let ctx = ctx33(10);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let g1 = Poly::<Rat>::var(VarId::G(1), ctx);
        let f = Poly::one(ctx)
            .add(&u.pow(3).mul(&g1).mul_scalar(&rat(2, 1)))
            .sub(&u.mul_scalar(&rat(1, 2)));
        assert_eq!(f.to_string(), "1 - 1/2*u + 2*u^3*g1");
        assert_eq!(Poly::<Rat>::zero(ctx).to_string(), "0");
    }

    #[test]
    fn json_round_trip() {
        let ctx = ctx33(9);
        let u = Poly::<Rat>::var(VarId::U, ctx);
        let g2 = Poly::<Rat>::var(VarId::G(2), ctx);
        let f = u.pow(3).mul(&g2.pow(4)).mul_scalar(&rat(-7, 5)).add(&Poly::one(ctx));
        let v = f.to_json();
        let back = Poly::<Rat>::from_json(&v).unwrap();
        assert_eq!(back, f);
        // Unknown variables and out-of-range exponents are rejected.
        let bad = serde_json::json!({
            "p": 3, "h": 3, "u_order": 9,
            "terms": [{ "monomial": [["q", 1]], "coeff": "1" }]
        });
        assert!(Poly::<Rat>::from_json(&bad).is_err());
    }
}
