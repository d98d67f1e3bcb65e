//! Exact scalar arithmetic: arbitrary-precision integers and rationals,
//! prime-field residues, p-adic valuations, and binomial coefficients.
//!
//! There is no floating point anywhere in this crate. Rationals are kept
//! fully reduced with a positive denominator after every operation (the
//! underlying representation guarantees this). A prime-field residue does
//! not store its modulus; the prime lives in the surrounding ring context
//! and is threaded through every operation.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

/// Arbitrary-precision signed integer.
pub type Int = num_bigint::BigInt;

/// Exact rational with arbitrary-precision numerator and denominator.
/// Always reduced; denominator always positive.
pub type Rat = num_rational::BigRational;

/// Errors from scalar-level operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalarError {
    /// Tried to reduce a rational with negative p-adic valuation.
    NotPIntegral { value: String, p: u64 },
    /// Index outside the open interval where binom(p, j)/p is an integer.
    IndexOutOfRange { j: u64, p: u64 },
    /// Unparseable coefficient string.
    BadCoeff(String),
}

impl fmt::Display for ScalarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarError::NotPIntegral { value, p } => {
                write!(f, "{} is not {}-integral", value, p)
            }
            ScalarError::IndexOutOfRange { j, p } => {
                write!(f, "index {} outside 1..{} for prime {}", j, p, p)
            }
            ScalarError::BadCoeff(s) => write!(f, "cannot parse coefficient {:?}", s),
        }
    }
}

impl std::error::Error for ScalarError {}

/// Integer from a machine word.
pub fn int(n: i64) -> Int {
    Int::from(n)
}

/// Reduced rational from machine words. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(Int::from(num), Int::from(den))
}

/// `base^exp` for a machine-word base.
pub fn int_pow(base: u64, exp: u32) -> Int {
    Int::from(base).pow(exp)
}

/// `r^exp` with negative exponents inverting. Panics on `0^negative`.
pub fn rat_pow(r: &Rat, exp: i64) -> Rat {
    if exp >= 0 {
        num_traits::pow::pow(r.clone(), exp as usize)
    } else {
        assert!(!Zero::is_zero(r), "cannot raise zero to a negative power");
        num_traits::pow::pow(r.recip(), (-exp) as usize)
    }
}

/// p-adic valuation: finite for nonzero rationals, infinite for zero.
///
/// `Finite(v) < Infinity` under the derived order, so comparisons like
/// `p_valuation(r, p) >= PadicVal::Finite(0)` read naturally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PadicVal {
    Finite(i64),
    Infinity,
}

fn count_p_factors(n: &Int, p: &Int) -> i64 {
    debug_assert!(!n.is_zero());
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(p);
        if r.is_zero() {
            v += 1;
            n = q;
        } else {
            return v;
        }
    }
}

/// v_p(numerator) - v_p(denominator). Since the rational is reduced, at
/// most one of the two parts is divisible by p.
pub fn p_valuation(r: &Rat, p: u64) -> PadicVal {
    if Zero::is_zero(r) {
        return PadicVal::Infinity;
    }
    let pb = Int::from(p);
    let vn = count_p_factors(r.numer(), &pb);
    if vn > 0 {
        PadicVal::Finite(vn)
    } else {
        PadicVal::Finite(-count_p_factors(r.denom(), &pb))
    }
}

/// Residue image of a p-integral rational in the prime field.
///
/// Errors when v_p(r) < 0, i.e. when p divides the (reduced) denominator.
pub fn reduce_mod_p(r: &Rat, p: u64) -> Result<Fp, ScalarError> {
    let pb = Int::from(p);
    let den = r.denom().mod_floor(&pb).to_u64().expect("residue fits u64");
    if den == 0 {
        return Err(ScalarError::NotPIntegral {
            value: r.to_string(),
            p,
        });
    }
    let num = r.numer().mod_floor(&pb).to_u64().expect("residue fits u64");
    let den_inv = Fp(den).inv(p).expect("denominator unit mod p");
    Ok(Fp(num).mul(den_inv, p))
}

/// Exact binomial coefficient, 0 whenever `k < 0` or `k > n`.
pub fn binom(n: u64, k: i64) -> Int {
    if k < 0 || (k as u64) > n {
        return Int::zero();
    }
    num_integer::binomial(Int::from(n), Int::from(k))
}

/// binom(p, j)/p for a prime p and 1 <= j <= p-1; exact integer division.
pub fn binom_p_over_p(p: u64, j: u64) -> Result<Int, ScalarError> {
    if j == 0 || j >= p {
        return Err(ScalarError::IndexOutOfRange { j, p });
    }
    let b = binom(p, j as i64);
    let (q, r) = b.div_rem(&Int::from(p));
    debug_assert!(r.is_zero(), "binom(p, j) must be divisible by the prime p");
    Ok(q)
}

/// Deterministic primality by trial division; moduli here are small.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Residue in a prime field, stored without its modulus.
///
/// Invariant: `0 <= residue < p` for the `p` of the enclosing context.
/// All operations take that prime explicitly and preserve the invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fp(u64);

impl Fp {
    pub fn new(v: u64, p: u64) -> Fp {
        Fp(v % p)
    }

    pub fn residue(self) -> u64 {
        self.0
    }

    pub fn add(self, o: Fp, p: u64) -> Fp {
        Fp((self.0 + o.0) % p)
    }

    pub fn sub(self, o: Fp, p: u64) -> Fp {
        Fp((self.0 + p - o.0) % p)
    }

    pub fn mul(self, o: Fp, p: u64) -> Fp {
        Fp(((self.0 as u128 * o.0 as u128) % p as u128) as u64)
    }

    pub fn neg(self, p: u64) -> Fp {
        Fp((p - self.0) % p)
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    /// `None` for the zero residue.
    pub fn inv(self, p: u64) -> Option<Fp> {
        if self.0 == 0 {
            return None;
        }
        let (mut r0, mut r1) = (p as i128, self.0 as i128);
        let (mut s0, mut s1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (s0, s1) = (s1, s0 - q * s1);
        }
        debug_assert_eq!(r0, 1, "modulus must be prime");
        Some(Fp(s0.rem_euclid(p as i128) as u64))
    }

    pub fn pow(self, mut e: u64, p: u64) -> Fp {
        let mut base = self;
        let mut acc = Fp(1 % p);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base, p);
            }
            base = base.mul(base, p);
            e >>= 1;
        }
        acc
    }

    pub fn from_i64(n: i64, p: u64) -> Fp {
        Fp(n.rem_euclid(p as i64) as u64)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Coefficient domain for polynomials and series: exact rationals or
/// prime-field residues. Operations thread the prime from the enclosing
/// ring context; the rational impl ignores it.
pub trait Scalar: Clone + Eq + Ord + fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, rhs: &Self, p: u64) -> Self;
    fn sub(&self, rhs: &Self, p: u64) -> Self;
    fn mul(&self, rhs: &Self, p: u64) -> Self;
    fn neg(&self, p: u64) -> Self;
    /// Multiplicative inverse; `None` exactly for zero (both domains are
    /// fields).
    fn inv(&self, p: u64) -> Option<Self>;
    fn from_i64(n: i64, p: u64) -> Self;
    /// Canonical string form used by the JSON dumps: decimal for residues
    /// and integers, "num/den" for non-integral rationals.
    fn coeff_string(&self) -> String;
    fn parse_coeff(s: &str, p: u64) -> Result<Self, ScalarError>;
}

impl Scalar for Rat {
    fn zero() -> Self {
        <Rat as Zero>::zero()
    }

    fn one() -> Self {
        <Rat as One>::one()
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    fn add(&self, rhs: &Self, _p: u64) -> Self {
        self + rhs
    }

    fn sub(&self, rhs: &Self, _p: u64) -> Self {
        self - rhs
    }

    fn mul(&self, rhs: &Self, _p: u64) -> Self {
        self * rhs
    }

    fn neg(&self, _p: u64) -> Self {
        -self
    }

    fn inv(&self, _p: u64) -> Option<Self> {
        if Zero::is_zero(self) {
            None
        } else {
            Some(self.recip())
        }
    }

    fn from_i64(n: i64, _p: u64) -> Self {
        Rat::from_integer(Int::from(n))
    }

    fn coeff_string(&self) -> String {
        self.to_string()
    }

    fn parse_coeff(s: &str, _p: u64) -> Result<Self, ScalarError> {
        let bad = || ScalarError::BadCoeff(s.to_string());
        match s.split_once('/') {
            Some((n, d)) => {
                let num = Int::from_str(n.trim()).map_err(|_| bad())?;
                let den = Int::from_str(d.trim()).map_err(|_| bad())?;
                if den.is_zero() {
                    return Err(bad());
                }
                Ok(Rat::new(num, den))
            }
            None => Ok(Rat::from_integer(Int::from_str(s.trim()).map_err(|_| bad())?)),
        }
    }
}

impl Scalar for Fp {
    fn zero() -> Self {
        Fp(0)
    }

    fn one() -> Self {
        Fp(1)
    }

    fn is_zero(&self) -> bool {
        self.0 == 0
    }

    fn add(&self, rhs: &Self, p: u64) -> Self {
        Fp::add(*self, *rhs, p)
    }

    fn sub(&self, rhs: &Self, p: u64) -> Self {
        Fp::sub(*self, *rhs, p)
    }

    fn mul(&self, rhs: &Self, p: u64) -> Self {
        Fp::mul(*self, *rhs, p)
    }

    fn neg(&self, p: u64) -> Self {
        Fp::neg(*self, p)
    }

    fn inv(&self, p: u64) -> Option<Self> {
        Fp::inv(*self, p)
    }

    fn from_i64(n: i64, p: u64) -> Self {
        Fp::from_i64(n, p)
    }

    fn coeff_string(&self) -> String {
        self.0.to_string()
    }

    fn parse_coeff(s: &str, p: u64) -> Result<Self, ScalarError> {
        let n = i64::from_str(s.trim()).map_err(|_| ScalarError::BadCoeff(s.to_string()))?;
        Ok(Fp::from_i64(n, p))
    }
}

/// Sign (-1)^e as a scalar.
pub fn sign_pow<C: Scalar>(e: u64, p: u64) -> C {
    if e % 2 == 0 {
        C::one()
    } else {
        C::one().neg(p)
    }
}

/// Residue of an arbitrary-precision integer.
pub fn int_mod_p(n: &Int, p: u64) -> Fp {
    let r = n.mod_floor(&Int::from(p)).to_u64().expect("residue fits u64");
    Fp(r)
}

/// Rational from an arbitrary-precision integer.
pub fn rat_from_int(n: Int) -> Rat {
    Rat::from_integer(n)
}
