//! Small finite-field arithmetic for concrete spot checks: `F_(p^h)`
//! presented as `F_p[a]/(m(a))` for a user-supplied monic irreducible
//! `m`, plus dense u-adic polynomials over that field. Exact and
//! deliberately simple — the symbolic engines never touch this module;
//! it only evaluates their output at concrete points.

use std::fmt;

/// The field `F_p[a]/(m(a))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteField {
    pub p: u64,
    /// Extension degree.
    pub h: usize,
    /// Monic modulus, constant-first, length `h + 1`, last entry 1.
    pub modulus: Vec<u64>,
}

/// An element, as `h` residues: constant-first coordinates in the
/// power basis of the generator.
pub type Elem = Vec<u64>;

impl FiniteField {
    /// Build the field, checking that the modulus is monic of degree
    /// `h` and irreducible over `F_p` (by trial division against every
    /// monic polynomial of degree up to `h/2`).
    pub fn new(p: u64, h: usize, modulus: Vec<u64>) -> Result<FiniteField, String> {
        if h < 1 {
            return Err("the extension degree must be at least 1".to_string());
        }
        if modulus.len() != h + 1 || modulus[h] % p != 1 {
            return Err(format!(
                "the modulus must be monic of degree {} (got {} coefficients, leading {})",
                h,
                modulus.len(),
                modulus.last().copied().unwrap_or(0)
            ));
        }
        let modulus: Vec<u64> = modulus.into_iter().map(|c| c % p).collect();
        if let Some(d) = reducible_witness(p, &modulus) {
            return Err(format!(
                "the modulus is reducible: it has a monic factor of degree {}",
                d
            ));
        }
        Ok(FiniteField { p, h, modulus })
    }

    pub fn zero(&self) -> Elem {
        vec![0; self.h]
    }

    pub fn one(&self) -> Elem {
        let mut e = self.zero();
        e[0] = 1 % self.p;
        e
    }

    /// The class of the generator `a`.
    pub fn gen(&self) -> Elem {
        let mut e = self.zero();
        if self.h == 1 {
            // a satisfies a linear relation: a = -m[0].
            e[0] = (self.p - self.modulus[0] % self.p) % self.p;
        } else {
            e[1] = 1;
        }
        e
    }

    pub fn from_const(&self, c: i64) -> Elem {
        let mut e = self.zero();
        e[0] = c.rem_euclid(self.p as i64) as u64;
        e
    }

    pub fn is_zero(&self, x: &Elem) -> bool {
        x.iter().all(|&c| c == 0)
    }

    pub fn add(&self, x: &Elem, y: &Elem) -> Elem {
        x.iter().zip(y).map(|(&a, &b)| (a + b) % self.p).collect()
    }

    pub fn sub(&self, x: &Elem, y: &Elem) -> Elem {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| (a + self.p - b) % self.p)
            .collect()
    }

    pub fn scale(&self, c: u64, x: &Elem) -> Elem {
        x.iter().map(|&a| (a * (c % self.p)) % self.p).collect()
    }

    pub fn mul(&self, x: &Elem, y: &Elem) -> Elem {
        // Schoolbook product then reduction by the monic modulus.
        let mut prod = vec![0u64; 2 * self.h - 1];
        for (i, &a) in x.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in y.iter().enumerate() {
                prod[i + j] = (prod[i + j] + a * b) % self.p;
            }
        }
        for d in (self.h..prod.len()).rev() {
            let c = prod[d];
            if c == 0 {
                continue;
            }
            prod[d] = 0;
            // a^d = a^(d-h) * (-(m - a^h))
            for k in 0..self.h {
                let m = self.modulus[k];
                if m != 0 {
                    let idx = d - self.h + k;
                    prod[idx] = (prod[idx] + c * (self.p - m)) % self.p;
                }
            }
        }
        prod.truncate(self.h);
        prod
    }

    pub fn pow(&self, x: &Elem, mut e: u64) -> Elem {
        let mut base = x.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// The field automorphism `x -> x^(p^k)`.
    pub fn frobenius(&self, x: &Elem, k: u32) -> Elem {
        let mut out = x.clone();
        for _ in 0..(k as usize % self.h.max(1)) {
            out = self.pow(&out, self.p);
        }
        out
    }

    pub fn render(&self, x: &Elem) -> String {
        let mut parts = Vec::new();
        for (i, &c) in x.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let part = match (i, c) {
                (0, c) => c.to_string(),
                (1, 1) => "a".to_string(),
                (1, c) => format!("{}*a", c),
                (i, 1) => format!("a^{}", i),
                (i, c) => format!("{}*a^{}", c, i),
            };
            parts.push(part);
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}

impl fmt::Display for FiniteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}^{}", self.p, self.h)
    }
}

/// Degree of some monic proper factor, if one exists. Trial division
/// over `F_p`; fine for the small fields the spot checks use.
fn reducible_witness(p: u64, modulus: &[u64]) -> Option<usize> {
    let h = modulus.len() - 1;
    for d in 1..=h / 2 {
        // Enumerate monic polynomials of degree d by counting in base p.
        let count = p.pow(d as u32);
        for n in 0..count {
            let mut div = Vec::with_capacity(d + 1);
            let mut m = n;
            for _ in 0..d {
                div.push(m % p);
                m /= p;
            }
            div.push(1);
            if poly_rem_is_zero(p, modulus, &div) {
                return Some(d);
            }
        }
    }
    None
}

fn poly_rem_is_zero(p: u64, num: &[u64], div: &[u64]) -> bool {
    let d = div.len() - 1;
    let mut rem: Vec<u64> = num.to_vec();
    while rem.len() > d {
        let lead = *rem.last().unwrap() % p;
        let shift = rem.len() - 1 - d;
        if lead != 0 {
            for k in 0..=d {
                let idx = shift + k;
                rem[idx] = (rem[idx] + (p - div[k] % p) * lead) % p;
            }
        }
        rem.pop();
    }
    rem.iter().all(|&c| c % p == 0)
}

/// A dense polynomial in the deformation parameter with coefficients in
/// a small finite field, truncated at a fixed u-adic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UPoly {
    pub coeffs: Vec<Elem>,
}

impl UPoly {
    pub fn zero(field: &FiniteField, order: usize) -> UPoly {
        UPoly { coeffs: vec![field.zero(); order] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn add_term(&mut self, field: &FiniteField, u_exp: usize, e: &Elem) {
        if u_exp < self.coeffs.len() {
            self.coeffs[u_exp] = field.add(&self.coeffs[u_exp], e);
        }
    }

    pub fn mul(&self, field: &FiniteField, other: &UPoly) -> UPoly {
        let order = self.order().min(other.order());
        let mut out = UPoly::zero(field, order);
        for (i, a) in self.coeffs.iter().enumerate().take(order) {
            if field.is_zero(a) {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j >= order {
                    break;
                }
                if field.is_zero(b) {
                    continue;
                }
                let prod = field.mul(a, b);
                out.coeffs[i + j] = field.add(&out.coeffs[i + j], &prod);
            }
        }
        out
    }

    pub fn pow(&self, field: &FiniteField, mut e: u64) -> UPoly {
        let order = self.order();
        let mut acc = UPoly::zero(field, order);
        acc.coeffs[0] = field.one();
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(field, &base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(field, &base);
            }
        }
        acc
    }

    /// Substitute `u -> w` where `w` vanishes at `u = 0`; the truncation
    /// order is preserved.
    pub fn substitute_u(&self, field: &FiniteField, w: &UPoly) -> UPoly {
        let order = self.order();
        let mut out = UPoly::zero(field, order);
        // Incremental powers of w.
        let mut wk = UPoly::zero(field, order);
        wk.coeffs[0] = field.one();
        for (e, c) in self.coeffs.iter().enumerate() {
            if e > 0 {
                wk = wk.mul(field, w);
            }
            if field.is_zero(c) {
                continue;
            }
            for (d, wc) in wk.coeffs.iter().enumerate() {
                if !field.is_zero(wc) {
                    let t = field.mul(c, wc);
                    out.coeffs[d] = field.add(&out.coeffs[d], &t);
                }
            }
        }
        out
    }

    /// First u-degree where the two differ, if any (compared through the
    /// shorter truncation).
    pub fn first_difference(&self, field: &FiniteField, other: &UPoly) -> Option<usize> {
        let order = self.order().min(other.order());
        (0..order).find(|&d| field.sub(&self.coeffs[d], &other.coeffs[d]) != field.zero())
    }

    pub fn render(&self, field: &FiniteField) -> String {
        let mut parts = Vec::new();
        for (d, c) in self.coeffs.iter().enumerate() {
            if field.is_zero(c) {
                continue;
            }
            let coeff = field.render(c);
            let wrapped = if coeff.contains('+') { format!("({})", coeff) } else { coeff };
            parts.push(match d {
                0 => wrapped,
                1 => format!("{}*u", wrapped),
                _ => format!("{}*u^{}", wrapped, d),
            });
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}
