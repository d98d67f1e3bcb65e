//! Parsing of group-element specifications and evaluation of symbolic
//! action data at concrete finite-field points.
//!
//! The engines always run symbolically; a concrete specification only
//! changes what is done with their output. Concrete coefficients are
//! polynomials in a named generator `a` of `F_(p^h)`, and supplying a
//! monic irreducible modulus for `a` is the user's job.

use morava::polyring::VarId;
use morava::stabilizer::ActionData;

use crate::ff::{Elem, FiniteField, UPoly};

/// What to act with.
pub enum GSpec {
    /// The generic element carrying the unit coordinates as variables.
    Symbolic,
    /// The identity element.
    Identity,
    /// A concrete element of the extension field, coordinates indexed
    /// by filtration level (level 0 must be 1).
    Concrete { field: FiniteField, coeffs: Vec<Elem> },
}

impl GSpec {
    pub fn label(&self) -> String {
        match self {
            GSpec::Symbolic => "symbolic".to_string(),
            GSpec::Identity => "identity".to_string(),
            GSpec::Concrete { field, coeffs } => {
                let parts: Vec<String> = coeffs.iter().map(|c| field.render(c)).collect();
                format!("({}) over {}", parts.join("; "), field)
            }
        }
    }
}

/// Parse `--g`. `symbolic` and `identity` are keywords; anything else
/// is `;`-separated coefficient polynomials in `a` and requires
/// `--modulus`.
pub fn parse_gspec(
    raw: &str,
    modulus: Option<&str>,
    p: u64,
    h: u32,
) -> Result<GSpec, String> {
    let raw = raw.trim();
    match raw {
        "symbolic" => return Ok(GSpec::Symbolic),
        "identity" => return Ok(GSpec::Identity),
        "" => return Err("empty element specification".to_string()),
        _ => {}
    }
    let modulus_src = modulus.ok_or_else(|| {
        "a concrete element needs --modulus, a monic irreducible polynomial in `a` \
         defining the extension field"
            .to_string()
    })?;
    let m = parse_poly_in_a(modulus_src, p)?;
    if m.len() != h as usize + 1 {
        return Err(format!(
            "the modulus must have degree {} (the extension degree), got degree {}",
            h,
            m.len().saturating_sub(1)
        ));
    }
    let field = FiniteField::new(p, h as usize, m)?;
    let mut coeffs = Vec::new();
    for (i, part) in raw.split(';').enumerate() {
        let dense = parse_poly_in_a(part, p)?;
        if dense.len() > h as usize {
            return Err(format!(
                "coefficient {} has degree {} but field elements have degree below {}",
                i,
                dense.len() - 1,
                h
            ));
        }
        let mut e = field.zero();
        e[..dense.len()].copy_from_slice(&dense);
        coeffs.push(e);
    }
    if coeffs.len() > h as usize + 1 {
        return Err(format!(
            "at most {} coefficients (filtration levels 0..={}), got {}",
            h + 1,
            h,
            coeffs.len()
        ));
    }
    if coeffs[0] != field.one() {
        return Err("the level-0 coefficient must be 1 (the engines act on normalized elements)"
            .to_string());
    }
    coeffs.resize(h as usize + 1, field.zero());
    Ok(GSpec::Concrete { field, coeffs })
}

/// Parse an integer-coefficient polynomial in the single variable `a`
/// into dense constant-first coefficients mod p. Accepts forms like
/// `a^3 + 2*a + 1`, `2a^2 - a`, `0`.
pub fn parse_poly_in_a(src: &str, p: u64) -> Result<Vec<u64>, String> {
    let compact: String = src.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty polynomial".to_string());
    }
    // Split into signed terms.
    let mut terms: Vec<(bool, String)> = Vec::new();
    let mut cur = String::new();
    let mut neg = false;
    let mut chars = compact.chars().peekable();
    if chars.peek() == Some(&'-') {
        neg = true;
        chars.next();
    } else if chars.peek() == Some(&'+') {
        chars.next();
    }
    for c in chars {
        match c {
            '+' | '-' => {
                if cur.is_empty() {
                    return Err(format!("misplaced sign in '{}'", src.trim()));
                }
                terms.push((neg, std::mem::take(&mut cur)));
                neg = c == '-';
            }
            _ => cur.push(c),
        }
    }
    if cur.is_empty() {
        return Err(format!("trailing sign in '{}'", src.trim()));
    }
    terms.push((neg, cur));

    let mut dense: Vec<i64> = Vec::new();
    for (negated, term) in terms {
        let (coeff, exp) = parse_term(&term)?;
        if dense.len() <= exp {
            dense.resize(exp + 1, 0);
        }
        dense[exp] += if negated { -coeff } else { coeff };
    }
    let mut out: Vec<u64> = dense
        .into_iter()
        .map(|c| c.rem_euclid(p as i64) as u64)
        .collect();
    while out.len() > 1 && *out.last().unwrap() == 0 {
        out.pop();
    }
    Ok(out)
}

/// One term: `coeff`, `a`, `a^e`, `coeff*a`, `coeff*a^e`, or `coeff a^e`
/// with the `*` omitted.
fn parse_term(term: &str) -> Result<(i64, usize), String> {
    let (coeff_part, var_part) = match term.find('a') {
        None => (term, ""),
        Some(i) => (&term[..i], &term[i..]),
    };
    let coeff_part = coeff_part.strip_suffix('*').unwrap_or(coeff_part);
    let coeff: i64 = if coeff_part.is_empty() {
        if var_part.is_empty() {
            return Err(format!("empty term (from '{}')", term));
        }
        1
    } else {
        coeff_part
            .parse()
            .map_err(|_| format!("bad coefficient '{}' in term '{}'", coeff_part, term))?
    };
    let exp = match var_part {
        "" => 0,
        "a" => 1,
        _ => {
            let e = var_part
                .strip_prefix("a^")
                .ok_or_else(|| format!("bad variable part '{}' in term '{}'", var_part, term))?;
            e.parse::<usize>()
                .map_err(|_| format!("bad exponent '{}' in term '{}'", e, term))?
        }
    };
    Ok((coeff, exp))
}

/// Evaluate every coefficient of symbolic action data at a concrete
/// point: the unit coordinates become the given field elements, the
/// deformation parameter stays formal.
pub fn evaluate_action(data: &ActionData, field: &FiniteField, coeffs: &[Elem]) -> Vec<UPoly> {
    let order = data.ctx().u_order as usize;
    data.t
        .iter()
        .map(|t| {
            let mut out = UPoly::zero(field, order);
            for (m, c) in t.iter() {
                let mut elem = field.from_const(c.residue() as i64);
                let mut u_exp = 0usize;
                for (v, e) in m.factors() {
                    match v {
                        VarId::U => u_exp = e as usize,
                        VarId::G(i) => {
                            let point = &coeffs[i as usize];
                            elem = field.mul(&elem, &field.pow(point, u64::from(e)));
                        }
                    }
                }
                out.add_term(field, u_exp, &elem);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_parsing_handles_signs_and_implicit_coefficients() {
        assert_eq!(parse_poly_in_a("a^3+2*a+1", 3).unwrap(), vec![1, 2, 0, 1]);
        assert_eq!(parse_poly_in_a("2a^2 - a", 5).unwrap(), vec![0, 4, 2]);
        assert_eq!(parse_poly_in_a("0", 3).unwrap(), vec![0]);
        assert_eq!(parse_poly_in_a("-1", 3).unwrap(), vec![2]);
        assert_eq!(parse_poly_in_a("a", 3).unwrap(), vec![0, 1]);
        assert!(parse_poly_in_a("a^", 3).is_err());
        assert!(parse_poly_in_a("++1", 3).is_err());
        assert!(parse_poly_in_a("b+1", 3).is_err());
    }

    #[test]
    fn gspec_keywords_and_validation() {
        assert!(matches!(parse_gspec("symbolic", None, 3, 3), Ok(GSpec::Symbolic)));
        assert!(matches!(parse_gspec("identity", None, 3, 3), Ok(GSpec::Identity)));
        // Concrete without a modulus is refused.
        assert!(parse_gspec("1; a", None, 3, 3).is_err());
        // Non-normalized level 0 is refused.
        assert!(parse_gspec("2; a", Some("a^3+2a+1"), 3, 3).is_err());
        let ok = parse_gspec("1; a; a^2", Some("a^3+2a+1"), 3, 3).unwrap();
        match ok {
            GSpec::Concrete { coeffs, .. } => assert_eq!(coeffs.len(), 4),
            _ => panic!("expected a concrete element"),
        }
    }
}
