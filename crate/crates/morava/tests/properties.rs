//! Randomized algebra-law tests for the exact-arithmetic layers:
//! scalar identities, polynomial ring laws, series composition laws,
//! and the twisted group multiplication. Counterexamples shrink to
//! minimal witnesses via proptest.

use morava::polyring::{Monomial, Poly, RingCtx, VarId};
use morava::scalars::{binom, p_valuation, rat, Fp, PadicVal};
use morava::series::{compose, revert, XSeries};
use morava::stabilizer::{stabilizer_mul, GroupElement};
use proptest::prelude::*;

const P: u64 = 3;
const H: u32 = 3;
const U_ORDER: u32 = 5;

fn ctx() -> RingCtx {
    RingCtx::new(P, H, U_ORDER).expect("test ring")
}

/// A raw term: (u-exponent, unit-coordinate index 0..=h with 0 meaning
/// none, unit-coordinate exponent, nonzero residue).
type RawTerm = (u32, u8, u64, u64);

fn build_poly(terms: Vec<RawTerm>, u_free: bool) -> Poly<Fp> {
    let ctx = ctx();
    let mut out = Poly::zero(ctx);
    for (ue, gi, ge, c) in terms {
        let mut m = Monomial::one();
        if !u_free && ue > 0 {
            m = Monomial::var(VarId::U, ue as u64, &ctx);
        }
        if gi >= 1 && gi <= H as u8 {
            if let Some(next) = m.mul_checked(&Monomial::var(VarId::G(gi), ge, &ctx), &ctx) {
                m = next;
            }
        }
        let term = Poly::monomial(Fp::new(c % P, P), m, ctx);
        out = out.add(&term);
    }
    out
}

fn arb_poly() -> impl Strategy<Value = Poly<Fp>> {
    prop::collection::vec((0u32..U_ORDER, 0u8..=H as u8, 1u64..=6, 1u64..P), 0..5)
        .prop_map(|t| build_poly(t, false))
}

fn arb_unit_poly() -> impl Strategy<Value = Poly<Fp>> {
    prop::collection::vec((0u32..1, 0u8..=H as u8, 1u64..=6, 1u64..P), 0..4)
        .prop_map(|t| build_poly(t, true))
}

fn arb_series() -> impl Strategy<Value = XSeries<Fp>> {
    prop::collection::vec((1usize..7, arb_poly()), 1..4).prop_map(|terms| {
        let mut s = XSeries::zero(ctx(), 12);
        for (d, c) in terms {
            s.set_coeff(d, s.coeff(d).add(&c));
        }
        s
    })
}

/// A series with invertible linear coefficient, so it has a
/// compositional inverse.
fn arb_unit_series() -> impl Strategy<Value = XSeries<Fp>> {
    (1u64..P, arb_series()).prop_map(|(c, mut s)| {
        s.set_coeff(1, Poly::from_i64(c as i64, ctx()));
        s
    })
}

fn arb_group_element() -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(arb_unit_poly(), 1..=(H as usize + 1))
        .prop_map(|coeffs| GroupElement::from_coeffs(coeffs, ctx()).expect("u-free coefficients"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ------------------------------------------------------------------
    // Scalars
    // ------------------------------------------------------------------

    #[test]
    fn fp_inverse_cancels(p in prop::sample::select(vec![3u64, 5, 7, 11]), a in 1u64..11) {
        prop_assume!(a < p);
        let x = Fp::new(a, p);
        let inv = x.inv(p).expect("nonzero residue");
        prop_assert_eq!(x.mul(inv, p), Fp::new(1, p));
    }

    #[test]
    fn fp_pow_is_repeated_multiplication(a in 0u64..3, e in 0u32..12) {
        let x = Fp::new(a, P);
        let mut acc = Fp::new(1, P);
        for _ in 0..e {
            acc = acc.mul(x, P);
        }
        prop_assert_eq!(x.pow(e as u64, P), acc);
    }

    #[test]
    fn binomial_pascal_rule(n in 1u64..40, k in 1u64..40) {
        prop_assume!(k < n);
        let lhs = binom(n, k as i64);
        let rhs = binom(n - 1, k as i64 - 1) + binom(n - 1, k as i64);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn binomial_symmetry(n in 0u64..40, k in 0u64..40) {
        prop_assume!(k <= n);
        prop_assert_eq!(binom(n, k as i64), binom(n, (n - k) as i64));
    }

    #[test]
    fn valuation_is_additive(an in 1i64..50, ad in 1i64..50, bn in 1i64..50, bd in 1i64..50) {
        let a = rat(an, ad);
        let b = rat(bn, bd);
        let (va, vb, vab) = (
            p_valuation(&a, P),
            p_valuation(&b, P),
            p_valuation(&(a * b), P),
        );
        match (va, vb, vab) {
            (PadicVal::Finite(x), PadicVal::Finite(y), PadicVal::Finite(z)) => {
                prop_assert_eq!(x + y, z)
            }
            _ => prop_assert!(false, "finite rationals must have finite valuation"),
        }
    }

    // ------------------------------------------------------------------
    // Polynomial ring
    // ------------------------------------------------------------------

    #[test]
    fn poly_addition_commutes(a in arb_poly(), b in arb_poly()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
    }

    #[test]
    fn poly_multiplication_commutes(a in arb_poly(), b in arb_poly()) {
        prop_assert_eq!(a.mul(&b), b.mul(&a));
    }

    #[test]
    fn poly_multiplication_associates(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
    }

    #[test]
    fn poly_distributes(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
    }

    #[test]
    fn poly_subtraction_is_adding_the_negation(a in arb_poly(), b in arb_poly()) {
        prop_assert_eq!(a.sub(&b), a.add(&b.neg()));
    }

    #[test]
    fn unit_automorphism_is_a_ring_map(a in arb_poly(), b in arb_poly()) {
        prop_assert_eq!(a.add(&b).frobenius(1), a.frobenius(1).add(&b.frobenius(1)));
        prop_assert_eq!(a.mul(&b).frobenius(1), a.frobenius(1).mul(&b.frobenius(1)));
    }

    #[test]
    fn unit_automorphism_has_period_h(a in arb_poly()) {
        prop_assert_eq!(a.frobenius(H), a.clone());
        prop_assert_eq!(a.frobenius(1).frobenius(H - 1), a);
    }

    #[test]
    fn p_power_is_additive(a in arb_poly(), b in arb_poly()) {
        prop_assert_eq!(a.add(&b).p_power(1), a.p_power(1).add(&b.p_power(1)));
    }

    #[test]
    fn u_graded_pieces_reassemble(a in arb_poly()) {
        let mut sum = Poly::zero(ctx());
        for k in 0..U_ORDER {
            sum = sum.add(&a.u_graded(k));
        }
        prop_assert_eq!(sum, a);
    }

    #[test]
    fn substitution_is_a_ring_map(a in arb_poly(), b in arb_poly(), w0 in arb_unit_poly()) {
        // Substitute w = u * (1 + w0), which vanishes to first u-order.
        let w = Poly::one(ctx()).add(&w0).mul_u_pow(1).truncate_u(U_ORDER);
        prop_assert_eq!(
            a.add(&b).substitute_u(&w),
            a.substitute_u(&w).add(&b.substitute_u(&w))
        );
        prop_assert_eq!(
            a.mul(&b).substitute_u(&w),
            a.substitute_u(&w).mul(&b.substitute_u(&w))
        );
    }

    #[test]
    fn shifting_by_u_then_dividing_roundtrips(a in arb_poly(), k in 1u32..3) {
        let shifted = a.mul_u_pow(k);
        prop_assert_eq!(shifted.div_exact_u(k), Some(a));
    }

    // ------------------------------------------------------------------
    // Univariate series
    // ------------------------------------------------------------------

    #[test]
    fn series_distributes(a in arb_series(), b in arb_series(), c in arb_series()) {
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
    }

    #[test]
    fn series_p_power_is_additive(a in arb_series(), b in arb_series()) {
        prop_assert_eq!(a.add(&b).p_power(1), a.p_power(1).add(&b.p_power(1)));
    }

    #[test]
    fn composition_associates(f in arb_series(), g in arb_series(), h in arb_series()) {
        let lhs = compose(&compose(&f, &g).unwrap(), &h).unwrap();
        let rhs = compose(&f, &compose(&g, &h).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn reversion_inverts_composition(f in arb_unit_series()) {
        let inv = revert(&f).expect("invertible linear coefficient");
        let x = XSeries::x(ctx(), f.x_order());
        prop_assert_eq!(compose(&f, &inv).unwrap(), x.clone());
        prop_assert_eq!(compose(&inv, &f).unwrap(), x);
    }

    // ------------------------------------------------------------------
    // Twisted group multiplication
    // ------------------------------------------------------------------

    #[test]
    fn group_identity_is_neutral(a in arb_group_element()) {
        let e = GroupElement::identity(ctx());
        prop_assert_eq!(stabilizer_mul(&e, &a), a.clone());
        prop_assert_eq!(stabilizer_mul(&a, &e), a);
    }

    #[test]
    fn group_multiplication_associates(
        a in arb_group_element(),
        b in arb_group_element(),
        c in arb_group_element(),
    ) {
        let lhs = stabilizer_mul(&stabilizer_mul(&a, &b), &c);
        let rhs = stabilizer_mul(&a, &stabilizer_mul(&b, &c));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn group_multiplication_twists_by_the_automorphism(
        a in arb_unit_poly(),
        b in arb_unit_poly(),
        i in 0usize..4,
        j in 0usize..4,
    ) {
        // A product of pure components lands in filtration i + j with
        // coefficient a * b^(p^i).
        prop_assume!(i + j <= H as usize);
        let c = ctx();
        let mut ca = vec![Poly::zero(c); H as usize + 1];
        ca[i] = a.clone();
        let mut cb = vec![Poly::zero(c); H as usize + 1];
        cb[j] = b.clone();
        let ea = GroupElement::from_coeffs(ca, c).unwrap();
        let eb = GroupElement::from_coeffs(cb, c).unwrap();
        let prod = stabilizer_mul(&ea, &eb);
        prop_assert_eq!(prod.coeff(i + j).clone(), a.mul(&b.frobenius(i as u32)));
        for (k, coeff) in prod.coeffs().iter().enumerate() {
            if k != i + j {
                prop_assert!(coeff.is_zero(), "stray component at index {}", k);
            }
        }
    }
}
