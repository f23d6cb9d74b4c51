use finsler::{Jet, JetSpec};
use num_rational::Ratio;
use proptest::prelude::*;

type Q = Ratio<i64>;

fn spec() -> JetSpec {
    JetSpec::new(2, 3).unwrap()
}

/// Affine jet `c0 + c1 x0 + c2 x1` with small rational coefficients.
fn affine(c: [i64; 3]) -> Jet<Q> {
    let s = spec();
    let x0 = Jet::seed_variable(0, Q::from_integer(0), s).unwrap();
    let x1 = Jet::seed_variable(1, Q::from_integer(0), s).unwrap();
    x0 * Q::from_integer(c[1]) + x1 * Q::from_integer(c[2]) + Q::from_integer(c[0])
}

fn same(a: &Jet<Q>, b: &Jet<Q>) -> bool {
    a.spec() == b.spec() && a.coeffs() == b.coeffs()
}

fn coeff() -> impl Strategy<Value = i64> {
    -6i64..=6
}

fn triple() -> impl Strategy<Value = [i64; 3]> {
    [coeff(), coeff(), coeff()]
}

fn close(a: &Jet<f64>, b: &Jet<f64>, tol: f64) -> bool {
    a.coeffs().iter().zip(b.coeffs()).all(|(p, q)| (p - q).abs() <= tol * (1.0 + p.abs().max(q.abs())))
}

fn real_jet(v: f64, a: f64, b: f64) -> Jet<f64> {
    let s = JetSpec::new(2, 4).unwrap();
    let x0 = Jet::seed_variable(0, v, s).unwrap();
    let x1 = Jet::seed_variable(1, 0.0, s).unwrap();
    &x0 + &(&x0 * &x1) * a + &(&x1 * &x1) * b
}

proptest! {
    #[test]
    fn rational_product_is_associative_and_commutative(a in triple(), b in triple(), c in triple()) {
        let (a, b, c) = (affine(a), affine(b), affine(c));
        prop_assert!(same(&((&a * &b) * &c), &(&a * &(&b * &c))));
        prop_assert!(same(&(&a * &b), &(&b * &a)));
    }

    #[test]
    fn rational_product_distributes(a in triple(), b in triple(), c in triple()) {
        let (a, b, c) = (affine(a), affine(b), affine(c));
        prop_assert!(same(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))));
    }

    #[test]
    fn rational_reciprocal_is_exact(a in triple()) {
        prop_assume!(a[0] != 0);
        let a = affine(a);
        let one = Jet::constant(spec(), Q::from_integer(1));
        prop_assert!(same(&(&a * &a.recip().unwrap()), &one));
    }

    #[test]
    fn leibniz_rule(a in triple(), b in triple(), var in 0usize..2) {
        let (a, b) = (affine(a), affine(b));
        let lhs = (&a * &b).derivative(var).unwrap();
        let rhs = &(&a.derivative(var).unwrap() * &b.truncate(2)) + &(&a.truncate(2) * &b.derivative(var).unwrap());
        prop_assert!(same(&lhs, &rhs));
    }

    #[test]
    fn exp_and_ln_are_inverse(v in 0.2f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let j = real_jet(v, a, b);
        prop_assert!(close(&j.ln().unwrap().exp(), &j, 1e-12));
    }

    #[test]
    fn sqrt_squares_back(v in 0.2f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let j = real_jet(v, a, b);
        let r = j.sqrt().unwrap();
        prop_assert!(close(&(&r * &r), &j, 1e-12));
    }

    #[test]
    fn powf_matches_exp_of_scaled_ln(v in 0.2f64..3.0, a in -1.0f64..1.0, p in -2.5f64..2.5) {
        let j = real_jet(v, a, 0.3);
        let via_ln = j.ln().unwrap().scale(p).exp();
        prop_assert!(close(&j.powf(p).unwrap(), &via_ln, 1e-11));
    }

    #[test]
    fn pythagorean_identity(v in -3.0f64..3.0, a in -1.0f64..1.0) {
        let j = real_jet(v, a, -0.4);
        let one = &(&j.sin() * &j.sin()) + &(&j.cos() * &j.cos());
        prop_assert!(close(&one, &Jet::constant(j.spec(), 1.0), 1e-13));
    }
}

#[test]
fn single_precision_jets_work() {
    let s = JetSpec::new(2, 3).unwrap();
    let x = Jet::seed_variable(0, 4.0f32, s).unwrap();
    let r = x.sqrt().unwrap();
    assert!((r.value() - 2.0).abs() < 1e-6);
    // d/dx sqrt(x) = 1 / (2 sqrt(x)) = 1/4 at x = 4.
    assert!((r.extract_partial(&[1, 0]).unwrap() - 0.25).abs() < 1e-6);
}
