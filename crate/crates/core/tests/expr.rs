use atlasdiffeo::Expr;
use proptest::prelude::*;

const SOURCES: [&str; 6] = [
    "sin(x1)*x2^2",
    "exp(0.3*x1 - x2)/(2 + cos(x2))",
    "sqrt(1 + x1^2 + x2^2)",
    "tanh(x1*x2) + log(3 + x1)",
    "(1 + x1^2)^x2",
    "abs(x1 + 2)*x2",
];

#[test]
fn parse_errors_are_reported() {
    assert!(Expr::parse("sin(").is_err());
    assert!(Expr::parse("1 +* 2").is_err());
}

proptest! {
    #[test]
    fn symbolic_derivative_matches_differences(i in 0usize..6, var in 0usize..2, a in -0.9f64..0.9, b in 0.1f64..0.9) {
        let e = Expr::parse(SOURCES[i]).unwrap();
        let d = e.derivative(var).unwrap();
        let x = [a, b];
        let h = 1e-5;
        let mut p = x;
        let mut m = x;
        p[var] += h;
        m[var] -= h;
        let fd = (e.eval(&p) - e.eval(&m)) / (2.0 * h);
        prop_assert!((d.eval(&x) - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn constants_evaluate_to_themselves(v in -1e6f64..1e6) {
        prop_assert_eq!(Expr::constant(v).eval(&[]), v);
        prop_assert!(Expr::constant(v).is_constant());
    }
}
