use atlasdiffeo::calculus::{seminorm, Atlas, Constant, LocalizedField};
use atlasdiffeo::oracle::flat_oracle;
use atlasdiffeo::tabfile::{read_field, write_field};
use proptest::prelude::*;

fn field(spec: &atlasdiffeo::ManifoldSpec, a: f64, b: f64) -> LocalizedField {
    LocalizedField::uniform(spec, "f", &[&format!("({a:?})*sin(x1) + ({b:?})*x1^2")]).unwrap()
}

#[test]
fn zero_field_has_zero_seminorms() {
    let spec = flat_oracle(2, 1.0, 0.75).unwrap().spec;
    let z = LocalizedField::zero(&spec);
    for k in 0..3 {
        assert_eq!(seminorm(&spec, &z, &Constant(1.0), k, Atlas::A).unwrap().value, 0.0);
    }
}

#[test]
fn linear_field_derivative_seminorm() {
    let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
    let x = LocalizedField::uniform(&spec, "lin", &["0.3*x1"]).unwrap();
    let s1 = seminorm(&spec, &x, &Constant(1.0), 1, Atlas::A).unwrap().value;
    assert!((s1 - 0.3).abs() < 1e-8);
}

#[test]
fn tabulated_field_round_trips_through_file() {
    let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
    let ids: Vec<String> = spec.charts.iter().map(|c| c.id.clone()).collect();
    let t = field(&spec, 0.2, -0.1).tabulate(&spec, Atlas::A, 3).unwrap();
    let mut buf = Vec::new();
    write_field(&mut buf, &t, &ids).unwrap();
    let (read_ids, back) = read_field(buf.as_slice()).unwrap();
    assert_eq!(read_ids, ids);
    for (i, c) in spec.charts.iter().enumerate() {
        for p in c.inner_ball().fitted_points(11) {
            assert_eq!(t.value(i, &p).unwrap(), back.value(i, &p).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seminorm_is_absolutely_homogeneous(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -3.0f64..3.0, k in 0usize..3) {
        let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
        let x = field(&spec, a, b);
        let s = seminorm(&spec, &x, &Constant(1.0), k, Atlas::A).unwrap().value;
        let sc = seminorm(&spec, &x.scaled(c), &Constant(1.0), k, Atlas::A).unwrap().value;
        prop_assert!((sc - c.abs() * s).abs() <= 1e-9 * (1.0 + sc));
    }

    #[test]
    fn seminorm_satisfies_triangle_inequality(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, k in 0usize..3) {
        let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
        let x = field(&spec, a, b);
        let y = field(&spec, c, d);
        let sum = x.combine(1.0, &y, 1.0).unwrap();
        let n = |f: &LocalizedField| seminorm(&spec, f, &Constant(1.0), k, Atlas::A).unwrap().value;
        prop_assert!(n(&sum) <= n(&x) + n(&y) + 1e-9);
    }
}
