use atlasdiffeo::engine::{ExpOptions, MetricField};
use atlasdiffeo::oracle::{cylinder_oracle, flat_oracle, half_plane_oracle, scaled_flat_oracle};
use proptest::prelude::*;

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn scaled_flat_exp_is_translation() {
    let o = scaled_flat_oracle(2, 3.0).unwrap();
    let m = MetricField::new(&o.spec.charts[0]);
    let x = o.spec.charts[0].center().to_vec();
    let y = [0.1, -0.05];
    let z = m.exp_value(&x, &y, ExpOptions::default()).unwrap();
    assert!(sup_dist(&z, &o.exp(&x, &y)) < 1e-12);
}

#[test]
fn cylinder_charts_are_flat() {
    let o = cylinder_oracle(2.0, 3).unwrap();
    for c in &o.spec.charts {
        let m = MetricField::new(c);
        let x = c.center().to_vec();
        let z = m.exp_value(&x, &[0.2, 0.3], ExpOptions::default()).unwrap();
        assert!(sup_dist(&z, &[x[0] + 0.2, x[1] + 0.3]) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn half_plane_exp_matches_closed_form(a in -0.3f64..0.3, b in 1.2f64..1.8, v1 in -0.2f64..0.2, v2 in -0.2f64..0.2) {
        let o = half_plane_oracle(1.0, 2.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let x = [a, b];
        let got = m.exp_value(&x, &[v1, v2], ExpOptions::default()).unwrap();
        prop_assert!(sup_dist(&got, &o.exp(&x, &[v1, v2])) < 1e-7);
    }

    #[test]
    fn half_plane_log_inverts_exp(a in -0.3f64..0.3, b in 1.2f64..1.8, v1 in -0.15f64..0.15, v2 in -0.15f64..0.15) {
        let o = half_plane_oracle(1.0, 2.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let x = [a, b];
        let z = o.exp(&x, &[v1, v2]);
        let l = m.riemannian_log(&x, &z, 0.5, ExpOptions::default()).unwrap();
        prop_assert!(sup_dist(&l.value, &[v1, v2]) < 1e-7);
    }

    #[test]
    fn flat_exp_log_round_trip(p in prop::collection::vec(-0.5f64..0.5, 2), v in prop::collection::vec(-0.2f64..0.2, 2)) {
        let o = flat_oracle(2, 1.0, 0.75).unwrap();
        let c = &o.spec.charts[0];
        let x: Vec<f64> = c.center().iter().zip(&p).map(|(a, b)| a + b).collect();
        let m = MetricField::new(c);
        let z = m.exp_value(&x, &v, ExpOptions::default()).unwrap();
        let l = m.riemannian_log(&x, &z, 0.5, ExpOptions::default()).unwrap();
        prop_assert!(sup_dist(&l.value, &v) < 1e-10);
    }

    #[test]
    fn exp_differential_at_zero_is_sum(a in -0.3f64..0.3, b in 1.2f64..1.8, i in 0usize..2, j in 0usize..2) {
        let o = half_plane_oracle(1.0, 2.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let e = m.geodesic_exp(&[a, b], &[0.0, 0.0], ExpOptions::default()).unwrap();
        let mut v = [0.0; 2];
        let mut w = [0.0; 2];
        v[i] = 1.0;
        w[j] = 1.0;
        let got = e.apply_differential(&v, &w);
        prop_assert!(sup_dist(&got, &[v[0] + w[0], v[1] + w[1]]) < 1e-6);
    }
}
