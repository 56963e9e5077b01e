use atlasdiffeo::engine::{estimate_constants, ConstantsOptions, ConstantsRequest};
use atlasdiffeo::oracle::{cylinder_oracle, flat_oracle};
use atlasdiffeo::weights::{
    construct_adjusted, estimate_bound_families, pair_omega_exp_log, saturate, spec_weights, BoundOptions, DEFAULT_WEIGHT_CAP,
};
use atlasdiffeo::ManifoldSpec;
use proptest::prelude::*;

fn saturated_levels(spec: &ManifoldSpec) -> atlasdiffeo::weights::WeightSet {
    let k: Vec<_> = (0..spec.charts.len())
        .map(|i| estimate_constants(spec, i, &ConstantsRequest::default(), &ConstantsOptions::default(), 1.1).unwrap())
        .collect();
    let de: Vec<f64> = k.iter().map(|c| c.delta_exp).collect();
    let dl: Vec<f64> = k.iter().map(|c| c.delta_log).collect();
    let families = estimate_bound_families(spec, &k, &de, &dl, 2, &BoundOptions::default()).unwrap();
    saturate(spec, spec_weights(spec), &families, 3, DEFAULT_WEIGHT_CAP).unwrap()
}

#[test]
fn saturation_keeps_initial_weights_and_bounds_new_ones() {
    for spec in [flat_oracle(2, 1.0, 0.75).unwrap().spec, cylinder_oracle(2.0, 3).unwrap().spec] {
        let set = saturated_levels(&spec);
        assert!(set.certificate.passed);
        let initial: Vec<String> = spec_weights(&spec).into_iter().map(|w| w.name).collect();
        for name in &initial {
            assert!(set.weights.iter().any(|w| w.level == 0 && &w.weight.name == name));
        }
        let names: Vec<&String> = set.weights.iter().map(|w| &w.weight.name).collect();
        for w in set.weights.iter().filter(|w| w.level > 0) {
            assert!(
                names.contains(&&w.bounded_by),
                "{} bounded by {}",
                w.weight.name,
                w.bounded_by
            );
            assert!(w.factor.is_finite() && w.factor > 0.0);
        }
    }
}

#[test]
fn flat_omega_pair_closed_form() {
    let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
    let k: Vec<_> = (0..spec.charts.len())
        .map(|i| estimate_constants(&spec, i, &ConstantsRequest::default(), &ConstantsOptions::default(), 1.1).unwrap())
        .collect();
    let pair = pair_omega_exp_log(&spec, &k, 0.5, &vec![0.2; spec.charts.len()]).unwrap();
    for (i, c) in spec.charts.iter().enumerate() {
        let x = c.center().to_vec();
        assert_eq!(pair.omega_e.eval(&spec, i, &x), 30.0);
        assert_eq!(pair.omega_l.eval(&spec, i, &x), 10.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adjusted_weight_dominates_inverse_radius(t in 0.05f64..3.0) {
        let spec = flat_oracle(2, 1.0, 0.75).unwrap().spec;
        let targets = vec![t; spec.charts.len()];
        let (w, cert) = construct_adjusted(&spec, "adj", &targets).unwrap();
        prop_assert!(cert.passed);
        for (i, c) in spec.charts.iter().enumerate() {
            for p in c.inner_ball().fitted_points(7) {
                prop_assert!(w.eval(&spec, i, &p).abs() >= (1.0 / t).max(1.0) * (1.0 - 1e-12));
            }
        }
    }
}
