use atlasdiffeo::calculus::LocalizedField;
use atlasdiffeo::engine::{estimate_constants, ConstantsOptions, ConstantsRequest};
use atlasdiffeo::group::{certify_diffeo, compose, CertifyOptions, NeighborhoodGauge};
use atlasdiffeo::oracle::flat_oracle;
use atlasdiffeo::weights::pair_omega_exp_log;

#[test]
fn composition_of_translations_adds_on_flat_space() {
    let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec.with_resolution(17);
    let k: Vec<_> = (0..spec.charts.len())
        .map(|i| estimate_constants(&spec, i, &ConstantsRequest::default(), &ConstantsOptions::default(), 1.1).unwrap())
        .collect();
    let deltas: Vec<f64> = k.iter().map(|c| 0.8 * c.rad_exp_fib_inv * c.quot_norm).collect();
    let pair = pair_omega_exp_log(&spec, &k, 0.5, &deltas).unwrap();
    let gauge = NeighborhoodGauge::new(&spec, pair.omega_e, pair.omega_l, 0.5).unwrap();
    let x = LocalizedField::uniform(&spec, "x", &["0.0004"]).unwrap();
    let y = LocalizedField::uniform(&spec, "y", &["-0.0001"]).unwrap();
    let c = compose(&spec, &x, &y, &gauge, &k).unwrap();
    assert!(c.certificate.passed);
    for (i, ch) in spec.charts.iter().enumerate() {
        for p in ch.inner_ball().fitted_points(9) {
            assert!((c.field.value(i, &p).unwrap()[0] - 0.0003).abs() < 1e-12);
        }
    }
}

#[test]
fn steep_field_is_not_certified() {
    let spec = flat_oracle(1, 1.0, 0.75).unwrap().spec;
    let k: Vec<_> = (0..spec.charts.len())
        .map(|i| estimate_constants(&spec, i, &ConstantsRequest::default(), &ConstantsOptions::default(), 1.1).unwrap())
        .collect();
    let x = LocalizedField::uniform(&spec, "x", &["-1.5*x1"]).unwrap();
    let cert = certify_diffeo(&spec, &x, &k, &CertifyOptions::default()).unwrap();
    assert!(!cert.passed);
    assert!(cert.failed_checks().any(|c| c.name == "seminorm_1_1_below_threshold"));
}
