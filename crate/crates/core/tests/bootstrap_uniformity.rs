use plvc::montecarlo::{generate, stream_rng, Dgp, DgpSpec};
use plvc::testing::{wild_bootstrap_test, ModelClass, TestOptions};
use plvc::{BasisTemplate, InterceptMode};
use rayon::prelude::*;

/// Kolmogorov-Smirnov distance between the sample and the discrete uniform
/// law on {1/(b+1), ..., 1} that bootstrap p-values follow under the null.
fn ks_discrete_uniform(p: &mut [f64], b: usize) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let m = (b + 1) as f64;
    (1..=b + 1)
        .map(|k| {
            let t = k as f64 / m;
            let ecdf = p.iter().filter(|&&v| v <= t + 1e-12).count() as f64 / n;
            (ecdf - t).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn null_p_values_are_uniform() {
    let reps = 200u64;
    let b = 99;
    let template = BasisTemplate::cubic(6);
    let mut p: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let spec = DgpSpec {
                intercept: InterceptMode::Varying,
                ..DgpSpec::new(Dgp::Dgp1, 150)
            };
            let (ds, _) = generate(&spec, &mut stream_rng(8_100, r));
            let null = ModelClass::Plvc { template };
            let alt = ModelClass::FullVc { template };
            wild_bootstrap_test(&ds, &null, &alt, b, 8_200 + r, &TestOptions::default())
                .unwrap()
                .p_value
        })
        .collect();
    assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
    let d = ks_discrete_uniform(&mut p, b);
    let critical = 1.224 / (reps as f64).sqrt();
    assert!(d < critical, "KS distance {d:.4} exceeds {critical:.4}");
}
