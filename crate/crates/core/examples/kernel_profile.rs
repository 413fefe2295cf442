//! The kernel profile estimator next to the series estimator on the same
//! sample.
//!
//! cargo run --release --example kernel_profile -- [n] [seed]

use plvc::estimator::{fit, FitOptions};
use plvc::kernel_profile::{log_grid, profile_gamma, select_bandwidth, Kernel, KernelSpec, LocalOrder};
use plvc::montecarlo::{beta1_true, generate, stream_rng, Dgp, DgpSpec};
use plvc::design::uniform_specs;
use plvc::BasisTemplate;

fn main() -> plvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(200, |s| s.parse().expect("n"));
    let seed = args.next().map_or(3, |s| s.parse().expect("seed"));
    let (ds, _) = generate(&DgpSpec::new(Dgp::Dgp1, n), &mut stream_rng(seed, 0));

    let hs = log_grid(0.02, 0.40, 15);
    for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
        let template = KernelSpec::new(kernel, hs[0], LocalOrder::Linear)?;
        let report = select_bandwidth(&ds, &hs, &template)?;
        let ks = template.with_bandwidth(hs[report.selected])?;
        let pf = profile_gamma(&ds, &ks)?;
        println!(
            "{kernel:?}: h = {:.4}, gamma = {:.5}, fallbacks = {}",
            ks.bandwidth, pf.gamma[0], pf.fallbacks
        );
    }

    let (lo, hi) = ds.z_range();
    let specs = uniform_specs(&BasisTemplate::cubic(10), ds.d(), lo, hi)?;
    let series = fit(&ds, &specs, &FitOptions::default())?;
    println!("series (k = 10): gamma = {:.5}", series.gamma_hat[0]);

    let ks = KernelSpec::new(Kernel::Gaussian, 0.05, LocalOrder::Linear)?;
    let pf = profile_gamma(&ds, &ks)?;
    println!("\n{:>6} {:>10} {:>10} {:>10}", "z", "kernel", "series", "truth");
    for i in 0..=8 {
        let z = lo + (hi - lo) * i as f64 / 8.0;
        println!("{z:>6.2} {:>10.4} {:>10.4} {:>10.4}", pf.beta_at(0, z)?, series.beta_at(0, z)?, beta1_true(z));
    }
    Ok(())
}
