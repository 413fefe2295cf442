//! Fit a partially linear varying coefficient model to one simulated sample,
//! choosing the spline dimension by leave-one-out cross-validation.
//!
//! cargo run --release --example fit_plvc -- [n] [seed]

use plvc::estimator::{fit, homoskedastic_covariance, FitOptions};
use plvc::montecarlo::{beta1_true, generate, stream_rng, Dgp, DgpSpec};
use plvc::selection::{select_basis, spline_templates, template_grid};
use plvc::design::uniform_specs;
use plvc::DomainMode;

fn main() -> plvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(200, |s| s.parse().expect("n"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));

    let (ds, _) = generate(&DgpSpec::new(Dgp::Dgp1, n), &mut stream_rng(seed, 0));
    let templates = spline_templates(&[3], 4..=16);
    let grid = template_grid(&ds, &templates)?;
    let cv = select_basis(&ds, &grid, DomainMode::Clamp)?;
    println!("selected basis: {}", cv.selected_candidate().label);

    let (lo, hi) = ds.z_range();
    let specs = uniform_specs(&templates[cv.selected], ds.d(), lo, hi)?;
    let f = fit(&ds, &specs, &FitOptions::default())?;
    let se = f.standard_errors();
    let t = f.t_statistics();
    println!("{:<12} {:>10} {:>10} {:>8}", "", "estimate", "std.err", "t");
    for (j, name) in f.linear_labels.iter().enumerate() {
        println!("{name:<12} {:>10.5} {:>10.5} {:>8.2}", f.gamma_hat[j], se[j], t[j]);
    }
    println!("R^2 = {:.4}, sigma^2 = {:.4}", f.r_squared, f.sigma2_hat);

    let homo = homoskedastic_covariance(&f)?;
    println!("robust vs homoskedastic variance of w: {:.4} / {:.4}", f.sigma_hat[(0, 0)], homo[(0, 0)]);

    println!("\n{:>6} {:>10} {:>10}", "z", "beta1_hat", "beta1");
    for i in 0..=10 {
        let z = lo + (hi - lo) * i as f64 / 10.0;
        println!("{z:>6.2} {:>10.4} {:>10.4}", f.beta_at(0, z)?, beta1_true(z));
    }
    Ok(())
}
