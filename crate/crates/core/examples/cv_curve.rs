//! Cross-validation score and residual sum of squares across basis
//! dimensions and kernel bandwidths for one sample.
//!
//! cargo run --release --example cv_curve -- [n] [seed]

use plvc::kernel_profile::{log_grid, select_bandwidth, Kernel, KernelSpec, LocalOrder};
use plvc::montecarlo::{generate, stream_rng, Dgp, DgpSpec};
use plvc::selection::{cv_curve, spline_templates, template_grid};
use plvc::DomainMode;

fn main() -> plvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(100, |s| s.parse().expect("n"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let (ds, _) = generate(&DgpSpec::new(Dgp::Dgp1, n), &mut stream_rng(seed, 0));

    let grid = template_grid(&ds, &spline_templates(&[3], 4..=16))?;
    println!("{:>4} {:>12} {:>12}", "K", "CV", "RSS");
    for row in cv_curve(&ds, &grid, DomainMode::Clamp)? {
        println!(
            "{:>4} {:>12.4} {:>12.4}",
            row.total_k,
            row.cv_score.unwrap_or(f64::NAN),
            row.in_sample_rss.unwrap_or(f64::NAN)
        );
    }

    let hs = log_grid(0.02, 0.40, 15);
    let report = select_bandwidth(&ds, &hs, &KernelSpec::new(Kernel::Gaussian, 0.1, LocalOrder::Linear)?)?;
    println!("\n{:>8} {:>12} {:>12}", "h", "CV", "RSS");
    for (i, h) in hs.iter().enumerate() {
        let mark = if i == report.selected { "  <-" } else { "" };
        println!(
            "{h:>8.4} {:>12.4} {:>12.4}{mark}",
            report.scores[i].unwrap_or(f64::NAN),
            report.in_sample_rss[i].unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
