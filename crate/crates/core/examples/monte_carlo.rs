//! A reduced-scale replication study: MSE of the constant coefficient and
//! MASE of the coefficient curve for the series and kernel estimators.
//!
//! cargo run --release --example monte_carlo -- [reps] [seed]

use plvc::montecarlo::{run_sim, Dgp, DgpSpec, MethodSpec};

fn main() -> plvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().map_or(200, |s| s.parse().expect("reps"));
    let seed = args.next().map_or(42, |s| s.parse().expect("seed"));
    let methods = [MethodSpec::default_spline(), MethodSpec::default_kernel()];

    println!("{:<6} {:>5} {:<8} {:>10} {:>10} {:>8}", "dgp", "n", "method", "MSE(g)", "MASE(b1)", "mode");
    for dgp in [Dgp::Dgp1, Dgp::Dgp2] {
        for n in [100, 200] {
            let report = run_sim(&DgpSpec::new(dgp, n), &methods, reps, seed)?;
            for m in &report.methods {
                let mode = match (m.modal_selected_k_total, m.modal_selected_h) {
                    (Some(k), _) => format!("K={k}"),
                    (_, Some(h)) => format!("h={h:.3}"),
                    _ => "-".into(),
                };
                println!(
                    "{:<6} {n:>5} {:<8} {:>10.5} {:>10.5} {mode:>8}",
                    dgp.name(),
                    m.method,
                    m.mse_gamma[0],
                    m.mase_beta[0]
                );
            }
        }
    }
    Ok(())
}
