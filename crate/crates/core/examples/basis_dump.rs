//! Evaluate a cubic B-spline basis on a grid and check that it sums to one.
//!
//! cargo run --release --example basis_dump -- [dimension]

use plvc::basis::{cardinal_cubic, make_knots, KnotVector};
use plvc::DomainMode;

fn main() -> plvc::Result<()> {
    let k: usize = std::env::args().nth(1).map_or(7, |s| s.parse().expect("dimension"));
    let knots: KnotVector = make_knots(0.0, 2.0, k - 4, 3)?;
    println!("interior knots: {:?}", knots.interior());

    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let z = 2.0 * i as f64 / 20.0;
        let b = knots.eval(z, DomainMode::Strict)?;
        worst = worst.max((b.iter().sum::<f64>() - 1.0).abs());
        let cells: Vec<String> = b.iter().map(|v| format!("{v:.3}")).collect();
        println!("{z:>4.1} | {}", cells.join(" "));
    }
    println!("max |sum - 1| = {worst:.2e}");
    println!("cardinal cubic at the middle knot: {}", cardinal_cubic(2.0, [0.0, 1.0, 2.0, 3.0, 4.0]));
    Ok(())
}
