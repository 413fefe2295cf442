//! Write a simulated sample and a matching run configuration, ready for the
//! `plvc` binary.
//!
//! cargo run --release --example write_sample -- DIR [n] [seed]
//! cargo run --release --bin plvc -- fit --config DIR/run.toml --data DIR/sample.csv --out DIR/out

use std::fs;
use std::path::PathBuf;

use plvc::montecarlo::{generate, stream_rng, Dgp, DgpSpec};
use plvc::InterceptMode;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "sample".into()));
    let n = args.next().map_or(200, |s| s.parse().expect("n"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let spec = DgpSpec {
        intercept: InterceptMode::Varying,
        ..DgpSpec::new(Dgp::Dgp1, n)
    };
    let (ds, _) = generate(&spec, &mut stream_rng(seed, 0));

    fs::create_dir_all(&dir)?;
    let mut csv = String::from("y,w,x,z\n");
    for i in 0..ds.n() {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", ds.y()[i], ds.w()[(i, 0)], ds.x()[(i, 1)], ds.z()[i]));
    }
    fs::write(dir.join("sample.csv"), csv)?;
    fs::write(
        dir.join("run.toml"),
        "schema_version = 1\nseed = 17\n\n[data]\nresponse = \"y\"\nlinear = [\"w\"]\nvarying = [\"x\"]\nindex = \"z\"\n\n[test]\nbootstrap = 199\n",
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}
