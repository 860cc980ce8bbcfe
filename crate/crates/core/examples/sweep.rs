//! Sweeps the endorser ratio for single-level endorsement and writes the
//! rows as CSV, then prints per-ratio mean TCR.
//!
//! cargo run --release --example sweep -- [out.csv]

use disaster_pay::harness::{mean_by, read_csv, run_sweep, write_csv, SweepSpec};

const SPEC: &str = "
endorsement_levels = 1
nodes = 60
duration_s = 3600
vary endorser_ratio = 0.04 0.08 0.12
seeds = 1..3
";

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep.csv".to_string());
    let spec = SweepSpec::parse(SPEC)?;
    let rows = run_sweep(&spec)?;
    write_csv(std::fs::File::create(&out)?, &rows)?;
    println!("{} rows written to {out}", rows.len());

    let back = read_csv(std::fs::File::open(&out)?)?;
    for (ratio, tcr) in mean_by(&back, "endorser_ratio", |s| s.tcr) {
        println!("endorser ratio {ratio:>5}: mean TCR {tcr:.3}");
    }
    Ok(())
}
