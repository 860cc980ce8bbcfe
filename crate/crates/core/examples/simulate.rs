//! Runs one scenario on the simulator and prints its headline metrics,
//! the TCR curve and the size of every endorser's chain.
//!
//! cargo run --release --example simulate -- [seed] [hours]

use disaster_pay::harness::{compute_tcr, tcr_series, MetricsRecord, RunSummary};
use disaster_pay::net::{ScenarioConfig, SimHooks, Simulation};
use disaster_pay::SimTime;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let hours: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.0);

    // Defaults: 100 nodes on a 3 km grid, 4% endorsers, two endorsement
    // levels, fan-out billing, lightweight chains.
    let cfg = ScenarioConfig { seed, duration_s: hours * 3600.0, ..ScenarioConfig::default() };
    let run = Simulation::new(cfg, SimHooks::default())?.run();
    let s = RunSummary::of(&run);
    println!("orders {}  successes {}  TCR {:.3}  VR {:.3}", s.orders, s.successes, s.tcr, s.vr);
    println!("merchant bytes per purchase {:.0}, mean completion {:.2} s", s.merchant_bytes, s.completion_s);
    println!("buffer drops {}  longest hop {:.1} m  journal sum {}", s.buffer_drops, run.max_hop_span, s.journal_sum);

    let m = MetricsRecord::from_transcript(&run.transcript);
    assert_eq!(compute_tcr(&m), s.tcr);
    for (t, tcr) in tcr_series(&m, SimTime::from_secs(900), SimTime::from_secs_f64(hours * 3600.0)) {
        println!("  {:>5.2} h  {}", t.as_secs_f64() / 3600.0, "#".repeat((tcr * 50.0) as usize));
    }
    for c in &run.chains {
        println!("endorser {}: {} blocks, full {} B, lightweight {} B", c.owner, c.blocks, c.full_bytes, c.light_bytes);
    }
    // The first few protocol messages.
    for l in run.transcript.iter().filter(|l| l.tx.is_some()).take(8) {
        println!("{l}");
    }
    Ok(())
}
