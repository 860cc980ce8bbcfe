//! Loads a road network from a file, runs a scenario on it and prints the
//! network and where the market sits.
//!
//! cargo run --release --example road_graph -- [scenario]

use std::path::PathBuf;

use disaster_pay::harness::RunSummary;
use disaster_pay::net::{load_graph, market_vertex, ScenarioConfig, SimHooks, Simulation};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| data.join("village.scenario"));
    let mut cfg = ScenarioConfig::parse(&std::fs::read_to_string(&path)?)?;
    // Road-graph paths are relative to the scenario file.
    if let Some(dir) = path.parent() {
        cfg.road_graph = dir.join(&cfg.road_graph).to_string_lossy().into_owned();
    }

    let graph = load_graph(&cfg)?;
    let (lo, hi) = graph.bounds();
    println!("{} vertices spanning ({:.0}, {:.0})-({:.0}, {:.0})", graph.len(), lo.x, lo.y, hi.x, hi.y);
    let market = market_vertex(&graph);
    println!("market at vertex {market:?} {:?}", graph.position(market));
    for (v, len) in graph.neighbours(market) {
        println!("  road to {v:?}: {len:.0} m");
    }

    let run = Simulation::with_graph(cfg, graph, SimHooks::default())?.run();
    let s = RunSummary::of(&run);
    println!("orders {}  TCR {:.3}  completion {:.2} s", s.orders, s.tcr, s.completion_s);
    Ok(())
}
