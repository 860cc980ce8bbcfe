//! Stages every scripted attack and shows which defence caught it.
//!
//! cargo run --release --example attacks -- [seed]

use disaster_pay::adversary::{run_attack, AttackKind, AttackScript, Expected};
use disaster_pay::net::ScenarioConfig;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    // A short run; the compressed time scale lets the truck reach the bank
    // within it, so settlement-time fraud checks run too.
    let cfg = ScenarioConfig { seed, duration_s: 800.0, time_scale: 0.004, ..ScenarioConfig::default() };
    for kind in AttackKind::ALL {
        let script = AttackScript::new(kind);
        let r = run_attack(&cfg, &script)?;
        let expected = match r.expected {
            Expected::CaughtBy(reason) => format!("caught by {reason}"),
            Expected::UndetectableByDesign => "undetectable by design".to_string(),
        };
        println!(
            "{:<26} expected {:<32} observed {:<28} {}",
            kind.as_str(),
            expected,
            format!("{:?}", r.outcome),
            if r.as_expected() { "ok" } else { "MISMATCH" }
        );
    }

    // Scripts are plain key = value text.
    let script = AttackScript::parse("kind = collude_monitors\ncolluders = 3\ntrigger_s = 600\n")?;
    let r = run_attack(&cfg, &script)?;
    println!("{} colluding monitors against a quorum of {}: {:?}", script.colluders, cfg.monitor_quorum, r.outcome);
    Ok(())
}
