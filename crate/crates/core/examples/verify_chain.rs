//! Saves an endorser's chain from a simulation, reloads it and verifies
//! it, then shows what stale, rolled-back and edited copies look like.
//!
//! cargo run --release --example verify_chain

use disaster_pay::ledger::{EventChain, QuorumPolicy, VerifyContext};
use disaster_pay::net::{ScenarioConfig, SimHooks, Simulation};

fn main() -> anyhow::Result<()> {
    let cfg = ScenarioConfig { nodes: 60, duration_s: 1800.0, ..ScenarioConfig::default() };
    let policy = QuorumPolicy { quorum: cfg.monitor_quorum, ..QuorumPolicy::default() };
    let run = Simulation::new(cfg, SimHooks::default())?.run();
    let chain = run.final_chains.iter().max_by_key(|c| c.len()).expect("at least one endorser");

    let bytes = chain.encode(&run.directory.keys);
    let path = std::env::temp_dir().join(format!("{}.chain", chain.owner));
    std::fs::write(&path, &bytes)?;
    println!("wrote {} blocks of {} to {} ({} bytes)", chain.len(), chain.owner, path.display(), bytes.len());

    let (loaded, keys) = EventChain::decode(&std::fs::read(&path)?)?;
    let now = loaded.last_block().map(|b| b.timestamp).unwrap_or_default();
    let ctx = VerifyContext { now, policy, keys: &keys };
    println!("reloaded: {:?}", loaded.verify(&ctx));

    // The file on its own keeps verifying only while the owner keeps
    // adding hello blocks: two minutes of silence and it is stale.
    let later = VerifyContext { now: now + disaster_pay::SimTime::from_secs(120), ..ctx };
    println!("two minutes later: {:?}", loaded.verify(&later));

    // A copy restored from an older backup is internally consistent. What
    // stops it is the monitors that countersigned the newer blocks (see the
    // reset_recovery attack), not the file itself.
    let old = loaded.prefix(loaded.len() / 2);
    println!("older backup of {} blocks: {:?}", old.len(), old.verify(&ctx));

    // One flipped bit in the middle of the file.
    let mut edited = bytes.clone();
    let at = edited.len() / 2;
    edited[at] ^= 1;
    match EventChain::decode(&edited) {
        Ok((c, k)) => println!("edited: {:?}", c.verify(&VerifyContext { keys: &k, ..ctx })),
        Err(e) => println!("edited: unreadable ({e})"),
    }
    Ok(())
}
