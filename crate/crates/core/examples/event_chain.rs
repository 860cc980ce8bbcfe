//! An endorser's event chain: monitor-countersigned blocks, the spent-coin
//! Bloom filter, Merkle proofs and the two size modes.
//!
//! cargo run --example event_chain

use std::collections::BTreeMap;

use disaster_pay::crypto::KeyPair;
use disaster_pay::ledger::{
    block_size_bytes, chain_size_bytes, is_double_spent, merchant_view_bytes, verify_proof, CoinId, Event, EventChain,
    MerkleTree, QuorumPolicy, SizeMode, SpentCoinFilter, VerifyContext,
};
use disaster_pay::{EntityId, Position, SimTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let monitors: Vec<KeyPair> = (0..3).map(|i| KeyPair::generate(EntityId(50 + i), None, &mut rng)).collect();
    let keys: BTreeMap<_, _> = monitors.iter().map(|k| (k.public.owner, k.public)).collect();
    let policy = QuorumPolicy::default();
    let countersign = |msg: &[u8]| monitors.iter().map(|k| k.private.sign(msg, SimTime::ZERO).unwrap()).collect();

    // Hello blocks prove presence every 10 s; every third block spends
    // ten coins.
    let mut chain = EventChain::new(EntityId(9), SpentCoinFilter::new(3000, 0.01)?);
    let mut next_coin = 0u64;
    for i in 0..30u64 {
        let event = if i % 3 == 2 {
            let coins = (next_coin..next_coin + 10).map(CoinId::from_u64).collect();
            next_coin += 10;
            Event::Spend(coins)
        } else {
            Event::Hello
        };
        chain.chain_append(
            event,
            Position::new(1500.0, 20.0 * i as f64),
            SimTime::from_secs(10 * (i + 1)),
            countersign,
            &policy,
            &keys,
        )?;
    }

    // Appending without a quorum fails.
    let short = chain.chain_append(
        Event::Hello,
        Position::new(1500.0, 620.0),
        SimTime::from_secs(310),
        |msg| vec![monitors[0].private.sign(msg, SimTime::ZERO).unwrap()],
        &policy,
        &keys,
    );
    println!("one countersignature: {}", short.unwrap_err());

    let now = SimTime::from_secs(305);
    let ctx = VerifyContext { now, policy, keys: &keys };
    println!("{} blocks, verdict {:?}", chain.len(), chain.verify(&ctx));
    println!("an hour later: {:?}", chain.verify(&VerifyContext { now: SimTime::from_secs(3600), ..ctx }));

    let blocks = chain.blocks();
    let full = chain_size_bytes(blocks, SizeMode::Full);
    let light = chain_size_bytes(blocks, SizeMode::Lightweight);
    println!("chain size: full {full} B, lightweight {light} B");
    let spend = &blocks[2];
    println!(
        "spend block: full {} B, lightweight {} B",
        block_size_bytes(spend, SizeMode::Full),
        block_size_bytes(spend, SizeMode::Lightweight)
    );
    let filter = chain.filter();
    println!(
        "merchant download: full {} B, lightweight {} B (filter {} bits, {} hashes)",
        merchant_view_bytes(blocks, filter.size_bytes(), SizeMode::Full),
        merchant_view_bytes(blocks, filter.size_bytes(), SizeMode::Lightweight),
        filter.bits(),
        filter.hashes()
    );

    // A merchant asks whether a presented coin was already spent.
    for id in [CoinId::from_u64(5), CoinId::from_u64(5_000)] {
        println!("coin {} spent: {}", id.as_u64(), is_double_spent(&id, filter, &chain, &ctx)?);
    }

    // Membership proof of one block in a Merkle tree over block hashes.
    let tree = MerkleTree::new(blocks.iter().map(|b| b.hash()).collect())?;
    let proof = tree.proof(17).expect("leaf exists");
    println!(
        "proof for block 17: {} steps, valid {}",
        proof.len(),
        verify_proof(&blocks[17].hash(), &proof, &tree.root())
    );
    println!("same proof for block 16: {}", verify_proof(&blocks[16].hash(), &proof, &tree.root()));

    // Tampering with a stored block breaks the chain at that point.
    let mut bytes = chain.encode(&keys);
    let at = bytes.len() / 2;
    bytes[at] ^= 0x40;
    match EventChain::decode(&bytes) {
        Ok((tampered, keys)) => {
            println!("tampered copy: {:?}", tampered.verify(&VerifyContext { now, policy, keys: &keys }))
        }
        Err(e) => println!("tampered copy does not parse: {e}"),
    }
    Ok(())
}
