//! One offline purchase end to end, driven step by step through the
//! protocol roles: registration, order, billing, endorsement with monitor
//! countersignatures, merchant acceptance, settlement and disputes.
//!
//! cargo run --example purchase

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use anyhow::{bail, Context};
use disaster_pay::crypto::KeyPair;
use disaster_pay::ledger::{EventChain, QuorumPolicy, SizeMode, SpentCoinFilter};
use disaster_pay::protocol::{
    customer_order, endorser_endorse, endorser_finalize, hello_exchange, merchant_accept, merchant_process_order,
    monitor_countersign, Bank, BankConfig, BillingMode, CustomerState, DeliveryReceipt, EndorserLink, EndorserState,
    LocationHistory, MonitorCheck, MonitorVerdict, OrderVerdict, PostingSummary, RegistrationRequest, Role,
    SettlementBundle, SimilarityParams,
};
use disaster_pay::{EntityId, Position, SimTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BANK: EntityId = EntityId(0);
const MERCHANT: EntityId = EntityId(1);
const CUSTOMER: EntityId = EntityId(2);
const ENDORSER: EntityId = EntityId(3);

fn registration(
    id: EntityId,
    role: Role,
    deposit: u64,
    balance: u64,
    endorsers: Vec<EndorserLink>,
) -> RegistrationRequest {
    RegistrationRequest { id, role, deposit, balance, photo: format!("photo of {id}").into_bytes(), endorsers }
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t0 = SimTime::ZERO;

    // Before the disaster: everyone registers with the bank. The endorser
    // deposits $30 and receives it as e-coins; the customer has no money
    // but the endorser has agreed to cover up to $20.
    let mut bank = Bank::new(BANK, BankConfig::default(), &mut rng);
    let merchant = bank.register(&registration(MERCHANT, Role::Merchant, 0, 0, vec![]), t0, &mut rng)?.keys;
    let e = bank.register(&registration(ENDORSER, Role::Endorser, 3_000, 0, vec![]), t0, &mut rng)?;
    let c = bank.register(
        &registration(CUSTOMER, Role::Customer, 0, 0, vec![EndorserLink { endorser: ENDORSER, limit: 2_000 }]),
        t0,
        &mut rng,
    )?;
    let monitors: Vec<KeyPair> = (10..13)
        .map(|i| bank.register(&registration(EntityId(i), Role::Endorser, 0, 0, vec![]), t0, &mut rng).map(|c| c.keys))
        .collect::<Result<_, _>>()?;
    println!("endorser holds {} coins of {} cents", e.coins.len(), e.coins[0].value);

    let mut endorser = EndorserState::new(
        ENDORSER,
        e.keys.private,
        e.coins,
        EventChain::new(ENDORSER, SpentCoinFilter::new(3000, 0.01)?),
    );
    let mut customer = CustomerState {
        id: CUSTOMER,
        key: c.keys.private,
        photo: c.photo,
        photo_blob: b"photo of n2".to_vec(),
        tree: bank.issue_tree(CUSTOMER, t0)?,
        temp_ids: VecDeque::from(c.temp_ids),
    };
    let dir = bank.directory().clone();
    let policy = QuorumPolicy::default();

    // Monitors walked elsewhere recently, so their location histories do
    // not match the endorser's and they will countersign.
    let histories: Vec<LocationHistory> = (0..3)
        .map(|i| {
            LocationHistory::from_samples(
                12,
                (0..12).map(|s| (s, Position::new(400.0 * (i + 2) as f64, 30.0 * s as f64))),
            )
        })
        .collect();
    let checks: Vec<MonitorCheck<'_>> = monitors
        .iter()
        .zip(&histories)
        .map(|(k, h)| MonitorCheck {
            key: &k.private,
            own_history: h,
            similarity: SimilarityParams::default(),
            slot: SimTime::from_secs(10),
            known_head: None,
        })
        .collect();

    // The endorser proves presence to the monitors around it.
    let at_market = Position::new(0.0, 0.0);
    let hello = hello_exchange(&mut endorser, &checks, &dir, &policy, at_market, SimTime::from_secs(10));
    println!("hello block appended: {}", hello.appended);

    // 1. The customer orders a $12 item.
    let now = SimTime::from_secs(15);
    let order = Arc::new(customer_order(&mut customer, BANK, MERCHANT, 42, 1, 1_200, now)?);
    println!("order {} for {} cents under a temporary id", hex(&order.tx_id()[..6]), order.amount);

    // 2. The merchant checks the credentials and bills the endorsers.
    let bills = match merchant_process_order(
        &merchant.private,
        &order,
        &dir,
        BillingMode::FanOut,
        now,
        now + SimTime::from_secs(30),
    ) {
        OrderVerdict::Bill(b) => b,
        OrderVerdict::Reject(r) => bail!("merchant refused the order: {r}"),
    };
    println!("billing {} endorser(s)", bills.len());

    // 3. The endorser picks coins and proposes a spend block; monitors
    //    countersign; the endorser appends it and signs the endorsement.
    let now = SimTime::from_secs(16);
    let draft =
        endorser_endorse(&mut endorser, &bills[0], &dir, &policy, at_market, now).map_err(anyhow::Error::msg)?;
    let parties = [CUSTOMER, MERCHANT];
    let sigs: Vec<_> = checks
        .iter()
        .filter_map(|c| match monitor_countersign(c, &endorser.chain, &draft.proposal, &parties, &dir, &policy, now) {
            MonitorVerdict::Sign(s) => Some(s),
            other => {
                println!("monitor {}: {other:?}", c.key.owner);
                None
            }
        })
        .collect();
    println!("{} countersignatures", sigs.len());
    let endorsement = endorser_finalize(&mut endorser, draft, sigs, &dir, &policy).map_err(anyhow::Error::msg)?;
    println!("endorsement carries {} coins, chain now {} blocks", endorsement.coins.len(), endorsement.chain.len());

    // 4. The merchant validates the endorsement. Presenting the same coins
    //    again is caught.
    let mut seen = BTreeSet::new();
    let es = [endorsement.clone(), endorsement];
    let acc = merchant_accept(&order, &es, &dir, &policy, SizeMode::Lightweight, &mut seen, now);
    println!("accepted {:?}, rejected {:?}, complete {}", acc.accepted, acc.rejected, acc.is_complete(order.amount));

    // 5. The customer signs a receipt when the goods change hands.
    let receipt = DeliveryReceipt {
        tx: order.tx_id(),
        customer: CUSTOMER,
        signature: customer.key.sign(&DeliveryReceipt::signed_bytes(&order.tx_id()), now)?,
    };

    // 6. The truck carries the bundle to the bank. The customer is broke,
    //    so the endorser's deposit pays; it keeps a small incentive.
    let bundle = SettlementBundle {
        merchant: MERCHANT,
        order: Arc::clone(&order),
        endorsements: acc.accepted.iter().map(|&i| (es[i].endorser, es[i].coins.clone(), es[i].amount)).collect(),
        released: vec![],
        accepted_at: now,
        receipt: Some(receipt.clone()),
    };
    let at_bank = SimTime::from_secs(48 * 3600);
    let s = bank.settle(&bundle, at_bank)?;
    println!("settlement: {:?}", PostingSummary::from_postings(&s.postings));
    println!("endorser deposit left {} cents, incentives {}", bank.locked(ENDORSER), bank.incentives(ENDORSER));

    // 7. The customer claims the goods never arrived; the merchant's
    //    receipt settles it in the merchant's favour.
    let outcome = bank.dispute(&order.tx_id(), Some(&receipt), at_bank).context("dispute")?;
    println!("dispute with receipt: {outcome:?}, merchant funds {}", bank.merchant_funds(MERCHANT));
    let total: i64 = bank.journal().iter().map(|p| p.delta).sum();
    println!("journal balances to {total}");
    Ok(())
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}
