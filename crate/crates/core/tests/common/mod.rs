//! A small registered market driven through the public protocol API.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use disaster_pay::crypto::KeyPair;
use disaster_pay::ledger::{EventChain, QuorumPolicy, SizeMode, SpentCoinFilter};
use disaster_pay::protocol::{
    endorser_abort, endorser_endorse, endorser_finalize, hello_exchange, merchant_accept, merchant_process_order,
    monitor_countersign, Bank, BankConfig, Billing, BillingMode, CustomerState, Directory, EndorsementMessage,
    EndorserLink, EndorserState, LocationHistory, MonitorCheck, MonitorVerdict, OrderVerdict, RegistrationRequest,
    RejectReason, Role, SettlementBundle, SimilarityParams, TransactionOrder,
};
use disaster_pay::{EntityId, Position, SimTime};
use rand::Rng;

pub const BANK: EntityId = EntityId(0);
pub const MERCHANT: EntityId = EntityId(1);

pub struct Market {
    pub bank: Bank,
    pub merchant: KeyPair,
    pub customers: Vec<CustomerState>,
    pub endorsers: Vec<EndorserState>,
    pub monitors: Vec<KeyPair>,
    pub histories: Vec<LocationHistory>,
    pub policy: QuorumPolicy,
    pub now: SimTime,
}

fn req(id: EntityId, role: Role, deposit: u64, balance: u64, endorsers: Vec<EndorserLink>) -> RegistrationRequest {
    RegistrationRequest { id, role, deposit, balance, photo: format!("photo-{id}").into_bytes(), endorsers }
}

impl Market {
    /// `balances.len()` customers, each endorsed by two of `n_endorsers`
    /// endorsers up to `limit` cents, plus four monitors.
    pub fn new(rng: &mut impl Rng, balances: &[u64], n_endorsers: usize, limit: u64) -> Self {
        let mut bank = Bank::new(BANK, BankConfig::default(), rng);
        let t0 = SimTime::ZERO;
        let merchant = bank.register(&req(MERCHANT, Role::Merchant, 0, 0, vec![]), t0, rng).unwrap().keys;
        let endorser_ids: Vec<EntityId> = (0..n_endorsers).map(|i| EntityId(10 + i as u16)).collect();
        let mut endorsers = Vec::new();
        for &id in &endorser_ids {
            let c = bank.register(&req(id, Role::Endorser, 2 * limit, 0, vec![]), t0, rng).unwrap();
            let chain = EventChain::new(id, SpentCoinFilter::new(3000, 0.01).unwrap());
            endorsers.push(EndorserState::new(id, c.keys.private, c.coins, chain));
        }
        let monitors: Vec<KeyPair> = (0..4)
            .map(|i| bank.register(&req(EntityId(900 + i), Role::Endorser, 0, 0, vec![]), t0, rng).unwrap().keys)
            .collect();
        let histories = (0..4)
            .map(|i| {
                LocationHistory::from_samples(
                    12,
                    (0..12).map(|s| (s, Position::new(500.0 + 100.0 * i as f64, 40.0 * s as f64))),
                )
            })
            .collect();
        let mut customers = Vec::new();
        for (i, &balance) in balances.iter().enumerate() {
            let id = EntityId(100 + i as u16);
            let a = endorser_ids[i % n_endorsers];
            let b = endorser_ids[(i + 1) % n_endorsers];
            let links = vec![EndorserLink { endorser: a, limit }, EndorserLink { endorser: b, limit }];
            let c = bank.register(&req(id, Role::Customer, 0, balance, links), t0, rng).unwrap();
            customers.push(CustomerState {
                id,
                key: c.keys.private,
                photo: c.photo,
                photo_blob: format!("photo-{id}").into_bytes(),
                tree: bank.issue_tree(id, t0).unwrap(),
                temp_ids: VecDeque::from(c.temp_ids),
            });
        }
        Market {
            bank,
            merchant,
            customers,
            endorsers,
            monitors,
            histories,
            policy: QuorumPolicy::default(),
            now: SimTime::from_secs(10),
        }
    }

    pub fn dir(&self) -> Directory {
        self.bank.directory().clone()
    }

    fn checks(&self) -> Vec<MonitorCheck<'_>> {
        self.monitors
            .iter()
            .zip(&self.histories)
            .map(|(k, h)| MonitorCheck {
                key: &k.private,
                own_history: h,
                similarity: SimilarityParams::default(),
                slot: SimTime::from_secs(10),
                known_head: None,
            })
            .collect()
    }

    /// Every endorser proves presence so its chain is fresh.
    pub fn hellos(&mut self) {
        let dir = self.dir();
        let (policy, now) = (self.policy, self.now);
        let mut endorsers = std::mem::take(&mut self.endorsers);
        {
            let checks = self.checks();
            for e in &mut endorsers {
                hello_exchange(e, &checks, &dir, &policy, Position::new(0.0, 0.0), now);
            }
        }
        self.endorsers = endorsers;
    }

    pub fn order(&mut self, customer: usize, amount: u64) -> Arc<TransactionOrder> {
        let c = &mut self.customers[customer];
        Arc::new(disaster_pay::protocol::customer_order(c, BANK, MERCHANT, 1, 1, amount, self.now).unwrap())
    }

    pub fn bills(&self, order: &Arc<TransactionOrder>) -> Vec<Billing> {
        let deadline = self.now + SimTime::from_secs(30);
        match merchant_process_order(
            &self.merchant.private,
            order,
            &self.dir(),
            BillingMode::FanOut,
            self.now,
            deadline,
        ) {
            OrderVerdict::Bill(b) => b,
            OrderVerdict::Reject(r) => panic!("order rejected: {r}"),
        }
    }

    /// Endorse, countersign with every monitor, finalize.
    pub fn endorse(&mut self, b: &Billing) -> Result<EndorsementMessage, RejectReason> {
        let dir = self.dir();
        let (policy, now) = (self.policy, self.now);
        let idx = self.endorsers.iter().position(|e| e.id == b.endorser).unwrap();
        let draft = endorser_endorse(&mut self.endorsers[idx], b, &dir, &policy, Position::new(0.0, 0.0), now)?;
        let parties = [b.order.customer, b.merchant];
        let chain = Arc::clone(&self.endorsers[idx].chain);
        let mut sigs = Vec::new();
        for c in self.checks() {
            match monitor_countersign(&c, &chain, &draft.proposal, &parties, &dir, &policy, now) {
                MonitorVerdict::Sign(s) => sigs.push(s),
                MonitorVerdict::Refuse(r) => {
                    endorser_abort(&mut self.endorsers[idx], &draft);
                    return Err(r);
                }
                MonitorVerdict::Ineligible => {}
            }
        }
        endorser_finalize(&mut self.endorsers[idx], draft, sigs, &dir, &policy)
    }

    /// Merchant acceptance turned into the bundle the truck carries out.
    pub fn bundle(&self, order: &Arc<TransactionOrder>, es: &[EndorsementMessage]) -> SettlementBundle {
        let a = merchant_accept(
            order,
            es,
            &self.dir(),
            &self.policy,
            SizeMode::Lightweight,
            &mut BTreeSet::new(),
            self.now,
        );
        assert!(a.is_complete(order.amount), "order not covered: {a:?}");
        SettlementBundle {
            merchant: MERCHANT,
            order: Arc::clone(order),
            endorsements: a.accepted.iter().map(|&i| (es[i].endorser, es[i].coins.clone(), es[i].amount)).collect(),
            released: a.unused.iter().map(|&i| (es[i].endorser, es[i].coins.clone())).collect(),
            accepted_at: self.now,
            receipt: None,
        }
    }

    /// Hands freshly issued coins back to their endorsers.
    pub fn deliver(&mut self, deliveries: &[disaster_pay::protocol::CoinDelivery]) {
        for d in deliveries {
            let e = self.endorsers.iter_mut().find(|e| e.id == d.endorser).unwrap();
            e.receive_coins(d.coins.iter().cloned());
        }
    }

    pub fn advance(&mut self, secs: u64) {
        self.now = self.now + SimTime::from_secs(secs);
    }
}

/// Settles `n` random purchases by solvent customers and checks each one
/// against the online oracle: same customer debit, no endorser charged,
/// and everything debited ends up with the merchant or as incentives.
pub fn oracle_check(seed: u64, n: usize) -> Result<(), String> {
    use disaster_pay::protocol::PostingSummary;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let balances: Vec<u64> = (0..20).map(|_| rng.gen_range(50_000..200_000)).collect();
    let mut m = Market::new(&mut rng, &balances, 6, 4_000);
    let mut done = 0;
    while done < n {
        if done % 20 == 0 {
            m.hellos();
        }
        m.advance(1);
        let c = rng.gen_range(0..m.customers.len());
        let have = m.bank.balance(m.customers[c].id);
        if have == 0 {
            continue;
        }
        let amount = rng.gen_range(1..=have.min(4_000));
        let order = m.order(c, amount);
        let online =
            PostingSummary::from_postings(&m.bank.online_settlement_oracle(&order).map_err(|e| e.to_string())?);
        let bills = m.bills(&order);
        let k = rng.gen_range(1..=bills.len());
        let es = bills[..k]
            .iter()
            .map(|b| m.endorse(b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|r| format!("purchase {done} ({amount}): {r}"))?;
        let bundle = m.bundle(&order, &es);
        let s = m.bank.settle(&bundle, m.now).map_err(|e| e.to_string())?;
        m.deliver(&s.deliveries);
        let offline = PostingSummary::from_postings(&s.postings);
        let sum: i64 = s.postings.iter().map(|p| p.delta).sum();
        if sum != 0
            || !s.fraud.is_empty()
            || offline.customer_debit != online.customer_debit
            || offline.endorser_debit != online.endorser_debit
            || offline.merchant_credit + offline.incentives != online.merchant_credit
        {
            return Err(format!("purchase {done} ({amount} cents): offline {offline:?} online {online:?} sum {sum}"));
        }
        done += 1;
    }
    let total: i64 = m.bank.journal().iter().map(|p| p.delta).sum();
    if total != 0 {
        return Err(format!("journal sums to {total}"));
    }
    Ok(())
}
