//! Small fully-registered world shared by protocol unit tests.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::crypto::{KeyPair, Signature};
use crate::ledger::{EventChain, QuorumPolicy, SpentCoinFilter};
use crate::{EntityId, Position, SimTime};

pub const BANK: EntityId = EntityId(0);
pub const MERCHANT: EntityId = EntityId(1);
pub const CUSTOMER: EntityId = EntityId(2);
/// Primary endorsers of the customer.
pub const E1: EntityId = EntityId(3);
pub const E2: EntityId = EntityId(4);
/// Endorser of E1 (secondary for the customer).
pub const S1: EntityId = EntityId(5);
pub const MONITORS: [EntityId; 4] = [EntityId(10), EntityId(11), EntityId(12), EntityId(13)];

pub struct World {
    pub bank: Bank,
    pub merchant: KeyPair,
    pub customer: CustomerState,
    pub endorsers: Vec<EndorserState>,
    pub monitors: Vec<KeyPair>,
    pub histories: Vec<LocationHistory>,
    pub policy: QuorumPolicy,
    pub now: SimTime,
}

pub fn link(id: EntityId, limit: u64) -> EndorserLink {
    EndorserLink { endorser: id, limit }
}

fn req(id: EntityId, role: Role, deposit: u64, balance: u64, endorsers: Vec<EndorserLink>) -> RegistrationRequest {
    RegistrationRequest { id, role, deposit, balance, photo: format!("photo-{id}").into_bytes(), endorsers }
}

impl World {
    pub fn new(customer_balance: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut bank = Bank::new(BANK, BankConfig { temp_ids_per_customer: 8, ..BankConfig::default() }, &mut rng);
        let t0 = SimTime::ZERO;
        let merchant = bank.register(&req(MERCHANT, Role::Merchant, 0, 0, vec![]), t0, &mut rng).unwrap();
        let cust = bank
            .register(
                &req(CUSTOMER, Role::Customer, 0, customer_balance, vec![link(E1, 2000), link(E2, 1000)]),
                t0,
                &mut rng,
            )
            .unwrap();
        let mut endorsers = Vec::new();
        for (id, endorsed_by) in [(E1, vec![link(S1, 1500)]), (E2, vec![]), (S1, vec![])] {
            let c = bank.register(&req(id, Role::Endorser, 3000, 0, endorsed_by), t0, &mut rng).unwrap();
            let chain = EventChain::new(id, SpentCoinFilter::new(3000, 0.01).unwrap());
            endorsers.push(EndorserState::new(id, c.keys.private, c.coins, chain));
        }
        let monitors: Vec<KeyPair> = MONITORS
            .iter()
            .map(|&m| bank.register(&req(m, Role::Endorser, 0, 0, vec![]), t0, &mut rng).unwrap().keys)
            .collect();
        let tree = bank.issue_tree(CUSTOMER, t0).unwrap();
        let customer = CustomerState {
            id: CUSTOMER,
            key: cust.keys.private,
            photo: cust.photo,
            photo_blob: format!("photo-{CUSTOMER}").into_bytes(),
            tree,
            temp_ids: VecDeque::from(cust.temp_ids),
        };
        let histories = (0..MONITORS.len())
            .map(|i| {
                LocationHistory::from_samples(
                    12,
                    (0..12).map(|s| (s, Position::new(500.0 + 100.0 * i as f64, 40.0 * s as f64))),
                )
            })
            .collect();
        let mut w = World {
            bank,
            merchant: merchant.keys,
            customer,
            endorsers,
            monitors,
            histories,
            policy: QuorumPolicy::default(),
            now: SimTime::from_secs(10),
        };
        // Give every endorser a fresh chain.
        for i in 0..w.endorsers.len() {
            w.hello(i);
        }
        w.advance(1);
        w
    }

    pub fn dir(&self) -> &Directory {
        self.bank.directory()
    }

    pub fn endorser(&mut self, id: EntityId) -> &mut EndorserState {
        self.endorsers.iter_mut().find(|e| e.id == id).unwrap()
    }

    pub fn checks(&self) -> Vec<MonitorCheck<'_>> {
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

    pub fn hello(&mut self, idx: usize) -> HelloOutcome {
        let bank_dir = self.bank.directory().clone();
        let checks: Vec<MonitorCheck<'_>> = self
            .monitors
            .iter()
            .zip(&self.histories)
            .map(|(k, h)| MonitorCheck {
                key: &k.private,
                own_history: h,
                similarity: SimilarityParams::default(),
                slot: SimTime::from_secs(10),
                known_head: None,
            })
            .collect();
        hello_exchange(&mut self.endorsers[idx], &checks, &bank_dir, &self.policy, Position::new(0.0, 0.0), self.now)
    }

    pub fn order(&mut self, amount: u64) -> Arc<TransactionOrder> {
        Arc::new(customer_order(&mut self.customer, BANK, MERCHANT, 1, 1, amount, self.now).unwrap())
    }

    pub fn bills(&self, order: &Arc<TransactionOrder>, mode: BillingMode) -> Vec<Billing> {
        match merchant_process_order(
            &self.merchant.private,
            order,
            self.dir(),
            mode,
            self.now,
            self.now + SimTime::from_secs(30),
        ) {
            OrderVerdict::Bill(b) => b,
            OrderVerdict::Reject(r) => panic!("order rejected: {r}"),
        }
    }

    /// Countersignatures from the first `n` monitors.
    pub fn countersign(
        &self,
        chain: &EventChain,
        p: &crate::ledger::BlockProposal,
        n: usize,
        parties: &[EntityId],
    ) -> Result<Vec<Signature>, RejectReason> {
        let mut sigs = Vec::new();
        for c in self.checks().iter().take(n) {
            match monitor_countersign(c, chain, p, parties, self.dir(), &self.policy, self.now) {
                MonitorVerdict::Sign(s) => sigs.push(s),
                MonitorVerdict::Refuse(r) => return Err(r),
                MonitorVerdict::Ineligible => {}
            }
        }
        Ok(sigs)
    }

    /// Full endorse → countersign → finalize for one billing.
    pub fn endorse(&mut self, b: &Billing) -> Result<EndorsementMessage, RejectReason> {
        let dir = self.dir().clone();
        let policy = self.policy;
        let now = self.now;
        let e = self.endorser(b.endorser);
        let draft = endorser_endorse(e, b, &dir, &policy, Position::new(0.0, 0.0), now)?;
        let chain = Arc::clone(&e.chain);
        let parties = [b.order.customer, b.merchant];
        let sigs = match self.countersign(&chain, &draft.proposal, 4, &parties) {
            Ok(s) => s,
            Err(r) => {
                endorser_abort(self.endorser(b.endorser), &draft);
                return Err(r);
            }
        };
        endorser_finalize(self.endorser(b.endorser), draft, sigs, &dir, &policy)
    }

    pub fn advance(&mut self, secs: u64) {
        self.now = self.now + SimTime::from_secs(secs);
    }
}
