use std::collections::BTreeMap;

use rand::Rng;

use super::messages::{CoinDelivery, DeliveryReceipt, SettlementBundle, TempId, TransactionOrder, TxId};
use super::roles::Directory;
use super::{EndorsementTree, EndorserLink, ProtocolError, Role};
use crate::crypto::{
    blind, issue_signed_photo, unblind, BlindKeyPair, BlindingFactor, KeyPair, SecretKey, SignedPhoto,
};
use crate::ledger::{CoinId, ECoin};
use crate::{EntityId, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    /// Face value of one e-coin, in cents.
    pub coin_value: u64,
    pub coin_lifetime: SimTime,
    /// Endorser incentive in basis points of the transaction amount.
    pub incentive_bps: u64,
    /// How long a merchant's proceeds stay in escrow.
    pub dispute_window: SimTime,
    pub temp_ids_per_customer: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            coin_value: 200,
            coin_lifetime: SimTime::from_secs(30 * 24 * 3600),
            incentive_bps: 300,
            dispute_window: SimTime::from_secs(48 * 3600),
            temp_ids_per_customer: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub id: EntityId,
    pub role: Role,
    /// Endorser deposit (cents) converted into e-coins.
    pub deposit: u64,
    /// Opening account balance (cents).
    pub balance: u64,
    pub photo: Vec<u8>,
    /// People who agreed to endorse this entity, with their limits.
    pub endorsers: Vec<EndorserLink>,
}

#[derive(Debug, Clone)]
pub struct Credentials {
    pub id: EntityId,
    pub keys: KeyPair,
    pub photo: SignedPhoto,
    pub coins: Vec<ECoin>,
    pub temp_ids: Vec<TempId>,
}

/// A ledger account touched by a posting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Account {
    /// Spendable balance of a customer (or any holder).
    Customer(EntityId),
    /// Deposit backing an endorser's outstanding coins.
    Locked(EntityId),
    /// Merchant proceeds held until the dispute window closes.
    Escrow(EntityId),
    Merchant(EntityId),
    /// Incentives earned by an endorser.
    Endorser(EntityId),
}

/// One signed movement of money, in cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub tx: TxId,
    pub account: Account,
    pub delta: i64,
}

/// Totals that an online bank would produce for the same purchase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PostingSummary {
    pub customer_debit: u64,
    pub endorser_debit: u64,
    pub merchant_credit: u64,
    pub incentives: u64,
}

impl PostingSummary {
    pub fn from_postings(postings: &[Posting]) -> Self {
        let mut s = PostingSummary::default();
        for p in postings {
            let mag = p.delta.unsigned_abs();
            match (p.account, p.delta < 0) {
                (Account::Customer(_), true) => s.customer_debit += mag,
                (Account::Customer(_), false) => s.customer_debit -= mag,
                (Account::Locked(_), true) => s.endorser_debit += mag,
                (Account::Locked(_), false) => s.endorser_debit -= mag,
                (Account::Escrow(_), false) | (Account::Merchant(_), false) => s.merchant_credit += mag,
                (Account::Escrow(_), true) => s.merchant_credit -= mag,
                (Account::Merchant(_), true) => s.merchant_credit -= mag,
                (Account::Endorser(_), false) => s.incentives += mag,
                (Account::Endorser(_), true) => s.incentives -= mag,
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinStatus {
    Outstanding,
    /// Redeemed to pay for a transaction.
    Settled,
    /// Returned to the endorser and replaced by a fresh coin.
    Reissued,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisputeOutcome {
    /// The merchant proved delivery; escrow released to it.
    Released { amount: u64 },
    /// No proof of delivery; escrow returned to the payers.
    Refunded { amount: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Balances {
    balance: u64,
    locked: u64,
    incentives: u64,
    merchant: u64,
}

#[derive(Debug, Clone)]
struct Escrow {
    merchant: EntityId,
    customer: EntityId,
    amount: u64,
    deadline: SimTime,
    /// Who funded the escrow, for refunds.
    payers: Vec<(Account, u64)>,
}

/// Result of settling one bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement {
    pub tx: TxId,
    pub postings: Vec<Posting>,
    /// Fresh coins replacing coins that did not end up paying.
    pub deliveries: Vec<CoinDelivery>,
    /// Endorsers caught presenting coins that were already redeemed.
    pub fraud: Vec<EntityId>,
}

/// The offline bank: registration, coin issuance and deferred settlement.
#[derive(Debug)]
pub struct Bank {
    pub id: EntityId,
    pub config: BankConfig,
    keys: KeyPair,
    blind_keys: BlindKeyPair,
    directory: Directory,
    balances: BTreeMap<EntityId, Balances>,
    endorsers_of: BTreeMap<EntityId, Vec<EndorserLink>>,
    coins: BTreeMap<CoinId, (EntityId, CoinStatus)>,
    next_coin: u64,
    escrows: BTreeMap<TxId, Escrow>,
    settled: BTreeMap<TxId, Settlement>,
    journal: Vec<Posting>,
}

impl Bank {
    pub fn new<R: Rng + ?Sized>(id: EntityId, config: BankConfig, rng: &mut R) -> Self {
        let keys = KeyPair::generate(id, None, rng);
        let blind_keys = BlindKeyPair::generate(id, rng);
        let mut dir_keys = BTreeMap::new();
        dir_keys.insert(id, keys.public);
        let directory = Directory { bank_id: id, bank: keys.public, bank_blind: blind_keys.public, keys: dir_keys };
        Bank {
            id,
            config,
            keys,
            blind_keys,
            directory,
            balances: BTreeMap::new(),
            endorsers_of: BTreeMap::new(),
            coins: BTreeMap::new(),
            next_coin: 1,
            escrows: BTreeMap::new(),
            settled: BTreeMap::new(),
            journal: Vec::new(),
        }
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn signing_key(&self) -> &SecretKey {
        &self.keys.private
    }

    pub fn balance(&self, id: EntityId) -> u64 {
        self.balances.get(&id).map_or(0, |b| b.balance)
    }

    pub fn locked(&self, id: EntityId) -> u64 {
        self.balances.get(&id).map_or(0, |b| b.locked)
    }

    pub fn incentives(&self, id: EntityId) -> u64 {
        self.balances.get(&id).map_or(0, |b| b.incentives)
    }

    pub fn merchant_funds(&self, id: EntityId) -> u64 {
        self.balances.get(&id).map_or(0, |b| b.merchant)
    }

    pub fn escrowed(&self, tx: &TxId) -> Option<u64> {
        self.escrows.get(tx).map(|e| e.amount)
    }

    pub fn coin_status(&self, id: &CoinId) -> Option<CoinStatus> {
        self.coins.get(id).map(|(_, s)| *s)
    }

    pub fn journal(&self) -> &[Posting] {
        &self.journal
    }

    pub fn settlement(&self, tx: &TxId) -> Option<&Settlement> {
        self.settled.get(tx)
    }

    /// Issues keys, a signed photo, e-coins for any deposit and a batch of
    /// blind-signed temporary IDs.
    pub fn register<R: Rng + ?Sized>(
        &mut self,
        req: &RegistrationRequest,
        now: SimTime,
        rng: &mut R,
    ) -> Result<Credentials, ProtocolError> {
        if self.balances.contains_key(&req.id) || req.id == self.id {
            return Err(ProtocolError::DuplicateRegistration(req.id));
        }
        let keys = KeyPair::generate(req.id, None, rng);
        let photo = issue_signed_photo(&self.keys.private, &keys.private, &req.photo, now)?;
        let coins = self.issue_coins(req.id, req.deposit, now)?;
        let n_temp = if req.role == Role::Customer { self.config.temp_ids_per_customer } else { 0 };
        let temp_ids = (0..n_temp).map(|_| self.blind_issue_temp_id(rng)).collect::<Result<_, _>>()?;
        self.balances.insert(req.id, Balances { balance: req.balance, locked: req.deposit, ..Default::default() });
        self.endorsers_of.insert(req.id, req.endorsers.clone());
        self.directory.keys.insert(req.id, keys.public);
        Ok(Credentials { id: req.id, keys, photo, coins, temp_ids })
    }

    /// Runs the blind-signature exchange for one temporary ID: the holder
    /// blinds a fresh nonce, the bank signs it blind, the holder unblinds.
    fn blind_issue_temp_id<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TempId, ProtocolError> {
        let pk = &self.blind_keys.public;
        let nonce: [u8; 16] = rng.gen();
        let r = BlindingFactor::random(pk, rng);
        let blinded = blind(&nonce, r, pk)?;
        let blind_sig = self.blind_keys.private.sign_blinded(blinded);
        let signature = unblind(&blind_sig, r, pk)?;
        Ok(TempId { nonce, signature })
    }

    /// Coins worth exactly `amount`: full denominations plus one remainder coin.
    fn issue_coins(&mut self, owner: EntityId, amount: u64, now: SimTime) -> Result<Vec<ECoin>, ProtocolError> {
        let mut out = Vec::new();
        let mut left = amount;
        while left > 0 {
            let value = left.min(self.config.coin_value);
            let id = CoinId::from_u64(self.next_coin);
            self.next_coin += 1;
            out.push(ECoin::issue(&self.keys.private, id, owner, value, now + self.config.coin_lifetime, now)?);
            self.coins.insert(id, (owner, CoinStatus::Outstanding));
            left -= value;
        }
        Ok(out)
    }

    /// Bank-signed endorsement tree: the customer's endorsers and theirs.
    pub fn issue_tree(&self, customer: EntityId, now: SimTime) -> Result<EndorsementTree, ProtocolError> {
        let primaries = self.endorsers_of.get(&customer).ok_or(ProtocolError::UnknownEntity(customer))?.clone();
        let secondaries = primaries
            .iter()
            .map(|p| {
                self.endorsers_of
                    .get(&p.endorser)
                    .map(|links| links.iter().filter(|l| l.endorser != customer).copied().collect())
                    .unwrap_or_default()
            })
            .collect();
        Ok(EndorsementTree::sign(&self.keys.private, customer, primaries, secondaries, now)?)
    }

    fn post(&mut self, postings: &mut Vec<Posting>, tx: TxId, account: Account, delta: i64) {
        if delta == 0 {
            return;
        }
        let apply = |v: &mut u64| *v = (*v as i64 + delta) as u64;
        match account {
            Account::Customer(id) => apply(&mut self.balances.entry(id).or_default().balance),
            Account::Locked(id) => apply(&mut self.balances.entry(id).or_default().locked),
            Account::Endorser(id) => apply(&mut self.balances.entry(id).or_default().incentives),
            Account::Merchant(id) => apply(&mut self.balances.entry(id).or_default().merchant),
            Account::Escrow(_) => {}
        }
        postings.push(Posting { tx, account, delta });
    }

    /// Takes back coins that were spent on an endorsement the merchant did
    /// not use and issues replacements of equal value.
    pub fn refund_coins(
        &mut self,
        owner: EntityId,
        coins: &[ECoin],
        now: SimTime,
    ) -> Result<Option<CoinDelivery>, ProtocolError> {
        let live: Vec<ECoin> =
            coins.iter().filter(|c| self.coin_status(&c.id) == Some(CoinStatus::Outstanding)).cloned().collect();
        let face = live.iter().map(|c| c.value).sum();
        let mut out = Vec::new();
        self.reissue(owner, &live, face, now, &mut out)?;
        Ok(out.pop())
    }

    /// Replaces `coins` with fresh coins worth `value` (possibly zero).
    fn reissue(
        &mut self,
        owner: EntityId,
        coins: &[ECoin],
        value: u64,
        now: SimTime,
        out: &mut Vec<CoinDelivery>,
    ) -> Result<(), ProtocolError> {
        for c in coins {
            if let Some(entry) = self.coins.get_mut(&c.id) {
                if entry.1 == CoinStatus::Outstanding {
                    entry.1 = CoinStatus::Reissued;
                }
            }
        }
        let fresh = self.issue_coins(owner, value, now)?;
        if !fresh.is_empty() {
            out.push(CoinDelivery { endorser: owner, coins: fresh });
        }
        Ok(())
    }

    /// Settles a merchant bundle. The customer pays from its balance when it
    /// can; any shortfall is charged to the accepted endorsers in order,
    /// each up to the amount it endorsed. The merchant's share goes to
    /// escrow until the dispute window closes.
    pub fn settle(&mut self, bundle: &SettlementBundle, now: SimTime) -> Result<Settlement, ProtocolError> {
        let tx = bundle.tx_id();
        if let Some(done) = self.settled.get(&tx) {
            return Ok(done.clone());
        }
        let order = &bundle.order;
        let mut postings = Vec::new();
        let mut deliveries = Vec::new();
        let mut fraud = Vec::new();
        let mut payers = Vec::new();

        let from_customer = self.balance(order.customer).min(order.amount);
        self.post(&mut postings, tx, Account::Customer(order.customer), -(from_customer as i64));
        if from_customer > 0 {
            payers.push((Account::Customer(order.customer), from_customer));
        }
        let mut shortfall = order.amount - from_customer;
        let mut charges = Vec::with_capacity(bundle.endorsements.len());
        for (endorser, coins, endorsed) in &bundle.endorsements {
            if coins.iter().any(|c| self.coin_status(&c.id) == Some(CoinStatus::Settled)) {
                fraud.push(*endorser);
            }
            let charge = shortfall.min(*endorsed);
            shortfall -= charge;
            charges.push(charge);
        }
        let collected = order.amount - shortfall;
        let incentive = if bundle.endorsements.is_empty() { 0 } else { collected * self.config.incentive_bps / 10_000 };
        let endorsed_total: u64 = bundle.endorsements.iter().map(|(_, _, a)| *a).sum();
        let mut shares_left = incentive;
        for (i, ((endorser, coins, endorsed), charge)) in bundle.endorsements.iter().zip(charges).enumerate() {
            if charge > 0 {
                self.post(&mut postings, tx, Account::Locked(*endorser), -(charge as i64));
                payers.push((Account::Locked(*endorser), charge));
            }
            // Coins covering the charge are redeemed; the rest come back fresh.
            let face: u64 = coins.iter().map(|c| c.value).sum();
            for c in coins {
                if let Some(entry) = self.coins.get_mut(&c.id) {
                    entry.1 = CoinStatus::Settled;
                }
            }
            let fresh = self.issue_coins(*endorser, face.saturating_sub(charge), now)?;
            if !fresh.is_empty() {
                deliveries.push(CoinDelivery { endorser: *endorser, coins: fresh });
            }
            let share = if i + 1 == bundle.endorsements.len() {
                shares_left
            } else {
                (incentive * endorsed).checked_div(endorsed_total).unwrap_or(0)
            };
            shares_left -= share;
            self.post(&mut postings, tx, Account::Endorser(*endorser), share as i64);
        }
        for (endorser, coins) in &bundle.released {
            let face = coins.iter().map(|c| c.value).sum();
            self.reissue(*endorser, coins, face, now, &mut deliveries)?;
        }
        self.post(&mut postings, tx, Account::Escrow(bundle.merchant), (collected - incentive) as i64);
        let escrow_amount =
            postings.iter().filter(|p| matches!(p.account, Account::Escrow(_))).map(|p| p.delta).sum::<i64>() as u64;
        self.escrows.insert(
            tx,
            Escrow {
                merchant: bundle.merchant,
                customer: order.customer,
                amount: escrow_amount,
                deadline: now + self.config.dispute_window,
                payers,
            },
        );
        self.journal.extend_from_slice(&postings);
        let s = Settlement { tx, postings, deliveries, fraud };
        self.settled.insert(tx, s.clone());
        Ok(s)
    }

    /// Resolves a customer's claim of non-delivery against the merchant's
    /// receipt, if any.
    pub fn dispute(
        &mut self,
        tx: &TxId,
        receipt: Option<&DeliveryReceipt>,
        now: SimTime,
    ) -> Result<DisputeOutcome, ProtocolError> {
        let escrow = self.escrows.get(tx).ok_or(ProtocolError::NoEscrow)?;
        if now > escrow.deadline {
            return Err(ProtocolError::LateClaim);
        }
        let proven = receipt.is_some_and(|r| {
            r.tx == *tx
                && r.customer == escrow.customer
                && self.directory.keys.get(&escrow.customer).is_some_and(|k| r.verify(k))
        });
        let escrow = self.escrows.remove(tx).expect("checked above");
        let mut postings = Vec::new();
        self.post(&mut postings, *tx, Account::Escrow(escrow.merchant), -(escrow.amount as i64));
        let outcome = if proven {
            self.post(&mut postings, *tx, Account::Merchant(escrow.merchant), escrow.amount as i64);
            DisputeOutcome::Released { amount: escrow.amount }
        } else {
            // Refund endorsers first, then the customer.
            let mut left = escrow.amount;
            for (account, paid) in escrow.payers.iter().rev() {
                let back = left.min(*paid);
                self.post(&mut postings, *tx, *account, back as i64);
                left -= back;
            }
            if left > 0 {
                self.post(&mut postings, *tx, Account::Customer(escrow.customer), left as i64);
            }
            DisputeOutcome::Refunded { amount: escrow.amount }
        };
        self.journal.extend_from_slice(&postings);
        Ok(outcome)
    }

    /// Releases every escrow whose dispute window has closed.
    pub fn release_expired(&mut self, now: SimTime) -> u64 {
        let due: Vec<TxId> = self.escrows.iter().filter(|(_, e)| now > e.deadline).map(|(tx, _)| *tx).collect();
        let mut total = 0;
        for tx in due {
            let e = self.escrows.remove(&tx).expect("listed above");
            let mut postings = Vec::new();
            self.post(&mut postings, tx, Account::Escrow(e.merchant), -(e.amount as i64));
            self.post(&mut postings, tx, Account::Merchant(e.merchant), e.amount as i64);
            self.journal.extend_from_slice(&postings);
            total += e.amount;
        }
        total
    }

    /// What a connected bank would post for the same order: check the
    /// balance, debit the customer, pay the merchant. Nothing is applied.
    pub fn online_settlement_oracle(&self, order: &TransactionOrder) -> Result<Vec<Posting>, ProtocolError> {
        let have = self.balance(order.customer);
        if have < order.amount {
            return Err(ProtocolError::InsufficientBalance { have, need: order.amount });
        }
        let tx = order.tx_id();
        Ok(vec![
            Posting { tx, account: Account::Customer(order.customer), delta: -(order.amount as i64) },
            Posting { tx, account: Account::Merchant(order.merchant), delta: order.amount as i64 },
        ])
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ledger::SizeMode;
    use crate::protocol::testkit::*;
    use crate::protocol::{merchant_accept, BillingMode, EndorsementMessage, TransactionOrder};

    fn bundle(w: &World, order: &Arc<TransactionOrder>, es: &[EndorsementMessage]) -> SettlementBundle {
        let a = merchant_accept(order, es, w.dir(), &w.policy, SizeMode::Lightweight, &mut Default::default(), w.now);
        SettlementBundle {
            merchant: MERCHANT,
            order: Arc::clone(order),
            endorsements: a.accepted.iter().map(|&i| (es[i].endorser, es[i].coins.clone(), es[i].amount)).collect(),
            released: a.unused.iter().map(|&i| (es[i].endorser, es[i].coins.clone())).collect(),
            accepted_at: w.now,
            receipt: None,
        }
    }

    fn sum(postings: &[Posting]) -> i64 {
        postings.iter().map(|p| p.delta).sum()
    }

    #[test]
    fn registration_issues_coins_and_temp_ids() {
        let w = World::new(0);
        assert_eq!(w.endorsers[0].coins.len(), 15);
        assert!(w.endorsers[0].coins.iter().all(|c| c.value == 200));
        assert_eq!(w.customer.temp_ids.len(), 8);
        for t in &w.customer.temp_ids {
            assert!(t.verify(&w.dir().bank_blind));
        }
        let tree = &w.customer.tree;
        assert_eq!(tree.primaries, vec![link(E1, 2000), link(E2, 1000)]);
        assert_eq!(tree.secondaries, vec![vec![link(S1, 1500)], vec![]]);
        assert!(tree.verify(&w.dir().bank));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut w = World::new(0);
        let mut rng = rand::rngs::mock::StepRng::new(1, 1);
        let req = RegistrationRequest {
            id: E1,
            role: Role::Endorser,
            deposit: 0,
            balance: 0,
            photo: vec![],
            endorsers: vec![],
        };
        assert_eq!(
            w.bank.register(&req, SimTime::ZERO, &mut rng).unwrap_err(),
            ProtocolError::DuplicateRegistration(E1)
        );
    }

    #[test]
    fn solvent_customer_pays_and_endorser_is_made_whole() {
        let mut w = World::new(10_000);
        let order = w.order(1_000);
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        let b = bundle(&w, &order, &[e]);
        let s = w.bank.settle(&b, w.now).unwrap();
        assert_eq!(sum(&s.postings), 0);
        assert_eq!(w.bank.balance(CUSTOMER), 9_000);
        assert_eq!(w.bank.locked(E1), 3_000);
        assert_eq!(w.bank.incentives(E1), 30);
        assert_eq!(w.bank.escrowed(&order.tx_id()), Some(970));
        // E1's five spent coins come back as fresh ones.
        assert_eq!(s.deliveries.len(), 1);
        assert_eq!(s.deliveries[0].coins.iter().map(|c| c.value).sum::<u64>(), 1_000);
        assert_eq!(
            PostingSummary::from_postings(&s.postings),
            PostingSummary { customer_debit: 1_000, endorser_debit: 0, merchant_credit: 970, incentives: 30 }
        );
        // Online, the same purchase moves the same 1000 from customer to
        // merchant; offline the endorser's cut comes out of the proceeds.
        let online = PostingSummary::from_postings(&w.bank.online_settlement_oracle(&order).unwrap());
        assert_eq!(
            online,
            PostingSummary { customer_debit: 1_000, endorser_debit: 0, merchant_credit: 1_000, incentives: 0 }
        );
        let broke = World::new(999);
        assert_eq!(
            broke.bank.online_settlement_oracle(&order).unwrap_err(),
            ProtocolError::InsufficientBalance { have: 999, need: 1_000 }
        );
    }

    #[test]
    fn broke_customer_is_covered_by_endorsers_in_order() {
        let mut w = World::new(300);
        let order = w.order(1_900);
        let bills = w.bills(&order, BillingMode::FanOut);
        // E2 answers first (limit 1000), then E1 (1900 requested).
        let e2 = w.endorse(&bills[1]).unwrap();
        let e1 = w.endorse(&bills[0]).unwrap();
        let b = bundle(&w, &order, &[e2, e1]);
        assert_eq!(b.endorsements.iter().map(|(id, _, a)| (*id, *a)).collect::<Vec<_>>(), vec![(E2, 1000), (E1, 1900)]);
        let s = w.bank.settle(&b, w.now).unwrap();
        assert_eq!(sum(&s.postings), 0);
        assert_eq!(w.bank.balance(CUSTOMER), 0);
        assert_eq!(w.bank.locked(E2), 2_000);
        assert_eq!(w.bank.locked(E1), 3_000 - 600);
        // 57 incentive split 1000:1900.
        assert_eq!(w.bank.incentives(E2), 19);
        assert_eq!(w.bank.incentives(E1), 38);
        assert_eq!(w.bank.escrowed(&order.tx_id()), Some(1_900 - 57));
        // E1 spent 10 coins (2000) and was charged 600.
        let back: u64 = s.deliveries.iter().filter(|d| d.endorser == E1).flat_map(|d| &d.coins).map(|c| c.value).sum();
        assert_eq!(back, 1_400);
    }

    #[test]
    fn unused_endorsements_are_refunded_and_settlement_is_idempotent() {
        let mut w = World::new(0);
        let order = w.order(800);
        let bills = w.bills(&order, BillingMode::FanOut);
        let es: Vec<_> = bills.iter().map(|b| w.endorse(b).unwrap()).collect();
        let b = bundle(&w, &order, &es);
        assert_eq!(b.released.len(), 2);
        let s = w.bank.settle(&b, w.now).unwrap();
        let refunded: u64 =
            s.deliveries.iter().filter(|d| d.endorser != E1).flat_map(|d| &d.coins).map(|c| c.value).sum();
        assert_eq!(refunded, 800 + 800);
        for c in &b.released[0].1 {
            assert_eq!(w.bank.coin_status(&c.id), Some(CoinStatus::Reissued));
        }
        let journal_len = w.bank.journal().len();
        assert_eq!(w.bank.settle(&b, w.now).unwrap(), s);
        assert_eq!(w.bank.journal().len(), journal_len);
    }

    #[test]
    fn resettling_redeemed_coins_flags_fraud() {
        let mut w = World::new(0);
        let order = w.order(400);
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        let b = bundle(&w, &order, std::slice::from_ref(&e));
        assert!(w.bank.settle(&b, w.now).unwrap().fraud.is_empty());
        let order2 = w.order(400);
        let replay = SettlementBundle { order: Arc::clone(&order2), ..b };
        assert_eq!(w.bank.settle(&replay, w.now).unwrap().fraud, vec![E1]);
    }

    #[test]
    fn disputes() {
        let mut w = World::new(5_000);
        let order = w.order(1_000);
        let tx = order.tx_id();
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        let b = bundle(&w, &order, &[e]);
        w.bank.settle(&b, w.now).unwrap();
        let receipt = DeliveryReceipt {
            tx,
            customer: CUSTOMER,
            signature: w.customer.key.sign(&DeliveryReceipt::signed_bytes(&tx), w.now).unwrap(),
        };
        let mut forged = receipt.clone();
        forged.tx[0] ^= 1;

        let mut refund = World::new(5_000);
        let o2 = refund.order(1_000);
        let bills2 = refund.bills(&o2, BillingMode::FanOut);
        let e2 = refund.endorse(&bills2[0]).unwrap();
        let b2 = bundle(&refund, &o2, &[e2]);
        refund.bank.settle(&b2, refund.now).unwrap();
        assert_eq!(
            refund.bank.dispute(&o2.tx_id(), Some(&forged), refund.now).unwrap(),
            DisputeOutcome::Refunded { amount: 970 }
        );
        assert_eq!(refund.bank.balance(CUSTOMER), 4_970);
        assert_eq!(sum(refund.bank.journal()), 0);

        let late = w.now + w.bank.config.dispute_window + SimTime::from_secs(1);
        assert_eq!(w.bank.dispute(&tx, Some(&receipt), late).unwrap_err(), ProtocolError::LateClaim);
        assert_eq!(w.bank.dispute(&tx, Some(&receipt), w.now).unwrap(), DisputeOutcome::Released { amount: 970 });
        assert_eq!(w.bank.merchant_funds(MERCHANT), 970);
        assert_eq!(w.bank.dispute(&tx, None, w.now).unwrap_err(), ProtocolError::NoEscrow);
        assert_eq!(sum(w.bank.journal()), 0);
    }

    #[test]
    fn escrow_released_after_window() {
        let mut w = World::new(5_000);
        let order = w.order(1_000);
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        let b = bundle(&w, &order, &[e]);
        w.bank.settle(&b, w.now).unwrap();
        assert_eq!(w.bank.release_expired(w.now), 0);
        assert_eq!(w.bank.release_expired(w.now + SimTime::from_secs(48 * 3600 + 1)), 970);
        assert_eq!(w.bank.merchant_funds(MERCHANT), 970);
    }
}
