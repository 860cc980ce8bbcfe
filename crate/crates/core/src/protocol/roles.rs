use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use super::location::{location_similarity, LocationHistory, SimilarityParams};
use super::messages::{Billing, EndorsementMessage, TempId, TransactionOrder};
use super::{EndorsementTree, EndorserLink, ProtocolError, RejectReason};
use crate::crypto::{BlindPublicKey, PublicKey, SecretKey, Signature, SignedPhoto};
use crate::ledger::{
    monitor_quorum, BlockProposal, BreakReason, ChainError, ChainVerdict, CoinId, ECoin, Event, EventChain,
    QuorumPolicy, SizeMode, VerifyContext,
};
use crate::{EntityId, Position, SimTime};

/// Public keys every participant carries after registration.
#[derive(Debug, Clone)]
pub struct Directory {
    pub bank_id: EntityId,
    pub bank: PublicKey,
    pub bank_blind: BlindPublicKey,
    pub keys: BTreeMap<EntityId, PublicKey>,
}

impl Directory {
    pub fn key(&self, id: EntityId) -> Option<&PublicKey> {
        self.keys.get(&id)
    }
}

#[derive(Debug, Clone)]
pub struct CustomerState {
    pub id: EntityId,
    pub key: SecretKey,
    pub photo: SignedPhoto,
    pub photo_blob: Vec<u8>,
    pub tree: EndorsementTree,
    pub temp_ids: VecDeque<TempId>,
}

/// Builds and signs an order, consuming one temporary ID.
pub fn customer_order(
    c: &mut CustomerState,
    bank: EntityId,
    merchant: EntityId,
    item: u32,
    quantity: u32,
    amount: u64,
    now: SimTime,
) -> Result<TransactionOrder, ProtocolError> {
    if amount == 0 {
        return Err(ProtocolError::ZeroAmount);
    }
    let temp_id = c.temp_ids.pop_front().ok_or(ProtocolError::NoTempIds)?;
    let body =
        TransactionOrder::signed_bytes(&temp_id, c.id, merchant, bank, &c.tree, item, quantity, amount, &c.photo, now);
    let customer_signature = c.key.sign(&body, now)?;
    Ok(TransactionOrder {
        temp_id,
        customer: c.id,
        merchant,
        bank,
        tree: c.tree.clone(),
        item,
        quantity,
        amount,
        photo: c.photo.clone(),
        photo_blob: c.photo_blob.clone(),
        created_at: now,
        customer_signature,
    })
}

/// How the merchant contacts endorsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BillingMode {
    /// Bill primary and secondary endorsers at once.
    FanOut,
    /// Bill primaries; search for secondaries only if they fall short.
    LevelSearch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderVerdict {
    Bill(Vec<Billing>),
    Reject(RejectReason),
}

/// Credential checks every node applies to an order it is asked to act on.
fn check_order(order: &TransactionOrder, dir: &Directory, now: SimTime) -> Result<(), RejectReason> {
    let bad = Err(RejectReason::BadCredential);
    let Some(cust) = dir.key(order.customer) else {
        return bad;
    };
    if !cust.verify(&order.body_bytes(), &order.customer_signature)
        || !order.temp_id.verify(&dir.bank_blind)
        || order.tree.customer != order.customer
        || !order.tree.verify(&dir.bank)
        || order.created_at > now
        || order.amount == 0
    {
        return bad;
    }
    match order.photo.verify_at(&dir.bank, cust, &order.photo_blob, now) {
        Ok(true) => Ok(()),
        _ => bad,
    }
}

/// Signs billings for `links` at the given tree level.
pub fn bill_endorsers(
    merchant_key: &SecretKey,
    order: &Arc<TransactionOrder>,
    links: &[EndorserLink],
    level: u8,
    now: SimTime,
    deadline: SimTime,
) -> Vec<Billing> {
    let tx = order.tx_id();
    links
        .iter()
        .map(|l| {
            let amount = order.amount.min(l.limit);
            let msg = Billing::signed_bytes(&tx, l.endorser, amount, level, deadline);
            Billing {
                tx,
                order: Arc::clone(order),
                merchant: merchant_key.owner,
                endorser: l.endorser,
                amount,
                level,
                issued_at: now,
                deadline,
                merchant_signature: merchant_key.sign_unchecked(&msg),
            }
        })
        .collect()
}

/// Validates an order and produces the first round of billings.
pub fn merchant_process_order(
    merchant_key: &SecretKey,
    order: &Arc<TransactionOrder>,
    dir: &Directory,
    mode: BillingMode,
    now: SimTime,
    deadline: SimTime,
) -> OrderVerdict {
    if order.merchant != merchant_key.owner {
        return OrderVerdict::Reject(RejectReason::BadCredential);
    }
    if let Err(r) = check_order(order, dir, now) {
        return OrderVerdict::Reject(r);
    }
    if order.tree.is_empty() {
        return OrderVerdict::Reject(RejectReason::InsufficientCover);
    }
    let mut bills = bill_endorsers(merchant_key, order, &order.tree.primaries, 0, now, deadline);
    if mode == BillingMode::FanOut {
        bills.extend(bill_endorsers(merchant_key, order, &order.tree.secondary_links(), 1, now, deadline));
    }
    OrderVerdict::Bill(bills)
}

#[derive(Debug, Clone)]
pub struct EndorserState {
    pub id: EntityId,
    pub key: SecretKey,
    pub coins: Vec<ECoin>,
    pub chain: Arc<EventChain>,
    pending: BTreeSet<CoinId>,
}

impl EndorserState {
    pub fn new(id: EntityId, key: SecretKey, coins: Vec<ECoin>, chain: EventChain) -> Self {
        EndorserState { id, key, coins, chain: Arc::new(chain), pending: BTreeSet::new() }
    }

    /// Spendable balance: coins neither pending nor recorded as spent.
    pub fn balance(&self, now: SimTime) -> u64 {
        self.available(now).map(|c| c.value).sum()
    }

    fn available(&self, now: SimTime) -> impl Iterator<Item = &ECoin> {
        self.coins
            .iter()
            .filter(move |c| !self.pending.contains(&c.id) && !self.chain.filter().contains(&c.id) && c.expiry > now)
    }

    /// Oldest available coins worth at least `amount`, if the wallet holds
    /// that much.
    pub fn select_coins(&self, amount: u64, now: SimTime) -> Option<Vec<ECoin>> {
        let mut coins = Vec::new();
        let mut total = 0;
        for c in self.available(now) {
            if total >= amount {
                break;
            }
            total += c.value;
            coins.push(c.clone());
        }
        (total >= amount).then_some(coins)
    }

    /// Adds coins delivered by the bank.
    pub fn receive_coins(&mut self, coins: impl IntoIterator<Item = ECoin>) {
        self.coins.extend(coins);
    }

    /// Replaces chain and wallet wholesale (restoring a backup).
    pub fn restore(&mut self, chain: Arc<EventChain>, coins: Vec<ECoin>) {
        self.chain = chain;
        self.coins = coins;
        self.pending.clear();
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }
}

/// A spend block awaiting monitor countersignatures.
#[derive(Debug, Clone)]
pub struct EndorsementDraft {
    pub billing: Billing,
    pub coins: Vec<ECoin>,
    pub proposal: BlockProposal,
}

/// Checks a billing and, if the endorser can cover it, proposes a spend block.
pub fn endorser_endorse(
    e: &mut EndorserState,
    billing: &Billing,
    dir: &Directory,
    policy: &QuorumPolicy,
    gps: Position,
    now: SimTime,
) -> Result<EndorsementDraft, RejectReason> {
    let merchant_ok = dir.key(billing.merchant).is_some_and(|k| billing.verify(k));
    let limit_ok = billing.endorser == e.id
        && billing.order.merchant == billing.merchant
        && billing.order.tree.limit_of(e.id).is_some_and(|l| billing.amount <= l && billing.amount > 0);
    if !merchant_ok || !limit_ok {
        return Err(RejectReason::BadCredential);
    }
    check_order(&billing.order, dir, now)?;
    if !e.chain.is_empty() && e.chain.is_stale(now, policy.staleness) {
        return Err(RejectReason::StaleChain);
    }
    let coins = e.select_coins(billing.amount, now).ok_or(RejectReason::InsufficientCover)?;
    let event = Event::Spend(coins.iter().map(|c| c.id).collect());
    let proposal = e.chain.propose(event, gps, now);
    e.pending.extend(coins.iter().map(|c| c.id));
    Ok(EndorsementDraft { billing: billing.clone(), coins, proposal })
}

/// Releases the coins held by a draft that will not be finalized.
pub fn endorser_abort(e: &mut EndorserState, draft: &EndorsementDraft) {
    for c in &draft.coins {
        e.pending.remove(&c.id);
    }
}

fn chain_error_reason(err: &ChainError) -> RejectReason {
    match err {
        ChainError::StaleChain { .. } => RejectReason::StaleChain,
        ChainError::InsufficientQuorum { .. } | ChainError::OwnerAsMonitor(_) => RejectReason::InsufficientQuorum,
        ChainError::NonMonotonicTime { .. } | ChainError::LinkMismatch => RejectReason::BadCredential,
    }
}

/// Appends the countersigned spend block and signs the endorsement.
pub fn endorser_finalize(
    e: &mut EndorserState,
    draft: EndorsementDraft,
    signatures: Vec<Signature>,
    dir: &Directory,
    policy: &QuorumPolicy,
) -> Result<EndorsementMessage, RejectReason> {
    endorser_abort(e, &draft);
    let EndorsementDraft { billing, coins, proposal } = draft;
    Arc::make_mut(&mut e.chain)
        .append(proposal, signatures, policy, &dir.keys)
        .map_err(|err| chain_error_reason(&err))?;
    let spent: BTreeSet<CoinId> = coins.iter().map(|c| c.id).collect();
    e.coins.retain(|c| !spent.contains(&c.id));
    Ok(sign_endorsement(e, &billing, coins))
}

/// Signs an endorsement whose spend block is the head of `e`'s chain.
pub fn sign_endorsement(e: &EndorserState, billing: &Billing, coins: Vec<ECoin>) -> EndorsementMessage {
    let msg = EndorsementMessage::signed_bytes(&billing.tx, e.id, billing.amount, &coins, &e.chain.last_hash());
    EndorsementMessage {
        tx: billing.tx,
        endorser: e.id,
        amount: billing.amount,
        coins,
        chain: Arc::clone(&e.chain),
        spend_index: e.chain.len() - 1,
        billed_at: billing.issued_at,
        endorser_signature: e.key.sign_unchecked(&msg),
    }
}

/// A monitor's view when asked to countersign.
#[derive(Debug, Clone, Copy)]
pub struct MonitorCheck<'a> {
    pub key: &'a SecretKey,
    pub own_history: &'a LocationHistory,
    pub similarity: SimilarityParams,
    /// Length of one location-sampling slot (the hello interval).
    pub slot: SimTime,
    /// Timestamp of the newest block this monitor has countersigned for
    /// the chain's owner, if any.
    pub known_head: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonitorVerdict {
    Sign(Signature),
    Refuse(RejectReason),
    /// The monitor is the chain owner or a party to the transaction.
    Ineligible,
}

/// Location samples recorded in the last `capacity` blocks of a chain, plus
/// the proposed block.
pub fn chain_history(chain: &EventChain, proposal: &BlockProposal, slot: SimTime, capacity: usize) -> LocationHistory {
    let slot_of = |t: SimTime| t.micros() / slot.micros().max(1);
    let blocks = chain.blocks();
    let start = blocks.len().saturating_sub(capacity);
    LocationHistory::from_samples(
        capacity,
        blocks[start..]
            .iter()
            .map(|b| (slot_of(b.timestamp), b.gps))
            .chain(std::iter::once((slot_of(proposal.block.timestamp), proposal.block.gps))),
    )
}

/// Decides whether a monitor countersigns `proposal` as the next block of
/// `chain`.
pub fn monitor_countersign(
    check: &MonitorCheck<'_>,
    chain: &EventChain,
    proposal: &BlockProposal,
    parties: &[EntityId],
    dir: &Directory,
    policy: &QuorumPolicy,
    now: SimTime,
) -> MonitorVerdict {
    let me = check.key.owner;
    if me == chain.owner || parties.contains(&me) {
        return MonitorVerdict::Ineligible;
    }
    let b = &proposal.block;
    if b.prev_hash != chain.last_hash() || b.timestamp > now {
        return MonitorVerdict::Refuse(RejectReason::BadCredential);
    }
    let head_ts = chain.last_block().map(|l| l.timestamp);
    if check.known_head.is_some_and(|k| head_ts.is_none_or(|h| h < k)) {
        // The chain is behind a block this monitor already signed: it was
        // rolled back.
        return MonitorVerdict::Refuse(RejectReason::StaleChain);
    }
    if let Some(last) = chain.last_block() {
        if b.timestamp <= last.timestamp {
            return MonitorVerdict::Refuse(RejectReason::BadCredential);
        }
        if b.event != Event::Rejoin && b.timestamp.saturating_sub(last.timestamp) > policy.staleness {
            return MonitorVerdict::Refuse(RejectReason::StaleChain);
        }
        match monitor_quorum(chain.owner, last, &dir.keys) {
            Ok(n) if n >= policy.quorum => {}
            _ => return MonitorVerdict::Refuse(RejectReason::InsufficientQuorum),
        }
    }
    if b.event.spends().iter().any(|c| chain.filter().contains(c)) {
        return MonitorVerdict::Refuse(RejectReason::DoubleSpend);
    }
    let expected = chain.propose(b.event.clone(), b.gps, b.timestamp);
    if expected.block.merkle_root != b.merkle_root || expected.block.bloom_anchor != b.bloom_anchor {
        return MonitorVerdict::Refuse(RejectReason::BadCredential);
    }
    if !b.event.spends().is_empty() {
        let theirs = chain_history(chain, proposal, check.slot, check.own_history.len().max(1));
        if location_similarity(&theirs, check.own_history, &check.similarity).similar {
            return MonitorVerdict::Refuse(RejectReason::SimilarLocation);
        }
    }
    MonitorVerdict::Sign(check.key.sign_unchecked(&proposal.attestation_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloOutcome {
    pub appended: bool,
    pub event: Event,
    /// Each asked monitor's answer, in asking order.
    pub replies: Vec<(EntityId, MonitorVerdict)>,
}

/// Periodic keep-alive: proposes a Hello (or Rejoin after a gap) and
/// appends it if the monitors in range form a quorum.
pub fn hello_exchange(
    e: &mut EndorserState,
    monitors: &[MonitorCheck<'_>],
    dir: &Directory,
    policy: &QuorumPolicy,
    gps: Position,
    now: SimTime,
) -> HelloOutcome {
    let event =
        if !e.chain.is_empty() && e.chain.is_stale(now, policy.staleness) { Event::Rejoin } else { Event::Hello };
    let proposal = e.chain.propose(event.clone(), gps, now);
    let mut sigs = Vec::new();
    let mut replies = Vec::new();
    for m in monitors {
        let v = monitor_countersign(m, &e.chain, &proposal, &[], dir, policy, now);
        if let MonitorVerdict::Sign(s) = &v {
            sigs.push(s.clone());
        }
        replies.push((m.key.owner, v));
    }
    let appended =
        sigs.len() >= policy.quorum && Arc::make_mut(&mut e.chain).append(proposal, sigs, policy, &dir.keys).is_ok();
    HelloOutcome { appended, event, replies }
}

fn verdict_reason(v: ChainVerdict) -> Option<RejectReason> {
    match v {
        ChainVerdict::Valid => None,
        ChainVerdict::Broken { reason, .. } => Some(match reason {
            BreakReason::Stale | BreakReason::Gap => RejectReason::StaleChain,
            BreakReason::InsufficientQuorum | BreakReason::OwnerAsMonitor => RejectReason::InsufficientQuorum,
            _ => RejectReason::BadCredential,
        }),
    }
}

/// Merchant-side check of one endorsement. Returns the amount it covers.
///
/// In [`SizeMode::Full`] the whole chain is verified; in
/// [`SizeMode::Lightweight`] only the head block, its quorum and the
/// spent-coin filter are.
#[allow(clippy::too_many_arguments)]
pub fn check_endorsement(
    order: &TransactionOrder,
    e: &EndorsementMessage,
    dir: &Directory,
    policy: &QuorumPolicy,
    mode: SizeMode,
    seen_coins: &BTreeSet<CoinId>,
    now: SimTime,
) -> Result<u64, RejectReason> {
    use RejectReason::*;
    let chain = &e.chain;
    let Some(spend) = chain.blocks().get(e.spend_index) else {
        return Err(BadCredential);
    };
    let limit_ok = order.tree.limit_of(e.endorser).is_some_and(|l| e.amount <= l);
    let msg = EndorsementMessage::signed_bytes(&e.tx, e.endorser, e.amount, &e.coins, &spend.hash());
    let sig_ok = dir.key(e.endorser).is_some_and(|k| k.verify(&msg, &e.endorser_signature));
    if e.tx != order.tx_id() || !limit_ok || !sig_ok || chain.owner != e.endorser {
        return Err(BadCredential);
    }
    if e.coins.iter().any(|c| c.validate(&dir.bank, e.endorser, now).is_err()) {
        return Err(BadCredential);
    }
    if e.amount == 0 || e.coin_value() < e.amount {
        return Err(InsufficientCover);
    }
    match mode {
        SizeMode::Full => {
            let ctx = VerifyContext { now, policy: *policy, keys: &dir.keys };
            if let Some(r) = verdict_reason(chain.verify(&ctx)) {
                return Err(r);
            }
        }
        SizeMode::Lightweight => {
            let head = chain.last_block().ok_or(BadCredential)?;
            match monitor_quorum(chain.owner, head, &dir.keys) {
                Ok(n) if n >= policy.quorum => {}
                _ => return Err(InsufficientQuorum),
            }
            if chain.is_stale(now, policy.staleness) {
                return Err(StaleChain);
            }
            if head.bloom_anchor != chain.filter().anchor() || head.hash() != chain.last_hash() {
                return Err(BadCredential);
            }
            if monitor_quorum(chain.owner, spend, &dir.keys).map_or(true, |n| n < policy.quorum) {
                return Err(InsufficientQuorum);
            }
        }
    }
    let ids: Vec<CoinId> = e.coins.iter().map(|c| c.id).collect();
    if spend.event != Event::Spend(ids.clone()) || spend.timestamp < e.billed_at {
        return Err(BadCredential);
    }
    let before = chain.filter_before(e.spend_index);
    if ids.iter().any(|c| before.contains(c) || seen_coins.contains(c)) {
        return Err(DoubleSpend);
    }
    Ok(e.amount)
}

/// Result of a merchant checking every endorsement for one order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Acceptance {
    /// Endorsements used to cover the order, in arrival order.
    pub accepted: Vec<usize>,
    pub rejected: Vec<(usize, RejectReason)>,
    /// Valid endorsements that arrived after the order was covered.
    pub unused: Vec<usize>,
    pub cover: u64,
}

impl Acceptance {
    pub fn is_complete(&self, amount: u64) -> bool {
        self.cover >= amount
    }
}

/// Checks endorsements in arrival order until the order is covered.
#[allow(clippy::too_many_arguments)]
pub fn merchant_accept(
    order: &TransactionOrder,
    endorsements: &[EndorsementMessage],
    dir: &Directory,
    policy: &QuorumPolicy,
    mode: SizeMode,
    seen_coins: &mut BTreeSet<CoinId>,
    now: SimTime,
) -> Acceptance {
    let mut out = Acceptance::default();
    for (i, e) in endorsements.iter().enumerate() {
        match check_endorsement(order, e, dir, policy, mode, seen_coins, now) {
            Ok(_) if out.cover >= order.amount => out.unused.push(i),
            Ok(v) => {
                out.cover += v;
                out.accepted.push(i);
                seen_coins.extend(e.coins.iter().map(|c| c.id));
            }
            Err(r) => out.rejected.push((i, r)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::testkit::*;
    use crate::protocol::MessageKind;

    fn accept(w: &World, order: &TransactionOrder, es: &[EndorsementMessage], mode: SizeMode) -> Acceptance {
        merchant_accept(order, es, w.dir(), &w.policy, mode, &mut BTreeSet::new(), w.now)
    }

    #[test]
    fn honest_purchase_is_covered_by_one_primary() {
        let mut w = World::new(10_000);
        let order = w.order(1_000);
        let bills = w.bills(&order, BillingMode::FanOut);
        let who: Vec<_> = bills.iter().map(|b| (b.endorser, b.amount, b.level)).collect();
        assert_eq!(who, vec![(E1, 1000, 0), (E2, 1000, 0), (S1, 1000, 1)]);
        let e = w.endorse(&bills[0]).unwrap();
        assert_eq!(e.coins.len(), 5);
        for mode in [SizeMode::Full, SizeMode::Lightweight] {
            let a = accept(&w, &order, std::slice::from_ref(&e), mode);
            assert_eq!(a.accepted, vec![0]);
            assert!(a.is_complete(order.amount));
        }
        let now = w.now;
        assert_eq!(w.endorser(E1).balance(now), 3000 - 1000);
    }

    #[test]
    fn level_search_bills_primaries_only() {
        let mut w = World::new(0);
        let order = w.order(1_000);
        let bills = w.bills(&order, BillingMode::LevelSearch);
        assert!(bills.iter().all(|b| b.level == 0));
        assert_eq!(bills.len(), 2);
        let second = bill_endorsers(&w.merchant.private, &order, &order.tree.secondary_links(), 1, w.now, w.now);
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].endorser, S1);
    }

    #[test]
    fn later_endorsements_are_unused_once_covered() {
        let mut w = World::new(0);
        let order = w.order(900);
        let bills = w.bills(&order, BillingMode::FanOut);
        let es: Vec<_> = bills.iter().map(|b| w.endorse(b).unwrap()).collect();
        let a = accept(&w, &order, &es, SizeMode::Lightweight);
        assert_eq!(a.accepted, vec![0]);
        assert_eq!(a.unused, vec![1, 2]);
    }

    #[test]
    fn order_checks() {
        let mut w = World::new(0);
        let order = w.order(500);
        let dir = w.dir().clone();
        let deadline = w.now + SimTime::from_secs(5);
        let run = |o: &TransactionOrder| {
            merchant_process_order(
                &w.merchant.private,
                &Arc::new(o.clone()),
                &dir,
                BillingMode::FanOut,
                w.now,
                deadline,
            )
        };
        let mut bad_sig = (*order).clone();
        bad_sig.amount += 1;
        assert_eq!(run(&bad_sig), OrderVerdict::Reject(RejectReason::BadCredential));
        let mut bad_photo = (*order).clone();
        bad_photo.photo_blob[0] ^= 1;
        assert_eq!(run(&bad_photo), OrderVerdict::Reject(RejectReason::BadCredential));
        let mut bad_temp = (*order).clone();
        bad_temp.temp_id.nonce[0] ^= 1;
        assert_eq!(run(&bad_temp), OrderVerdict::Reject(RejectReason::BadCredential));
        let mut other_merchant = (*order).clone();
        other_merchant.merchant = E2;
        assert_eq!(run(&other_merchant), OrderVerdict::Reject(RejectReason::BadCredential));
        assert!(matches!(run(&order), OrderVerdict::Bill(_)));
    }

    #[test]
    fn customer_runs_out_of_temp_ids() {
        let mut w = World::new(0);
        for _ in 0..8 {
            w.order(10);
        }
        let err = customer_order(&mut w.customer, BANK, MERCHANT, 1, 1, 10, w.now).unwrap_err();
        assert_eq!(err, ProtocolError::NoTempIds);
        assert_eq!(
            customer_order(&mut w.customer, BANK, MERCHANT, 1, 1, 0, w.now).unwrap_err(),
            ProtocolError::ZeroAmount
        );
    }

    #[test]
    fn endorser_refusals() {
        let mut w = World::new(0);
        let order = w.order(2_500);
        let bills = w.bills(&order, BillingMode::FanOut);
        let dir = w.dir().clone();
        let (policy, now) = (w.policy, w.now);
        // E2's limit caps the billed amount at 1000.
        assert_eq!(bills[1].amount, 1000);
        let mut inflated = bills[1].clone();
        inflated.amount = 2_500;
        let e2 = w.endorser(E2);
        assert_eq!(
            endorser_endorse(e2, &inflated, &dir, &policy, Position::default(), now).unwrap_err(),
            RejectReason::BadCredential
        );
        // Stale chain: no hello for more than a minute.
        w.advance(61);
        let now = w.now;
        let e1 = w.endorser(E1);
        assert_eq!(
            endorser_endorse(e1, &bills[0], &dir, &policy, Position::default(), now).unwrap_err(),
            RejectReason::StaleChain
        );
        let out = w.hello(0);
        assert!(out.appended);
        assert_eq!(out.event, Event::Rejoin);
        // Drain E1's coins, then it cannot cover another bill.
        w.advance(1);
        let first = w.endorse(&bills[0]);
        assert!(first.is_ok());
        w.advance(1);
        let order2 = w.order(1_500);
        let bills2 = w.bills(&order2, BillingMode::FanOut);
        assert_eq!(w.endorse(&bills2[0]).unwrap_err(), RejectReason::InsufficientCover);
        assert!(!w.endorser(E1).has_pending());
    }

    #[test]
    fn monitors_refuse_double_spend_and_ineligible() {
        let mut w = World::new(0);
        let order = w.order(400);
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        w.advance(1);
        let chain = Arc::clone(&w.endorser(E1).chain);
        let again = chain.propose(Event::Spend(e.coins.iter().map(|c| c.id).collect()), Position::default(), w.now);
        assert_eq!(w.countersign(&chain, &again, 4, &[]), Err(RejectReason::DoubleSpend));
        let fresh = chain.propose(Event::Hello, Position::default(), w.now);
        let checks = w.checks();
        let v = monitor_countersign(&checks[0], &chain, &fresh, &[MONITORS[0]], w.dir(), &w.policy, w.now);
        assert_eq!(v, MonitorVerdict::Ineligible);
    }

    #[test]
    fn monitors_refuse_similar_location() {
        let mut w = World::new(0);
        // Monitor 0 has walked with E1 for the last few slots.
        w.histories[0] = LocationHistory::from_samples(12, (0..4).map(|s| (s, Position::new(1.0, 1.0))));
        let order = w.order(400);
        let bills = w.bills(&order, BillingMode::FanOut);
        for t in [20, 30] {
            w.now = SimTime::from_secs(t);
            w.hello(0);
        }
        w.advance(1);
        assert_eq!(w.endorse(&bills[0]).unwrap_err(), RejectReason::SimilarLocation);
        assert!(!w.endorser(E1).has_pending());
    }

    #[test]
    fn merchant_detects_bad_endorsements() {
        let mut w = World::new(0);
        let order = w.order(600);
        let bills = w.bills(&order, BillingMode::FanOut);
        let e = w.endorse(&bills[0]).unwrap();
        let dir = w.dir().clone();
        let check = |e: &EndorsementMessage, mode, seen: &BTreeSet<CoinId>| {
            check_endorsement(&order, e, &dir, &w.policy, mode, seen, w.now)
        };
        assert_eq!(check(&e, SizeMode::Full, &BTreeSet::new()), Ok(600));
        // Coins the merchant already took.
        let seen: BTreeSet<CoinId> = e.coins.iter().map(|c| c.id).collect();
        assert_eq!(check(&e, SizeMode::Lightweight, &seen), Err(RejectReason::DoubleSpend));
        // Forged coin.
        let mut forged = e.clone();
        forged.coins[0].value += 1;
        assert_eq!(check(&forged, SizeMode::Lightweight, &BTreeSet::new()), Err(RejectReason::BadCredential));
        // Stale by the time it arrives.
        let late = w.now + SimTime::from_secs(61);
        assert_eq!(
            check_endorsement(&order, &e, &dir, &w.policy, SizeMode::Full, &BTreeSet::new(), late),
            Err(RejectReason::StaleChain)
        );
        // A stricter merchant quorum is not met.
        let strict = QuorumPolicy { quorum: 5, ..w.policy };
        assert_eq!(
            check_endorsement(&order, &e, &dir, &strict, SizeMode::Lightweight, &BTreeSet::new(), w.now),
            Err(RejectReason::InsufficientQuorum)
        );
        assert_eq!(MessageKind::Endorsement.frame_bytes(), 5120);
    }

    #[test]
    fn finalize_without_quorum_fails_and_releases_coins() {
        let mut w = World::new(0);
        let order = w.order(400);
        let bills = w.bills(&order, BillingMode::FanOut);
        let dir = w.dir().clone();
        let (policy, now) = (w.policy, w.now);
        let e = w.endorser(E1);
        let draft = endorser_endorse(e, &bills[0], &dir, &policy, Position::default(), now).unwrap();
        let chain = Arc::clone(&w.endorser(E1).chain);
        let sigs = w.countersign(&chain, &draft.proposal, 2, &[]).unwrap();
        let e = w.endorser(E1);
        assert_eq!(endorser_finalize(e, draft, sigs, &dir, &policy).unwrap_err(), RejectReason::InsufficientQuorum);
        assert_eq!(e.balance(now), 3000);
    }
}
