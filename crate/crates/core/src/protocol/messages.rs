use std::sync::Arc;

use super::EndorsementTree;
use crate::constants::{HELLO_MESSAGE_BYTES, TX_MESSAGE_BYTES};
use crate::crypto::{BlindPublicKey, Digest, DigestBuilder, PublicKey, Signature, SignedPhoto};
use crate::ledger::{ECoin, EventChain};
use crate::{EntityId, SimTime};

pub type TxId = Digest;

/// Single-use pseudonym: a random nonce carrying the bank's blind signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TempId {
    pub nonce: [u8; 16],
    pub signature: Signature,
}

impl TempId {
    pub fn verify(&self, bank: &BlindPublicKey) -> bool {
        bank.verify(&self.nonce, &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionOrder {
    pub temp_id: TempId,
    pub customer: EntityId,
    pub merchant: EntityId,
    pub bank: EntityId,
    pub tree: EndorsementTree,
    pub item: u32,
    pub quantity: u32,
    pub amount: u64,
    pub photo: SignedPhoto,
    pub photo_blob: Vec<u8>,
    pub created_at: SimTime,
    pub customer_signature: Signature,
}

impl TransactionOrder {
    #[allow(clippy::too_many_arguments)]
    pub fn signed_bytes(
        temp_id: &TempId,
        customer: EntityId,
        merchant: EntityId,
        bank: EntityId,
        tree: &EndorsementTree,
        item: u32,
        quantity: u32,
        amount: u64,
        photo: &SignedPhoto,
        created_at: SimTime,
    ) -> Vec<u8> {
        let mut h = DigestBuilder::new();
        h.update(b"order")
            .update(&temp_id.nonce)
            .update(&customer.to_be_bytes())
            .update(&merchant.to_be_bytes())
            .update(&bank.to_be_bytes())
            .update(&tree.bank_signature.bytes)
            .update(&item.to_be_bytes())
            .update(&quantity.to_be_bytes())
            .update(&amount.to_be_bytes())
            .update(&photo.photo_digest)
            .update(&created_at.to_be_bytes());
        h.finish().to_vec()
    }

    pub fn body_bytes(&self) -> Vec<u8> {
        Self::signed_bytes(
            &self.temp_id,
            self.customer,
            self.merchant,
            self.bank,
            &self.tree,
            self.item,
            self.quantity,
            self.amount,
            &self.photo,
            self.created_at,
        )
    }

    pub fn tx_id(&self) -> TxId {
        let mut h = DigestBuilder::new();
        h.update(&self.body_bytes()).update(&self.customer_signature.bytes);
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Billing {
    pub tx: TxId,
    pub order: Arc<TransactionOrder>,
    pub merchant: EntityId,
    pub endorser: EntityId,
    /// Amount requested from this endorser, in cents.
    pub amount: u64,
    /// 0 for primary endorsers, 1 for secondary.
    pub level: u8,
    pub issued_at: SimTime,
    pub deadline: SimTime,
    pub merchant_signature: Signature,
}

impl Billing {
    pub fn signed_bytes(tx: &TxId, endorser: EntityId, amount: u64, level: u8, deadline: SimTime) -> Vec<u8> {
        let mut out = b"billing".to_vec();
        out.extend_from_slice(tx);
        out.extend_from_slice(&endorser.to_be_bytes());
        out.extend_from_slice(&amount.to_be_bytes());
        out.push(level);
        out.extend_from_slice(&deadline.to_be_bytes());
        out
    }

    pub fn verify(&self, merchant_key: &PublicKey) -> bool {
        self.tx == self.order.tx_id()
            && merchant_key.verify(
                &Self::signed_bytes(&self.tx, self.endorser, self.amount, self.level, self.deadline),
                &self.merchant_signature,
            )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndorsementMessage {
    pub tx: TxId,
    pub endorser: EntityId,
    pub amount: u64,
    pub coins: Vec<ECoin>,
    /// Snapshot of the endorser's chain right after the spend block.
    pub chain: Arc<EventChain>,
    pub spend_index: usize,
    pub billed_at: SimTime,
    pub endorser_signature: Signature,
}

impl EndorsementMessage {
    pub fn signed_bytes(tx: &TxId, endorser: EntityId, amount: u64, coins: &[ECoin], spend_block: &Digest) -> Vec<u8> {
        let mut out = b"endorse".to_vec();
        out.extend_from_slice(tx);
        out.extend_from_slice(&endorser.to_be_bytes());
        out.extend_from_slice(&amount.to_be_bytes());
        for c in coins {
            out.extend_from_slice(&c.id.0);
        }
        out.extend_from_slice(spend_block);
        out
    }

    pub fn coin_value(&self) -> u64 {
        self.coins.iter().map(|c| c.value).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReceipt {
    pub tx: TxId,
    pub customer: EntityId,
    pub signature: Signature,
}

impl DeliveryReceipt {
    pub fn signed_bytes(tx: &TxId) -> Vec<u8> {
        let mut out = b"delivered".to_vec();
        out.extend_from_slice(tx);
        out
    }

    pub fn verify(&self, customer_key: &PublicKey) -> bool {
        customer_key.verify(&Self::signed_bytes(&self.tx), &self.signature)
    }
}

/// What the merchant hands to the truck for an accepted transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettlementBundle {
    pub merchant: EntityId,
    pub order: Arc<TransactionOrder>,
    /// (endorser, coins attached, endorsed amount) of accepted endorsements.
    pub endorsements: Vec<(EntityId, Vec<ECoin>, u64)>,
    /// Coins spent by endorsements that arrived after the order was covered.
    pub released: Vec<(EntityId, Vec<ECoin>)>,
    pub accepted_at: SimTime,
    pub receipt: Option<DeliveryReceipt>,
}

impl SettlementBundle {
    pub fn tx_id(&self) -> TxId {
        self.order.tx_id()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoinDelivery {
    pub endorser: EntityId,
    pub coins: Vec<ECoin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    TransactionOrder,
    Billing,
    Endorsement,
    MonitorRequest,
    MonitorReply,
    Hello,
    BankSettlement,
    DisputeClaim,
    DeliveryReceipt,
    CoinDelivery,
    SecondarySearch,
    SearchReply,
    /// Local event: a customer starts a purchase.
    Initiate,
    /// Local event: the merchant accepts or gives up on a purchase.
    Decision,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::TransactionOrder => "TransactionOrder",
            MessageKind::Billing => "Billing",
            MessageKind::Endorsement => "Endorsement",
            MessageKind::MonitorRequest => "MonitorRequest",
            MessageKind::MonitorReply => "MonitorReply",
            MessageKind::Hello => "Hello",
            MessageKind::BankSettlement => "BankSettlement",
            MessageKind::DisputeClaim => "DisputeClaim",
            MessageKind::DeliveryReceipt => "DeliveryReceipt",
            MessageKind::CoinDelivery => "CoinDelivery",
            MessageKind::SecondarySearch => "SecondarySearch",
            MessageKind::SearchReply => "SearchReply",
            MessageKind::Initiate => "Initiate",
            MessageKind::Decision => "Decision",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use MessageKind::*;
        [
            TransactionOrder,
            Billing,
            Endorsement,
            MonitorRequest,
            MonitorReply,
            Hello,
            BankSettlement,
            DisputeClaim,
            DeliveryReceipt,
            CoinDelivery,
            SecondarySearch,
            SearchReply,
            Initiate,
            Decision,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    /// Frame size: 5 KB for transaction-class messages, 5 B for hellos,
    /// nothing for local events.
    pub fn frame_bytes(&self) -> usize {
        match self {
            MessageKind::Hello => HELLO_MESSAGE_BYTES,
            MessageKind::Initiate | MessageKind::Decision => 0,
            _ => TX_MESSAGE_BYTES,
        }
    }
}

/// A message on the air: kind, endpoints, attachment bytes beyond the
/// frame (e.g. event-chain views) and the sender's signature over the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: EntityId,
    pub receiver: Option<EntityId>,
    pub body_digest: Digest,
    pub attachment_bytes: usize,
    pub sender_signature: Signature,
}

impl ProtocolMessage {
    pub fn size_bytes(&self) -> usize {
        self.kind.frame_bytes() + self.attachment_bytes
    }

    pub fn verify(&self, sender_key: &PublicKey) -> bool {
        sender_key.verify(&self.body_digest, &self.sender_signature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_sizes_follow_table() {
        assert_eq!(MessageKind::Hello.frame_bytes(), 5);
        assert_eq!(MessageKind::Billing.frame_bytes(), 5120);
        for k in ["Billing", "Hello", "SearchReply"] {
            assert_eq!(MessageKind::parse(k).unwrap().as_str(), k);
        }
        assert!(MessageKind::parse("Nope").is_none());
    }
}
