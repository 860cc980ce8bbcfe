use crate::crypto::{DigestBuilder, PublicKey, SecretKey, Signature};
use crate::{EntityId, SimTime};

/// One guarantor and the per-transaction amount (cents) it agreed to cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndorserLink {
    pub endorser: EntityId,
    pub limit: u64,
}

/// Bank-signed list of a customer's primary endorsers and, for each primary,
/// that primary's own endorsers (who inherit the transaction at the amount
/// they agreed for the primary).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorsementTree {
    pub customer: EntityId,
    pub primaries: Vec<EndorserLink>,
    /// `secondaries[i]` are the endorsers of `primaries[i]`.
    pub secondaries: Vec<Vec<EndorserLink>>,
    pub bank_signature: Signature,
}

impl EndorsementTree {
    pub fn signed_bytes(customer: EntityId, primaries: &[EndorserLink], secondaries: &[Vec<EndorserLink>]) -> Vec<u8> {
        let mut h = DigestBuilder::new();
        h.update(b"endorsement-tree").update(&customer.to_be_bytes());
        h.update(&(primaries.len() as u16).to_be_bytes());
        for (i, p) in primaries.iter().enumerate() {
            h.update(&p.endorser.to_be_bytes()).update(&p.limit.to_be_bytes());
            let secs = secondaries.get(i).map(Vec::as_slice).unwrap_or(&[]);
            h.update(&(secs.len() as u16).to_be_bytes());
            for s in secs {
                h.update(&s.endorser.to_be_bytes()).update(&s.limit.to_be_bytes());
            }
        }
        h.finish().to_vec()
    }

    pub fn sign(
        bank: &SecretKey,
        customer: EntityId,
        primaries: Vec<EndorserLink>,
        mut secondaries: Vec<Vec<EndorserLink>>,
        now: SimTime,
    ) -> Result<Self, crate::crypto::CryptoError> {
        secondaries.resize(primaries.len(), Vec::new());
        let sig = bank.sign(&Self::signed_bytes(customer, &primaries, &secondaries), now)?;
        Ok(EndorsementTree { customer, primaries, secondaries, bank_signature: sig })
    }

    pub fn verify(&self, bank: &PublicKey) -> bool {
        self.primaries.len() == self.secondaries.len()
            && self.primaries.iter().chain(self.secondaries.iter().flatten()).all(|l| l.limit > 0)
            && bank.verify(&Self::signed_bytes(self.customer, &self.primaries, &self.secondaries), &self.bank_signature)
    }

    pub fn is_empty(&self) -> bool {
        self.primaries.is_empty() && self.secondaries.iter().all(Vec::is_empty)
    }

    /// Secondary endorsers, deduplicated, excluding anyone who is already a
    /// primary or the customer.
    pub fn secondary_links(&self) -> Vec<EndorserLink> {
        let mut out: Vec<EndorserLink> = Vec::new();
        for s in self.secondaries.iter().flatten() {
            if s.endorser == self.customer
                || self.primaries.iter().any(|p| p.endorser == s.endorser)
                || out.iter().any(|o| o.endorser == s.endorser)
            {
                continue;
            }
            out.push(*s);
        }
        out
    }

    /// Every distinct endorser with its limit, primaries first.
    pub fn all_links(&self) -> Vec<EndorserLink> {
        let mut out = self.primaries.clone();
        out.extend(self.secondary_links());
        out
    }

    pub fn limit_of(&self, endorser: EntityId) -> Option<u64> {
        self.all_links().into_iter().find(|l| l.endorser == endorser).map(|l| l.limit)
    }

    pub fn is_primary(&self, endorser: EntityId) -> bool {
        self.primaries.iter().any(|p| p.endorser == endorser)
    }

    pub fn encoded_len(&self) -> usize {
        2 + 2 + 64 + self.primaries.len() * 10 + self.secondaries.iter().map(|s| 2 + s.len() * 10).sum::<usize>()
    }
}
