use std::fmt;

use crate::constants::ECOIN_LEN;
use crate::crypto::{PublicKey, SecretKey, Signature};
use crate::{EntityId, SimTime};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoinId(pub [u8; 8]);

impl CoinId {
    pub fn from_u64(v: u64) -> Self {
        CoinId(v.to_be_bytes())
    }

    pub fn as_u64(&self) -> u64 {
        u64::from_be_bytes(self.0)
    }
}

impl fmt::Debug for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "coin:{:016x}", self.as_u64())
    }
}

/// Bank-issued endorsement token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ECoin {
    pub id: CoinId,
    pub endorser: EntityId,
    /// Value in cents.
    pub value: u64,
    pub expiry: SimTime,
    pub bank_signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoinError {
    #[error("coin value must be positive")]
    ZeroValue,
    #[error("coin expired at {0}")]
    Expired(SimTime),
    #[error("bank signature on coin does not verify")]
    BadSignature,
    #[error("coin belongs to {owner}, presented by {presenter}")]
    WrongOwner { owner: EntityId, presenter: EntityId },
}

impl ECoin {
    pub fn signed_fields(id: CoinId, endorser: EntityId, value: u64, expiry: SimTime) -> [u8; 26] {
        let mut out = [0u8; 26];
        out[..8].copy_from_slice(&id.0);
        out[8..10].copy_from_slice(&endorser.to_be_bytes());
        out[10..18].copy_from_slice(&value.to_be_bytes());
        out[18..].copy_from_slice(&expiry.to_be_bytes());
        out
    }

    pub fn issue(
        bank: &SecretKey,
        id: CoinId,
        endorser: EntityId,
        value: u64,
        expiry: SimTime,
        now: SimTime,
    ) -> Result<Self, crate::crypto::CryptoError> {
        let sig = bank.sign(&Self::signed_fields(id, endorser, value, expiry), now)?;
        Ok(ECoin { id, endorser, value, expiry, bank_signature: sig })
    }

    pub fn validate(&self, bank: &PublicKey, presenter: EntityId, now: SimTime) -> Result<(), CoinError> {
        if self.value == 0 {
            return Err(CoinError::ZeroValue);
        }
        if !bank.verify(&Self::signed_fields(self.id, self.endorser, self.value, self.expiry), &self.bank_signature) {
            return Err(CoinError::BadSignature);
        }
        if self.endorser != presenter {
            return Err(CoinError::WrongOwner { owner: self.endorser, presenter });
        }
        if now > self.expiry {
            return Err(CoinError::Expired(self.expiry));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        ECOIN_LEN
    }
}
