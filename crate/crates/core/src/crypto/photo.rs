use super::hash::{hash, Digest};
use super::{CryptoError, PublicKey, SecretKey, Signature};
use crate::SimTime;

/// A credential blob (photo) signed by both the bank and its owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPhoto {
    pub photo_digest: Digest,
    pub bank_signature: Signature,
    pub customer_signature: Signature,
    pub timestamp: SimTime,
}

fn signed_bytes(digest: &Digest, timestamp: SimTime) -> [u8; 40] {
    let mut out = [0u8; 40];
    out[..32].copy_from_slice(digest);
    out[32..].copy_from_slice(&timestamp.to_be_bytes());
    out
}

pub fn issue_signed_photo(
    bank_key: &SecretKey,
    customer_key: &SecretKey,
    photo: &[u8],
    now: SimTime,
) -> Result<SignedPhoto, CryptoError> {
    let photo_digest = hash(photo);
    let msg = signed_bytes(&photo_digest, now);
    Ok(SignedPhoto {
        photo_digest,
        bank_signature: bank_key.sign(&msg, now)?,
        customer_signature: customer_key.sign(&msg, now)?,
        timestamp: now,
    })
}

/// True iff the presented blob matches and both signatures verify.
pub fn verify_signed_photo(
    p: &SignedPhoto,
    bank_pub: &PublicKey,
    customer_pub: &PublicKey,
    presented_photo: &[u8],
) -> bool {
    let msg = signed_bytes(&p.photo_digest, p.timestamp);
    hash(presented_photo) == p.photo_digest
        && bank_pub.verify(&msg, &p.bank_signature)
        && customer_pub.verify(&msg, &p.customer_signature)
}

impl SignedPhoto {
    /// Same as [`verify_signed_photo`], and also rejects timestamps after `now`.
    pub fn verify_at(
        &self,
        bank_pub: &PublicKey,
        customer_pub: &PublicKey,
        presented_photo: &[u8],
        now: SimTime,
    ) -> Result<bool, CryptoError> {
        if self.timestamp > now {
            return Err(CryptoError::FutureTimestamp { timestamp: self.timestamp });
        }
        Ok(verify_signed_photo(self, bank_pub, customer_pub, presented_photo))
    }
}
