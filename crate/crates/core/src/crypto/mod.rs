//! Cryptographic primitives.
//!
//! All schemes here are desk-scale: parameters are small enough for fast,
//! deterministic simulation and offer no real-world security. The protocol
//! depends only on the sign/verify and blind/unblind contracts, so a
//! production scheme can replace them behind the same types.

mod arith;
mod blind;
mod hash;
mod photo;
mod signature;

pub use blind::{
    blind, message_representative, unblind, BlindKeyPair, BlindPublicKey, BlindSecretKey, BlindedMessage,
    BlindingFactor,
};
pub use hash::{hash, hash_parts, Digest, DigestBuilder};
pub use photo::{issue_signed_photo, verify_signed_photo, SignedPhoto};
pub use signature::{KeyPair, PublicKey, SecretKey, Signature};

use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("signing key expired at {expiry}")]
    ExpiredKey { expiry: SimTime },
    #[error("blinding factor is not invertible modulo the key modulus")]
    InvalidBlindingFactor,
    #[error("credential timestamp {timestamp} lies in the future")]
    FutureTimestamp { timestamp: SimTime },
}

#[cfg(test)]
pub(crate) use arith::is_prime;
