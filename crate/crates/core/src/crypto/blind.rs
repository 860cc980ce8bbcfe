//! RSA-style blind signatures with multiplicative blinding.
//!
//! The bank signs `H(m) * r^e mod n` without learning `H(m)`; the requester
//! divides out `r` to obtain an ordinary signature `H(m)^d mod n`. Moduli are
//! products of two ~31-bit primes.

use rand::Rng;

use super::arith::{gcd, is_prime, mod_inverse, mod_mul, mod_pow};
use super::hash::hash_parts;
use super::{CryptoError, Signature};
use crate::constants::SIGNATURE_LEN;
use crate::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlindPublicKey {
    pub owner: EntityId,
    pub n: u64,
    pub e: u64,
}

#[derive(Clone, PartialEq, Eq)]
pub struct BlindSecretKey {
    pub owner: EntityId,
    n: u64,
    d: u64,
}

impl std::fmt::Debug for BlindSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlindSecretKey").field("owner", &self.owner).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct BlindKeyPair {
    pub public: BlindPublicKey,
    pub private: BlindSecretKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlindingFactor(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlindedMessage(pub u64);

impl BlindKeyPair {
    /// Builds a key from explicit primes and public exponent.
    ///
    /// Returns `None` if the inputs do not form a valid RSA key.
    pub fn from_primes(owner: EntityId, p: u64, q: u64, e: u64) -> Option<Self> {
        if p == q || !is_prime(p) || !is_prime(q) {
            return None;
        }
        let n = p.checked_mul(q)?;
        let phi = (p - 1) * (q - 1);
        let d = mod_inverse(e, phi)?;
        Some(BlindKeyPair { public: BlindPublicKey { owner, n, e }, private: BlindSecretKey { owner, n, d } })
    }

    /// Random key with two 31-bit primes and `e = 65537`.
    pub fn generate<R: Rng + ?Sized>(owner: EntityId, rng: &mut R) -> Self {
        loop {
            let p = random_prime(rng);
            let q = random_prime(rng);
            if let Some(kp) = Self::from_primes(owner, p, q, 65_537) {
                return kp;
            }
        }
    }
}

fn random_prime<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    loop {
        let c = rng.gen_range((1u64 << 30)..(1u64 << 31)) | 1;
        if is_prime(c) {
            return c;
        }
    }
}

/// Full-domain hash of `m` into `Z_n`.
pub fn message_representative(m: &[u8], n: u64) -> u64 {
    let d = hash_parts(&[b"blind-fdh", m]);
    u64::from_be_bytes(d[..8].try_into().unwrap()) % n
}

impl BlindingFactor {
    pub fn random<R: Rng + ?Sized>(pk: &BlindPublicKey, rng: &mut R) -> Self {
        loop {
            let r = rng.gen_range(2..pk.n);
            if gcd(r, pk.n) == 1 {
                return BlindingFactor(r);
            }
        }
    }

    fn check(self, pk: &BlindPublicKey) -> Result<(), CryptoError> {
        if self.0 == 0 || self.0 >= pk.n || gcd(self.0, pk.n) != 1 {
            return Err(CryptoError::InvalidBlindingFactor);
        }
        Ok(())
    }
}

pub fn blind(m: &[u8], r: BlindingFactor, pk: &BlindPublicKey) -> Result<BlindedMessage, CryptoError> {
    r.check(pk)?;
    let h = message_representative(m, pk.n);
    Ok(BlindedMessage(mod_mul(h, mod_pow(r.0, pk.e, pk.n), pk.n)))
}

fn encode(value: u64, signer: EntityId) -> Signature {
    let mut bytes = [0u8; SIGNATURE_LEN];
    bytes[..8].copy_from_slice(&value.to_be_bytes());
    Signature { bytes, signer }
}

fn decode(sig: &Signature) -> Option<u64> {
    if sig.bytes[8..].iter().any(|&b| b != 0) {
        return None;
    }
    Some(u64::from_be_bytes(sig.bytes[..8].try_into().unwrap()))
}

impl BlindSecretKey {
    /// Signs a blinded value. The signer never sees the message.
    pub fn sign_blinded(&self, b: BlindedMessage) -> Signature {
        encode(mod_pow(b.0 % self.n, self.d, self.n), self.owner)
    }
}

pub fn unblind(s: &Signature, r: BlindingFactor, pk: &BlindPublicKey) -> Result<Signature, CryptoError> {
    r.check(pk)?;
    let inv = mod_inverse(r.0, pk.n).ok_or(CryptoError::InvalidBlindingFactor)?;
    let value = decode(s).unwrap_or(0) % pk.n;
    Ok(encode(mod_mul(value, inv, pk.n), s.signer))
}

impl BlindPublicKey {
    pub fn verify(&self, m: &[u8], sig: &Signature) -> bool {
        if sig.signer != self.owner {
            return false;
        }
        match decode(sig) {
            Some(s) if s < self.n => mod_pow(s, self.e, self.n) == message_representative(m, self.n),
            _ => false,
        }
    }
}
