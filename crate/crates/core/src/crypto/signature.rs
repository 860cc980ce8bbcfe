//! Schnorr signatures over the order-`q` subgroup of `Z_p^*`, with
//! `p = 2q + 1` a 62-bit safe prime and deterministic nonces derived from
//! the secret key and the message.

use rand::Rng;

use super::arith::{mod_mul, mod_pow};
use super::hash::DigestBuilder;
use super::CryptoError;
use crate::constants::SIGNATURE_LEN;
use crate::{EntityId, SimTime};

/// Group modulus, a safe prime.
pub(crate) const P: u64 = 4_611_686_018_427_377_339;
/// Subgroup order, `(P - 1) / 2`.
pub(crate) const Q: u64 = 2_305_843_009_213_688_669;
/// Generator of the quadratic residues (order `Q`).
pub(crate) const G: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub bytes: [u8; SIGNATURE_LEN],
    pub signer: EntityId,
}

impl Signature {
    /// A signature-shaped value that verifies under no key.
    pub fn garbage(signer: EntityId, fill: u8) -> Self {
        Signature { bytes: [fill; SIGNATURE_LEN], signer }
    }

    fn challenge(&self) -> u64 {
        u64::from_be_bytes(self.bytes[..8].try_into().unwrap())
    }

    fn response(&self) -> u64 {
        u64::from_be_bytes(self.bytes[8..16].try_into().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey {
    pub owner: EntityId,
    pub(crate) y: u64,
    pub expiry: Option<SimTime>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub owner: EntityId,
    x: u64,
    y: u64,
    pub expiry: Option<SimTime>,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey").field("owner", &self.owner).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: SecretKey,
}

impl KeyPair {
    pub fn generate<R: Rng + ?Sized>(owner: EntityId, expiry: Option<SimTime>, rng: &mut R) -> Self {
        let x = rng.gen_range(1..Q);
        Self::from_secret(owner, x, expiry)
    }

    fn from_secret(owner: EntityId, x: u64, expiry: Option<SimTime>) -> Self {
        let y = mod_pow(G, x, P);
        KeyPair { public: PublicKey { owner, y, expiry }, private: SecretKey { owner, x, y, expiry } }
    }
}

fn challenge(r: u64, y: u64, m: &[u8]) -> u64 {
    let mut h = DigestBuilder::new();
    h.update(b"sig-challenge").update(&r.to_be_bytes()).update(&y.to_be_bytes()).update(m);
    let d = h.finish();
    u64::from_be_bytes(d[..8].try_into().unwrap()) % Q
}

fn padding(e: u64, s: u64) -> [u8; 32] {
    let mut h = DigestBuilder::new();
    h.update(b"sig-pad").update(&e.to_be_bytes()).update(&s.to_be_bytes());
    h.finish()
}

impl SecretKey {
    pub fn public(&self) -> PublicKey {
        PublicKey { owner: self.owner, y: self.y, expiry: self.expiry }
    }

    /// Signs `m`; fails once `now` has passed the key's expiry.
    pub fn sign(&self, m: &[u8], now: SimTime) -> Result<Signature, CryptoError> {
        if let Some(expiry) = self.expiry {
            if now > expiry {
                return Err(CryptoError::ExpiredKey { expiry });
            }
        }
        Ok(self.sign_unchecked(m))
    }

    pub(crate) fn sign_unchecked(&self, m: &[u8]) -> Signature {
        let mut h = DigestBuilder::new();
        h.update(b"sig-nonce").update(&self.x.to_be_bytes()).update(m);
        let d = h.finish();
        let k = 1 + u64::from_be_bytes(d[..8].try_into().unwrap()) % (Q - 1);
        let r = mod_pow(G, k, P);
        let e = challenge(r, self.y, m);
        let s = ((k as u128 + mod_mul(self.x, e, Q) as u128) % Q as u128) as u64;
        let mut bytes = [0u8; SIGNATURE_LEN];
        bytes[..8].copy_from_slice(&e.to_be_bytes());
        bytes[8..16].copy_from_slice(&s.to_be_bytes());
        bytes[16..48].copy_from_slice(&padding(e, s));
        Signature { bytes, signer: self.owner }
    }
}

impl PublicKey {
    /// Checks `sig` over `m`, ignoring expiry.
    pub fn verify(&self, m: &[u8], sig: &Signature) -> bool {
        if sig.signer != self.owner {
            return false;
        }
        let (e, s) = (sig.challenge(), sig.response());
        if e >= Q || s >= Q || sig.bytes[16..48] != padding(e, s) || sig.bytes[48..].iter().any(|&b| b != 0) {
            return false;
        }
        // r = g^s * y^(-e); y has order Q so y^(-e) = y^(Q - e).
        let r = mod_mul(mod_pow(G, s, P), mod_pow(self.y, (Q - e) % Q, P), P);
        challenge(r, self.y, m) == e
    }

    /// Like [`verify`](Self::verify) but also rejects once the key expired.
    pub fn verify_at(&self, m: &[u8], sig: &Signature, now: SimTime) -> bool {
        match self.expiry {
            Some(expiry) if now > expiry => false,
            _ => self.verify(m, sig),
        }
    }

    pub fn to_be_bytes(&self) -> [u8; 8] {
        self.y.to_be_bytes()
    }

    /// Rebuilds a key from its encoded group element.
    pub fn from_be_bytes(owner: EntityId, bytes: [u8; 8], expiry: Option<SimTime>) -> Self {
        PublicKey { owner, y: u64::from_be_bytes(bytes), expiry }
    }
}
