//! Endorsement-based offline mobile payments for infrastructureless networks.
//!
//! The crate is split along the lines of the system it models:
//!
//! * [`crypto`]: hashing, Schnorr-style signatures over a 62-bit safe-prime
//!   group, RSA-style blind signatures for temporary IDs, and bank-signed
//!   credential photos.
//! * [`ledger`]: e-coins, the monitor-countersigned event chain, the
//!   spent-coin Bloom filter and Merkle compression.
//! * [`protocol`]: roles, messages and the transaction state machines
//!   (order, billing, endorsement, monitoring, acceptance, bank settlement).
//! * [`net`]: a deterministic discrete-event simulator of node mobility,
//!   unit-disc radio, store-carry-forward buffering and the delivery truck.
//! * [`adversary`]: scripted attacks, each mapped to the defense that stops it.
//! * [`harness`]: metrics, parameter sweeps and CSV output.
//!
//! Sizes used by every byte-count metric live in [`constants`].

pub mod adversary;
pub mod constants;
pub mod crypto;
pub mod harness;
pub mod ledger;
pub mod net;
pub mod protocol;
mod types;

pub use types::{EntityId, Position, SimTime};
