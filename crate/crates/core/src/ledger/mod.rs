//! E-coins, the spent-coin Bloom filter, Merkle compression and the
//! monitor-countersigned event chain.

mod bloom;
mod chain;
mod coin;
pub mod layout;
mod merkle;

pub use bloom::SpentCoinFilter;
pub use chain::{
    is_double_spent, monitor_quorum, BlockProposal, BreakReason, ChainError, ChainVerdict, EventChain, QuorumPolicy,
    VerifyContext,
};
pub use coin::{CoinError, CoinId, ECoin};
pub use layout::{block_size_bytes, chain_size_bytes, merchant_view_bytes, monitor_view_bytes, Block, Event, SizeMode};
pub use merkle::{merkle_root, verify_proof, MerkleTree, ProofStep};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("merkle tree needs at least one leaf")]
    EmptyLeaves,
    #[error("event chain failed verification: {0:?}")]
    InvalidChain(ChainVerdict),
    #[error("malformed encoding at byte {0}")]
    Malformed(usize),
}
