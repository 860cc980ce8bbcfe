//! Roles, messages and the endorsement transaction.
//!
//! A purchase runs: customer order → merchant billing fan-out → endorser
//! spend block countersigned by a monitor quorum → merchant acceptance →
//! settlement at the bank once the truck carries the bundle out.
//!
//! Everything here is a pure function of its inputs plus the caller-owned
//! role state; the simulator decides when and where each step runs.

mod bank;
mod location;
mod messages;
mod roles;
mod transcript;
mod tree;

#[cfg(test)]
pub(crate) mod testkit;

pub use bank::{
    Account, Bank, BankConfig, CoinStatus, Credentials, DisputeOutcome, Posting, PostingSummary, RegistrationRequest,
    Settlement,
};
pub use location::{location_similarity, LocationHistory, Similarity, SimilarityParams};
pub use messages::{
    Billing, CoinDelivery, DeliveryReceipt, EndorsementMessage, MessageKind, ProtocolMessage, SettlementBundle, TempId,
    TransactionOrder, TxId,
};
pub use roles::{
    bill_endorsers, chain_history, check_endorsement, customer_order, endorser_abort, endorser_endorse,
    endorser_finalize, hello_exchange, merchant_accept, merchant_process_order, monitor_countersign, sign_endorsement,
    Acceptance, BillingMode, CustomerState, Directory, EndorsementDraft, EndorserState, HelloOutcome, MonitorCheck,
    MonitorVerdict, OrderVerdict,
};
pub use transcript::{TranscriptLine, Verdict};
pub use tree::{EndorsementTree, EndorserLink};

use crate::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Customer,
    Endorser,
    Merchant,
    Bank,
    Truck,
}

/// Why a transaction, endorsement or countersignature was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    BadCredential,
    StaleChain,
    DoubleSpend,
    InsufficientQuorum,
    InsufficientCover,
    SimilarLocation,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::BadCredential,
        RejectReason::StaleChain,
        RejectReason::DoubleSpend,
        RejectReason::InsufficientQuorum,
        RejectReason::InsufficientCover,
        RejectReason::SimilarLocation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BadCredential => "BadCredential",
            RejectReason::StaleChain => "StaleChain",
            RejectReason::DoubleSpend => "DoubleSpend",
            RejectReason::InsufficientQuorum => "InsufficientQuorum",
            RejectReason::InsufficientCover => "InsufficientCover",
            RejectReason::SimilarLocation => "SimilarLocation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("{0} is already registered")]
    DuplicateRegistration(EntityId),
    #[error("{0} is not registered")]
    UnknownEntity(EntityId),
    #[error("customer has no unused temporary IDs")]
    NoTempIds,
    #[error("order amount must be positive")]
    ZeroAmount,
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("dispute filed after the deadline")]
    LateClaim,
    #[error("no escrow for this transaction")]
    NoEscrow,
    #[error(transparent)]
    Crypto(#[from] crate::crypto::CryptoError),
}
