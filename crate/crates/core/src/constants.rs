//! Wire and storage widths.
//!
//! Every size metric (event-chain size, merchant message size, transit
//! latency) is derived from this table, so changing a value here changes the
//! reported numbers.
//!
//! | item            | bytes |
//! |-----------------|-------|
//! | digest          | 32    |
//! | signature       | 64    |
//! | coin id         | 8     |
//! | timestamp       | 8     |
//! | gps (x, y f32)  | 8     |
//! | entity id       | 2     |
//! | count field     | 2     |
//! | event kind tag  | 1     |
//! | transaction msg | 5120  |
//! | hello msg       | 5     |

pub const DIGEST_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const COIN_ID_LEN: usize = 8;
pub const TIMESTAMP_LEN: usize = 8;
pub const GPS_LEN: usize = 8;
pub const ENTITY_ID_LEN: usize = 2;
pub const COUNT_LEN: usize = 2;
pub const EVENT_TAG_LEN: usize = 1;
/// Coin value in cents.
pub const COIN_VALUE_LEN: usize = 8;

/// Transaction-class messages (orders, billing, endorsements, monitor
/// signatures, settlement bundles) occupy a fixed 5 KB frame.
pub const TX_MESSAGE_BYTES: usize = 5 * 1024;
pub const HELLO_MESSAGE_BYTES: usize = 5;

/// Coin IDs per block in the event-chain size study.
pub const COINS_PER_FULL_BLOCK: usize = 10;

/// Serialized e-coin: id, endorser, value, expiry, bank signature.
pub const ECOIN_LEN: usize = COIN_ID_LEN + ENTITY_ID_LEN + COIN_VALUE_LEN + TIMESTAMP_LEN + SIGNATURE_LEN;
