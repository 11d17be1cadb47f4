//! Wire protocol, connection handling and command-log persistence.

mod hub;
pub mod protocol;
pub mod store;

pub use hub::{hash_secret, ConnId, Hub, Outbound};
pub use protocol::{Envelope, ErrorBody, Request, MESSAGE_TYPES};
pub use store::{read_log, replay, Journal, LogRecord, MemJournal, Store, StoreError};
