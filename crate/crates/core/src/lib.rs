//! addrnet: a deterministic discrete-event simulator of Bitcoin-style addr
//! gossip, together with the measurement pipelines that can be run against
//! its event logs: peer-degree estimation from observed spam relay,
//! address-to-peer clustering, connection-slot probing, and unreachable-peer
//! estimation. Every pipeline can be validated against the simulator's
//! ground truth.
//!
//! Crate layout:
//! - [`model`]: addresses, timestamps, AS categories, routability, spam batches
//! - [`engine`]: the event scheduler, connection/eviction state machine, logs
//! - [`relay`]: addr acceptance and relay semantics
//! - [`actors`]: scripted behaviors (monitors, spammers, probes) behind a
//!   name-keyed registry, selected by scenario configs at runtime
//! - [`probe`]: the slot-availability experiment and its outcome classifier
//! - [`estimator`]: degree estimation, address matching, unreachable counting
//! - [`scenario`]: config parsing, topology bootstrap, ground truth
//! - [`report`]: the analysis registry and CSV report emission

pub mod model;

pub mod engine;

pub mod relay;

pub mod actors;

pub mod probe;

pub mod estimator;

pub mod scenario;

pub mod truth;

pub mod report;

pub use model::{AddrRecord, NetAddress, Timestamp};
