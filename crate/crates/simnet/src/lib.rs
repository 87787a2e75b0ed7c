//! Deterministic discrete-event simulator for the ondemand protocols.
//!
//! Nodes are wired all-to-all over reliable authenticated links; a
//! [`DeliveryPolicy`] plays the adversary that orders deliveries, and
//! Byzantine servers follow a [`ByzantineStrategy`]. Runs are pure functions
//! of their configuration, so identical inputs give byte-identical traces.

pub mod byzantine;
pub mod event;
pub mod network;
pub mod node;
pub mod policy;
pub mod result;
pub mod trace;

pub use byzantine::{ByzContext, ByzantineBehavior, ByzantineStrategy};
pub use event::{EventId, ScheduledEvent};
pub use network::{simulate, BuildError, Network, NetworkConfig, Submission, DEFAULT_MAX_STEPS};
pub use node::{Features, Protocol};
pub use policy::DeliveryPolicy;
pub use result::{Acceptance, NodeOutcome, RunResult};
pub use trace::{from_jsonl, to_jsonl, TraceRecord};
