//! Protocol state machines for a consensusless payment system: the
//! per-client ledger, reliable broadcast, consensus on demand with a fast
//! path, and a sequencer-based consensus used as its slow path.
//!
//! Every state machine here is synchronous and I/O free. Handlers take a
//! message and return [`Effects`] describing what to send and what was
//! accepted; the simulator in `ondemand-simnet` drives them.

pub mod brb;
pub mod cod;
pub mod error;
pub mod ledger;
pub mod message;
pub mod multishot;
pub mod one_round;
pub mod params;
pub mod types;

pub use brb::BrbInstance;
pub use cod::{CodInstance, ConsensusPort};
pub use error::{LedgerError, ParamsError, ProtocolError};
pub use ledger::{AccountSnapshot, LedgerSnapshot, LedgerState};
pub use message::{
    broadcast, AcceptPath, Effects, Envelope, KindTag, MessageKind, ProtocolMessage, Transition,
    TransitionKind,
};
pub use multishot::{MultishotInstance, Sequencer};
pub use one_round::{DecideRule, OneRoundInstance};
pub use params::SystemParams;
pub use types::{
    canonical_encoding, conflicts, plurality, sign, Amount, AuthToken, ClientId, ServerId, Sn,
    Transaction, TxDigest, TxKey,
};
