use thiserror::Error;

use crate::types::{ClientId, Transaction, TxKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("a system needs at least one server")]
    NoServers,
    #[error("f = {f} leaves no honest server among n = {n}")]
    AllFaulty { n: usize, f: usize },
    #[error("n = {n} does not exceed 5f = {}", 5 * f)]
    ResilienceBound { n: usize, f: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("initial amount for client {client} is negative ({amount})")]
    NegativeAmount { client: ClientId, amount: i64 },
    #[error("initial distribution overflows the total supply")]
    SupplyOverflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("transaction {0} carries no valid authenticity token")]
    InvalidAuth(Box<Transaction>),
    #[error("transaction {tx} does not belong to instance {key}")]
    WrongInstance { key: TxKey, tx: Box<Transaction> },
    #[error("instance {key}: consensus returned {consensus} but {fast} was already accepted on the fast path")]
    ConflictingDecision {
        key: TxKey,
        fast: Box<Transaction>,
        consensus: Box<Transaction>,
    },
}
