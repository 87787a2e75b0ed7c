//! Domain types shared by every protocol: identifiers, transactions and
//! their simulated authenticity tokens.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Per-sender sequence number.
pub type Sn = u64;

/// Currency units. No fractional amounts exist.
pub type Amount = u64;

/// A client (account holder) identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(String);

impl ClientId {
    pub fn new(name: impl Into<String>) -> Self {
        ClientId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        ClientId(s.to_owned())
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A server (replica) identifier in `0..n`. The simulator also uses index `n`
/// for the consensus sequencer.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ServerId(pub usize);

impl ServerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifies one protocol instance: one per distinct `(sender, sn)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxKey {
    pub sender: ClientId,
    pub sn: Sn,
}

impl TxKey {
    pub fn new(sender: impl Into<ClientId>, sn: Sn) -> Self {
        TxKey {
            sender: sender.into(),
            sn,
        }
    }
}

impl fmt::Display for TxKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.sender, self.sn)
    }
}

/// 32-byte SHA-256 digest of a transaction's canonical encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxDigest(pub [u8; 32]);

impl TxDigest {
    /// First 8 bytes in hex; the short form used in traces and reports.
    pub fn short_hex(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

impl fmt::Display for TxDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

const AUTH_DOMAIN: &[u8] = b"ondemand/sim-auth/v1";

/// Simulated signature over the four transaction fields.
///
/// There is no public constructor other than [`sign`], so the only way to
/// hold a token that verifies is to have signed exactly those fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AuthToken([u8; 32]);

impl AuthToken {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses a token from hex. The result still has to pass [`Transaction::verify`].
    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(AuthToken(arr))
    }
}

/// Signs the 4-tuple `(sender, sn, recipient, amount)`.
pub fn sign(sender: &ClientId, sn: Sn, recipient: &ClientId, amount: Amount) -> AuthToken {
    let body = canonical_encoding(sender, sn, recipient, amount);
    let mut h = Sha256::new();
    h.update(AUTH_DOMAIN);
    h.update(&body);
    let mut out = [0u8; 32];
    out.copy_from_slice(&h.finalize());
    AuthToken(out)
}

fn put_field(buf: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(bytes);
}

/// Canonical byte encoding: fields in the order sender, sn, recipient,
/// amount; each field is a big-endian `u32` length followed by its bytes;
/// integers are 8-byte big-endian.
pub fn canonical_encoding(
    sender: &ClientId,
    sn: Sn,
    recipient: &ClientId,
    amount: Amount,
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + sender.0.len() + recipient.0.len());
    put_field(&mut buf, sender.0.as_bytes());
    put_field(&mut buf, &sn.to_be_bytes());
    put_field(&mut buf, recipient.0.as_bytes());
    put_field(&mut buf, &amount.to_be_bytes());
    buf
}

/// A payment `(sender, sn, recipient, amount)` plus its authenticity token.
///
/// Equality, ordering and hashing only look at the four payment fields; the
/// token is an attachment checked by [`Transaction::verify`].
#[derive(Clone, Debug)]
pub struct Transaction {
    pub sender: ClientId,
    pub sn: Sn,
    pub recipient: ClientId,
    pub amount: Amount,
    pub auth: Option<AuthToken>,
}

impl Transaction {
    /// Builds and signs a transaction.
    pub fn signed(
        sender: impl Into<ClientId>,
        sn: Sn,
        recipient: impl Into<ClientId>,
        amount: Amount,
    ) -> Self {
        let mut t = Transaction::unsigned(sender, sn, recipient, amount);
        t.auth = Some(sign(&t.sender, t.sn, &t.recipient, t.amount));
        t
    }

    pub fn unsigned(
        sender: impl Into<ClientId>,
        sn: Sn,
        recipient: impl Into<ClientId>,
        amount: Amount,
    ) -> Self {
        Transaction {
            sender: sender.into(),
            sn,
            recipient: recipient.into(),
            amount,
            auth: None,
        }
    }

    pub fn with_auth(mut self, auth: Option<AuthToken>) -> Self {
        self.auth = auth;
        self
    }

    pub fn key(&self) -> TxKey {
        TxKey {
            sender: self.sender.clone(),
            sn: self.sn,
        }
    }

    /// True iff the attached token was produced by [`sign`] for exactly these fields.
    pub fn verify(&self) -> bool {
        match self.auth {
            Some(token) => token == sign(&self.sender, self.sn, &self.recipient, self.amount),
            None => false,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encoding(&self.sender, self.sn, &self.recipient, self.amount)
    }

    pub fn digest(&self) -> TxDigest {
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(self.canonical_bytes()));
        TxDigest(out)
    }

    fn fields(&self) -> (&ClientId, Sn, &ClientId, Amount) {
        (&self.sender, self.sn, &self.recipient, self.amount)
    }
}

impl PartialEq for Transaction {
    fn eq(&self, other: &Self) -> bool {
        self.fields() == other.fields()
    }
}

impl Eq for Transaction {}

impl Hash for Transaction {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.fields().hash(state);
    }
}

impl PartialOrd for Transaction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Transaction {
    fn cmp(&self, other: &Self) -> Ordering {
        self.fields().cmp(&other.fields())
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.sender, self.sn, self.recipient, self.amount
        )
    }
}

/// Two transactions conflict when they share sender and sequence number but
/// differ in recipient or amount.
pub fn conflicts(t: &Transaction, u: &Transaction) -> bool {
    t.sender == u.sender && t.sn == u.sn && (t.recipient != u.recipient || t.amount != u.amount)
}

/// Picks the value with the highest count, breaking ties by the smallest
/// canonical digest. Returns `None` for an empty input.
pub fn plurality<'a, I>(counts: I) -> Option<&'a Transaction>
where
    I: IntoIterator<Item = (&'a Transaction, usize)>,
{
    counts
        .into_iter()
        .map(|(t, c)| (t, c, t.digest()))
        .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.2.cmp(&b.2)))
        .map(|(t, _, _)| t)
}
