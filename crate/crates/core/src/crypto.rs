//! Deterministic stand-ins for the hash oracle and the seed-chain signature.
//!
//! Every value here is a pure function of the run key and the inputs. The
//! 256-bit outputs are mapped onto the unit interval so that difficulty
//! arithmetic can be done on reals instead of `2^256`-scaled integers.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

/// Account identifier. Doubles as the public key of a [`KeyPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Opaque 256-bit digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Plain (unkeyed) SHA-256 of `data`. Used for block ids and tries.
    pub fn of(data: &[u8]) -> Self {
        Digest(Sha256::digest(data).into())
    }

    /// The digest read as `value / 2^256`, in `(0, 1]`.
    ///
    /// Only the top 64 bits matter at `f64` precision. A zero value maps to
    /// the smallest positive normal `f64` so `ln(unit)` stays finite.
    pub fn unit(&self) -> f64 {
        let mut top = [0u8; 8];
        top.copy_from_slice(&self.0[..8]);
        let unit = u64::from_be_bytes(top) as f64 / 18_446_744_073_709_551_616.0;
        if unit > 0.0 {
            unit
        } else {
            f64::MIN_POSITIVE
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }

    /// Short prefix for logs and transcripts.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Keyed pseudo-random function standing in for a uniform 256-bit hash.
///
/// The key is derived from the run seed so independent runs see independent
/// oracles while a single run is fully reproducible.
#[derive(Debug, Clone)]
pub struct Oracle {
    key: [u8; 32],
}

impl Oracle {
    pub fn new(run_seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"unity/oracle-key");
        h.update(run_seed.to_le_bytes());
        Oracle { key: h.finalize().into() }
    }

    pub fn hash(&self, preimage: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(preimage);
        Digest(h.finalize().into())
    }

    /// Fixed root of every staker's seed chain.
    pub fn genesis_seed(&self) -> Digest {
        self.hash(b"unity/genesis-seed")
    }

    /// Derives the staking key of `account` for this run.
    pub fn keypair(&self, account: AccountId) -> KeyPair {
        let mut pre = Vec::with_capacity(24);
        pre.extend_from_slice(b"unity/sk/");
        pre.extend_from_slice(&account.0.to_le_bytes());
        KeyPair::from_secret(account, *self.hash(&pre).as_bytes())
    }
}

/// Staking key. The public half is the account id.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pk: AccountId,
    sk: [u8; 32],
}

impl KeyPair {
    /// Builds a key pair whose secret commits to its public id: the last eight
    /// bytes of `sk` are overwritten with the account id, so `pk` is always
    /// recoverable from the secret alone.
    pub fn from_secret(account: AccountId, mut sk: [u8; 32]) -> Self {
        sk[24..].copy_from_slice(&account.0.to_le_bytes());
        KeyPair { pk: account, sk }
    }

    pub fn public(&self) -> AccountId {
        self.pk
    }

    /// Recovers the public id from a secret produced by [`KeyPair::from_secret`].
    pub fn public_of(sk: &[u8; 32]) -> AccountId {
        let mut id = [0u8; 8];
        id.copy_from_slice(&sk[24..]);
        AccountId(u64::from_le_bytes(id))
    }

    pub fn secret(&self) -> &[u8; 32] {
        &self.sk
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

/// Next link of a staker's seed chain: `seed' = sign(seed, sk)`.
pub fn sign_seed(prev: &Digest, key: &KeyPair) -> Digest {
    let mut h = Sha256::new();
    h.update(b"unity/sign");
    h.update(key.sk);
    h.update(prev.0);
    Digest(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_deterministic_and_keyed() {
        let a = Oracle::new(1);
        let b = Oracle::new(2);
        assert_eq!(a.hash(b"x"), a.hash(b"x"));
        assert_ne!(a.hash(b"x"), b.hash(b"x"));
    }

    #[test]
    fn unit_is_in_half_open_interval() {
        assert_eq!(Digest::ZERO.unit(), f64::MIN_POSITIVE);
        assert_eq!(Digest::from_bytes([0xff; 32]).unit(), 1.0);
        let mut half = [0u8; 32];
        half[0] = 0x80;
        assert_eq!(Digest::from_bytes(half).unit(), 0.5);
        assert!(Digest::ZERO.unit().ln().is_finite());
    }

    #[test]
    fn public_key_recoverable_from_secret() {
        let oracle = Oracle::new(9);
        let key = oracle.keypair(AccountId(123_456));
        assert_eq!(KeyPair::public_of(key.secret()), AccountId(123_456));
    }

    #[test]
    fn sign_seed_is_deterministic_and_key_dependent() {
        let oracle = Oracle::new(3);
        let s = oracle.genesis_seed();
        let k1 = oracle.keypair(AccountId(1));
        let k2 = oracle.keypair(AccountId(2));
        assert_eq!(sign_seed(&s, &k1), sign_seed(&s, &k1));
        assert_ne!(sign_seed(&s, &k1), sign_seed(&s, &k2));
    }

    #[test]
    fn seed_chain_replays() {
        let oracle = Oracle::new(4);
        let key = oracle.keypair(AccountId(7));
        let run = || {
            let mut s = oracle.genesis_seed();
            for _ in 0..100 {
                s = sign_seed(&s, &key);
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hex_round_trip() {
        let d = Oracle::new(5).hash(b"abc");
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Digest>(&json).unwrap(), d);
    }
}
