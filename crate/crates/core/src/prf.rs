//! Seeds, keyed pseudorandom functions and RNG stream splitting.
//!
//! A [`Seed`] is a 256-bit key. Keys for the per-literal PRF are derived from
//! it with BLAKE3 key derivation; the PRF itself is keyed SipHash-2-4 over a
//! fixed-width, domain-tagged byte encoding. Child seeds for RNG streams are
//! derived with keyed BLAKE3 so parallel callers never share a stream.

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use siphasher::sip::SipHasher24;

use crate::error::{Error, Result};

/// A 256-bit key, printed as 64 hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    /// Expands a small integer into a full key.
    pub fn from_u64(x: u64) -> Seed {
        Seed(blake3::derive_key("mtf seed from u64", &x.to_be_bytes()))
    }

    /// Independent child key for `(label, index)`.
    pub fn derive(&self, label: &str, index: u64) -> Seed {
        let mut h = blake3::Hasher::new_keyed(&self.0);
        h.update(&(label.len() as u64).to_be_bytes());
        h.update(label.as_bytes());
        h.update(&index.to_be_bytes());
        Seed(*h.finalize().as_bytes())
    }

    /// A fresh ChaCha stream keyed by this seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

impl FromStr for Seed {
    type Err = Error;

    /// Accepts 64 hex characters, or a decimal integer expanded via [`Seed::from_u64`].
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() == 64 {
            let mut out = [0u8; 32];
            hex::decode_to_slice(s, &mut out).map_err(|e| Error::Parse(format!("seed hex: {e}")))?;
            return Ok(Seed(out));
        }
        s.parse::<u64>()
            .map(Seed::from_u64)
            .map_err(|_| Error::Parse(format!("seed must be 64 hex chars or a u64, got {s:?}")))
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Keyed SipHash-2-4 PRF with 64-bit outputs.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Prf {
    k0: u64,
    k1: u64,
}

impl Prf {
    pub fn new(seed: &Seed, context: &str) -> Prf {
        let key = blake3::derive_key(context, &seed.0);
        let k0 = u64::from_le_bytes(key[0..8].try_into().unwrap());
        let k1 = u64::from_le_bytes(key[8..16].try_into().unwrap());
        Prf { k0, k1 }
    }

    /// Hasher that has absorbed `tag`; extend it with [`absorb`] and finish.
    pub fn start(&self, tag: &[u8]) -> SipHasher24 {
        let mut h = SipHasher24::new_with_keys(self.k0, self.k1);
        h.write(&(tag.len() as u64).to_be_bytes());
        h.write(tag);
        h
    }

    /// PRF value of `tag` followed by the given words.
    pub fn eval(&self, tag: &[u8], words: &[u64]) -> u64 {
        let mut h = self.start(tag);
        for &w in words {
            absorb(&mut h, w);
        }
        h.finish()
    }
}

/// Appends one fixed-width big-endian word.
#[inline]
pub fn absorb(h: &mut SipHasher24, w: u64) {
    h.write(&w.to_be_bytes());
}
