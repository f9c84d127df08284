//! Additively homomorphic encryption.
//!
//! A Paillier-style scheme with `g = N + 1` whose randomizer is drawn from
//! the subgroup generated by an `N`-th residue `h`, using short exponents of
//! `subgroup_bits` bits. Plaintexts are signed integers in the `t`-bit
//! two's-complement range.

mod codec;
mod paillier;

pub use codec::{validate_capacity, CapacityCheck, CapacityQuery, CapacityReport, FixedPointCodec};
pub use paillier::{keygen, Ciphertext, KeyId, OpCounter, OpCounts, PublicKey, SecretKey};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Environment variable that overrides [`HeParams::default`].
pub const PARAMS_ENV: &str = "KEYFORGE_HE_PARAMS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeParams {
    pub modulus_bits: u32,
    pub subgroup_bits: u32,
    pub plaintext_bits: u32,
}

impl Default for HeParams {
    fn default() -> Self {
        Self { modulus_bits: 1024, subgroup_bits: 160, plaintext_bits: 65 }
    }
}

impl HeParams {
    pub fn validate(&self) -> Result<()> {
        if self.modulus_bits < 256 || self.modulus_bits % 2 != 0 {
            return Err(Error::Param(format!("modulus_bits must be even and >= 256, got {}", self.modulus_bits)));
        }
        if self.subgroup_bits < 32 || self.subgroup_bits > self.modulus_bits {
            return Err(Error::Param(format!(
                "subgroup_bits must be in [32, {}], got {}",
                self.modulus_bits, self.subgroup_bits
            )));
        }
        // Centered decryption needs 2^t well inside N / 2; i128 bounds t from above.
        if self.plaintext_bits < 2 || self.plaintext_bits > 127 || self.plaintext_bits + 2 >= self.modulus_bits {
            return Err(Error::Param(format!("plaintext_bits {} out of range", self.plaintext_bits)));
        }
        Ok(())
    }

    /// Smallest and largest plaintext, `[-2^{t-1}, 2^{t-1})`.
    pub fn plaintext_range(&self) -> (i128, i128) {
        let half = 1i128 << (self.plaintext_bits - 1);
        (-half, half - 1)
    }

    /// Parses either a JSON object or a comma-separated `key=value` list.
    /// Missing fields keep their defaults.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let params = if s.starts_with('{') {
            serde_json::from_str(s)?
        } else {
            let mut p = Self::default();
            for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Param(format!("expected key=value, got {part:?}")))?;
                let v: u32 = v.trim().parse().map_err(|_| Error::Param(format!("bad number in {part:?}")))?;
                match k.trim() {
                    "modulus_bits" => p.modulus_bits = v,
                    "subgroup_bits" => p.subgroup_bits = v,
                    "plaintext_bits" | "t" => p.plaintext_bits = v,
                    other => return Err(Error::Param(format!("unknown parameter {other:?}"))),
                }
            }
            p
        };
        params.validate()?;
        Ok(params)
    }

    /// Defaults, overridden by `KEYFORGE_HE_PARAMS` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(PARAMS_ENV) {
            Ok(s) => Self::parse(&s),
            Err(_) => Ok(Self::default()),
        }
    }
}
