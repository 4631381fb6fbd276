//! Memory-hard key derivation (Argon2id) with a single tunable cost knob.
//!
//! Cost `c` selects `8 * 2^c` KiB of memory and `1 + c / 4` passes, so each
//! increment roughly doubles the work.

use std::time::{Duration, Instant};

use argon2::{Algorithm, Argon2, Params, Version};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_KDF_COST: u32 = 18;
/// Lowest cost accepted outside the test profile.
pub const MIN_PRODUCTION_COST: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdfProfile {
    Test,
    Demo,
    Production,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    cost: u32,
    domain: Vec<u8>,
}

impl KdfParams {
    pub fn new(profile: KdfProfile, cost: u32, domain: &[u8]) -> Result<Self> {
        if cost > MAX_KDF_COST {
            return Err(Error::InvalidParams(format!("kdf cost {cost} above {MAX_KDF_COST}")));
        }
        if profile != KdfProfile::Test && cost < MIN_PRODUCTION_COST {
            return Err(Error::InvalidParams("kdf cost 0 is only allowed in the test profile".into()));
        }
        if domain.len() < argon2::MIN_SALT_LEN {
            return Err(Error::InvalidParams(format!(
                "kdf domain tag must be at least {} bytes",
                argon2::MIN_SALT_LEN
            )));
        }
        Ok(KdfParams { cost, domain: domain.to_vec() })
    }

    /// Cheapest parameters; test profile only.
    pub fn test(domain: &[u8]) -> Self {
        KdfParams::new(KdfProfile::Test, 0, domain).expect("valid test params")
    }

    /// Smallest cost whose single evaluation takes at least `target` on this
    /// machine.
    pub fn calibrate(target: Duration, domain: &[u8]) -> Result<Self> {
        for cost in MIN_PRODUCTION_COST..=MAX_KDF_COST {
            let params = KdfParams::new(KdfProfile::Demo, cost, domain)?;
            let start = Instant::now();
            kdf(b"calibration", &params);
            if start.elapsed() >= target {
                return Ok(params);
            }
        }
        KdfParams::new(KdfProfile::Demo, MAX_KDF_COST, domain)
    }

    pub fn cost(&self) -> u32 {
        self.cost
    }

    pub fn domain(&self) -> &[u8] {
        &self.domain
    }

    fn argon2(&self) -> Argon2<'static> {
        let memory_kib = 8u32 << self.cost;
        let passes = 1 + self.cost / 4;
        let params = Params::new(memory_kib, passes, 1, Some(32)).expect("argon2 params in range");
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
    }
}

/// Derives a 256-bit digest of `input`, salted with the domain tag.
pub fn kdf(input: &[u8], params: &KdfParams) -> [u8; 32] {
    let mut out = [0u8; 32];
    params
        .argon2()
        .hash_password_into(input, &params.domain, &mut out)
        .expect("argon2 accepts any input length below 2^32");
    out
}
