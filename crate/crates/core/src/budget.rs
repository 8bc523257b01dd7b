//! Memory budget shared by every dense allocation that scales with `d^k`.

use crate::error::{MimError, Result};

/// Default cap: 2 GiB.
pub const DEFAULT_CAP_BYTES: u64 = 1 << 31;

/// Environment variable overriding the cap.
pub const CAP_ENV: &str = "MIM_MEM_CAP_BYTES";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub cap_bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget {
            cap_bytes: DEFAULT_CAP_BYTES,
        }
    }
}

impl MemoryBudget {
    pub fn new(cap_bytes: u64) -> Self {
        MemoryBudget { cap_bytes }
    }

    /// Reads `MIM_MEM_CAP_BYTES`, falling back to the default when unset or unparsable.
    pub fn from_env() -> Self {
        std::env::var(CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(MemoryBudget::new)
            .unwrap_or_default()
    }

    /// Fails when `count` f64 values would exceed the cap.
    pub fn check_f64s(&self, what: &str, count: u128) -> Result<()> {
        let needed = count.saturating_mul(8);
        if needed > self.cap_bytes as u128 {
            return Err(MimError::BudgetExceeded {
                what: what.to_string(),
                needed,
                cap: self.cap_bytes,
            });
        }
        Ok(())
    }
}

/// `base^exp` without overflow.
pub fn pow_u128(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}
