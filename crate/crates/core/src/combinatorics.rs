//! Exact and log-domain factorial/binomial helpers.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest argument accepted by [`ln_factorial`].
pub const LN_FACTORIAL_LIMIT: u32 = 512;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(LN_FACTORIAL_LIMIT as usize + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for k in 1..=LN_FACTORIAL_LIMIT {
            acc += (k as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`.
///
/// # Panics
/// If `n > LN_FACTORIAL_LIMIT`; callers bound their photon numbers through
/// the cutoff check in the amplitude module.
#[inline]
pub fn ln_factorial(n: u32) -> f64 {
    ln_factorial_table()[n as usize]
}

/// `ln C(n, k)`; `-inf` when `k > n`.
#[inline]
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Exact `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul(u128::from(n - i)).ok_or(Error::Overflow("binomial"))? / u128::from(i + 1);
    }
    Ok(acc)
}

/// Exact `C(n, k)` for a possibly negative lower index (zero outside
/// `0..=n`).
pub fn binomial_signed(n: i64, k: i64) -> Result<u128> {
    if n < 0 || k < 0 || k > n {
        return Ok(0);
    }
    binomial(n as u32, k as u32)
}
