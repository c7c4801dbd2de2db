//! Expected off-target error when a width-`delta` region of an `n`-dimensional
//! target changes by one unit.
//!
//! With `k` coordinates of a random point falling inside the region's span
//! and each coordinate contributing equally, the error is `(n - k) / n` with
//! probability `C(n, k) delta^(n-k) (1 - delta)^k`. The mean of that is
//! exactly `delta`; discounting the `delta^n` mass that lands inside the
//! region, where the new target is learned, leaves `delta - delta^n`.

use crate::error::{AtlasError, Result};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(AtlasError::invalid(format!("delta {delta} not in (0, 1)")))
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `C(n, k) delta^(n-k) (1 - delta)^k`.
pub fn permutation_prob(n: u32, k: u32, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(AtlasError::invalid("n must be at least 1"));
    }
    if k > n {
        return Err(AtlasError::invalid(format!("k = {k} exceeds n = {n}")));
    }
    check_delta(delta)?;
    Ok(binomial(n, k) * delta.powi((n - k) as i32) * (1.0 - delta).powi(k as i32))
}

/// `sum_k ((n - k) / n) p(eps_k)`, which equals `delta`.
pub fn expected_change(n: u32, delta: f64) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..=n {
        acc += (n - k) as f64 / n as f64 * permutation_prob(n, k, delta)?;
    }
    Ok(acc)
}

/// `delta - delta^n`.
pub fn expected_off_target(n: u32, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(AtlasError::invalid("n must be at least 1"));
    }
    check_delta(delta)?;
    Ok(delta - delta.powi(n as i32))
}
