//! Closed-form rates, budgets and repetition counts. Natural logs throughout.

use serde::{Deserialize, Serialize};

use crate::error::{check_crossover, check_tolerance, Error, Result};

/// Ceiling that ignores floating-point noise just above an integer, so that
/// a ratio like `ln 9 / ln 9` rounds to 1 and not 2.
pub(crate) fn ceil_robust(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0)
}

/// `D_KL(Bern(p) || Bern(1-p)) = (1-2p) ln((1-p)/p)`, in nats.
pub fn kl_bern_flip(p: f64) -> Result<f64> {
    check_crossover(p)?;
    Ok((1.0 - 2.0 * p) * ((1.0 - p) / p).ln())
}

/// Optimal expected number of queries `n ln(k/delta) / D_KL(p || 1-p)`.
pub fn optimal_rate(n: u64, k: u64, delta: f64, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidThreshold { k, n });
    }
    check_tolerance(delta)?;
    Ok(n as f64 * (k as f64 / delta).ln() / kl_bern_flip(p)?)
}

/// Coefficient of `n ln n` in [`optimal_rate`] when `k = n^a` and
/// `delta = n^-b`: `(a + b) / D_KL(p || 1-p)`.
pub fn nlogn_coefficient(k_exponent: f64, delta_exponent: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k_exponent) || delta_exponent <= 0.0 {
        return Err(Error::Domain(format!(
            "need 0 <= a <= 1 and b > 0, got a={k_exponent}, b={delta_exponent}"
        )));
    }
    Ok((k_exponent + delta_exponent) / kl_bern_flip(p)?)
}

/// Net number of agreeing readings the sequential bit test needs before it
/// stops: `ceil(ln((1-delta)/delta) / ln((1-p)/p))`. Zero for `delta >= 1/2`.
pub fn checkbit_steps(delta: f64, p: f64) -> Result<u64> {
    check_crossover(p)?;
    check_tolerance(delta)?;
    if delta >= 0.5 {
        return Ok(0);
    }
    let ratio = ((1.0 - delta) / delta).ln() / ((1.0 - p) / p).ln();
    Ok(ceil_robust(ratio) as u64)
}

/// Expected-query bound of the sequential bit test:
/// `ceil(ln((1-delta)/delta) / ln((1-p)/p)) / (1-2p)`.
///
/// Returns 0 for `delta >= 1/2`; callers treat that as a degenerate test.
pub fn checkbit_budget(delta: f64, p: f64) -> Result<f64> {
    Ok(checkbit_steps(delta, p)? as f64 / (1.0 - 2.0 * p))
}

/// Per-run restart cap `ceil(m ln m)` of the restarting bit test.
pub fn restart_cap(m: f64) -> Result<u64> {
    let cap = m * m.ln();
    if !(cap >= 1.0) {
        return Err(Error::DegenerateBudget(format!(
            "m ln m = {cap} < 1 for m = {m}"
        )));
    }
    Ok(cap.ceil() as u64)
}

/// Expected-query bound `m / (1 - 1/ln m)` of the restarting bit test.
pub fn restart_mean_bound(m: f64) -> Result<f64> {
    let denom = 1.0 - 1.0 / m.ln();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "1 - 1/ln m is not positive for m = {m}"
        )));
    }
    Ok(m / denom)
}

/// The `m'` of the fixed-length algorithm:
/// `ceil(ln((k-delta)/delta) / ln((1-p)/p)) / (1-2p)`.
pub fn fixed_length_m(k: u64, delta: f64, p: f64) -> Result<f64> {
    check_crossover(p)?;
    check_tolerance(delta)?;
    if k == 0 {
        return Err(Error::InvalidThreshold { k, n: 0 });
    }
    let ratio = ((k as f64 - delta) / delta).ln() / ((1.0 - p) / p).ln();
    Ok(ceil_robust(ratio) / (1.0 - 2.0 * p))
}

/// Total query cap of the fixed-length algorithm:
/// `n m' / (1 - 1/ln m') + n sqrt(ln(k/delta))`.
pub fn fixed_length_cap(n: u64, k: u64, delta: f64, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k > n {
        return Err(Error::InvalidThreshold { k, n });
    }
    let m = fixed_length_m(k, delta, p)?;
    if m <= 1.0 {
        return Err(Error::Domain(format!("m' = {m} <= 1, 1/ln m' undefined")));
    }
    let n = n as f64;
    Ok(n * restart_mean_bound(m)? + n * (k as f64 / delta).ln().sqrt())
}

pub(crate) fn majority_readings_ln(ln_delta_c: f64, p: f64) -> Result<u64> {
    check_crossover(p)?;
    if !(ln_delta_c < 0.0) {
        return Err(Error::InvalidTolerance(ln_delta_c.exp()));
    }
    let gap = 0.5 - p;
    let r = ceil_robust((2.0f64.ln() - ln_delta_c) / (2.0 * gap * gap)) as u64;
    Ok(if r % 2 == 0 { r + 1 } else { r }.max(1))
}

/// Smallest odd `r >= ceil(ln(2/delta_c) / (2 (1/2 - p)^2))`.
///
/// By Hoeffding, the majority of `r` independent readings is wrong with
/// probability at most `delta_c`.
pub fn majority_readings(delta_c: f64, p: f64) -> Result<u64> {
    check_tolerance(delta_c)?;
    majority_readings_ln(delta_c.ln(), p)
}

/// Every rate and budget for one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub kl: f64,
    pub optimal_expected_queries: f64,
    /// Sequential bit-test budget at tolerance `delta / k`.
    pub checkbit_budget_m: f64,
    /// `None` when the fixed-length cap is undefined (`m' <= e`).
    pub fixed_cap: Option<f64>,
    /// `optimal_expected_queries / (n ln n)`.
    pub coefficient_of_nlogn: f64,
}

impl RateBreakdown {
    pub fn new(n: u64, k: u64, delta: f64, p: f64) -> Result<Self> {
        let optimal = optimal_rate(n, k, delta, p)?;
        let nf = n as f64;
        Ok(Self {
            kl: kl_bern_flip(p)?,
            optimal_expected_queries: optimal,
            checkbit_budget_m: checkbit_budget(delta / k as f64, p)?,
            fixed_cap: fixed_length_cap(n, k, delta, p).ok(),
            coefficient_of_nlogn: optimal / (nf * nf.ln()),
        })
    }
}
