//! Sequential Bayesian estimation of a single noisy bit, and the restarting
//! variant whose query count has bounded variance.
//!
//! The posterior `alpha = P(bit = 1 | readings)` under a uniform prior only
//! depends on the net count of ones minus zeros observed, so the belief is
//! kept as that integer. Its log-odds is `net * ln((1-p)/p)`, and the loop
//! `alpha in (delta, 1-delta)` is the same as `|net| < steps` with
//! `steps = ceil(ln((1-delta)/delta) / ln((1-p)/p))`: a symmetric SPRT.

use serde::{Deserialize, Serialize};

use crate::bounds::{checkbit_budget, checkbit_steps, restart_cap};
use crate::error::{check_tolerance, Error, Result};
use crate::oracle::NoisyBitOracle;

/// Posterior belief that a bit is one, stored losslessly as a net count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    net: i64,
    step: f64,
}

impl Belief {
    /// Uniform prior, `alpha = 1/2`.
    pub fn new(p: f64) -> Self {
        Self {
            net: 0,
            step: ((1.0 - p) / p).ln(),
        }
    }

    /// Bayes update for one reading.
    pub fn observe(&mut self, reading: bool) {
        self.net += if reading { 1 } else { -1 };
    }

    /// Ones observed minus zeros observed.
    pub fn net(&self) -> i64 {
        self.net
    }

    /// `ln(alpha / (1 - alpha))`.
    pub fn log_odds(&self) -> f64 {
        self.net as f64 * self.step
    }

    /// Posterior probability that the bit is one.
    pub fn alpha(&self) -> f64 {
        let llr = self.log_odds();
        if llr >= 0.0 {
            1.0 / (1.0 + (-llr).exp())
        } else {
            let e = llr.exp();
            e / (1.0 + e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckBitOutcome {
    pub estimate: bool,
    pub queries_used: u64,
    /// Aborted runs before the one that returned (restarting variant only).
    pub restarts: u64,
    /// Most queries spent by any single run.
    pub longest_run: u64,
    /// Set when `delta >= 1/2` and a single reading was returned.
    pub degenerate: bool,
}

/// Walk until `|net| >= steps` or `limit` queries have been made in this
/// run. `Ok(None)` means the run was truncated by `limit`.
fn sequential_run(
    oracle: &mut NoisyBitOracle,
    i: usize,
    steps: i64,
    limit: Option<u64>,
    used: &mut u64,
) -> Result<Option<bool>> {
    let mut net = 0i64;
    while net.abs() < steps {
        if limit.is_some_and(|l| *used >= l) {
            return Ok(None);
        }
        net += if oracle.query(i)? { 1 } else { -1 };
        *used += 1;
    }
    Ok(Some(net > 0))
}

/// Query bit `i` until the posterior leaves `(delta, 1-delta)`.
///
/// Returns one with error probability at most `delta`, using at most
/// [`checkbit_budget`]`(delta, p)` queries in expectation. For
/// `delta >= 1/2` the loop would never run; a single reading is returned
/// instead and the outcome is flagged degenerate.
pub fn check_bit(oracle: &mut NoisyBitOracle, i: usize, delta: f64) -> Result<CheckBitOutcome> {
    check_tolerance(delta)?;
    let steps = checkbit_steps(delta, oracle.p())?;
    if steps == 0 {
        let estimate = oracle.query(i)?;
        return Ok(CheckBitOutcome {
            estimate,
            queries_used: 1,
            restarts: 0,
            longest_run: 1,
            degenerate: true,
        });
    }
    let mut used = 0;
    let estimate = sequential_run(oracle, i, steps as i64, None, &mut used)?
        .expect("untruncated run always finishes");
    Ok(CheckBitOutcome {
        estimate,
        queries_used: used,
        restarts: 0,
        longest_run: used,
        degenerate: false,
    })
}

/// Per-run limits of the restarting bit test for `(delta, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartPlan {
    /// `m`, the sequential test's expected-query budget.
    pub budget: f64,
    /// `ceil(m ln m)`: a run about to make this query is restarted.
    pub cap: u64,
    pub steps: u64,
}

impl RestartPlan {
    pub fn new(delta: f64, p: f64) -> Result<Self> {
        check_tolerance(delta)?;
        if delta >= 0.5 {
            return Err(Error::DegenerateBudget(format!(
                "delta = {delta} >= 1/2 leaves nothing to restart"
            )));
        }
        let budget = checkbit_budget(delta, p)?;
        let steps = checkbit_steps(delta, p)?;
        let cap = restart_cap(budget)?;
        // A run may use at most cap - 1 queries; it must be able to finish.
        if cap - 1 < steps {
            return Err(Error::DegenerateBudget(format!(
                "restart cap {cap} leaves fewer than {steps} queries per run"
            )));
        }
        Ok(Self { budget, cap, steps })
    }

    /// Queries a single run may make before it is restarted.
    pub fn per_run_limit(&self) -> u64 {
        self.cap - 1
    }
}

/// The sequential bit test, restarted from scratch whenever a run is about to
/// make its `ceil(m ln m)`-th query.
pub fn safe_check_bit(
    oracle: &mut NoisyBitOracle,
    i: usize,
    delta: f64,
) -> Result<CheckBitOutcome> {
    let plan = RestartPlan::new(delta, oracle.p())?;
    let mut total = 0;
    let mut restarts = 0;
    let mut longest = 0;
    loop {
        let mut used = 0;
        let result = sequential_run(
            oracle,
            i,
            plan.steps as i64,
            Some(plan.per_run_limit()),
            &mut used,
        )?;
        total += used;
        longest = longest.max(used);
        if let Some(estimate) = result {
            return Ok(CheckBitOutcome {
                estimate,
                queries_used: total,
                restarts,
                longest_run: longest,
                degenerate: false,
            });
        }
        restarts += 1;
    }
}
