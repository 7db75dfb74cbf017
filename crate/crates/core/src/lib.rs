//! Computing a threshold function `TH_k(x) = [|x| >= k]` from noisy bit
//! readings, where every query of `x_i` is flipped independently with
//! probability `p < 1/2`.
//!
//! The crate provides the noisy oracle, the sequential bit test and its
//! restarting variant, a noisy max-heap, the two-phase threshold algorithm,
//! closed-form query bounds, a Monte Carlo lab for the lower-bound
//! constructions, and an experiment harness tying them together.

pub mod bounds;
pub mod checkbit;
pub mod error;
pub mod harness;
pub mod heap;
pub mod lowerbound;
pub mod oracle;
pub mod rng;
pub mod threshold;

pub use bounds::{
    checkbit_budget, checkbit_steps, fixed_length_cap, kl_bern_flip, majority_readings,
    optimal_rate, RateBreakdown,
};
pub use checkbit::{check_bit, safe_check_bit, Belief, CheckBitOutcome, RestartPlan};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentReport, ExperimentSpec};
pub use heap::{construct_max_heap, max_heap_threshold, noisy_extract_max, HeapLevels};
pub use oracle::{NoisyBitOracle, ProblemConfig, QueryLedger, Variant};
pub use threshold::{compute_threshold, noisy_threshold, noisy_threshold_fixed, Branch, ThresholdRun};
