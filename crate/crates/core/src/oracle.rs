//! Noisy bit readings through a binary symmetric channel.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_crossover, check_tolerance, Error, Result};
use crate::rng::{substream, TrialRng};

/// Which flavour of the threshold algorithm a configuration asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Query count is a random variable; bounds hold in expectation.
    VariableLength,
    /// Hard cap on the total number of queries; exceeding it is a failure.
    FixedLength,
}

/// A validated problem instance: `n` bits, threshold `k`, crossover `p`,
/// target error `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    n: u64,
    k: u64,
    p: f64,
    delta: f64,
    seed: u64,
    variant: Variant,
}

impl ProblemConfig {
    pub fn new(n: u64, k: u64, p: f64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if k == 0 || k > n {
            return Err(Error::InvalidThreshold { k, n });
        }
        check_crossover(p)?;
        check_tolerance(delta)?;
        Ok(Self {
            n,
            k,
            p,
            delta,
            seed: 0,
            variant: Variant::VariableLength,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Same instance with a different threshold.
    pub fn with_k(self, k: u64) -> Result<Self> {
        Ok(Self::new(self.n, k, self.p, self.delta)?
            .with_seed(self.seed)
            .with_variant(self.variant))
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
}

/// Per-bit and total query counters.
///
/// `total == per_bit.iter().sum()` holds after every operation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    per_bit: Vec<u64>,
    total: u64,
}

impl QueryLedger {
    pub fn new(n: usize) -> Self {
        Self {
            per_bit: vec![0; n],
            total: 0,
        }
    }

    fn record(&mut self, i: usize) {
        self.per_bit[i] += 1;
        self.total += 1;
    }

    pub fn per_bit(&self) -> &[u64] {
        &self.per_bit
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Merge another ledger of the same width into this one. Associative and
    /// commutative.
    pub fn merge(&mut self, other: &QueryLedger) -> Result<()> {
        if self.per_bit.len() != other.per_bit.len() {
            return Err(Error::LengthMismatch {
                expected: self.per_bit.len(),
                got: other.per_bit.len(),
            });
        }
        for (a, b) in self.per_bit.iter_mut().zip(&other.per_bit) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}

/// Holds a hidden bit vector and answers queries through a BSC(p).
///
/// Each response is `hidden[i] XOR B` with `B ~ Bern(p)` drawn fresh from the
/// oracle's own stream. An optional budget makes further queries fail with
/// [`Error::BudgetExhausted`]; an optional complement flag inverts every
/// response, which is how the `k > n/2` reduction views the input.
#[derive(Debug, Clone)]
pub struct NoisyBitOracle {
    hidden: Vec<bool>,
    p: f64,
    flip_below: u64,
    rng: TrialRng,
    ledger: QueryLedger,
    budget: Option<u64>,
    complemented: bool,
}

impl NoisyBitOracle {
    /// Build an oracle seeded from `config.seed()`.
    pub fn new(config: &ProblemConfig, hidden: Vec<bool>) -> Result<Self> {
        if hidden.len() as u64 != config.n() {
            return Err(Error::LengthMismatch {
                expected: config.n() as usize,
                got: hidden.len(),
            });
        }
        Self::with_rng(hidden, config.p(), substream(config.seed(), &[]))
    }

    /// Build an oracle drawing its channel noise from `rng`.
    pub fn with_rng(hidden: Vec<bool>, p: f64, rng: TrialRng) -> Result<Self> {
        check_crossover(p)?;
        if hidden.is_empty() {
            return Err(Error::EmptyInput);
        }
        // P(u64 < t) = t / 2^64 for a uniform u64.
        let flip_below = (p * 18_446_744_073_709_551_616.0) as u64;
        let n = hidden.len();
        Ok(Self {
            hidden,
            p,
            flip_below,
            rng,
            ledger: QueryLedger::new(n),
            budget: None,
            complemented: false,
        })
    }

    /// Read bit `i` once through the channel.
    pub fn query(&mut self, i: usize) -> Result<bool> {
        let n = self.hidden.len();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if let Some(limit) = self.budget {
            if self.ledger.total >= limit {
                return Err(Error::BudgetExhausted(limit));
            }
        }
        let flip = self.rng.next_u64() < self.flip_below;
        self.ledger.record(i);
        Ok(self.hidden[i] ^ flip ^ self.complemented)
    }

    pub fn n(&self) -> usize {
        self.hidden.len()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn total_queries(&self) -> u64 {
        self.ledger.total
    }

    /// Ground truth, for scoring. Algorithms never look at this.
    pub fn hidden(&self) -> &[bool] {
        &self.hidden
    }

    /// Number of ones in the hidden vector.
    pub fn weight(&self) -> usize {
        self.hidden.iter().filter(|&&b| b).count()
    }

    /// Cap the ledger total; `None` removes the cap.
    pub fn set_budget(&mut self, limit: Option<u64>) {
        self.budget = limit;
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn set_complemented(&mut self, complemented: bool) {
        self.complemented = complemented;
    }

    pub fn is_complemented(&self) -> bool {
        self.complemented
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: u64, p: f64, seed: u64) -> ProblemConfig {
        ProblemConfig::new(n, 1, p, 0.1).unwrap().with_seed(seed)
    }

    #[test]
    fn construction_starts_with_empty_ledger() {
        let oracle = NoisyBitOracle::new(&config(3, 0.1, 7), vec![true, false, true]).unwrap();
        assert_eq!(oracle.total_queries(), 0);
        assert_eq!(oracle.ledger().per_bit(), &[0, 0, 0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert_eq!(
            ProblemConfig::new(3, 1, 0.0, 0.1),
            Err(Error::InvalidCrossover(0.0))
        );
        assert_eq!(
            ProblemConfig::new(3, 1, 0.5, 0.1),
            Err(Error::InvalidCrossover(0.5))
        );
        assert_eq!(
            ProblemConfig::new(3, 1, 0.2, 1.0),
            Err(Error::InvalidTolerance(1.0))
        );
        assert_eq!(
            ProblemConfig::new(3, 4, 0.2, 0.1),
            Err(Error::InvalidThreshold { k: 4, n: 3 })
        );
        assert_eq!(
            ProblemConfig::new(3, 0, 0.2, 0.1),
            Err(Error::InvalidThreshold { k: 0, n: 3 })
        );
        assert_eq!(ProblemConfig::new(0, 1, 0.2, 0.1), Err(Error::EmptyInput));
        assert!(matches!(
            NoisyBitOracle::new(&config(3, 0.1, 0), vec![true]),
            Err(Error::LengthMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn query_out_of_range() {
        let mut oracle = NoisyBitOracle::new(&config(2, 0.1, 0), vec![true, false]).unwrap();
        assert_eq!(oracle.query(2), Err(Error::IndexOutOfRange { index: 2, n: 2 }));
        assert_eq!(oracle.total_queries(), 0);
    }

    #[test]
    fn hundred_queries_on_bit_zero() {
        let mut oracle = NoisyBitOracle::new(&config(3, 0.2, 1), vec![false; 3]).unwrap();
        for _ in 0..100 {
            oracle.query(0).unwrap();
        }
        assert_eq!(oracle.ledger().per_bit()[0], 100);
        assert_eq!(oracle.total_queries(), 100);
    }

    #[test]
    fn equal_seeds_give_equal_streams() {
        let mut a = NoisyBitOracle::new(&config(4, 0.3, 99), vec![true, false, true, false]).unwrap();
        let mut b = NoisyBitOracle::new(&config(4, 0.3, 99), vec![true, false, true, false]).unwrap();
        for t in 0..1000 {
            assert_eq!(a.query(t % 4).unwrap(), b.query(t % 4).unwrap());
        }
    }

    #[test]
    fn flipping_hidden_bit_flips_response() {
        let mut a = NoisyBitOracle::new(&config(1, 0.3, 5), vec![true]).unwrap();
        let mut b = NoisyBitOracle::new(&config(1, 0.3, 5), vec![false]).unwrap();
        for _ in 0..500 {
            assert_ne!(a.query(0).unwrap(), b.query(0).unwrap());
        }
    }

    #[test]
    fn crossover_near_half_matches_bernoulli_mean() {
        let mut oracle = NoisyBitOracle::new(&config(1, 0.4999, 11), vec![false]).unwrap();
        let trials = 1_000_000;
        let ones = (0..trials).filter(|_| oracle.query(0).unwrap()).count();
        let mean = ones as f64 / trials as f64;
        assert!((mean - 0.4999).abs() <= 0.002, "mean {mean}");
    }

    #[test]
    fn crossover_point_three_mean() {
        let mut oracle = NoisyBitOracle::new(&config(1, 0.3, 12), vec![false]).unwrap();
        let trials = 100_000;
        let ones = (0..trials).filter(|_| oracle.query(0).unwrap()).count();
        let mean = ones as f64 / trials as f64;
        assert!((mean - 0.3).abs() <= 0.0044, "mean {mean}");
    }

    #[test]
    fn budget_stops_queries() {
        let mut oracle = NoisyBitOracle::new(&config(2, 0.1, 0), vec![true, true]).unwrap();
        oracle.set_budget(Some(3));
        for _ in 0..3 {
            oracle.query(1).unwrap();
        }
        assert_eq!(oracle.query(0), Err(Error::BudgetExhausted(3)));
        assert_eq!(oracle.total_queries(), 3);
    }

    #[test]
    fn complement_inverts_responses() {
        let mut a = NoisyBitOracle::new(&config(1, 0.2, 3), vec![true]).unwrap();
        let mut b = NoisyBitOracle::new(&config(1, 0.2, 3), vec![true]).unwrap();
        b.set_complemented(true);
        for _ in 0..200 {
            assert_ne!(a.query(0).unwrap(), b.query(0).unwrap());
        }
    }

    #[test]
    fn merge_rejects_width_mismatch() {
        let mut a = QueryLedger::new(2);
        assert!(a.merge(&QueryLedger::new(3)).is_err());
    }
}
