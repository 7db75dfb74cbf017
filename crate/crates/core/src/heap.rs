//! Tournament max-heap over noisy bits: majority-vote comparisons, heap
//! construction with level-dependent tolerances, noisy extract-max, and the
//! composed threshold routine.

use serde::{Deserialize, Serialize};

use crate::bounds::majority_readings_ln;
use crate::checkbit::check_bit;
use crate::error::{check_tolerance, Error, Result};
use crate::oracle::NoisyBitOracle;

/// Result of one noisy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    /// Index of the estimated maximum.
    pub winner: usize,
    /// Majority estimate of the winner's value.
    pub winner_estimate: bool,
    pub queries: u64,
}

fn majority_estimate(oracle: &mut NoisyBitOracle, i: usize, readings: u64) -> Result<bool> {
    let mut ones = 0;
    for _ in 0..readings {
        ones += oracle.query(i)? as u64;
    }
    Ok(2 * ones > readings)
}

fn compare_ln(
    oracle: &mut NoisyBitOracle,
    i: usize,
    j: usize,
    ln_delta_c: f64,
) -> Result<Comparison> {
    // Each majority is allowed half the comparison's tolerance.
    let r = majority_readings_ln(ln_delta_c - 2f64.ln(), oracle.p())?;
    let before = oracle.total_queries();
    let xi = majority_estimate(oracle, i, r)?;
    let xj = majority_estimate(oracle, j, r)?;
    // Prefer a one-estimate, then the lower index.
    let winner = match (xi, xj) {
        (true, false) => i,
        (false, true) => j,
        _ => i.min(j),
    };
    Ok(Comparison {
        winner,
        winner_estimate: xi || xj,
        queries: oracle.total_queries() - before,
    })
}

/// Estimate `max(x_i, x_j)` by majority-voting
/// [`majority_readings`](crate::bounds::majority_readings)`(delta_c / 2, p)`
/// readings of each bit.
///
/// Wrong with probability at most `delta_c` when the two values differ.
pub fn noisy_compare_readings(
    oracle: &mut NoisyBitOracle,
    i: usize,
    j: usize,
    delta_c: f64,
) -> Result<Comparison> {
    check_tolerance(delta_c)?;
    compare_ln(oracle, i, j, delta_c.ln())
}

/// `ln` of the tolerance `delta^(2(2i-1))` used at heap level `i >= 1`.
pub fn level_log_tolerance(delta: f64, level: usize) -> f64 {
    2.0 * (2.0 * level as f64 - 1.0) * delta.ln()
}

/// Union-bound mass `sum_i (comparisons at level i) * delta^(2(2i-1))` for a
/// heap over `size` leaves.
pub fn level_error_mass(size: usize, delta: f64) -> f64 {
    let mut r = size;
    let mut level = 0;
    let mut mass = 0.0;
    while r > 1 {
        level += 1;
        mass += (r / 2) as f64 * level_log_tolerance(delta, level).exp();
        r = r.div_ceil(2);
    }
    mass
}

/// A heap entry: which input bit it holds and where that bit sits on the
/// bottom level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub index: usize,
    pub leaf: usize,
    /// Majority estimate from the last comparison this entry won; `None` if it
    /// was carried up without a comparison.
    pub estimate: Option<bool>,
}

/// Tournament levels of a max-heap.
///
/// `levels[0]` holds the inputs; level `i` has `ceil(len(i-1) / 2)` entries,
/// entry `j` being the winner of children `2j` and `2j + 1` (or the carried
/// odd child). Extracted elements leave empty slots behind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeapLevels {
    levels: Vec<Vec<Option<Slot>>>,
}

impl HeapLevels {
    pub fn levels(&self) -> &[Vec<Option<Slot>>] {
        &self.levels
    }

    pub fn root(&self) -> Option<Slot> {
        self.levels.last().and_then(|l| l[0])
    }

    /// Number of elements not yet extracted.
    pub fn len(&self) -> usize {
        self.levels[0].iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the level-size and parent/child invariants.
    pub fn check_shape(&self) -> std::result::Result<(), String> {
        let first = self
            .levels
            .first()
            .ok_or_else(|| "heap has no levels".to_string())?;
        for (pos, slot) in first.iter().enumerate() {
            if let Some(s) = slot {
                if s.leaf != pos {
                    return Err(format!("leaf {pos} records position {}", s.leaf));
                }
            }
        }
        for (depth, pair) in self.levels.windows(2).enumerate() {
            let (below, above) = (&pair[0], &pair[1]);
            if above.len() != below.len().div_ceil(2) {
                return Err(format!(
                    "level {} has {} entries, expected {}",
                    depth + 1,
                    above.len(),
                    below.len().div_ceil(2)
                ));
            }
            for (j, entry) in above.iter().enumerate() {
                let children: Vec<Slot> = below[2 * j..(2 * j + 2).min(below.len())]
                    .iter()
                    .flatten()
                    .copied()
                    .collect();
                match entry {
                    None if !children.is_empty() => {
                        return Err(format!("level {} entry {j} empty over live children", depth + 1))
                    }
                    Some(s) if !children.iter().any(|c| c.index == s.index) => {
                        return Err(format!(
                            "level {} entry {j} holds {} which is not a child",
                            depth + 1,
                            s.index
                        ))
                    }
                    _ => {}
                }
            }
        }
        if self.levels.last().map(Vec::len) != Some(1) {
            return Err("top level must have exactly one entry".to_string());
        }
        Ok(())
    }
}

/// Resolve parent entry from its children, querying only when both are live.
fn play(
    oracle: &mut NoisyBitOracle,
    left: Option<Slot>,
    right: Option<Slot>,
    ln_tol: f64,
    comparisons: &mut u32,
) -> Result<Option<Slot>> {
    Ok(match (left, right) {
        (Some(a), Some(b)) => {
            let c = compare_ln(oracle, a.index, b.index, ln_tol)?;
            *comparisons += 1;
            let won = if c.winner == a.index { a } else { b };
            Some(Slot {
                estimate: Some(c.winner_estimate),
                ..won
            })
        }
        (one, None) | (None, one) => one,
    })
}

/// Build the tournament heap over `indices`, comparing at level `i` with
/// tolerance `delta^(2(2i-1))`.
pub fn construct_max_heap(
    oracle: &mut NoisyBitOracle,
    indices: &[usize],
    delta: f64,
) -> Result<HeapLevels> {
    if indices.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_tolerance(delta)?;
    let mut levels = vec![indices
        .iter()
        .enumerate()
        .map(|(leaf, &index)| {
            Some(Slot {
                index,
                leaf,
                estimate: None,
            })
        })
        .collect::<Vec<_>>()];
    let mut comparisons = 0;
    while levels.last().unwrap().len() > 1 {
        let level = levels.len();
        let ln_tol = level_log_tolerance(delta, level);
        let below = levels.last().unwrap();
        let mut above = Vec::with_capacity(below.len().div_ceil(2));
        for pair in below.chunks(2) {
            let right = pair.get(1).copied().flatten();
            above.push(play(oracle, pair[0], right, ln_tol, &mut comparisons)?);
        }
        levels.push(above);
    }
    Ok(HeapLevels { levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extraction {
    pub index: usize,
    /// Estimated value of the extracted bit.
    pub estimate: bool,
    pub comparisons: u32,
}

/// Remove the root's element and replay the comparisons on its leaf-to-root
/// path with tolerance `delta_e` each.
///
/// At most `ceil(log2 m)` comparisons for a heap over `m` leaves. If the
/// extracted element never won a comparison, its value is read by majority
/// at tolerance `delta_e`.
pub fn noisy_extract_max(
    heap: &mut HeapLevels,
    oracle: &mut NoisyBitOracle,
    delta_e: f64,
) -> Result<Extraction> {
    check_tolerance(delta_e)?;
    let root = heap.root().ok_or(Error::EmptyInput)?;
    let ln_tol = delta_e.ln();
    let estimate = match root.estimate {
        Some(e) => e,
        None => {
            let r = majority_readings_ln(ln_tol, oracle.p())?;
            majority_estimate(oracle, root.index, r)?
        }
    };
    heap.levels[0][root.leaf] = None;
    let mut comparisons = 0;
    let mut pos = root.leaf;
    for depth in 1..heap.levels.len() {
        pos /= 2;
        let below = &heap.levels[depth - 1];
        let left = below[2 * pos];
        let right = below.get(2 * pos + 1).copied().flatten();
        heap.levels[depth][pos] = play(oracle, left, right, ln_tol, &mut comparisons)?;
    }
    Ok(Extraction {
        index: root.index,
        estimate,
        comparisons,
    })
}

/// Which route [`max_heap_threshold`] took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeapRoute {
    /// `k < sqrt(m)`: heap construction and `k` extractions.
    Tournament,
    /// `k >= sqrt(m)`: every bit estimated at tolerance `delta / (2m)` and the
    /// ones counted.
    PerBitCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapThresholdOutcome {
    pub output: bool,
    pub route: HeapRoute,
    pub queries: u64,
}

/// Estimate `TH_k` of the bits at `indices` with error at most `delta`.
///
/// For `k >= sqrt(m)` (with `m = indices.len()`) the bits are estimated one by
/// one and counted, since the k-th largest of a bit vector is fixed by its
/// number of ones. Otherwise the heap is built with tolerance `delta / (2k)`
/// and the maximum extracted `k` times with tolerance `delta / (2k ln m)`;
/// the answer is the estimated value of the k-th extraction.
pub fn max_heap_threshold(
    oracle: &mut NoisyBitOracle,
    indices: &[usize],
    k: usize,
    delta: f64,
) -> Result<HeapThresholdOutcome> {
    let m = indices.len();
    if k == 0 || k > m {
        return Err(Error::InvalidThreshold {
            k: k as u64,
            n: m as u64,
        });
    }
    check_tolerance(delta)?;
    let before = oracle.total_queries();
    let kf = k as f64;
    let mf = m as f64;
    if kf >= mf.sqrt() {
        let tol = delta / (2.0 * mf);
        let mut ones = 0;
        for &i in indices {
            ones += check_bit(oracle, i, tol)?.estimate as usize;
        }
        return Ok(HeapThresholdOutcome {
            output: ones >= k,
            route: HeapRoute::PerBitCount,
            queries: oracle.total_queries() - before,
        });
    }
    // k < sqrt(m) forces m >= 2, so ln m > 0.
    let mut heap = construct_max_heap(oracle, indices, delta / (2.0 * kf))?;
    let delta_e = delta / (2.0 * kf * mf.ln());
    let mut last = None;
    for _ in 0..k {
        last = Some(noisy_extract_max(&mut heap, oracle, delta_e)?);
    }
    Ok(HeapThresholdOutcome {
        output: last.expect("k >= 1").estimate,
        route: HeapRoute::Tournament,
        queries: oracle.total_queries() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ProblemConfig;

    fn oracle(hidden: Vec<bool>, p: f64, seed: u64) -> NoisyBitOracle {
        let n = hidden.len() as u64;
        let config = ProblemConfig::new(n, 1, p, 0.1).unwrap().with_seed(seed);
        NoisyBitOracle::new(&config, hidden).unwrap()
    }

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn single_element_heap_is_free() {
        let mut o = oracle(bits("1"), 0.1, 0);
        let heap = construct_max_heap(&mut o, &[0], 0.01).unwrap();
        assert_eq!(heap.levels().len(), 1);
        assert_eq!(o.total_queries(), 0);
        heap.check_shape().unwrap();
    }

    #[test]
    fn level_tolerances() {
        let d: f64 = 0.1;
        assert!((level_log_tolerance(d, 1) - (d * d).ln()).abs() < 1e-12);
        assert!((level_log_tolerance(d, 2) - d.powi(6).ln()).abs() < 1e-12);
    }

    #[test]
    fn four_leaves_use_level_budgets() {
        // Readings per bit follow the level tolerance delta^2 then delta^6.
        let p = 0.2;
        let d: f64 = 0.1;
        let mut o = oracle(bits("0000"), p, 3);
        construct_max_heap(&mut o, &[0, 1, 2, 3], d).unwrap();
        let r1 = majority_readings_ln((d * d / 2.0).ln(), p).unwrap();
        let r2 = majority_readings_ln((d.powi(6) / 2.0).ln(), p).unwrap();
        assert_eq!(o.total_queries(), 2 * (2 * r1) + 2 * r2);
    }

    #[test]
    fn odd_element_carried_unqueried() {
        let mut o = oracle(bits("00000"), 0.2, 3);
        let heap = construct_max_heap(&mut o, &[0, 1, 2, 3, 4], 0.1).unwrap();
        assert_eq!(o.ledger().per_bit()[4] % 2, 1); // compared once at a deep level
        assert_eq!(
            heap.levels().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![5, 3, 2, 1]
        );
        assert_eq!(heap.levels()[1][2].unwrap().index, 4);
        assert_eq!(heap.levels()[1][2].unwrap().estimate, None);
        heap.check_shape().unwrap();
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut o = oracle(bits("1"), 0.1, 0);
        assert_eq!(construct_max_heap(&mut o, &[], 0.1), Err(Error::EmptyInput));
        let mut heap = construct_max_heap(&mut o, &[0], 0.1).unwrap();
        noisy_extract_max(&mut heap, &mut o, 0.1).unwrap();
        assert!(heap.is_empty());
        assert_eq!(noisy_extract_max(&mut heap, &mut o, 0.1), Err(Error::EmptyInput));
    }

    #[test]
    fn size_one_extraction_has_no_comparisons() {
        let mut o = oracle(bits("1"), 0.05, 0);
        let mut heap = construct_max_heap(&mut o, &[0], 0.1).unwrap();
        let e = noisy_extract_max(&mut heap, &mut o, 0.01).unwrap();
        assert_eq!(e.index, 0);
        assert_eq!(e.comparisons, 0);
    }

    #[test]
    fn extraction_comparisons_bounded_by_depth() {
        for m in [2usize, 3, 5, 8, 13, 32, 33] {
            let hidden: Vec<bool> = (0..m).map(|i| i % 3 == 0).collect();
            let mut o = oracle(hidden, 0.1, m as u64);
            let idx: Vec<usize> = (0..m).collect();
            let mut heap = construct_max_heap(&mut o, &idx, 0.1).unwrap();
            let bound = (m as f64).log2().ceil() as u32;
            while !heap.is_empty() {
                let e = noisy_extract_max(&mut heap, &mut o, 0.05).unwrap();
                assert!(e.comparisons <= bound);
                heap.check_shape().unwrap();
            }
        }
    }

    #[test]
    fn equal_values_return_one_of_the_pair() {
        let mut o = oracle(bits("11"), 0.2, 8);
        for _ in 0..200 {
            let c = noisy_compare_readings(&mut o, 0, 1, 0.1).unwrap();
            assert!(c.winner == 0 || c.winner == 1);
        }
    }

    #[test]
    fn threshold_routes() {
        let mut o = oracle(bits("0001000000000000"), 0.05, 1);
        let idx: Vec<usize> = (0..16).collect();
        let out = max_heap_threshold(&mut o, &idx, 1, 0.05).unwrap();
        assert_eq!(out.route, HeapRoute::Tournament);
        let out = max_heap_threshold(&mut o, &idx, 4, 0.05).unwrap();
        assert_eq!(out.route, HeapRoute::PerBitCount);
        assert!(max_heap_threshold(&mut o, &idx, 17, 0.05).is_err());
        assert!(max_heap_threshold(&mut o, &idx, 0, 0.05).is_err());
    }

    #[test]
    fn error_mass_small_heaps() {
        for &d in &[0.1f64, 0.01, 0.001] {
            let max = (1.0 / d).round() as usize - 1;
            for size in 1..=max {
                assert!(level_error_mass(size, d) <= d / 2.0, "size {size} delta {d}");
            }
        }
        // The first level alone carries floor(m/2) * delta^2, so the union
        // bound stops holding once m passes about 1/delta.
        assert!(level_error_mass(1 << 16, 0.1) > 0.05);
    }
}
