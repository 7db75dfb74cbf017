//! Batch experiments over a grid of `(n, k, p, delta)` cells, aggregation
//! into per-cell reports, and JSON/CSV/NDJSON persistence.
//!
//! Every trial draws from its own substream `(seed, cell, trial)`, so the
//! report does not depend on scheduling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::optimal_rate;
use crate::checkbit::check_bit;
use crate::error::{Error, Result};
use crate::heap::{max_heap_threshold, HeapRoute};
use crate::lowerbound::{
    check_concentration_events, genie_reveal, lecam_total_budget, lecam_two_point,
    run_nonadaptive_phase, LowerBoundParams, Regime,
};
use crate::oracle::{NoisyBitOracle, ProblemConfig, Variant};
use crate::rng::{substream, TrialRng};
use crate::threshold::{compute_threshold, Branch};

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed CSV header, one row per cell after it.
pub const CSV_HEADER: [&str; 15] = [
    "n",
    "k",
    "p",
    "delta",
    "error_rate",
    "error_ci",
    "q_mean",
    "q_var",
    "q_max",
    "rate_theory",
    "ratio",
    "branch_zero",
    "branch_one",
    "branch_heap",
    "failures",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    Zeros,
    ExactlyKMinus1,
    ExactlyK,
    /// Weight uniform on `0..=n`; for the lower-bound lab, uniform on
    /// `{k-1, k}`.
    RandomWeight,
    /// The input given in [`ExperimentSpec::explicit_input`].
    ExplicitFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NoisyThreshold,
    NoisyThresholdFixed,
    MaxHeapThresholdOnly,
    /// Baseline: every bit estimated at `delta / n`, ones counted.
    CheckBitOnly,
    /// Non-adaptive phase, concentration events and genie draws.
    LowerBoundLab,
    /// Random non-adaptive budget splits fed to the two-point bound.
    LeCam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: u64,
    pub k: u64,
    pub p: f64,
    pub delta: f64,
}

/// Settings that only the lower-bound lab reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabSettings {
    pub regime: Regime,
    /// Overrides the regime's slack.
    pub epsilon: Option<f64>,
    /// Overrides the regime's repetition count (needs `epsilon`).
    pub alpha_rep: Option<usize>,
}

impl Default for LabSettings {
    fn default() -> Self {
        Self {
            regime: Regime::ThetaLogK,
            epsilon: None,
            alpha_rep: None,
        }
    }
}

impl LabSettings {
    pub fn params(&self, cell: &Cell) -> Result<LowerBoundParams> {
        let Cell { n, k, p, delta } = *cell;
        match (self.alpha_rep, self.epsilon) {
            (Some(a), Some(e)) => LowerBoundParams::explicit(n, k, p, delta, self.regime, a, e),
            (Some(_), None) => Err(Error::InvalidSpec(
                "an explicit alpha needs an explicit epsilon".into(),
            )),
            (None, Some(e)) => LowerBoundParams::with_epsilon(n, k, p, delta, self.regime, e),
            (None, None) => LowerBoundParams::new(n, k, p, delta, self.regime),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub cells: Vec<Cell>,
    pub trials: u64,
    pub weight_policy: WeightPolicy,
    pub algorithm: Algorithm,
    pub seed: u64,
    #[serde(default)]
    pub explicit_input: Option<Vec<bool>>,
    #[serde(default)]
    pub lab: LabSettings,
    /// Clopper-Pearson instead of the normal-approximation radius.
    #[serde(default)]
    pub exact_ci: bool,
}

impl ExperimentSpec {
    pub fn new(cells: Vec<Cell>, trials: u64, algorithm: Algorithm, weight_policy: WeightPolicy) -> Self {
        Self {
            cells,
            trials,
            weight_policy,
            algorithm,
            seed: 0,
            explicit_input: None,
            lab: LabSettings::default(),
            exact_ci: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Cartesian product of the four axes, in `n, k, p, delta` order.
    pub fn grid(ns: &[u64], ks: &[u64], ps: &[f64], deltas: &[f64]) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &n in ns {
            for &k in ks {
                for &p in ps {
                    for &delta in deltas {
                        cells.push(Cell { n, k, p, delta });
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be at least 1".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidSpec("the grid is empty".into()));
        }
        for cell in &self.cells {
            ProblemConfig::new(cell.n, cell.k, cell.p, cell.delta)
                .map_err(|e| Error::InvalidSpec(format!("cell {cell:?}: {e}")))?;
            if self.weight_policy == WeightPolicy::ExplicitFile {
                match &self.explicit_input {
                    None => {
                        return Err(Error::InvalidSpec(
                            "explicit-file policy without an input".into(),
                        ))
                    }
                    Some(x) if x.len() as u64 != cell.n => {
                        return Err(Error::InvalidSpec(format!(
                            "input has {} bits but the cell has n = {}",
                            x.len(),
                            cell.n
                        )))
                    }
                    _ => {}
                }
            }
            match self.algorithm {
                Algorithm::LowerBoundLab => {
                    self.lab
                        .params(cell)
                        .map_err(|e| Error::InvalidSpec(format!("cell {cell:?}: {e}")))?;
                    if !matches!(
                        self.weight_policy,
                        WeightPolicy::ExactlyKMinus1 | WeightPolicy::ExactlyK | WeightPolicy::RandomWeight
                    ) {
                        return Err(Error::InvalidSpec(
                            "the lower-bound lab needs weight k-1, k, or random".into(),
                        ));
                    }
                }
                Algorithm::LeCam => {
                    lecam_total_budget(cell.n, cell.k, cell.delta, cell.p)
                        .map_err(|e| Error::InvalidSpec(format!("cell {cell:?}: {e}")))?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One trial, as persisted in the raw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: u64,
    pub weight: u64,
    /// `TH_k` of the hidden input; absent for the lower-bound algorithms.
    pub truth: Option<bool>,
    pub output: Option<bool>,
    pub queries: u64,
    pub branch: Option<Branch>,
    pub failed: bool,
    /// Scalar statistic of lower-bound trials (the two-point bound).
    pub value: Option<f64>,
    pub events: BTreeMap<String, bool>,
}

impl TrialRecord {
    /// Wrong output, or a budget failure of a threshold run.
    pub fn is_error(&self) -> bool {
        match (self.truth, self.output) {
            (Some(_), _) if self.failed => true,
            (Some(t), Some(o)) => t != o,
            _ => false,
        }
    }
}

fn draw_input(spec: &ExperimentSpec, cell: &Cell, rng: &mut TrialRng) -> Vec<bool> {
    let n = cell.n as usize;
    let weight = match spec.weight_policy {
        WeightPolicy::ExplicitFile => {
            return spec.explicit_input.clone().expect("validated spec");
        }
        WeightPolicy::Zeros => 0,
        WeightPolicy::ExactlyKMinus1 => cell.k as usize - 1,
        WeightPolicy::ExactlyK => cell.k as usize,
        WeightPolicy::RandomWeight if spec.algorithm == Algorithm::LowerBoundLab => {
            cell.k as usize - 1 + rng.random_range(0..2usize)
        }
        WeightPolicy::RandomWeight => rng.random_range(0..=n),
    };
    let mut hidden = vec![false; n];
    for i in sample(rng, n, weight) {
        hidden[i] = true;
    }
    hidden
}

fn run_trial(spec: &ExperimentSpec, cell_index: usize, trial: u64) -> Result<TrialRecord> {
    let cell = spec.cells[cell_index];
    let mut rng = substream(spec.seed, &[cell_index as u64, trial]);
    let mut record = TrialRecord {
        cell: cell_index,
        trial,
        weight: 0,
        truth: None,
        output: None,
        queries: 0,
        branch: None,
        failed: false,
        value: None,
        events: BTreeMap::new(),
    };

    match spec.algorithm {
        Algorithm::LeCam => {
            let total = lecam_total_budget(cell.n, cell.k, cell.delta, cell.p)?;
            let slots = (cell.n - cell.k + 1) as usize;
            let raw: Vec<f64> = (0..slots).map(|_| Exp1.sample(&mut rng)).collect();
            let sum: f64 = raw.iter().sum();
            let budgets: Vec<f64> = raw.iter().map(|x| x / sum * total).collect();
            let bound = lecam_two_point(cell.n, cell.k, cell.p, &budgets)?;
            record.value = Some(bound.bound);
            record
                .events
                .insert("bound_at_least_delta".into(), bound.bound >= cell.delta * (1.0 - 1e-12));
            return Ok(record);
        }
        Algorithm::LowerBoundLab => {
            let params = spec.lab.params(&cell)?;
            let hidden = draw_input(spec, &cell, &mut rng);
            let w = hidden.iter().filter(|&&b| b).count() as u64;
            record.weight = w;
            record.queries = params.alpha_rep as u64 * cell.n;
            let hist = run_nonadaptive_phase(&params, w, &mut rng)?;
            if w + 1 == cell.k {
                let ev = check_concentration_events(&hist, &params);
                for (name, flag) in [
                    ("e2", ev.e2),
                    ("e3", ev.e3),
                    ("e4", ev.e4),
                    ("e5", ev.e5),
                    ("e6", ev.e6),
                    ("e7", ev.e7),
                ] {
                    record.events.insert(name.into(), flag);
                }
            } else {
                match genie_reveal(&hist, &params, w, &mut rng) {
                    Ok(g) => {
                        record.events.insert("concealed".into(), g.concealed_bin.is_some());
                        record.events.insert("degenerate_draw".into(), false);
                    }
                    Err(Error::Domain(_)) => {
                        record.failed = true;
                        record.events.insert("degenerate_draw".into(), true);
                    }
                    Err(e) => return Err(e),
                }
            }
            return Ok(record);
        }
        _ => {}
    }

    let hidden = draw_input(spec, &cell, &mut rng);
    let w = hidden.iter().filter(|&&b| b).count() as u64;
    record.weight = w;
    record.truth = Some(w >= cell.k);
    let mut oracle = NoisyBitOracle::with_rng(hidden, cell.p, rng)?;
    let config = ProblemConfig::new(cell.n, cell.k, cell.p, cell.delta)?;
    match spec.algorithm {
        Algorithm::NoisyThreshold | Algorithm::NoisyThresholdFixed => {
            let variant = if spec.algorithm == Algorithm::NoisyThresholdFixed {
                Variant::FixedLength
            } else {
                Variant::VariableLength
            };
            let run = compute_threshold(&mut oracle, &config.with_variant(variant))?;
            record.output = Some(run.output);
            record.branch = run.branch;
            record.failed = run.failed_budget;
            if let Some(route) = run.heap_route {
                record
                    .events
                    .insert("per_bit_route".into(), route == HeapRoute::PerBitCount);
            }
            if variant == Variant::FixedLength {
                record
                    .events
                    .insert("outside_practical_regime".into(), run.outside_practical_regime);
            }
        }
        Algorithm::MaxHeapThresholdOnly => {
            let indices: Vec<usize> = (0..cell.n as usize).collect();
            let out = max_heap_threshold(&mut oracle, &indices, cell.k as usize, cell.delta)?;
            record.output = Some(out.output);
            record
                .events
                .insert("per_bit_route".into(), out.route == HeapRoute::PerBitCount);
        }
        Algorithm::CheckBitOnly => {
            let tol = cell.delta / cell.n as f64;
            let mut ones = 0;
            for i in 0..cell.n as usize {
                ones += check_bit(&mut oracle, i, tol)?.estimate as u64;
            }
            record.output = Some(ones >= cell.k);
        }
        Algorithm::LowerBoundLab | Algorithm::LeCam => unreachable!("handled above"),
    }
    record.queries = oracle.total_queries();
    Ok(record)
}

/// Run every trial of every cell. Records come back ordered by
/// `(cell, trial)` whatever the thread count.
pub fn run_trials(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let jobs: Vec<(usize, u64)> = (0..spec.cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    jobs.into_par_iter()
        .map(|(c, t)| run_trial(spec, c, t))
        .collect()
}

/// Per-cell aggregate. Floats are rounded to 9 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: u64,
    pub k: u64,
    pub p: f64,
    pub delta: f64,
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    /// Radius of the 99.7% confidence interval for `error_rate`.
    pub error_ci: f64,
    pub q_mean: f64,
    pub q_var: f64,
    pub q_max: u64,
    /// `optimal_rate` at `min(k, n-k+1)`.
    pub rate_theory: f64,
    pub ratio: f64,
    pub branch_zero: u64,
    pub branch_one: u64,
    pub branch_heap: u64,
    pub failures: u64,
    /// Frequency of each event among the trials that evaluated it.
    pub events: BTreeMap<String, f64>,
    /// Mean of the per-trial statistic, when trials carry one.
    pub value_mean: Option<f64>,
    pub value_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub weight_policy: WeightPolicy,
    pub seed: u64,
    pub trials: u64,
    pub exact_ci: bool,
    pub cells: Vec<CellReport>,
}

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// 3-sigma normal-approximation radius `3 sqrt(e (1-e) / trials)`.
pub fn normal_radius(rate: f64, trials: u64) -> f64 {
    3.0 * (rate * (1.0 - rate) / trials as f64).sqrt()
}

/// Clopper-Pearson interval at 99.7% coverage, as the larger one-sided
/// distance from the point estimate.
pub fn clopper_pearson_radius(errors: u64, trials: u64) -> f64 {
    let alpha = 0.003;
    let (x, t) = (errors as f64, trials as f64);
    let rate = x / t;
    let lower = if errors == 0 {
        0.0
    } else {
        Beta::new(x, t - x + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if errors == trials {
        1.0
    } else {
        Beta::new(x + 1.0, t - x)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (upper - rate).max(rate - lower)
}

fn aggregate_cell(cell: &Cell, records: &[&TrialRecord], exact_ci: bool) -> CellReport {
    let trials = records.len() as u64;
    let errors = records.iter().filter(|r| r.is_error()).count() as u64;
    let t = trials.max(1) as f64;
    let error_rate = errors as f64 / t;
    let error_ci = if trials == 0 {
        0.0
    } else if exact_ci {
        clopper_pearson_radius(errors, trials)
    } else {
        normal_radius(error_rate, trials)
    };
    let q_mean = records.iter().map(|r| r.queries as f64).sum::<f64>() / t;
    let q_var = if trials > 1 {
        records
            .iter()
            .map(|r| (r.queries as f64 - q_mean).powi(2))
            .sum::<f64>()
            / (t - 1.0)
    } else {
        0.0
    };
    let k_eff = cell.k.min(cell.n - cell.k + 1);
    let rate_theory = optimal_rate(cell.n, k_eff, cell.delta, cell.p).unwrap_or(f64::NAN);
    let count_branch = |b: Branch| records.iter().filter(|r| r.branch == Some(b)).count() as u64;

    let mut seen: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in records {
        for (name, &flag) in &r.events {
            let e = seen.entry(name.clone()).or_default();
            e.0 += flag as u64;
            e.1 += 1;
        }
    }
    let values: Vec<f64> = records.iter().filter_map(|r| r.value).collect();
    let value_mean = (!values.is_empty()).then(|| round_sig(values.iter().sum::<f64>() / values.len() as f64));
    let value_min = values.iter().copied().reduce(f64::min).map(round_sig);

    CellReport {
        n: cell.n,
        k: cell.k,
        p: cell.p,
        delta: cell.delta,
        trials,
        errors,
        error_rate: round_sig(error_rate),
        error_ci: round_sig(error_ci),
        q_mean: round_sig(q_mean),
        q_var: round_sig(q_var),
        q_max: records.iter().map(|r| r.queries).max().unwrap_or(0),
        rate_theory: round_sig(rate_theory),
        ratio: round_sig(q_mean / rate_theory),
        branch_zero: count_branch(Branch::ReturnZero),
        branch_one: count_branch(Branch::ReturnOne),
        branch_heap: count_branch(Branch::HeapSubcall),
        failures: records.iter().filter(|r| r.failed).count() as u64,
        events: seen
            .into_iter()
            .map(|(k, (hits, total))| (k, round_sig(hits as f64 / total as f64)))
            .collect(),
        value_mean,
        value_min,
    }
}

/// Build the report from trial records (which may come from a raw log).
pub fn aggregate(spec: &ExperimentSpec, records: &[TrialRecord]) -> ExperimentReport {
    let mut by_cell: Vec<Vec<&TrialRecord>> = vec![Vec::new(); spec.cells.len()];
    for r in records {
        if let Some(bucket) = by_cell.get_mut(r.cell) {
            bucket.push(r);
        }
    }
    ExperimentReport {
        schema_version: SCHEMA_VERSION,
        algorithm: spec.algorithm,
        weight_policy: spec.weight_policy,
        seed: spec.seed,
        trials: spec.trials,
        exact_ci: spec.exact_ci,
        cells: spec
            .cells
            .iter()
            .zip(&by_cell)
            .map(|(c, rs)| aggregate_cell(c, rs, spec.exact_ci))
            .collect(),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let records = run_trials(spec)?;
    Ok(aggregate(spec, &records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)
                .map_err(|e| Error::Serialization(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let ser = |e: csv::Error| Error::Serialization(e.to_string());
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).map_err(ser)?;
            for c in &report.cells {
                w.write_record([
                    c.n.to_string(),
                    c.k.to_string(),
                    c.p.to_string(),
                    c.delta.to_string(),
                    c.error_rate.to_string(),
                    c.error_ci.to_string(),
                    c.q_mean.to_string(),
                    c.q_var.to_string(),
                    c.q_max.to_string(),
                    c.rate_theory.to_string(),
                    c.ratio.to_string(),
                    c.branch_zero.to_string(),
                    c.branch_one.to_string(),
                    c.branch_heap.to_string(),
                    c.failures.to_string(),
                ])
                .map_err(ser)?;
            }
            w.into_inner()
                .map_err(|e| Error::Serialization(e.to_string()))
        }
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<ExperimentReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// Write records as newline-delimited JSON.
pub fn write_raw_log<W: Write>(records: &[TrialRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Serialization(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_raw_log<R: BufRead>(input: R) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Serialization(e.to_string()))?);
    }
    Ok(records)
}

/// Parse a bitstring of `0`/`1` characters, optionally newline-terminated.
pub fn parse_bitstring(text: &str) -> Result<Vec<bool>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.is_empty() {
        return Err(Error::InvalidSpec("input bitstring is empty".into()));
    }
    body.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::InvalidSpec(format!("unexpected character {other:?} in input"))),
        })
        .collect()
}

pub fn load_input_file(path: &Path) -> Result<Vec<bool>> {
    parse_bitstring(&std::fs::read_to_string(path)?)
}
