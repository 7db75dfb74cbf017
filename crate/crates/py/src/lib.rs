//! Python bindings: problem configuration, the noisy oracle, bounds, the bit
//! tests, the threshold algorithm and the experiment harness (JSON in, JSON
//! out).

use noisy_threshold::{bounds, checkbit, harness, lowerbound, oracle, threshold, Error};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(msg) => PyOSError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_variant(name: &str) -> PyResult<oracle::Variant> {
    match name {
        "variable_length" => Ok(oracle::Variant::VariableLength),
        "fixed_length" => Ok(oracle::Variant::FixedLength),
        other => Err(PyValueError::new_err(format!(
            "variant must be 'variable_length' or 'fixed_length', got {other:?}"
        ))),
    }
}

#[pyclass(name = "ProblemConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProblemConfig {
    inner: oracle::ProblemConfig,
}

#[pymethods]
impl PyProblemConfig {
    #[new]
    #[pyo3(signature = (n, k, p, delta, seed = 0, variant = "variable_length"))]
    fn new(n: u64, k: u64, p: f64, delta: f64, seed: u64, variant: &str) -> PyResult<Self> {
        let inner = oracle::ProblemConfig::new(n, k, p, delta)
            .map_err(to_py)?
            .with_seed(seed)
            .with_variant(parse_variant(variant)?);
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> u64 {
        self.inner.k()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProblemConfig(n={}, k={}, p={}, delta={}, seed={})",
            self.inner.n(),
            self.inner.k(),
            self.inner.p(),
            self.inner.delta(),
            self.inner.seed()
        )
    }
}

#[pyclass(name = "NoisyBitOracle")]
struct PyOracle {
    inner: oracle::NoisyBitOracle,
}

#[pymethods]
impl PyOracle {
    #[new]
    fn new(config: &PyProblemConfig, hidden: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: oracle::NoisyBitOracle::new(&config.inner, hidden).map_err(to_py)?,
        })
    }

    /// One noisy reading of bit `i`.
    fn query(&mut self, i: usize) -> PyResult<bool> {
        self.inner.query(i).map_err(to_py)
    }

    #[getter]
    fn total_queries(&self) -> u64 {
        self.inner.total_queries()
    }

    #[getter]
    fn per_bit(&self) -> Vec<u64> {
        self.inner.ledger().per_bit().to_vec()
    }

    #[getter]
    fn weight(&self) -> usize {
        self.inner.weight()
    }

    #[pyo3(signature = (limit = None))]
    fn set_budget(&mut self, limit: Option<u64>) {
        self.inner.set_budget(limit);
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }
}

#[pyclass(name = "CheckBitOutcome", frozen, get_all)]
struct PyCheckBit {
    estimate: bool,
    queries_used: u64,
    restarts: u64,
    longest_run: u64,
    degenerate: bool,
}

impl From<checkbit::CheckBitOutcome> for PyCheckBit {
    fn from(o: checkbit::CheckBitOutcome) -> Self {
        Self {
            estimate: o.estimate,
            queries_used: o.queries_used,
            restarts: o.restarts,
            longest_run: o.longest_run,
            degenerate: o.degenerate,
        }
    }
}

#[pyclass(name = "ThresholdRun", frozen, get_all)]
struct PyThresholdRun {
    output: bool,
    total_queries: u64,
    survivor_set_size: u64,
    branch: Option<String>,
    failed_budget: bool,
    complemented: bool,
    outside_practical_regime: bool,
}

#[pymethods]
impl PyThresholdRun {
    fn __repr__(&self) -> String {
        format!(
            "ThresholdRun(output={}, total_queries={}, branch={})",
            if self.output { "True" } else { "False" },
            self.total_queries,
            self.branch.as_deref().unwrap_or("None")
        )
    }
}

#[pyfunction]
fn check_bit(oracle: &mut PyOracle, i: usize, delta: f64) -> PyResult<PyCheckBit> {
    checkbit::check_bit(&mut oracle.inner, i, delta)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
fn safe_check_bit(oracle: &mut PyOracle, i: usize, delta: f64) -> PyResult<PyCheckBit> {
    checkbit::safe_check_bit(&mut oracle.inner, i, delta)
        .map(Into::into)
        .map_err(to_py)
}

/// `TH_k` of the oracle's hidden input, any `k`.
#[pyfunction]
fn compute_threshold(oracle: &mut PyOracle, config: &PyProblemConfig) -> PyResult<PyThresholdRun> {
    let run = threshold::compute_threshold(&mut oracle.inner, &config.inner).map_err(to_py)?;
    let branch = run.branch.map(|b| {
        match b {
            threshold::Branch::ReturnZero => "return_zero",
            threshold::Branch::ReturnOne => "return_one",
            threshold::Branch::HeapSubcall => "heap_subcall",
        }
        .to_string()
    });
    Ok(PyThresholdRun {
        output: run.output,
        total_queries: run.total_queries,
        survivor_set_size: run.survivor_set_size,
        branch,
        failed_budget: run.failed_budget,
        complemented: run.complemented,
        outside_practical_regime: run.outside_practical_regime,
    })
}

#[pyfunction]
fn kl_bern_flip(p: f64) -> PyResult<f64> {
    bounds::kl_bern_flip(p).map_err(to_py)
}

#[pyfunction]
fn optimal_rate(n: u64, k: u64, delta: f64, p: f64) -> PyResult<f64> {
    bounds::optimal_rate(n, k, delta, p).map_err(to_py)
}

#[pyfunction]
fn checkbit_budget(delta: f64, p: f64) -> PyResult<f64> {
    bounds::checkbit_budget(delta, p).map_err(to_py)
}

#[pyfunction]
fn fixed_length_cap(n: u64, k: u64, delta: f64, p: f64) -> PyResult<f64> {
    bounds::fixed_length_cap(n, k, delta, p).map_err(to_py)
}

#[pyfunction]
fn majority_readings(delta_c: f64, p: f64) -> PyResult<u64> {
    bounds::majority_readings(delta_c, p).map_err(to_py)
}

#[pyfunction]
fn survivor_gate(n: u64, k: u64, delta: f64) -> f64 {
    threshold::survivor_gate(n, k, delta)
}

/// `(heavy, light)` bin probabilities for `alpha` readings per bit.
#[pyfunction]
fn bin_probabilities(alpha: usize, p: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let b = lowerbound::bin_probabilities(alpha, p).map_err(to_py)?;
    Ok((b.heavy, b.light))
}

/// `(bound, witness)` of the two-point bound for per-bit budgets.
#[pyfunction]
fn lecam_two_point(n: u64, k: u64, p: f64, budgets: Vec<f64>) -> PyResult<(f64, usize)> {
    let b = lowerbound::lecam_two_point(n, k, p, &budgets).map_err(to_py)?;
    Ok((b.bound, b.witness))
}

/// Run an experiment described by a JSON `ExperimentSpec`; returns the JSON
/// report.
#[pyfunction]
fn run_experiment(py: Python<'_>, spec_json: &str) -> PyResult<String> {
    let spec: harness::ExperimentSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py
        .detach(|| harness::run_experiment(&spec))
        .map_err(to_py)?;
    let bytes = harness::emit_report(&report, harness::ReportFormat::Json).map_err(to_py)?;
    String::from_utf8(bytes).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn noisy_threshold_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblemConfig>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PyCheckBit>()?;
    m.add_class::<PyThresholdRun>()?;
    m.add_function(wrap_pyfunction!(check_bit, m)?)?;
    m.add_function(wrap_pyfunction!(safe_check_bit, m)?)?;
    m.add_function(wrap_pyfunction!(compute_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(kl_bern_flip, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_rate, m)?)?;
    m.add_function(wrap_pyfunction!(checkbit_budget, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_length_cap, m)?)?;
    m.add_function(wrap_pyfunction!(majority_readings, m)?)?;
    m.add_function(wrap_pyfunction!(survivor_gate, m)?)?;
    m.add_function(wrap_pyfunction!(bin_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(lecam_two_point, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
