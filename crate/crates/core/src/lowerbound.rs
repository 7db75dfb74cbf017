//! Desk-scale laboratory for the converse constructions: the non-adaptive
//! phase as balls in bins, the concentration events over the typical bins,
//! the genie that may hide one heavy ball, and the two-point bound.
//!
//! A bit of value one is a heavy ball, a zero a light ball. After `alpha`
//! readings of every bit, ball `i` lands in bin `j` when `j` of its readings
//! were ones, so heavy balls land in bin `j` with probability
//! `P1_j = C(alpha, j) (1-p)^j p^(alpha-j)` and light balls with
//! `P0_j = C(alpha, j) p^j (1-p)^(alpha-j)`.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bounds::kl_bern_flip;
use crate::error::{check_crossover, check_tolerance, Error, Result};

/// Which converse argument a parameter set belongs to, by how `ln(1/delta)`
/// compares with `ln k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ln(1/delta) = Theta(ln k)`.
    ThetaLogK,
    /// `ln(1/delta) = o(ln k)`.
    SmallLogDelta,
    /// `ln(1/delta) = omega(ln k)`: handled by the two-point bound only.
    LeCam,
}

/// `D(Bern(a) || Bern(b))` in nats, with `0 ln 0 = 0`.
pub fn kl_bernoulli(a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) || !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!("KL needs a in [0,1], b in (0,1); got {a}, {b}")));
    }
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    Ok(term(a, b) + term(1.0 - a, 1.0 - b))
}

/// The slack `epsilon` prescribed for a regime.
pub fn regime_epsilon(n: u64, k: u64, delta: f64, regime: Regime) -> Result<f64> {
    let ratio = (k as f64 / n as f64).sqrt();
    match regime {
        Regime::ThetaLogK => Ok((k as f64).ln().powf(-0.25).max(ratio)),
        Regime::SmallLogDelta => Ok((1.0 / delta).ln().powf(-0.25).max(ratio)),
        Regime::LeCam => Err(Error::Domain(
            "the two-point regime has no balls-and-bins slack".into(),
        )),
    }
}

/// Parameters of the non-adaptive phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub n: u64,
    pub k: u64,
    pub p: f64,
    pub delta: f64,
    /// Readings per bit, the floor of `alpha_exact`.
    pub alpha_rep: usize,
    /// Unrounded regime formula (equal to `alpha_rep` when given explicitly).
    pub alpha_exact: f64,
    pub epsilon: f64,
    pub regime: Regime,
    typical_lo: usize,
    typical_hi: usize,
}

impl LowerBoundParams {
    /// Slack and repetition count from the regime formulas.
    ///
    /// Fails when the prescribed `epsilon` is not below `p`, which is the case
    /// for every `k` small enough to simulate in the `ThetaLogK` regime.
    pub fn new(n: u64, k: u64, p: f64, delta: f64, regime: Regime) -> Result<Self> {
        let eps = regime_epsilon(n, k, delta, regime)?;
        Self::with_epsilon(n, k, p, delta, regime, eps)
    }

    /// Regime formula for `alpha` with a caller-chosen `epsilon < p`:
    /// `(1-eps) ln(k/delta) / D(p-eps || 1-p)` for `ThetaLogK`,
    /// `(1-eps) ln k / D(p-eps || 1-p)` for `SmallLogDelta`.
    pub fn with_epsilon(
        n: u64,
        k: u64,
        p: f64,
        delta: f64,
        regime: Regime,
        epsilon: f64,
    ) -> Result<Self> {
        validate(n, k, p, delta)?;
        if !(epsilon > 0.0 && epsilon < p) {
            return Err(Error::Domain(format!(
                "slack epsilon = {epsilon} must lie in (0, p = {p})"
            )));
        }
        let kl = kl_bernoulli(p - epsilon, 1.0 - p)?;
        let log_term = match regime {
            Regime::ThetaLogK => (k as f64 / delta).ln(),
            Regime::SmallLogDelta => (k as f64).ln(),
            Regime::LeCam => {
                return Err(Error::Domain(
                    "the two-point regime has no non-adaptive phase".into(),
                ))
            }
        };
        let alpha_exact = (1.0 - epsilon) * log_term / kl;
        let alpha_rep = alpha_exact.floor();
        if alpha_rep < 1.0 {
            return Err(Error::Domain(format!(
                "alpha = {alpha_exact} rounds below one reading"
            )));
        }
        Self::build(n, k, p, delta, regime, alpha_rep as usize, alpha_exact, epsilon)
    }

    /// Fully explicit parameters, for small hand-built instances.
    pub fn explicit(
        n: u64,
        k: u64,
        p: f64,
        delta: f64,
        regime: Regime,
        alpha_rep: usize,
        epsilon: f64,
    ) -> Result<Self> {
        validate(n, k, p, delta)?;
        if alpha_rep == 0 || !(epsilon > 0.0) {
            return Err(Error::Domain("need alpha >= 1 and epsilon > 0".into()));
        }
        Self::build(n, k, p, delta, regime, alpha_rep, alpha_rep as f64, epsilon)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        n: u64,
        k: u64,
        p: f64,
        delta: f64,
        regime: Regime,
        alpha_rep: usize,
        alpha_exact: f64,
        epsilon: f64,
    ) -> Result<Self> {
        // Endpoints rounded inward so membership is decided on integers.
        let a = alpha_rep as f64;
        let lo = (a * (p - epsilon) - 1e-9).ceil().max(0.0) as usize;
        let hi = ((a * (p + epsilon) + 1e-9).floor() as usize).min(alpha_rep);
        if lo > hi {
            return Err(Error::Domain(format!(
                "typical set is empty for alpha = {alpha_rep}, p = {p}, epsilon = {epsilon}"
            )));
        }
        Ok(Self {
            n,
            k,
            p,
            delta,
            alpha_rep,
            alpha_exact,
            epsilon,
            regime,
            typical_lo: lo,
            typical_hi: hi,
        })
    }

    /// Bins `j` with `alpha (p - eps) <= j <= alpha (p + eps)`.
    pub fn typical_bins(&self) -> RangeInclusive<usize> {
        self.typical_lo..=self.typical_hi
    }

    pub fn bin_probabilities(&self) -> BinProbabilities {
        bin_probabilities(self.alpha_rep, self.p).expect("validated parameters")
    }
}

fn validate(n: u64, k: u64, p: f64, delta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidThreshold { k, n });
    }
    check_crossover(p)?;
    check_tolerance(delta)
}

/// Landing probabilities of heavy (`P1`) and light (`P0`) balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinProbabilities {
    pub heavy: Vec<f64>,
    pub light: Vec<f64>,
}

/// Binomial bin probabilities, computed in log space.
pub fn bin_probabilities(alpha: usize, p: f64) -> Result<BinProbabilities> {
    if alpha == 0 {
        return Err(Error::Domain("need at least one reading per bit".into()));
    }
    check_crossover(p)?;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut ln_choose = 0.0;
    let mut heavy = Vec::with_capacity(alpha + 1);
    let mut light = Vec::with_capacity(alpha + 1);
    for j in 0..=alpha {
        if j > 0 {
            ln_choose += ((alpha - j + 1) as f64 / j as f64).ln();
        }
        let (jf, rest) = (j as f64, (alpha - j) as f64);
        heavy.push((ln_choose + jf * lq + rest * lp).exp());
        light.push((ln_choose + jf * lp + rest * lq).exp());
    }
    Ok(BinProbabilities { heavy, light })
}

/// Heavy and light ball counts per bin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinHistogram {
    pub heavy: Vec<u64>,
    pub light: Vec<u64>,
}

impl BinHistogram {
    /// Number of heavy balls, i.e. the input weight.
    pub fn weight(&self) -> u64 {
        self.heavy.iter().sum()
    }

    pub fn light_total(&self) -> u64 {
        self.light.iter().sum()
    }

    pub fn typical_light(&self, typical: RangeInclusive<usize>) -> u64 {
        self.light[typical].iter().sum()
    }
}

/// Multinomial draw of `count` balls over bins with probabilities `probs`,
/// as a chain of conditional binomials.
pub fn sample_bin_counts<R: Rng + ?Sized>(count: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = count;
    let mut mass = 1.0;
    for (j, &pj) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = remaining;
            break;
        }
        let q = (pj / mass).clamp(0.0, 1.0);
        let x = Binomial::new(remaining, q)
            .expect("q clamped to [0, 1]")
            .sample(rng);
        out[j] = x;
        remaining -= x;
        mass -= pj;
    }
    out
}

/// Non-adaptive phase on an input of weight `w` (which must be `k-1` or `k`):
/// `H ~ Multinomial(w, P1)` and `L ~ Multinomial(n-w, P0)`.
pub fn run_nonadaptive_phase<R: Rng + ?Sized>(
    params: &LowerBoundParams,
    w: u64,
    rng: &mut R,
) -> Result<BinHistogram> {
    if w + 1 != params.k && w != params.k {
        return Err(Error::Domain(format!(
            "weight {w} must be k-1 = {} or k = {}",
            params.k - 1,
            params.k
        )));
    }
    let probs = params.bin_probabilities();
    Ok(BinHistogram {
        heavy: sample_bin_counts(w, &probs.heavy, rng),
        light: sample_bin_counts(params.n - w, &probs.light, rng),
    })
}

/// Which of the typical-realization conditions a weight-`(k-1)` histogram
/// violates. `e2`-`e4` belong to the `ThetaLogK` argument and `e5`-`e7` to
/// `SmallLogDelta`; all six are evaluated on the given parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcentrationEvents {
    /// Too few light balls in the typical bins.
    pub e2: bool,
    /// Some typical bin's light count strays beyond `Delta0_j` relative error.
    pub e3: bool,
    /// Some typical bin holds a heavy ball.
    pub e4: bool,
    /// Typical light mass short of the `SmallLogDelta` threshold.
    pub e5: bool,
    /// Same condition as `e3`.
    pub e6: bool,
    /// Some typical bin's heavy count strays beyond `Delta1_j` relative error.
    pub e7: bool,
}

fn deviates(count: u64, mean: f64, log_term: f64) -> bool {
    if mean <= 0.0 {
        return count != 0;
    }
    let radius = (log_term / mean).sqrt() * mean;
    let c = count as f64;
    c < mean - radius || c > mean + radius
}

/// Threshold on the typical light mass below which `e2` fires:
/// `(n-k+1) (1 - 2 exp(-sqrt(ln k) / (3 p D(p-eps || 1-p)))) (1 - sqrt(ln n / n))`.
///
/// When `eps >= p` (explicit parameters only) the divergence is taken at
/// `max(p - eps, 0)`.
pub fn typical_mass_threshold(params: &LowerBoundParams) -> f64 {
    let (n, k, p) = (params.n as f64, params.k as f64, params.p);
    let kl = kl_bernoulli((p - params.epsilon).max(0.0), 1.0 - p).expect("validated parameters");
    (n - k + 1.0) * (1.0 - 2.0 * (-k.ln().sqrt() / (3.0 * p * kl)).exp()) * (1.0 - (n.ln() / n).sqrt())
}

/// Threshold on the typical light mass below which `e5` fires:
/// `(n-k+1) (1 - 2 exp(-sqrt(ln(1/delta)))) (1 - sqrt(ln n / n))`.
pub fn typical_mass_threshold_small_delta(params: &LowerBoundParams) -> f64 {
    let (n, k) = (params.n as f64, params.k as f64);
    (n - k + 1.0) * (1.0 - 2.0 * (-(1.0 / params.delta).ln().sqrt()).exp()) * (1.0 - (n.ln() / n).sqrt())
}

/// Evaluate the event inequalities on a histogram.
///
/// Light deviations use `Delta0_j = sqrt(ln n / ((n-k+1) P0_j))`, heavy
/// deviations `Delta1_j = sqrt(ln k / ((k-1) P1_j))`.
pub fn check_concentration_events(
    hist: &BinHistogram,
    params: &LowerBoundParams,
) -> ConcentrationEvents {
    let probs = params.bin_probabilities();
    let t = params.typical_bins();
    let (n, k) = (params.n as f64, params.k as f64);
    let typical_light = hist.typical_light(t.clone()) as f64;
    let light_dev = t
        .clone()
        .any(|j| deviates(hist.light[j], (n - k + 1.0) * probs.light[j], n.ln()));
    let heavy_dev = t
        .clone()
        .any(|j| deviates(hist.heavy[j], (k - 1.0) * probs.heavy[j], k.ln()));
    ConcentrationEvents {
        e2: typical_light <= typical_mass_threshold(params),
        e3: light_dev,
        e4: t.clone().any(|j| hist.heavy[j] >= 1),
        e5: typical_light <= typical_mass_threshold_small_delta(params),
        e6: light_dev,
        e7: heavy_dev,
    }
}

/// What the genie discloses after the non-adaptive phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenieReveal {
    /// Heavy balls whose identity is disclosed, per bin.
    pub heavy: Vec<u64>,
    /// Balls shown as light, per bin (including a concealed heavy ball).
    pub light: Vec<u64>,
    /// Bin drawn by the genie (weight-`k` inputs only).
    pub chosen_bin: Option<usize>,
    /// Bin where a heavy ball was concealed, if any.
    pub concealed_bin: Option<usize>,
}

/// Draw `J` in the typical bins with `P(J = j) = L_j / sum_T L`.
pub fn draw_typical_bin<R: Rng + ?Sized>(
    light: &[u64],
    typical: RangeInclusive<usize>,
    rng: &mut R,
) -> Result<usize> {
    let total: u64 = light[typical.clone()].iter().sum();
    if total == 0 {
        return Err(Error::Domain(
            "no light balls in the typical bins; the genie cannot draw".into(),
        ));
    }
    let mut u = rng.random_range(0..total);
    for j in typical {
        if u < light[j] {
            return Ok(j);
        }
        u -= light[j];
    }
    unreachable!("u < total")
}

/// Genie disclosure for an input of weight `w`.
///
/// For `w = k-1` everything is revealed. For `w = k` the genie draws a
/// typical bin `J`; if it holds a heavy ball, one of them is relabelled as
/// light and the rest are revealed.
pub fn genie_reveal<R: Rng + ?Sized>(
    hist: &BinHistogram,
    params: &LowerBoundParams,
    w: u64,
    rng: &mut R,
) -> Result<GenieReveal> {
    let mut out = GenieReveal {
        heavy: hist.heavy.clone(),
        light: hist.light.clone(),
        chosen_bin: None,
        concealed_bin: None,
    };
    if w + 1 == params.k {
        return Ok(out);
    }
    if w != params.k {
        return Err(Error::Domain(format!("weight {w} must be k-1 or k")));
    }
    let j = draw_typical_bin(&hist.light, params.typical_bins(), rng)?;
    out.chosen_bin = Some(j);
    if hist.heavy[j] >= 1 {
        out.heavy[j] -= 1;
        out.light[j] += 1;
        out.concealed_bin = Some(j);
    }
    Ok(out)
}

/// Total expected-query budget `(n-k+1) ln(1/(4 delta)) / D_KL(p || 1-p)`
/// under which the two-point bound forces error at least `delta`.
pub fn lecam_total_budget(n: u64, k: u64, delta: f64, p: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::InvalidThreshold { k, n });
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::InvalidTolerance(delta));
    }
    Ok((n - k + 1) as f64 * (1.0 / (4.0 * delta)).ln() / kl_bern_flip(p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeCamBound {
    /// Lower bound on the worst-case error.
    pub bound: f64,
    /// 0-based position of the extra one in the witnessing instance.
    pub witness: usize,
}

/// Two-point lower bound for non-adaptive per-bit budgets.
///
/// `budgets[m]` is the expected number of queries to bit `k - 1 + m` under
/// the instance with ones at `0..k-1`. The instance with an extra one at bit
/// `j` differs in KL by `t_j D_KL(p || 1-p)`, and Bretagnolle-Huber gives
/// error at least `exp(-KL_j) / 4`; the best `j` is returned.
pub fn lecam_two_point(n: u64, k: u64, p: f64, budgets: &[f64]) -> Result<LeCamBound> {
    if k == 0 || k > n {
        return Err(Error::InvalidThreshold { k, n });
    }
    let expected = (n - k + 1) as usize;
    if budgets.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: budgets.len(),
        });
    }
    if let Some(b) = budgets.iter().find(|b| !(**b >= 0.0)) {
        return Err(Error::Domain(format!("budget {b} is negative")));
    }
    let kl = kl_bern_flip(p)?;
    let (m, t) = budgets
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n - k + 1 >= 1");
    Ok(LeCamBound {
        bound: 0.25 * (-t * kl).exp(),
        witness: k as usize - 1 + m,
    })
}

/// Finite-`n` audit of the bin-probability estimates over the typical bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PjAudit {
    pub regime: Regime,
    pub min_heavy_typical: f64,
    pub max_heavy_typical: f64,
    pub min_light_typical: f64,
    /// `(delta/k)(k/delta)^(eps/2)` for `ThetaLogK`;
    /// `exp(-ln k + ln k / (2 (ln 1/delta)^(1/4)))` for `SmallLogDelta`.
    pub heavy_lower_target: f64,
    pub heavy_lower_holds: bool,
    /// `ln(min P1_T / target)`; positive when the lower bound holds.
    pub heavy_lower_margin: f64,
    /// Largest `gamma` with `max P1_T <= k^(-1-gamma)`.
    pub empirical_gamma: f64,
    /// `-ln(min P0_T) / ln k`; the light probabilities decay like
    /// `k^-(this)`, which should be small.
    pub light_log_exponent: f64,
    pub heavy_increasing_on_typical: bool,
    pub light_mode_in_typical: bool,
}

pub fn pj_bounds_check(params: &LowerBoundParams) -> Result<PjAudit> {
    let (k, delta, eps) = (params.k as f64, params.delta, params.epsilon);
    let target = match params.regime {
        Regime::ThetaLogK => (delta / k) * (k / delta).powf(eps / 2.0),
        Regime::SmallLogDelta => {
            (-k.ln() + k.ln() / (2.0 * (1.0 / delta).ln().powf(0.25))).exp()
        }
        Regime::LeCam => {
            return Err(Error::Domain(
                "bin probabilities are not used in the two-point regime".into(),
            ))
        }
    };
    let probs = params.bin_probabilities();
    let t = params.typical_bins();
    let heavy: Vec<f64> = probs.heavy[t.clone()].to_vec();
    let light: Vec<f64> = probs.light[t.clone()].to_vec();
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let min_heavy = fold_min(&heavy);
    let max_heavy = heavy.iter().copied().fold(0.0, f64::max);
    let min_light = fold_min(&light);
    let mode = probs
        .light
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .expect("alpha >= 1");
    Ok(PjAudit {
        regime: params.regime,
        min_heavy_typical: min_heavy,
        max_heavy_typical: max_heavy,
        min_light_typical: min_light,
        heavy_lower_target: target,
        heavy_lower_holds: min_heavy >= target,
        heavy_lower_margin: (min_heavy / target).ln(),
        empirical_gamma: -max_heavy.ln() / k.ln() - 1.0,
        light_log_exponent: -min_light.ln() / k.ln(),
        heavy_increasing_on_typical: heavy.windows(2).all(|w| w[0] < w[1]),
        light_mode_in_typical: t.contains(&mode),
    })
}
