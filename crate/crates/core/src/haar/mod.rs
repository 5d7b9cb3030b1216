//! Haar-random state-pair campaigns: sampling, empirical MET distributions,
//! bootstrap confidence bands and analytic fits.

pub mod fit;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::device::{ControlSchedule, DeviceParams};
use crate::error::{Error, Result};
use crate::grape::{optimize, Init, OptimizerConfig};
use crate::propagation::StateVector;

pub use fit::{fit_expansion, fit_hi, hi_cdf, select_expansion, CdfFit, FitData, FitModel, ModelSelection};

/// Normalized complex-Gaussian vector, Haar distributed on the unit sphere.
pub fn haar_state<R: Rng>(n_qubits: usize, rng: &mut R) -> StateVector {
    loop {
        let v: Vec<Complex64> = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        if let Ok(s) = StateVector::normalized(v) {
            return s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePairSample {
    pub n_qubits: usize,
    pub seed: u64,
    /// `(psi0, phi)` pairs.
    pub pairs: Vec<(StateVector, StateVector)>,
}

impl StatePairSample {
    /// Squared overlaps `|<psi0|phi>|^2`.
    pub fn overlaps(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| a.overlap_sqr(b)).collect()
    }
}

pub fn sample_pairs(n_qubits: usize, n_pairs: usize, seed: u64) -> Result<StatePairSample> {
    if n_pairs == 0 || n_qubits == 0 {
        return Err(Error::InvalidArgument("need at least one pair of at least one qubit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n_pairs)
        .map(|_| {
            let a = haar_state(n_qubits, &mut rng);
            let b = haar_state(n_qubits, &mut rng);
            (a, b)
        })
        .collect();
    Ok(StatePairSample { n_qubits, seed, pairs })
}

/// Law of the squared overlap of a Haar pair in dimension `d`:
/// `P(|<psi0|phi>|^2 <= x) = 1 - (1 - x)^(d-1)`.
pub fn squared_overlap_cdf(x: f64, d: usize) -> f64 {
    1.0 - (1.0 - x.clamp(0.0, 1.0)).powi(d as i32 - 1)
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS critical value at significance `alpha`. The common
/// campaign sizes are tabulated; others use Stephens' approximation
/// `c(alpha) / (sqrt(n) + 0.12 + 0.11 / sqrt(n))`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    const TABLE: [(usize, f64, f64); 4] = [(64, 0.01, 0.20016), (64, 0.05, 0.16696), (1024, 0.01, 0.05068), (1024, 0.05, 0.04228)];
    if let Some(&(_, _, d)) = TABLE.iter().find(|&&(m, a, _)| m == n && a == alpha) {
        return d;
    }
    let c = (-0.5 * (0.5 * alpha).ln()).sqrt();
    let r = (n as f64).sqrt();
    c / (r + 0.12 + 0.11 / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Durations in ns, any order; the chain visits them longest first.
    pub t_grid: Vec<f64>,
    pub n_segments: usize,
    pub threshold: f64,
    /// Skip the remaining shorter durations of a pair after this many
    /// consecutive failures (they count as failed).
    pub stop_after_failures: Option<usize>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            t_grid: Vec::new(),
            n_segments: 40,
            threshold: 1e-7,
            stop_after_failures: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Passed,
    Failed,
    /// Not optimized; counted as failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    /// Optimized infidelity per ascending grid duration; `None` if skipped.
    pub infidelity: Vec<Option<f64>>,
    pub status: Vec<PointStatus>,
    pub converged: Vec<bool>,
    /// Largest failing and smallest passing grid duration, after repair.
    pub met_bracket: (Option<f64>, Option<f64>),
}

impl PairRecord {
    /// Pass flags with every duration above a passing one also passing.
    pub fn repaired(&self) -> Vec<bool> {
        let mut seen = false;
        self.status
            .iter()
            .map(|s| {
                seen |= *s == PointStatus::Passed;
                seen
            })
            .collect()
    }

    /// Index of the first passing grid duration, or the grid length.
    pub fn met_index(&self) -> usize {
        self.status.iter().position(|s| *s == PointStatus::Passed).unwrap_or(self.status.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub n_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub variance: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate {
    pub n_qubits: usize,
    /// Ascending durations.
    pub t_grid: Vec<f64>,
    pub threshold: f64,
    pub cdf: Vec<f64>,
    pub pairs: Vec<PairRecord>,
    /// Pairs left out after an optimizer error, with the message.
    pub excluded: Vec<(usize, String)>,
    pub bootstrap: Option<Bootstrap>,
}

impl CdfEstimate {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Longest per-pair MET, `None` if some pair never passed.
    pub fn max_met(&self) -> Option<f64> {
        let k = self.pairs.iter().map(PairRecord::met_index).max()?;
        self.t_grid.get(k).copied()
    }

    /// Fit input from the bootstrap variances.
    pub fn fit_data(&self) -> Result<FitData> {
        let b = self
            .bootstrap
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("fits need bootstrap variances".into()))?;
        Ok(FitData {
            t: self.t_grid.clone(),
            p: self.cdf.clone(),
            variance: b.variance.clone(),
        })
    }

    /// Fraction of pairs with infidelity at most `delta` at grid index `k`,
    /// among pairs optimized there.
    pub fn infidelity_cdf(&self, k: usize, delta: f64) -> Option<f64> {
        let vals: Vec<f64> = self.pairs.iter().filter_map(|p| p.infidelity[k]).collect();
        if vals.is_empty() {
            return None;
        }
        Some(vals.iter().filter(|&&v| v <= delta).count() as f64 / vals.len() as f64)
    }

    /// Infidelity CDF table `(T, delta, P, extrapolated)`. Entries at grid
    /// durations where some pairs were skipped are replaced by the mean over
    /// up to `window` fully optimized durations just below, and flagged.
    pub fn infidelity_table(&self, deltas: &[f64], window: usize) -> Vec<(f64, f64, f64, bool)> {
        let complete: Vec<bool> = (0..self.t_grid.len())
            .map(|k| self.pairs.iter().all(|p| p.infidelity[k].is_some()))
            .collect();
        let mut rows = Vec::new();
        for (k, &t) in self.t_grid.iter().enumerate() {
            for &delta in deltas {
                if complete[k] {
                    rows.push((t, delta, self.infidelity_cdf(k, delta).unwrap_or(0.0), false));
                    continue;
                }
                let below: Vec<f64> = (0..k)
                    .rev()
                    .filter(|&j| complete[j])
                    .take(window)
                    .filter_map(|j| self.infidelity_cdf(j, delta))
                    .collect();
                if !below.is_empty() {
                    rows.push((t, delta, below.iter().sum::<f64>() / below.len() as f64, true));
                }
            }
        }
        rows
    }
}

fn pair_seed(seed: u64, pair: usize, step: usize) -> u64 {
    let mut z = seed ^ (pair as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z ^= (step as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

fn run_pair(
    params: &DeviceParams,
    index: usize,
    psi0: &StateVector,
    phi: &StateVector,
    t_grid: &[f64],
    cfg: &CampaignConfig,
    grape: &OptimizerConfig,
) -> Result<PairRecord> {
    let n = t_grid.len();
    let cost = CostFunction::infidelity(phi.clone());
    let mut infidelity = vec![None; n];
    let mut status = vec![PointStatus::Skipped; n];
    let mut converged = vec![false; n];
    let mut prev: Option<ControlSchedule> = None;
    let mut fails = 0;
    for (step, k) in (0..n).rev().enumerate() {
        if cfg.stop_after_failures.is_some_and(|m| fails >= m) {
            break;
        }
        let mut g = grape.clone();
        g.seed = pair_seed(grape.seed, index, step);
        if g.target_cost.is_none() {
            g.target_cost = Some(0.1 * cfg.threshold);
        }
        let init = match &prev {
            Some(s) if s.duration_ns > 0.0 => Init::Warm(s.clone()),
            _ => Init::Random,
        };
        let out = optimize(params, &cost, psi0, t_grid[k], cfg.n_segments, &init, &g)?;
        let pass = out.best_cost <= cfg.threshold;
        infidelity[k] = Some(out.best_cost);
        status[k] = if pass { PointStatus::Passed } else { PointStatus::Failed };
        converged[k] = out.converged;
        fails = if pass { 0 } else { fails + 1 };
        prev = Some(out.best_schedule);
    }
    let mut rec = PairRecord {
        index,
        infidelity,
        status,
        converged,
        met_bracket: (None, None),
    };
    let k = rec.met_index();
    rec.met_bracket = (
        if k > 0 { Some(t_grid[k - 1]) } else { None },
        t_grid.get(k).copied(),
    );
    Ok(rec)
}

/// Optimizes every pair along a descending-duration warm-start chain and
/// builds the empirical MET distribution on the grid.
pub fn estimate_cdf(
    sample: &StatePairSample,
    params: &DeviceParams,
    config: &CampaignConfig,
    grape: &OptimizerConfig,
) -> Result<CdfEstimate> {
    if config.t_grid.is_empty() || config.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("duration grid must be nonempty and nonnegative".into()));
    }
    if !(config.threshold > 0.0) || config.n_segments == 0 {
        return Err(Error::InvalidArgument("need a positive threshold and at least one segment".into()));
    }
    if params.n_qubits != sample.n_qubits {
        return Err(Error::DimensionMismatch { expected: params.n_qubits, got: sample.n_qubits });
    }
    params.validate()?;
    let mut t_grid = config.t_grid.clone();
    t_grid.sort_by(f64::total_cmp);
    t_grid.dedup();
    let results: Vec<Result<PairRecord>> = sample
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| run_pair(params, i, a, b, &t_grid, config, grape))
        .collect();
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => pairs.push(p),
            Err(e) => excluded.push((i, e.to_string())),
        }
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateData("every pair failed to optimize".into()));
    }
    let cdf = cdf_from_met_indices(&pairs.iter().map(PairRecord::met_index).collect::<Vec<_>>(), t_grid.len());
    Ok(CdfEstimate {
        n_qubits: sample.n_qubits,
        t_grid,
        threshold: config.threshold,
        cdf,
        pairs,
        excluded,
        bootstrap: None,
    })
}

fn cdf_from_met_indices(met: &[usize], n_t: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_t + 1];
    for &k in met {
        counts[k] += 1;
    }
    let n = met.len() as f64;
    let mut acc = 0;
    (0..n_t)
        .map(|k| {
            acc += counts[k];
            acc as f64 / n
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_resamples: 100_000, confidence: 0.9999, seed: 0 }
    }
}

/// Resamples pairs with replacement and attaches per-duration variances
/// (floored at `1/n_pairs^2`) and percentile confidence bands.
pub fn bootstrap_cdf(estimate: &CdfEstimate, config: &BootstrapConfig) -> Result<CdfEstimate> {
    if config.n_resamples == 0 || !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(Error::InvalidArgument("need resamples and a confidence in (0, 1)".into()));
    }
    let met: Vec<usize> = estimate.pairs.iter().map(PairRecord::met_index).collect();
    let n = met.len();
    let n_t = estimate.t_grid.len();
    let curves: Vec<Vec<f64>> = (0..config.n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let draw: Vec<usize> = (0..n).map(|_| met[rng.random_range(0..n)]).collect();
            cdf_from_met_indices(&draw, n_t)
        })
        .collect();
    let floor = 1.0 / (n as f64 * n as f64);
    let tail = 0.5 * (1.0 - config.confidence);
    let mut variance = Vec::with_capacity(n_t);
    let mut lower = Vec::with_capacity(n_t);
    let mut upper = Vec::with_capacity(n_t);
    let mut col = vec![0.0; config.n_resamples];
    for k in 0..n_t {
        for (c, curve) in col.iter_mut().zip(&curves) {
            *c = curve[k];
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = if col.len() > 1 {
            col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (col.len() - 1) as f64
        } else {
            0.0
        };
        variance.push(var.max(floor));
        col.sort_by(f64::total_cmp);
        lower.push(percentile(&col, tail));
        upper.push(percentile(&col, 1.0 - tail));
    }
    let mut out = estimate.clone();
    out.bootstrap = Some(Bootstrap {
        n_resamples: config.n_resamples,
        confidence: config.confidence,
        seed: config.seed,
        variance,
        lower,
        upper,
    });
    Ok(out)
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Builds an estimate directly from per-pair MET grid indices, for
/// synthetic studies and for refitting stored campaigns.
pub fn estimate_from_met_indices(n_qubits: usize, t_grid: Vec<f64>, threshold: f64, met: &[usize]) -> CdfEstimate {
    let n_t = t_grid.len();
    let pairs = met
        .iter()
        .enumerate()
        .map(|(index, &k)| {
            let status: Vec<PointStatus> = (0..n_t)
                .map(|j| if j >= k { PointStatus::Passed } else { PointStatus::Failed })
                .collect();
            PairRecord {
                index,
                infidelity: vec![None; n_t],
                converged: vec![true; n_t],
                met_bracket: (if k > 0 { t_grid.get(k - 1).copied() } else { None }, t_grid.get(k).copied()),
                status,
            }
        })
        .collect();
    CdfEstimate {
        n_qubits,
        cdf: cdf_from_met_indices(met, n_t),
        t_grid,
        threshold,
        pairs,
        excluded: vec![],
        bootstrap: None,
    }
}

/// One component of a synthetic MET law: an HI distribution with speed `v`
/// drawn with relative `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedComponent {
    pub weight: f64,
    pub v: f64,
}

/// Draws `n_pairs` METs from a mixture of HI laws in dimension `2^n_qubits`
/// and bins them onto the ascending grid `t_grid` (a pair passes from the
/// first grid duration at or above its MET).
pub fn synthetic_estimate(
    n_qubits: usize,
    t_grid: Vec<f64>,
    components: &[SpeedComponent],
    n_pairs: usize,
    seed: u64,
) -> Result<CdfEstimate> {
    if n_qubits == 0 || n_pairs == 0 || components.is_empty() {
        return Err(Error::InvalidArgument("need qubits, pairs and at least one component".into()));
    }
    if components.iter().any(|c| !(c.weight > 0.0 && c.v > 0.0 && c.v.is_finite())) {
        return Err(Error::InvalidArgument("component weights and speeds must be positive".into()));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t_grid must be strictly ascending".into()));
    }
    let d = 1usize << n_qubits;
    let total: f64 = components.iter().map(|c| c.weight).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let met: Vec<usize> = (0..n_pairs)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let comp = components
                .iter()
                .find(|c| {
                    pick -= c.weight;
                    pick < 0.0
                })
                .unwrap_or(&components[components.len() - 1]);
            let u: f64 = rng.random();
            let (mut lo, mut hi) = (0.0, std::f64::consts::PI / comp.v);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if hi_cdf(mid, comp.v, d) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t_grid.iter().position(|&t| t >= hi).unwrap_or(t_grid.len())
        })
        .collect();
    Ok(estimate_from_met_indices(n_qubits, t_grid, 0.0, &met))
}
