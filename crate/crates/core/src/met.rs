//! Scans over the total evolution time to locate minimal evolution times,
//! chained scans across molecular bond distances and device-parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::cost::{CostFunction, PauliSum};
use crate::device::{ControlSchedule, DeviceParams};
use crate::error::{Error, Result};
use crate::grape::{optimize, Init, OptimizationOutcome, OptimizerConfig};
use crate::propagation::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetScanConfig {
    /// Durations in ns, sorted ascending.
    pub t_grid: Vec<f64>,
    /// Pass criterion on `cost - floor`, in the cost's units.
    pub threshold: f64,
    pub n_segments: usize,
    pub scan_direction: ScanDirection,
    /// Seed each duration with the optimum of the previous one.
    pub warm_start: bool,
    /// Bisect the bracket down to this width (ns); `None` keeps the grid MET.
    pub refine_resolution: Option<f64>,
}

impl Default for MetScanConfig {
    fn default() -> Self {
        MetScanConfig {
            t_grid: Vec::new(),
            threshold: 1e-7,
            n_segments: 10,
            scan_direction: ScanDirection::Ascending,
            warm_start: true,
            refine_resolution: Some(0.1),
        }
    }
}

impl MetScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return Err(Error::InvalidArgument("empty duration grid".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("durations must be finite and >= 0".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("duration grid must be strictly ascending".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidArgument("threshold must be positive".into()));
        }
        if self.n_segments == 0 {
            return Err(Error::InvalidArgument("need at least one segment".into()));
        }
        if self.refine_resolution.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::InvalidArgument("refine resolution must be positive".into()));
        }
        Ok(())
    }
}

/// `per_decade` log-spaced durations from `t_min` to `t_max` inclusive.
pub fn log_grid(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    assert!(t_min > 0.0 && t_max > t_min && per_decade > 0);
    let n = ((t_max / t_min).log10() * per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|i| t_min * (t_max / t_min).powf(i as f64 / n as f64))
        .collect()
}

/// Evenly spaced durations from `t_min` to `t_max` inclusive.
pub fn linear_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && t_max > t_min);
    (0..n)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetScanRecord {
    pub t_ns: f64,
    pub best_cost: f64,
    /// `best_cost - floor`.
    pub delta: f64,
    pub passed: bool,
    pub converged: bool,
    /// Added by bisection rather than taken from the grid.
    pub refined: bool,
    pub outcome: OptimizationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetScanResult {
    /// Grid and bisection records, sorted by duration.
    pub records: Vec<MetScanRecord>,
    pub floor: f64,
    pub threshold: f64,
    pub met_estimate: Option<f64>,
    /// Longest failing and shortest passing duration around the MET. The
    /// upper end is `None` when nothing passed.
    pub met_bracket: (Option<f64>, Option<f64>),
    /// Grid durations above the MET whose optimization failed anyway.
    pub failures_above_met: Vec<f64>,
}

impl MetScanResult {
    pub fn record_at(&self, t: f64) -> Option<&MetScanRecord> {
        self.records.iter().find(|r| r.t_ns == t)
    }

    /// Running minimum of `delta` over ascending grid durations.
    pub fn envelope(&self) -> Vec<(f64, f64)> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .filter(|r| !r.refined)
            .map(|r| {
                best = best.min(r.delta);
                (r.t_ns, best)
            })
            .collect()
    }
}

fn run_at(
    params: &DeviceParams,
    cost: &CostFunction,
    initial: &StateVector,
    t: f64,
    m: usize,
    warm: Option<&ControlSchedule>,
    threshold: f64,
    cfg: &OptimizerConfig,
) -> Result<MetScanRecord> {
    let floor = cost.reference_floor();
    let mut cfg = cfg.clone();
    if cfg.target_cost.is_none() {
        // a margin below the threshold keeps warm-start shapes useful
        cfg.target_cost = Some(floor + 0.1 * threshold);
    }
    let init = match warm {
        Some(s) if s.duration_ns > 0.0 => Init::Warm(s.clone()),
        _ => Init::Random,
    };
    let outcome = optimize(params, cost, initial, t, m, &init, &cfg)?;
    let delta = outcome.best_cost - floor;
    Ok(MetScanRecord {
        t_ns: t,
        best_cost: outcome.best_cost,
        delta,
        passed: delta <= threshold,
        converged: outcome.converged,
        refined: false,
        outcome,
    })
}

/// Optimizes at every grid duration in scan order and locates the MET as
/// the shortest passing duration.
pub fn scan_met(
    params: &DeviceParams,
    cost: &CostFunction,
    initial: &StateVector,
    config: &MetScanConfig,
    grape: &OptimizerConfig,
) -> Result<MetScanResult> {
    scan_met_seeded(params, cost, initial, config, grape, None)
}

/// [`scan_met`] where `seeds[i]`, when given, replaces the neighboring-duration
/// warm start at grid point `i`.
fn scan_met_seeded(
    params: &DeviceParams,
    cost: &CostFunction,
    initial: &StateVector,
    config: &MetScanConfig,
    grape: &OptimizerConfig,
    seeds: Option<&[Option<ControlSchedule>]>,
) -> Result<MetScanResult> {
    config.validate()?;
    params.validate()?;
    let n = config.t_grid.len();
    let order: Vec<usize> = match config.scan_direction {
        ScanDirection::Ascending => (0..n).collect(),
        ScanDirection::Descending => (0..n).rev().collect(),
    };
    let mut slots: Vec<Option<MetScanRecord>> = vec![None; n];
    let mut prev: Option<ControlSchedule> = None;
    for &i in &order {
        let t = config.t_grid[i];
        let seeded = seeds.and_then(|s| s[i].as_ref());
        let warm = seeded.or(if config.warm_start { prev.as_ref() } else { None });
        let rec = run_at(params, cost, initial, t, config.n_segments, warm, config.threshold, grape)?;
        prev = Some(rec.outcome.best_schedule.clone());
        slots[i] = Some(rec);
    }
    let mut records: Vec<MetScanRecord> = slots.into_iter().map(|r| r.expect("every grid point visited")).collect();
    let first_pass = records.iter().position(|r| r.passed);
    let mut bracket = match first_pass {
        Some(0) => (None, Some(records[0].t_ns)),
        Some(k) => (Some(records[k - 1].t_ns), Some(records[k].t_ns)),
        None => (records.last().map(|r| r.t_ns), None),
    };
    let failures_above_met = match first_pass {
        Some(k) => records[k..].iter().filter(|r| !r.passed).map(|r| r.t_ns).collect(),
        None => Vec::new(),
    };
    if let (Some(res), Some(k), (Some(mut lo), Some(mut hi))) = (config.refine_resolution, first_pass, bracket) {
        let mut warm = records[k].outcome.best_schedule.clone();
        while hi - lo > res {
            let mid = 0.5 * (lo + hi);
            let mut rec = run_at(params, cost, initial, mid, config.n_segments, Some(&warm), config.threshold, grape)?;
            rec.refined = true;
            if rec.passed {
                hi = mid;
                warm = rec.outcome.best_schedule.clone();
            } else {
                lo = mid;
            }
            records.push(rec);
        }
        bracket = (Some(lo), Some(hi));
        records.sort_by(|a, b| a.t_ns.total_cmp(&b.t_ns));
    }
    Ok(MetScanResult {
        records,
        floor: cost.reference_floor(),
        threshold: config.threshold,
        met_estimate: bracket.1,
        met_bracket: bracket,
        failures_above_met,
    })
}

/// One point of a bond-distance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondScan {
    pub bond_distance_angstrom: f64,
    pub fci_energy: f64,
    pub initial_energy: f64,
    pub scan: MetScanResult,
}

/// Chained scan over a bond-distance series. Entries are visited in
/// `direction` order; every duration of an entry after the first is seeded
/// with the optimum of the previously visited entry at the same duration,
/// next to `grape.n_random_restarts` random starts. The output keeps the
/// series order.
pub fn bond_distance_sweep(
    series: &[PauliSum],
    params: &DeviceParams,
    config: &MetScanConfig,
    direction: ScanDirection,
    grape: &OptimizerConfig,
) -> Result<Vec<BondScan>> {
    let mut distances = Vec::with_capacity(series.len());
    for (i, h) in series.iter().enumerate() {
        let r = h.bond_distance().ok_or_else(|| Error::MissingMetadata(format!("series entry {i}: bond_distance_angstrom")))?;
        h.hf_state().map_err(|e| Error::MissingMetadata(format!("series entry {i}: {e}")))?;
        distances.push(r);
    }
    if distances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("series must be sorted by increasing bond distance".into()));
    }
    let order: Vec<usize> = match direction {
        ScanDirection::Ascending => (0..series.len()).collect(),
        ScanDirection::Descending => (0..series.len()).rev().collect(),
    };
    let mut out: Vec<Option<BondScan>> = vec![None; series.len()];
    let mut prev: Option<Vec<Option<ControlSchedule>>> = None;
    for &i in &order {
        let h = &series[i];
        let psi = h.hf_state()?;
        let cost = CostFunction::pauli(h.clone())?;
        let scan = scan_met_seeded(params, &cost, &psi, config, grape, prev.as_deref())?;
        prev = Some(
            config
                .t_grid
                .iter()
                .map(|&t| scan.record_at(t).map(|r| r.outcome.best_schedule.clone()))
                .collect(),
        );
        out[i] = Some(BondScan {
            bond_distance_angstrom: distances[i],
            fci_energy: cost.reference_floor(),
            initial_energy: cost.value(psi.amplitudes()),
            scan,
        });
    }
    Ok(out.into_iter().map(|b| b.expect("every entry visited")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    IqMax,
    JMax,
    DeltaB,
}

impl SweepAxis {
    pub fn apply(self, base: &DeviceParams, factor: f64) -> DeviceParams {
        match self {
            SweepAxis::IqMax => base.with_iq_scale(factor),
            SweepAxis::JMax => base.with_j_scale(factor),
            SweepAxis::DeltaB => base.with_offset_scale(factor),
        }
    }
}

/// Runs `inner` on the base device rescaled along `axis` by every factor.
/// A factor of exactly 1 passes the base device through unchanged.
pub fn parameter_sweep<T, F>(base: &DeviceParams, axis: SweepAxis, factors: &[f64], inner: F) -> Result<Vec<(f64, T)>>
where
    F: Fn(&DeviceParams) -> Result<T>,
{
    if factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidArgument("sweep factors must be positive".into()));
    }
    factors
        .iter()
        .map(|&f| {
            let p = if f == 1.0 { base.clone() } else { axis.apply(base, f) };
            p.validate()?;
            inner(&p).map(|r| (f, r))
        })
        .collect()
}
