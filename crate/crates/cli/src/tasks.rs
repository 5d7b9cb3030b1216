//! Task preparation (all loading and validation) and execution.

use serde::Serialize;
use serde_json::json;
use spinmet::cost::CostFunction;
use spinmet::gates::{reference_bounds, GateTimeBudget};
use spinmet::grape::OptimizerConfig;
use spinmet::haar::fit::{fit_hi, select_expansion, CdfFit, ModelSelection};
use spinmet::haar::{
    bootstrap_cdf, estimate_cdf, sample_pairs, synthetic_estimate, BootstrapConfig, CampaignConfig, CdfEstimate, PointStatus,
    StatePairSample,
};
use spinmet::met::{bond_distance_sweep, parameter_sweep, scan_met, MetScanConfig, MetScanResult, ScanDirection, SweepAxis};
use spinmet::{DeviceParams, PauliSum, StateVector};

use crate::artifacts::{num, opt, Artifacts};
use crate::config::{FitOptions, FitSource, LoadedConfig, Target, Task};
use crate::error::CliError;

pub enum Prepared {
    MetScan {
        params: DeviceParams,
        instance: String,
        cost: CostFunction,
        initial: StateVector,
        scan: MetScanConfig,
        optimizer: OptimizerConfig,
    },
    BondSweep {
        params: DeviceParams,
        series: Vec<PauliSum>,
        scan: MetScanConfig,
        direction: ScanDirection,
        optimizer: OptimizerConfig,
    },
    ParamSweep {
        params: DeviceParams,
        axis: SweepAxis,
        factors: Vec<f64>,
        cost: CostFunction,
        initial: StateVector,
        scan: MetScanConfig,
        optimizer: OptimizerConfig,
    },
    Haar {
        params: DeviceParams,
        sample: StatePairSample,
        campaign: CampaignConfig,
        optimizer: OptimizerConfig,
        bootstrap: Option<BootstrapConfig>,
        fit: Option<FitOptions>,
        levels: Vec<f64>,
    },
    Fit {
        estimate: CdfEstimate,
        bootstrap: BootstrapConfig,
        fit: FitOptions,
    },
    Bounds(GateTimeBudget),
}

fn target_label(t: &Target) -> String {
    match t {
        Target::State(b) => format!("state:{b}"),
        Target::Amplitudes(_) => "amplitudes".into(),
        Target::Hamiltonian(p) => format!("hamiltonian:{}", p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()),
    }
}

fn target_qubits(t: &Target, loaded: &LoadedConfig) -> Option<usize> {
    match t {
        Target::State(b) => Some(b.len()),
        Target::Amplitudes(a) => Some(a.len().max(1).trailing_zeros() as usize),
        Target::Hamiltonian(p) => PauliSum::load(&loaded.resolve(p)).ok().map(|h| h.n_qubits),
    }
}

fn check_scan(scan: &MetScanConfig) -> Result<(), CliError> {
    scan.validate().map_err(CliError::validation)
}

fn check_dims(params: &DeviceParams, dim: usize) -> Result<(), CliError> {
    if params.dim() != dim {
        return Err(CliError::Validation(format!("device has dimension {}, problem {dim}", params.dim())));
    }
    Ok(())
}

/// Loads every referenced file and validates every block without running.
pub fn prepare(loaded: &LoadedConfig) -> Result<Prepared, CliError> {
    let seed = loaded.config.seed;
    if loaded.config.threads == Some(0) {
        return Err(CliError::Validation("threads must be positive".into()));
    }
    match &loaded.config.task {
        Task::MetScan { initial, target, scan, optimizer } => {
            let params = loaded.device(target_qubits(target, loaded))?;
            let (cost, initial) = loaded.problem(target, initial.as_deref())?;
            check_dims(&params, cost.dim())?;
            check_scan(scan)?;
            Ok(Prepared::MetScan {
                params,
                instance: target_label(target),
                cost,
                initial,
                scan: scan.clone(),
                optimizer: loaded.optimizer(optimizer)?,
            })
        }
        Task::BondSweep { series, scan, direction, optimizer } => {
            let series = PauliSum::load_series(&loaded.resolve(series)).map_err(CliError::config)?;
            let n = series.first().map(|h| h.n_qubits).ok_or_else(|| CliError::Validation("series is empty".into()))?;
            let params = loaded.device(Some(n))?;
            for h in &series {
                check_dims(&params, h.dim())?;
            }
            check_scan(scan)?;
            Ok(Prepared::BondSweep {
                params,
                series,
                scan: scan.clone(),
                direction: *direction,
                optimizer: loaded.optimizer(optimizer)?,
            })
        }
        Task::ParamSweep { axis, factors, initial, target, scan, optimizer } => {
            let params = loaded.device(target_qubits(target, loaded))?;
            let (cost, initial) = loaded.problem(target, initial.as_deref())?;
            check_dims(&params, cost.dim())?;
            check_scan(scan)?;
            if factors.is_empty() || factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(CliError::Validation("factors must be positive".into()));
            }
            Ok(Prepared::ParamSweep {
                params,
                axis: *axis,
                factors: factors.clone(),
                cost,
                initial,
                scan: scan.clone(),
                optimizer: loaded.optimizer(optimizer)?,
            })
        }
        Task::HaarCampaign { n_pairs, campaign, optimizer, bootstrap, fit, infidelity_levels } => {
            let params = loaded.device(None)?;
            if campaign.t_grid.is_empty() || campaign.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(CliError::Validation("campaign.t_grid must hold nonnegative durations".into()));
            }
            if !(campaign.threshold > 0.0) || campaign.n_segments == 0 {
                return Err(CliError::Validation("campaign needs a positive threshold and segments".into()));
            }
            let sample = sample_pairs(params.n_qubits, *n_pairs, seed).map_err(CliError::validation)?;
            let bootstrap = bootstrap.map(|b| BootstrapConfig { seed, ..b }).or(Some(BootstrapConfig { seed, ..Default::default() }));
            if let Some(b) = &bootstrap {
                check_bootstrap(b)?;
            }
            Ok(Prepared::Haar {
                params,
                sample,
                campaign: campaign.clone(),
                optimizer: loaded.optimizer(optimizer)?,
                bootstrap,
                fit: fit.clone(),
                levels: infidelity_levels.clone(),
            })
        }
        Task::Fit { source, bootstrap, fit } => {
            let estimate = match source {
                FitSource::Estimate(p) => {
                    let path = loaded.resolve(p);
                    let s = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<CdfEstimate>(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                }
                FitSource::Synthetic { n_qubits, n_pairs, t_grid, components } => {
                    synthetic_estimate(*n_qubits, t_grid.clone(), components, *n_pairs, seed).map_err(CliError::validation)?
                }
            };
            let bootstrap = BootstrapConfig { seed, ..bootstrap.unwrap_or_default() };
            check_bootstrap(&bootstrap)?;
            Ok(Prepared::Fit { estimate, bootstrap, fit: fit.clone() })
        }
        Task::Bounds { pi_gate_time_ns, swap_alpha_max_time_ns } => {
            Ok(Prepared::Bounds(reference_bounds(*pi_gate_time_ns, *swap_alpha_max_time_ns).map_err(CliError::validation)?))
        }
    }
}

fn check_bootstrap(b: &BootstrapConfig) -> Result<(), CliError> {
    if b.n_resamples == 0 || !(b.confidence > 0.0 && b.confidence < 1.0) {
        return Err(CliError::Validation("bootstrap needs resamples and a confidence in (0, 1)".into()));
    }
    Ok(())
}

/// Outcome of an executed task, for the manifest and the console.
pub struct Executed {
    pub lines: Vec<String>,
    pub unconverged_rows: usize,
}

const SCAN_HEADER: [&str; 12] = [
    "task", "instance", "t_ns", "restart", "start_kind", "iterations", "best_cost", "delta", "envelope_delta", "passed", "converged",
    "refined",
];
const MET_HEADER: [&str; 7] = ["task", "instance", "met_ns", "bracket_low_ns", "bracket_high_ns", "failures_above_met", "floor"];

#[derive(Serialize)]
struct MetSummary {
    instance: String,
    met_ns: Option<f64>,
    bracket_ns: (Option<f64>, Option<f64>),
    failures_above_met: Vec<f64>,
}

fn scan_rows(task: &str, instance: &str, r: &MetScanResult, scan: &mut Vec<Vec<String>>, met: &mut Vec<Vec<String>>) -> usize {
    let env = r.envelope();
    let mut unconverged = 0;
    for rec in &r.records {
        let e = env.iter().find(|(t, _)| *t == rec.t_ns && !rec.refined).map(|x| x.1);
        let kind = rec
            .outcome
            .starts
            .iter()
            .find(|s| s.index == rec.outcome.restart_index_of_best)
            .map(|s| serde_json::to_value(s.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .unwrap_or_default();
        unconverged += usize::from(!rec.converged);
        scan.push(vec![
            task.into(),
            instance.into(),
            num(rec.t_ns),
            rec.outcome.restart_index_of_best.to_string(),
            kind,
            rec.outcome.iterations.to_string(),
            num(rec.best_cost),
            num(rec.delta),
            opt(e),
            rec.passed.to_string(),
            rec.converged.to_string(),
            rec.refined.to_string(),
        ]);
    }
    met.push(vec![
        task.into(),
        instance.into(),
        opt(r.met_estimate),
        opt(r.met_bracket.0),
        opt(r.met_bracket.1),
        r.failures_above_met.len().to_string(),
        num(r.floor),
    ]);
    unconverged
}

fn met_line(instance: &str, r: &MetScanResult) -> String {
    match r.met_estimate {
        Some(m) => format!("{instance}: MET = {m} ns (bracket {} .. {m})", opt(r.met_bracket.0)),
        None => format!("{instance}: no duration on the grid passed"),
    }
}

fn write_scans(out: &mut Artifacts, task: &str, scans: &[(String, MetScanResult)]) -> Result<Executed, CliError> {
    let (mut scan, mut met) = (Vec::new(), Vec::new());
    let mut unconverged = 0;
    for (inst, r) in scans {
        unconverged += scan_rows(task, inst, r, &mut scan, &mut met);
    }
    out.csv("scan.csv", &SCAN_HEADER, &scan)?;
    out.csv("met.csv", &MET_HEADER, &met)?;
    let full: Vec<_> = scans.iter().map(|(i, r)| json!({"instance": i, "scan": r})).collect();
    out.json("scans.json", &full)?;
    let summary: Vec<MetSummary> = scans
        .iter()
        .map(|(i, r)| MetSummary {
            instance: i.clone(),
            met_ns: r.met_estimate,
            bracket_ns: r.met_bracket,
            failures_above_met: r.failures_above_met.clone(),
        })
        .collect();
    out.json("summary.json", &json!({"task": task, "instances": summary}))?;
    Ok(Executed { lines: scans.iter().map(|(i, r)| met_line(i, r)).collect(), unconverged_rows: unconverged })
}

#[derive(Serialize)]
struct FitReport {
    hi: CdfFit,
    selection: ModelSelection,
}

fn fit_estimate(estimate: &CdfEstimate, l_max: usize) -> Result<FitReport, CliError> {
    let data = estimate.fit_data().map_err(CliError::validation)?;
    let d = estimate.dim();
    let hi = fit_hi(&data, d).map_err(CliError::validation)?;
    let selection = select_expansion(&data, d, l_max).map_err(CliError::validation)?;
    Ok(FitReport { hi, selection })
}

fn write_fit(out: &mut Artifacts, estimate: &CdfEstimate, fit: &FitReport) -> Result<Vec<String>, CliError> {
    out.json("fit.json", fit)?;
    let rows: Vec<Vec<String>> = fit
        .selection
        .trace
        .iter()
        .map(|s| vec![s.l.to_string(), s.n_terms.to_string(), s.n_parameters.to_string(), num(s.chi2_per_dof)])
        .collect();
    out.csv("selection.csv", &["l", "n_terms", "n_parameters", "chi2_per_dof"], &rows)?;
    let var = estimate.bootstrap.as_ref().map(|b| b.variance.clone()).unwrap_or_default();
    let rows: Vec<Vec<String>> = estimate
        .t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            vec![
                num(t),
                num(estimate.cdf[k]),
                opt(var.get(k).copied()),
                num(fit.hi.cdf(t)),
                num(fit.selection.chosen.cdf(t)),
            ]
        })
        .collect();
    out.csv("curve.csv", &["t_ns", "cdf", "variance", "hi_model", "expansion_model"], &rows)?;
    let c = &fit.selection.chosen;
    Ok(vec![
        format!("HI fit: v = {} rad/ns (max MET {} ns), chi2/dof = {}", fit.hi.v, fit.hi.max_met(), fit.hi.chi2_per_dof),
        format!(
            "expansion: {} terms, v_tilde = {} rad/ns, chi2/dof = {}, stop = {:?}",
            c.n_terms(),
            c.v,
            c.chi2_per_dof,
            fit.selection.stop
        ),
    ])
}

fn write_estimate(out: &mut Artifacts, est: &CdfEstimate) -> Result<(), CliError> {
    let b = est.bootstrap.as_ref();
    let rows: Vec<Vec<String>> = est
        .t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            vec![
                num(t),
                num(est.cdf[k]),
                opt(b.map(|b| b.variance[k])),
                opt(b.map(|b| b.lower[k])),
                opt(b.map(|b| b.upper[k])),
            ]
        })
        .collect();
    out.csv("cdf.csv", &["t_ns", "cdf", "variance", "lower", "upper"], &rows)?;
    out.json("estimate.json", est)
}

fn repaired_cells(est: &CdfEstimate) -> usize {
    est.pairs
        .iter()
        .map(|p| p.repaired().iter().zip(&p.status).filter(|(r, s)| **r && **s != PointStatus::Passed).count())
        .sum()
}

pub fn execute(prepared: Prepared, out: &mut Artifacts) -> Result<Executed, CliError> {
    match prepared {
        Prepared::MetScan { params, instance, cost, initial, scan, optimizer } => {
            let r = scan_met(&params, &cost, &initial, &scan, &optimizer).map_err(CliError::internal)?;
            write_scans(out, "met-scan", &[(instance, r)])
        }
        Prepared::BondSweep { params, series, scan, direction, optimizer } => {
            let rows = bond_distance_sweep(&series, &params, &scan, direction, &optimizer).map_err(CliError::validation)?;
            let scans: Vec<(String, MetScanResult)> =
                rows.into_iter().map(|b| (format!("r={}", b.bond_distance_angstrom), b.scan)).collect();
            write_scans(out, "bond-sweep", &scans)
        }
        Prepared::ParamSweep { params, axis, factors, cost, initial, scan, optimizer } => {
            let rows = parameter_sweep(&params, axis, &factors, |p| scan_met(p, &cost, &initial, &scan, &optimizer))
                .map_err(CliError::internal)?;
            let name = serde_json::to_value(axis).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let scans: Vec<(String, MetScanResult)> = rows.into_iter().map(|(f, r)| (format!("{name}={f}"), r)).collect();
            write_scans(out, "param-sweep", &scans)
        }
        Prepared::Haar { params, sample, campaign, optimizer, bootstrap, fit, levels } => {
            let mut est = estimate_cdf(&sample, &params, &campaign, &optimizer).map_err(CliError::internal)?;
            if let Some(b) = &bootstrap {
                est = bootstrap_cdf(&est, b).map_err(CliError::internal)?;
            }
            let mut rows = Vec::new();
            let mut unconverged = 0;
            for p in &est.pairs {
                let rep = p.repaired();
                for (k, &t) in est.t_grid.iter().enumerate() {
                    let status = match p.status[k] {
                        PointStatus::Passed => "passed",
                        PointStatus::Failed => "failed",
                        PointStatus::Skipped => "skipped",
                    };
                    unconverged += usize::from(p.status[k] != PointStatus::Skipped && !p.converged[k]);
                    rows.push(vec![
                        p.index.to_string(),
                        num(t),
                        opt(p.infidelity[k]),
                        status.into(),
                        p.converged[k].to_string(),
                        rep[k].to_string(),
                    ]);
                }
            }
            out.csv("pairs.csv", &["pair", "t_ns", "infidelity", "status", "converged", "counted_passed"], &rows)?;
            write_estimate(out, &est)?;
            if !levels.is_empty() {
                let rows: Vec<Vec<String>> = est
                    .infidelity_table(&levels, 10)
                    .into_iter()
                    .map(|(t, d, p, x)| vec![num(t), num(d), num(p), x.to_string()])
                    .collect();
                out.csv("infidelity.csv", &["t_ns", "infidelity_level", "fraction_below", "extrapolated"], &rows)?;
            }
            let mut lines = vec![
                format!("{} pairs, {} excluded, {} repaired cells", est.pairs.len(), est.excluded.len(), repaired_cells(&est)),
                format!("maximal MET: {}", est.max_met().map(|m| format!("{m} ns")).unwrap_or("not reached on the grid".into())),
            ];
            let fitted = match (&fit, est.bootstrap.is_some()) {
                (Some(f), true) => {
                    let r = fit_estimate(&est, f.l_max)?;
                    lines.extend(write_fit(out, &est, &r)?);
                    Some(r)
                }
                _ => None,
            };
            let ci_width = est.bootstrap.as_ref().map(|b| b.upper.iter().zip(&b.lower).map(|(u, l)| u - l).fold(0.0, f64::max));
            out.json(
                "summary.json",
                &json!({
                    "task": "haar-campaign",
                    "n_qubits": est.n_qubits,
                    "n_pairs": est.pairs.len(),
                    "excluded": est.excluded.len(),
                    "repaired_cells": repaired_cells(&est),
                    "max_met_ns": est.max_met(),
                    "max_ci_width": ci_width,
                    "fit": fitted.as_ref().map(|r| json!({
                        "hi_v": r.hi.v,
                        "hi_chi2_per_dof": r.hi.chi2_per_dof,
                        "v_tilde": r.selection.chosen.v,
                        "chi2_per_dof": r.selection.chosen.chi2_per_dof,
                    })),
                }),
            )?;
            Ok(Executed { lines, unconverged_rows: unconverged })
        }
        Prepared::Fit { estimate, bootstrap, fit } => {
            let est = if estimate.bootstrap.is_some() {
                estimate
            } else {
                bootstrap_cdf(&estimate, &bootstrap).map_err(CliError::internal)?
            };
            write_estimate(out, &est)?;
            let r = fit_estimate(&est, fit.l_max)?;
            let lines = write_fit(out, &est, &r)?;
            out.json(
                "summary.json",
                &json!({
                    "task": "fit",
                    "d": est.dim(),
                    "hi_v": r.hi.v,
                    "hi_chi2_per_dof": r.hi.chi2_per_dof,
                    "v_tilde": r.selection.chosen.v,
                    "chi2_per_dof": r.selection.chosen.chi2_per_dof,
                    "trace": r.selection.trace,
                    "stop": r.selection.stop,
                }),
            )?;
            Ok(Executed { lines, unconverged_rows: 0 })
        }
        Prepared::Bounds(b) => {
            let rows = vec![
                vec!["one_qubit_max".into(), num(b.one_qubit_max)],
                vec!["two_qubit_max".into(), num(b.two_qubit_max)],
                vec!["two_qubit_from_01_max".into(), num(b.two_qubit_from_01_max)],
                vec!["two_qubit_min".into(), num(b.two_qubit_min)],
            ];
            out.csv("bounds.csv", &["bound", "ns"], &rows)?;
            out.json("summary.json", &json!({"task": "bounds", "budget": b}))?;
            Ok(Executed { lines: bounds_lines(&b), unconverged_rows: 0 })
        }
    }
}

pub fn bounds_lines(b: &GateTimeBudget) -> Vec<String> {
    vec![
        format!("pi gate {} ns, maximal power of SWAP {} ns", b.pi_gate_time, b.swap_alpha_max_time),
        format!("one qubit, any state:        {} ns", b.one_qubit_max),
        format!("two qubits, any state:       {} ns", b.two_qubit_max),
        format!("two qubits, from |01>:       {} ns", b.two_qubit_from_01_max),
        format!("two qubits, lower bound:     {} ns", b.two_qubit_min),
    ]
}
