//! Pulse optimization with exact gradients.
//!
//! The gradient is computed by an adjoint sweep over every substep
//! exponential of the propagator, differentiating each exponential through
//! its eigendecomposition.

pub mod lbfgs;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::device::{ControlSchedule, DeviceParams, FrameModel};
use crate::error::{Error, Result};
use crate::linalg::{eigh, CMatrix, Eigh, ZERO};
use crate::propagation::{substep_count, PropagationOptions, StateVector, SubstepNodes, EXP_WEIGHTS};

pub use lbfgs::{LbfgsSettings, StopReason};

/// Partial derivatives of the cost, shaped like a [`ControlSchedule`].
/// Units: per MHz for I/Q, per GHz for J and carriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleGradient {
    pub i_amps: Vec<Vec<f64>>,
    pub q_amps: Vec<Vec<f64>>,
    pub j_amps: Vec<Vec<f64>>,
    pub carriers: Vec<f64>,
}

impl ScheduleGradient {
    fn zeros_like(s: &ControlSchedule) -> Self {
        ScheduleGradient {
            i_amps: s.i_amps_mhz.iter().map(|r| vec![0.0; r.len()]).collect(),
            q_amps: s.q_amps_mhz.iter().map(|r| vec![0.0; r.len()]).collect(),
            j_amps: s.j_amps_ghz.iter().map(|r| vec![0.0; r.len()]).collect(),
            carriers: vec![0.0; s.carriers_ghz.len()],
        }
    }
}

/// Upper bound on cached complex entries of forward-pass eigendecompositions.
const CACHE_LIMIT: usize = 1 << 22;

/// Cost evaluator bound to one device, cost and initial state.
pub struct Evaluator<'a> {
    model: FrameModel,
    cost: &'a CostFunction,
    initial: Vec<Complex64>,
    opts: PropagationOptions,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        params: &DeviceParams,
        cost: &'a CostFunction,
        initial: &StateVector,
        opts: &PropagationOptions,
    ) -> Result<Self> {
        params.validate()?;
        if initial.dim() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: initial.dim(),
            });
        }
        if cost.dim() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: cost.dim(),
            });
        }
        Ok(Evaluator {
            model: FrameModel::new(params, opts.rwa),
            cost,
            initial: initial.amplitudes().to_vec(),
            opts: opts.clone(),
        })
    }

    pub fn value(&self, s: &ControlSchedule) -> f64 {
        self.run(s, false).0
    }

    pub fn value_and_gradient(&self, s: &ControlSchedule) -> (f64, ScheduleGradient) {
        let (v, g) = self.run(s, true);
        (v, g.expect("gradient requested"))
    }

    /// `(S_x, S_y)` coefficients of the two exponentials of a substep.
    fn drives(&self, s: &ControlSchedule, m: usize, nodes: &SubstepNodes) -> [[f64; 2]; 2] {
        let xy = [
            self.model.drive_xy(s, m, nodes.times[0]),
            self.model.drive_xy(s, m, nodes.times[1]),
        ];
        EXP_WEIGHTS.map(|w| [w[0] * xy[0][0] + w[1] * xy[1][0], w[0] * xy[0][1] + w[1] * xy[1][1]])
    }

    fn run(&self, s: &ControlSchedule, want_grad: bool) -> (f64, Option<ScheduleGradient>) {
        let d = self.model.dim;
        let t0 = self.opts.time_offset_ns;
        let mut chi: Vec<Complex64> = self.initial.clone();
        for (c, p) in chi.iter_mut().zip(self.model.frame_phases(t0)) {
            *c *= p.conj();
        }
        if s.duration_ns <= 0.0 {
            let v = self.cost.value(&self.initial);
            return (v, want_grad.then(|| ScheduleGradient::zeros_like(s)));
        }
        let n_sub = substep_count(&self.model, s, &self.opts);
        let dt = s.segment_duration();
        let h = dt / n_sub as f64;
        let scale = 2.0 * PI * h;
        let n_exp = s.n_segments * n_sub * 2;
        let use_cache = want_grad && n_exp * (d * d + d) <= CACHE_LIMIT;
        let mut cache: Vec<Eigh> = Vec::with_capacity(if use_cache { n_exp } else { 0 });
        let mut buf = vec![ZERO; d];
        let half = Complex64::new(0.5, 0.0);
        for m in 0..s.n_segments {
            let k_half = self.model.static_part(s, m) * half;
            for sub in 0..n_sub {
                let nodes = SubstepNodes::new(t0 + m as f64 * dt + sub as f64 * h, h);
                for drive in self.drives(s, m, &nodes) {
                    let e = eigh(&self.model.with_drive(&k_half, drive));
                    e.apply_exp(scale, &mut chi, &mut buf);
                    if use_cache {
                        cache.push(e);
                    }
                }
            }
        }
        let end_phase = self.model.frame_phases(t0 + s.duration_ns);
        let psi: Vec<Complex64> = chi.iter().zip(&end_phase).map(|(c, p)| c * p).collect();
        let value = self.cost.value(&psi);
        if !want_grad {
            return (value, None);
        }

        let mut grad = ScheduleGradient::zeros_like(s);
        let mut lam: Vec<Complex64> = self
            .cost
            .apply_operator(&psi)
            .iter()
            .zip(&end_phase)
            .map(|(l, p)| l * p.conj())
            .collect();
        let mut l_eig = vec![ZERO; d];
        let mut c_eig = vec![ZERO; d];
        let n_bonds = self.model.exchange.len();
        let mut g_j = vec![0.0; n_bonds];
        for m in (0..s.n_segments).rev() {
            let k_half = if use_cache { None } else { Some(self.model.static_part(s, m) * half) };
            for sub in (0..n_sub).rev() {
                let nodes = SubstepNodes::new(t0 + m as f64 * dt + sub as f64 * h, h);
                let drives = if use_cache { None } else { Some(self.drives(s, m, &nodes)) };
                for e_idx in (0..2).rev() {
                    let e = match (&k_half, &drives) {
                        (Some(k), Some(dr)) => eigh(&self.model.with_drive(k, dr[e_idx])),
                        _ => cache.pop().expect("cached eigendecomposition"),
                    };
                    e.to_eigenbasis(&lam, &mut l_eig);
                    e.to_eigenbasis(&chi, &mut c_eig);
                    // step back: c holds V^dagger chi_before, l holds V^dagger lambda_before
                    for a in 0..d {
                        let back = Complex64::from_polar(1.0, scale * e.values[a]);
                        c_eig[a] *= back;
                    }
                    let phi = e.frechet_kernel(scale);
                    let w = CMatrix::from_fn(d, d, |a, b| l_eig[a].conj() * phi[(a, b)] * c_eig[b]);
                    let z = e.vectors.map(|x| x.conj()) * w * e.vectors.transpose();
                    let gx = 2.0 * scale * self.model.sx.contract(&z).im;
                    let gy = 2.0 * scale * self.model.sy.contract(&z).im;
                    for (j, op) in self.model.exchange.iter().enumerate() {
                        g_j[j] = 2.0 * scale * op.contract(&z).im;
                        grad.j_amps[j][m] += 0.5 * g_j[j];
                    }
                    let wts = EXP_WEIGHTS[e_idx];
                    for k in 0..s.n_tones() {
                        let f = s.carriers_ghz[k];
                        let amp_i = s.i_amps_mhz[k][m] * 1e-3;
                        let amp_q = s.q_amps_mhz[k][m] * 1e-3;
                        for (n, &wn) in wts.iter().enumerate() {
                            let tc = self.model.tone_coeffs(f, nodes.times[n]);
                            grad.i_amps[k][m] += 1e-3 * wn * (tc.i[0] * gx + tc.i[1] * gy);
                            grad.q_amps[k][m] += 1e-3 * wn * (tc.q[0] * gx + tc.q[1] * gy);
                            grad.carriers[k] += wn
                                * (amp_i * (tc.di_df[0] * gx + tc.di_df[1] * gy)
                                    + amp_q * (tc.dq_df[0] * gx + tc.dq_df[1] * gy));
                        }
                    }
                    e.from_eigenbasis(&c_eig, &mut chi);
                    for a in 0..d {
                        l_eig[a] *= Complex64::from_polar(1.0, scale * e.values[a]);
                    }
                    e.from_eigenbasis(&l_eig, &mut lam);
                }
            }
        }
        (value, Some(grad))
    }
}

/// Cost of the propagated state and its exact gradient.
pub fn cost_and_gradient(
    params: &DeviceParams,
    schedule: &ControlSchedule,
    cost: &CostFunction,
    initial: &StateVector,
    opts: &PropagationOptions,
) -> Result<(f64, ScheduleGradient)> {
    schedule.validate(params)?;
    let ev = Evaluator::new(params, cost, initial, opts)?;
    Ok(ev.value_and_gradient(schedule))
}

/// Starting point of an optimization.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    Random,
    Warm(ControlSchedule),
}

/// Treatment of carrier frequencies during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierMode {
    /// Optimized jointly with the amplitudes.
    Optimize,
    /// Kept at their initial values.
    Frozen,
    /// Fixed on a uniform grid across the carrier window.
    UniformGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub gradient_norm_tol: f64,
    pub relative_cost_tol: f64,
    /// Random starts run in addition to the given initialization.
    pub n_random_restarts: usize,
    pub seed: u64,
    pub memory: usize,
    pub max_line_search: usize,
    /// Stop a start as soon as its cost reaches this value.
    pub target_cost: Option<f64>,
    pub optimize_drives: bool,
    pub optimize_exchange: bool,
    pub carrier_mode: CarrierMode,
    /// Random I/Q (and J) starts are drawn within this fraction of the bound.
    pub init_fraction: f64,
    /// Half-width of the uniform jitter of random carriers around resonance.
    pub carrier_jitter_ghz: f64,
    pub propagation: PropagationOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 2000,
            gradient_norm_tol: 1e-9,
            relative_cost_tol: 1e-10,
            n_random_restarts: 0,
            seed: 0,
            memory: 10,
            max_line_search: 40,
            target_cost: None,
            optimize_drives: true,
            optimize_exchange: true,
            carrier_mode: CarrierMode::Optimize,
            init_fraction: 0.25,
            carrier_jitter_ghz: 0.002,
            propagation: PropagationOptions::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gradient_norm_tol > 0.0
            && self.relative_cost_tol >= 0.0
            && self.memory > 0
            && (0.0..=1.0).contains(&self.init_fraction)
            && self.carrier_jitter_ghz >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("optimizer tolerances must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Zero,
    Random,
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub kind: StartKind,
    pub final_cost: f64,
    pub iterations: usize,
    pub reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub best_schedule: ControlSchedule,
    pub best_cost: f64,
    pub cost_history: Vec<f64>,
    pub gradient_norm_final: f64,
    pub restart_index_of_best: usize,
    pub converged: bool,
    pub iterations: usize,
    pub starts: Vec<StartSummary>,
}

/// Maps schedules to normalized optimizer variables and back.
struct Layout {
    n_tones: usize,
    n_bonds: usize,
    m: usize,
    drives: bool,
    exchange: bool,
    carriers: bool,
    iq_max: f64,
    j_max: f64,
    b: f64,
    carrier_scale: f64,
    window: [f64; 2],
}

impl Layout {
    fn new(params: &DeviceParams, m: usize, cfg: &OptimizerConfig, duration: f64) -> Self {
        Layout {
            n_tones: params.n_signals,
            n_bonds: params.n_bonds(),
            m,
            drives: cfg.optimize_drives,
            exchange: cfg.optimize_exchange && params.j_max_ghz > 0.0 && params.n_bonds() > 0,
            carriers: cfg.carrier_mode == CarrierMode::Optimize,
            iq_max: params.iq_max_mhz,
            j_max: params.j_max_ghz,
            b: params.b_ghz,
            carrier_scale: duration.max(1.0),
            window: params.carrier_window_ghz,
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        if self.drives {
            lo.extend(std::iter::repeat_n(-1.0, 2 * self.n_tones * self.m));
            hi.extend(std::iter::repeat_n(1.0, 2 * self.n_tones * self.m));
        }
        if self.exchange {
            lo.extend(std::iter::repeat_n(0.0, self.n_bonds * self.m));
            hi.extend(std::iter::repeat_n(1.0, self.n_bonds * self.m));
        }
        if self.carriers {
            for _ in 0..self.n_tones {
                lo.push((self.window[0] - self.b) * self.carrier_scale);
                hi.push((self.window[1] - self.b) * self.carrier_scale);
            }
        }
        (lo, hi)
    }

    fn pack(&self, s: &ControlSchedule) -> Vec<f64> {
        let mut x = Vec::new();
        if self.drives {
            for rows in [&s.i_amps_mhz, &s.q_amps_mhz] {
                for row in rows.iter() {
                    x.extend(row.iter().map(|v| v / self.iq_max));
                }
            }
        }
        if self.exchange {
            for row in &s.j_amps_ghz {
                x.extend(row.iter().map(|v| v / self.j_max));
            }
        }
        if self.carriers {
            x.extend(s.carriers_ghz.iter().map(|f| (f - self.b) * self.carrier_scale));
        }
        x
    }

    fn unpack(&self, x: &[f64], s: &mut ControlSchedule) {
        let mut it = x.iter();
        if self.drives {
            for rows in [&mut s.i_amps_mhz, &mut s.q_amps_mhz] {
                for row in rows.iter_mut() {
                    for v in row.iter_mut() {
                        *v = (it.next().unwrap() * self.iq_max).clamp(-self.iq_max, self.iq_max);
                    }
                }
            }
        }
        if self.exchange {
            for row in s.j_amps_ghz.iter_mut() {
                for v in row.iter_mut() {
                    *v = (it.next().unwrap() * self.j_max).clamp(0.0, self.j_max);
                }
            }
        }
        if self.carriers {
            for f in s.carriers_ghz.iter_mut() {
                *f = (self.b + it.next().unwrap() / self.carrier_scale).clamp(self.window[0], self.window[1]);
            }
        }
    }

    fn pack_gradient(&self, g: &ScheduleGradient, out: &mut [f64]) {
        let mut k = 0;
        if self.drives {
            for rows in [&g.i_amps, &g.q_amps] {
                for row in rows.iter() {
                    for v in row {
                        out[k] = v * self.iq_max;
                        k += 1;
                    }
                }
            }
        }
        if self.exchange {
            for row in &g.j_amps {
                for v in row {
                    out[k] = v * self.j_max;
                    k += 1;
                }
            }
        }
        if self.carriers {
            for v in &g.carriers {
                out[k] = v / self.carrier_scale;
                k += 1;
            }
        }
    }
}

/// Deterministic generator for start `index` of a run seeded with `seed`.
pub fn start_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn initial_schedule(
    params: &DeviceParams,
    duration: f64,
    m: usize,
    kind: &Init,
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> ControlSchedule {
    let mut s = match kind {
        Init::Warm(w) => w.resampled(duration, m),
        _ => ControlSchedule::zeros(params, duration, m),
    };
    if *kind == Init::Random {
        let a = cfg.init_fraction * params.iq_max_mhz;
        if cfg.optimize_drives {
            for rows in [&mut s.i_amps_mhz, &mut s.q_amps_mhz] {
                for row in rows.iter_mut() {
                    for v in row.iter_mut() {
                        *v = rng.random_range(-a..=a);
                    }
                }
            }
        }
        if cfg.optimize_exchange {
            let jm = cfg.init_fraction * params.j_max_ghz;
            for row in s.j_amps_ghz.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(0.0..=jm);
                }
            }
        }
        if cfg.carrier_mode == CarrierMode::Optimize {
            let [lo, hi] = params.carrier_window_ghz;
            for (k, f) in s.carriers_ghz.iter_mut().enumerate() {
                let c = params.resonance_ghz(k % params.n_qubits);
                let jit = cfg.carrier_jitter_ghz;
                let v = if jit > 0.0 { c + rng.random_range(-jit..=jit) } else { c };
                *f = v.clamp(lo, hi);
            }
        }
    }
    if !cfg.optimize_drives && !matches!(kind, Init::Warm(_)) {
        for rows in [&mut s.i_amps_mhz, &mut s.q_amps_mhz] {
            for row in rows.iter_mut() {
                row.fill(0.0);
            }
        }
    }
    if cfg.carrier_mode == CarrierMode::UniformGrid {
        let [lo, hi] = params.carrier_window_ghz;
        let n = s.carriers_ghz.len();
        for (k, f) in s.carriers_ghz.iter_mut().enumerate() {
            *f = lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
        }
    }
    // clamp anything a warm start may carry outside the bounds
    for rows in [&mut s.i_amps_mhz, &mut s.q_amps_mhz] {
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v = v.clamp(-params.iq_max_mhz, params.iq_max_mhz);
            }
        }
    }
    for row in s.j_amps_ghz.iter_mut() {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, params.j_max_ghz);
        }
    }
    let [lo, hi] = params.carrier_window_ghz;
    for f in s.carriers_ghz.iter_mut() {
        *f = f.clamp(lo, hi);
    }
    s
}

/// Runs every start and keeps the lowest final cost (ties go to the
/// earliest start).
pub fn optimize(
    params: &DeviceParams,
    cost: &CostFunction,
    initial: &StateVector,
    duration_ns: f64,
    n_segments: usize,
    init: &Init,
    cfg: &OptimizerConfig,
) -> Result<OptimizationOutcome> {
    cfg.validate()?;
    if !(duration_ns >= 0.0) || n_segments == 0 {
        return Err(Error::InvalidArgument(format!(
            "need T >= 0 and M >= 1, got T = {duration_ns}, M = {n_segments}"
        )));
    }
    let ev = Evaluator::new(params, cost, initial, &cfg.propagation)?;
    if duration_ns == 0.0 {
        let c0 = cost.value(initial.amplitudes());
        return Ok(OptimizationOutcome {
            best_schedule: ControlSchedule::zeros(params, 0.0, n_segments),
            best_cost: c0,
            cost_history: vec![c0],
            gradient_norm_final: 0.0,
            restart_index_of_best: 0,
            converged: true,
            iterations: 0,
            starts: vec![],
        });
    }
    let mut kinds = vec![init.clone()];
    kinds.extend(std::iter::repeat_n(Init::Random, cfg.n_random_restarts));
    let layout = Layout::new(params, n_segments, cfg, duration_ns);
    let (lo, hi) = layout.bounds();
    let settings = LbfgsSettings {
        max_iterations: cfg.max_iterations,
        gradient_tol: cfg.gradient_norm_tol,
        relative_cost_tol: cfg.relative_cost_tol,
        memory: cfg.memory,
        max_line_search: cfg.max_line_search,
        target: cfg.target_cost,
        ..Default::default()
    };
    let runs: Vec<(ControlSchedule, lbfgs::LbfgsResult)> = kinds
        .par_iter()
        .enumerate()
        .map(|(idx, kind)| {
            let mut rng = start_rng(cfg.seed, idx as u64);
            let start = initial_schedule(params, duration_ns, n_segments, kind, cfg, &mut rng);
            let mut work = start.clone();
            let objective = |x: &[f64], g: &mut [f64]| -> f64 {
                layout.unpack(x, &mut work);
                let (v, grad) = ev.value_and_gradient(&work);
                layout.pack_gradient(&grad, g);
                v
            };
            let res = lbfgs::minimize(objective, &layout.pack(&start), &lo, &hi, &settings);
            let mut best = start;
            layout.unpack(&res.x, &mut best);
            (best, res)
        })
        .collect();
    let mut best = 0;
    for (i, (_, r)) in runs.iter().enumerate() {
        if r.f < runs[best].1.f {
            best = i;
        }
    }
    let starts = runs
        .iter()
        .zip(&kinds)
        .enumerate()
        .map(|(index, ((_, r), k))| StartSummary {
            index,
            kind: match k {
                Init::Zero => StartKind::Zero,
                Init::Random => StartKind::Random,
                Init::Warm(_) => StartKind::Warm,
            },
            final_cost: r.f,
            iterations: r.iterations,
            reason: r.reason,
        })
        .collect();
    let (schedule, res) = runs.into_iter().nth(best).expect("at least one start");
    Ok(OptimizationOutcome {
        best_cost: ev.value(&schedule),
        best_schedule: schedule,
        cost_history: res.history.clone(),
        gradient_norm_final: res.projected_gradient_norm,
        restart_index_of_best: best,
        converged: res.converged(),
        iterations: res.iterations,
        starts,
    })
}
