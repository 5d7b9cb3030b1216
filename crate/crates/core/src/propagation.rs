//! Time evolution under piecewise-constant controls.
//!
//! States are integrated in the frame rotating at the mean Zeeman frequency,
//! where the static part of every segment is exactly constant. Drive terms
//! are handled by a fourth-order commutator-free Magnus scheme on Gauss
//! nodes. Inputs and outputs live in the drift frame.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::{ControlSchedule, DeviceParams, FrameModel};
use crate::error::{Error, Result};
use crate::linalg::{eigh, norm, CMatrix, ZERO};

/// Gauss nodes of the substep integrator, as fractions of the substep.
pub const GAUSS_NODES: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];
/// Weights `(3 -+ 2 sqrt 3) / 12`.
pub const CF4_WEIGHTS: [f64; 2] = [
    (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0,
    (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0,
];

/// Normalized pure state of `n` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    /// Wraps amplitudes whose norm is within `1e-10` of one and whose
    /// length is a power of two.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let d = amps.len();
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "state dimension {d} is not a power of two >= 2"
            )));
        }
        let nrm = norm(&amps);
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(nrm));
        }
        Ok(StateVector(amps))
    }

    /// Normalizes the amplitudes before wrapping them.
    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self> {
        let nrm = norm(&amps);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::NotNormalized(nrm));
        }
        for a in &mut amps {
            *a /= nrm;
        }
        Self::new(amps)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut v = vec![ZERO; 1 << n_qubits];
        v[index] = Complex64::new(1.0, 0.0);
        StateVector(v)
    }

    /// Basis state from a bit string such as `"01"`, qubit 0 first.
    pub fn from_bits(bits: &str) -> Result<Self> {
        let n = bits.len();
        let idx = usize::from_str_radix(bits, 2)
            .map_err(|_| Error::InvalidArgument(format!("invalid bit string {bits:?}")))?;
        if n == 0 {
            return Err(Error::InvalidArgument("empty bit string".into()));
        }
        Ok(Self::basis(n, idx))
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    /// `|<self|other>|^2`.
    pub fn overlap_sqr(&self, other: &StateVector) -> f64 {
        crate::linalg::inner(&self.0, &other.0).norm_sqr()
    }

    pub(crate) fn from_raw(v: Vec<Complex64>) -> Self {
        StateVector(v)
    }
}

/// Numerical options of the propagator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationOptions {
    /// Rotating-wave approximation on the drive.
    pub rwa: bool,
    /// Largest phase advance per substep, in radians.
    pub max_phase_per_substep: f64,
    pub min_substeps: usize,
    /// Fixed substep count overriding the adaptive rule.
    pub fixed_substeps: Option<usize>,
    /// Start time of the schedule on the absolute clock.
    pub time_offset_ns: f64,
    pub keep_segment_propagators: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            rwa: true,
            max_phase_per_substep: 0.05,
            min_substeps: 4,
            fixed_substeps: None,
            time_offset_ns: 0.0,
            keep_segment_propagators: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// Final state in the drift frame.
    pub final_state: StateVector,
    /// Drift-frame propagator of each segment, when requested.
    pub segment_propagators: Option<Vec<CMatrix>>,
    pub substeps_per_segment: usize,
}

/// Substeps per segment from the phase-advance rule.
pub fn substep_count(model: &FrameModel, schedule: &ControlSchedule, opts: &PropagationOptions) -> usize {
    if let Some(n) = opts.fixed_substeps {
        return n.max(1);
    }
    if schedule.n_segments == 0 || schedule.duration_ns <= 0.0 {
        return opts.min_substeps.max(1);
    }
    let mut rate: f64 = 0.0;
    for m in 0..schedule.n_segments {
        rate = rate.max(model.static_norm_bound(schedule, m) + model.drive_norm_bound(schedule, m));
    }
    rate += model.max_carrier_offset(schedule);
    let phase = 2.0 * PI * rate * schedule.segment_duration();
    let n = (phase / opts.max_phase_per_substep).ceil() as usize;
    n.max(opts.min_substeps).max(1)
}

/// Node times and `(S_x, S_y)` drive coefficients of the two exponentials
/// of one substep starting at absolute time `s` with width `h`. The static
/// part enters each exponential with weight one half.
pub(crate) struct SubstepNodes {
    pub times: [f64; 2],
}

impl SubstepNodes {
    pub fn new(s: f64, h: f64) -> Self {
        SubstepNodes {
            times: [s + GAUSS_NODES[0] * h, s + GAUSS_NODES[1] * h],
        }
    }
}

/// Weights of the node values in the first and second exponential.
pub(crate) const EXP_WEIGHTS: [[f64; 2]; 2] = [
    [CF4_WEIGHTS[1], CF4_WEIGHTS[0]],
    [CF4_WEIGHTS[0], CF4_WEIGHTS[1]],
];

fn segment_is_drive_free(schedule: &ControlSchedule, m: usize) -> bool {
    (0..schedule.n_tones()).all(|k| schedule.i_amps_mhz[k][m] == 0.0 && schedule.q_amps_mhz[k][m] == 0.0)
}

/// Propagates `initial` through `schedule`.
pub fn propagate(
    params: &DeviceParams,
    schedule: &ControlSchedule,
    initial: &StateVector,
    opts: &PropagationOptions,
) -> Result<PropagationResult> {
    params.validate()?;
    schedule.validate(params)?;
    if initial.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: initial.dim(),
        });
    }
    let nrm = norm(initial.amplitudes());
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(nrm));
    }
    let model = FrameModel::new(params, opts.rwa);
    Ok(propagate_model(&model, schedule, initial, opts))
}

pub(crate) fn propagate_model(
    model: &FrameModel,
    schedule: &ControlSchedule,
    initial: &StateVector,
    opts: &PropagationOptions,
) -> PropagationResult {
    let d = model.dim;
    let n_sub = substep_count(model, schedule, opts);
    let t0 = opts.time_offset_ns;
    let mut chi: Vec<Complex64> = initial.amplitudes().to_vec();
    let ph0 = model.frame_phases(t0);
    for (c, p) in chi.iter_mut().zip(&ph0) {
        *c *= p.conj();
    }
    let mut buf = vec![ZERO; d];
    let mut props = opts.keep_segment_propagators.then(Vec::new);
    if schedule.duration_ns > 0.0 {
        let dt = schedule.segment_duration();
        for m in 0..schedule.n_segments {
            let sa = t0 + m as f64 * dt;
            let k = model.static_part(schedule, m);
            let mut seg_u = props.as_ref().map(|_| CMatrix::identity(d, d));
            if segment_is_drive_free(schedule, m) {
                let e = eigh(&k);
                e.apply_exp(2.0 * PI * dt, &mut chi, &mut buf);
                if let Some(u) = seg_u.as_mut() {
                    *u = e.exp(2.0 * PI * dt);
                }
            } else {
                let h = dt / n_sub as f64;
                let k_half = &k * Complex64::new(0.5, 0.0);
                for sub in 0..n_sub {
                    let nodes = SubstepNodes::new(sa + sub as f64 * h, h);
                    let xy = [
                        model.drive_xy(schedule, m, nodes.times[0]),
                        model.drive_xy(schedule, m, nodes.times[1]),
                    ];
                    for w in EXP_WEIGHTS {
                        let drive = [
                            w[0] * xy[0][0] + w[1] * xy[1][0],
                            w[0] * xy[0][1] + w[1] * xy[1][1],
                        ];
                        let e = eigh(&model.with_drive(&k_half, drive));
                        e.apply_exp(2.0 * PI * h, &mut chi, &mut buf);
                        if let Some(u) = seg_u.as_mut() {
                            *u = e.exp(2.0 * PI * h) * &*u;
                        }
                    }
                }
            }
            if let (Some(list), Some(mut u)) = (props.as_mut(), seg_u) {
                // strip the roundoff drift accumulated over the product
                crate::linalg::orthonormalize_columns(&mut u);
                let pa = model.frame_phases(sa);
                let pb = model.frame_phases(sa + dt);
                let ur = CMatrix::from_fn(d, d, |r, c| pb[r] * u[(r, c)] * pa[c].conj());
                list.push(ur);
            }
        }
    }
    let ph1 = model.frame_phases(t0 + schedule.duration_ns.max(0.0));
    for (c, p) in chi.iter_mut().zip(&ph1) {
        *c *= p;
    }
    PropagationResult {
        final_state: StateVector::from_raw(chi),
        segment_propagators: props,
        substeps_per_segment: n_sub,
    }
}

/// Drift-frame propagator of a constant exchange `j` between two qubits
/// with Zeeman difference `delta_b = B_2 - B_1`, over `[t0, t0 + dt]`.
/// Basis order `|00>, |01>, |10>, |11>` with qubit 1 first.
pub fn exchange_unitary_exact(j: f64, delta_b: f64, t0: f64, dt: f64) -> CMatrix {
    let jt = j.hypot(delta_b);
    let (sn, cs) = (PI * jt * dt).sin_cos();
    let (rb, rj) = if jt == 0.0 { (0.0, 0.0) } else { (delta_b / jt, j / jt) };
    let i = Complex64::new(0.0, 1.0);
    let p_minus = Complex64::from_polar(1.0, -2.0 * PI * (0.25 * j - 0.5 * delta_b) * dt);
    let p_plus = Complex64::from_polar(1.0, -2.0 * PI * (0.25 * j + 0.5 * delta_b) * dt);
    let dress = Complex64::from_polar(1.0, 2.0 * PI * delta_b * t0);
    let edge = Complex64::from_polar(1.0, PI * j * dt / 2.0);
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = edge;
    u[(3, 3)] = edge;
    u[(1, 1)] = (cs - i * rb * sn) * p_minus;
    u[(2, 2)] = (cs + i * rb * sn) * p_plus;
    u[(1, 2)] = i * rj * sn * dress * p_minus;
    u[(2, 1)] = i * rj * sn * dress.conj() * p_plus;
    u
}

/// Large-exchange limit of [`exchange_unitary_exact`]: a phase-dressed
/// power of SWAP with exponent `2 sqrt(J^2 + dB^2) dt`.
pub fn exchange_unitary_limit(j: f64, delta_b: f64, t0: f64, dt: f64) -> CMatrix {
    let jt = j.hypot(delta_b);
    let alpha = 2.0 * jt * dt;
    let global = Complex64::from_polar(1.0, PI * jt * dt / 2.0);
    let branch = Complex64::from_polar(1.0, -PI * alpha);
    let half = Complex64::new(0.5, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let dress = Complex64::from_polar(1.0, 2.0 * PI * delta_b * t0);
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = one;
    u[(3, 3)] = one;
    u[(1, 1)] = half * (one + branch);
    u[(2, 2)] = half * (one + branch);
    u[(1, 2)] = half * (one - branch) * dress;
    u[(2, 1)] = half * (one - branch) * dress.conj();
    u * global
}
