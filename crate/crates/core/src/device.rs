//! Device parameters, piecewise-constant control schedules and the
//! Hamiltonians they generate.
//!
//! Frequencies are linear (GHz unless a field name says otherwise) with
//! `h = 1`, times are in ns, and evolution is `exp(-i 2 pi H t)`.
//! Qubit 0 is the most significant bit of a basis index and `|0>` is spin up.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pauli_on, CMatrix, Pauli, ZERO};

/// Physical description of a linear chain of spin qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub n_qubits: usize,
    /// Mean Zeeman splitting.
    pub b_ghz: f64,
    /// Per-qubit offsets from the mean, summing to zero.
    pub zeeman_offsets_mhz: Vec<f64>,
    /// Bound on each I and Q amplitude.
    pub iq_max_mhz: f64,
    /// Bound on each exchange coupling.
    pub j_max_ghz: f64,
    /// Allowed carrier frequencies `[low, high]`.
    pub carrier_window_ghz: [f64; 2],
    /// Number of drive tones.
    pub n_signals: usize,
    /// Prefactor of the drive term in the lab Hamiltonian.
    pub drive_coupling: f64,
}

impl DeviceParams {
    /// Default chain of `n` qubits: 28 GHz mean splitting, offsets spread
    /// evenly over +-30 MHz, `iq_max = 20 MHz / (2 sqrt 2)`, `j_max = 1 GHz`,
    /// one tone per qubit.
    pub fn table_one(n: usize) -> Self {
        let offsets = if n == 1 {
            vec![0.0]
        } else {
            (0..n)
                .map(|i| -30.0 + 60.0 * i as f64 / (n - 1) as f64)
                .collect()
        };
        DeviceParams {
            n_qubits: n,
            b_ghz: 28.0,
            zeeman_offsets_mhz: offsets,
            iq_max_mhz: 20.0 / (2.0 * 2f64.sqrt()),
            j_max_ghz: 1.0,
            carrier_window_ghz: [27.0, 29.0],
            n_signals: n,
            drive_coupling: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn n_bonds(&self) -> usize {
        self.n_qubits.saturating_sub(1)
    }

    pub fn iq_max_ghz(&self) -> f64 {
        self.iq_max_mhz * 1e-3
    }

    pub fn offset_ghz(&self, q: usize) -> f64 {
        self.zeeman_offsets_mhz[q] * 1e-3
    }

    /// Zeeman frequency of qubit `q`.
    pub fn resonance_ghz(&self, q: usize) -> f64 {
        self.b_ghz + self.offset_ghz(q)
    }

    /// Returns a copy with every I/Q bound multiplied by `factor`.
    pub fn with_iq_scale(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.iq_max_mhz *= factor;
        p
    }

    /// Returns a copy with the exchange bound multiplied by `factor`.
    pub fn with_j_scale(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.j_max_ghz *= factor;
        p
    }

    /// Returns a copy with every Zeeman offset multiplied by `factor`.
    pub fn with_offset_scale(&self, factor: f64) -> Self {
        let mut p = self.clone();
        for o in &mut p.zeeman_offsets_mhz {
            *o *= factor;
        }
        p
    }

    /// All constraint violations, empty when the parameters are usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_qubits == 0 || self.n_qubits > 10 {
            v.push(format!("n_qubits must be in 1..=10, got {}", self.n_qubits));
        }
        if self.zeeman_offsets_mhz.len() != self.n_qubits {
            v.push(format!(
                "zeeman_offsets_mhz has {} entries, expected {}",
                self.zeeman_offsets_mhz.len(),
                self.n_qubits
            ));
        }
        let finite = [self.b_ghz, self.iq_max_mhz, self.j_max_ghz, self.drive_coupling]
            .iter()
            .chain(self.zeeman_offsets_mhz.iter())
            .chain(self.carrier_window_ghz.iter())
            .all(|x| x.is_finite());
        if !finite {
            v.push("all numeric fields must be finite".into());
            return v;
        }
        if self.b_ghz <= 0.0 {
            v.push(format!("b_ghz must be positive, got {}", self.b_ghz));
        }
        if !self.zeeman_offsets_mhz.is_empty() {
            let mean =
                self.zeeman_offsets_mhz.iter().sum::<f64>() / self.zeeman_offsets_mhz.len() as f64;
            if mean.abs() > 1e-9 {
                v.push(format!("zeeman offsets must have zero mean, got {mean} MHz"));
            }
        }
        if self.iq_max_mhz <= 0.0 {
            v.push(format!("iq_max_mhz must be positive, got {}", self.iq_max_mhz));
        }
        if self.j_max_ghz < 0.0 {
            v.push(format!("j_max_ghz must be non-negative, got {}", self.j_max_ghz));
        }
        let [lo, hi] = self.carrier_window_ghz;
        if lo >= hi {
            v.push(format!("carrier window [{lo}, {hi}] is empty"));
        }
        if lo <= 0.0 {
            v.push("carrier window must lie at positive frequencies".into());
        }
        if self.n_signals == 0 {
            v.push("n_signals must be at least 1".into());
        }
        if self.drive_coupling <= 0.0 {
            v.push(format!("drive_coupling must be positive, got {}", self.drive_coupling));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }

    pub fn from_json_str(s: &str, source_name: &str) -> Result<Self> {
        let p: DeviceParams = serde_json::from_str(s).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = crate::error::read_text(path)?;
        Self::from_json_str(&s, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("device parameters serialize")
    }
}

/// Piecewise-constant controls on `n_segments` equal segments of `[0, duration_ns]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSchedule {
    pub duration_ns: f64,
    pub n_segments: usize,
    /// In-phase amplitudes, indexed `[tone][segment]`.
    pub i_amps_mhz: Vec<Vec<f64>>,
    /// Quadrature amplitudes, indexed `[tone][segment]`.
    pub q_amps_mhz: Vec<Vec<f64>>,
    /// Exchange couplings, indexed `[bond][segment]`.
    pub j_amps_ghz: Vec<Vec<f64>>,
    /// One carrier per tone, constant over the schedule.
    pub carriers_ghz: Vec<f64>,
}

impl ControlSchedule {
    /// All-zero amplitudes with tone `k` on the resonance of qubit `k mod n`.
    pub fn zeros(params: &DeviceParams, duration_ns: f64, n_segments: usize) -> Self {
        let s = params.n_signals;
        ControlSchedule {
            duration_ns,
            n_segments,
            i_amps_mhz: vec![vec![0.0; n_segments]; s],
            q_amps_mhz: vec![vec![0.0; n_segments]; s],
            j_amps_ghz: vec![vec![0.0; n_segments]; params.n_bonds()],
            carriers_ghz: (0..s)
                .map(|k| params.resonance_ghz(k % params.n_qubits))
                .collect(),
        }
    }

    pub fn segment_duration(&self) -> f64 {
        self.duration_ns / self.n_segments as f64
    }

    /// Segment containing time `t`; the right end belongs to the last segment.
    pub fn segment_index(&self, t: f64) -> usize {
        if self.duration_ns <= 0.0 {
            return 0;
        }
        let m = (t / self.segment_duration()).floor() as isize;
        m.clamp(0, self.n_segments as isize - 1) as usize
    }

    pub fn n_tones(&self) -> usize {
        self.carriers_ghz.len()
    }

    pub fn violations(&self, params: &DeviceParams) -> Vec<String> {
        let mut v = Vec::new();
        let m = self.n_segments;
        if !(self.duration_ns >= 0.0) || !self.duration_ns.is_finite() {
            v.push(format!("duration must be finite and non-negative, got {}", self.duration_ns));
        }
        if m == 0 {
            v.push("n_segments must be at least 1".into());
        }
        let s = params.n_signals;
        if self.carriers_ghz.len() != s {
            v.push(format!("expected {s} carriers, got {}", self.carriers_ghz.len()));
        }
        let check_table = |v: &mut Vec<String>, name: &str, rows: &Vec<Vec<f64>>, n_rows: usize| {
            if rows.len() != n_rows {
                v.push(format!("{name} has {} rows, expected {n_rows}", rows.len()));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != m {
                    v.push(format!("{name}[{r}] has {} segments, expected {m}", row.len()));
                }
            }
        };
        check_table(&mut v, "i_amps_mhz", &self.i_amps_mhz, s);
        check_table(&mut v, "q_amps_mhz", &self.q_amps_mhz, s);
        check_table(&mut v, "j_amps_ghz", &self.j_amps_ghz, params.n_bonds());
        if !v.is_empty() {
            return v;
        }
        let tol = 1e-12;
        let a = params.iq_max_mhz * (1.0 + tol);
        for (name, rows) in [("i_amps_mhz", &self.i_amps_mhz), ("q_amps_mhz", &self.q_amps_mhz)] {
            for (k, row) in rows.iter().enumerate() {
                for (seg, &x) in row.iter().enumerate() {
                    if !x.is_finite() || x.abs() > a {
                        v.push(format!("{name}[{k}][{seg}] = {x} exceeds +-{}", params.iq_max_mhz));
                    }
                }
            }
        }
        let jm = params.j_max_ghz * (1.0 + tol);
        for (b, row) in self.j_amps_ghz.iter().enumerate() {
            for (seg, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 || x > jm {
                    v.push(format!("j_amps_ghz[{b}][{seg}] = {x} outside [0, {}]", params.j_max_ghz));
                }
            }
        }
        let [lo, hi] = params.carrier_window_ghz;
        for (k, &f) in self.carriers_ghz.iter().enumerate() {
            if !f.is_finite() || f < lo - tol || f > hi + tol {
                v.push(format!("carriers_ghz[{k}] = {f} outside [{lo}, {hi}]"));
            }
        }
        v
    }

    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        let v = self.violations(params);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(v.join("; ")))
        }
    }

    /// Resamples onto `n_segments` segments and `duration_ns` by nearest segment.
    pub fn resampled(&self, duration_ns: f64, n_segments: usize) -> Self {
        let old = self.n_segments;
        let map = |row: &Vec<f64>| -> Vec<f64> {
            (0..n_segments)
                .map(|m| {
                    let idx = (((m as f64 + 0.5) * old as f64 / n_segments as f64).floor() as usize)
                        .min(old - 1);
                    row[idx]
                })
                .collect()
        };
        ControlSchedule {
            duration_ns,
            n_segments,
            i_amps_mhz: self.i_amps_mhz.iter().map(map).collect(),
            q_amps_mhz: self.q_amps_mhz.iter().map(map).collect(),
            j_amps_ghz: self.j_amps_ghz.iter().map(map).collect(),
            carriers_ghz: self.carriers_ghz.clone(),
        }
    }
}

/// Sparse Hermitian operator stored as `(row, col, value)` triples.
#[derive(Debug, Clone)]
pub struct SparseOp {
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != ZERO {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        SparseOp { entries }
    }

    pub fn add_to(&self, out: &mut CMatrix, coeff: f64) {
        for &(r, c, v) in &self.entries {
            out[(r, c)] += v * coeff;
        }
    }

    /// `sum_ij Z_ij O_ij`.
    pub fn contract(&self, z: &CMatrix) -> Complex64 {
        self.entries.iter().map(|&(r, c, v)| z[(r, c)] * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        self.add_to(&mut m, 1.0);
        m
    }
}

/// Coefficients of `S_x` and `S_y` multiplying one tone's I and Q amplitudes,
/// together with their carrier derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToneCoeffs {
    pub i: [f64; 2],
    pub q: [f64; 2],
    pub di_df: [f64; 2],
    pub dq_df: [f64; 2],
}

/// Operators of a device in the frame rotating at the mean Zeeman frequency.
///
/// In that frame the Hamiltonian is `diag(h_offsets) + sum_j J_j X_j +
/// drive(t)` with `X_j = -(1/4) sigma_j . sigma_{j+1}`. The drift frame used
/// for reporting differs by the diagonal phase `exp(i 2 pi diag(h_offsets) t)`.
#[derive(Debug, Clone)]
pub struct FrameModel {
    pub n_qubits: usize,
    pub dim: usize,
    pub b_ghz: f64,
    pub kappa: f64,
    pub rwa: bool,
    /// Diagonal of `-(1/2) sum_i dB_i sigma^z_i` in GHz.
    pub h_offsets: Vec<f64>,
    pub exchange: Vec<SparseOp>,
    pub sx: SparseOp,
    pub sy: SparseOp,
}

impl FrameModel {
    pub fn new(params: &DeviceParams, rwa: bool) -> Self {
        let n = params.n_qubits;
        let dim = params.dim();
        let h_offsets = (0..dim)
            .map(|idx| {
                (0..n)
                    .map(|q| {
                        let z = if (idx >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
                        -0.5 * params.offset_ghz(q) * z
                    })
                    .sum()
            })
            .collect();
        let exchange = (0..params.n_bonds())
            .map(|j| {
                let mut m = CMatrix::zeros(dim, dim);
                for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                    m += pauli_on(n, j, p) * pauli_on(n, j + 1, p);
                }
                SparseOp::from_dense(&(m * Complex64::new(-0.25, 0.0)))
            })
            .collect();
        let mut sx = CMatrix::zeros(dim, dim);
        let mut sy = CMatrix::zeros(dim, dim);
        for q in 0..n {
            sx += pauli_on(n, q, Pauli::X);
            sy += pauli_on(n, q, Pauli::Y);
        }
        FrameModel {
            n_qubits: n,
            dim,
            b_ghz: params.b_ghz,
            kappa: params.drive_coupling,
            rwa,
            h_offsets,
            exchange,
            sx: SparseOp::from_dense(&sx),
            sy: SparseOp::from_dense(&sy),
        }
    }

    /// Drive coefficients of a tone with carrier `f` at absolute time `s`.
    /// Amplitudes multiplying these are in GHz.
    pub fn tone_coeffs(&self, f: f64, s: f64) -> ToneCoeffs {
        if self.rwa {
            let c = 0.25 * self.kappa;
            let th = 2.0 * PI * (f - self.b_ghz) * s;
            let (sn, cs) = th.sin_cos();
            let w = 2.0 * PI * s * c;
            ToneCoeffs {
                i: [c * cs, -c * sn],
                q: [c * sn, c * cs],
                di_df: [-w * sn, -w * cs],
                dq_df: [w * cs, -w * sn],
            }
        } else {
            let c = 0.5 * self.kappa;
            let (sp, cp) = (2.0 * PI * self.b_ghz * s).sin_cos();
            let (sw, cw) = (2.0 * PI * f * s).sin_cos();
            let w = 2.0 * PI * s * c;
            ToneCoeffs {
                i: [c * cw * cp, c * cw * sp],
                q: [c * sw * cp, c * sw * sp],
                di_df: [-w * sw * cp, -w * sw * sp],
                dq_df: [w * cw * cp, w * cw * sp],
            }
        }
    }

    /// Total `(S_x, S_y)` coefficients of the drive in segment `m` at time `s`.
    pub fn drive_xy(&self, schedule: &ControlSchedule, m: usize, s: f64) -> [f64; 2] {
        let mut xy = [0.0; 2];
        for k in 0..schedule.n_tones() {
            let c = self.tone_coeffs(schedule.carriers_ghz[k], s);
            let i = schedule.i_amps_mhz[k][m] * 1e-3;
            let q = schedule.q_amps_mhz[k][m] * 1e-3;
            xy[0] += i * c.i[0] + q * c.q[0];
            xy[1] += i * c.i[1] + q * c.q[1];
        }
        xy
    }

    /// Time-independent part of segment `m`.
    pub fn static_part(&self, schedule: &ControlSchedule, m: usize) -> CMatrix {
        let mut h = CMatrix::zeros(self.dim, self.dim);
        for (i, &d) in self.h_offsets.iter().enumerate() {
            h[(i, i)] = Complex64::new(d, 0.0);
        }
        for (j, op) in self.exchange.iter().enumerate() {
            op.add_to(&mut h, schedule.j_amps_ghz[j][m]);
        }
        h
    }

    /// `K + a S_x + b S_y`.
    pub fn with_drive(&self, k: &CMatrix, xy: [f64; 2]) -> CMatrix {
        let mut h = k.clone();
        self.sx.add_to(&mut h, xy[0]);
        self.sy.add_to(&mut h, xy[1]);
        h
    }

    /// Hamiltonian in the mean-frequency frame at absolute time `s`.
    pub fn hamiltonian(&self, schedule: &ControlSchedule, m: usize, s: f64) -> CMatrix {
        let k = self.static_part(schedule, m);
        self.with_drive(&k, self.drive_xy(schedule, m, s))
    }

    /// Diagonal of `exp(i 2 pi diag(h_offsets) t)`, mapping the
    /// mean-frequency frame into the drift frame.
    pub fn frame_phases(&self, t: f64) -> Vec<Complex64> {
        self.h_offsets
            .iter()
            .map(|&d| Complex64::from_polar(1.0, 2.0 * PI * d * t))
            .collect()
    }

    /// Rough bound on the spectral norm of the static part of segment `m`.
    pub fn static_norm_bound(&self, schedule: &ControlSchedule, m: usize) -> f64 {
        let off = self.h_offsets.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let exch: f64 = schedule.j_amps_ghz.iter().map(|row| 0.75 * row[m].abs()).sum();
        off + exch
    }

    /// Rough bound on the drive norm of segment `m`.
    pub fn drive_norm_bound(&self, schedule: &ControlSchedule, m: usize) -> f64 {
        let c = if self.rwa { 0.25 } else { 0.5 } * self.kappa;
        let amp: f64 = (0..schedule.n_tones())
            .map(|k| schedule.i_amps_mhz[k][m].hypot(schedule.q_amps_mhz[k][m]) * 1e-3)
            .sum();
        c * amp * self.n_qubits as f64
    }

    /// Fastest phase rotation in the drive, used for substep sizing.
    pub fn max_carrier_offset(&self, schedule: &ControlSchedule) -> f64 {
        schedule
            .carriers_ghz
            .iter()
            .map(|&f| {
                if self.rwa {
                    (f - self.b_ghz).abs()
                } else {
                    f + self.b_ghz
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Hamiltonian generating the evolution in the frame of the drift
/// `H_D = -(1/2) sum_i B_i sigma^z_i`, at time `t` in `[0, T]`.
pub fn rotating_frame_hamiltonian(
    params: &DeviceParams,
    schedule: &ControlSchedule,
    t: f64,
    rwa: bool,
) -> Result<CMatrix> {
    params.validate()?;
    schedule.validate(params)?;
    if !(0.0..=schedule.duration_ns).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            total: schedule.duration_ns,
        });
    }
    let model = FrameModel::new(params, rwa);
    let m = schedule.segment_index(t);
    let mut h = model.hamiltonian(schedule, m, t);
    for (i, &d) in model.h_offsets.iter().enumerate() {
        h[(i, i)] -= Complex64::new(d, 0.0);
    }
    let ph = model.frame_phases(t);
    for r in 0..model.dim {
        for c in 0..model.dim {
            h[(r, c)] *= ph[r] * ph[c].conj();
        }
    }
    Ok(h)
}

/// Lab-frame Hamiltonian including the Zeeman drift, at time `t`.
pub fn lab_frame_hamiltonian(
    params: &DeviceParams,
    schedule: &ControlSchedule,
    t: f64,
) -> Result<CMatrix> {
    params.validate()?;
    schedule.validate(params)?;
    if !(0.0..=schedule.duration_ns).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            total: schedule.duration_ns,
        });
    }
    let n = params.n_qubits;
    let dim = params.dim();
    let m = schedule.segment_index(t);
    let mut h = CMatrix::zeros(dim, dim);
    for q in 0..n {
        h -= pauli_on(n, q, Pauli::Z) * Complex64::new(0.5 * params.resonance_ghz(q), 0.0);
    }
    let g: f64 = (0..schedule.n_tones())
        .map(|k| {
            let w = 2.0 * PI * schedule.carriers_ghz[k] * t;
            1e-3 * (schedule.i_amps_mhz[k][m] * w.cos() + schedule.q_amps_mhz[k][m] * w.sin())
        })
        .sum();
    for q in 0..n {
        h += pauli_on(n, q, Pauli::X) * Complex64::new(0.5 * params.drive_coupling * g, 0.0);
    }
    for j in 0..params.n_bonds() {
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            h -= pauli_on(n, j, p)
                * pauli_on(n, j + 1, p)
                * Complex64::new(0.25 * schedule.j_amps_ghz[j][m], 0.0);
        }
    }
    Ok(h)
}
