//! Clocked-gate reference bounds and the explicit two-qubit transition made
//! of local gates around a single power of SWAP.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, CMatrix, I, ONE, ZERO};
use crate::propagation::StateVector;

pub type C2 = Matrix2<Complex64>;

/// Preparation-time bounds of a device that executes gates on a clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTimeBudget {
    pub pi_gate_time: f64,
    pub swap_alpha_max_time: f64,
    /// Any single-qubit state from any other: five clocked rotations of at
    /// most half a pi gate each.
    pub one_qubit_max: f64,
    pub two_qubit_max: f64,
    pub two_qubit_from_01_max: f64,
    pub two_qubit_min: f64,
}

/// Derives the bounds from the pi-gate and maximal power-of-SWAP durations.
pub fn reference_bounds(pi_gate_time: f64, swap_alpha_max_time: f64) -> Result<GateTimeBudget> {
    if !(pi_gate_time >= 0.0 && swap_alpha_max_time >= 0.0) || !pi_gate_time.is_finite() || !swap_alpha_max_time.is_finite() {
        return Err(Error::InvalidArgument("gate durations must be finite and nonnegative".into()));
    }
    let one = 2.5 * pi_gate_time;
    Ok(GateTimeBudget {
        pi_gate_time,
        swap_alpha_max_time,
        one_qubit_max: one,
        two_qubit_max: 2.0 * one + swap_alpha_max_time,
        two_qubit_from_01_max: one + swap_alpha_max_time,
        two_qubit_min: pi_gate_time + swap_alpha_max_time,
    })
}

impl Default for GateTimeBudget {
    fn default() -> Self {
        reference_bounds(200.0, 0.5).expect("valid defaults")
    }
}

/// `psi = cos θ |a0>|b0> + sin θ |a1>|b1>`; columns of `basis_a` are
/// `|a0>, |a1>`, likewise for `basis_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schmidt {
    pub theta: f64,
    pub basis_a: C2,
    pub basis_b: C2,
}

impl Schmidt {
    pub fn reconstruct(&self) -> [Complex64; 4] {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let mut out = [ZERO; 4];
        for i in 0..2 {
            for j in 0..2 {
                out[2 * i + j] = self.basis_a[(i, 0)] * self.basis_b[(j, 0)] * c + self.basis_a[(i, 1)] * self.basis_b[(j, 1)] * s;
            }
        }
        out
    }
}

fn first_nonzero_phase(col: [Complex64; 2]) -> Complex64 {
    let z = if col[0].norm() > 1e-14 { col[0] } else { col[1] };
    if z.norm() == 0.0 {
        ONE
    } else {
        z / z.norm()
    }
}

/// Schmidt decomposition of a two-qubit state (qubit 0 is the left
/// factor). The larger coefficient comes first, so `θ ∈ [0, π/4]`; each
/// `basis_a` column has its first nonzero entry real and positive.
///
/// The left basis diagonalizes the reduced state `M M†`; the right vectors
/// follow as `b_k = (M^T ā_k) / s_k`, completed orthogonally when `s_1`
/// vanishes.
pub fn schmidt_decompose(psi: &StateVector) -> Result<Schmidt> {
    if psi.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: psi.dim() });
    }
    let a = psi.amplitudes();
    let m = C2::new(a[0], a[1], a[2], a[3]);
    let eig = (m * m.adjoint()).symmetric_eigen();
    let order = if eig.eigenvalues[1] > eig.eigenvalues[0] { [1usize, 0] } else { [0, 1] };
    let mut basis_a = C2::zeros();
    for (col, &k) in order.iter().enumerate() {
        let ua = [eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]];
        let ph = first_nonzero_phase(ua);
        let nrm = (ua[0].norm_sqr() + ua[1].norm_sqr()).sqrt();
        for i in 0..2 {
            basis_a[(i, col)] = ua[i] / (ph * nrm);
        }
    }
    // unnormalized right vectors s_k b_k
    let mut basis_b = C2::zeros();
    let mut s = [0.0; 2];
    for k in 0..2 {
        let col = m.transpose() * basis_a.column(k).map(|z| z.conj());
        s[k] = col.norm();
        for i in 0..2 {
            basis_b[(i, k)] = col[i];
        }
    }
    let b0 = basis_b.column(0).unscale(s[0]);
    basis_b.set_column(0, &b0);
    // σ_1 carries no weight below this, so any orthogonal completion works
    if s[1] > 1e-12 {
        let b1 = basis_b.column(1).unscale(s[1]);
        // re-orthogonalize against b0 to absorb roundoff
        let b1 = b1 - b0 * b0.dotc(&b1);
        basis_b.set_column(1, &(b1.normalize()));
    } else {
        basis_b[(0, 1)] = -b0[1].conj();
        basis_b[(1, 1)] = b0[0].conj();
    }
    let theta = s[1].atan2(s[0]).clamp(0.0, PI / 4.0);
    Ok(Schmidt { theta, basis_a, basis_b })
}

/// `SWAP^α`: eigenvalue 1 on the triplet, `e^{iπα}` on the singlet.
pub fn swap_power(alpha: f64) -> CMatrix {
    let e = Complex64::from_polar(1.0, PI * alpha);
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = ONE;
    u[(3, 3)] = ONE;
    u[(1, 1)] = (ONE + e) * 0.5;
    u[(2, 2)] = (ONE + e) * 0.5;
    u[(1, 2)] = (ONE - e) * 0.5;
    u[(2, 1)] = (ONE - e) * 0.5;
    u
}

fn to_dyn(m: &C2) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Locals, one power of SWAP, locals.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub pre_a: C2,
    pub pre_b: C2,
    pub alpha: f64,
    pub post_a: C2,
    pub post_b: C2,
    /// `|<phi| circuit |psi0>|^2` recomputed from the matrices.
    pub overlap: f64,
}

impl Transition {
    /// The full 4×4 unitary of the three layers.
    pub fn unitary(&self) -> CMatrix {
        let pre = kron(&to_dyn(&self.pre_a), &to_dyn(&self.pre_b));
        let post = kron(&to_dyn(&self.post_a), &to_dyn(&self.post_b));
        post * swap_power(self.alpha) * pre
    }
}

/// Builds the circuit taking `psi0` to `phi` up to a global phase. The pre
/// locals bring `psi0` to `cos θ|01> ∓ i sin θ|10>`, whose relative phase lets
/// a power of SWAP move the Schmidt angle either way.
pub fn construct_transition(psi0: &StateVector, phi: &StateVector) -> Result<Transition> {
    let from = schmidt_decompose(psi0)?;
    let to = schmidt_decompose(phi)?;
    let (t0, t1) = (from.theta, to.theta);
    // rotating in the block by β sends the Schmidt angle to θ ± β
    let sigma = if t1 >= t0 { -I } else { I };
    let beta = (t1 - t0).abs();
    let alpha = (2.0 * beta / PI).clamp(0.0, 1.0);
    let pre_a = from.basis_a.adjoint();
    let adj_b = from.basis_b.adjoint();
    // |b0> -> |1>, |b1> -> sigma |0>
    let mut pre_b = C2::zeros();
    for j in 0..2 {
        pre_b[(1, j)] = adj_b[(0, j)];
        pre_b[(0, j)] = sigma * adj_b[(1, j)];
    }
    let mid_state = {
        let pre = kron(&to_dyn(&pre_a), &to_dyn(&pre_b));
        let v = swap_power(alpha) * pre * nalgebra::DVector::from_column_slice(psi0.amplitudes());
        StateVector::normalized(v.iter().copied().collect())?
    };
    let mid = schmidt_decompose(&mid_state)?;
    // map the intermediate Schmidt bases onto the target's
    let post_a = to.basis_a * mid.basis_a.adjoint();
    let post_b = to.basis_b * mid.basis_b.adjoint();
    let mut out = Transition { pre_a, pre_b, alpha, post_a, post_b, overlap: 0.0 };
    let fin = out.unitary() * nalgebra::DVector::from_column_slice(psi0.amplitudes());
    let ov: Complex64 = phi.amplitudes().iter().zip(fin.iter()).map(|(a, b)| a.conj() * b).sum();
    out.overlap = ov.norm_sqr();
    Ok(out)
}

/// Power-of-SWAP exponent reached by exchange with `j_tilde · dt` (GHz·ns).
pub fn swap_exponent(j_tilde: f64, dt: f64) -> f64 {
    2.0 * j_tilde * dt
}

/// Inverse of [`swap_exponent`]: duration for exponent `alpha` at `j_tilde`.
pub fn swap_duration(alpha: f64, j_tilde: f64) -> f64 {
    alpha / (2.0 * j_tilde)
}

