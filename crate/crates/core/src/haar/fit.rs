//! Analytic MET distributions and their weighted least-squares fits.
//!
//! Both models integrate powers of `sin` from zero to `v T / 2`. With
//! `u = sin² x` the integral is an incomplete beta function,
//! `I_n(y) = W_n · I_{sin² y}((n+1)/2, 1/2)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// `∫_0^y sin^n(x) dx` for `y` clamped to `[0, π/2]`.
pub fn sin_power_integral(n: usize, y: f64) -> f64 {
    let y = y.clamp(0.0, FRAC_PI_2);
    if n == 1 {
        return 1.0 - y.cos();
    }
    let s = y.sin();
    wallis(n) * beta_reg(0.5 * (n as f64 + 1.0), 0.5, (s * s).min(1.0))
}

/// `∫_0^{π/2} sin^n(x) dx` by the Wallis recursion.
pub fn wallis(n: usize) -> f64 {
    let mut w = if n.is_multiple_of(2) { FRAC_PI_2 } else { 1.0 };
    let mut k = n % 2;
    while k < n {
        k += 2;
        w *= (k as f64 - 1.0) / k as f64;
    }
    w
}

/// Lowest sine power of the MET density in Hilbert-space dimension `d`.
pub fn leading_power(d: usize) -> usize {
    2 * d - 3
}

/// MET distribution under a homogeneous and isotropic speed limit `v`
/// (rad/ns) in dimension `d ≥ 2`. Durations outside `[0, π/v]` are clamped,
/// giving 0 below and 1 above.
pub fn hi_cdf(t: f64, v: f64, d: usize) -> f64 {
    assert!(d >= 2, "dimension must be at least 2");
    assert!(v > 0.0, "speed must be positive");
    let n = leading_power(d);
    // 2 / B(d-1, 1/2) equals 1 / wallis(2d-3)
    (sin_power_integral(n, 0.5 * v * t) / wallis(n)).clamp(0.0, 1.0)
}

/// Data for a CDF fit: durations, CDF values and their variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub variance: Vec<f64>,
}

impl FitData {
    fn check(&self, n_params: usize) -> Result<()> {
        let n = self.t.len();
        if self.p.len() != n || self.variance.len() != n {
            return Err(Error::InvalidArgument("fit data columns differ in length".into()));
        }
        if self.variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("fit variances must be positive".into()));
        }
        if self.p.iter().all(|&p| p == 0.0) || self.p.iter().all(|&p| p == 1.0) {
            return Err(Error::DegenerateData("CDF is constant at 0 or 1".into()));
        }
        if n <= n_params {
            return Err(Error::Underdetermined { params: n_params, points: n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FitModel {
    /// Homogeneous and isotropic speed limit.
    Hi,
    /// Sine-power expansion truncated at power `l`.
    Expansion { l: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfFit {
    pub model: FitModel,
    pub d: usize,
    /// `v` for the HI model, `ṽ` for the expansion (rad/ns).
    pub v: f64,
    /// `(n, c_n)` for every power of the expansion, eliminated ones included.
    pub coefficients: Vec<(usize, f64)>,
    pub chi2: f64,
    pub n_dof: usize,
    pub chi2_per_dof: f64,
    /// Names of the free parameters, in covariance order.
    pub parameters: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
}

impl CdfFit {
    /// Model CDF, clamped to `[0, 1]`.
    pub fn cdf(&self, t: f64) -> f64 {
        raw_cdf(&self.coefficients, self.v, t).clamp(0.0, 1.0)
    }

    /// Longest MET the model allows, `π / v`.
    pub fn max_met(&self) -> f64 {
        std::f64::consts::PI / self.v
    }

    /// `(p - model) / sigma` at every data point.
    pub fn standardized_residuals(&self, data: &FitData) -> Vec<f64> {
        data.t
            .iter()
            .zip(&data.p)
            .zip(&data.variance)
            .map(|((&t, &p), &var)| (p - raw_cdf(&self.coefficients, self.v, t)) / var.sqrt())
            .collect()
    }

    pub fn n_terms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters.len()
    }
}

fn raw_cdf(coefficients: &[(usize, f64)], v: f64, t: f64) -> f64 {
    let y = 0.5 * v * t;
    coefficients.iter().map(|&(n, c)| c * sin_power_integral(n, y)).sum()
}

/// The expansion with both constraints eliminated: at fixed `v` the CDF is
/// `base(T) + Σ_k c_k basis_k(T)` over the free powers `n0 < k < l`.
struct Reduced {
    n0: usize,
    l: usize,
    alpha: f64,
    beta: Vec<f64>,
}

impl Reduced {
    fn new(d: usize, l: usize) -> Self {
        let n0 = leading_power(d);
        if l == n0 {
            return Reduced { n0, l, alpha: 1.0 / wallis(n0), beta: vec![] };
        }
        let wl = wallis(l);
        let den = wallis(n0) - wl;
        let beta = ((n0 + 1)..l).map(|k| (wallis(k) - wl) / den).collect();
        Reduced { n0, l, alpha: 1.0 / den, beta }
    }

    fn n_free(&self) -> usize {
        self.beta.len()
    }

    fn base_and_basis(&self, v: f64, t: f64, out: &mut [f64]) -> f64 {
        let y = 0.5 * v * t;
        let i0 = sin_power_integral(self.n0, y);
        if self.l == self.n0 {
            return self.alpha * i0;
        }
        let il = sin_power_integral(self.l, y);
        for (j, k) in ((self.n0 + 1)..self.l).enumerate() {
            out[j] = (sin_power_integral(k, y) - il) - self.beta[j] * (i0 - il);
        }
        self.alpha * (i0 - il)
    }

    fn coefficients(&self, free: &[f64]) -> Vec<(usize, f64)> {
        if self.l == self.n0 {
            return vec![(self.n0, self.alpha)];
        }
        let c0 = self.alpha - free.iter().zip(&self.beta).map(|(c, b)| c * b).sum::<f64>();
        let mut out = vec![(self.n0, c0)];
        for (j, k) in ((self.n0 + 1)..self.l).enumerate() {
            out.push((k, free[j]));
        }
        let cl = -out.iter().map(|(_, c)| c).sum::<f64>();
        out.push((self.l, cl));
        out
    }

    /// Best free coefficients at speed `v` and the resulting chi-squared.
    fn solve(&self, data: &FitData, v: f64) -> (Vec<f64>, f64) {
        let m = self.n_free();
        let n = data.t.len();
        let mut a = DMatrix::<f64>::zeros(n, m);
        let mut b = DVector::<f64>::zeros(n);
        let mut row = vec![0.0; m];
        for i in 0..n {
            let w = 1.0 / data.variance[i].sqrt();
            let base = self.base_and_basis(v, data.t[i], &mut row);
            b[i] = w * (data.p[i] - base);
            for j in 0..m {
                a[(i, j)] = w * row[j];
            }
        }
        let c = if m == 0 {
            DVector::zeros(0)
        } else {
            a.clone().svd(true, true).solve(&b, 1e-13).unwrap_or_else(|_| DVector::zeros(m))
        };
        let r = &b - &a * &c;
        (c.iter().copied().collect(), r.norm_squared())
    }
}

/// Minimizes `f` on `[lo, hi]` by golden-section search.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol * (lo.abs() + hi.abs()) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn fit_reduced(data: &FitData, d: usize, l: usize, model: FitModel) -> Result<CdfFit> {
    if d < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    let red = Reduced::new(d, l);
    let n_params = 1 + red.n_free();
    data.check(n_params)?;
    // speeds whose support ends between a quarter of the shortest positive
    // duration and four times the longest one
    let t_pos = data.t.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    let t_max = data.t.iter().copied().fold(0.0, f64::max);
    if !t_pos.is_finite() {
        return Err(Error::DegenerateData("no positive durations".into()));
    }
    let (v_lo, v_hi) = (std::f64::consts::PI / (4.0 * t_max), 4.0 * std::f64::consts::PI / t_pos);
    let chi = |v: f64| red.solve(data, v).1;
    let n_grid = 400;
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| v_lo * (v_hi / v_lo).powf(i as f64 / (n_grid - 1) as f64))
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&v| chi(v)).collect();
    let best = (0..n_grid).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(n_grid - 1)];
    let v = golden(chi, lo, hi, 1e-12);
    let v = if chi(v) <= vals[best] { v } else { grid[best] };
    let (free, chi2) = red.solve(data, v);
    let coefficients = red.coefficients(&free);
    let covariance = covariance(data, &red, &coefficients, v);
    let n_dof = data.t.len() - n_params;
    let mut parameters = vec![if model == FitModel::Hi { "v".to_string() } else { "v_tilde".to_string() }];
    parameters.extend(((red.n0 + 1)..red.l).map(|k| format!("c{k}")));
    Ok(CdfFit {
        model,
        d,
        v,
        coefficients,
        chi2,
        n_dof,
        chi2_per_dof: chi2 / n_dof as f64,
        parameters,
        covariance,
    })
}

/// `(JᵀWJ)⁻¹` over `(v, free c)` with the analytic Jacobian.
fn covariance(data: &FitData, red: &Reduced, coefficients: &[(usize, f64)], v: f64) -> Vec<Vec<f64>> {
    let m = 1 + red.n_free();
    let mut jtj = DMatrix::<f64>::zeros(m, m);
    let mut row = vec![0.0; red.n_free()];
    let mut grad = vec![0.0; m];
    for i in 0..data.t.len() {
        let t = data.t[i];
        let y = 0.5 * v * t;
        grad[0] = if y < FRAC_PI_2 {
            let s = y.sin();
            0.5 * t * coefficients.iter().map(|&(n, c)| c * s.powi(n as i32)).sum::<f64>()
        } else {
            0.0
        };
        red.base_and_basis(v, t, &mut row);
        grad[1..].copy_from_slice(&row);
        let w = 1.0 / data.variance[i];
        for a in 0..m {
            for b in 0..m {
                jtj[(a, b)] += w * grad[a] * grad[b];
            }
        }
    }
    let inv = jtj.clone().try_inverse().unwrap_or_else(|| jtj.pseudo_inverse(1e-14).unwrap_or(DMatrix::zeros(m, m)));
    (0..m).map(|a| (0..m).map(|b| inv[(a, b)]).collect()).collect()
}

/// Single-parameter weighted fit of the isotropic model.
pub fn fit_hi(data: &FitData, d: usize) -> Result<CdfFit> {
    fit_reduced(data, d, leading_power(d), FitModel::Hi)
}

/// Weighted fit of the sine-power expansion up to power `l`, with
/// normalization and a vanishing density at `π/ṽ` imposed exactly.
pub fn fit_expansion(data: &FitData, d: usize, l: usize) -> Result<CdfFit> {
    if d < 2 || l < leading_power(d) {
        return Err(Error::InvalidArgument(format!("need l >= 2d - 3 = {}", 2 * d.max(2) - 3)));
    }
    fit_reduced(data, d, l, FitModel::Expansion { l })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub l: usize,
    pub n_terms: usize,
    pub n_parameters: usize,
    pub chi2_per_dof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub trace: Vec<SelectionStep>,
    pub chosen: CdfFit,
    /// Why the loop stopped.
    pub stop: SelectionStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStop {
    /// `χ²/N_DoF` fell below one.
    BelowUnity,
    /// Adding a term did not lower `χ²/N_DoF`.
    StoppedDecreasing,
    /// Ran out of data points or reached the term limit.
    Exhausted,
}

/// Adds expansion terms one at a time until `χ²/N_DoF < 1`, or until it
/// stops decreasing (the previous fit is kept), or until `l_max`.
pub fn select_expansion(data: &FitData, d: usize, l_max: usize) -> Result<ModelSelection> {
    let n0 = leading_power(d);
    let mut trace = Vec::new();
    let mut prev: Option<CdfFit> = None;
    for l in n0..=l_max.max(n0) {
        let fit = match fit_expansion(data, d, l) {
            Ok(f) => f,
            Err(Error::Underdetermined { .. }) if prev.is_some() => break,
            Err(e) => return Err(e),
        };
        trace.push(SelectionStep {
            l,
            n_terms: fit.n_terms(),
            n_parameters: fit.n_parameters(),
            chi2_per_dof: fit.chi2_per_dof,
        });
        if let Some(p) = &prev {
            if fit.chi2_per_dof >= p.chi2_per_dof {
                let chosen = prev.take().unwrap();
                return Ok(ModelSelection { trace, chosen, stop: SelectionStop::StoppedDecreasing });
            }
        }
        if fit.chi2_per_dof < 1.0 {
            return Ok(ModelSelection { trace, chosen: fit, stop: SelectionStop::BelowUnity });
        }
        prev = Some(fit);
    }
    Ok(ModelSelection { trace, chosen: prev.expect("at least one fit"), stop: SelectionStop::Exhausted })
}

/// Term counts and `χ²/N_DoF` reported for the 1- to 4-qubit fits of the
/// reference data, as `(qubits, χ²/N_DoF, parameters, terms)`.
pub const REFERENCE_SELECTION: [(usize, f64, usize, usize); 4] =
    [(1, 0.62, 6, 7), (2, 0.77, 4, 5), (3, 1.16, 5, 6), (4, 7.53, 7, 8)];
