//! Projected limited-memory BFGS for box-constrained minimization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Settings of [`minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsSettings {
    pub max_iterations: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gradient_tol: f64,
    /// Stop when `stall_steps` consecutive accepted steps each change the
    /// cost by less than this fraction of its magnitude.
    pub relative_cost_tol: f64,
    pub stall_steps: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_line_search: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Max-norm of the first step, in variable units.
    pub initial_step: f64,
    /// Stop as soon as the cost reaches this value.
    pub target: Option<f64>,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            max_iterations: 2000,
            gradient_tol: 1e-9,
            relative_cost_tol: 1e-10,
            stall_steps: 10,
            memory: 10,
            max_line_search: 40,
            armijo: 1e-4,
            initial_step: 0.1,
            target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    RelativeCostTolerance,
    TargetReached,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Cost at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub reason: StopReason,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        !matches!(self.reason, StopReason::MaxIterations | StopReason::LineSearchFailed)
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `[lo, hi]`. The objective writes its gradient
/// into the second argument and returns the value.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], settings: &LbfgsSettings) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = 0;
    let finish = |x: Vec<f64>, fx: f64, g: &[f64], history: Vec<f64>, iterations: usize, reason: StopReason| {
        let pg = projected_gradient_norm(&x, g, lo, hi);
        LbfgsResult {
            x,
            f: fx,
            history,
            iterations,
            projected_gradient_norm: pg,
            reason,
        }
    };
    if n == 0 {
        return finish(x, fx, &g, history, 0, StopReason::GradientTolerance);
    }
    loop {
        if settings.target.is_some_and(|t| fx <= t) {
            return finish(x, fx, &g, history, iterations, StopReason::TargetReached);
        }
        if projected_gradient_norm(&x, &g, lo, hi) < settings.gradient_tol {
            return finish(x, fx, &g, history, iterations, StopReason::GradientTolerance);
        }
        if iterations >= settings.max_iterations {
            return finish(x, fx, &g, history, iterations, StopReason::MaxIterations);
        }
        iterations += 1;
        // variables pinned at a bound by the gradient stay fixed this step
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                pairs.clear();
            }
            let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            if !pairs.is_empty() {
                two_loop(&mut d, &pairs, &free);
            }
            if dot(&d, &g) >= 0.0 {
                pairs.clear();
                d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            }
            if pairs.is_empty() {
                let dmax = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if dmax > settings.initial_step {
                    for v in &mut d {
                        *v *= settings.initial_step / dmax;
                    }
                }
            }
            let mut alpha = 1.0;
            for _ in 0..settings.max_line_search {
                for i in 0..n {
                    xn[i] = x[i] + alpha * d[i];
                }
                project(&mut xn, lo, hi);
                let step: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                let decrease = dot(&g, &step);
                if step.iter().all(|&s| s == 0.0) || decrease >= 0.0 {
                    break;
                }
                let fnew = f(&xn, &mut gn);
                if fnew.is_finite() && fnew <= fx + settings.armijo * decrease {
                    let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
                    let sy = dot(&step, &y);
                    if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                        if pairs.len() == settings.memory.max(1) {
                            pairs.pop_front();
                        }
                        pairs.push_back((step, y, 1.0 / sy));
                    }
                    let rel = (fx - fnew).abs() / fx.abs().max(fnew.abs()).max(f64::MIN_POSITIVE);
                    x.copy_from_slice(&xn);
                    g.copy_from_slice(&gn);
                    fx = fnew;
                    history.push(fx);
                    accepted = true;
                    stalled = if rel < settings.relative_cost_tol { stalled + 1 } else { 0 };
                    if stalled >= settings.stall_steps.max(1) {
                        return finish(x, fx, &g, history, iterations, StopReason::RelativeCostTolerance);
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            return finish(x, fx, &g, history, iterations, StopReason::LineSearchFailed);
        }
    }
}

/// Applies the inverse-Hessian approximation to `d` (which holds `-g` on
/// the free set), restricted to the free variables.
fn two_loop(d: &mut [f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) {
    let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(&x, &f)| if f { x } else { 0.0 }).collect() };
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let s = masked(s);
        let a = rho * dot(&s, d);
        let y = masked(y);
        for i in 0..d.len() {
            d[i] -= a * y[i];
        }
        alphas.push(a);
    }
    let (s, y, _) = pairs.back().expect("nonempty memory");
    let gamma = dot(s, y) / dot(y, y);
    for v in d.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let s = masked(s);
        let y = masked(y);
        let b = rho * dot(&y, d);
        for i in 0..d.len() {
            d[i] += (a - b) * s[i];
        }
    }
    for (v, &f) in d.iter_mut().zip(free) {
        if !f {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let s = LbfgsSettings { gradient_tol: 1e-10, relative_cost_tol: 0.0, ..Default::default() };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &s);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of the box-restricted quadratic lies on the upper face
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 2.0 * (x[1] + 0.5);
            (x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2)
        };
        let lo = [-1.0, -1.0];
        let hi = [1.0, 1.0];
        let r = minimize(f, &[0.0, 0.9], &lo, &hi, &LbfgsSettings::default());
        assert_eq!(r.x[0], 1.0);
        assert!((r.x[1] + 0.5).abs() < 1e-8);
        assert!(r.converged());
    }

    #[test]
    fn target_stops_early() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        let s = LbfgsSettings { target: Some(0.5), ..Default::default() };
        let r = minimize(f, &[3.0], &[-10.0], &[10.0], &s);
        assert_eq!(r.reason, StopReason::TargetReached);
        assert!(r.f <= 0.5);
    }
}
