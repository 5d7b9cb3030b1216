//! End-to-end behavior of the multi-start optimizer.

use proptest::prelude::*;
use spinmet::cost::{ground_truth, CostFunction, PauliSum};
use spinmet::grape::lbfgs::{minimize, LbfgsSettings};
use spinmet::grape::{optimize, Init, OptimizerConfig};
use spinmet::{evaluate, propagate, DeviceParams, StateVector};

fn h2_at(r: f64) -> PauliSum {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/h2_sto3g.json");
    let series = PauliSum::load_series(path.as_ref()).unwrap();
    series.into_iter().find(|h| (h.bond_distance().unwrap() - r).abs() < 1e-9).unwrap()
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

#[test]
fn single_qubit_flip_reaches_zero_infidelity_at_long_times() {
    let p = DeviceParams::table_one(1);
    let cost = CostFunction::infidelity(StateVector::from_bits("1").unwrap());
    let psi = StateVector::from_bits("0").unwrap();
    let cfg = OptimizerConfig { n_random_restarts: 2, seed: 3, ..Default::default() };
    // ten times the resonant pi time would be 2 us; 2x is plenty and faster
    let out = optimize(&p, &cost, &psi, 400.0, 10, &Init::Random, &cfg).unwrap();
    assert!(out.best_cost <= 1e-7, "{}", out.best_cost);
    assert_eq!(out.starts.len(), 3);
    out.best_schedule.validate(&p).unwrap();
}

#[test]
fn hydrogen_reaches_its_ground_energy_well_above_the_met() {
    let h = h2_at(0.75);
    let e0 = ground_truth(&h).unwrap().energy;
    let psi = h.hf_state().unwrap();
    let p = DeviceParams::table_one(2);
    let cost = CostFunction::pauli(h).unwrap();
    let cfg = OptimizerConfig { n_random_restarts: 2, seed: 1, target_cost: Some(e0 + 1e-8), ..Default::default() };
    let out = optimize(&p, &cost, &psi, 40.0, 10, &Init::Random, &cfg).unwrap();
    assert!(out.best_cost - e0 <= 1e-7, "{}", out.best_cost - e0);
    // the reported cost is reproduced by an independent propagation
    let fin = propagate(&p, &out.best_schedule, &psi, &cfg.propagation).unwrap().final_state;
    let again = evaluate(&cost, &fin).unwrap();
    assert!((again - out.best_cost).abs() < 1e-12);
}

#[test]
fn warm_start_needs_fewer_iterations_than_cold_start() {
    let p = DeviceParams::table_one(2);
    let near = h2_at(0.75);
    let far = h2_at(0.8);
    let (e_near, e_far) = (ground_truth(&near).unwrap().energy, ground_truth(&far).unwrap().energy);
    let (psi_near, psi_far) = (near.hf_state().unwrap(), far.hf_state().unwrap());
    let (c_near, c_far) = (CostFunction::pauli(near).unwrap(), CostFunction::pauli(far).unwrap());
    let mut warm = Vec::new();
    let mut cold = Vec::new();
    for seed in 0..10 {
        let cfg = OptimizerConfig { seed, target_cost: Some(e_near + 1e-8), ..Default::default() };
        let prev = optimize(&p, &c_near, &psi_near, 10.0, 10, &Init::Random, &cfg).unwrap();
        let cfg = OptimizerConfig { seed, target_cost: Some(e_far + 1e-8), ..Default::default() };
        let w = optimize(&p, &c_far, &psi_far, 10.0, 10, &Init::Warm(prev.best_schedule), &cfg).unwrap();
        let c = optimize(&p, &c_far, &psi_far, 10.0, 10, &Init::Random, &cfg).unwrap();
        warm.push(w.iterations);
        cold.push(c.iterations);
    }
    assert!(median(warm.clone()) < median(cold.clone()), "warm {warm:?} cold {cold:?}");
}

#[test]
fn zero_duration_returns_initial_cost() {
    let p = DeviceParams::table_one(2);
    let h = h2_at(0.75);
    let psi = h.hf_state().unwrap();
    let cost = CostFunction::pauli(h).unwrap();
    let out = optimize(&p, &cost, &psi, 0.0, 10, &Init::Random, &OptimizerConfig::default()).unwrap();
    assert_eq!(out.best_cost, evaluate(&cost, &psi).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn runs_are_deterministic_monotone_and_feasible(seed in 0u64..1000, t in 20.0f64..120.0) {
        let p = DeviceParams::table_one(2);
        let h = h2_at(0.75);
        let psi = h.hf_state().unwrap();
        let cost = CostFunction::pauli(h).unwrap();
        let cfg = OptimizerConfig { seed, n_random_restarts: 1, max_iterations: 25, ..Default::default() };
        let a = optimize(&p, &cost, &psi, t, 4, &Init::Random, &cfg).unwrap();
        let b = optimize(&p, &cost, &psi, t, 4, &Init::Random, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.cost_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.best_schedule.violations(&p).is_empty());
    }

    #[test]
    fn every_iterate_stays_inside_the_box(seed in 0u64..1000) {
        // a tilted quadratic whose minimizer lies outside the box
        let n = 6;
        let center: Vec<f64> = (0..n).map(|i| ((seed + i as u64) % 7) as f64 - 3.0).collect();
        let lo = vec![-1.0; n];
        let hi = vec![1.0; n];
        let mut seen = Vec::new();
        let f = |x: &[f64], g: &mut [f64]| -> f64 {
            seen.push(x.to_vec());
            let mut v = 0.0;
            for i in 0..n {
                let w = 1.0 + i as f64;
                let d = x[i] - center[i];
                v += 0.5 * w * d * d;
                g[i] = w * d;
            }
            v
        };
        let res = minimize(f, &vec![0.3; n], &lo, &hi, &LbfgsSettings::default());
        prop_assert!(seen.iter().all(|x| x.iter().all(|v| (-1.0..=1.0).contains(v))));
        for i in 0..n {
            prop_assert!((res.x[i] - center[i].clamp(-1.0, 1.0)).abs() < 1e-8);
        }
    }
}
