//! MET scans, chained bond-distance sweeps and device-parameter sweeps.

use spinmet::cost::{CostFunction, PauliSum};
use spinmet::grape::{CarrierMode, OptimizerConfig};
use spinmet::met::{bond_distance_sweep, linear_grid, parameter_sweep, scan_met, MetScanConfig, MetScanResult, ScanDirection, SweepAxis};
use spinmet::propagation::exchange_unitary_exact;
use spinmet::{DeviceParams, StateVector};
use num_complex::Complex64;

fn h2_series() -> Vec<PauliSum> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/h2_sto3g.json");
    PauliSum::load_series(path.as_ref()).unwrap()
}

fn h2_at(r: f64) -> PauliSum {
    h2_series().into_iter().find(|h| (h.bond_distance().unwrap() - r).abs() < 1e-9).unwrap()
}

/// Resonant pi time for the maximal combined I/Q amplitude: the RWA drive
/// term is (kappa/4)(I sx + Q sy), so the Bloch vector turns at kappa*|I+iQ|
/// cycles per ns and a flip takes half of that period.
fn pi_time(p: &DeviceParams) -> f64 {
    let amp = std::f64::consts::SQRT_2 * p.iq_max_mhz * 1e-3;
    1.0 / (p.drive_coupling * amp)
}

fn flip_met(p: &DeviceParams) -> MetScanResult {
    let tp = pi_time(p);
    let cfg = MetScanConfig { t_grid: linear_grid(0.0, 1.5 * tp, 16), ..Default::default() };
    let grape = OptimizerConfig { n_random_restarts: 2, seed: 11, ..Default::default() };
    let cost = CostFunction::infidelity(StateVector::from_bits("1").unwrap());
    scan_met(p, &cost, &StateVector::from_bits("0").unwrap(), &cfg, &grape).unwrap()
}

fn check_bracket(r: &MetScanResult) {
    let (lo, hi) = r.met_bracket;
    let met = r.met_estimate.unwrap();
    assert_eq!(Some(met), hi);
    assert!(r.record_at(hi.unwrap()).unwrap().passed);
    if let Some(lo) = lo {
        assert!(lo < met);
        assert!(!r.record_at(lo).unwrap().passed);
    }
}

#[test]
fn target_equal_to_start_has_zero_met() {
    let p = DeviceParams::table_one(2);
    let psi = StateVector::from_bits("01").unwrap();
    let cfg = MetScanConfig { t_grid: vec![0.0, 1.0, 2.0], ..Default::default() };
    let r = scan_met(&p, &CostFunction::infidelity(psi.clone()), &psi, &cfg, &OptimizerConfig::default()).unwrap();
    assert_eq!(r.met_estimate, Some(0.0));
    assert_eq!(r.met_bracket, (None, Some(0.0)));
}

#[test]
fn single_qubit_flip_met_is_the_pi_time() {
    let p = DeviceParams::table_one(1);
    let r = flip_met(&p);
    let met = r.met_estimate.unwrap();
    assert!((met / pi_time(&p) - 1.0).abs() < 0.02, "{met} vs {}", pi_time(&p));
    assert!(r.met_bracket.1.unwrap() - r.met_bracket.0.unwrap() <= 0.1 + 1e-12);
    check_bracket(&r);
    assert!(r.failures_above_met.is_empty());
}

#[test]
fn flip_met_is_inversely_proportional_to_the_drive_bound() {
    let base = DeviceParams::table_one(1);
    let rows = parameter_sweep(&base, SweepAxis::IqMax, &[1.0, 2.0], |p| Ok(flip_met(p).met_estimate.unwrap())).unwrap();
    let ratio = rows[0].1 / rows[1].1;
    assert!((ratio - 2.0).abs() < 0.04, "{rows:?}");
}

/// Drive-free rotation inside the {|01>,|10>} block with degenerate qubits;
/// the target is what full exchange produces after `tau` at the base bound.
fn exchange_met(p: &DeviceParams, target: &StateVector) -> f64 {
    let cfg = MetScanConfig { t_grid: linear_grid(0.0, 1.0, 11), refine_resolution: Some(1e-3), ..Default::default() };
    let grape = OptimizerConfig {
        optimize_drives: false,
        carrier_mode: CarrierMode::Frozen,
        n_random_restarts: 1,
        ..Default::default()
    };
    let r = scan_met(p, &CostFunction::infidelity(target.clone()), &StateVector::from_bits("01").unwrap(), &cfg, &grape).unwrap();
    check_bracket(&r);
    r.met_estimate.unwrap()
}

#[test]
fn exchange_met_scales_inversely_with_the_exchange_bound() {
    let base = DeviceParams::table_one(2).with_offset_scale(0.0);
    let tau = 0.25;
    let u = exchange_unitary_exact(base.j_max_ghz, 0.0, 0.0, tau);
    let target = StateVector::normalized((0..4).map(|i| u[(i, 1)]).collect::<Vec<Complex64>>()).unwrap();
    let rows = parameter_sweep(&base, SweepAxis::JMax, &[1.0, 0.5], |p| Ok(exchange_met(p, &target))).unwrap();
    assert!((rows[0].1 - tau).abs() < 2e-3, "{rows:?}");
    let ratio = rows[1].1 / rows[0].1;
    assert!((ratio - 2.0).abs() < 0.1, "{rows:?}");
}

fn h2_scan(restarts: usize) -> MetScanResult {
    let h = h2_at(0.75);
    let psi = h.hf_state().unwrap();
    let cost = CostFunction::pauli(h).unwrap();
    let cfg = MetScanConfig { t_grid: linear_grid(0.0, 12.0, 13), refine_resolution: None, ..Default::default() };
    let grape = OptimizerConfig { n_random_restarts: restarts, seed: 5, ..Default::default() };
    scan_met(&DeviceParams::table_one(2), &cost, &psi, &cfg, &grape).unwrap()
}

#[test]
fn hydrogen_has_a_finite_met_and_stays_below_threshold_above_it() {
    let r = h2_scan(3);
    let met = r.met_estimate.expect("a grid point passes");
    assert!(met > 0.0);
    check_bracket(&r);
    for rec in &r.records {
        if rec.t_ns >= met {
            assert!(rec.delta <= r.threshold, "T = {}: {}", rec.t_ns, rec.delta);
        }
    }
    let env = r.envelope();
    assert!(env.windows(2).all(|w| w[1].1 <= w[0].1));
    // more restarts move the MET by at most one grid step
    let more = h2_scan(6).met_estimate.unwrap();
    assert!((more - met).abs() <= 1.0 + 1e-12, "{met} vs {more}");
}

#[test]
fn descending_scan_finds_the_same_met() {
    let p = DeviceParams::table_one(1);
    let tp = pi_time(&p);
    let cfg = MetScanConfig {
        t_grid: linear_grid(0.0, 1.5 * tp, 16),
        scan_direction: ScanDirection::Descending,
        refine_resolution: None,
        ..Default::default()
    };
    let grape = OptimizerConfig { n_random_restarts: 2, seed: 2, ..Default::default() };
    let cost = CostFunction::infidelity(StateVector::from_bits("1").unwrap());
    let r = scan_met(&p, &cost, &StateVector::from_bits("0").unwrap(), &cfg, &grape).unwrap();
    let met = r.met_estimate.unwrap();
    assert!(met >= tp && met - tp <= 1.5 * tp / 15.0 + 1e-9, "{met}");
}

#[test]
fn single_entry_sweep_is_a_plain_scan() {
    let h = h2_at(0.75);
    let p = DeviceParams::table_one(2);
    let cfg = MetScanConfig { t_grid: vec![2.0, 6.0], refine_resolution: None, ..Default::default() };
    let grape = OptimizerConfig { n_random_restarts: 1, seed: 4, ..Default::default() };
    let sweep = bond_distance_sweep(std::slice::from_ref(&h), &p, &cfg, ScanDirection::Ascending, &grape).unwrap();
    let plain = scan_met(&p, &CostFunction::pauli(h.clone()).unwrap(), &h.hf_state().unwrap(), &cfg, &grape).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].scan, plain);
}

#[test]
fn hartree_fock_ground_states_have_zero_met() {
    let entry = |r: f64| {
        let doc = format!(
            r#"{{"n_qubits": 2, "unit": "hartree", "terms": [{{"pauli": "ZI", "coeff": -0.5}}, {{"pauli": "IZ", "coeff": {r}}}],
                "metadata": {{"bond_distance_angstrom": {r}, "hf_state": "01"}}}}"#
        );
        PauliSum::from_json_str(&doc, "inline").unwrap()
    };
    let series = vec![entry(1.0), entry(2.0)];
    let cfg = MetScanConfig { t_grid: vec![0.0, 1.0], ..Default::default() };
    for dir in [ScanDirection::Ascending, ScanDirection::Descending] {
        let out = bond_distance_sweep(&series, &DeviceParams::table_one(2), &cfg, dir, &OptimizerConfig::default()).unwrap();
        assert!(out.iter().all(|b| b.scan.met_estimate == Some(0.0)));
        assert_eq!(out[1].bond_distance_angstrom, 2.0);
    }
}

#[test]
fn missing_hartree_fock_metadata_is_rejected() {
    let h = PauliSum::from_json_str(
        r#"{"n_qubits": 1, "unit": "hartree", "terms": [{"pauli": "Z", "coeff": 1.0}], "metadata": {"bond_distance_angstrom": 1.0}}"#,
        "inline",
    )
    .unwrap();
    let cfg = MetScanConfig { t_grid: vec![1.0], ..Default::default() };
    let err = bond_distance_sweep(&[h], &DeviceParams::table_one(1), &cfg, ScanDirection::Ascending, &OptimizerConfig::default());
    assert!(matches!(err, Err(spinmet::Error::MissingMetadata(_))));
}

#[test]
fn chained_second_bond_is_no_worse_than_a_cold_start() {
    let series: Vec<PauliSum> = vec![h2_at(0.75), h2_at(0.8)];
    let p = DeviceParams::table_one(2);
    let cfg = MetScanConfig { t_grid: vec![8.0], refine_resolution: None, ..Default::default() };
    let mut warm = Vec::new();
    let mut cold = Vec::new();
    for seed in 0..5 {
        let grape = OptimizerConfig { n_random_restarts: 1, seed, ..Default::default() };
        let chained = bond_distance_sweep(&series, &p, &cfg, ScanDirection::Ascending, &grape).unwrap();
        let alone = scan_met(&p, &CostFunction::pauli(series[1].clone()).unwrap(), &series[1].hf_state().unwrap(), &cfg, &grape).unwrap();
        warm.push(chained[1].scan.records[0].delta);
        cold.push(alone.records[0].delta);
    }
    warm.sort_by(f64::total_cmp);
    cold.sort_by(f64::total_cmp);
    assert!(warm[2] <= 1e-7, "{warm:?}");
    // both stop once they reach a tenth of the threshold
    assert!(warm[2] <= cold[2].max(1e-8), "warm {warm:?} cold {cold:?}");
}

#[test]
fn unit_factor_sweep_is_bitwise_identical_to_the_base_run() {
    let base = DeviceParams::table_one(1);
    let via_sweep = parameter_sweep(&base, SweepAxis::DeltaB, &[1.0], |p| Ok(flip_met(p))).unwrap();
    assert_eq!(via_sweep[0].1, flip_met(&base));
}

#[test]
fn invalid_configs_are_rejected() {
    let p = DeviceParams::table_one(1);
    let psi = StateVector::from_bits("0").unwrap();
    let cost = CostFunction::infidelity(psi.clone());
    for cfg in [
        MetScanConfig::default(),
        MetScanConfig { t_grid: vec![2.0, 1.0], ..Default::default() },
        MetScanConfig { t_grid: vec![1.0], threshold: 0.0, ..Default::default() },
    ] {
        assert!(scan_met(&p, &cost, &psi, &cfg, &OptimizerConfig::default()).is_err());
    }
    assert!(parameter_sweep(&p, SweepAxis::IqMax, &[0.0], |_| Ok(())).is_err());
}
