//! Cost functions: Pauli-sum expectation values and target-state
//! infidelities, Hamiltonian file ingestion and shot planning.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{eigh, inner, pauli_string, CMatrix, Pauli, ZERO};
use crate::propagation::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyUnit {
    Hartree,
    Ghz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub word: Vec<Pauli>,
    pub coeff: f64,
}

impl PauliTerm {
    pub fn label(&self) -> String {
        self.word.iter().map(|p| p.as_char()).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.word.iter().all(|&p| p == Pauli::I)
    }

    /// Bit masks `(flip, sign)` with `P|b> = i^{n_Y} (-1)^{|b & sign|} |b ^ flip>`.
    fn masks(&self) -> (usize, usize, u32) {
        let n = self.word.len();
        let (mut flip, mut sign, mut ny) = (0usize, 0usize, 0u32);
        for (q, p) in self.word.iter().enumerate() {
            let bit = 1 << (n - 1 - q);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    sign |= bit;
                    ny += 1;
                }
                Pauli::Z => sign |= bit,
            }
        }
        (flip, sign, ny)
    }

    /// Adds `coeff * P psi` into `out`.
    pub fn apply_into(&self, psi: &[Complex64], scale: f64, out: &mut [Complex64]) {
        let (flip, sign, ny) = self.masks();
        let iy = match ny % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        } * (self.coeff * scale);
        for (b, &a) in psi.iter().enumerate() {
            let s = if (b & sign).count_ones() % 2 == 0 { iy } else { -iy };
            out[b ^ flip] += s * a;
        }
    }

    /// `<psi|P|psi>` without the coefficient.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let unit = PauliTerm {
            word: self.word.clone(),
            coeff: 1.0,
        };
        let mut out = vec![ZERO; psi.len()];
        unit.apply_into(psi, 1.0, &mut out);
        inner(psi, &out).re
    }
}

/// Optional descriptive fields of a Hamiltonian file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond_distance_angstrom: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fci_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf_state: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Real linear combination of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    pub n_qubits: usize,
    pub unit: EnergyUnit,
    pub terms: Vec<PauliTerm>,
    pub metadata: HamiltonianMetadata,
}

impl PauliSum {
    /// Builds a sum from `(word, coeff)` pairs such as `("XZ", 0.5)`.
    pub fn from_terms(n_qubits: usize, unit: EnergyUnit, terms: &[(&str, f64)]) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for (i, (w, c)) in terms.iter().enumerate() {
            out.push(PauliTerm {
                word: parse_word(w, n_qubits).map_err(|m| Error::InvalidHamiltonian(format!("term {i}: {m}")))?,
                coeff: *c,
            });
        }
        let s = PauliSum {
            n_qubits,
            unit,
            terms: out,
            metadata: HamiltonianMetadata::default(),
        };
        s.check_duplicates()?;
        Ok(s)
    }

    fn check_duplicates(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, t) in self.terms.iter().enumerate() {
            if !seen.insert(t.label()) {
                return Err(Error::InvalidHamiltonian(format!("terms[{i}]: duplicate Pauli string {}", t.label())));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for t in &self.terms {
            m += pauli_string(&t.word) * Complex64::new(t.coeff, 0.0);
        }
        m
    }

    /// `H psi`.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; psi.len()];
        for t in &self.terms {
            t.apply_into(psi, 1.0, &mut out);
        }
        out
    }

    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        inner(psi, &self.apply(psi)).re
    }

    pub fn abs_coeff_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn bond_distance(&self) -> Option<f64> {
        self.metadata.bond_distance_angstrom
    }

    /// Hartree-Fock initial state from the `hf_state` metadata.
    pub fn hf_state(&self) -> Result<StateVector> {
        let bits = self
            .metadata
            .hf_state
            .as_deref()
            .ok_or_else(|| Error::MissingMetadata("hf_state".into()))?;
        if bits.len() != self.n_qubits {
            return Err(Error::InvalidHamiltonian(format!(
                "hf_state {bits:?} has {} bits, expected {}",
                bits.len(),
                self.n_qubits
            )));
        }
        StateVector::from_bits(bits)
    }

    /// Parses one Hamiltonian object and checks `fci_energy` for `n <= 4`.
    pub fn from_json_str(s: &str, source_name: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| parse_err(source_name, e.to_string()))?;
        let h = parse_pauli_sum(&v, "", source_name)?;
        h.check_reference()?;
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = crate::error::read_text(path)?;
        Self::from_json_str(&s, &path.display().to_string())
    }

    /// Parses either `{"series": [...]}`, a bare array, or a single object.
    pub fn series_from_json_str(s: &str, source_name: &str) -> Result<Vec<Self>> {
        let v: Value = serde_json::from_str(s).map_err(|e| parse_err(source_name, e.to_string()))?;
        let (items, prefix) = match &v {
            Value::Object(o) if o.contains_key("series") => match &o["series"] {
                Value::Array(a) => (a.clone(), "series"),
                _ => return Err(parse_err(source_name, "series: expected an array".into())),
            },
            Value::Array(a) => (a.clone(), ""),
            _ => (vec![v.clone()], ""),
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let path = format!("{prefix}[{i}].");
            let h = parse_pauli_sum(item, &path, source_name)?;
            h.check_reference()?;
            out.push(h);
        }
        Ok(out)
    }

    pub fn load_series(path: &Path) -> Result<Vec<Self>> {
        let s = crate::error::read_text(path)?;
        Self::series_from_json_str(&s, &path.display().to_string())
    }

    fn check_reference(&self) -> Result<()> {
        if let (Some(fci), true) = (self.metadata.fci_energy, self.n_qubits <= 4) {
            let g = ground_truth(self)?;
            if (g.energy - fci).abs() > 1e-9 {
                return Err(Error::InvalidHamiltonian(format!(
                    "fci_energy {fci} differs from the minimum eigenvalue {}",
                    g.energy
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::json!({
            "n_qubits": self.n_qubits,
            "unit": self.unit,
            "terms": self.terms.iter().map(|t| serde_json::json!({"pauli": t.label(), "coeff": t.coeff})).collect::<Vec<_>>(),
            "metadata": self.metadata,
        })
    }
}

fn parse_err(source_name: &str, message: String) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        message,
    }
}

fn parse_word(w: &str, n: usize) -> std::result::Result<Vec<Pauli>, String> {
    let chars: Vec<char> = w.chars().collect();
    if chars.len() != n {
        return Err(format!("Pauli string {w:?} has length {}, expected {n}", chars.len()));
    }
    chars
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            Pauli::from_char(c).ok_or_else(|| format!("character {c:?} at position {i} of {w:?} is not one of I, X, Y, Z"))
        })
        .collect()
}

fn parse_pauli_sum(v: &Value, path: &str, src: &str) -> Result<PauliSum> {
    let obj = v
        .as_object()
        .ok_or_else(|| parse_err(src, format!("{path}: expected an object")))?;
    let n = obj
        .get("n_qubits")
        .and_then(Value::as_u64)
        .ok_or_else(|| parse_err(src, format!("{path}n_qubits: missing or not a non-negative integer")))?
        as usize;
    if n == 0 || n > 12 {
        return Err(parse_err(src, format!("{path}n_qubits: {n} outside 1..=12")));
    }
    let unit = match obj.get("unit") {
        None => EnergyUnit::Hartree,
        Some(u) => serde_json::from_value(u.clone())
            .map_err(|_| parse_err(src, format!("{path}unit: expected \"hartree\" or \"ghz\", got {u}")))?,
    };
    let terms_v = obj
        .get("terms")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(src, format!("{path}terms: missing or not an array")))?;
    let mut terms = Vec::with_capacity(terms_v.len());
    for (i, t) in terms_v.iter().enumerate() {
        let here = format!("{path}terms[{i}]");
        let word = t
            .get("pauli")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(src, format!("{here}.pauli: missing or not a string")))?;
        let word = parse_word(word, n).map_err(|m| parse_err(src, format!("{here}.pauli: {m}")))?;
        let coeff = match t.get("coeff") {
            Some(Value::Number(x)) => x.as_f64().unwrap_or(f64::NAN),
            Some(Value::Array(_)) | Some(Value::Object(_)) => {
                return Err(parse_err(
                    src,
                    format!("{here}.coeff: complex coefficient; the operator must be Hermitian with real coefficients"),
                ))
            }
            _ => return Err(parse_err(src, format!("{here}.coeff: missing or not a number"))),
        };
        if !coeff.is_finite() {
            return Err(parse_err(src, format!("{here}.coeff: not finite")));
        }
        terms.push(PauliTerm { word, coeff });
    }
    if terms.is_empty() {
        return Err(parse_err(src, format!("{path}terms: empty Pauli sum")));
    }
    let metadata = match obj.get("metadata") {
        None => HamiltonianMetadata::default(),
        Some(m) => serde_json::from_value(m.clone()).map_err(|e| parse_err(src, format!("{path}metadata: {e}")))?,
    };
    let s = PauliSum {
        n_qubits: n,
        unit,
        terms,
        metadata,
    };
    s.check_duplicates()
        .map_err(|e| parse_err(src, format!("{path}{}", e.to_string().trim_start_matches("invalid hamiltonian: "))))?;
    Ok(s)
}

/// Exact ground state of a Pauli sum.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub energy: f64,
    pub state: StateVector,
    /// Gap to the first excited level.
    pub gap: f64,
    /// Set when the gap is below `1e-10`.
    pub degenerate: bool,
}

pub fn ground_truth(h: &PauliSum) -> Result<GroundTruth> {
    if h.n_qubits > 12 {
        return Err(Error::InvalidArgument(format!("{} qubits is too large for dense diagonalization", h.n_qubits)));
    }
    let e = eigh(&h.to_dense());
    let mut order: Vec<usize> = (0..e.values.len()).collect();
    order.sort_by(|&a, &b| e.values[a].total_cmp(&e.values[b]));
    let g = order[0];
    let gap = order.get(1).map_or(f64::INFINITY, |&k| e.values[k] - e.values[g]);
    let amps: Vec<Complex64> = e.vectors.column(g).iter().copied().collect();
    Ok(GroundTruth {
        energy: e.values[g],
        state: StateVector::normalized(amps)?,
        gap,
        degenerate: gap < 1e-10,
    })
}

/// Objective minimized by the pulse optimizer.
#[derive(Debug, Clone)]
pub enum CostFunction {
    /// `<psi|H|psi>`; the floor is the ground energy.
    PauliExpectation { hamiltonian: PauliSum, reference_floor: f64 },
    /// `1 - |<target|psi>|^2`; the floor is zero.
    Infidelity { target: StateVector },
}

impl CostFunction {
    pub fn pauli(hamiltonian: PauliSum) -> Result<Self> {
        let floor = ground_truth(&hamiltonian)?.energy;
        Ok(CostFunction::PauliExpectation {
            hamiltonian,
            reference_floor: floor,
        })
    }

    pub fn infidelity(target: StateVector) -> Self {
        CostFunction::Infidelity { target }
    }

    pub fn reference_floor(&self) -> f64 {
        match self {
            CostFunction::PauliExpectation { reference_floor, .. } => *reference_floor,
            CostFunction::Infidelity { .. } => 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CostFunction::PauliExpectation { hamiltonian, .. } => hamiltonian.dim(),
            CostFunction::Infidelity { target } => target.dim(),
        }
    }

    /// `C psi` for the cost operator `C` with `evaluate = <psi|C|psi>`.
    pub fn apply_operator(&self, psi: &[Complex64]) -> Vec<Complex64> {
        match self {
            CostFunction::PauliExpectation { hamiltonian, .. } => hamiltonian.apply(psi),
            CostFunction::Infidelity { target } => {
                let phi = target.amplitudes();
                let ov = inner(phi, psi);
                psi.iter().zip(phi).map(|(&p, &f)| p - f * ov).collect()
            }
        }
    }

    pub fn value(&self, psi: &[Complex64]) -> f64 {
        match self {
            CostFunction::PauliExpectation { hamiltonian, .. } => hamiltonian.expectation(psi),
            CostFunction::Infidelity { target } => 1.0 - inner(target.amplitudes(), psi).norm_sqr(),
        }
    }
}

/// Exact cost of `psi`.
pub fn evaluate(cost: &CostFunction, psi: &StateVector) -> Result<f64> {
    if psi.dim() != cost.dim() {
        return Err(Error::DimensionMismatch {
            expected: cost.dim(),
            got: psi.dim(),
        });
    }
    Ok(cost.value(psi.amplitudes()))
}

/// Per-term shot counts for a Hoeffding-bounded energy estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    /// Real-valued allocation before rounding up.
    pub ideal: Vec<f64>,
    pub per_term: Vec<u64>,
    pub total: u64,
    pub epsilon: f64,
    pub delta: f64,
}

/// `N_P = ceil(|c_P| sum_Q |c_Q| (2 / eps^2) ln(2 / delta))`, identity
/// term included.
pub fn plan_shots(h: &PauliSum, epsilon: f64, delta: f64) -> Result<ShotPlan> {
    if h.terms.is_empty() {
        return Err(Error::InvalidHamiltonian("empty Pauli sum".into()));
    }
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need epsilon > 0 and 0 < delta < 1, got {epsilon}, {delta}"
        )));
    }
    let norm1 = h.abs_coeff_sum();
    let factor = 2.0 / (epsilon * epsilon) * (2.0 / delta).ln();
    let ideal: Vec<f64> = h.terms.iter().map(|t| t.coeff.abs() * norm1 * factor).collect();
    let per_term: Vec<u64> = ideal.iter().map(|&x| (x.ceil() as u64).max(1)).collect();
    Ok(ShotPlan {
        total: per_term.iter().sum(),
        ideal,
        per_term,
        epsilon,
        delta,
    })
}

/// Sampled estimate `sum_P c_P (N_P^+ - N_P^-) / N_P`.
pub fn simulate_measurement_estimate(h: &PauliSum, psi: &StateVector, plan: &ShotPlan, seed: u64) -> Result<f64> {
    if plan.per_term.len() != h.terms.len() {
        return Err(Error::InvalidArgument(format!(
            "plan covers {} terms, hamiltonian has {}",
            plan.per_term.len(),
            h.terms.len()
        )));
    }
    if psi.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: psi.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = 0.0;
    for (t, &n) in h.terms.iter().zip(&plan.per_term) {
        if n == 0 {
            continue;
        }
        let mean = t.expectation(psi.amplitudes()).clamp(-1.0, 1.0);
        let p_plus = 0.5 * (1.0 + mean);
        let plus = Binomial::new(n, p_plus)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(&mut rng);
        est += t.coeff * (2.0 * plus as f64 - n as f64) / n as f64;
    }
    Ok(est)
}
