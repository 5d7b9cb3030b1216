//! Small dense complex linear algebra used by the propagators and the
//! gradient code.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-qubit Pauli labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Kronecker product of two matrices.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Full operator of a Pauli string. Qubit 0 is the most significant bit.
pub fn pauli_string(word: &[Pauli]) -> CMatrix {
    let dim = 1usize << word.len();
    let mut out = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut row = 0usize;
        let mut amp = ONE;
        for (q, p) in word.iter().enumerate() {
            let bit = (col >> (word.len() - 1 - q)) & 1;
            let m = p.matrix();
            // exactly one nonzero entry per column of a Pauli matrix
            let (r, v) = if m[0][bit] != ZERO { (0, m[0][bit]) } else { (1, m[1][bit]) };
            row = (row << 1) | r;
            amp *= v;
        }
        out[(row, col)] = amp;
    }
    out
}

/// Pauli `p` acting on qubit `q` of an `n`-qubit register.
pub fn pauli_on(n: usize, q: usize, p: Pauli) -> CMatrix {
    let mut word = vec![Pauli::I; n];
    word[q] = p;
    pauli_string(&word)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Frobenius norm of `U^dagger U - 1`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    (u.adjoint() * u - CMatrix::identity(d, d)).norm()
}

/// Frobenius norm of `H - H^dagger`.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    (h - h.adjoint()).norm()
}

/// Eigendecomposition of a Hermitian matrix, `H = V diag(values) V^dagger`.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Hermitian eigendecomposition with a closed form for 2x2 blocks.
pub fn eigh(h: &CMatrix) -> Eigh {
    if h.nrows() == 2 {
        return eigh2(h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
    }
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let e = nalgebra::SymmetricEigen::new(sym);
    let mut vectors = e.eigenvectors;
    orthonormalize_columns(&mut vectors);
    Eigh {
        values: e.eigenvalues.iter().copied().collect(),
        vectors,
    }
}

/// One modified Gram-Schmidt sweep over the columns, removing roundoff
/// drift from a matrix that is unitary in exact arithmetic.
pub fn orthonormalize_columns(v: &mut CMatrix) {
    let (d, k) = v.shape();
    for c in 0..k {
        for prev in 0..c {
            let mut proj = ZERO;
            for r in 0..d {
                proj += v[(r, prev)].conj() * v[(r, c)];
            }
            for r in 0..d {
                let x = v[(r, prev)] * proj;
                v[(r, c)] -= x;
            }
        }
        let nrm = (0..d).map(|r| v[(r, c)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..d {
            v[(r, c)] /= nrm;
        }
    }
}

fn eigh2(a: f64, d: f64, b: Complex64) -> Eigh {
    let m = 0.5 * (a + d);
    let h = 0.5 * (a - d);
    let r = h.hypot(b.norm());
    if r == 0.0 {
        return Eigh {
            values: vec![m, m],
            vectors: CMatrix::identity(2, 2),
        };
    }
    // eigenvector of m + r, built from the better-conditioned row
    let (v0, v1) = if h >= 0.0 {
        (Complex64::new(r + h, 0.0), b.conj())
    } else {
        (b, Complex64::new(r - h, 0.0))
    };
    let nrm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    let (v0, v1) = (v0 / nrm, v1 / nrm);
    let vectors = CMatrix::from_row_slice(2, 2, &[v0, -v1.conj(), v1, v0.conj()]);
    Eigh {
        values: vec![m + r, m - r],
        vectors,
    }
}

impl Eigh {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(-i * scale * H)`.
    pub fn exp(&self, scale: f64) -> CMatrix {
        let d = self.dim();
        let mut left = self.vectors.clone();
        for c in 0..d {
            let ph = Complex64::from_polar(1.0, -scale * self.values[c]);
            for r in 0..d {
                left[(r, c)] *= ph;
            }
        }
        left * self.vectors.adjoint()
    }

    /// `V^dagger v`.
    pub fn to_eigenbasis(&self, v: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim();
        for a in 0..d {
            let mut acc = ZERO;
            for i in 0..d {
                acc += self.vectors[(i, a)].conj() * v[i];
            }
            out[a] = acc;
        }
    }

    /// `V c`.
    pub fn from_eigenbasis(&self, c: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim();
        for i in 0..d {
            let mut acc = ZERO;
            for a in 0..d {
                acc += self.vectors[(i, a)] * c[a];
            }
            out[i] = acc;
        }
    }

    /// Applies `exp(-i * scale * H)` to `v` in place. `buf` must have length `dim`.
    pub fn apply_exp(&self, scale: f64, v: &mut [Complex64], buf: &mut [Complex64]) {
        self.to_eigenbasis(v, buf);
        for (a, c) in buf.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -scale * self.values[a]);
        }
        self.from_eigenbasis(buf, v);
    }

    /// Divided-difference kernel of the exponential at `X = -i * scale * H`:
    /// `(e^{x_a} - e^{x_b}) / (x_a - x_b)`, with `e^{x_a}` on the diagonal.
    pub fn frechet_kernel(&self, scale: f64) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, d, |a, b| {
            let la = self.values[a];
            let lb = self.values[b];
            let mid = Complex64::from_polar(1.0, -0.5 * scale * (la + lb));
            mid * sinc(0.5 * scale * (la - lb))
        })
    }

    /// Directional derivative of `exp(X)` at `X = -i * scale * H` along `dx`.
    pub fn frechet(&self, scale: f64, dx: &CMatrix) -> CMatrix {
        let phi = self.frechet_kernel(scale);
        let inner = self.vectors.adjoint() * dx * &self.vectors;
        let had = inner.component_mul(&phi);
        &self.vectors * had * self.vectors.adjoint()
    }
}

pub fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        let y2 = y * y;
        1.0 - y2 / 6.0 + y2 * y2 / 120.0
    } else {
        y.sin() / y
    }
}

/// `exp(-i * scale * H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, scale: f64) -> CMatrix {
    eigh(h).exp(scale)
}

/// Matrix-vector product into a new vector.
pub fn mat_vec(m: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; m.nrows()];
    for r in 0..m.nrows() {
        let mut acc = ZERO;
        for c in 0..m.ncols() {
            acc += m[(r, c)] * v[c];
        }
        out[r] = acc;
    }
    out
}

/// `<a|b>`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(d: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Truncated Taylor series with scaling and squaring.
    fn taylor_expm(x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        let s = 6;
        let y = x / Complex64::new(f64::powi(2.0, s), 0.0);
        let mut term = CMatrix::identity(d, d);
        let mut acc = CMatrix::identity(d, d);
        for k in 1..30 {
            term = &term * &y / Complex64::new(k as f64, 0.0);
            acc += &term;
        }
        for _ in 0..s {
            acc = &acc * &acc;
        }
        acc
    }

    #[test]
    fn pauli_products() {
        let xy = pauli_string(&[Pauli::X, Pauli::Y]);
        let x = pauli_on(2, 0, Pauli::X);
        let y = pauli_on(2, 1, Pauli::Y);
        assert!((xy - x * y).norm() < 1e-15);
        let z0 = pauli_on(2, 0, Pauli::Z);
        // qubit 0 is the most significant bit
        assert_eq!(z0[(2, 2)], -ONE);
        assert_eq!(z0[(1, 1)], ONE);
    }

    #[test]
    fn eigh_reconstructs() {
        for d in [2, 4, 8] {
            for seed in 0..5 {
                let h = random_hermitian(d, seed);
                let e = eigh(&h);
                let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    d,
                    e.values.iter().map(|&v| Complex64::new(v, 0.0)),
                ));
                let rec = &e.vectors * lam * e.vectors.adjoint();
                assert!((rec - &h).norm() < 1e-12, "d={d}");
                assert!(unitarity_defect(&e.vectors) < 1e-12);
            }
        }
    }

    #[test]
    fn eigh2_degenerate_and_diagonal() {
        let h = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]);
        let e = eigh(&h);
        assert_eq!(e.values, vec![1.0, 1.0]);
        let h = CMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE * 3.0]);
        let e = eigh(&h);
        assert!((e.exp(0.3) - taylor_expm(&(h * Complex64::new(0.0, -0.3)))).norm() < 1e-13);
    }

    #[test]
    fn exp_matches_taylor() {
        for d in [2, 4] {
            let h = random_hermitian(d, 11);
            let u = expm_hermitian(&h, 0.7);
            let reference = taylor_expm(&(&h * Complex64::new(0.0, -0.7)));
            assert!((u - reference).norm() < 1e-12);
        }
    }

    #[test]
    fn frechet_matches_finite_difference() {
        for d in [2, 4] {
            let h = random_hermitian(d, 3);
            let e = random_hermitian(d, 4);
            let scale = 0.9;
            let dx = &e * Complex64::new(0.0, -scale);
            let analytic = eigh(&h).frechet(scale, &dx);
            let eps = 1e-6;
            let plus = expm_hermitian(&(&h + &e * Complex64::new(eps, 0.0)), scale);
            let minus = expm_hermitian(&(&h - &e * Complex64::new(eps, 0.0)), scale);
            let fd = (plus - minus) / Complex64::new(2.0 * eps, 0.0);
            assert!((analytic - fd).norm() < 1e-8, "d={d}");
        }
    }

    #[test]
    fn apply_exp_matches_matrix() {
        let h = random_hermitian(4, 9);
        let e = eigh(&h);
        let v: Vec<Complex64> = (0..4).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let mut w = v.clone();
        let mut buf = vec![ZERO; 4];
        e.apply_exp(1.3, &mut w, &mut buf);
        let reference = mat_vec(&e.exp(1.3), &v);
        for (a, b) in w.iter().zip(&reference) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
