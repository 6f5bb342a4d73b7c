//! Dense complex-matrix algebra on the truncated qubit ⊗ oscillator space.
//!
//! Basis ordering is qubit index slow, motional index fast:
//! `|g,0⟩, |g,1⟩, …, |g,M⟩, |e,0⟩, …, |e,M⟩`. The qubit ground state `|g⟩`
//! is index 0, so `σ_z = |g⟩⟨g| − |e⟩⟨e|` and `|e⟩⟨g| = (σ_x − iσ_y)/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Tolerance used to decide that a generator is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|e⟩⟨g|`, the qubit raising operator in this basis.
pub fn excite() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// `|e⟩⟨e|`.
pub fn excited_projector() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE])
}

/// Linear combination `v·σ` of Pauli matrices with complex coefficients.
pub fn pauli_vector(v: [C64; 3]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(
        2,
        2,
        &[v[2], v[0] - I * v[1], v[0] + I * v[1], -v[2]],
    )
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

pub fn frobenius(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn operator_norm(a: &ComplexMatrix) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |m, &s| m.max(s))
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.ncols();
    frobenius(&(u.adjoint() * u - identity(n)))
}

/// `‖H − H†‖_F`.
pub fn hermiticity_defect(h: &ComplexMatrix) -> f64 {
    frobenius(&(h - h.adjoint()))
}

/// Ladder operators of a harmonic oscillator truncated to levels `0..=M`.
#[derive(Debug, Clone)]
pub struct FockOperators {
    truncation: usize,
    a: ComplexMatrix,
    a_dag: ComplexMatrix,
}

impl FockOperators {
    /// Number of retained excited levels `M`; the space has `M + 1` levels.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.truncation + 1
    }

    pub fn a(&self) -> &ComplexMatrix {
        &self.a
    }

    pub fn a_dag(&self) -> &ComplexMatrix {
        &self.a_dag
    }

    /// `a†a`, exactly diagonal with entries `0..=M`.
    pub fn number(&self) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|m| C64::new(m as f64, 0.0)),
        ))
    }

    /// `a† + a`.
    pub fn position(&self) -> ComplexMatrix {
        &self.a + &self.a_dag
    }
}

pub fn build_fock(truncation: usize) -> Result<FockOperators> {
    if truncation == 0 {
        return Err(Error::InvalidParameter(
            "motional truncation M must be at least 1".into(),
        ));
    }
    let dim = truncation + 1;
    let mut a = ComplexMatrix::zeros(dim, dim);
    for m in 1..dim {
        a[(m - 1, m)] = C64::new((m as f64).sqrt(), 0.0);
    }
    let a_dag = a.adjoint();
    Ok(FockOperators {
        truncation,
        a,
        a_dag,
    })
}

/// `exp(iη(a† + a))` on the truncated motional space.
pub fn displacement_coupling(eta: f64, fock: &FockOperators) -> Result<ComplexMatrix> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Lamb-Dicke parameter must be non-negative, got {eta}"
        )));
    }
    // exp(−iHt) with H = −η(a†+a), t = 1
    let generator = fock.position() * C64::new(-eta, 0.0);
    expm_hermitian_generator(&generator, 1.0)
}

/// Eigendecomposition `H = V diag(E) V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidParameter(format!(
                "generator must be square, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        let scale = frobenius(h).max(1.0);
        let defect = hermiticity_defect(h);
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(defect));
        }
        // symmetrize so roundoff asymmetry never reaches the eigensolver
        let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        Ok(Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    /// `exp(−i H t)`.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * t);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(−i H t)` for Hermitian `H`.
pub fn expm_hermitian_generator(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    Ok(HermitianEigen::new(h)?.propagator(t))
}

/// Squared modulus of `⟨a|b⟩`.
pub fn overlap_sqr(a: &nalgebra::DVector<C64>, b: &nalgebra::DVector<C64>) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Distance between two unitaries modulo a global phase:
/// `min_χ ‖A − e^{iχ}B‖_F`.
pub fn phase_insensitive_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let tr: C64 = (b.adjoint() * a).trace();
    let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { C64::new(1.0, 0.0) };
    frobenius(&(a - b * phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) < tol
    }

    #[test]
    fn fock_rejects_zero_truncation() {
        assert!(build_fock(0).is_err());
    }

    #[test]
    fn fock_two_level() {
        let f = build_fock(1).unwrap();
        let expected = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(f.a(), &expected);
        assert_eq!(f.a_dag(), &expected.adjoint());
    }

    #[test]
    fn fock_ladder_elements() {
        let f = build_fock(2).unwrap();
        assert!((f.a()[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let f = build_fock(20).unwrap();
        let n = f.a_dag() * f.a();
        for i in 0..=20 {
            for j in 0..=20 {
                let expected = if i == j { i as f64 } else { 0.0 };
                assert!((n[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-13);
            }
        }
        assert!(close(&n, &f.number(), 1e-13));
    }

    #[test]
    fn displacement_identity_at_zero() {
        let f = build_fock(6).unwrap();
        let d = displacement_coupling(0.0, &f).unwrap();
        assert!(close(&d, &identity(7), 1e-14));
        assert!(displacement_coupling(-0.1, &f).is_err());
    }

    #[test]
    fn displacement_vacuum_overlap() {
        let eta = 0.2156;
        let f = build_fock(20).unwrap();
        let d = displacement_coupling(eta, &f).unwrap();
        let expected = (-eta * eta / 2.0).exp();
        assert!((d[(0, 0)] - C64::new(expected, 0.0)).norm() < 1e-12);
        assert!((d[(0, 0)].re - 0.97700).abs() < 5e-5);
        assert!(unitarity_defect(&d) < 1e-10);
    }

    #[test]
    fn expm_zero_and_rotation() {
        let z = ComplexMatrix::zeros(3, 3);
        assert!(close(&expm_hermitian_generator(&z, 1.7).unwrap(), &identity(3), 1e-15));

        let omega = 2.0 * PI * 20e3;
        let h = sigma_x() * C64::new(omega / 2.0, 0.0);
        let u = expm_hermitian_generator(&h, PI / omega).unwrap();
        assert!(close(&u, &(sigma_x() * -I), 1e-12));
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let mut h = sigma_x();
        h[(0, 1)] = C64::new(2.0, 0.0);
        assert!(matches!(
            expm_hermitian_generator(&h, 1.0),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn tensor_mixed_product() {
        let a = sigma_x();
        let b = sigma_y() + sigma_z();
        let c = sigma_z() * I;
        let d = sigma_x() + identity(2);
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!(close(&lhs, &rhs, 1e-14));
    }

    #[test]
    fn pauli_vector_matches_components() {
        let v = [C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.7, -0.4)];
        let direct = sigma_x() * v[0] + sigma_y() * v[1] + sigma_z() * v[2];
        assert!(close(&pauli_vector(v), &direct, 1e-15));
    }

    #[test]
    fn excite_is_lowering_combination() {
        let e = (sigma_x() - sigma_y() * I) * C64::new(0.5, 0.0);
        assert!(close(&excite(), &e, 1e-15));
        let p = (identity(2) - sigma_z()) * C64::new(0.5, 0.0);
        assert!(close(&excited_projector(), &p, 1e-15));
    }

    #[test]
    fn phase_distance_ignores_global_phase() {
        let u = sigma_x() * -I;
        let v = sigma_x() * C64::from_polar(1.0, 0.3);
        assert!(phase_insensitive_distance(&u, &v) < 1e-12);
        assert!(phase_insensitive_distance(&u, &identity(2)) > 1.0);
    }
}
