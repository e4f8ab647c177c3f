//! Two-qubit states and measurements for a frequency-bin photon pair.
//!
//! The signal and idler photons each carry a qubit encoded in two frequency
//! bins |0⟩ and |1⟩ separated by Δω. Basis order throughout the crate is
//! *signal-major*: index 0..3 ↔ |00⟩, |01⟩, |10⟩, |11⟩ where the first
//! symbol is the signal bin and the second the idler bin.
//!
//! The source nominally produces the phase-parametrized Bell state
//!
//! ```text
//! |Φ(θ)⟩ = (|00⟩ + e^{iθ}|11⟩)/√2
//! ```
//!
//! and time-resolved detection behind phase-stable interferometers realizes
//! equatorial projectors
//!
//! ```text
//! |π(φs, φi)⟩ = ½ (|0⟩ + e^{iφs}|1⟩) ⊗ (|0⟩ + e^{iφi}|1⟩),
//! ```
//!
//! where the detection times set the phases via φ = Δω·t (the caller owns
//! that mapping and its sign convention). For the Bell state the projector
//! expectation is ¼·(1 + cos(φs + φi − θ)) — the fringe every correlator in
//! [`crate::analysis`] rides on.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Complex scalar used for all state algebra.
pub type C64 = Complex64;
/// Dense 4×4 complex matrix (two-qubit operator).
pub type Matrix = Matrix4<Complex64>;
/// Two-qubit ket.
pub type Ket = Vector4<Complex64>;

/// Maximum allowed |ρ − ρ†| entry for a valid density matrix.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Maximum allowed |Tr ρ − 1| for a valid density matrix.
pub const TRACE_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated before a matrix is rejected as
/// non-positive; eigenvalues above this floor are clamped to zero where a
/// nonnegative spectrum is required (matrix square roots, fidelity).
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

const I: C64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    Complex64::new(re, 0.0)
}

/// 2×2 identity.
pub fn pauli_identity() -> Matrix2<C64> {
    Matrix2::identity()
}

/// Pauli σX.
pub fn pauli_x() -> Matrix2<C64> {
    Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0))
}

/// Pauli σY.
pub fn pauli_y() -> Matrix2<C64> {
    Matrix2::new(c(0.0), -I, I, c(0.0))
}

/// Pauli σZ.
pub fn pauli_z() -> Matrix2<C64> {
    Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

/// Equatorial Pauli cos(φ)·σX + sin(φ)·σY.
pub fn pauli_equatorial(phi: f64) -> Matrix2<C64> {
    pauli_x() * c(phi.cos()) + pauli_y() * c(phi.sin())
}

/// Kronecker product with the signal factor first: index = 2·s + i.
pub fn tensor(signal: &Matrix2<C64>, idler: &Matrix2<C64>) -> Matrix {
    let mut out = Matrix::zeros();
    for s_row in 0..2 {
        for s_col in 0..2 {
            for i_row in 0..2 {
                for i_col in 0..2 {
                    out[(2 * s_row + i_row, 2 * s_col + i_col)] =
                        signal[(s_row, s_col)] * idler[(i_row, i_col)];
                }
            }
        }
    }
    out
}

fn max_abs_entry(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian 4×4 matrix: real eigenvalues plus the
/// unitary of column eigenvectors. Input is symmetrized first so that
/// accumulated floating-point asymmetry cannot leak into the decomposition.
pub(crate) fn hermitian_eigen(m: &Matrix) -> (Vector4<f64>, Matrix) {
    let herm = (m + m.adjoint()) * c(0.5);
    let eig = nalgebra::linalg::SymmetricEigen::new(herm);
    (eig.eigenvalues, eig.eigenvectors)
}

/// Square root of a positive-semidefinite Hermitian matrix. Eigenvalues in
/// [`EIGENVALUE_FLOOR`], 0) are clamped to zero; anything lower is an error.
fn sqrtm_psd(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = hermitian_eigen(m);
    let mut diag = Matrix::zeros();
    for k in 0..4 {
        let lambda = vals[k];
        if lambda < EIGENVALUE_FLOOR {
            return Err(Error::State(format!(
                "matrix square root of a non-positive matrix (eigenvalue {lambda:.3e})"
            )));
        }
        diag[(k, k)] = c(lambda.max(0.0).sqrt());
    }
    Ok(vecs * diag * vecs.adjoint())
}

/// A validated two-qubit density matrix.
///
/// Construction enforces Hermiticity (entrywise tolerance 1e-12), unit trace
/// (1e-12) and positive semidefiniteness (eigenvalues ≥ −1e-10), so any
/// value of this type can be consumed without re-checking.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix,
}

impl TwoQubitState {
    /// Validates and wraps a density matrix.
    pub fn new(rho: Matrix) -> Result<Self> {
        let asym = max_abs_entry(&(rho - rho.adjoint()));
        if asym > HERMITICITY_TOL {
            return Err(Error::State(format!(
                "not Hermitian: max |ρ − ρ†| entry = {asym:.3e}"
            )));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::State(format!(
                "trace is {trace} instead of 1 (tolerance {TRACE_TOL:.0e})"
            )));
        }
        let (vals, _) = hermitian_eigen(&rho);
        if let Some(lambda) = vals.iter().find(|&&v| v < EIGENVALUE_FLOOR) {
            return Err(Error::State(format!(
                "not positive semidefinite: eigenvalue {lambda:.3e}"
            )));
        }
        Ok(Self { rho })
    }

    /// Projector onto a (normalized) pure state.
    pub fn from_pure(ket: &Ket) -> Result<Self> {
        let norm_sq = ket.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm_sq <= 0.0 {
            return Err(Error::State("pure state from the zero vector".into()));
        }
        let rho = (ket * ket.adjoint()) / c(norm_sq);
        Self::new(rho)
    }

    /// The maximally mixed state I/4.
    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix::identity() * c(0.25),
        }
    }

    /// The underlying density matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.rho
    }

    /// Purity Tr ρ² ∈ [¼, 1].
    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    /// Uhlmann fidelity F(ρ, σ) = (Tr √(√ρ σ √ρ))² ∈ [0, 1].
    ///
    /// Symmetric in its arguments; equals |⟨ψ|φ⟩|² on pure states and
    /// ⟨ψ|σ|ψ⟩ when only ρ = |ψ⟩⟨ψ| is pure.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let root = sqrtm_psd(&self.rho)?;
        let middle = root * other.rho * root;
        let (vals, _) = hermitian_eigen(&middle);
        let total: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();
        Ok((total * total).clamp(0.0, 1.0))
    }
}

/// Row-major serde representation: 4 rows of 4 entries, each entry `[re, im]`.
type MatrixRepr = [[[f64; 2]; 4]; 4];

fn matrix_to_repr(m: &Matrix) -> MatrixRepr {
    let mut repr = [[[0.0; 2]; 4]; 4];
    for (row, entries) in repr.iter_mut().enumerate() {
        for (col, entry) in entries.iter_mut().enumerate() {
            let z = m[(row, col)];
            *entry = [z.re, z.im];
        }
    }
    repr
}

fn matrix_from_repr(repr: &MatrixRepr) -> Matrix {
    let mut m = Matrix::zeros();
    for (row, entries) in repr.iter().enumerate() {
        for (col, entry) in entries.iter().enumerate() {
            m[(row, col)] = Complex64::new(entry[0], entry[1]);
        }
    }
    m
}

impl Serialize for TwoQubitState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_repr(&self.rho).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TwoQubitState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        TwoQubitState::new(matrix_from_repr(&repr)).map_err(D::Error::custom)
    }
}

/// A labeled Hermitian observable on the two-qubit space.
#[derive(Debug, Clone)]
pub struct Observable {
    matrix: Matrix,
    label: String,
}

impl Observable {
    /// Validates Hermiticity and wraps the operator.
    pub fn new(label: impl Into<String>, matrix: Matrix) -> Result<Self> {
        let asym = max_abs_entry(&(matrix - matrix.adjoint()));
        if asym > HERMITICITY_TOL {
            return Err(Error::State(format!(
                "observable is not Hermitian: max |O − O†| entry = {asym:.3e}"
            )));
        }
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    /// Product observable `signal ⊗ idler`.
    pub fn product(
        label: impl Into<String>,
        signal: &Matrix2<C64>,
        idler: &Matrix2<C64>,
    ) -> Result<Self> {
        Self::new(label, tensor(signal, idler))
    }

    /// The operator matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Human-readable label, e.g. `"XX"` or `"A0B1"`.
    pub fn label(&self) -> &str {
        &self.label
    }
}

/// ⟨O⟩ = Tr(ρ O). The trace of a Hermitian pair is real up to rounding; the
/// imaginary residue is discarded (it is bounded by ~1e-15 for validated
/// inputs, far below the 1e-10 tolerance this crate allows itself).
pub fn expectation(state: &TwoQubitState, observable: &Observable) -> f64 {
    let tr = (state.matrix() * observable.matrix()).trace();
    debug_assert!(
        tr.im.abs() < 1e-10,
        "expectation of {} has imaginary residue {:.3e}",
        observable.label(),
        tr.im
    );
    tr.re
}

/// The Bell state |Φ(θ)⟩ = (|00⟩ + e^{iθ}|11⟩)/√2.
pub fn bell_state(theta: f64) -> TwoQubitState {
    let ket = Ket::new(
        c(1.0 / std::f64::consts::SQRT_2),
        c(0.0),
        c(0.0),
        (I * theta).exp() * c(1.0 / std::f64::consts::SQRT_2),
    );
    TwoQubitState::from_pure(&ket).expect("Bell state construction is always valid")
}

/// A projector bundled with a detection efficiency η ∈ [0, 1].
///
/// Tomography's measurement operators are η·Π: the projector geometry fixes
/// *where* on the Bloch spheres the measurement points, the efficiency fixes
/// how many of the matching events are actually counted.
#[derive(Debug, Clone)]
pub struct ProjectorWithEfficiency {
    /// Hermitian projector (or more generally a PSD effect) matrix.
    pub matrix: Matrix,
    /// Detection/routing efficiency multiplying the Born rate.
    pub efficiency: f64,
}

impl ProjectorWithEfficiency {
    /// Validates Hermiticity and the efficiency range.
    pub fn new(matrix: Matrix, efficiency: f64) -> Result<Self> {
        let asym = max_abs_entry(&(matrix - matrix.adjoint()));
        if asym > HERMITICITY_TOL {
            return Err(Error::State(format!(
                "projector is not Hermitian: max |Π − Π†| entry = {asym:.3e}"
            )));
        }
        if !(0.0..=1.0).contains(&efficiency) || !efficiency.is_finite() {
            return Err(Error::Config(format!(
                "efficiency must lie in [0, 1], got {efficiency}"
            )));
        }
        Ok(Self { matrix, efficiency })
    }

    /// Expected relative count rate η·Tr(ρ Π).
    pub fn expected_rate(&self, state: &TwoQubitState) -> f64 {
        let tr = (state.matrix() * self.matrix).trace();
        debug_assert!(tr.im.abs() < 1e-10);
        self.efficiency * tr.re
    }
}

/// Rank-one equatorial projector
/// |π(φs, φi)⟩⟨π(φs, φi)| with |π⟩ = ½(|0⟩+e^{iφs}|1⟩)⊗(|0⟩+e^{iφi}|1⟩),
/// at unit efficiency.
pub fn equatorial_projector(phi_s: f64, phi_i: f64) -> ProjectorWithEfficiency {
    let es = (I * phi_s).exp();
    let ei = (I * phi_i).exp();
    let ket = Ket::new(c(0.5), ei * c(0.5), es * c(0.5), es * ei * c(0.5));
    let matrix = ket * ket.adjoint();
    ProjectorWithEfficiency::new(matrix, 1.0).expect("equatorial projector is always valid")
}

/// The four CHSH setting observables `[A0B0, A0B1, A1B0, A1B1]` with
/// A0 = σX, A1 = σY on the signal and B0 = (σX−σY)/√2, B1 = (σX+σY)/√2 on
/// the idler. In phase language these are the offsets (0, π/2) ⊗ (−π/4, +π/4).
pub fn chsh_settings() -> [Observable; 4] {
    let b0 = pauli_equatorial(-std::f64::consts::FRAC_PI_4);
    let b1 = pauli_equatorial(std::f64::consts::FRAC_PI_4);
    let a0 = pauli_x();
    let a1 = pauli_y();
    [
        Observable::product("A0B0", &a0, &b0).expect("CHSH setting is Hermitian"),
        Observable::product("A0B1", &a0, &b1).expect("CHSH setting is Hermitian"),
        Observable::product("A1B0", &a1, &b0).expect("CHSH setting is Hermitian"),
        Observable::product("A1B1", &a1, &b1).expect("CHSH setting is Hermitian"),
    ]
}

/// CHSH combination S = |⟨A0B0⟩ + ⟨A0B1⟩ + ⟨A1B0⟩ − ⟨A1B1⟩| for the fixed
/// settings of [`chsh_settings`]. Reaches 2√2 on |Φ(0)⟩ and stays ≤ 2 for
/// product states.
pub fn chsh_value(state: &TwoQubitState) -> f64 {
    let [a0b0, a0b1, a1b0, a1b1] = chsh_settings();
    (expectation(state, &a0b0) + expectation(state, &a0b1) + expectation(state, &a1b0)
        - expectation(state, &a1b1))
    .abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn werner(theta: f64, weight: f64) -> TwoQubitState {
        let bell = bell_state(theta);
        let rho = bell.matrix() * c(weight) + Matrix::identity() * c((1.0 - weight) * 0.25);
        TwoQubitState::new(rho).expect("Werner mixture is a valid state")
    }

    #[test]
    fn bell_state_is_pure_with_perfect_zz_correlation() {
        let zz = Observable::product("ZZ", &pauli_z(), &pauli_z()).unwrap();
        for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_2, 2.8, -1.1] {
            let state = bell_state(theta);
            assert_relative_eq!(state.purity(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(expectation(&state, &zz), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn bell_state_coherence_phase_at_half_pi() {
        // θ = π/2 puts the upper-right coherence at −i/2.
        let rho = bell_state(std::f64::consts::FRAC_PI_2);
        let z = rho.matrix()[(0, 3)];
        assert_abs_diff_eq!(z.re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn maximally_mixed_has_quarter_purity_and_no_correlations() {
        let mixed = TwoQubitState::maximally_mixed();
        assert_abs_diff_eq!(mixed.purity(), 0.25, epsilon = 1e-15);
        let paulis = [pauli_identity(), pauli_x(), pauli_y(), pauli_z()];
        for (a, sa) in paulis.iter().enumerate() {
            for (b, sb) in paulis.iter().enumerate() {
                if a == 0 && b == 0 {
                    continue;
                }
                let obs = Observable::product("P", sa, sb).unwrap();
                assert_abs_diff_eq!(expectation(&mixed, &obs), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn projector_expectation_matches_fringe_formula() {
        // ⟨Π(φs,φi)⟩ on |Φ(θ)⟩ is ¼(1 + cos(φs + φi − θ)).
        let grid = [-2.1, -0.7, 0.0, 0.4, 1.3, 2.9];
        for &theta in &grid {
            let state = bell_state(theta);
            for &phi_s in &grid {
                for &phi_i in &grid {
                    let proj = equatorial_projector(phi_s, phi_i);
                    let expected = 0.25 * (1.0 + (phi_s + phi_i - theta).cos());
                    assert_abs_diff_eq!(proj.expected_rate(&state), expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn chsh_reaches_tsirelson_on_bell_and_stays_classical_on_product() {
        assert_abs_diff_eq!(
            chsh_value(&bell_state(0.0)),
            2.0 * std::f64::consts::SQRT_2,
            epsilon = 1e-12
        );
        // |+⟩⊗|+⟩ is a product state: S = √2 ≤ 2.
        let plus_plus = Ket::new(c(0.5), c(0.5), c(0.5), c(0.5));
        let product = TwoQubitState::from_pure(&plus_plus).unwrap();
        let s = chsh_value(&product);
        assert_abs_diff_eq!(s, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert!(s <= 2.0);
    }

    #[test]
    fn purity_of_nine_tenths_bell_mixture() {
        // Tr ρ² = 0.81 + 2·0.9·0.1/4 + 0.01/4 = 0.8575.
        let state = werner(0.0, 0.9);
        assert_abs_diff_eq!(state.purity(), 0.8575, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_limits_and_symmetry() {
        let bell = bell_state(0.0);
        let ortho = bell_state(std::f64::consts::PI);
        assert_abs_diff_eq!(bell.fidelity(&bell).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(bell.fidelity(&ortho).unwrap(), 0.0, epsilon = 1e-10);

        let mixed = TwoQubitState::maximally_mixed();
        assert_abs_diff_eq!(bell.fidelity(&mixed).unwrap(), 0.25, epsilon = 1e-10);

        // Pure target against a Werner mixture: F = ⟨ψ|ρ|ψ⟩ = 0.9 + 0.1/4.
        let noisy = werner(0.0, 0.9);
        assert_abs_diff_eq!(bell.fidelity(&noisy).unwrap(), 0.925, epsilon = 1e-10);
        assert_abs_diff_eq!(
            noisy.fidelity(&bell).unwrap(),
            bell.fidelity(&noisy).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn validation_rejects_malformed_matrices() {
        // Non-Hermitian.
        let mut m = Matrix::identity() * c(0.25);
        m[(0, 1)] = c(0.1);
        assert!(matches!(TwoQubitState::new(m), Err(Error::State(_))));

        // Wrong trace.
        let m = Matrix::identity() * c(0.3);
        assert!(matches!(TwoQubitState::new(m), Err(Error::State(_))));

        // Negative eigenvalue beyond the floor.
        let mut m = Matrix::zeros();
        m[(0, 0)] = c(0.5);
        m[(1, 1)] = c(0.6);
        m[(2, 2)] = c(-1e-9);
        m[(3, 3)] = c(-0.1 + 1e-9);
        assert!(matches!(TwoQubitState::new(m), Err(Error::State(_))));

        // Negative eigenvalue within the floor is accepted.
        let mut m = Matrix::zeros();
        m[(0, 0)] = c(0.5);
        m[(1, 1)] = c(0.5) + c(5e-11);
        m[(2, 2)] = c(-5e-11);
        assert!(TwoQubitState::new(m).is_ok());
    }

    #[test]
    fn density_matrix_json_round_trip() {
        let state = werner(0.7, 0.93);
        let json = serde_json::to_string(&state).unwrap();
        let back: TwoQubitState = serde_json::from_str(&json).unwrap();
        let diff = (state.matrix() - back.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15, "round trip changed the matrix by {diff:.3e}");

        // Deserialization re-validates: corrupt the trace and expect failure.
        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value[0][0][0] = serde_json::json!(0.9);
        assert!(serde_json::from_value::<TwoQubitState>(value).is_err());
    }

    #[test]
    fn efficiency_range_is_enforced() {
        let m = equatorial_projector(0.0, 0.0).matrix;
        assert!(ProjectorWithEfficiency::new(m, 1.0).is_ok());
        assert!(ProjectorWithEfficiency::new(m, 0.0).is_ok());
        assert!(matches!(
            ProjectorWithEfficiency::new(m, 1.2),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ProjectorWithEfficiency::new(m, -0.1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ProjectorWithEfficiency::new(m, f64::NAN),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn random_pure_states_have_unit_purity(entries in proptest::array::uniform8(-1.0f64..1.0)) {
            let ket = Ket::new(
                Complex64::new(entries[0], entries[1]),
                Complex64::new(entries[2], entries[3]),
                Complex64::new(entries[4], entries[5]),
                Complex64::new(entries[6], entries[7]),
            );
            prop_assume!(ket.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6);
            let state = TwoQubitState::from_pure(&ket).unwrap();
            prop_assert!((state.purity() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn pauli_correlators_are_bounded(theta in -3.2f64..3.2, weight in 0.0f64..1.0) {
            let state = werner(theta, weight);
            let paulis = [pauli_x(), pauli_y(), pauli_z()];
            for sa in &paulis {
                for sb in &paulis {
                    let obs = Observable::product("P", sa, sb).unwrap();
                    let e = expectation(&state, &obs);
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
                }
            }
        }

        #[test]
        fn chsh_on_bell_family_follows_cosine(theta in -3.2f64..3.2) {
            // S(θ) for |Φ(θ)⟩: fringe amplitude |cos θ| saturates the
            // correlations available to the fixed (X, Y) settings.
            let s = chsh_value(&bell_state(theta));
            let expected = 2.0 * std::f64::consts::SQRT_2 * theta.cos().abs();
            prop_assert!((s - expected).abs() < 1e-9);
        }
    }
}
