//! Polarization qubits, projective measurement bases, and singlet projection.
//!
//! States live on the |H⟩/|V⟩ Bloch sphere. The amplifier downstream is
//! phase-covariant with respect to the H/V axis, so the *equatorial* states
//! |φ⟩ = (|H⟩ + e^{iφ}|V⟩)/√2 play a distinguished role: |+⟩, |−⟩ at φ = 0, π
//! and |R⟩, |L⟩ at φ = ±π/2. Comparison of states is up to global phase
//! everywhere — only |⟨q₁|q₂⟩| is physical.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Tolerance for normalization and orthogonality checks on constructed states.
pub const STATE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum QubitError {
    #[error("qubit amplitudes must be finite and normalized (|α|²+|β|² = {norm_sq})")]
    NotNormalized { norm_sq: f64 },
    #[error("basis states must be orthogonal (|⟨plus|minus⟩| = {overlap})")]
    NotOrthogonal { overlap: f64 },
    #[error("phase must be finite")]
    NonFinitePhase,
}

/// Azimuthal angle on the H/V equator, reduced to [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquatorialPhase(f64);

impl EquatorialPhase {
    pub fn new(phi: f64) -> Result<Self, QubitError> {
        if !phi.is_finite() {
            return Err(QubitError::NonFinitePhase);
        }
        Ok(Self(phi.rem_euclid(std::f64::consts::TAU)))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// A pure polarization state α|H⟩ + β|V⟩ with |α|² + |β|² = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qubit {
    alpha: Complex64,
    beta: Complex64,
}

impl Qubit {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self, QubitError> {
        let norm_sq = alpha.norm_sqr() + beta.norm_sqr();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > STATE_TOL {
            return Err(QubitError::NotNormalized { norm_sq });
        }
        Ok(Self { alpha, beta })
    }

    /// |H⟩ component.
    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    /// |V⟩ component.
    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn h() -> Self {
        Self { alpha: Complex64::ONE, beta: Complex64::ZERO }
    }

    pub fn v() -> Self {
        Self { alpha: Complex64::ZERO, beta: Complex64::ONE }
    }

    /// Equatorial state (|H⟩ + e^{iφ}|V⟩)/√2.
    pub fn equatorial(phi: EquatorialPhase) -> Self {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            alpha: Complex64::new(inv_sqrt2, 0.0),
            beta: Complex64::from_polar(inv_sqrt2, phi.radians()),
        }
    }

    /// |+⟩ = equatorial(0).
    pub fn plus() -> Self {
        Self::equatorial(EquatorialPhase(0.0))
    }

    /// |−⟩ = equatorial(π).
    pub fn minus() -> Self {
        Self::equatorial(EquatorialPhase(std::f64::consts::PI))
    }

    /// |R⟩ = (|H⟩ + i|V⟩)/√2.
    pub fn right_circular() -> Self {
        Self::equatorial(EquatorialPhase(std::f64::consts::FRAC_PI_2))
    }

    /// |L⟩ = (|H⟩ − i|V⟩)/√2.
    pub fn left_circular() -> Self {
        Self::equatorial(EquatorialPhase(1.5 * std::f64::consts::PI))
    }

    /// Linear polarization cos θ|H⟩ + sin θ|V⟩.
    pub fn linear(theta: f64) -> Self {
        Self {
            alpha: Complex64::new(theta.cos(), 0.0),
            beta: Complex64::new(theta.sin(), 0.0),
        }
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &Qubit) -> Complex64 {
        self.alpha.conj() * other.alpha + self.beta.conj() * other.beta
    }

    /// Same physical state, i.e. equal up to a global phase.
    pub fn same_state(&self, other: &Qubit, tol: f64) -> bool {
        (self.overlap(other).norm() - 1.0).abs() <= tol
    }

    /// Anti-unitary time reversal T(α, β) = (−β*, α*); maps every state to its
    /// orthogonal partner, and T² = −1.
    pub fn time_reversal(&self) -> Qubit {
        Qubit {
            alpha: -self.beta.conj(),
            beta: self.alpha.conj(),
        }
    }
}

/// An orthonormal projective measurement basis {plus, minus}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBasis {
    plus: Qubit,
    minus: Qubit,
}

impl MeasurementBasis {
    pub fn new(plus: Qubit, minus: Qubit) -> Result<Self, QubitError> {
        let overlap = plus.overlap(&minus).norm();
        if overlap > STATE_TOL {
            return Err(QubitError::NotOrthogonal { overlap });
        }
        Ok(Self { plus, minus })
    }

    /// {equatorial(φ), equatorial(φ+π)}.
    pub fn equatorial(phi: EquatorialPhase) -> Self {
        let opposite = EquatorialPhase(
            (phi.radians() + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU),
        );
        Self {
            plus: Qubit::equatorial(phi),
            minus: Qubit::equatorial(opposite),
        }
    }

    /// {cos θ|H⟩ + sin θ|V⟩, −sin θ|H⟩ + cos θ|V⟩}.
    pub fn linear(theta: f64) -> Self {
        Self {
            plus: Qubit::linear(theta),
            minus: Qubit {
                alpha: Complex64::new(-theta.sin(), 0.0),
                beta: Complex64::new(theta.cos(), 0.0),
            },
        }
    }

    pub fn hv() -> Self {
        Self { plus: Qubit::h(), minus: Qubit::v() }
    }

    pub fn plus(&self) -> &Qubit {
        &self.plus
    }

    pub fn minus(&self) -> &Qubit {
        &self.minus
    }

    pub fn outcome_state(&self, outcome: u8) -> &Qubit {
        if outcome == 0 {
            &self.plus
        } else {
            &self.minus
        }
    }
}

/// Project one photon of the polarization singlet onto `basis`.
///
/// Returns (outcome, partner): the outcome index (0 = plus detector,
/// 1 = minus detector, each with probability 1/2 — the singlet's marginal is
/// maximally mixed) and the state the partner photon collapses to, which is the
/// time-reversed (orthogonal) companion of the detected state.
pub fn singlet_project<R: Rng + ?Sized>(basis: &MeasurementBasis, rng: &mut R) -> (u8, Qubit) {
    let outcome: u8 = if rng.random_bool(0.5) { 0 } else { 1 };
    let detected = basis.outcome_state(outcome);
    (outcome, detected.time_reversal())
}
