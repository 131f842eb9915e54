//! Simulation of the classic superluminal-communication claim (Herbert's FLASH
//! scheme) and its failure on a quantum-injected optical parametric amplifier.
//!
//! One half of a polarization singlet goes to Alice, who measures it in a basis
//! of her choice; the other half seeds a phase-covariant parametric amplifier
//! on Bob's side. The crate simulates the full chain exactly: singlet
//! projection, amplification (closed-form squeezed-photon statistics or direct
//! truncated-Fock evolution), photon counting through lossy detectors, and the
//! statistics Bob could try to read a message from. The point the numbers make:
//! conditioned on Alice's outcomes the amplifier output shows high-visibility
//! fringes, while every statistic available to Bob alone is basis-independent —
//! no signaling.
//!
//! Modules follow the physical pipeline:
//!
//! * [`qubit`] — polarization qubits, measurement bases, singlet projection.
//! * [`opa`] — the amplifier: gain bookkeeping, analytic and numeric backends,
//!   mode-basis rotations of Fock amplitudes.
//! * [`photostats`] — exact photon-count distributions, moments, visibility and
//!   cloning-fidelity formulas with experimental imperfections.
//! * [`protocol`] — Monte Carlo detection runs (conditional and
//!   non-conditional), trial records, CSV serialization.
//! * [`nosignal`] — density-matrix invariance checks, mutual information,
//!   two-clone correlations.
//! * [`analysis`] — fringe fitting and the frequentist flatness tests used to
//!   decide "is there a message in here".

pub mod analysis;
pub mod fmt;
pub mod nosignal;
pub mod opa;
pub mod photostats;
pub mod protocol;
pub mod qubit;

pub use opa::GainParameter;
pub use photostats::ImperfectionModel;
pub use protocol::DetectorModel;
pub use qubit::{MeasurementBasis, Qubit};
