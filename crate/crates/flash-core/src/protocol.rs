//! Monte Carlo runs of the full experiment: singlet projection on Alice's
//! side, amplification and lossy photodetection on Bob's, one record per
//! trial. Conditional runs keep Alice's outcome attached to each record;
//! non-conditional runs erase it (XOR trigger) or break the trigger channel
//! entirely — the regimes a faster-than-light receiver would be stuck with.
//!
//! Sampling never touches amplitude tables: photon counts come from the exact
//! squeezed-mode marginals via the sector-mixture rule, so runs at the
//! reference gain 4.45 cost the same as desk-scale ones. Every trial draws
//! from its own counter-indexed RNG stream, so datasets are reproducible
//! byte-for-byte and extending a run leaves existing trials unchanged.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::fmt::sig9;
use crate::opa::squeezed::{SectorTables, SqueezedTable};
use crate::opa::{GainParameter, OpaError};
use crate::photostats::ImperfectionModel;
use crate::qubit::{singlet_project, EquatorialPhase, MeasurementBasis, Qubit};

pub const CSV_HEADER: &str = "trial,alice_basis,alice_outcome,injected,bob_basis,n_a,n_b,I_a,I_b,N";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("detector efficiency must lie in (0, 1], got {eta}")]
    InvalidEfficiency { eta: f64 },
    #[error("splitter transmission must lie in (0, 1], got {t}")]
    InvalidSplitter { t: f64 },
    #[error("noise level must be finite and non-negative, got {sigma}")]
    InvalidNoise { sigma: f64 },
    #[error("background fraction must lie in [0, 1), got {f}")]
    InvalidBackgroundFraction { f: f64 },
    #[error("bob analysis basis must be equatorial, got {label}")]
    BobBasisNotEquatorial { label: String },
    #[error("basis spec {text:?} is not of the form eq:<phi> or lin:<theta>")]
    BadBasisSpec { text: String },
    #[error("at least one basis required on each side")]
    EmptyBases,
    #[error("at least one trial required")]
    ZeroTrials,
    #[error("csv line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Opa(#[from] OpaError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bob's detection chain: quantum efficiency, the transmission of the
/// analysis splitter feeding each counter, and multiplicative gaussian gain
/// noise on the integrated signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    eta: f64,
    bs_transmission: f64,
    noise_sigma: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { eta: 0.13, bs_transmission: 0.5, noise_sigma: 0.0 }
    }
}

impl DetectorModel {
    pub fn new(eta: f64, bs_transmission: f64, noise_sigma: f64) -> Result<Self, ProtocolError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ProtocolError::InvalidEfficiency { eta });
        }
        if !(bs_transmission > 0.0 && bs_transmission <= 1.0) {
            return Err(ProtocolError::InvalidSplitter { t: bs_transmission });
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(ProtocolError::InvalidNoise { sigma: noise_sigma });
        }
        Ok(Self { eta, bs_transmission, noise_sigma })
    }

    pub fn ideal() -> Self {
        Self { eta: 1.0, bs_transmission: 1.0, noise_sigma: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn bs_transmission(&self) -> f64 {
        self.bs_transmission
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Net survival probability that a photon reaches a counter.
    pub fn arm_transmission(&self) -> f64 {
        self.eta * self.bs_transmission
    }
}

/// A measurement-basis choice as it appears on the command line and in
/// records: an equatorial pair at phase φ, or a linear pair at angle θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSpec {
    Equatorial(f64),
    Linear(f64),
}

impl BasisSpec {
    /// Canonical text form; phases are reduced so that the label is a stable
    /// key (φ mod 2π, θ mod π — a linear pair repeats every half turn).
    pub fn label(&self) -> String {
        match self {
            BasisSpec::Equatorial(phi) => {
                format!("eq:{}", sig9(phi.rem_euclid(std::f64::consts::TAU)))
            }
            BasisSpec::Linear(theta) => {
                format!("lin:{}", sig9(theta.rem_euclid(std::f64::consts::PI)))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let bad = || ProtocolError::BadBasisSpec { text: text.to_string() };
        if let Some(v) = text.strip_prefix("eq:") {
            let phi: f64 = v.trim().parse().map_err(|_| bad())?;
            if !phi.is_finite() {
                return Err(bad());
            }
            Ok(BasisSpec::Equatorial(phi))
        } else if let Some(v) = text.strip_prefix("lin:") {
            let theta: f64 = v.trim().parse().map_err(|_| bad())?;
            if !theta.is_finite() {
                return Err(bad());
            }
            Ok(BasisSpec::Linear(theta))
        } else {
            Err(bad())
        }
    }

    pub fn to_measurement(&self) -> MeasurementBasis {
        match self {
            BasisSpec::Equatorial(phi) => {
                MeasurementBasis::equatorial(EquatorialPhase::new(*phi).unwrap())
            }
            BasisSpec::Linear(theta) => MeasurementBasis::linear(*theta),
        }
    }
}

/// What the receiver is allowed to know about the trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonConditionalMode {
    /// Trigger fires on either of Alice's outcomes; which one is erased.
    Xor,
    /// The classical channel is cut; a fraction of triggers are accidentals
    /// that inject nothing.
    Severed { background_fraction: f64 },
}

/// One detection event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub alice_basis: String,
    /// Present only in conditional datasets.
    pub alice_outcome: Option<u8>,
    /// Whether the seed photon actually entered the amplifier.
    pub injected: bool,
    pub bob_basis: String,
    pub n_a: u64,
    pub n_b: u64,
    #[serde(rename = "I_a")]
    pub i_a: f64,
    #[serde(rename = "I_b")]
    pub i_b: f64,
    /// Herbert's discriminator (I_a − I_b)/(I_a + I_b); undefined when both
    /// signals are zero.
    #[serde(rename = "N")]
    pub n_stat: Option<f64>,
}

/// Echo of every knob that shaped a dataset, for embedding in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSnapshot {
    pub gain: f64,
    pub v_in: f64,
    pub p_inject: f64,
    pub eta: f64,
    pub bs_transmission: f64,
    pub noise_sigma: f64,
    pub trials_per_alice_basis: u64,
    pub seed: u64,
    pub mode: String,
    pub background_fraction: f64,
    pub alice_bases: Vec<String>,
    pub bob_bases: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentDataset {
    pub snapshot: RunSnapshot,
    pub records: Vec<TrialRecord>,
}

/// Photon-count sampler over one squeezed marginal (CDF + binary search).
struct MarginalSampler {
    numbers: Vec<u64>,
    cdf: Vec<f64>,
    mass: f64,
}

impl MarginalSampler {
    fn new(table: &SqueezedTable) -> Self {
        let numbers = (0..table.len()).map(|i| table.photon_number(i)).collect();
        let mut cdf = Vec::with_capacity(table.len());
        let mut acc = 0.0;
        for &p in &table.probs {
            acc += p;
            cdf.push(acc);
        }
        Self { numbers, cdf, mass: acc }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.mass;
        let i = self.cdf.partition_point(|&c| c < u).min(self.numbers.len() - 1);
        self.numbers[i]
    }
}

struct SectorSamplers {
    one: MarginalSampler,
    vac: MarginalSampler,
}

impl SectorSamplers {
    fn build(gain: &GainParameter) -> Result<Self, ProtocolError> {
        let tables = SectorTables::build(gain, 1e-13)?;
        Ok(Self { one: MarginalSampler::new(&tables.one), vac: MarginalSampler::new(&tables.vac) })
    }

    /// Counts (n_b, n_b⊥) for an injected qubit with sector weight `w` on
    /// mode b, or for spontaneous emission only.
    fn sample_counts<R: Rng + ?Sized>(&self, injected_w: Option<f64>, rng: &mut R) -> (u64, u64) {
        match injected_w {
            Some(w) => {
                if rng.random_bool(w.clamp(0.0, 1.0)) {
                    (self.one.sample(rng), self.vac.sample(rng))
                } else {
                    (self.vac.sample(rng), self.one.sample(rng))
                }
            }
            None => (self.vac.sample(rng), self.vac.sample(rng)),
        }
    }
}

/// Binomial thinning: each of `n` photons independently survives with
/// probability `p`.
pub fn thin<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return n;
    }
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p).unwrap().sample(rng)
}

fn herbert_statistic(i_a: f64, i_b: f64) -> Option<f64> {
    let sum = i_a + i_b;
    (sum > 0.0).then(|| (i_a - i_b) / sum)
}

enum RunKind {
    Conditional,
    NonConditional(NonConditionalMode),
}

struct ShotOutput {
    injected: bool,
    n_a: u64,
    n_b: u64,
    i_a: f64,
    i_b: f64,
    n_stat: Option<f64>,
}

fn run_shot<R: Rng + ?Sized>(
    samplers: &SectorSamplers,
    bob: &MeasurementBasis,
    partner: Option<&Qubit>,
    imp: &ImperfectionModel,
    det: &DetectorModel,
    rng: &mut R,
) -> ShotOutput {
    // Injection can fail (mode mismatch, trigger accidentals); the amplifier
    // then runs on vacuum. A successful injection carries the singlet partner
    // with probability V_in, otherwise a fully mixed qubit — sampled here as
    // a fair coin between Bob's own basis states, which is the same density
    // matrix and keeps the sector weight exact.
    let injected = partner.is_some() && rng.random_bool(imp.p_inject());
    let w = if injected {
        let q = if rng.random_bool(imp.v_in()) {
            partner.unwrap().clone()
        } else if rng.random_bool(0.5) {
            bob.plus().clone()
        } else {
            bob.minus().clone()
        };
        Some(bob.plus().overlap(&q).norm_sqr())
    } else {
        None
    };
    let (full_a, full_b) = samplers.sample_counts(w, rng);
    let t = det.arm_transmission();
    let n_a = thin(full_a, t, rng);
    let n_b = thin(full_b, t, rng);
    let (mut i_a, mut i_b) = (n_a as f64, n_b as f64);
    if det.noise_sigma() > 0.0 {
        let gauss = Normal::new(0.0, det.noise_sigma()).unwrap();
        i_a = (i_a * (1.0 + gauss.sample(rng))).max(0.0);
        i_b = (i_b * (1.0 + gauss.sample(rng))).max(0.0);
    }
    ShotOutput { injected, n_a, n_b, i_a, i_b, n_stat: herbert_statistic(i_a, i_b) }
}

fn validate_bases(
    alice_bases: &[BasisSpec],
    bob_bases: &[BasisSpec],
) -> Result<(), ProtocolError> {
    if alice_bases.is_empty() || bob_bases.is_empty() {
        return Err(ProtocolError::EmptyBases);
    }
    for b in bob_bases {
        if let BasisSpec::Linear(_) = b {
            // Counting statistics factorize only on the amplifier's
            // phase-covariant plane; Bob's analyzer stays there.
            return Err(ProtocolError::BobBasisNotEquatorial { label: b.label() });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    kind: RunKind,
    gain: &GainParameter,
    imp: &ImperfectionModel,
    det: &DetectorModel,
    alice_bases: &[BasisSpec],
    bob_bases: &[BasisSpec],
    trials_per_alice_basis: u64,
    seed: u64,
) -> Result<ExperimentDataset, ProtocolError> {
    validate_bases(alice_bases, bob_bases)?;
    if trials_per_alice_basis == 0 {
        return Err(ProtocolError::ZeroTrials);
    }
    if let RunKind::NonConditional(NonConditionalMode::Severed { background_fraction: f }) = kind {
        if !(0.0..1.0).contains(&f) {
            return Err(ProtocolError::InvalidBackgroundFraction { f });
        }
    }
    let samplers = SectorSamplers::build(gain)?;
    let base_rng = ChaCha12Rng::seed_from_u64(seed);

    let bob_measurements: Vec<(String, MeasurementBasis)> =
        bob_bases.iter().map(|b| (b.label(), b.to_measurement())).collect();

    let mut records =
        Vec::with_capacity((alice_bases.len() as u64 * trials_per_alice_basis) as usize);
    let mut trial: u64 = 0;
    for alice in alice_bases {
        let alice_label = alice.label();
        let alice_meas = alice.to_measurement();
        for t in 0..trials_per_alice_basis {
            let mut rng = base_rng.clone();
            rng.set_stream(trial);
            let (bob_label, bob_meas) = &bob_measurements[(t % bob_measurements.len() as u64) as usize];

            let (outcome, partner) = singlet_project(&alice_meas, &mut rng);
            let background = match kind {
                RunKind::NonConditional(NonConditionalMode::Severed { background_fraction }) => {
                    background_fraction > 0.0 && rng.random_bool(background_fraction)
                }
                _ => false,
            };
            let shot = run_shot(
                &samplers,
                bob_meas,
                if background { None } else { Some(&partner) },
                imp,
                det,
                &mut rng,
            );
            records.push(TrialRecord {
                trial,
                alice_basis: alice_label.clone(),
                alice_outcome: match kind {
                    RunKind::Conditional => Some(outcome),
                    RunKind::NonConditional(_) => None,
                },
                injected: shot.injected,
                bob_basis: bob_label.clone(),
                n_a: shot.n_a,
                n_b: shot.n_b,
                i_a: shot.i_a,
                i_b: shot.i_b,
                n_stat: shot.n_stat,
            });
            trial += 1;
        }
    }

    let (mode, background_fraction) = match kind {
        RunKind::Conditional => ("conditional".to_string(), 0.0),
        RunKind::NonConditional(NonConditionalMode::Xor) => ("xor".to_string(), 0.0),
        RunKind::NonConditional(NonConditionalMode::Severed { background_fraction }) => {
            ("severed".to_string(), background_fraction)
        }
    };
    Ok(ExperimentDataset {
        snapshot: RunSnapshot {
            gain: gain.g(),
            v_in: imp.v_in(),
            p_inject: imp.p_inject(),
            eta: det.eta(),
            bs_transmission: det.bs_transmission(),
            noise_sigma: det.noise_sigma(),
            trials_per_alice_basis,
            seed,
            mode,
            background_fraction,
            alice_bases: alice_bases.iter().map(|b| b.label()).collect(),
            bob_bases: bob_bases.iter().map(|b| b.label()).collect(),
        },
        records,
    })
}

/// Full experiment with the classical trigger channel intact: Alice's outcome
/// is recorded next to Bob's counts.
#[allow(clippy::too_many_arguments)]
pub fn run_conditional(
    gain: &GainParameter,
    imp: &ImperfectionModel,
    det: &DetectorModel,
    alice_bases: &[BasisSpec],
    bob_bases: &[BasisSpec],
    trials_per_alice_basis: u64,
    seed: u64,
) -> Result<ExperimentDataset, ProtocolError> {
    run(RunKind::Conditional, gain, imp, det, alice_bases, bob_bases, trials_per_alice_basis, seed)
}

/// The signaling regime: Bob gets trigger events but no outcome information.
#[allow(clippy::too_many_arguments)]
pub fn run_nonconditional(
    gain: &GainParameter,
    imp: &ImperfectionModel,
    det: &DetectorModel,
    alice_bases: &[BasisSpec],
    bob_bases: &[BasisSpec],
    trials_per_alice_basis: u64,
    seed: u64,
    mode: NonConditionalMode,
) -> Result<ExperimentDataset, ProtocolError> {
    run(
        RunKind::NonConditional(mode),
        gain,
        imp,
        det,
        alice_bases,
        bob_bases,
        trials_per_alice_basis,
        seed,
    )
}

fn opt_u8(v: Option<u8>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrialRecord {
    fn to_csv_row(&self) -> String {
        // Floats use shortest round-trip form so read_csv(write_csv(r)) == r;
        // this file is interchange, not display.
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.alice_basis,
            opt_u8(self.alice_outcome),
            self.injected,
            self.bob_basis,
            self.n_a,
            self.n_b,
            self.i_a,
            self.i_b,
            opt_f64(self.n_stat),
        )
    }
}

/// Writes the records as CSV with the exact stable header (LF line endings,
/// floats in shortest round-trip form).
pub fn write_csv<W: Write>(records: &[TrialRecord], mut w: W) -> io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        w.write_all(r.to_csv_row().as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses CSV previously produced by [`write_csv`].
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TrialRecord>, ProtocolError> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim_end() != CSV_HEADER {
                return Err(ProtocolError::MalformedRecord {
                    line: 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(ProtocolError::MalformedRecord {
                line: i + 1,
                reason: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| ProtocolError::MalformedRecord {
            line: i + 1,
            reason: format!("bad {what}"),
        };
        records.push(TrialRecord {
            trial: fields[0].parse().map_err(|_| bad("trial"))?,
            alice_basis: fields[1].to_string(),
            alice_outcome: if fields[2].is_empty() {
                None
            } else {
                Some(fields[2].parse().map_err(|_| bad("alice_outcome"))?)
            },
            injected: fields[3].parse().map_err(|_| bad("injected"))?,
            bob_basis: fields[4].to_string(),
            n_a: fields[5].parse().map_err(|_| bad("n_a"))?,
            n_b: fields[6].parse().map_err(|_| bad("n_b"))?,
            i_a: fields[7].parse().map_err(|_| bad("I_a"))?,
            i_b: fields[8].parse().map_err(|_| bad("I_b"))?,
            n_stat: if fields[9].is_empty() {
                None
            } else {
                Some(fields[9].parse().map_err(|_| bad("N"))?)
            },
        });
    }
    Ok(records)
}
