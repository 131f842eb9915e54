//! Exact photon-count statistics of the amplified output, and the closed-form
//! visibility and cloning-fidelity laws including source imperfections.
//!
//! Everything here works at the distribution level — 1-D squeezed-mode tables
//! combined by the mixture rule — so it stays cheap at gains where full
//! amplitude tables are out of reach. An injected qubit q analyzed in an
//! equatorial pair {b, b⊥} contributes its two sectors incoherently to photon
//! counting:
//!
//! ```text
//! P(n_b, n_b⊥) = w·P_one(n_b)P_vac(n_b⊥) + (1−w)·P_vac(n_b)P_one(n_b⊥),
//! w = |⟨b|q⟩|²  (= cos²(Δ/2) for an equatorial qubit at offset Δ)
//! ```
//!
//! exactly, because the two sectors have opposite photon-number parity per
//! mode and cannot interfere in any count observable.

use thiserror::Error;

use crate::opa::squeezed::{SectorTables, SqueezedTable};
use crate::opa::{GainParameter, OpaError};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("conditioning on even total {total} selects nothing: an injected amplifier emits odd totals only")]
    EvenConditionTotal { total: u64 },
    #[error("no probability mass at condition total {total} within the tabulated support")]
    EmptyConditioning { total: u64 },
    #[error("input visibility must lie in [0, 1], got {v}")]
    InvalidVisibility { v: f64 },
    #[error("injection probability must lie in [0, 1], got {p}")]
    InvalidInjectionProbability { p: f64 },
    #[error(transparent)]
    Opa(#[from] OpaError),
}

/// A finite probability table over outcome values of type `T`.
///
/// `total_mass` is the probability captured by the table; it is 1 for
/// conditioned (renormalized) distributions and 1 − tail for truncated ones.
#[derive(Debug, Clone)]
pub struct CountDistribution<T> {
    pub values: Vec<T>,
    pub probs: Vec<f64>,
    pub total_mass: f64,
}

impl<T> CountDistribution<T> {
    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> + '_ {
        self.values.iter().zip(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CountDistribution<i64> {
    /// First moment, normalized over the captured mass.
    pub fn mean(&self) -> f64 {
        let s: f64 =
            self.values.iter().zip(&self.probs).map(|(&x, p)| x as f64 * p).sum();
        s / self.total_mass
    }

    /// Second raw moment, normalized over the captured mass.
    pub fn second_moment(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&self.probs)
            .map(|(&x, p)| (x as f64) * (x as f64) * p)
            .sum();
        s / self.total_mass
    }
}

fn sector_weight(delta_phi: f64) -> f64 {
    let c = (delta_phi / 2.0).cos();
    c * c
}

/// Joint photon-count distribution over (n_b, n_b⊥) up to total `n_max`, for
/// an equatorial qubit injected at phase offset `delta_phi` from mode b.
pub fn joint_distribution(
    delta_phi: f64,
    gain: &GainParameter,
    n_max: u64,
) -> Result<CountDistribution<(u64, u64)>, StatsError> {
    let tables = SectorTables::build(gain, 1e-15)?;
    let w = sector_weight(delta_phi);
    let one = dense(&tables.one, n_max);
    let vac = dense(&tables.vac, n_max);
    let mut values = Vec::new();
    let mut probs = Vec::new();
    let mut mass = 0.0;
    for na in 0..=n_max {
        for nb in 0..=(n_max - na) {
            let p = w * one[na as usize] * vac[nb as usize]
                + (1.0 - w) * vac[na as usize] * one[nb as usize];
            if p > 0.0 {
                values.push((na, nb));
                probs.push(p);
                mass += p;
            }
        }
    }
    Ok(CountDistribution { values, probs, total_mass: mass })
}

/// Spread a parity-structured table onto a dense photon-number axis 0..=n_max.
fn dense(t: &SqueezedTable, n_max: u64) -> Vec<f64> {
    let mut v = vec![0.0; n_max as usize + 1];
    for (i, &p) in t.probs.iter().enumerate() {
        let n = t.photon_number(i);
        if n > n_max {
            break;
        }
        v[n as usize] = p;
    }
    v
}

/// The law of δ = n_b − n_b⊥ for an injected amplifier, with the expensive
/// gain-dependent part computed once and reusable across analysis phases.
///
/// Internally stores the sector-b law a(x) on a symmetric grid; the full
/// distribution at offset Δ is w·a(x) + (1−w)·a(−x) with w = cos²(Δ/2), which
/// is also why every even moment of δ is exactly phase-independent.
#[derive(Debug, Clone)]
pub struct DeltaLaw {
    xs: Vec<i64>,
    sector: Vec<f64>,
    sector_mass: f64,
    conditioned: bool,
}

impl DeltaLaw {
    /// Unconditioned law, or the law conditioned on a fixed odd total
    /// photon number.
    pub fn new(gain: &GainParameter, condition_total: Option<u64>) -> Result<Self, StatsError> {
        match condition_total {
            None => Self::unconditioned(gain),
            Some(n) => Self::conditioned(gain, n),
        }
    }

    fn unconditioned(gain: &GainParameter) -> Result<Self, StatsError> {
        let tables = SectorTables::build(gain, 1e-15)?;
        let q = &tables.one.probs;
        let p = &tables.vac.probs;
        let k = q.len().max(p.len());
        // x = 2(j−l)+1 lands at index j−l+k on a grid of odd x ∈ [−(2k−1), 2k−1].
        let mut sector = vec![0.0; 2 * k];
        for (j, &qj) in q.iter().enumerate() {
            let base = j + k;
            for (l, &pl) in p.iter().enumerate() {
                sector[base - l] += qj * pl;
            }
        }
        let xs = (0..2 * k as i64).map(|i| 2 * i - (2 * k as i64 - 1)).collect();
        let sector_mass = sector.iter().sum();
        Ok(Self { xs, sector, sector_mass, conditioned: false })
    }

    fn conditioned(gain: &GainParameter, total: u64) -> Result<Self, StatsError> {
        if total % 2 == 0 {
            return Err(StatsError::EvenConditionTotal { total });
        }
        let tables = SectorTables::build(gain, 1e-15)?;
        let q = &tables.one.probs;
        let p = &tables.vac.probs;
        let at = |t: &[f64], i: u64| t.get(i as usize).copied().unwrap_or(0.0);
        let mut sector = Vec::with_capacity(total as usize + 1);
        let mut xs = Vec::with_capacity(total as usize + 1);
        for n_b in 0..=total {
            let rest = total - n_b;
            let prob = if n_b % 2 == 1 {
                at(q, (n_b - 1) / 2) * at(p, rest / 2)
            } else {
                // Sector-b law: mode b in vacuum parity only happens in the
                // mirror sector, which enters through the mirror index below.
                0.0
            };
            xs.push(2 * n_b as i64 - total as i64);
            sector.push(prob);
        }
        let sector_mass: f64 = sector.iter().sum();
        if sector_mass <= 0.0 {
            return Err(StatsError::EmptyConditioning { total });
        }
        Ok(Self { xs, sector, sector_mass, conditioned: true })
    }

    /// Distribution of δ at analysis offset `delta_phi`.
    pub fn distribution(&self, delta_phi: f64) -> CountDistribution<i64> {
        let w = sector_weight(delta_phi);
        let n = self.sector.len();
        let probs: Vec<f64> = (0..n)
            .map(|i| {
                let raw = w * self.sector[i] + (1.0 - w) * self.sector[n - 1 - i];
                if self.conditioned {
                    raw / self.sector_mass
                } else {
                    raw
                }
            })
            .collect();
        let total_mass = if self.conditioned { 1.0 } else { self.sector_mass };
        CountDistribution { values: self.xs.clone(), probs, total_mass }
    }
}

/// Convenience wrapper over [`DeltaLaw`] for a single phase.
pub fn delta_distribution(
    delta_phi: f64,
    gain: &GainParameter,
    condition_total: Option<u64>,
) -> Result<CountDistribution<i64>, StatsError> {
    Ok(DeltaLaw::new(gain, condition_total)?.distribution(delta_phi))
}

/// Closed-form moments of δ: ⟨δ⟩ = (2m̄+1)cos Δ and ⟨δ²⟩ = 12m̄² + 12m̄ + 1.
/// The second moment is independent of both the injected qubit and the
/// analysis phase — the super-poissonian signature that survives inefficient
/// detection.
pub fn delta_moments(delta_phi: f64, gain: &GainParameter) -> (f64, f64) {
    let m = gain.mean_photons();
    ((2.0 * m + 1.0) * delta_phi.cos(), 12.0 * m * m + 12.0 * m + 1.0)
}

/// Source imperfections: input-state visibility (singlet preparation quality)
/// and the probability that a trigger event actually injected the seed photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectionModel {
    v_in: f64,
    p_inject: f64,
}

impl Default for ImperfectionModel {
    fn default() -> Self {
        Self { v_in: 0.85, p_inject: 0.4 }
    }
}

impl ImperfectionModel {
    pub fn new(v_in: f64, p_inject: f64) -> Result<Self, StatsError> {
        if !(0.0..=1.0).contains(&v_in) || !v_in.is_finite() {
            return Err(StatsError::InvalidVisibility { v: v_in });
        }
        if !(0.0..=1.0).contains(&p_inject) || !p_inject.is_finite() {
            return Err(StatsError::InvalidInjectionProbability { p: p_inject });
        }
        Ok(Self { v_in, p_inject })
    }

    pub fn perfect() -> Self {
        Self { v_in: 1.0, p_inject: 1.0 }
    }

    pub fn v_in(&self) -> f64 {
        self.v_in
    }

    pub fn p_inject(&self) -> f64 {
        self.p_inject
    }
}

/// Expected fringe visibility of the mean-count difference:
///
/// ```text
/// Ṽ = V_in · p(2m̄+1) / (p(2m̄+1) + 2m̄)
/// ```
///
/// The fringe amplitude comes only from genuinely injected, coherent events
/// (factor V_in·p(2m̄+1)); the offset also collects spontaneous emission from
/// un-injected shots. Detector efficiency and the splitting ratio scale both
/// arms alike and drop out of the ratio.
pub fn visibility_model(gain: &GainParameter, imp: &ImperfectionModel) -> f64 {
    let m = gain.mean_photons();
    let stim = imp.p_inject() * (2.0 * m + 1.0);
    imp.v_in() * stim / (stim + 2.0 * m)
}

/// Mean fidelity of one output clone against the injected qubit.
///
/// Ideal phase-covariant cloning gives (3m̄+1)/(4m̄+1), which decays from 1 at
/// zero gain to the asymptotic optimum 3/4. With imperfections the estimate
/// is fringe-derived, F̃ = (1+Ṽ)/2, which reduces to the ideal law when
/// V_in = p = 1.
pub fn clone_fidelity(gain: &GainParameter, imp: Option<&ImperfectionModel>) -> f64 {
    match imp {
        None => {
            let m = gain.mean_photons();
            (3.0 * m + 1.0) / (4.0 * m + 1.0)
        }
        Some(imp) => 0.5 * (1.0 + visibility_model(gain, imp)),
    }
}
