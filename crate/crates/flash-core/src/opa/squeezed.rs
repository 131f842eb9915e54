//! Photon-number statistics of the amplifier's output modes.
//!
//! In any equatorial mode basis {b, b⊥} the collinear Hamiltonian
//! iχℏ(â†_H â†_V) + h.c. splits into two independent single-mode squeezers with
//! opposite squeezing phases. An injected photon in mode b therefore leaves the
//! amplifier as (squeezed one-photon in b) ⊗ (squeezed vacuum in b⊥), with
//!
//! ```text
//! P_vac(2l)   = (2l)!   / (2^l l!)²  · Γ^{2l} / C
//! P_one(2j+1) = (2j+1)! / (2^j j!)²  · Γ^{2j} / C³
//! ```
//!
//! where Γ = tanh g and C = cosh g. Parity is strict — squeezed vacuum has even
//! photon numbers only, the squeezed photon odd only — which is what makes the
//! two sectors distinguishable in photon counting and drives everything in
//! `photostats`.
//!
//! Single-value queries evaluate the closed form in log space (ln Γ factors and
//! `ln_gamma`, no factorial overflow at any gain). Bulk tables use the
//! algebraically identical two-term recurrences
//! `P_vac(2l+2)/P_vac(2l) = Γ²(2l+1)/(2l+2)` and
//! `P_one(2j+3)/P_one(2j+1) = Γ²(2j+3)/(2j+2)`, which stay in range for the
//! same reason; a unit test pins the two routes against each other.

use super::{GainParameter, OpaError};
use statrs::function::gamma::ln_gamma;

/// Hard cap on tabulated support length; beyond this the gain is outside what
/// array-based statistics can serve.
pub(crate) const MAX_TABLE_LEN: usize = 1 << 26;

/// Probability of counting `j` photons in single-mode squeezed vacuum.
/// Zero for odd `j`.
pub fn squeezed_vacuum_prob(j: u64, gain: &GainParameter) -> f64 {
    if j % 2 != 0 {
        return 0.0;
    }
    let l = j / 2;
    if l == 0 {
        return 1.0 / gain.cosh_factor();
    }
    if gain.gamma() == 0.0 {
        return 0.0;
    }
    let lf = l as f64;
    let ln_p = ln_gamma(j as f64 + 1.0)
        - 2.0 * (lf * std::f64::consts::LN_2 + ln_gamma(lf + 1.0))
        + (j as f64) * gain.gamma().ln()
        - gain.cosh_factor().ln();
    ln_p.exp()
}

/// Probability of counting `k` photons in a squeezed single-photon state.
/// Zero for even `k` (including k = 0).
pub fn squeezed_one_prob(k: u64, gain: &GainParameter) -> f64 {
    if k % 2 == 0 {
        return 0.0;
    }
    let j = (k - 1) / 2;
    let c = gain.cosh_factor();
    if j == 0 {
        return 1.0 / (c * c * c);
    }
    if gain.gamma() == 0.0 {
        return 0.0;
    }
    let jf = j as f64;
    let ln_p = ln_gamma(k as f64 + 1.0)
        - 2.0 * (jf * std::f64::consts::LN_2 + ln_gamma(jf + 1.0))
        + ((k - 1) as f64) * gain.gamma().ln()
        - 3.0 * c.ln();
    ln_p.exp()
}

/// Which of the two squeezed families a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Parity {
    /// Photon numbers 2i (squeezed vacuum).
    Even,
    /// Photon numbers 2i+1 (squeezed single photon).
    Odd,
}

/// Tabulated photon-number distribution of one squeezed mode, truncated once
/// the un-captured tail drops below a target.
#[derive(Debug, Clone)]
pub(crate) struct SqueezedTable {
    pub parity: Parity,
    /// probs[i] = P(2i) for even parity, P(2i+1) for odd.
    pub probs: Vec<f64>,
    /// Mass beyond the captured support.
    #[cfg_attr(not(test), allow(dead_code))]
    pub tail: f64,
}

impl SqueezedTable {
    pub fn vacuum(gain: &GainParameter, tail_tol: f64) -> Result<Self, OpaError> {
        let c = gain.cosh_factor();
        let x = gain.gamma() * gain.gamma();
        Self::build(Parity::Even, 1.0 / c, x, |n| (n + 1.0) / (n + 2.0), tail_tol)
    }

    pub fn one_photon(gain: &GainParameter, tail_tol: f64) -> Result<Self, OpaError> {
        let c = gain.cosh_factor();
        let x = gain.gamma() * gain.gamma();
        Self::build(Parity::Odd, 1.0 / (c * c * c), x, |n| (n + 2.0) / (n + 1.0), tail_tol)
    }

    /// Shared recurrence driver: probs[i+1] = probs[i] · x · ratio(2i [+1]).
    fn build(
        parity: Parity,
        first: f64,
        x: f64,
        ratio: impl Fn(f64) -> f64,
        tail_tol: f64,
    ) -> Result<Self, OpaError> {
        let mut probs = Vec::with_capacity(64);
        let mut mass = first;
        let mut term = first;
        probs.push(first);
        let offset = match parity {
            Parity::Even => 0.0,
            Parity::Odd => 1.0,
        };
        while 1.0 - mass > tail_tol && term > 0.0 {
            let n = 2.0 * (probs.len() as f64 - 1.0) + offset;
            term *= x * ratio(n);
            // The accumulated mass can saturate a few ulp short of 1 for
            // unlucky gains; once a term no longer moves the sum the tail
            // target is unreachable and the support is as complete as f64
            // arithmetic allows. Without this the loop would run to the cap.
            if mass + term == mass {
                break;
            }
            probs.push(term);
            mass += term;
            if probs.len() >= MAX_TABLE_LEN {
                return Err(OpaError::TabulationTooLarge { cap: MAX_TABLE_LEN });
            }
        }
        Ok(Self { parity, probs, tail: (1.0 - mass).max(0.0) })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// Photon number of entry `i`.
    pub fn photon_number(&self, i: usize) -> u64 {
        match self.parity {
            Parity::Even => 2 * i as u64,
            Parity::Odd => 2 * i as u64 + 1,
        }
    }

    /// Test oracle: first moment straight off the table.
    #[cfg(test)]
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| self.photon_number(i) as f64 * p)
            .sum()
    }
}

/// The two marginals of an injected-amplifier sector, built to a common tail
/// target. Both sectors ((one ⊗ vac) and (vac ⊗ one)) share the same
/// total-photon-number law, so cutoff bookkeeping is injected-qubit-independent.
#[derive(Debug, Clone)]
pub(crate) struct SectorTables {
    pub one: SqueezedTable,
    pub vac: SqueezedTable,
    /// Cumulative vacuum mass: vac_cum[l] = Σ_{i ≤ l} P_vac(2i).
    vac_cum: Vec<f64>,
}

impl SectorTables {
    pub fn build(gain: &GainParameter, tail_tol: f64) -> Result<Self, OpaError> {
        let one = SqueezedTable::one_photon(gain, tail_tol)?;
        let vac = SqueezedTable::vacuum(gain, tail_tol)?;
        let mut vac_cum = Vec::with_capacity(vac.len());
        let mut acc = 0.0;
        for &p in &vac.probs {
            acc += p;
            vac_cum.push(acc);
        }
        Ok(Self { one, vac, vac_cum })
    }

    /// Mass of the joint sector with total photon number ≤ n_max.
    pub fn total_mass_within(&self, n_max: u64) -> f64 {
        let mut mass = 0.0;
        for (j, &q) in self.one.probs.iter().enumerate() {
            let n_one = 2 * j as u64 + 1;
            if n_one > n_max {
                break;
            }
            let budget = ((n_max - n_one) / 2) as usize;
            let cum = if budget >= self.vac_cum.len() {
                *self.vac_cum.last().unwrap()
            } else {
                self.vac_cum[budget]
            };
            mass += q * cum;
        }
        mass
    }

    /// Leakage (total-photon mass beyond n_max), conservatively including the
    /// marginals' own captured-support tails.
    pub fn leakage_beyond(&self, n_max: u64) -> f64 {
        (1.0 - self.total_mass_within(n_max)).max(0.0)
    }

    /// Smallest cutoff with leakage ≤ tol, or None if the captured tables can't
    /// certify one.
    pub fn min_cutoff(&self, tol: f64) -> Option<u64> {
        let hi = (2 * (self.one.len() - 1) + 1 + 2 * (self.vac.len() - 1)) as u64;
        if self.leakage_beyond(hi) > tol {
            return None;
        }
        let (mut lo, mut hi) = (0u64, hi);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.leakage_beyond(mid) <= tol {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }
}
