//! What Bob can and cannot see: density-matrix invariance under Alice's basis
//! choice, information-theoretic bounds from simulated datasets, and the
//! clone-correlation structure that explains where the naive amplifier
//! argument breaks down.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::opa::{amplify_numeric, AmplifiedState, GainParameter, OpaError, Truncation};
use crate::photostats::{DeltaLaw, StatsError};
use crate::protocol::TrialRecord;
use crate::qubit::MeasurementBasis;

#[derive(Debug, Error)]
pub enum NoSignalError {
    #[error("density operators are incompatible (different representation or labels)")]
    IncompatibleOperands,
    #[error("two-clone reduction needs mean photon number ≥ 2, got {mean:.3}")]
    InsufficientPhotons { mean: f64 },
    #[error("no usable records (all have undefined statistic or dataset is empty)")]
    EmptyRecords,
    #[error("bin count must be at least 2, got {bins}")]
    InvalidBins { bins: usize },
    #[error(transparent)]
    Opa(#[from] OpaError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A density operator in one of two storage forms: an explicit small matrix,
/// or a low-rank mixture of truncated pure states. The mixture form keeps
/// no-signaling checks exact without ever materializing the huge dense matrix
/// a many-photon state would need.
#[derive(Debug, Clone)]
pub enum DensityMatrix {
    Dense { labels: Vec<String>, matrix: DMatrix<Complex64> },
    StateMixture { weights: Vec<f64>, states: Vec<AmplifiedState> },
}

impl DensityMatrix {
    pub fn dense(labels: Vec<String>, matrix: DMatrix<Complex64>) -> Self {
        DensityMatrix::Dense { labels, matrix }
    }

    pub fn mixture(weights: Vec<f64>, states: Vec<AmplifiedState>) -> Self {
        DensityMatrix::StateMixture { weights, states }
    }

    pub fn matrix(&self) -> Option<&DMatrix<Complex64>> {
        match self {
            DensityMatrix::Dense { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            DensityMatrix::Dense { matrix, .. } => matrix.diagonal().iter().map(|z| z.re).sum(),
            DensityMatrix::StateMixture { weights, .. } => weights.iter().sum(),
        }
    }

    /// ½‖ρ − σ‖₁ through eigenvalues of the Hermitian difference.
    ///
    /// For mixtures the difference has rank at most the total number of
    /// member states, so its spectrum is computed exactly in that span
    /// (states are normalized over their captured mass first).
    pub fn trace_distance(&self, other: &Self) -> Result<f64, NoSignalError> {
        match (self, other) {
            (
                DensityMatrix::Dense { labels: la, matrix: ma },
                DensityMatrix::Dense { labels: lb, matrix: mb },
            ) => {
                if la != lb || ma.shape() != mb.shape() {
                    return Err(NoSignalError::IncompatibleOperands);
                }
                let diff = ma - mb;
                let eig = diff.symmetric_eigen();
                Ok(0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
            }
            (
                DensityMatrix::StateMixture { weights: wa, states: sa },
                DensityMatrix::StateMixture { weights: wb, states: sb },
            ) => {
                // Signed coefficients of ρ − σ over the pooled states.
                let states: Vec<&AmplifiedState> = sa.iter().chain(sb.iter()).collect();
                let coeff: Vec<f64> = wa
                    .iter()
                    .copied()
                    .chain(wb.iter().map(|w| -w))
                    .collect();
                let r = states.len();
                let norms: Vec<f64> = states.iter().map(|s| s.norm_sq().sqrt()).collect();
                let mut gram = DMatrix::<Complex64>::zeros(r, r);
                for i in 0..r {
                    for j in 0..r {
                        let ip = states[i]
                            .inner(states[j])
                            .map_err(|_| NoSignalError::IncompatibleOperands)?;
                        gram[(i, j)] = ip / (norms[i] * norms[j]);
                    }
                }
                // Nonzero eigenvalues of Σ cᵢ|ψᵢ⟩⟨ψᵢ| equal those of
                // W† diag(c) W with W = V Γ^{1/2} from the Gram eigensystem.
                // Directions at the Gram's noise floor must be dropped first:
                // √(εγ_max) cross terms would otherwise pollute an exactly
                // cancelling difference at the 1e-8 level.
                let ge = gram.symmetric_eigen();
                let g_max = ge.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let keep: Vec<usize> =
                    (0..r).filter(|&i| ge.eigenvalues[i] > g_max * 1e-12).collect();
                if keep.is_empty() {
                    return Ok(0.0);
                }
                let k = keep.len();
                let mut w = DMatrix::<Complex64>::zeros(r, k);
                for (col, &i) in keep.iter().enumerate() {
                    let s = ge.eigenvalues[i].sqrt();
                    for row in 0..r {
                        w[(row, col)] = ge.eigenvectors[(row, i)] * s;
                    }
                }
                let mut m = DMatrix::<Complex64>::zeros(k, k);
                for i in 0..k {
                    for j in 0..k {
                        m[(i, j)] = (0..r)
                            .map(|s| w[(s, i)].conj() * coeff[s] * w[(s, j)])
                            .sum();
                    }
                }
                let eig = m.symmetric_eigen();
                Ok(0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
            }
            _ => Err(NoSignalError::IncompatibleOperands),
        }
    }
}

/// The state of Bob's modes when Alice measures in `alice_basis` and tells
/// him nothing: the equal mixture of the two amplified singlet partners.
/// Built on the numeric backend so the invariance statement is checked
/// against direct evolution rather than the closed form.
pub fn rho_bob(
    alice_basis: &MeasurementBasis,
    gain: &GainParameter,
    trunc: &Truncation,
) -> Result<DensityMatrix, NoSignalError> {
    let p0 = alice_basis.outcome_state(0).time_reversal();
    let p1 = alice_basis.outcome_state(1).time_reversal();
    let s0 = amplify_numeric(&p0, gain, trunc)?;
    let s1 = amplify_numeric(&p1, gain, trunc)?;
    Ok(DensityMatrix::mixture(vec![0.5, 0.5], vec![s0, s1]))
}

/// One pass/fail line of an invariance check, ready for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub config: serde_json::Value,
}

/// Linearity check on count statistics: the two outcomes of Alice's basis φ
/// sum to the same photon-count-difference law as any other basis, here
/// compared against the reference pair {0, π} point by point.
pub fn distribution_sum_invariance(
    phi: f64,
    gain: &GainParameter,
) -> Result<InvarianceReport, NoSignalError> {
    let law = DeltaLaw::new(gain, None)?;
    let probe_a = law.distribution(phi);
    let probe_b = law.distribution(phi + std::f64::consts::PI);
    let ref_a = law.distribution(0.0);
    let ref_b = law.distribution(std::f64::consts::PI);
    let value = probe_a
        .probs
        .iter()
        .zip(&probe_b.probs)
        .zip(ref_a.probs.iter().zip(&ref_b.probs))
        .map(|((pa, pb), (ra, rb))| ((pa + pb) - (ra + rb)).abs())
        .fold(0.0f64, f64::max);
    let threshold = 1e-12;
    Ok(InvarianceReport {
        metric: "distribution_sum_max_abs_diff".to_string(),
        value,
        threshold,
        pass: value < threshold,
        config: serde_json::json!({ "gain": gain.g(), "phi": phi }),
    })
}

/// Which per-trial statistic Bob bins when estimating information flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobStatistic {
    /// N = (I_a − I_b)/(I_a + I_b), range [−1, 1].
    NormalizedDiff,
    /// |N|, range [0, 1].
    AbsNormalizedDiff,
}

impl BobStatistic {
    fn range(&self) -> (f64, f64) {
        match self {
            BobStatistic::NormalizedDiff => (-1.0, 1.0),
            BobStatistic::AbsNormalizedDiff => (0.0, 1.0),
        }
    }

    fn extract(&self, r: &TrialRecord) -> Option<f64> {
        let n = r.n_stat?;
        Some(match self {
            BobStatistic::NormalizedDiff => n,
            BobStatistic::AbsNormalizedDiff => n.abs(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MiEstimate {
    /// Miller–Madow-corrected plug-in mutual information, in bits.
    pub bits: f64,
    pub bootstrap_se: f64,
    pub n_used: usize,
    /// Records dropped because the statistic was undefined (no photons seen).
    pub excluded_undefined: usize,
    pub bins: usize,
    pub basis_count: usize,
}

fn plug_in_mi(joint: &[Vec<usize>], n: usize) -> f64 {
    let nf = n as f64;
    let rows = joint.len();
    let cols = joint[0].len();
    let row_sums: Vec<f64> = joint.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> =
        (0..cols).map(|j| joint.iter().map(|r| r[j]).sum::<usize>() as f64).collect();
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let c = joint[i][j] as f64;
            if c > 0.0 {
                mi += (c / nf) * ((c * nf) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    // Miller–Madow: subtract the occupancy bias of the plug-in estimate.
    let m_x = row_sums.iter().filter(|&&s| s > 0.0).count() as f64;
    let m_y = col_sums.iter().filter(|&&s| s > 0.0).count() as f64;
    let m_xy = joint.iter().flatten().filter(|&&c| c > 0).count() as f64;
    (mi + (m_x + m_y - m_xy - 1.0) / (2.0 * nf)) / std::f64::consts::LN_2
}

/// Mutual information between Alice's basis label and Bob's binned statistic,
/// with a bootstrap standard error over `resamples` resamplings.
pub fn mutual_information(
    records: &[TrialRecord],
    stat: BobStatistic,
    bins: usize,
    resamples: usize,
    seed: u64,
) -> Result<MiEstimate, NoSignalError> {
    if bins < 2 {
        return Err(NoSignalError::InvalidBins { bins });
    }
    let mut basis_labels: Vec<&str> = records.iter().map(|r| r.alice_basis.as_str()).collect();
    basis_labels.sort_unstable();
    basis_labels.dedup();
    let basis_index = |label: &str| basis_labels.iter().position(|&b| b == label).unwrap();

    let (lo, hi) = stat.range();
    let width = hi - lo;
    let bin_of = |y: f64| (((y - lo) / width * bins as f64) as usize).min(bins - 1);

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(records.len());
    let mut excluded = 0usize;
    for r in records {
        match stat.extract(r) {
            Some(y) => pairs.push((basis_index(&r.alice_basis), bin_of(y))),
            None => excluded += 1,
        }
    }
    if pairs.is_empty() || basis_labels.is_empty() {
        return Err(NoSignalError::EmptyRecords);
    }

    let tally = |sample: &[(usize, usize)]| {
        let mut joint = vec![vec![0usize; bins]; basis_labels.len()];
        for &(x, y) in sample {
            joint[x][y] += 1;
        }
        plug_in_mi(&joint, sample.len())
    };
    let bits = tally(&pairs);

    let base_rng = ChaCha12Rng::seed_from_u64(seed);
    let mut resampled = Vec::with_capacity(pairs.len());
    let mut estimates = Vec::with_capacity(resamples);
    for r in 0..resamples {
        let mut rng = base_rng.clone();
        rng.set_stream(r as u64);
        resampled.clear();
        for _ in 0..pairs.len() {
            resampled.push(pairs[rng.random_range(0..pairs.len())]);
        }
        estimates.push(tally(&resampled));
    }
    let bootstrap_se = match crate::analysis::mean_se(&estimates) {
        Some((_, se)) => se * (resamples as f64).sqrt(),
        None => 0.0,
    };

    Ok(MiEstimate {
        bits,
        bootstrap_se,
        n_used: pairs.len(),
        excluded_undefined: excluded,
        bins,
        basis_count: basis_labels.len(),
    })
}

/// Two-photon and one-photon reduced density matrices of an amplified state,
/// normalized to unit trace, plus their tensor-product reference.
#[derive(Debug, Clone)]
pub struct TwoCloneDensity {
    /// 4×4 two-clone matrix over ordered mode pairs (aa, ab, ba, bb).
    pub pair: DensityMatrix,
    /// 2×2 single-clone matrix.
    pub single: DensityMatrix,
    /// ρ_single ⊗ ρ_single — what independent clones would show.
    pub product: DensityMatrix,
    /// ⟨n(n−1)⟩: ordered-pair normalization of `pair`.
    pub pair_weight: f64,
    /// ⟨n⟩ total.
    pub mean_photons: f64,
}

/// Extracts clone correlations from the state via second-order correlators
/// ⟨a_k†a_l†a_i a_j⟩ = ⟨a_k a_l ψ|a_i a_j ψ⟩.
pub fn two_clone_density(state: &AmplifiedState) -> Result<TwoCloneDensity, NoSignalError> {
    let (ma, mb) = state.marginal_means();
    let mean = ma + mb;
    if mean < 2.0 {
        return Err(NoSignalError::InsufficientPhotons { mean });
    }
    let norm = state.norm_sq();
    let n_max = state.n_max();

    // Lowered copies of the state: (a_i ψ) and (a_i a_j ψ) as flat tables.
    let lower = |which_a: u64, which_b: u64| -> Vec<Complex64> {
        let mut out = Vec::new();
        for n in 0..=n_max.saturating_sub(which_a + which_b) {
            for a in 0..=n {
                let b = n - a;
                let (sa, sb) = (a + which_a, b + which_b);
                let mut f = 1.0;
                for k in 0..which_a {
                    f *= ((a + k + 1) as f64).sqrt();
                }
                for k in 0..which_b {
                    f *= ((b + k + 1) as f64).sqrt();
                }
                out.push(state.amplitude(sa, sb) * f);
            }
        }
        out
    };
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum::<Complex64>() / norm
    };

    let s_a = lower(1, 0);
    let s_b = lower(0, 1);
    let single_raw = [
        [dot(&s_a, &s_a), dot(&s_a, &s_b)],
        [dot(&s_b, &s_a), dot(&s_b, &s_b)],
    ];
    let mean_exact = single_raw[0][0].re + single_raw[1][1].re;

    let t_aa = lower(2, 0);
    let t_ab = lower(1, 1);
    let t_bb = lower(0, 2);
    // Ordered-pair index order: aa, ab, ba, bb; T_ba = T_ab.
    let t: [&[Complex64]; 4] = [&t_aa, &t_ab, &t_ab, &t_bb];
    let mut pair_raw = DMatrix::<Complex64>::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            // ρ[(ij),(kl)] = ⟨T_kl|T_ij⟩: row = annihilated pair of the ket.
            pair_raw[(i, j)] = dot(t[j], t[i]);
        }
    }
    let z2: f64 = pair_raw.diagonal().iter().map(|z| z.re).sum();
    if z2 <= 0.0 {
        return Err(NoSignalError::InsufficientPhotons { mean });
    }

    let (la, lb) = state.basis().labels();
    let single_labels = vec![la.to_string(), lb.to_string()];
    let pair_labels: Vec<String> = ["aa", "ab", "ba", "bb"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let single_m = DMatrix::from_fn(2, 2, |i, j| single_raw[i][j] / mean_exact);
    let product_m = single_m.kronecker(&single_m);
    let pair_m = pair_raw.map(|z| z / z2);

    Ok(TwoCloneDensity {
        pair: DensityMatrix::dense(pair_labels.clone(), pair_m),
        single: DensityMatrix::dense(single_labels, single_m),
        product: DensityMatrix::dense(pair_labels, product_m),
        pair_weight: z2,
        mean_photons: mean_exact,
    })
}
