//! Curve-level statistics: weighted fringe fits against phase, and the
//! flatness/homogeneity tests that decide whether a phase scan carries any
//! signal. These are deliberately frequentist and unexciting — the question
//! "can Bob read Alice's basis off this curve" should be answered by a p-value,
//! not by eye.

use nalgebra::{Matrix3, Vector3};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("standard error at point {index} must be finite and positive")]
    BadErrorBar { index: usize },
    #[error("design matrix is singular; phases are degenerate")]
    DegenerateDesign,
}

/// Result of fitting y(φ) = offset + amplitude·cos(φ − phase).
#[derive(Debug, Clone)]
pub struct FringeFit {
    pub offset: f64,
    pub offset_se: f64,
    pub amplitude: f64,
    pub amplitude_se: f64,
    pub phase: f64,
    /// amplitude / offset and its propagated error.
    pub visibility: f64,
    pub visibility_se: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Weighted least squares on the basis {1, cos φ, sin φ}.
/// Points are (phase, value, standard error).
pub fn fit_fringe(points: &[(f64, f64, f64)]) -> Result<FringeFit, AnalysisError> {
    if points.len() < 4 {
        return Err(AnalysisError::TooFewPoints { need: 4, got: points.len() });
    }
    let mut xtwx = Matrix3::<f64>::zeros();
    let mut xtwy = Vector3::<f64>::zeros();
    for (i, &(phi, y, se)) in points.iter().enumerate() {
        if !(se > 0.0 && se.is_finite()) {
            return Err(AnalysisError::BadErrorBar { index: i });
        }
        let w = 1.0 / (se * se);
        let row = Vector3::new(1.0, phi.cos(), phi.sin());
        xtwx += w * row * row.transpose();
        xtwy += w * y * row;
    }
    let cov = xtwx.try_inverse().ok_or(AnalysisError::DegenerateDesign)?;
    // LU can "invert" a rank-deficient design through rounding noise; a loose
    // reconstruction check catches that without rejecting ill-scaled fits.
    if ((xtwx * cov) - Matrix3::identity()).abs().max() > 1e-6 {
        return Err(AnalysisError::DegenerateDesign);
    }
    let beta = cov * xtwy;
    let (c, a, b) = (beta[0], beta[1], beta[2]);

    let amplitude = a.hypot(b);
    // d(amp)/da = a/amp etc.; at zero amplitude fall back to the larger axis.
    let (da, db) = if amplitude > 0.0 { (a / amplitude, b / amplitude) } else { (1.0, 0.0) };
    let var_amp = da * da * cov[(1, 1)] + db * db * cov[(2, 2)] + 2.0 * da * db * cov[(1, 2)];
    let cov_amp_off = da * cov[(0, 1)] + db * cov[(0, 2)];

    let visibility = amplitude / c;
    let var_vis = if amplitude > 0.0 && c != 0.0 {
        visibility * visibility
            * (var_amp / (amplitude * amplitude) + cov[(0, 0)] / (c * c)
                - 2.0 * cov_amp_off / (amplitude * c))
    } else {
        var_amp / (c * c)
    };

    let mut chi2 = 0.0;
    for &(phi, y, se) in points {
        let fit = c + a * phi.cos() + b * phi.sin();
        chi2 += ((y - fit) / se).powi(2);
    }

    Ok(FringeFit {
        offset: c,
        offset_se: cov[(0, 0)].max(0.0).sqrt(),
        amplitude,
        amplitude_se: var_amp.max(0.0).sqrt(),
        phase: b.atan2(a),
        visibility,
        visibility_se: var_vis.max(0.0).sqrt(),
        chi2,
        dof: points.len() - 3,
    })
}

#[derive(Debug, Clone)]
pub struct Chi2Test {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_pvalue(chi2: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2)
}

/// Tests the points (value, standard error per phase) against a constant.
pub fn flatness_chi2(points: &[(f64, f64, f64)]) -> Result<Chi2Test, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints { need: 2, got: points.len() });
    }
    let mut wsum = 0.0;
    let mut wy = 0.0;
    for (i, &(_, y, se)) in points.iter().enumerate() {
        if !(se > 0.0 && se.is_finite()) {
            return Err(AnalysisError::BadErrorBar { index: i });
        }
        let w = 1.0 / (se * se);
        wsum += w;
        wy += w * y;
    }
    let mean = wy / wsum;
    let chi2: f64 = points.iter().map(|&(_, y, se)| ((y - mean) / se).powi(2)).sum();
    let dof = points.len() - 1;
    Ok(Chi2Test { chi2, dof, p_value: chi2_pvalue(chi2, dof) })
}

/// Two-sample homogeneity test on aligned count histograms. Adjacent cells
/// are pooled until every expected count reaches 5, the usual validity floor
/// for the chi-square approximation.
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> Result<Chi2Test, AnalysisError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(AnalysisError::TooFewPoints { need: 1, got: a.len().min(b.len()) });
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(AnalysisError::TooFewPoints { need: 1, got: 0 });
    }
    let (na, nb) = (na as f64, nb as f64);
    let total = na + nb;

    // Pool adjacent cells left to right until both expected counts ≥ 5.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for (&xa, &xb) in a.iter().zip(b) {
        ca += xa as f64;
        cb += xb as f64;
        let pooled = ca + cb;
        if pooled * na / total >= 5.0 && pooled * nb / total >= 5.0 {
            cells.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => cells.push((ca, cb)),
        }
    }
    if cells.len() < 2 {
        return Err(AnalysisError::TooFewPoints { need: 2, got: cells.len() });
    }

    let mut chi2 = 0.0;
    for &(xa, xb) in &cells {
        let row = xa + xb;
        let ea = row * na / total;
        let eb = row * nb / total;
        chi2 += (xa - ea).powi(2) / ea + (xb - eb).powi(2) / eb;
    }
    let dof = cells.len() - 1;
    Ok(Chi2Test { chi2, dof, p_value: chi2_pvalue(chi2, dof) })
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}
