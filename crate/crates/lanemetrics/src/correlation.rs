//! Pearson and partial Pearson correlation with two-tailed p-values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Sample Pearson correlation. Requires n >= 3 and nonzero variance on
/// both sides.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, usize)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx * syy).sqrt(), n))
}

/// Least-squares residuals of y on [1, covariates].
fn residualize(y: &[f64], covariates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = y.len();
    let k = covariates.len();
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { covariates[j - 1][i] });
    let rhs = DMatrix::from_fn(n, 1, |i, _| y[i]);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * rhs;
    let beta = xtx.lu().solve(&xty).ok_or(Error::CollinearCovariates)?;
    let fitted = design * beta;
    Ok((0..n).map(|i| y[i] - fitted[(i, 0)]).collect())
}

/// Partial Pearson correlation controlling for the covariate columns:
/// both series are residualized on [1, covariates], then correlated.
/// Degrees of freedom are n - 2 - k.
pub fn partial_pearson(x: &[f64], y: &[f64], covariates: &[Vec<f64>]) -> Result<(f64, usize, usize)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    let k = covariates.len();
    for c in covariates {
        if c.len() != n {
            return Err(Error::LengthMismatch(c.len(), n));
        }
    }
    if n <= k + 2 {
        return Err(Error::TooFewPoints(n));
    }
    if k == 0 {
        let (r, n) = pearson(x, y)?;
        return Ok((r, n, n - 2));
    }
    let rx = residualize(x, covariates)?;
    let ry = residualize(y, covariates)?;
    let (r, _) = pearson(&rx, &ry)?;
    Ok((r, n, n - 2 - k))
}

/// Two-tailed p-value of a correlation coefficient at the given degrees of
/// freedom via the Student-t distribution.
pub fn p_two_tailed(r: f64, df: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignificanceTier {
    NotSignificant,
    P05,
    P01,
    P001,
}

impl SignificanceTier {
    pub fn from_p(p: f64) -> SignificanceTier {
        if p < 0.001 {
            SignificanceTier::P001
        } else if p < 0.01 {
            SignificanceTier::P01
        } else if p < 0.05 {
            SignificanceTier::P05
        } else {
            SignificanceTier::NotSignificant
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            SignificanceTier::NotSignificant => "ns",
            SignificanceTier::P05 => "*",
            SignificanceTier::P01 => "**",
            SignificanceTier::P001 => "***",
        }
    }
}

/// One (factor, indicator) correlation; rows that could not be computed
/// carry the failure reason instead of a coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub factor: String,
    pub indicator: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    pub df: usize,
    pub tier: Option<SignificanceTier>,
    pub note: Option<String>,
}

/// Subjects x named columns with missing cells as NaN.
#[derive(Debug, Clone)]
pub struct NamedMatrix {
    pub subject_ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

impl NamedMatrix {
    pub fn column_values(&self, j: usize) -> Vec<f64> {
        (0..self.values.nrows()).map(|i| self.values[(i, j)]).collect()
    }
}

/// Full factor x indicator partial-correlation sweep with pairwise-complete
/// subject selection per pair. Per-pair failures become flagged rows, not
/// aborts.
pub fn correlate_all(
    factors: &NamedMatrix,
    indicators: &NamedMatrix,
    covariates: &[Vec<f64>],
) -> Vec<CorrelationEntry> {
    assert_eq!(factors.subject_ids, indicators.subject_ids);
    let n_subjects = factors.subject_ids.len();
    let mut out = Vec::new();
    for (fj, factor) in factors.columns.iter().enumerate() {
        for (ij, indicator) in indicators.columns.iter().enumerate() {
            let fx = factors.column_values(fj);
            let iy = indicators.column_values(ij);
            // pairwise-complete selection
            let keep: Vec<usize> = (0..n_subjects)
                .filter(|&i| fx[i].is_finite() && iy[i].is_finite())
                .collect();
            let x: Vec<f64> = keep.iter().map(|&i| fx[i]).collect();
            let y: Vec<f64> = keep.iter().map(|&i| iy[i]).collect();
            let cov: Vec<Vec<f64>> = covariates
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect();
            match partial_pearson(&x, &y, &cov) {
                Ok((r, n, df)) => {
                    let p = p_two_tailed(r, df);
                    out.push(CorrelationEntry {
                        factor: factor.clone(),
                        indicator: indicator.clone(),
                        r: Some(r),
                        p: Some(p),
                        n,
                        df,
                        tier: Some(SignificanceTier::from_p(p)),
                        note: None,
                    });
                }
                Err(e) => out.push(CorrelationEntry {
                    factor: factor.clone(),
                    indicator: indicator.clone(),
                    r: None,
                    p: None,
                    n: keep.len(),
                    df: 0,
                    tier: None,
                    note: Some(e.to_string()),
                }),
            }
        }
    }
    out
}
