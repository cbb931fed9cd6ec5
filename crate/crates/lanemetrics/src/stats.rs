//! Eight-statistic channel summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary of one channel: Absmax, Max, Min, Mean, Median, SD, RMS, IDR.
///
/// Percentiles use linear interpolation between closest ranks; the SD uses
/// denominator n. The IDR is the distance between the 10th and 90th
/// percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    pub absmax: f64,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub rms: f64,
    pub idr: f64,
}

pub const STAT_NAMES: [&str; 8] = ["absmax", "max", "min", "mean", "median", "sd", "rms", "idr"];

impl StatBlock {
    pub fn fields(&self) -> [f64; 8] {
        [
            self.absmax,
            self.max,
            self.min,
            self.mean,
            self.median,
            self.sd,
            self.rms,
            self.idr,
        ]
    }

    fn from_fields(f: [f64; 8]) -> Self {
        StatBlock {
            absmax: f[0],
            max: f[1],
            min: f[2],
            mean: f[3],
            median: f[4],
            sd: f[5],
            rms: f[6],
            idr: f[7],
        }
    }
}

/// Percentile of an ascending-sorted slice, linear interpolation between
/// closest ranks (`p` in [0, 100]).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile of an unsorted slice; non-finite entries are ignored.
pub fn percentile(series: &[f64], p: f64) -> Result<f64> {
    let mut v: Vec<f64> = series.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::EmptySeries);
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(percentile_sorted(&v, p))
}

/// Computes the eight statistics of a series. Non-finite entries (masked
/// samples) are skipped; an all-masked series is an error.
pub fn stat_block(series: &[f64]) -> Result<StatBlock> {
    let mut v: Vec<f64> = series.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::EmptySeries);
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let min = v[0];
    let max = v[v.len() - 1];
    let mean = v.iter().sum::<f64>() / n;
    let sq_mean = v.iter().map(|x| x * x).sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    Ok(StatBlock {
        absmax: max.abs().max(min.abs()),
        max,
        min,
        mean,
        median: percentile_sorted(&v, 50.0),
        sd,
        rms: sq_mean.sqrt(),
        idr: percentile_sorted(&v, 90.0) - percentile_sorted(&v, 10.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    Mean,
    Median,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Mean => "mean",
            AggregationMode::Median => "median",
        }
    }
}

/// Field-wise mean or median across per-curve blocks.
pub fn aggregate_subject(blocks: &[StatBlock], mode: AggregationMode) -> Result<StatBlock> {
    if blocks.is_empty() {
        return Err(Error::NoEvaluableCurves);
    }
    let mut out = [0.0; 8];
    for (i, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = blocks.iter().map(|b| b.fields()[i]).collect();
        *slot = match mode {
            AggregationMode::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            AggregationMode::Median => percentile(&vals, 50.0)?,
        };
    }
    Ok(StatBlock::from_fields(out))
}
