//! Polar-binned G-G acceleration envelopes.
//!
//! Acceleration points (a_x, a_y) are treated as cartesian coordinates and
//! converted to polar form; angle zero means pure positive longitudinal
//! acceleration and angles increase toward positive (left) lateral
//! acceleration. Center angles are reported in the signed range
//! (-180, 180] degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    /// Angle tolerance (half width of each bin), degrees.
    pub delta_r_deg: f64,
    /// Rotation stride between bin centers, degrees.
    pub delta_s_deg: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            delta_r_deg: 10.0,
            delta_s_deg: 15.0,
        }
    }
}

/// Number of envelope reference points: 360 / delta_s. The stride must
/// divide the full circle.
pub fn envelope_count(delta_s_deg: f64) -> Result<usize> {
    // negated form also rejects NaN strides
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(delta_s_deg > 0.0) {
        return Err(Error::NonDivisorStride(delta_s_deg));
    }
    let n = 360.0 / delta_s_deg;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::NonDivisorStride(delta_s_deg));
    }
    Ok(n.round() as usize)
}

/// Bin centers in ascending signed order, e.g. -165, -150, ..., 180 for a
/// 15 degree stride.
pub fn bin_centers(delta_s_deg: f64) -> Result<Vec<f64>> {
    let n = envelope_count(delta_s_deg)?;
    let mut centers: Vec<f64> = (0..n)
        .map(|k| {
            let a = k as f64 * delta_s_deg;
            if a > 180.0 + 1e-9 {
                a - 360.0
            } else {
                a
            }
        })
        .collect();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(centers)
}

/// One envelope reference point: the four radius statistics of all
/// acceleration points within the angular tolerance of the center angle.
/// Empty bins carry zero radii and n_points = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub center_angle_deg: f64,
    pub mean_r: f64,
    pub p75_r: f64,
    pub p95_r: f64,
    pub max_r: f64,
    pub n_points: usize,
}

impl EnvelopePoint {
    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub points: Vec<EnvelopePoint>,
}

/// Four envelope flavors, one per radius statistic.
pub const ENVELOPE_TYPES: [&str; 4] = ["mean", "max", "p75", "p95"];

impl Envelope {
    pub fn radii(&self, envelope_type: &str) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match envelope_type {
                "mean" => p.mean_r,
                "max" => p.max_r,
                "p75" => p.p75_r,
                "p95" => p.p95_r,
                other => panic!("unknown envelope type {other}"),
            })
            .collect()
    }
}

/// Circular angular distance in degrees, in [0, 180].
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Polar angle binning of (a_x, a_y) points into an envelope.
pub fn polar_bin(points: &[(f64, f64)], cfg: &EnvelopeConfig) -> Result<Envelope> {
    let centers = bin_centers(cfg.delta_s_deg)?;
    let polar: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(ax, ay)| (ay.atan2(ax).to_degrees(), (ax * ax + ay * ay).sqrt()))
        .collect();

    let mut out = Vec::with_capacity(centers.len());
    for &c in &centers {
        let mut radii: Vec<f64> = polar
            .iter()
            .filter(|&&(theta, _)| circular_distance_deg(theta, c) <= cfg.delta_r_deg)
            .map(|&(_, r)| r)
            .collect();
        if radii.is_empty() {
            out.push(EnvelopePoint {
                center_angle_deg: c,
                mean_r: 0.0,
                p75_r: 0.0,
                p95_r: 0.0,
                max_r: 0.0,
                n_points: 0,
            });
            continue;
        }
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = radii.len() as f64;
        out.push(EnvelopePoint {
            center_angle_deg: c,
            mean_r: radii.iter().sum::<f64>() / n,
            p75_r: percentile_sorted(&radii, 75.0),
            p95_r: percentile_sorted(&radii, 95.0),
            max_r: radii[radii.len() - 1],
            n_points: radii.len(),
        });
    }
    Ok(Envelope { points: out })
}
