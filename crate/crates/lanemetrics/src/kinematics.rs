//! Jerk and relative drift velocity series.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::ingest::SubjectTrace;

/// Smoothed numerical derivative on a uniform grid.
///
/// A local second-order polynomial is fitted over 2*half_window+1 samples
/// and its derivative evaluated at the center; endpoints use one-sided
/// windows. Exact for polynomials of degree <= 2.
pub fn differentiate_smoothed(series: &[f64], rate_hz: f64, half_window: usize) -> Result<Vec<f64>> {
    let n = series.len();
    let window = 2 * half_window + 1;
    if window > n {
        return Err(Error::WindowTooLarge { window, len: n });
    }
    let dt = 1.0 / rate_hz;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window + 1).min(n);
        out.push(fit_derivative(&series[lo..hi], i - lo, dt));
    }
    Ok(out)
}

/// Least-squares quadratic fit over the window, derivative at sample
/// `center` (index into the window). Falls back to a straight line for
/// two-point windows.
fn fit_derivative(window: &[f64], center: usize, dt: f64) -> f64 {
    let m = window.len();
    debug_assert!(m >= 2);
    if m == 2 {
        return (window[1] - window[0]) / dt;
    }
    // offsets in sample units relative to the center sample
    let (mut s0, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (j, &y) in window.iter().enumerate() {
        let x = j as f64 - center as f64;
        let x2 = x * x;
        s0 += 1.0;
        s1 += x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
        b0 += y;
        b1 += x * y;
        b2 += x2 * y;
    }
    let a = Matrix3::new(s0, s1, s2, s1, s2, s3, s2, s3, s4);
    let b = Vector3::new(b0, b1, b2);
    match a.lu().solve(&b) {
        // coefficient of the linear term is the derivative at x = 0
        Some(c) => c[1] / dt,
        None => f64::NAN,
    }
}

/// Per-segment smoothed derivative over a whole trace; samples in segments
/// shorter than the window are masked with NaN.
pub fn differentiate_trace(trace: &SubjectTrace, channel: impl Fn(usize) -> f64, half_window: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; trace.samples.len()];
    for seg in &trace.segments {
        let series: Vec<f64> = (seg.start..seg.end).map(&channel).collect();
        if let Ok(d) = differentiate_smoothed(&series, trace.sample_rate_hz, half_window) {
            out[seg.start..seg.end].copy_from_slice(&d);
        }
    }
    out
}

/// Longitudinal and lateral jerk, m/s^3, aligned to the trace grid.
#[derive(Debug, Clone)]
pub struct JerkSeries {
    pub k_x: Vec<f64>,
    pub k_y: Vec<f64>,
}

pub fn jerk_series(trace: &SubjectTrace, half_window: usize) -> JerkSeries {
    JerkSeries {
        k_x: differentiate_trace(trace, |i| trace.samples[i].a_x, half_window),
        k_y: differentiate_trace(trace, |i| trace.samples[i].a_y, half_window),
    }
}

/// Relative drift velocity in percent: (d d_CL/dt) * 100 / v_x.
/// Samples slower than `v_min` are masked with NaN.
pub fn drift_velocity_series(
    d_cl: &[f64],
    v_x: &[f64],
    rate_hz: f64,
    half_window: usize,
    v_min: f64,
) -> Result<Vec<f64>> {
    if d_cl.len() != v_x.len() {
        return Err(Error::LengthMismatch(d_cl.len(), v_x.len()));
    }
    let ddt = differentiate_smoothed(d_cl, rate_hz, half_window)?;
    Ok(ddt
        .iter()
        .zip(v_x)
        .map(|(&d, &v)| if v < v_min { f64::NAN } else { d * 100.0 / v })
        .collect())
}

/// Drift velocity over a whole trace, masked across gaps and below `v_min`.
pub fn drift_velocity_trace(trace: &SubjectTrace, half_window: usize, v_min: f64) -> Vec<f64> {
    let ddt = differentiate_trace(trace, |i| trace.samples[i].d_cl, half_window);
    ddt.iter()
        .zip(&trace.samples)
        .map(|(&d, s)| {
            if s.v_x < v_min {
                f64::NAN
            } else {
                d * 100.0 / s.v_x
            }
        })
        .collect()
}
