//! Quasi-stationary cornering extraction and the curve-cutting gradient.

use serde::{Deserialize, Serialize};

use crate::curves::{CurveWindow, Direction};
use crate::error::{Error, Result};

/// One quasi-stationary stretch of a curve, reduced to its mean point.
/// `mean_a_y` is curve-relative (inner-positive), m/s^2; `mean_dev` is the
/// inner-positive lane deviation mean, meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarySegment {
    pub curve_id: u32,
    pub subject_id: String,
    pub start_idx: usize,
    pub end_idx: usize,
    pub duration_s: f64,
    pub mean_a_y: f64,
    pub mean_dev: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StationaryConfig {
    /// Maximum |d kappa / dt| for a sample to count as stationary, 1/(m*s).
    pub kappa_rate_max: f64,
    /// Minimum run duration, seconds.
    pub min_duration_s: f64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig {
            kappa_rate_max: 0.0005,
            min_duration_s: 1.0,
        }
    }
}

/// Central-difference curvature rate on the window's own time grid.
fn kappa_rate(window: &CurveWindow) -> Vec<f64> {
    let n = window.samples.len();
    let t = |i: usize| window.samples[i].t;
    let k = |i: usize| window.samples[i].kappa;
    (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if hi == lo {
                0.0
            } else {
                (k(hi) - k(lo)) / (t(hi) - t(lo))
            }
        })
        .collect()
}

/// Maximal runs where the curvature rate stays within the stationarity
/// threshold and that last at least the minimum duration; each run is
/// collapsed to its mean (a_y, dev) point with a_y flipped to the
/// inner-positive convention on right curves.
pub fn extract_stationary(window: &CurveWindow, cfg: &StationaryConfig) -> Vec<StationarySegment> {
    let n = window.samples.len();
    if n < 2 {
        return Vec::new();
    }
    let rate = kappa_rate(window);
    let a_y_sign = match window.direction {
        Direction::Left => 1.0,
        Direction::Right => -1.0,
    };

    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    // i == n is a sentinel that closes a trailing run
    #[allow(clippy::needless_range_loop)]
    for i in 0..=n {
        let stationary = i < n && rate[i].abs() <= cfg.kappa_rate_max;
        match (run_start, stationary) {
            (None, true) => run_start = Some(i),
            (Some(start), false) => {
                run_start = None;
                let end = i; // exclusive
                let duration = window.samples[end - 1].t - window.samples[start].t;
                if duration + 1e-12 < cfg.min_duration_s {
                    continue;
                }
                let len = (end - start) as f64;
                let mean_a_y =
                    window.samples[start..end].iter().map(|s| s.a_y).sum::<f64>() / len * a_y_sign;
                let mean_dev = window.dev[start..end].iter().sum::<f64>() / len;
                out.push(StationarySegment {
                    curve_id: window.curve_id,
                    subject_id: window.subject_id.clone(),
                    start_idx: start,
                    end_idx: end,
                    duration_s: duration,
                    mean_a_y,
                    mean_dev,
                });
            }
            _ => {}
        }
    }
    out
}

/// Ordinary least-squares fit dev = ccg * a_y + ccg0 over stationary mean
/// points, with a residual consistency band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CcgResult {
    /// Slope, meters per (m/s^2). Positive means the driver moves toward
    /// the curve inside as lateral acceleration grows.
    pub ccg: f64,
    /// Intercept (global offset), meters.
    pub ccg0: f64,
    /// 2 * 1.96 * residual standard deviation (denominator n-2), meters.
    pub ci_width: f64,
    pub n_points: usize,
    pub r2: f64,
}

pub fn fit_ccg(points: &[(f64, f64)]) -> Result<CcgResult> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateSpread);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let ccg = sxy / sxx;
    let ccg0 = mean_y - ccg * mean_x;

    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (ccg * p.0 + ccg0);
            e * e
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let resid_sd = (ss_res / (nf - 2.0)).sqrt();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(CcgResult {
        ccg,
        ccg0,
        ci_width: 2.0 * 1.96 * resid_sd,
        n_points: n,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SampleRecord;
    use crate::ingest::RoadType;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn window_from_kappa(kappa: &[f64], direction: Direction) -> CurveWindow {
        let rate = 50.0;
        let samples: Vec<SampleRecord> = kappa
            .iter()
            .enumerate()
            .map(|(i, &k)| SampleRecord {
                t: i as f64 / rate,
                v_x: 20.0,
                a_x: 0.0,
                a_y: k * 400.0,
                d_cl: 0.1,
                kappa: k,
                road_type: RoadType::Rural,
                lane_change: false,
                oncoming: false,
                street_id: "R".into(),
                valid: true,
            })
            .collect();
        let arc: Vec<f64> = (0..samples.len()).map(|i| i as f64 * 20.0 / rate).collect();
        let d_cl: Vec<f64> = samples.iter().map(|s| s.d_cl).collect();
        CurveWindow {
            curve_id: 1,
            subject_id: "s".into(),
            direction,
            dev: crate::curves::curve_relative_deviation(&d_cl, direction),
            arc_length: *arc.last().unwrap(),
            arc,
            samples,
        }
    }

    #[test]
    fn constant_kappa_single_full_segment() {
        let w = window_from_kappa(&vec![0.004; 300], Direction::Left);
        let segs = extract_stationary(&w, &StationaryConfig::default());
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].start_idx, 0);
        assert_eq!(segs[0].end_idx, 300);
        assert_abs_diff_eq!(segs[0].mean_a_y, 1.6, epsilon = 1e-12);
    }

    #[test]
    fn fast_ramp_never_stationary() {
        // kappa climbing 0.002 per second, four times the rate threshold
        let kappa: Vec<f64> = (0..300).map(|i| 0.002 * i as f64 / 50.0).collect();
        let w = window_from_kappa(&kappa, Direction::Left);
        assert!(extract_stationary(&w, &StationaryConfig::default()).is_empty());
    }

    #[test]
    fn two_plateaus_min_duration_matches_run_length_oracle() {
        // 3 s plateau, fast transition, 1 s plateau; min_duration 2 s keeps
        // only the first
        let rate = 50.0;
        let mut kappa = Vec::new();
        kappa.extend(std::iter::repeat_n(0.004, 150)); // 3 s
        for i in 0..25 {
            kappa.push(0.004 + 0.002 * i as f64 / 25.0); // 0.5 s fast ramp
        }
        kappa.extend(std::iter::repeat_n(0.006, 50)); // 1 s
        let w = window_from_kappa(&kappa, Direction::Left);
        let cfg = StationaryConfig {
            min_duration_s: 2.0,
            ..Default::default()
        };
        let segs = extract_stationary(&w, &cfg);

        // run-length oracle on the central-difference rate series
        let rates = kappa_rate(&w);
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut start = None;
        for (i, r) in rates.iter().enumerate() {
            if r.abs() <= cfg.kappa_rate_max {
                start.get_or_insert(i);
            } else if let Some(s) = start.take() {
                runs.push((s, i));
            }
        }
        if let Some(s) = start {
            runs.push((s, rates.len()));
        }
        runs.retain(|&(s, e)| (e - 1 - s) as f64 / rate >= cfg.min_duration_s);
        assert_eq!(runs.len(), 1);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start_idx, segs[0].end_idx), runs[0]);
    }

    #[test]
    fn exact_line_recovered() {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let a = 0.5 + 0.3 * i as f64;
                (a, 0.1 * a + 0.05)
            })
            .collect();
        let fit = fit_ccg(&pts).unwrap();
        assert_abs_diff_eq!(fit.ccg, 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ccg0, 0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ci_width, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_points_error() {
        assert!(matches!(
            fit_ccg(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(Error::TooFewPoints(2))
        ));
    }

    #[test]
    fn zero_spread_error() {
        let pts = vec![(1.0, 0.1), (1.0, 0.2), (1.0, 0.3)];
        assert!(matches!(fit_ccg(&pts), Err(Error::DegenerateSpread)));
    }

    #[test]
    fn noisy_fit_matches_normal_equation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|i| {
                let a = 0.2 + 3.0 * i as f64 / 500.0;
                (a, 0.099 * a + 0.039 + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_ccg(&pts).unwrap();
        assert!((fit.ccg - 0.099).abs() < 0.01);

        // closed-form normal equations: [n, Sx; Sx, Sxx] [b0; b1] = [Sy; Sxy]
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        let b1 = (n * sxy - sx * sy) / det;
        let b0 = (sy * sxx - sx * sxy) / det;
        assert_abs_diff_eq!(fit.ccg, b1, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.ccg0, b0, epsilon = 1e-10);
    }

    #[test]
    fn permutation_invariant() {
        let mut pts: Vec<(f64, f64)> = (0..20)
            .map(|i| (i as f64 * 0.1, 0.07 * i as f64 * 0.1 + 0.02 + ((i * 7) % 5) as f64 * 0.01))
            .collect();
        let a = fit_ccg(&pts).unwrap();
        pts.reverse();
        pts.swap(3, 11);
        let b = fit_ccg(&pts).unwrap();
        assert_abs_diff_eq!(a.ccg, b.ccg, epsilon = 1e-12);
        assert_abs_diff_eq!(a.ci_width, b.ci_width, epsilon = 1e-12);
    }

    #[test]
    fn constant_dev_shift_moves_intercept_only() {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| (i as f64 * 0.1, 0.05 * i as f64 * 0.1 + ((i * 3) % 7) as f64 * 0.01))
            .collect();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y + 0.42)).collect();
        let a = fit_ccg(&pts).unwrap();
        let b = fit_ccg(&shifted).unwrap();
        assert_abs_diff_eq!(a.ccg, b.ccg, epsilon = 1e-12);
        assert_abs_diff_eq!(b.ccg0 - a.ccg0, 0.42, epsilon = 1e-12);
        assert_abs_diff_eq!(a.ci_width, b.ci_width, epsilon = 1e-12);
    }

    #[test]
    fn mirror_curve_identical_result() {
        // same geometry as a right curve: kappa, a_y, d_cl all flip sign,
        // the inner-positive convention flips them back
        let kappa = vec![0.004; 300];
        let left = window_from_kappa(&kappa, Direction::Left);
        let mut right = window_from_kappa(&kappa, Direction::Right);
        for s in &mut right.samples {
            s.kappa = -s.kappa;
            s.a_y = -s.a_y;
            s.d_cl = -s.d_cl;
        }
        let d_cl: Vec<f64> = right.samples.iter().map(|s| s.d_cl).collect();
        right.dev = crate::curves::curve_relative_deviation(&d_cl, Direction::Right);

        let sl = extract_stationary(&left, &StationaryConfig::default());
        let sr = extract_stationary(&right, &StationaryConfig::default());
        assert_eq!(sl.len(), sr.len());
        for (a, b) in sl.iter().zip(&sr) {
            assert_abs_diff_eq!(a.mean_a_y, b.mean_a_y, epsilon = 1e-12);
            assert_abs_diff_eq!(a.mean_dev, b.mean_dev, epsilon = 1e-12);
        }
    }
}
