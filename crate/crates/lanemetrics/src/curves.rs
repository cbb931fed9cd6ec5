//! Curve-of-interest selection, per-subject curve windows, and the
//! straight-driving center band.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RoadType, SampleRecord, SubjectTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// A labeled curve on the shared route, in route arc-length coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOfInterest {
    pub curve_id: u32,
    pub direction: Direction,
    pub start_s: f64,
    pub end_s: f64,
    pub peak_kappa: f64,
}

/// Arc-length-indexed curvature profile of the route, computed once from a
/// designated reference drive and shared across subjects so that every
/// subject sees identical curve boundaries.
#[derive(Debug, Clone)]
pub struct RouteProfile {
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    pub road_type: Vec<RoadType>,
}

impl RouteProfile {
    pub fn from_trace(trace: &SubjectTrace) -> RouteProfile {
        let s = trace.cumulative_arc();
        RouteProfile {
            kappa: trace.samples.iter().map(|x| x.kappa).collect(),
            road_type: trace.samples.iter().map(|x| x.road_type).collect(),
            s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSelectConfig {
    /// Curvature threshold, 1/m.
    pub tau_kappa: f64,
    /// Same-signed runs closer than this merge into one curve, meters.
    pub merge_gap_m: f64,
    /// Curves shorter than this are discarded, meters.
    pub min_length_m: f64,
    /// Restrict selection to rural road segments.
    pub rural_only: bool,
}

impl Default for CurveSelectConfig {
    fn default() -> Self {
        CurveSelectConfig {
            tau_kappa: 0.002,
            merge_gap_m: 10.0,
            min_length_m: 20.0,
            rural_only: true,
        }
    }
}

/// Maximal contiguous runs with |kappa| >= tau become curves; same-signed
/// runs separated by less than the merge gap fuse into one. Direction is
/// the sign of kappa at the peak magnitude.
pub fn select_curves(profile: &RouteProfile, cfg: &CurveSelectConfig) -> Result<Vec<CurveOfInterest>> {
    if profile.s.is_empty() {
        return Err(Error::EmptyProfile);
    }

    #[derive(Clone)]
    struct Run {
        start_s: f64,
        end_s: f64,
        peak: f64,
    }

    let included = |i: usize| {
        profile.kappa[i].abs() >= cfg.tau_kappa
            && (!cfg.rural_only || profile.road_type[i] == RoadType::Rural)
    };

    // collect threshold runs, splitting on sign change
    let mut runs: Vec<Run> = Vec::new();
    let mut current: Option<Run> = None;
    for i in 0..profile.s.len() {
        if included(i) {
            let k = profile.kappa[i];
            match current.as_mut() {
                Some(run) if run.peak.signum() == k.signum() => {
                    run.end_s = profile.s[i];
                    if k.abs() > run.peak.abs() {
                        run.peak = k;
                    }
                }
                _ => {
                    if let Some(run) = current.take() {
                        runs.push(run);
                    }
                    current = Some(Run {
                        start_s: profile.s[i],
                        end_s: profile.s[i],
                        peak: k,
                    });
                }
            }
        } else if let Some(run) = current.take() {
            runs.push(run);
        }
    }
    if let Some(run) = current.take() {
        runs.push(run);
    }

    // merge same-signed neighbors closer than the gap
    let mut merged: Vec<Run> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev)
                if run.start_s - prev.end_s < cfg.merge_gap_m
                    && prev.peak.signum() == run.peak.signum() =>
            {
                prev.end_s = run.end_s;
                if run.peak.abs() > prev.peak.abs() {
                    prev.peak = run.peak;
                }
            }
            _ => merged.push(run),
        }
    }

    let mut out = Vec::new();
    for run in merged {
        if run.end_s - run.start_s < cfg.min_length_m {
            continue;
        }
        out.push(CurveOfInterest {
            curve_id: out.len() as u32 + 1,
            direction: if run.peak > 0.0 {
                Direction::Left
            } else {
                Direction::Right
            },
            start_s: run.start_s,
            end_s: run.end_s,
            peak_kappa: run.peak,
        });
    }
    Ok(out)
}

/// One subject's samples through one curve, with the curve-relative
/// (inner-positive) lateral deviation series.
#[derive(Debug, Clone)]
pub struct CurveWindow {
    pub curve_id: u32,
    pub subject_id: String,
    pub direction: Direction,
    pub samples: Vec<SampleRecord>,
    pub dev: Vec<f64>,
    pub arc_length: f64,
    /// Cumulative arc length within the window, starting at 0.
    pub arc: Vec<f64>,
}

/// Inner-positive deviation: positive always means toward the curve's
/// inside. d_CL is left-positive, so dev = +d_CL on left curves and
/// dev = -d_CL on right curves.
pub fn curve_relative_deviation(d_cl: &[f64], direction: Direction) -> Vec<f64> {
    let sign = match direction {
        Direction::Left => 1.0,
        Direction::Right => -1.0,
    };
    d_cl.iter().map(|x| sign * x).collect()
}

/// Extracts the contiguous slice whose cumulative arc length lies inside
/// the curve's span. The subject is localized on the route via cumulative
/// integrated distance.
pub fn extract_window(trace: &SubjectTrace, curve: &CurveOfInterest) -> Result<CurveWindow> {
    let arc = trace.cumulative_arc();
    if arc.is_empty() || arc[0] > curve.start_s || arc[arc.len() - 1] < curve.end_s {
        return Err(Error::CurveNotCovered(curve.curve_id));
    }
    let start = arc.partition_point(|&s| s < curve.start_s);
    let end = arc.partition_point(|&s| s <= curve.end_s); // exclusive
    if end <= start {
        return Err(Error::CurveNotCovered(curve.curve_id));
    }
    // a segment boundary strictly inside the window means filtered data was
    // removed inside the curve; the curve is not evaluable for this subject
    let inside_gap = trace
        .segments
        .iter()
        .any(|seg| seg.start > start && seg.start < end);
    if inside_gap {
        return Err(Error::WindowContainsGap(curve.curve_id));
    }

    let samples: Vec<SampleRecord> = trace.samples[start..end].to_vec();
    let d_cl: Vec<f64> = samples.iter().map(|s| s.d_cl).collect();
    let dev = curve_relative_deviation(&d_cl, curve.direction);
    let base = arc[start];
    let window_arc: Vec<f64> = arc[start..end].iter().map(|s| s - base).collect();
    let arc_length = window_arc[window_arc.len() - 1];
    Ok(CurveWindow {
        curve_id: curve.curve_id,
        subject_id: trace.subject_id.clone(),
        direction: curve.direction,
        samples,
        dev,
        arc_length,
        arc: window_arc,
    })
}

/// The straight-driving center band: per-subject SD of d_CL on straight
/// rural samples, and the cohort mean of those SDs as half width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterBand {
    pub half_width: f64,
    pub per_subject_sd: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CenterBandConfig {
    pub tau_kappa: f64,
    pub min_samples: usize,
    /// Population SD (denominator n) when true, sample SD otherwise.
    pub population_sd: bool,
}

impl Default for CenterBandConfig {
    fn default() -> Self {
        CenterBandConfig {
            tau_kappa: 0.002,
            min_samples: 100,
            population_sd: true,
        }
    }
}

pub fn compute_center_band(traces: &[SubjectTrace], cfg: &CenterBandConfig) -> Result<CenterBand> {
    let mut per_subject_sd = BTreeMap::new();
    for trace in traces {
        let straight: Vec<f64> = trace
            .samples
            .iter()
            .filter(|s| s.kappa.abs() < cfg.tau_kappa && s.road_type == RoadType::Rural && s.valid)
            .map(|s| s.d_cl)
            .collect();
        if straight.len() < cfg.min_samples {
            return Err(Error::InsufficientStraightData(trace.subject_id.clone()));
        }
        let n = straight.len() as f64;
        let mean = straight.iter().sum::<f64>() / n;
        let ss = straight.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        let denom = if cfg.population_sd { n } else { n - 1.0 };
        per_subject_sd.insert(trace.subject_id.clone(), (ss / denom).sqrt());
    }
    if per_subject_sd.is_empty() {
        return Err(Error::EmptyProfile);
    }
    let half_width = per_subject_sd.values().sum::<f64>() / per_subject_sd.len() as f64;
    Ok(CenterBand {
        half_width,
        per_subject_sd,
    })
}
