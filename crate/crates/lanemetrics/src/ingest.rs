//! Trace and profile ingestion with context filtering and resampling.
//!
//! Traces arrive as delimited text (comma or tab, auto-detected from the
//! header line), one row per sample, one file per subject. The column
//! layout is adapted through a schema config rather than hard-coded.
//!
//! Sign conventions are fixed here once: left-positive for `d_CL`, `a_y`,
//! and `kappa`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    City,
    Highway,
    Rural,
    Federal,
}

impl RoadType {
    pub fn parse(s: &str) -> Option<RoadType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "city" => Some(RoadType::City),
            "highway" => Some(RoadType::Highway),
            "rural" => Some(RoadType::Rural),
            "federal" => Some(RoadType::Federal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoadType::City => "city",
            RoadType::Highway => "highway",
            RoadType::Rural => "rural",
            RoadType::Federal => "federal",
        }
    }
}

/// One time-stamped sample of the kinematic and context channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Seconds, strictly increasing within a trace.
    pub t: f64,
    /// Longitudinal speed, m/s, >= 0.
    pub v_x: f64,
    /// Longitudinal acceleration, m/s^2.
    pub a_x: f64,
    /// Lateral acceleration, m/s^2, left-positive.
    pub a_y: f64,
    /// Signed distance to lane center, m, left-positive.
    pub d_cl: f64,
    /// Signed road curvature, 1/m, left-turn-positive.
    pub kappa: f64,
    pub road_type: RoadType,
    pub lane_change: bool,
    pub oncoming: bool,
    pub street_id: String,
    /// False when |d_CL| exceeds half the configured maximum lane width.
    /// Violating samples are flagged, not dropped.
    pub valid: bool,
}

/// Half-open index range of gap-free samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One subject's drive. `segments` partitions `samples` into gap-free runs;
/// downstream statistics never differentiate or integrate across a segment
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTrace {
    pub subject_id: String,
    pub samples: Vec<SampleRecord>,
    pub sample_rate_hz: f64,
    pub segments: Vec<Segment>,
    /// Row indices of the source file that failed numeric parsing or broke
    /// time monotonicity, rejected during load.
    pub rejected_rows: Vec<usize>,
}

impl SubjectTrace {
    pub fn segment_samples(&self, seg: Segment) -> &[SampleRecord] {
        &self.samples[seg.start..seg.end]
    }

    /// Cumulative driven distance via trapezoidal integration of v_x over t.
    /// Integration spans gaps using the boundary speeds so that route
    /// localization stays consistent after filtering.
    pub fn cumulative_arc(&self) -> Vec<f64> {
        let mut arc = Vec::with_capacity(self.samples.len());
        let mut s = 0.0;
        for (i, sample) in self.samples.iter().enumerate() {
            if i > 0 {
                let prev = &self.samples[i - 1];
                s += 0.5 * (prev.v_x + sample.v_x) * (sample.t - prev.t);
            }
            arc.push(s);
        }
        arc
    }

    /// Number of gap markers (internal segment boundaries).
    pub fn gap_count(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }
}

/// Maps logical channels to column names of the trace files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub t: String,
    pub v_x: String,
    pub a_x: String,
    pub a_y: String,
    pub d_cl: String,
    pub kappa: String,
    pub road_type: String,
    pub lane_change: String,
    pub oncoming: String,
    pub street_id: String,
}

fn default_max_lane_width() -> f64 {
    5.0
}

fn default_gap_split() -> f64 {
    0.5
}

/// Column-mapping schema for a dataset, loaded from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSchema {
    /// Native sampling rate of the source files, Hz.
    pub sample_rate_hz: f64,
    /// Full lane width bound for the d_CL validity check, meters.
    #[serde(default = "default_max_lane_width")]
    pub max_lane_width_m: f64,
    /// A raw time step larger than this splits the trace into segments.
    #[serde(default = "default_gap_split")]
    pub gap_split_s: f64,
    pub columns: ColumnMap,
}

impl TraceSchema {
    pub fn from_path(path: &Path) -> Result<TraceSchema> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads one subject's trace file under the given schema. The subject id is
/// the file stem. Rows that fail numeric parsing (or break t monotonicity)
/// are rejected and recorded with their row index.
pub fn load_trace(path: &Path, schema: &TraceSchema) -> Result<SubjectTrace> {
    let text = std::fs::read_to_string(path)?;
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_trace_str(&text, &subject_id, schema)
}

/// As [`load_trace`] but from in-memory text.
pub fn load_trace_str(text: &str, subject_id: &str, schema: &TraceSchema) -> Result<SubjectTrace> {
    let header_line = text.lines().next().ok_or(Error::EmptyTrace)?;
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let cols = &schema.columns;
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    // map logical channel -> column index; the error carries the logical name
    let lookup = |logical: &str, name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(logical.to_string()))
    };
    let it = lookup("t", &cols.t)?;
    let iv = lookup("v_x", &cols.v_x)?;
    let iax = lookup("a_x", &cols.a_x)?;
    let iay = lookup("a_y", &cols.a_y)?;
    let idcl = lookup("d_CL", &cols.d_cl)?;
    let ik = lookup("kappa", &cols.kappa)?;
    let irt = col(&cols.road_type)?;
    let ilc = col(&cols.lane_change)?;
    let ion = col(&cols.oncoming)?;
    let isid = col(&cols.street_id)?;

    let half_width = schema.max_lane_width_m / 2.0;
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("").trim();
        let num = |i: usize| get(i).parse::<f64>().ok().filter(|x| x.is_finite());
        let parsed = (|| {
            let t = num(it)?;
            let v_x = num(iv)?;
            let a_x = num(iax)?;
            let a_y = num(iay)?;
            let d_cl = num(idcl)?;
            let kappa = num(ik)?;
            let road_type = RoadType::parse(get(irt))?;
            let lane_change = parse_bool(get(ilc))?;
            let oncoming = parse_bool(get(ion))?;
            if v_x < 0.0 {
                return None;
            }
            Some(SampleRecord {
                t,
                v_x,
                a_x,
                a_y,
                d_cl,
                kappa,
                road_type,
                lane_change,
                oncoming,
                street_id: get(isid).to_string(),
                valid: d_cl.abs() <= half_width,
            })
        })();
        match parsed {
            Some(s) => {
                if samples.last().is_some_and(|p: &SampleRecord| s.t <= p.t) {
                    rejected.push(row_idx);
                } else {
                    samples.push(s);
                }
            }
            None => rejected.push(row_idx),
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }

    let segments = segment_by_time(&samples, schema.gap_split_s);
    Ok(SubjectTrace {
        subject_id: subject_id.to_string(),
        samples,
        sample_rate_hz: schema.sample_rate_hz,
        segments,
        rejected_rows: rejected,
    })
}

fn segment_by_time(samples: &[SampleRecord], gap_split_s: f64) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if samples[i].t - samples[i - 1].t > gap_split_s {
            segments.push(Segment { start, end: i });
            start = i;
        }
    }
    segments.push(Segment {
        start,
        end: samples.len(),
    });
    segments
}

/// Removes all samples flagged with a lane change or oncoming traffic.
/// Every contiguous removed run becomes a gap marker (segment boundary), so
/// downstream statistics never differentiate across a filtered interval.
pub fn filter_context(trace: &SubjectTrace) -> Result<SubjectTrace> {
    let mut samples = Vec::with_capacity(trace.samples.len());
    let mut segments: Vec<Segment> = Vec::new();
    let mut seg_start = 0usize;
    let mut open = false;

    for seg in &trace.segments {
        let mut i = seg.start;
        while i < seg.end {
            let s = &trace.samples[i];
            if s.lane_change || s.oncoming {
                if open {
                    segments.push(Segment {
                        start: seg_start,
                        end: samples.len(),
                    });
                    open = false;
                }
                i += 1;
                continue;
            }
            if !open {
                seg_start = samples.len();
                open = true;
            }
            samples.push(s.clone());
            i += 1;
        }
        if open {
            segments.push(Segment {
                start: seg_start,
                end: samples.len(),
            });
            open = false;
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    Ok(SubjectTrace {
        subject_id: trace.subject_id.clone(),
        samples,
        sample_rate_hz: trace.sample_rate_hz,
        segments,
        rejected_rows: trace.rejected_rows.clone(),
    })
}

/// Linear interpolation of every segment onto a uniform grid at `rate_hz`.
/// Boolean flags propagate as logical OR over the bracketing interval; gaps
/// are never interpolated across. Single-sample segments are kept as-is.
pub fn resample_uniform(trace: &SubjectTrace, rate_hz: f64) -> Result<SubjectTrace> {
    if trace.samples.len() < 2 {
        return Err(Error::DegenerateTrace);
    }
    // negated form also rejects NaN rates
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(rate_hz > 0.0) {
        return Err(Error::Config("resample rate must be positive".into()));
    }
    let dt = 1.0 / rate_hz;
    let mut samples = Vec::new();
    let mut segments = Vec::new();

    for seg in &trace.segments {
        let src = trace.segment_samples(*seg);
        if src.is_empty() {
            continue;
        }
        let start_idx = samples.len();
        if src.len() == 1 {
            samples.push(src[0].clone());
            segments.push(Segment {
                start: start_idx,
                end: samples.len(),
            });
            continue;
        }
        let t0 = src[0].t;
        let t_end = src[src.len() - 1].t;
        let n_steps = ((t_end - t0) / dt + 1e-9).floor() as usize;
        let mut j = 0usize; // bracketing index into src
        for k in 0..=n_steps {
            let t = t0 + k as f64 * dt;
            while j + 2 < src.len() && src[j + 1].t < t {
                j += 1;
            }
            let a = &src[j];
            let b = &src[j + 1];
            let frac = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
            let frac = frac.clamp(0.0, 1.0);
            let lerp = |x: f64, y: f64| x + frac * (y - x);
            let near = if frac < 0.5 { a } else { b };
            samples.push(SampleRecord {
                t,
                v_x: lerp(a.v_x, b.v_x),
                a_x: lerp(a.a_x, b.a_x),
                a_y: lerp(a.a_y, b.a_y),
                d_cl: lerp(a.d_cl, b.d_cl),
                kappa: lerp(a.kappa, b.kappa),
                road_type: near.road_type,
                lane_change: a.lane_change || b.lane_change,
                oncoming: a.oncoming || b.oncoming,
                street_id: near.street_id.clone(),
                valid: a.valid && b.valid,
            });
        }
        segments.push(Segment {
            start: start_idx,
            end: samples.len(),
        });
    }
    if samples.is_empty() {
        return Err(Error::DegenerateTrace);
    }
    Ok(SubjectTrace {
        subject_id: trace.subject_id.clone(),
        samples,
        sample_rate_hz: rate_hz,
        segments,
        rejected_rows: trace.rejected_rows.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Some(Gender::Female),
            "male" | "m" => Some(Gender::Male),
            "other" | "diverse" => Some(Gender::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Young,
    Middle,
    Old,
}

impl AgeGroup {
    /// young: < 25, middle: 25-54, old: > 54.
    pub fn from_age(age_years: u32) -> AgeGroup {
        if age_years < 25 {
            AgeGroup::Young
        } else if age_years <= 54 {
            AgeGroup::Middle
        } else {
            AgeGroup::Old
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub age_years: u32,
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub license_years: Option<f64>,
    pub annual_mileage_band: Option<String>,
}

/// Loads the subject profile table (subject_id, age, gender, ...).
pub fn load_profiles(path: &Path) -> Result<Vec<SubjectProfile>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let isid = idx("subject_id")?;
    let iage = idx("age")?;
    let igen = idx("gender")?;
    let ilic = headers.iter().position(|h| h.trim() == "license_years");
    let imil = headers.iter().position(|h| h.trim() == "annual_mileage_band");

    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let age: u32 = get(iage).parse().map_err(|_| Error::ParseError {
            row,
            column: "age".into(),
        })?;
        let gender = Gender::parse(&get(igen)).ok_or(Error::ParseError {
            row,
            column: "gender".into(),
        })?;
        out.push(SubjectProfile {
            subject_id: get(isid),
            age_years: age,
            gender,
            age_group: AgeGroup::from_age(age),
            license_years: ilic.and_then(|i| get(i).parse().ok()),
            annual_mileage_band: imil.map(get).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}
