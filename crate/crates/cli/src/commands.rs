//! The nine pipeline commands. Each command validates its inputs, fans
//! per-subject work out to the worker pool, writes its tables on the
//! orchestrator thread in a fixed order, and records a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use lanemetrics::correlation::{correlate_all, NamedMatrix, SignificanceTier};
use lanemetrics::curves::{
    compute_center_band, extract_window, select_curves, CenterBand, CenterBandConfig,
    CurveOfInterest, CurveSelectConfig, CurveWindow, Direction, RouteProfile,
};
use lanemetrics::envelope::{polar_bin, Envelope, EnvelopeConfig, ENVELOPE_TYPES};
use lanemetrics::format::{format_number, write_table};
use lanemetrics::ingest::{
    filter_context, load_profiles, load_trace, resample_uniform, SubjectProfile, SubjectTrace,
    TraceSchema,
};
use lanemetrics::kinematics::{differentiate_smoothed, drift_velocity_series};
use lanemetrics::mdsi::{
    assign_style, cronbach_alpha, load_responses, refined_scores, reverse_code,
    weighted_sum_scores, Factor, ItemBank, SubjectScores,
};
use lanemetrics::pca::{parallel_analysis, pca_varimax};
use lanemetrics::stationary::{extract_stationary, fit_ccg, StationaryConfig};
use lanemetrics::stats::{aggregate_subject, stat_block, StatBlock, STAT_NAMES};
use lanemetrics::transient::{encode_curve, intensity, TrajectoryClass};

use crate::manifest::{require_upstream, Manifest};
use crate::plots;
use crate::{CliError, Ctx};

const CHANNELS: [&str; 7] = ["v_x", "a_x", "a_y", "jerk_x", "jerk_y", "dev", "drift"];

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format_number(x)
    } else {
        String::new()
    }
}

fn map_err(e: lanemetrics::Error) -> CliError {
    match e {
        lanemetrics::Error::Config(msg) => CliError::Config(msg),
        other => CliError::Data(other.to_string()),
    }
}

fn class_slug(class: TrajectoryClass) -> String {
    class.name().to_ascii_lowercase().replace(' ', "_")
}

// ---------------------------------------------------------------- ingest

pub fn cmd_ingest(ctx: &Ctx) -> Result<(), CliError> {
    let schema_path = ctx.cfg.schema_path(&ctx.config_dir);
    let schema = TraceSchema::from_path(&schema_path).map_err(map_err)?;
    let traces_dir = ctx.cfg.traces_dir(&ctx.config_dir);
    if !traces_dir.is_dir() {
        return Err(CliError::Config(format!(
            "trace directory not found: {}",
            traces_dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&traces_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", traces_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no trace files in {}",
            traces_dir.display()
        )));
    }

    let rate = ctx.cfg.params.resample_rate_hz;
    let processed: Vec<Result<SubjectTrace, CliError>> = files
        .par_iter()
        .map(|path| {
            let raw = load_trace(path, &schema).map_err(map_err)?;
            let filtered = filter_context(&raw).map_err(map_err)?;
            resample_uniform(&filtered, rate).map_err(map_err)
        })
        .collect();

    let out_traces = ctx.out_dir.join("traces");
    std::fs::create_dir_all(&out_traces)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_traces.display())))?;

    let mut manifest = Manifest::new("ingest");
    manifest.param("resample_rate_hz", rate);
    manifest.param("schema", &ctx.cfg.schema);
    manifest.input("schema", &schema_path)?;

    let mut rows = Vec::new();
    for (path, result) in files.iter().zip(processed) {
        let trace = result?;
        manifest.input(
            &format!("trace:{}", trace.subject_id),
            path,
        )?;
        let json = serde_json::to_string(&trace)
            .map_err(|e| CliError::Data(format!("trace serialization: {e}")))?;
        let out_path = out_traces.join(format!("{}.json", trace.subject_id));
        std::fs::write(&out_path, json)
            .map_err(|e| CliError::Data(format!("{}: {e}", out_path.display())))?;
        manifest.output(&ctx.out_dir, &out_path)?;
        let duration = trace.samples.last().map(|s| s.t).unwrap_or(0.0)
            - trace.samples.first().map(|s| s.t).unwrap_or(0.0);
        rows.push(vec![
            trace.subject_id.clone(),
            trace.samples.len().to_string(),
            trace.segments.len().to_string(),
            trace.rejected_rows.len().to_string(),
            fmt(duration),
        ]);
    }
    let summary = ctx.out_dir.join("ingest_summary.csv");
    write_table(
        &summary,
        &[
            "subject_id",
            "n_samples",
            "n_segments",
            "n_rejected_rows",
            "duration_s",
        ],
        &rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &summary)?;
    manifest.write(&ctx.out_dir)
}

fn load_ingested(ctx: &Ctx, manifest: &Manifest) -> Result<Vec<SubjectTrace>, CliError> {
    let mut traces = Vec::new();
    for rel in manifest.outputs.keys() {
        if rel.starts_with("traces/") && rel.ends_with(".json") {
            let text = std::fs::read_to_string(ctx.out_dir.join(rel))
                .map_err(|e| CliError::Upstream(format!("{rel}: {e}")))?;
            let trace: SubjectTrace = serde_json::from_str(&text)
                .map_err(|e| CliError::Upstream(format!("{rel}: {e}")))?;
            traces.push(trace);
        }
    }
    if traces.is_empty() {
        return Err(CliError::Upstream("no ingested traces found".into()));
    }
    traces.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(traces)
}

// ---------------------------------------------------------------- curves

pub fn cmd_curves(ctx: &Ctx) -> Result<(), CliError> {
    let upstream = require_upstream(&ctx.out_dir, "ingest")?;
    let traces = load_ingested(ctx, &upstream)?;
    let reference = traces
        .iter()
        .find(|t| t.subject_id == ctx.cfg.reference_subject)
        .ok_or_else(|| {
            CliError::Config(format!(
                "reference subject {} not among ingested traces",
                ctx.cfg.reference_subject
            ))
        })?;

    let p = &ctx.cfg.params;
    let select_cfg = CurveSelectConfig {
        tau_kappa: p.tau_kappa,
        merge_gap_m: p.merge_gap_m,
        min_length_m: p.min_length_m,
        rural_only: p.rural_only,
    };
    let profile = RouteProfile::from_trace(reference);
    let curves = select_curves(&profile, &select_cfg).map_err(map_err)?;
    if curves.is_empty() {
        return Err(CliError::Data("no curves of interest on the route".into()));
    }

    let band = match p.band_half_width_m {
        Some(hw) => CenterBand {
            half_width: hw,
            per_subject_sd: BTreeMap::new(),
        },
        None => compute_center_band(
            &traces,
            &CenterBandConfig {
                tau_kappa: p.tau_kappa,
                min_samples: p.band_min_samples,
                population_sd: true,
            },
        )
        .map_err(map_err)?,
    };

    let mut manifest = Manifest::new("curves");
    manifest.param("tau_kappa", p.tau_kappa);
    manifest.param("merge_gap_m", p.merge_gap_m);
    manifest.param("min_length_m", p.min_length_m);
    manifest.param("rural_only", p.rural_only);
    manifest.param("reference_subject", &ctx.cfg.reference_subject);
    manifest.param("band_half_width_m", fmt(band.half_width));

    let rows: Vec<Vec<String>> = curves
        .iter()
        .map(|c| {
            vec![
                c.curve_id.to_string(),
                c.direction.name().to_string(),
                fmt(c.start_s),
                fmt(c.end_s),
                fmt(c.end_s - c.start_s),
                fmt(c.peak_kappa),
            ]
        })
        .collect();
    let curves_path = ctx.out_dir.join("curves.csv");
    write_table(
        &curves_path,
        &[
            "curve_id",
            "direction",
            "start_s_m",
            "end_s_m",
            "length_m",
            "peak_kappa_1pm",
        ],
        &rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &curves_path)?;

    let band_json = ctx.out_dir.join("center_band.json");
    std::fs::write(
        &band_json,
        serde_json::to_string_pretty(&band)
            .map_err(|e| CliError::Data(format!("band serialization: {e}")))?
            + "\n",
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", band_json.display())))?;
    manifest.output(&ctx.out_dir, &band_json)?;

    let mut band_rows: Vec<Vec<String>> = band
        .per_subject_sd
        .iter()
        .map(|(id, sd)| vec![id.clone(), fmt(*sd)])
        .collect();
    band_rows.push(vec!["half_width".into(), fmt(band.half_width)]);
    let band_csv = ctx.out_dir.join("center_band.csv");
    write_table(&band_csv, &["subject_id", "sd_dcl_m"], &band_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &band_csv)?;

    manifest.write(&ctx.out_dir)
}

fn load_curves_table(ctx: &Ctx) -> Result<Vec<CurveOfInterest>, CliError> {
    let path = ctx.out_dir.join("curves.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Upstream(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 6 {
            continue;
        }
        let dir = match f[1] {
            "left" => Direction::Left,
            _ => Direction::Right,
        };
        out.push(CurveOfInterest {
            curve_id: f[0]
                .parse()
                .map_err(|_| CliError::Upstream("bad curves.csv".into()))?,
            direction: dir,
            start_s: f[2]
                .parse()
                .map_err(|_| CliError::Upstream("bad curves.csv".into()))?,
            end_s: f[3]
                .parse()
                .map_err(|_| CliError::Upstream("bad curves.csv".into()))?,
            peak_kappa: f[5]
                .parse()
                .map_err(|_| CliError::Upstream("bad curves.csv".into()))?,
        });
    }
    Ok(out)
}

fn load_band(ctx: &Ctx) -> Result<CenterBand, CliError> {
    let path = ctx.out_dir.join("center_band.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Upstream(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Upstream(format!("center_band.json: {e}")))
}

fn subject_windows(
    trace: &SubjectTrace,
    curves: &[CurveOfInterest],
) -> (Vec<CurveWindow>, Vec<(u32, String)>) {
    let mut windows = Vec::new();
    let mut skipped = Vec::new();
    for curve in curves {
        match extract_window(trace, curve) {
            Ok(w) => windows.push(w),
            Err(e) => skipped.push((curve.curve_id, e.to_string())),
        }
    }
    (windows, skipped)
}

// ------------------------------------------------------------ indicators

/// Per-channel series inside one curve window; non-finite samples (masked
/// derivatives, sub-floor speeds) are excluded from the statistics.
fn window_channel(window: &CurveWindow, rate: f64, hw: usize, v_min: f64, channel: &str) -> Vec<f64> {
    let series: Vec<f64> = match channel {
        "v_x" => window.samples.iter().map(|s| s.v_x).collect(),
        "a_x" => window.samples.iter().map(|s| s.a_x).collect(),
        "a_y" => window.samples.iter().map(|s| s.a_y).collect(),
        "dev" => window.dev.clone(),
        "jerk_x" => {
            let a: Vec<f64> = window.samples.iter().map(|s| s.a_x).collect();
            differentiate_smoothed(&a, rate, hw).unwrap_or_default()
        }
        "jerk_y" => {
            let a: Vec<f64> = window.samples.iter().map(|s| s.a_y).collect();
            differentiate_smoothed(&a, rate, hw).unwrap_or_default()
        }
        "drift" => {
            let d: Vec<f64> = window.samples.iter().map(|s| s.d_cl).collect();
            let v: Vec<f64> = window.samples.iter().map(|s| s.v_x).collect();
            drift_velocity_series(&d, &v, rate, hw, v_min).unwrap_or_default()
        }
        _ => unreachable!("unknown channel"),
    };
    series.into_iter().filter(|x| x.is_finite()).collect()
}

pub fn cmd_indicators(ctx: &Ctx) -> Result<(), CliError> {
    let ingest = require_upstream(&ctx.out_dir, "ingest")?;
    require_upstream(&ctx.out_dir, "curves")?;
    let traces = load_ingested(ctx, &ingest)?;
    let curves = load_curves_table(ctx)?;
    let p = &ctx.cfg.params;

    struct SubjectResult {
        subject_id: String,
        // channel -> per-curve blocks, plus the curve ids they came from
        blocks: Vec<(String, Vec<(u32, StatBlock)>)>,
        skipped: Vec<(u32, String)>,
    }

    let results: Vec<SubjectResult> = traces
        .par_iter()
        .map(|trace| {
            let (windows, skipped) = subject_windows(trace, &curves);
            let mut blocks = Vec::new();
            for channel in CHANNELS {
                let mut per_curve = Vec::new();
                for w in &windows {
                    let series =
                        window_channel(w, trace.sample_rate_hz, p.half_window, p.v_min_mps, channel);
                    if let Ok(block) = stat_block(&series) {
                        per_curve.push((w.curve_id, block));
                    }
                }
                blocks.push((channel.to_string(), per_curve));
            }
            SubjectResult {
                subject_id: trace.subject_id.clone(),
                blocks,
                skipped,
            }
        })
        .collect();

    // wide subject x indicator table
    let mut header: Vec<String> = vec!["subject_id".into()];
    for channel in CHANNELS {
        for stat in STAT_NAMES {
            for mode in &ctx.agg {
                header.push(format!("{channel}_{stat}_{}", mode.name()));
            }
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    let mut detail_rows = Vec::new();
    let mut skip_rows = Vec::new();
    for r in &results {
        let mut row = vec![r.subject_id.clone()];
        for (channel, per_curve) in &r.blocks {
            let blocks: Vec<StatBlock> = per_curve.iter().map(|(_, b)| *b).collect();
            let aggs: Vec<Option<StatBlock>> = ctx
                .agg
                .iter()
                .map(|mode| aggregate_subject(&blocks, *mode).ok())
                .collect();
            for stat_idx in 0..STAT_NAMES.len() {
                for agg in &aggs {
                    row.push(match agg {
                        Some(block) => fmt(block.fields()[stat_idx]),
                        None => String::new(),
                    });
                }
            }
            for (curve_id, block) in per_curve {
                let mut d = vec![
                    r.subject_id.clone(),
                    curve_id.to_string(),
                    channel.clone(),
                ];
                d.extend(block.fields().iter().map(|&x| fmt(x)));
                detail_rows.push(d);
            }
        }
        rows.push(row);
        for (curve_id, reason) in &r.skipped {
            skip_rows.push(vec![
                r.subject_id.clone(),
                curve_id.to_string(),
                reason.clone(),
            ]);
        }
    }

    let mut manifest = Manifest::new("indicators");
    manifest.param("half_window", p.half_window);
    manifest.param("v_min_mps", p.v_min_mps);
    manifest.param(
        "aggregation",
        ctx.agg
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join("+"),
    );

    let indicators_path = ctx.out_dir.join("indicators.csv");
    write_table(&indicators_path, &header_refs, &rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &indicators_path)?;

    let detail_path = ctx.out_dir.join("curve_stats.csv");
    let mut detail_header = vec!["subject_id", "curve_id", "channel"];
    detail_header.extend(STAT_NAMES);
    write_table(&detail_path, &detail_header, &detail_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &detail_path)?;

    let skip_path = ctx.out_dir.join("windows_skipped.csv");
    write_table(&skip_path, &["subject_id", "curve_id", "reason"], &skip_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &skip_path)?;

    manifest.write(&ctx.out_dir)
}

// -------------------------------------------------------------- envelope

pub fn cmd_envelope(ctx: &Ctx) -> Result<(), CliError> {
    let ingest = require_upstream(&ctx.out_dir, "ingest")?;
    let traces = load_ingested(ctx, &ingest)?;
    let p = &ctx.cfg.params;
    let env_cfg = EnvelopeConfig {
        delta_r_deg: p.delta_r_deg,
        delta_s_deg: p.delta_s_deg,
    };

    let envelopes: Vec<(String, Envelope)> = traces
        .par_iter()
        .map(|trace| {
            let points: Vec<(f64, f64)> = trace
                .samples
                .iter()
                .filter(|s| s.valid)
                .map(|s| (s.a_x, s.a_y))
                .collect();
            polar_bin(&points, &env_cfg)
                .map(|e| (trace.subject_id.clone(), e))
                .map_err(map_err)
        })
        .collect::<Result<_, _>>()?;

    let centers: Vec<f64> = envelopes[0].1.points.iter().map(|b| b.center_angle_deg).collect();
    let n_bins = centers.len();

    let mut manifest = Manifest::new("envelope");
    manifest.param("delta_r_deg", p.delta_r_deg);
    manifest.param("delta_s_deg", p.delta_s_deg);
    manifest.param("n_reference_points", n_bins);
    manifest.param("pca_components", p.pca_components);
    manifest.param("pa_replicates", p.pa_replicates);
    manifest.param("seed", ctx.seed);

    // radii table: one row per subject x envelope type
    let mut radii_rows = Vec::new();
    for (id, env) in &envelopes {
        for ty in ENVELOPE_TYPES {
            let mut row = vec![id.clone(), ty.to_string()];
            row.extend(env.radii(ty).iter().map(|&r| fmt(r)));
            radii_rows.push(row);
        }
    }
    let mut radii_header = vec!["subject_id".to_string(), "envelope".to_string()];
    radii_header.extend(centers.iter().map(|c| format!("r_{}", fmt(*c))));
    let radii_refs: Vec<&str> = radii_header.iter().map(String::as_str).collect();
    let radii_path = ctx.out_dir.join("envelope_radii.csv");
    write_table(&radii_path, &radii_refs, &radii_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &radii_path)?;

    // per-type decomposition across subjects
    let mut summary_rows = Vec::new();
    let mut loading_rows = Vec::new();
    let mut score_cols: Vec<(String, Vec<f64>)> = Vec::new();
    for (ti, ty) in ENVELOPE_TYPES.iter().enumerate() {
        let matrix = DMatrix::from_fn(envelopes.len(), n_bins, |i, j| {
            envelopes[i].1.radii(ty)[j]
        });
        let suggested = parallel_analysis(&matrix, p.pa_replicates, ctx.seed + ti as u64)
            .map_err(map_err)?;
        match pca_varimax(&matrix, p.pca_components) {
            Ok(pca) => {
                let kept: Vec<usize> = (0..n_bins)
                    .filter(|j| !pca.dropped_columns.contains(j))
                    .collect();
                for (row, &j) in kept.iter().enumerate() {
                    let mut lr = vec![ty.to_string(), fmt(centers[j])];
                    for c in 0..pca.loadings.ncols() {
                        lr.push(fmt(pca.loadings[(row, c)]));
                    }
                    loading_rows.push(lr);
                }
                for c in 0..pca.scores.ncols() {
                    let col: Vec<f64> = (0..pca.scores.nrows()).map(|i| pca.scores[(i, c)]).collect();
                    score_cols.push((format!("env_{ty}_c{}", c + 1), col));
                }
                let mut sr = vec![
                    ty.to_string(),
                    suggested.to_string(),
                    pca.dropped_columns.len().to_string(),
                ];
                for c in 0..p.pca_components {
                    sr.push(fmt(pca.variance_explained.get(c).copied().unwrap_or(f64::NAN)));
                }
                summary_rows.push(sr);
            }
            Err(e) => {
                let mut sr = vec![ty.to_string(), suggested.to_string(), e.to_string()];
                for _ in 0..p.pca_components {
                    sr.push(String::new());
                }
                summary_rows.push(sr);
                for _ in 0..p.pca_components {
                    score_cols.push((
                        format!("env_{ty}_c{}", score_cols.len() % p.pca_components + 1),
                        vec![f64::NAN; envelopes.len()],
                    ));
                }
            }
        }
    }

    let mut loading_header = vec!["envelope".to_string(), "angle_deg".to_string()];
    for c in 0..p.pca_components {
        loading_header.push(format!("loading_c{}", c + 1));
    }
    let loading_refs: Vec<&str> = loading_header.iter().map(String::as_str).collect();
    let loadings_path = ctx.out_dir.join("envelope_loadings.csv");
    write_table(&loadings_path, &loading_refs, &loading_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &loadings_path)?;

    let mut score_header = vec!["subject_id".to_string()];
    score_header.extend(score_cols.iter().map(|(name, _)| name.clone()));
    let score_refs: Vec<&str> = score_header.iter().map(String::as_str).collect();
    let score_rows: Vec<Vec<String>> = envelopes
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let mut row = vec![id.clone()];
            row.extend(score_cols.iter().map(|(_, col)| fmt(col[i])));
            row
        })
        .collect();
    let scores_path = ctx.out_dir.join("envelope_scores.csv");
    write_table(&scores_path, &score_refs, &score_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &scores_path)?;

    let mut summary_header = vec!["envelope".to_string(), "suggested_components".to_string(), "dropped_bins".to_string()];
    for c in 0..p.pca_components {
        summary_header.push(format!("variance_explained_c{}", c + 1));
    }
    let summary_refs: Vec<&str> = summary_header.iter().map(String::as_str).collect();
    let summary_path = ctx.out_dir.join("envelope_summary.csv");
    write_table(&summary_path, &summary_refs, &summary_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &summary_path)?;

    if ctx.plots {
        let plot_dir = ctx.out_dir.join("plots");
        std::fs::create_dir_all(&plot_dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", plot_dir.display())))?;
        for (id, env) in &envelopes {
            let path = plot_dir.join(format!("envelope_{id}.svg"));
            plots::envelope_polar_svg(&path, env)?;
            manifest.output(&ctx.out_dir, &path)?;
        }
    }

    manifest.write(&ctx.out_dir)
}

// -------------------------------------------------------------------- ccg

pub fn cmd_ccg(ctx: &Ctx) -> Result<(), CliError> {
    let ingest = require_upstream(&ctx.out_dir, "ingest")?;
    require_upstream(&ctx.out_dir, "curves")?;
    let traces = load_ingested(ctx, &ingest)?;
    let curves = load_curves_table(ctx)?;
    let p = &ctx.cfg.params;
    let st_cfg = StationaryConfig {
        kappa_rate_max: p.kappa_rate_max,
        min_duration_s: p.min_duration_s,
    };

    struct SubjectCcg {
        subject_id: String,
        segments: Vec<(u32, f64, f64, f64)>, // curve, duration, mean_a_y, mean_dev
        fit: Result<lanemetrics::stationary::CcgResult, String>,
    }

    let results: Vec<SubjectCcg> = traces
        .par_iter()
        .map(|trace| {
            let (windows, _) = subject_windows(trace, &curves);
            let mut segments = Vec::new();
            let mut points = Vec::new();
            for w in &windows {
                for seg in extract_stationary(w, &st_cfg) {
                    points.push((seg.mean_a_y, seg.mean_dev));
                    segments.push((seg.curve_id, seg.duration_s, seg.mean_a_y, seg.mean_dev));
                }
            }
            SubjectCcg {
                subject_id: trace.subject_id.clone(),
                segments,
                fit: fit_ccg(&points).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut manifest = Manifest::new("ccg");
    manifest.param("kappa_rate_max", p.kappa_rate_max);
    manifest.param("min_duration_s", p.min_duration_s);

    let mut seg_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for r in &results {
        for (curve, duration, a_y, dev) in &r.segments {
            seg_rows.push(vec![
                r.subject_id.clone(),
                curve.to_string(),
                fmt(*duration),
                fmt(*a_y),
                fmt(*dev),
            ]);
        }
        match &r.fit {
            Ok(fit) => fit_rows.push(vec![
                r.subject_id.clone(),
                fmt(fit.ccg),
                fmt(fit.ccg0),
                fmt(fit.ci_width),
                fit.n_points.to_string(),
                fmt(fit.r2),
                String::new(),
            ]),
            Err(note) => fit_rows.push(vec![
                r.subject_id.clone(),
                String::new(),
                String::new(),
                String::new(),
                r.segments.len().to_string(),
                String::new(),
                note.clone(),
            ]),
        }
    }

    let seg_path = ctx.out_dir.join("stationary_segments.csv");
    write_table(
        &seg_path,
        &["subject_id", "curve_id", "duration_s", "mean_a_y_mps2", "mean_dev_m"],
        &seg_rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &seg_path)?;

    let fit_path = ctx.out_dir.join("ccg.csv");
    write_table(
        &fit_path,
        &[
            "subject_id",
            "ccg_m_per_mps2",
            "ccg0_m",
            "ci_width_m",
            "n_points",
            "r2",
            "note",
        ],
        &fit_rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &fit_path)?;

    manifest.write(&ctx.out_dir)
}

// ------------------------------------------------------------ trajectories

pub fn cmd_trajectories(ctx: &Ctx) -> Result<(), CliError> {
    let ingest = require_upstream(&ctx.out_dir, "ingest")?;
    require_upstream(&ctx.out_dir, "curves")?;
    let traces = load_ingested(ctx, &ingest)?;
    let curves = load_curves_table(ctx)?;
    let band = load_band(ctx)?;

    struct SubjectTraj {
        subject_id: String,
        // curve_id, direction, code, class, intensity
        rows: Vec<(u32, Direction, String, TrajectoryClass, f64)>,
        windows: Vec<CurveWindow>,
    }

    let results: Vec<SubjectTraj> = traces
        .par_iter()
        .map(|trace| {
            let (windows, _) = subject_windows(trace, &curves);
            let mut rows = Vec::new();
            for w in &windows {
                if let (Ok(code), Ok(res)) = (encode_curve(w, &band), intensity(w, &band)) {
                    rows.push((w.curve_id, w.direction, code.to_string(), res.class, res.intensity));
                }
            }
            SubjectTraj {
                subject_id: trace.subject_id.clone(),
                rows,
                windows,
            }
        })
        .collect();

    let mut manifest = Manifest::new("trajectories");
    manifest.param("band_half_width_m", fmt(band.half_width));

    let mut curve_rows = Vec::new();
    let mut share_rows = Vec::new();
    for r in &results {
        let intensities: Vec<lanemetrics::transient::IntensityResult> = r
            .rows
            .iter()
            .map(|(_, _, _, class, val)| lanemetrics::transient::IntensityResult {
                intensity: *val,
                class: *class,
            })
            .collect();
        for (curve_id, direction, code, class, val) in &r.rows {
            curve_rows.push(vec![
                r.subject_id.clone(),
                curve_id.to_string(),
                direction.name().to_string(),
                code.clone(),
                class.name().to_string(),
                fmt(*val),
            ]);
        }
        let mut row = vec![r.subject_id.clone()];
        match lanemetrics::transient::class_distribution(&intensities) {
            Ok(dist) => {
                row.push(dist.n_curves.to_string());
                for class in TrajectoryClass::ALL {
                    row.push(fmt(dist.percentages.get(&class).copied().unwrap_or(0.0)));
                }
                for class in TrajectoryClass::ALL {
                    row.push(match dist.intensity_stats.get(&class) {
                        Some((mean, _, _)) => fmt(*mean),
                        None => String::new(),
                    });
                }
            }
            Err(_) => {
                row.push("0".into());
                row.extend(std::iter::repeat_n(String::new(), 2 * TrajectoryClass::ALL.len()));
            }
        }
        share_rows.push(row);
    }

    let curves_path = ctx.out_dir.join("trajectories.csv");
    write_table(
        &curves_path,
        &["subject_id", "curve_id", "direction", "code", "class", "intensity_per_km"],
        &curve_rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &curves_path)?;

    let mut share_header = vec!["subject_id".to_string(), "n_curves".to_string()];
    for class in TrajectoryClass::ALL {
        share_header.push(format!("pct_{}", class_slug(class)));
    }
    for class in TrajectoryClass::ALL {
        share_header.push(format!("intensity_mean_{}", class_slug(class)));
    }
    let share_refs: Vec<&str> = share_header.iter().map(String::as_str).collect();
    let shares_path = ctx.out_dir.join("class_shares.csv");
    write_table(&shares_path, &share_refs, &share_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &shares_path)?;

    if ctx.plots {
        let plot_dir = ctx.out_dir.join("plots");
        std::fs::create_dir_all(&plot_dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", plot_dir.display())))?;
        for r in &results {
            let path = plot_dir.join(format!("trajectories_{}.svg", r.subject_id));
            plots::trajectories_svg(&path, &r.windows, band.half_width)?;
            manifest.output(&ctx.out_dir, &path)?;
        }
    }

    manifest.write(&ctx.out_dir)
}

// ------------------------------------------------------------------ mdsi

pub fn cmd_mdsi(ctx: &Ctx) -> Result<(), CliError> {
    let responses_path = ctx.cfg.responses_path(&ctx.config_dir);
    if !responses_path.is_file() {
        return Err(CliError::Config(format!(
            "response table not found: {}",
            responses_path.display()
        )));
    }
    let bank = match ctx.cfg.item_model_path(&ctx.config_dir) {
        Some(path) => ItemBank::from_csv_path(&path).map_err(map_err)?,
        None => ItemBank::bundled_default(),
    };
    let responses = load_responses(&responses_path).map_err(map_err)?;
    if responses.is_empty() {
        return Err(CliError::Data("response table has no subjects".into()));
    }

    let weighted = weighted_sum_scores(&responses, &bank);
    let refined: Result<Vec<SubjectScores>, String> =
        refined_scores(&responses, &bank).map_err(|e| e.to_string());

    let mut manifest = Manifest::new("mdsi");
    manifest.param("n_subjects", responses.len());
    manifest.param("n_items", bank.item_ids().len());
    manifest.param(
        "item_model",
        ctx.cfg.item_model.clone().unwrap_or_else(|| "bundled".into()),
    );
    manifest.input("responses", &responses_path)?;
    if let Some(path) = ctx.cfg.item_model_path(&ctx.config_dir) {
        manifest.input("item_model", &path)?;
    }

    let mut score_rows = Vec::new();
    for (i, ws) in weighted.iter().enumerate() {
        let mut row = vec![ws.subject_id.clone()];
        for factor in Factor::ALL {
            row.push(match ws.scores[&factor] {
                Some(v) => fmt(v),
                None => String::new(),
            });
        }
        let refined_scores_i = refined.as_ref().ok().map(|r| &r[i]);
        for factor in Factor::ALL {
            row.push(match refined_scores_i.and_then(|r| r.scores[&factor]) {
                Some(v) => fmt(v),
                None => String::new(),
            });
        }
        let style_base = refined_scores_i.unwrap_or(ws);
        match assign_style(style_base) {
            Ok((factor, tie)) => {
                row.push(factor.name().to_string());
                row.push(if tie { "tie".into() } else { String::new() });
            }
            Err(_) => {
                row.push(String::new());
                row.push("incomplete".into());
            }
        }
        row.push(
            ws.missing_items
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        );
        score_rows.push(row);
    }

    let mut header = vec!["subject_id".to_string()];
    for factor in Factor::ALL {
        header.push(format!("ws_{}", factor.name().to_ascii_lowercase().replace(' ', "_")));
    }
    for factor in Factor::ALL {
        header.push(format!("refined_{}", factor.name().to_ascii_lowercase().replace(' ', "_")));
    }
    header.push("style".into());
    header.push("flag".into());
    header.push("missing_items".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let scores_path = ctx.out_dir.join("mdsi_scores.csv");
    write_table(&scores_path, &header_refs, &score_rows).map_err(map_err)?;
    manifest.output(&ctx.out_dir, &scores_path)?;
    if let Err(note) = &refined {
        manifest.param("refined_note", note);
    }

    // reliability: per-factor alpha over subjects with complete answers,
    // reversed items recoded before the item covariance
    let mut rel_rows = Vec::new();
    for factor in Factor::ALL {
        let items = bank.factor_items(factor);
        let complete: Vec<&_> = responses
            .iter()
            .filter(|r| items.iter().all(|a| r.answers.contains_key(&a.item_id)))
            .collect();
        let alpha_cell = if complete.len() >= 3 && items.len() >= 2 {
            let m = DMatrix::from_fn(complete.len(), items.len(), |i, j| {
                let a = &items[j];
                let raw = complete[i].answers[&a.item_id];
                let coded = if a.reversed {
                    reverse_code(raw).unwrap_or(raw)
                } else {
                    raw
                };
                coded as f64
            });
            match cronbach_alpha(&m) {
                Ok(alpha) => fmt(alpha),
                Err(e) => e.to_string(),
            }
        } else {
            String::new()
        };
        rel_rows.push(vec![
            factor.name().to_string(),
            items.len().to_string(),
            complete.len().to_string(),
            alpha_cell,
        ]);
    }
    let rel_path = ctx.out_dir.join("mdsi_reliability.csv");
    write_table(
        &rel_path,
        &["factor", "n_items", "n_subjects", "cronbach_alpha"],
        &rel_rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &rel_path)?;

    manifest.write(&ctx.out_dir)
}

// -------------------------------------------------------------- correlate

/// Reads a delimited table whose first column is subject_id; empty cells
/// parse as NaN. Returns (column names, rows).
/// Column names (after subject_id) and one value row per subject.
type SubjectTable = (Vec<String>, Vec<(String, Vec<f64>)>);

fn read_subject_table(path: &Path) -> Result<SubjectTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Upstream(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Upstream(format!("{} is empty", path.display())))?
        .split(',')
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").to_string();
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push((id, values));
    }
    Ok((header, rows))
}

fn numeric_columns(
    header: &[String],
    rows: &[(String, Vec<f64>)],
    subjects: &[String],
    keep: impl Fn(&str) -> bool,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let index: BTreeMap<&str, &Vec<f64>> =
        rows.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if !keep(name) {
            continue;
        }
        names.push(name.clone());
        cols.push(
            subjects
                .iter()
                .map(|s| {
                    index
                        .get(s.as_str())
                        .and_then(|v| v.get(j).copied())
                        .unwrap_or(f64::NAN)
                })
                .collect(),
        );
    }
    (names, cols)
}

pub fn cmd_correlate(ctx: &Ctx) -> Result<(), CliError> {
    for upstream in ["indicators", "envelope", "ccg", "trajectories", "mdsi"] {
        require_upstream(&ctx.out_dir, upstream)?;
    }
    let profiles_path = ctx.cfg.profiles_path(&ctx.config_dir);
    let profiles: Vec<SubjectProfile> = load_profiles(&profiles_path).map_err(map_err)?;
    let profile_index: BTreeMap<&str, &SubjectProfile> = profiles
        .iter()
        .map(|p| (p.subject_id.as_str(), p))
        .collect();

    let (ind_header, ind_rows) = read_subject_table(&ctx.out_dir.join("indicators.csv"))?;
    let (env_header, env_rows) = read_subject_table(&ctx.out_dir.join("envelope_scores.csv"))?;
    let (ccg_header, ccg_rows) = read_subject_table(&ctx.out_dir.join("ccg.csv"))?;
    let (shr_header, shr_rows) = read_subject_table(&ctx.out_dir.join("class_shares.csv"))?;
    let (mdsi_header, mdsi_rows) = read_subject_table(&ctx.out_dir.join("mdsi_scores.csv"))?;

    // subjects: driving subjects that also have questionnaire and profile rows
    let mdsi_ids: Vec<&str> = mdsi_rows.iter().map(|(id, _)| id.as_str()).collect();
    let subjects: Vec<String> = ind_rows
        .iter()
        .map(|(id, _)| id.clone())
        .filter(|id| mdsi_ids.contains(&id.as_str()) && profile_index.contains_key(id.as_str()))
        .collect();
    if subjects.is_empty() {
        return Err(CliError::Data(
            "no subjects shared between indicators, questionnaire scores, and profiles".into(),
        ));
    }

    // factor matrix: refined scores when available, weighted-sum otherwise
    let use_refined = {
        let refined_cols: Vec<usize> = mdsi_header
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("refined_"))
            .map(|(j, _)| j)
            .collect();
        mdsi_rows
            .iter()
            .any(|(_, v)| refined_cols.iter().any(|&j| v.get(j).is_some_and(|x| x.is_finite())))
    };
    let factor_prefix = if use_refined { "refined_" } else { "ws_" };
    let (factor_names, factor_cols) = numeric_columns(&mdsi_header, &mdsi_rows, &subjects, |n| {
        n.starts_with(factor_prefix)
    });

    let mut indicator_names = Vec::new();
    let mut indicator_cols = Vec::new();
    let (n1, c1) = numeric_columns(&ind_header, &ind_rows, &subjects, |_| true);
    let (n2, c2) = numeric_columns(&env_header, &env_rows, &subjects, |_| true);
    let (n3, c3) = numeric_columns(&ccg_header, &ccg_rows, &subjects, |n| {
        matches!(n, "ccg_m_per_mps2" | "ccg0_m" | "ci_width_m")
    });
    let (n4, c4) = numeric_columns(&shr_header, &shr_rows, &subjects, |n| {
        n.starts_with("pct_") || n.starts_with("intensity_mean_")
    });
    for (names, cols) in [(n1, c1), (n2, c2), (n3, c3), (n4, c4)] {
        indicator_names.extend(names);
        indicator_cols.extend(cols);
    }

    let n = subjects.len();
    let factors = NamedMatrix {
        subject_ids: subjects.clone(),
        columns: factor_names,
        values: DMatrix::from_fn(n, factor_cols.len(), |i, j| factor_cols[j][i]),
    };
    let indicators = NamedMatrix {
        subject_ids: subjects.clone(),
        columns: indicator_names,
        values: DMatrix::from_fn(n, indicator_cols.len(), |i, j| indicator_cols[j][i]),
    };
    let covariates: Vec<Vec<f64>> = vec![
        subjects
            .iter()
            .map(|s| profile_index[s.as_str()].age_years as f64)
            .collect(),
        subjects
            .iter()
            .map(|s| match profile_index[s.as_str()].gender {
                lanemetrics::ingest::Gender::Female => 0.0,
                _ => 1.0,
            })
            .collect(),
    ];

    let entries = correlate_all(&factors, &indicators, &covariates);

    let mut manifest = Manifest::new("correlate");
    manifest.param("n_subjects", n);
    manifest.param("n_factors", factors.columns.len());
    manifest.param("n_indicators", indicators.columns.len());
    manifest.param("factor_source", factor_prefix.trim_end_matches('_'));
    manifest.param("covariates", "age,gender");
    manifest.input("profiles", &profiles_path)?;

    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.factor.clone(),
                e.indicator.clone(),
                e.r.map(fmt).unwrap_or_default(),
                e.p.map(fmt).unwrap_or_default(),
                e.n.to_string(),
                e.df.to_string(),
                e.tier.map(|t| t.stars().to_string()).unwrap_or_default(),
                e.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let table_path = ctx.out_dir.join("correlations.csv");
    write_table(
        &table_path,
        &["factor", "indicator", "r", "p", "n", "df", "significance", "note"],
        &rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &table_path)?;

    // highly significant subset, strongest first
    let mut sig: Vec<&lanemetrics::correlation::CorrelationEntry> = entries
        .iter()
        .filter(|e| e.p.is_some_and(|p| p < 0.01))
        .collect();
    sig.sort_by(|a, b| {
        a.factor
            .cmp(&b.factor)
            .then(
                b.r.unwrap_or(0.0)
                    .abs()
                    .partial_cmp(&a.r.unwrap_or(0.0).abs())
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.indicator.cmp(&b.indicator))
    });
    let sig_rows: Vec<Vec<String>> = sig
        .iter()
        .map(|e| {
            vec![
                e.factor.clone(),
                e.indicator.clone(),
                e.r.map(fmt).unwrap_or_default(),
                e.tier.map(|t| t.stars().to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let sig_path = ctx.out_dir.join("significant.csv");
    write_table(&sig_path, &["factor", "indicator", "r", "significance"], &sig_rows)
        .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &sig_path)?;

    // tier summary with the expected chance count at each threshold
    let n_tests = entries.iter().filter(|e| e.r.is_some()).count();
    let count = |tier: SignificanceTier| {
        entries.iter().filter(|e| e.tier == Some(tier)).count()
    };
    let summary_rows = vec![
        vec![
            "p<.05".into(),
            (count(SignificanceTier::P05)
                + count(SignificanceTier::P01)
                + count(SignificanceTier::P001))
            .to_string(),
            fmt(n_tests as f64 * 0.05),
        ],
        vec![
            "p<.01".into(),
            (count(SignificanceTier::P01) + count(SignificanceTier::P001)).to_string(),
            fmt(n_tests as f64 * 0.01),
        ],
        vec![
            "p<.001".into(),
            count(SignificanceTier::P001).to_string(),
            fmt(n_tests as f64 * 0.001),
        ],
    ];
    let summary_path = ctx.out_dir.join("correlation_summary.csv");
    write_table(
        &summary_path,
        &["threshold", "observed", "expected_by_chance"],
        &summary_rows,
    )
    .map_err(map_err)?;
    manifest.output(&ctx.out_dir, &summary_path)?;

    manifest.write(&ctx.out_dir)
}

// ----------------------------------------------------------------- report

fn csv_to_markdown(path: &Path, max_cols: usize) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Upstream(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').take(max_cols).collect();
        out.push_str("| ");
        out.push_str(&cells.join(" | "));
        out.push_str(" |\n");
        if i == 0 {
            out.push_str(&format!("|{}\n", " --- |".repeat(cells.len())));
        }
    }
    Ok(out)
}

pub fn cmd_report(ctx: &Ctx) -> Result<(), CliError> {
    for upstream in [
        "ingest",
        "curves",
        "indicators",
        "envelope",
        "ccg",
        "trajectories",
        "mdsi",
        "correlate",
    ] {
        require_upstream(&ctx.out_dir, upstream)?;
    }

    let mut doc = String::new();
    doc.push_str("# Driving-behavior indicator report\n\n");
    doc.push_str("All values carry the units named in their column headers; numbers are rounded to 6 significant digits.\n\n");

    let sections: [(&str, &str, usize); 9] = [
        ("Ingested traces", "ingest_summary.csv", 16),
        ("Curves of interest", "curves.csv", 16),
        ("Straight-driving center band (m)", "center_band.csv", 16),
        ("Envelope decomposition", "envelope_summary.csv", 16),
        ("Stationary cornering gradient", "ccg.csv", 16),
        ("Trajectory classes per curve", "trajectories.csv", 16),
        ("Class shares per subject (%)", "class_shares.csv", 10),
        ("Questionnaire factor scores", "mdsi_scores.csv", 16),
        ("Factor reliability", "mdsi_reliability.csv", 16),
    ];
    for (title, file, max_cols) in sections {
        doc.push_str(&format!("## {title}\n\n"));
        doc.push_str(&csv_to_markdown(&ctx.out_dir.join(file), max_cols)?);
        doc.push('\n');
    }

    doc.push_str("## Correlation summary\n\n");
    doc.push_str(&csv_to_markdown(&ctx.out_dir.join("correlation_summary.csv"), 8)?);
    doc.push('\n');
    doc.push_str("## Highly significant partial correlations (p < .01)\n\n");
    doc.push_str(&csv_to_markdown(&ctx.out_dir.join("significant.csv"), 8)?);
    doc.push('\n');
    doc.push_str(
        "Partial correlations control for age and gender; significance is two-tailed and uncorrected for multiple comparisons (see the expected-by-chance column above).\n",
    );

    let mut manifest = Manifest::new("report");
    let report_path = ctx.out_dir.join("report.md");
    std::fs::write(&report_path, doc)
        .map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    manifest.output(&ctx.out_dir, &report_path)?;
    manifest.write(&ctx.out_dir)
}
