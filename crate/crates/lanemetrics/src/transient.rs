//! Transient cornering behavior: curve segmentation, C/I/O encoding,
//! 16-class trajectory lookup, and curve-cutting intensity.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::curves::{CenterBand, CurveWindow};
use crate::error::{Error, Result};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentLabel {
    Center,
    Inner,
    Outer,
}

impl SegmentLabel {
    pub fn letter(self) -> char {
        match self {
            SegmentLabel::Center => 'C',
            SegmentLabel::Inner => 'I',
            SegmentLabel::Outer => 'O',
        }
    }

    fn from_letter(c: char) -> Option<SegmentLabel> {
        match c {
            'C' => Some(SegmentLabel::Center),
            'I' => Some(SegmentLabel::Inner),
            'O' => Some(SegmentLabel::Outer),
            _ => None,
        }
    }
}

/// Four-letter curve encoding: entry, first half, second half, exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurveCode(pub [SegmentLabel; 4]);

impl CurveCode {
    pub fn parse(s: &str) -> Option<CurveCode> {
        let mut labels = [SegmentLabel::Center; 4];
        let mut chars = s.chars();
        for slot in &mut labels {
            *slot = SegmentLabel::from_letter(chars.next()?)?;
        }
        if chars.next().is_some() {
            return None;
        }
        Some(CurveCode(labels))
    }
}

impl std::fmt::Display for CurveCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in self.0 {
            write!(f, "{}", l.letter())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrajectoryClass {
    Center,
    EarlyCutting,
    EarlyCounter,
    LateCutting,
    LateCounter,
    Cutting,
    Counter,
    SevereCutting,
    SevereCounter,
    BiasedInner,
    BiasedOuter,
    Oscillating,
    OscillatingCutting,
    OscillatingCounter,
    SlowSevereCutting,
    SlowSevereCounter,
    Unclassified,
}

impl TrajectoryClass {
    pub const ALL: [TrajectoryClass; 17] = [
        TrajectoryClass::Center,
        TrajectoryClass::EarlyCutting,
        TrajectoryClass::EarlyCounter,
        TrajectoryClass::LateCutting,
        TrajectoryClass::LateCounter,
        TrajectoryClass::Cutting,
        TrajectoryClass::Counter,
        TrajectoryClass::SevereCutting,
        TrajectoryClass::SevereCounter,
        TrajectoryClass::BiasedInner,
        TrajectoryClass::BiasedOuter,
        TrajectoryClass::Oscillating,
        TrajectoryClass::OscillatingCutting,
        TrajectoryClass::OscillatingCounter,
        TrajectoryClass::SlowSevereCutting,
        TrajectoryClass::SlowSevereCounter,
        TrajectoryClass::Unclassified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryClass::Center => "Center",
            TrajectoryClass::EarlyCutting => "Early Cutting",
            TrajectoryClass::EarlyCounter => "Early Counter",
            TrajectoryClass::LateCutting => "Late Cutting",
            TrajectoryClass::LateCounter => "Late Counter",
            TrajectoryClass::Cutting => "Cutting",
            TrajectoryClass::Counter => "Counter",
            TrajectoryClass::SevereCutting => "Severe Cutting",
            TrajectoryClass::SevereCounter => "Severe Counter",
            TrajectoryClass::BiasedInner => "Biased Inner",
            TrajectoryClass::BiasedOuter => "Biased Outer",
            TrajectoryClass::Oscillating => "Oscillating",
            TrajectoryClass::OscillatingCutting => "Oscillating Cutting",
            TrajectoryClass::OscillatingCounter => "Oscillating Counter",
            TrajectoryClass::SlowSevereCutting => "Slow Severe Cutting",
            TrajectoryClass::SlowSevereCounter => "Slow Severe Counter",
            TrajectoryClass::Unclassified => "Unclassified",
        }
    }
}

const CODE_TABLE: [(&str, TrajectoryClass); 16] = [
    ("CCCC", TrajectoryClass::Center),
    ("ICCC IICC", TrajectoryClass::EarlyCutting),
    ("OCCC OOCC", TrajectoryClass::EarlyCounter),
    ("CCCI CCII", TrajectoryClass::LateCutting),
    ("CCCO CCOO", TrajectoryClass::LateCounter),
    ("OOII OIII CICC CCIC CIIC", TrajectoryClass::Cutting),
    ("IIOO IOOO COCC CCOC COOC", TrajectoryClass::Counter),
    (
        "OIIO OIIC OCIC OCIO OICO OICC OCII COII",
        TrajectoryClass::SevereCutting,
    ),
    (
        "IOOI IOOC ICOC ICOI IOCI IOCC ICOO CIOO",
        TrajectoryClass::SevereCounter,
    ),
    ("CIII IIIC IIII", TrajectoryClass::BiasedInner),
    ("COOO OOOC OOOO", TrajectoryClass::BiasedOuter),
    ("OCOI ICIO CIOC COIC CCIO CCOI", TrajectoryClass::Oscillating),
    ("CICI ICIC ICII IICI", TrajectoryClass::OscillatingCutting),
    ("COCO OCOC OCOO OOCO", TrajectoryClass::OscillatingCounter),
    ("OCCI", TrajectoryClass::SlowSevereCutting),
    ("ICCO", TrajectoryClass::SlowSevereCounter),
];

fn code_map() -> &'static BTreeMap<String, TrajectoryClass> {
    static MAP: OnceLock<BTreeMap<String, TrajectoryClass>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut map = BTreeMap::new();
        for (codes, class) in CODE_TABLE {
            for code in codes.split_whitespace() {
                assert!(CurveCode::parse(code).is_some(), "bad code {code}");
                let prev = map.insert(code.to_string(), class);
                assert!(prev.is_none(), "duplicate code {code}");
            }
        }
        assert_eq!(map.len(), 57);
        map
    })
}

/// Table lookup; codes outside the published mapping are Unclassified.
pub fn classify(code: CurveCode) -> TrajectoryClass {
    code_map()
        .get(&code.to_string())
        .copied()
        .unwrap_or(TrajectoryClass::Unclassified)
}

/// Splits a curve window at cumulative arc fractions [0, 1/6, 1/2, 5/6, 1]
/// into entry / first half / second half / exit index ranges (half-open).
/// Boundary samples go to the earlier segment.
pub fn segment_curve(window: &CurveWindow) -> Result<[(usize, usize); 4]> {
    let n = window.arc.len();
    if n < 8 {
        return Err(Error::TooShort(n));
    }
    let total = window.arc_length;
    let cut = |frac: f64| {
        let target = frac * total;
        // first index strictly beyond the boundary
        window.arc.partition_point(|&s| s <= target + 1e-12)
    };
    let b1 = cut(1.0 / 6.0);
    let b2 = cut(0.5);
    let b3 = cut(5.0 / 6.0);
    Ok([(0, b1), (b1, b2), (b2, b3), (b3, n)])
}

/// C/I/O label for one segment's deviation series against the band.
/// In-band when the 75th percentile of |dev| stays inside; otherwise the
/// side with the larger exceedance wins (p75 of dev for inner, p25 for
/// outer), ties label Inner.
pub fn label_segment(dev: &[f64], band: &CenterBand) -> Result<SegmentLabel> {
    if dev.is_empty() {
        return Err(Error::EmptySegment);
    }
    let hw = band.half_width;
    let mut abs: Vec<f64> = dev.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if percentile_sorted(&abs, 75.0) <= hw {
        return Ok(SegmentLabel::Center);
    }
    let mut sorted = dev.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let inner_exceed = percentile_sorted(&sorted, 75.0) - hw;
    let outer_exceed = -percentile_sorted(&sorted, 25.0) - hw;
    if inner_exceed >= outer_exceed {
        Ok(SegmentLabel::Inner)
    } else {
        Ok(SegmentLabel::Outer)
    }
}

pub fn encode_curve(window: &CurveWindow, band: &CenterBand) -> Result<CurveCode> {
    let segments = segment_curve(window)?;
    let mut labels = [SegmentLabel::Center; 4];
    for (slot, (start, end)) in labels.iter_mut().zip(segments) {
        *slot = label_segment(&window.dev[start..end], band)?;
    }
    Ok(CurveCode(labels))
}

/// Curve-cutting intensity: band-exceedance area per meter traveled,
/// reported scaled by 1000.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntensityResult {
    pub intensity: f64,
    pub class: TrajectoryClass,
}

pub fn intensity(window: &CurveWindow, band: &CenterBand) -> Result<IntensityResult> {
    let n = window.samples.len();
    if n < 2 {
        return Err(Error::ZeroDistance);
    }
    let exceed =
        |i: usize| (window.dev[i].abs() - band.half_width).max(0.0);
    let mut area = 0.0;
    let mut dist = 0.0;
    for i in 1..n {
        let dt = window.samples[i].t - window.samples[i - 1].t;
        area += 0.5 * (exceed(i) + exceed(i - 1)) * dt;
        dist += 0.5 * (window.samples[i].v_x + window.samples[i - 1].v_x) * dt;
    }
    if dist <= 0.0 {
        return Err(Error::ZeroDistance);
    }
    let code = encode_curve(window, band)?;
    Ok(IntensityResult {
        intensity: area / dist * 1000.0,
        class: classify(code),
    })
}

/// Per-subject class shares (percent of evaluable curves) and intensity
/// statistics per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub n_curves: usize,
    /// class -> percentage of evaluable curves
    pub percentages: BTreeMap<TrajectoryClass, f64>,
    /// class -> (mean, sd, max) intensity over that class's curves
    pub intensity_stats: BTreeMap<TrajectoryClass, (f64, f64, f64)>,
}

pub fn class_distribution(results: &[IntensityResult]) -> Result<ClassDistribution> {
    if results.is_empty() {
        return Err(Error::NoEvaluableCurves);
    }
    let n = results.len() as f64;
    let mut percentages = BTreeMap::new();
    let mut intensity_stats = BTreeMap::new();
    for class in TrajectoryClass::ALL {
        let vals: Vec<f64> = results
            .iter()
            .filter(|r| r.class == class)
            .map(|r| r.intensity)
            .collect();
        percentages.insert(class, vals.len() as f64 / n * 100.0);
        if !vals.is_empty() {
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k;
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            intensity_stats.insert(class, (mean, var.sqrt(), max));
        }
    }
    Ok(ClassDistribution {
        n_curves: results.len(),
        percentages,
        intensity_stats,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::curves::{curve_relative_deviation, Direction};
    use crate::ingest::{RoadType, SampleRecord};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    pub(crate) fn band(half_width: f64) -> CenterBand {
        CenterBand {
            half_width,
            per_subject_sd: BTreeMap::new(),
        }
    }

    /// Uniform-speed window whose deviation is given per sample.
    pub(crate) fn window_from_dev(dev: Vec<f64>, v: f64) -> CurveWindow {
        let rate = 50.0;
        let samples: Vec<SampleRecord> = dev
            .iter()
            .enumerate()
            .map(|(i, &d)| SampleRecord {
                t: i as f64 / rate,
                v_x: v,
                a_x: 0.0,
                a_y: 1.5,
                d_cl: d,
                kappa: 0.004,
                road_type: RoadType::Rural,
                lane_change: false,
                oncoming: false,
                street_id: "R".into(),
                valid: true,
            })
            .collect();
        let arc: Vec<f64> = (0..dev.len()).map(|i| i as f64 * v / rate).collect();
        CurveWindow {
            curve_id: 1,
            subject_id: "s".into(),
            direction: Direction::Left,
            arc_length: *arc.last().unwrap(),
            arc,
            samples,
            dev,
        }
    }

    /// Builds the deviation series for a target code: each segment holds a
    /// constant value keyed by its label.
    pub(crate) fn dev_for_code(code: &str, magnitude: f64, n: usize) -> Vec<f64> {
        let bounds = [0, n / 6, n / 2, 5 * n / 6, n];
        let mut dev = Vec::with_capacity(n);
        for (seg, ch) in code.chars().enumerate() {
            let value = match ch {
                'C' => 0.0,
                'I' => magnitude,
                'O' => -magnitude,
                _ => panic!("bad label"),
            };
            dev.extend(std::iter::repeat_n(value, bounds[seg + 1] - bounds[seg]));
        }
        dev
    }

    #[test]
    fn table_covers_57_codes_without_duplicates() {
        assert_eq!(code_map().len(), 57);
    }

    #[test]
    fn lookup_examples() {
        assert_eq!(classify(CurveCode::parse("CCCC").unwrap()), TrajectoryClass::Center);
        assert_eq!(classify(CurveCode::parse("CIII").unwrap()), TrajectoryClass::BiasedInner);
        assert_eq!(classify(CurveCode::parse("IICC").unwrap()), TrajectoryClass::EarlyCutting);
        assert_eq!(classify(CurveCode::parse("IOIO").unwrap()), TrajectoryClass::Unclassified);
    }

    #[test]
    fn uniform_speed_split_100_200_200_100() {
        let w = window_from_dev(vec![0.0; 600], 20.0);
        let segs = segment_curve(&w).unwrap();
        // boundary samples land in the earlier segment, so splits sit one
        // past the 1/6, 1/2, 5/6 marks of the 599-interval arc
        let lens: Vec<usize> = segs.iter().map(|(a, b)| b - a).collect();
        assert_eq!(lens.iter().sum::<usize>(), 600);
        for (len, expect) in lens.iter().zip([100, 200, 200, 100]) {
            assert!((*len as i64 - expect).unsigned_abs() <= 1, "{lens:?}");
        }
    }

    #[test]
    fn arc_fractions_one_sixth_one_third() {
        let w = window_from_dev(vec![0.0; 1200], 25.0);
        let segs = segment_curve(&w).unwrap();
        let total = w.arc_length;
        let frac = |(a, b): (usize, usize)| {
            let lo = if a == 0 { 0.0 } else { w.arc[a] };
            (w.arc[b - 1].min(total) - lo) / total
        };
        assert_abs_diff_eq!(frac(segs[0]), 1.0 / 6.0, epsilon = 0.01);
        assert_abs_diff_eq!(frac(segs[1]), 1.0 / 3.0, epsilon = 0.01);
        assert_abs_diff_eq!(frac(segs[2]), 1.0 / 3.0, epsilon = 0.01);
        assert_abs_diff_eq!(frac(segs[3]), 1.0 / 6.0, epsilon = 0.01);
    }

    #[test]
    fn variable_speed_split_matches_cumulative_oracle() {
        // speed ramping 10 -> 30 m/s
        let rate = 50.0;
        let n = 500;
        let samples: Vec<SampleRecord> = (0..n)
            .map(|i| SampleRecord {
                t: i as f64 / rate,
                v_x: 10.0 + 20.0 * i as f64 / n as f64,
                a_x: 0.0,
                a_y: 0.0,
                d_cl: 0.0,
                kappa: 0.004,
                road_type: RoadType::Rural,
                lane_change: false,
                oncoming: false,
                street_id: "R".into(),
                valid: true,
            })
            .collect();
        let mut arc = vec![0.0];
        for i in 1..n {
            let ds = 0.5 * (samples[i].v_x + samples[i - 1].v_x) / rate;
            arc.push(arc[i - 1] + ds);
        }
        let w = CurveWindow {
            curve_id: 1,
            subject_id: "s".into(),
            direction: Direction::Left,
            arc_length: arc[n - 1],
            dev: vec![0.0; n],
            samples,
            arc: arc.clone(),
        };
        let segs = segment_curve(&w).unwrap();

        // linear-scan bisection oracle: last index with arc <= frac * total
        let oracle = |frac: f64| {
            let target = frac * arc[n - 1];
            (0..n).rev().find(|&i| arc[i] <= target + 1e-12).unwrap() + 1
        };
        assert_eq!(segs[0].1, oracle(1.0 / 6.0));
        assert_eq!(segs[1].1, oracle(0.5));
        assert_eq!(segs[2].1, oracle(5.0 / 6.0));
    }

    #[test]
    fn too_short_errors() {
        let w = window_from_dev(vec![0.0; 7], 20.0);
        assert!(matches!(segment_curve(&w), Err(Error::TooShort(7))));
    }

    #[test]
    fn label_zero_dev_center() {
        assert_eq!(label_segment(&[0.0; 50], &band(0.24)).unwrap(), SegmentLabel::Center);
    }

    #[test]
    fn label_constant_inner() {
        assert_eq!(label_segment(&[0.5; 50], &band(0.24)).unwrap(), SegmentLabel::Inner);
    }

    #[test]
    fn label_oscillating_larger_exceedance_wins() {
        // series built so p75(dev) = +0.30 and p25(dev) = -0.26: inner
        // exceedance 0.06 beats outer 0.02
        let mut dev = Vec::new();
        dev.extend(std::iter::repeat_n(-0.26, 30));
        dev.extend(std::iter::repeat_n(0.0, 20));
        dev.extend(std::iter::repeat_n(0.30, 50));
        // quantile oracle on the sorted copy
        let mut sorted = dev.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(percentile_sorted(&sorted, 75.0), 0.30, epsilon = 1e-12);
        assert_abs_diff_eq!(percentile_sorted(&sorted, 25.0), -0.26, epsilon = 1e-12);
        assert_eq!(label_segment(&dev, &band(0.24)).unwrap(), SegmentLabel::Inner);
    }

    #[test]
    fn label_outer_when_outer_exceedance_larger() {
        let mut dev = Vec::new();
        dev.extend(std::iter::repeat_n(-0.60, 50));
        dev.extend(std::iter::repeat_n(0.30, 50));
        assert_eq!(label_segment(&dev, &band(0.24)).unwrap(), SegmentLabel::Outer);
    }

    #[test]
    fn all_57_codes_roundtrip_through_generators() {
        let b = band(0.24);
        for code in code_map().keys() {
            let dev = dev_for_code(code, 0.5, 600);
            let w = window_from_dev(dev, 20.0);
            let got = encode_curve(&w, &b).unwrap();
            assert_eq!(got.to_string(), *code, "generator for {code}");
            assert_eq!(classify(got), *code_map().get(code).copied().as_ref().unwrap());
        }
    }

    #[test]
    fn mirror_invariance_on_generators() {
        // a mirrored curve flips d_CL and direction; inner-positive dev and
        // hence the code are unchanged
        let b = band(0.24);
        for code in code_map().keys() {
            let dev = dev_for_code(code, 0.5, 600);
            let w = window_from_dev(dev.clone(), 20.0);
            let mut m = window_from_dev(dev, 20.0);
            m.direction = Direction::Right;
            for s in &mut m.samples {
                s.d_cl = -s.d_cl;
                s.a_y = -s.a_y;
                s.kappa = -s.kappa;
            }
            let d_cl: Vec<f64> = m.samples.iter().map(|s| s.d_cl).collect();
            m.dev = curve_relative_deviation(&d_cl, Direction::Right);
            assert_eq!(encode_curve(&w, &b).unwrap(), encode_curve(&m, &b).unwrap());
            assert_abs_diff_eq!(
                intensity(&w, &b).unwrap().intensity,
                intensity(&m, &b).unwrap().intensity,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn intensity_in_band_zero() {
        let w = window_from_dev(vec![0.1; 600], 20.0);
        let r = intensity(&w, &band(0.24)).unwrap();
        assert_abs_diff_eq!(r.intensity, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn intensity_constant_offset_arithmetic() {
        // dev 0.34, band 0.24, 20 m/s for 10 s:
        // (0.10 * 10) / 200 * 1000 = 5.0
        let w = window_from_dev(vec![0.34; 501], 20.0);
        let r = intensity(&w, &band(0.24)).unwrap();
        assert_abs_diff_eq!(r.intensity, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn intensity_sinusoid_matches_fine_grid_oracle() {
        let rate = 50.0;
        let n = 1000;
        let f = |t: f64| 0.4 * (0.8 * t).sin();
        let dev: Vec<f64> = (0..n).map(|i| f(i as f64 / rate)).collect();
        let w = window_from_dev(dev, 18.0);
        let r = intensity(&w, &band(0.24)).unwrap();

        // 10x oversampled trapezoid oracle
        let hw = 0.24;
        let fine = 10 * (n - 1);
        let dt = (n - 1) as f64 / rate / fine as f64;
        let g = |t: f64| (f(t).abs() - hw).max(0.0);
        let mut area = 0.0;
        for i in 0..fine {
            area += 0.5 * (g(i as f64 * dt) + g((i + 1) as f64 * dt)) * dt;
        }
        let dist = 18.0 * (n - 1) as f64 / rate;
        let oracle = area / dist * 1000.0;
        assert!((r.intensity - oracle).abs() / oracle < 0.005, "{} vs {oracle}", r.intensity);
    }

    #[test]
    fn widening_band_never_increases_intensity_or_escalates_labels() {
        let dev = dev_for_code("OIIC", 0.5, 600);
        let w = window_from_dev(dev.clone(), 20.0);
        let narrow = band(0.2);
        let wide = band(0.6);
        assert!(
            intensity(&w, &wide).unwrap().intensity <= intensity(&w, &narrow).unwrap().intensity
        );
        for chunk in dev.chunks(100) {
            let l_narrow = label_segment(chunk, &narrow).unwrap();
            let l_wide = label_segment(chunk, &wide).unwrap();
            if l_narrow == SegmentLabel::Center {
                assert_eq!(l_wide, SegmentLabel::Center);
            }
        }
    }

    #[test]
    fn distribution_counts() {
        let mk = |class, intensity| IntensityResult { class, intensity };
        let results = vec![
            mk(TrajectoryClass::Center, 0.0),
            mk(TrajectoryClass::Cutting, 4.0),
            mk(TrajectoryClass::Cutting, 8.0),
        ];
        let d = class_distribution(&results).unwrap();
        assert_abs_diff_eq!(d.percentages[&TrajectoryClass::Center], 100.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.percentages[&TrajectoryClass::Cutting], 200.0 / 3.0, epsilon = 1e-9);
        let total: f64 = d.percentages.values().sum();
        assert_abs_diff_eq!(total, 100.0, epsilon = 1e-9);
        let (mean, sd, max) = d.intensity_stats[&TrajectoryClass::Cutting];
        assert_abs_diff_eq!(mean, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sd, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_distribution_errors() {
        assert!(matches!(class_distribution(&[]), Err(Error::NoEvaluableCurves)));
    }
}
