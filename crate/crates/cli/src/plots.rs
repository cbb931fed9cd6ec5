//! Minimal vector-graphics output: a polar envelope plot and a
//! straightened per-curve deviation plot, both as plain SVG.

use std::fmt::Write as _;
use std::path::Path;

use lanemetrics::curves::CurveWindow;
use lanemetrics::envelope::Envelope;

use crate::CliError;

const SIZE: f64 = 480.0;

fn write_svg(path: &Path, body: &str) -> Result<(), CliError> {
    let doc = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n{body}</svg>\n"
    );
    std::fs::write(path, doc).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn polygon(points: &[(f64, f64)], stroke: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "<polygon points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
        coords.join(" ")
    )
}

/// Polar plot of the four envelope flavors around the acceleration origin.
pub fn envelope_polar_svg(path: &Path, env: &Envelope) -> Result<(), CliError> {
    let center = SIZE / 2.0;
    let r_max = env
        .points
        .iter()
        .map(|p| p.max_r)
        .fold(1e-9, f64::max);
    let scale = (SIZE / 2.0 - 30.0) / r_max;
    let mut body = String::new();
    // radial grid rings
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            body,
            "<circle cx=\"{center}\" cy=\"{center}\" r=\"{:.2}\" fill=\"none\" stroke=\"#ddd\"/>",
            frac * r_max * scale
        );
    }
    for (ty, color) in [("mean", "#2266aa"), ("p75", "#22aa66"), ("p95", "#aa8822"), ("max", "#aa2222")] {
        let pts: Vec<(f64, f64)> = env
            .points
            .iter()
            .zip(env.radii(ty))
            .map(|(p, r)| {
                let theta = p.center_angle_deg.to_radians();
                (
                    center + r * scale * theta.cos(),
                    center - r * scale * theta.sin(),
                )
            })
            .collect();
        body.push_str(&polygon(&pts, color));
    }
    write_svg(path, &body)
}

/// Straightened trajectories: curve-relative deviation against normalized
/// arc length, one polyline per curve, with the center band shaded.
pub fn trajectories_svg(path: &Path, windows: &[CurveWindow], half_width: f64) -> Result<(), CliError> {
    let dev_max = windows
        .iter()
        .flat_map(|w| w.dev.iter())
        .fold(half_width, |acc, &d| acc.max(d.abs()))
        * 1.1;
    let mid = SIZE / 2.0;
    let y_of = |dev: f64| mid - dev / dev_max * (SIZE / 2.0 - 20.0);
    let mut body = String::new();
    let _ = writeln!(
        body,
        "<rect x=\"0\" y=\"{:.2}\" width=\"{SIZE}\" height=\"{:.2}\" fill=\"#eef4ee\"/>",
        y_of(half_width),
        y_of(-half_width) - y_of(half_width)
    );
    let _ = writeln!(
        body,
        "<line x1=\"0\" y1=\"{mid}\" x2=\"{SIZE}\" y2=\"{mid}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>"
    );
    for (i, w) in windows.iter().enumerate() {
        if w.arc_length <= 0.0 {
            continue;
        }
        let hue = (i * 67) % 360;
        let coords: Vec<String> = w
            .arc
            .iter()
            .zip(&w.dev)
            .map(|(&s, &d)| format!("{:.2},{:.2}", s / w.arc_length * SIZE, y_of(d)))
            .collect();
        let _ = writeln!(
            body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"hsl({hue},60%,40%)\" stroke-width=\"1.2\"/>",
            coords.join(" ")
        );
    }
    write_svg(path, &body)
}
