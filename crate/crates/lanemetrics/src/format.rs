//! Deterministic, locale-independent number and table formatting for the
//! exported delimited tables.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Formats a number at 6 significant digits with a plain '.' decimal
/// separator. Values far from 1 switch to exponential notation; trailing
/// zeros in the fraction are trimmed so output is canonical.
pub fn format_number(x: f64) -> String {
    format_sig(x, 6)
}

pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // exact-value rounding to `digits` significant digits via exponential
    // formatting, then re-rendered
    let s = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = s.split_once('e').expect("exponential form");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..10).contains(&exp) {
        let trimmed = trim_fraction(mantissa);
        return format!("{trimmed}e{exp}");
    }

    let negative = mantissa.starts_with('-');
    let digits_only: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let point = exp + 1; // digits before the decimal point
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        for _ in 0..(-point) {
            out.push('0');
        }
        out.push_str(&digits_only);
    } else if (point as usize) >= digits_only.len() {
        out.push_str(&digits_only);
        for _ in 0..(point as usize - digits_only.len()) {
            out.push('0');
        }
    } else {
        out.push_str(&digits_only[..point as usize]);
        out.push('.');
        out.push_str(&digits_only[point as usize..]);
    }
    trim_fraction(&out)
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// Writes a delimited table with a header row. All rows must match the
/// header width.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
