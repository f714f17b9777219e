//! CSV output for snapshot series.

use std::io::Write;

use crate::error::Result;
use crate::sim::Snapshot;

pub const SNAPSHOT_HEADER: &str = "measurements_per_node,stress,mae,ree_p50,ree_p90";

/// Formats `v` with 6 significant digits in the style of C's `%g`: fixed notation
/// for exponents in `-4..6`, scientific otherwise, trailing zeros removed.
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes the snapshot series with [`SNAPSHOT_HEADER`], LF line endings.
pub fn write_snapshots<W: Write>(snapshots: &[Snapshot], w: &mut W) -> Result<()> {
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    for s in snapshots {
        writeln!(
            w,
            "{},{},{},{},{}",
            format_sig(s.measurements_per_node),
            format_sig(s.stress),
            format_sig(s.mae),
            format_sig(s.ree_p50),
            format_sig(s.ree_p90)
        )?;
    }
    Ok(())
}

pub fn snapshots_to_string(snapshots: &[Snapshot]) -> String {
    let mut buf = Vec::new();
    write_snapshots(snapshots, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}
