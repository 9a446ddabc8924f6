use anyhow::{bail, Context, Result};
use serde::Serialize;

use abuckets_core::waveform::UpperBoundCurve;

/// Shortest decimal that parses back to the same `f64`, always with a
/// fractional part or exponent (`128.0`, not `128`).
pub fn real(v: f64) -> String {
    format!("{v:?}")
}

pub fn curve_csv(curve: &UpperBoundCurve) -> String {
    let mut out = String::from("distance,upper_bound\n");
    for (s, v) in curve.values.iter().enumerate() {
        out.push_str(&format!("{s},{}\n", real(*v)));
    }
    out
}

pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", real(*l)));
    }
    out
}

/// Parses a two-column CSV with an integer first column, checking the
/// header. Used for round-trip checks on emitted curves and loss traces.
pub fn parse_pairs_csv(text: &str, header: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => bail!("expected header {header:?}, found {other:?}"),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let (a, b) = line
                .split_once(',')
                .with_context(|| format!("line {}: expected two columns", i + 2))?;
            Ok((
                a.parse().with_context(|| format!("line {}: bad index {a:?}", i + 2))?,
                b.parse().with_context(|| format!("line {}: bad value {b:?}", i + 2))?,
            ))
        })
        .collect()
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
