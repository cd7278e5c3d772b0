use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::sweep::ResultRow;
use crate::error::{Error, Result};
use crate::orchestrator::RunTrace;

/// Significant digits of every real number in the CSV output.
pub const CSV_DIGITS: usize = 12;

/// `printf("%.*g")`: `digits` significant digits, trailing zeros removed,
/// scientific notation outside `[1e-4, 10^digits)`.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn g(x: f64) -> String {
    format_g(x, CSV_DIGITS)
}

/// Writes the result CSV to any sink.
pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let first = rows.first().ok_or_else(|| Error::invalid("rows", "nothing to write"))?;
    let bs = first.per_bs_power.len();
    if rows.iter().any(|r| r.per_bs_power.len() != bs) {
        return Err(Error::Dimension("rows disagree on the number of base stations".into()));
    }
    let mut out = BufWriter::new(out);
    let mut header = vec![
        "mode".to_string(),
        "p_max_dbm".into(),
        "seed".into(),
        "iterations".into(),
        "sum_rate_bpshz".into(),
        "sum_rate_per_sc".into(),
        "disagreement".into(),
    ];
    header.extend((0..bs).map(|b| format!("power_b{b}")));
    header.push("wall_ms".into());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![
            r.mode.to_string(),
            g(r.p_max_dbm),
            r.seed.to_string(),
            r.iterations.to_string(),
            g(r.final_sum_rate),
            g(r.sum_rate_per_sc()),
            g(r.final_disagreement),
        ];
        cells.extend(r.per_bs_power.iter().map(|&p| g(p)));
        cells.push(g(r.wall_ms));
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

/// Per-iteration traces, one block per run, with a leading run index.
pub fn write_traces<W: Write>(traces: &[RunTrace], out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "run,t,rho,alpha,sum_rate,disagreement")?;
    for (i, trace) in traces.iter().enumerate() {
        for r in &trace.rows {
            writeln!(
                out,
                "{i},{},{},{},{},{}",
                r.t,
                g(r.rho),
                g(r.alpha),
                g(r.sum_rate),
                g(r.disagreement)
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv(traces: &[RunTrace], path: &Path) -> Result<()> {
    write_traces(traces, File::create(path)?)
}
