//! Plot-ready CSV emission and the matching parsers.
//!
//! All floats are written with 17 significant digits so every file reparses
//! to the exact same bits.

use crate::dpinn::Trace;
use crate::problems::{FDSolution, SteadyAdvDiff};
use crate::{Error, Result};
use std::io::Write;

/// 17-significant-digit scientific form; round-trips any finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One solution-sample row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionSample {
    pub x: f64,
    pub t: Option<f64>,
    pub u_pred: f64,
    /// Absent when the problem has no exact oracle.
    pub u_exact: Option<f64>,
}

/// Write `x[,t],u_pred,u_exact,abs_err` rows, sorted by x then t.
///
/// The `u_exact` and `abs_err` columns are left empty when no oracle is
/// available.
pub fn emit_solution_csv<W: Write>(mut w: W, samples: &[SolutionSample]) -> Result<()> {
    let has_t = samples.first().map(|s| s.t.is_some()).unwrap_or(false);
    if has_t {
        writeln!(w, "x,t,u_pred,u_exact,abs_err")?;
    } else {
        writeln!(w, "x,u_pred,u_exact,abs_err")?;
    }
    let mut sorted: Vec<&SolutionSample> = samples.iter().collect();
    sorted.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.t.partial_cmp(&b.t).unwrap())
    });
    for s in sorted {
        let exact = s.u_exact.map(fmt_f64).unwrap_or_default();
        let abs_err = s
            .u_exact
            .map(|e| fmt_f64((s.u_pred - e).abs()))
            .unwrap_or_default();
        match s.t {
            Some(t) => writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(s.x),
                fmt_f64(t),
                fmt_f64(s.u_pred),
                exact,
                abs_err
            )?,
            None => writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(s.x),
                fmt_f64(s.u_pred),
                exact,
                abs_err
            )?,
        }
    }
    Ok(())
}

/// Parsed solution file: samples plus the recomputable `abs_err` column.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub has_t: bool,
    pub samples: Vec<SolutionSample>,
    pub abs_err: Vec<Option<f64>>,
}

/// Parse a solution CSV produced by [`emit_solution_csv`].
///
/// Rejects malformed headers, ragged rows and unparseable floats; tolerant
/// of nothing else. Safe on arbitrary input.
pub fn parse_solution_csv(text: &str) -> Result<ParsedSolution> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty solution file".into()))?;
    let has_t = match header {
        "x,u_pred,u_exact,abs_err" => false,
        "x,t,u_pred,u_exact,abs_err" => true,
        other => {
            return Err(Error::InvalidInput(format!(
                "unexpected solution header `{other}`"
            )))
        }
    };
    let ncols = if has_t { 5 } else { 4 };
    let mut samples = Vec::new();
    let mut abs_err = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ncols {
            return Err(Error::InvalidInput(format!(
                "row {}: expected {ncols} fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("row {}: bad float `{s}`", lineno + 2)))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let (x, t, rest) = if has_t {
            (num(fields[0])?, Some(num(fields[1])?), &fields[2..])
        } else {
            (num(fields[0])?, None, &fields[1..])
        };
        samples.push(SolutionSample {
            x,
            t,
            u_pred: num(rest[0])?,
            u_exact: opt(rest[1])?,
        });
        abs_err.push(opt(rest[2])?);
    }
    Ok(ParsedSolution {
        has_t,
        samples,
        abs_err,
    })
}

/// Trace CSV columns, one row per logged iteration.
pub const TRACE_HEADER: &str =
    "iter,L_total,L_f,L_b,L_i,L_vm,L_sm,L_sdm,L_fm,L_reg,g_total,g_f,g_b,g_i,g_vm,g_sm";

/// Write the loss/gradient history recorded during training.
pub fn emit_trace_csv<W: Write>(mut w: W, trace: &Trace) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for e in &trace.entries {
        let b = &e.breakdown;
        let v = &b.values;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            e.iter,
            fmt_f64(v.total),
            fmt_f64(v.l_f),
            fmt_f64(v.l_b),
            fmt_f64(v.l_i),
            fmt_f64(v.l_vm),
            fmt_f64(v.l_sm),
            fmt_f64(v.l_sdm),
            fmt_f64(v.l_fm),
            fmt_f64(v.l_reg),
            fmt_f64(b.g_total),
            fmt_f64(b.g_f),
            fmt_f64(b.g_b),
            fmt_f64(b.g_i),
            fmt_f64(b.g_vm),
            fmt_f64(b.g_sm),
        )?;
    }
    Ok(())
}

/// Write the classical baselines side by side:
/// `x,u_exact,u_cds,u_uds,u_cds_ad`.
pub fn emit_baseline_csv<W: Write>(
    mut w: W,
    problem: &SteadyAdvDiff,
    cds: &FDSolution,
    uds: &FDSolution,
    cds_ad: &FDSolution,
) -> Result<()> {
    writeln!(w, "x,u_exact,u_cds,u_uds,u_cds_ad")?;
    for (k, &x) in cds.grid.iter().enumerate() {
        let exact = crate::problems::exact_steady(problem, x)?;
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(x),
            fmt_f64(exact),
            fmt_f64(cds.values[k]),
            fmt_f64(uds.values[k]),
            fmt_f64(cds_ad.values[k]),
        )?;
    }
    Ok(())
}
