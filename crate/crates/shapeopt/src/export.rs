//! Output files. Floating-point values in summaries and logs are rounded to
//! 12 significant digits so that repeated runs produce identical bytes.
//!
//! Sample grids are comma-separated with a one-line header, `n x n` uniform
//! points of the parameter square, `xi` running fastest:
//!
//! ```text
//! mapping_samples.csv  xi,eta,x,y,det_j
//! field_samples.csv    xi,eta,x,y,det_j,u
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use shapeopt_core::optimizer::IterationRecord;

/// Version of the output file formats.
pub const OUTPUT_SCHEMA: u32 = 1;

/// Points per direction of the exported sample grids.
pub const SAMPLES_PER_DIRECTION: usize = 101;

/// `x` rounded to 12 significant digits; non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn round_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| round12(x)).collect()
}

/// Text form of a float for delimited files.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let r = round12(x);
        if r == 0.0 || (1e-4..1e12).contains(&r.abs()) { format!("{r}") } else { format!("{r:e}") }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes rows of floats under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt12(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// One line per evaluation of the optimization history.
pub fn write_convergence_log(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let n = history.first().map_or(0, |r| r.alpha.len());
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<String> = [
        "evaluation",
        "iteration",
        "kind",
        "objective",
        "gradient_norm",
        "max_violation",
        "kkt",
        "step",
        "merit",
        "geometry_dofs",
        "state_dofs",
        "fold_rounds",
        "newton_iterations",
        "wall_time",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|j| format!("alpha_{j}")));
    header.push("message".into());
    w.write_record(&header)?;
    for (k, r) in history.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            r.iteration.to_string(),
            r.kind.as_str().to_string(),
            fmt12(r.objective),
            r.gradient_norm.map_or(String::new(), fmt12),
            fmt12(r.max_violation),
            r.kkt.map_or(String::new(), fmt12),
            fmt12(r.step),
            fmt12(r.merit),
            r.geometry_dofs.to_string(),
            r.state_dofs.to_string(),
            r.fold_rounds.to_string(),
            r.newton_iterations.to_string(),
            format!("{:.3}", r.wall_time),
        ];
        row.extend(r.alpha.iter().map(|&a| fmt12(a)));
        row.push(r.message.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(0.123456789012345), 0.123456789012);
        assert_eq!(round12(-98765.43210987654), -98765.4321099);
        assert_eq!(round12(1.0), 1.0);
        assert!(round12(f64::NAN).is_nan());
        assert_eq!(fmt12(2.5e-7), "2.5e-7");
        assert_eq!(fmt12(0.125), "0.125");
        assert_eq!(fmt12(f64::INFINITY), "inf");
    }
}
