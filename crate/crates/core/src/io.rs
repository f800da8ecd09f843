//! CSV and raw binary outputs, with readers for round-trip checks.
//!
//! Floats are written in Rust's shortest round-trip form (`{:?}`), so parsing
//! a written file reproduces every value bit for bit. Lines end in `\n`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{BubbleReport, BubbleSample, ConvergenceRow};
use crate::grid::{CellField, Domain2D};
use crate::stepping::StepRow;

pub const TIMESERIES_HEADER: &str = "step,t,tau,sup_norm,energy,pred_iters,corr_iters,mbp_margin";
pub const CONVERGENCE_HEADER: &str = "n_steps,max_ratio,err_h1,err_sup,order_h1,order_sup";
pub const BUBBLE_HEADER: &str = "t,measured_radius,predicted_radius";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad {what} `{s}`"),
    })
}

fn split_row(line: &str, line_no: usize, width: usize) -> Result<Vec<&str>> {
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != width {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected {width} columns, found {}", cols.len()),
        });
    }
    Ok(cols)
}

fn expect_header(lines: &mut impl Iterator<Item = std::io::Result<String>>, header: &str) -> Result<()> {
    match lines.next().transpose()? {
        Some(line) if line == header => Ok(()),
        _ => Err(Error::Parse {
            line: 1,
            reason: format!("expected header `{header}`"),
        }),
    }
}

pub fn write_timeseries_to(rows: &[StepRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{},{},{:?}",
            r.step, r.t, r.tau, r.sup_norm, r.energy, r.pred_iters, r.corr_iters, r.mbp_margin
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV row per step record.
pub fn write_timeseries(rows: &[StepRow], path: &Path) -> Result<()> {
    write_timeseries_to(rows, create(path)?)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<StepRow>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    expect_header(&mut lines, TIMESERIES_HEADER)?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let n = idx + 2;
        let c = split_row(&line, n, 8)?;
        rows.push(StepRow {
            step: parse_field(c[0], n, "step")?,
            t: parse_field(c[1], n, "t")?,
            tau: parse_field(c[2], n, "tau")?,
            sup_norm: parse_field(c[3], n, "sup_norm")?,
            energy: parse_field(c[4], n, "energy")?,
            pred_iters: parse_field(c[5], n, "pred_iters")?,
            corr_iters: parse_field(c[6], n, "corr_iters")?,
            mbp_margin: parse_field(c[7], n, "mbp_margin")?,
        });
    }
    Ok(rows)
}

/// Writes the field as an `M x M` CSV matrix after `# t=`, `# M=`, `# h=` lines.
pub fn write_snapshot(state: &CellField, t: f64, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let d = state.domain();
    writeln!(w, "# t={t:?}")?;
    writeln!(w, "# M={}", d.cells())?;
    writeln!(w, "# h={:?}", d.spacing())?;
    for row in state.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v:?}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot back as `(t, field)`. The domain has origin 0 and the
/// recorded spacing.
pub fn read_snapshot(path: &Path) -> Result<(f64, CellField)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let mut header = |prefix: &str, line_no: usize| -> Result<String> {
        let line = lines.next().transpose()?.unwrap_or_default();
        line.strip_prefix(prefix).map(str::to_string).ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("expected `{prefix}<value>`"),
        })
    };
    let t: f64 = parse_field(&header("# t=", 1)?, 1, "t")?;
    let m: usize = parse_field(&header("# M=", 2)?, 2, "M")?;
    let h: f64 = parse_field(&header("# h=", 3)?, 3, "h")?;
    let domain = Domain2D::from_spacing(m, h)?;
    let mut values = Vec::with_capacity(m * m);
    let mut rows = 0;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let n = idx + 4;
        for c in split_row(&line, n, m)? {
            values.push(parse_field(c, n, "value")?);
        }
        rows += 1;
    }
    if rows != m {
        return Err(Error::Parse {
            line: rows + 4,
            reason: format!("expected {m} rows, found {rows}"),
        });
    }
    Ok((t, CellField::from_vec(domain, values)?))
}

/// Raw little-endian `f64` values in row-major order, no header.
pub fn write_snapshot_binary(state: &CellField, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for v in state.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_binary(domain: Domain2D, path: &Path) -> Result<CellField> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * domain.len() {
        return Err(Error::ShapeMismatch {
            expected: domain.len(),
            found: bytes.len() / 8,
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect();
    CellField::from_vec(domain, values)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, line, what).map(Some)
    }
}

/// Convergence table; orders are empty on the first row.
pub fn write_convergence(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{},{}",
            r.n_steps,
            r.max_ratio,
            r.err_h1,
            r.err_sup,
            opt(r.order_h1),
            opt(r.order_sup)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    expect_header(&mut lines, CONVERGENCE_HEADER)?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let n = idx + 2;
        let c = split_row(&line, n, 6)?;
        rows.push(ConvergenceRow {
            n_steps: parse_field(c[0], n, "n_steps")?,
            max_ratio: parse_field(c[1], n, "max_ratio")?,
            err_h1: parse_field(c[2], n, "err_h1")?,
            err_sup: parse_field(c[3], n, "err_sup")?,
            order_h1: parse_opt(c[4], n, "order_h1")?,
            order_sup: parse_opt(c[5], n, "order_sup")?,
        });
    }
    Ok(rows)
}

/// Radius series; the prediction is empty once the bubble should have vanished.
pub fn write_bubble(report: &BubbleReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{BUBBLE_HEADER}")?;
    for s in &report.samples {
        writeln!(w, "{:?},{:?},{}", s.t, s.measured, opt(s.predicted))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bubble(path: &Path) -> Result<Vec<BubbleSample>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    expect_header(&mut lines, BUBBLE_HEADER)?;
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let n = idx + 2;
        let c = split_row(&line, n, 3)?;
        out.push(BubbleSample {
            t: parse_field(c[0], n, "t")?,
            measured: parse_field(c[1], n, "measured_radius")?,
            predicted: parse_opt(c[2], n, "predicted_radius")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::init_bubble;

    fn row(step: usize) -> StepRow {
        StepRow {
            step,
            t: 0.1 * step as f64,
            tau: 0.1,
            sup_norm: 1.0 / 3.0,
            energy: -2.5e-17,
            pred_iters: 4,
            corr_iters: 7,
            mbp_margin: 2.0 / 3.0,
        }
    }

    #[test]
    fn empty_timeseries_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write_timeseries(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{TIMESERIES_HEADER}\n"));
        assert!(read_timeseries(&p).unwrap().is_empty());
    }

    #[test]
    fn timeseries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        let rows: Vec<StepRow> = (0..3).map(row).collect();
        write_timeseries(&rows, &p).unwrap();
        assert_eq!(read_timeseries(&p).unwrap(), rows);
        assert!(!std::fs::read(&p).unwrap().contains(&b'\r'));
    }

    #[test]
    fn snapshot_round_trip_and_alphabet() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.csv");
        let d = Domain2D::unit(8).unwrap();
        let u = CellField::from_fn(d, |x, y| (x * 7.1).sin() * y.exp() / 3.0);
        write_snapshot(&u, 0.25, &p).unwrap();
        let (t, v) = read_snapshot(&p).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(v, u);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# t=0.25\n# M=8\n# h=0.125\n"));

        let b = init_bubble(Domain2D::unit(16).unwrap(), 0.3).unwrap();
        write_snapshot(&b, 0.0, &p).unwrap();
        let body: Vec<&str> = std::fs::read_to_string(&p)
            .unwrap()
            .lines()
            .skip(3)
            .flat_map(|l| l.split(',').map(str::to_owned).collect::<Vec<_>>())
            .map(|s| if s == "1.0" { "1.0" } else if s == "-1.0" { "-1.0" } else { "other" })
            .collect();
        assert!(body.iter().all(|s| *s != "other"));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.bin");
        let d = Domain2D::unit(5).unwrap();
        let u = CellField::from_fn(d, |x, y| x - y * 1e-300);
        write_snapshot_binary(&u, &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 200);
        assert_eq!(read_snapshot_binary(d, &p).unwrap(), u);
        assert!(read_snapshot_binary(Domain2D::unit(4).unwrap(), &p).is_err());
    }

    #[test]
    fn convergence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("conv.csv");
        let rows = vec![
            ConvergenceRow {
                n_steps: 10,
                max_ratio: 1.0,
                err_h1: 1e-3,
                err_sup: 2e-3,
                order_h1: None,
                order_sup: None,
            },
            ConvergenceRow {
                n_steps: 20,
                max_ratio: 1.7,
                err_h1: 2.4e-4,
                err_sup: 5.1e-4,
                order_h1: Some(2.05),
                order_sup: Some(1.97),
            },
        ];
        write_convergence(&rows, &p).unwrap();
        assert_eq!(read_convergence(&p).unwrap(), rows);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "step,t\n").unwrap();
        assert!(read_timeseries(&p).is_err());
        std::fs::write(&p, format!("{TIMESERIES_HEADER}\n1,2,3\n")).unwrap();
        assert!(matches!(read_timeseries(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "# t=0\n# M=2\n# h=0.5\n1.0,2.0\n").unwrap();
        assert!(read_snapshot(&p).is_err());
    }
}
