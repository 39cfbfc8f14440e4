//! Plain-text field dumps.
//!
//! ```text
//! # wavefield nx=<nx> nt=<nt> dx=<dx> dt=<dt> T=<T> l1=<l1> l2=<l2>
//! <nx values of level 0>
//! ...
//! <nx values of level nt>
//! ```
//!
//! Values are written in Rust's shortest round-trip scientific notation, so a
//! dump reads back bit-identically.

use crate::field::SpaceTimeField;
use crate::grid::Grid;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> DumpError {
    DumpError::Format {
        line,
        message: message.into(),
    }
}

pub fn header(grid: &Grid) -> String {
    let (l1, l2) = grid.omega();
    format!(
        "# wavefield nx={} nt={} dx={:e} dt={:e} T={:e} l1={:e} l2={:e}",
        grid.nx(),
        grid.nt(),
        grid.dx(),
        grid.dt(),
        grid.horizon(),
        l1,
        l2
    )
}

pub fn write_field<W: Write>(mut w: W, field: &SpaceTimeField) -> io::Result<()> {
    writeln!(w, "{}", header(field.grid()))?;
    let mut line = String::new();
    for row in field.levels() {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{v:e}").expect("writing to a String");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn field_to_string(field: &SpaceTimeField) -> String {
    let mut buf = Vec::new();
    write_field(&mut buf, field).expect("writing to a Vec");
    String::from_utf8(buf).expect("dump is ASCII")
}

pub fn read_field<R: BufRead>(r: R) -> Result<SpaceTimeField, DumpError> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let grid = parse_header(&head)?;
    let mut values = Vec::with_capacity((grid.nt() + 1) * grid.nx());
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format_err(lineno, format!("bad number `{tok}`")))?;
            values.push(v);
        }
        if values.len() - before != grid.nx() {
            return Err(format_err(
                lineno,
                format!("expected {} values, found {}", grid.nx(), values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != grid.nt() + 1 {
        return Err(format_err(
            rows + 2,
            format!("expected {} levels, found {rows}", grid.nt() + 1),
        ));
    }
    Ok(SpaceTimeField::from_values(&grid, values).expect("length checked"))
}

fn parse_header(line: &str) -> Result<Grid, DumpError> {
    let rest = line
        .strip_prefix("# wavefield")
        .ok_or_else(|| format_err(1, "missing `# wavefield` header"))?;
    let mut nx = None;
    let mut nt = None;
    let mut dt = None;
    let mut horizon = None;
    let mut l1 = None;
    let mut l2 = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format_err(1, format!("malformed header entry `{kv}`")))?;
        let num = |v: &str| -> Result<f64, DumpError> {
            v.parse()
                .map_err(|_| format_err(1, format!("bad value for {k}: `{v}`")))
        };
        match k {
            "nx" => nx = Some(v.parse::<usize>().map_err(|_| format_err(1, "bad nx"))?),
            "nt" => nt = Some(v.parse::<usize>().map_err(|_| format_err(1, "bad nt"))?),
            "dx" => {
                num(v)?;
            }
            "dt" => dt = Some(num(v)?),
            "T" => horizon = Some(num(v)?),
            "l1" => l1 = Some(num(v)?),
            "l2" => l2 = Some(num(v)?),
            other => return Err(format_err(1, format!("unknown header key `{other}`"))),
        }
    }
    let missing = |name: &str| format_err(1, format!("header lacks `{name}`"));
    let nx = nx.ok_or_else(|| missing("nx"))?;
    let nt = nt.ok_or_else(|| missing("nt"))?;
    let grid = Grid::with_dt(
        nx,
        horizon.ok_or_else(|| missing("T"))?,
        l1.ok_or_else(|| missing("l1"))?,
        l2.ok_or_else(|| missing("l2"))?,
        dt.ok_or_else(|| missing("dt"))?,
    )
    .map_err(|e| format_err(1, e.to_string()))?;
    if grid.nt() != nt {
        return Err(format_err(
            1,
            format!("nt = {nt} inconsistent with T/dt (gives {})", grid.nt()),
        ));
    }
    Ok(grid)
}
