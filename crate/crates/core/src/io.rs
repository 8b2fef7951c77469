//! CSV input and output.
//!
//! * Curves: one curve per row, `d` numeric columns. With a grid header the
//!   first row holds the grid points and quadrature weights follow the
//!   trapezoid rule; otherwise the grid is the uniform midpoint grid.
//! * Labelled curves: a leading text column (class label or group id)
//!   followed by the `d` values.
//! * Operators: a `d × d` kernel matrix.
//!
//! Lines starting with `#` are ignored. Row numbers in errors are 1-based
//! line positions among the non-comment records.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::{CovOperator, Curve, Grid};
use crate::stats::{FunctionalSample, OperatorSample};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Csv(c) if c.is_io_error() => match c.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            _ => unreachable!("checked io kind"),
        },
        other => other,
    }
}

fn records<R: Read>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn parse_cell(row: usize, col: usize, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            col: col + 1,
            value: s.to_owned(),
        }),
    }
}

/// Numeric table with every row of equal width; `skip` leading text columns
/// are returned separately.
fn numeric_table(rows: &[Vec<String>], skip: usize) -> Result<(Vec<Vec<String>>, Vec<Vec<f64>>)> {
    if rows.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    let width = rows[0].len();
    if width <= skip {
        return Err(Error::Empty("rows have no numeric columns".into()));
    }
    let mut keys = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: width,
                found: r.len(),
            });
        }
        keys.push(r[..skip].to_vec());
        values.push(
            r[skip..]
                .iter()
                .enumerate()
                .map(|(j, s)| parse_cell(i + 1, j + skip, s))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((keys, values))
}

/// Grid from an optional header row, and the remaining data rows.
fn split_grid(mut values: Vec<Vec<f64>>, grid_header: bool) -> Result<(Arc<Grid>, Vec<Vec<f64>>)> {
    if grid_header {
        let points = values.remove(0);
        if values.is_empty() {
            return Err(Error::Empty("grid header but no curves".into()));
        }
        Ok((Arc::new(Grid::trapezoid(points)?), values))
    } else {
        let d = values[0].len();
        Ok((Arc::new(Grid::uniform(d)?), values))
    }
}

pub fn parse_curves<R: Read>(reader: R, grid_header: bool) -> Result<FunctionalSample> {
    let (_, values) = numeric_table(&records(reader)?, 0)?;
    let (grid, rows) = split_grid(values, grid_header)?;
    FunctionalSample::from_rows(grid, rows)
}

pub fn read_curves(path: impl AsRef<Path>, grid_header: bool) -> Result<FunctionalSample> {
    let path = path.as_ref();
    parse_curves(open(path)?, grid_header).map_err(|e| with_path(path, e))
}

/// Curves with a leading text key per row. A grid header row, if present,
/// has an ignored first cell.
pub fn parse_keyed_curves<R: Read>(reader: R, grid_header: bool) -> Result<Vec<(String, Curve)>> {
    let (keys, values) = numeric_table(&records(reader)?, 1)?;
    let keys: Vec<String> = keys.into_iter().skip(usize::from(grid_header)).map(|k| k[0].clone()).collect();
    let (grid, rows) = split_grid(values, grid_header)?;
    keys.into_iter()
        .zip(rows)
        .map(|(k, v)| Ok((k, Curve::new(grid.clone(), v)?)))
        .collect()
}

pub fn read_keyed_curves(path: impl AsRef<Path>, grid_header: bool) -> Result<Vec<(String, Curve)>> {
    let path = path.as_ref();
    parse_keyed_curves(open(path)?, grid_header).map_err(|e| with_path(path, e))
}

/// Groups keyed curves by key, in order of first appearance, as labelled
/// samples.
pub fn group_by_key(rows: Vec<(String, Curve)>) -> Result<Vec<FunctionalSample>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Curve>> = Vec::new();
    for (k, c) in rows {
        match order.iter().position(|o| *o == k) {
            Some(i) => groups[i].push(c),
            None => {
                order.push(k);
                groups.push(vec![c]);
            }
        }
    }
    order
        .into_iter()
        .zip(groups)
        .map(|(k, g)| Ok(FunctionalSample::new(g)?.with_label(k)))
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_rows<W: Write>(mut w: W, rows: impl Iterator<Item = Vec<String>>) -> std::io::Result<()> {
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()
}

pub fn write_curves_to<W: Write>(w: W, sample: &FunctionalSample, grid_header: bool) -> std::io::Result<()> {
    let header = grid_header.then(|| sample.grid().points().iter().map(|&x| fmt(x)).collect());
    let body = sample.curves().iter().map(|c| c.values().iter().map(|&x| fmt(x)).collect());
    write_rows(w, header.into_iter().chain(body))
}

pub fn write_curves(path: impl AsRef<Path>, sample: &FunctionalSample, grid_header: bool) -> Result<()> {
    let path = path.as_ref();
    write_curves_to(create(path)?, sample, grid_header).map_err(|e| Error::io(path, e))
}

pub fn write_keyed_curves(path: impl AsRef<Path>, rows: &[(String, Curve)]) -> Result<()> {
    let path = path.as_ref();
    let body = rows.iter().map(|(k, c)| {
        std::iter::once(k.clone())
            .chain(c.values().iter().map(|&x| fmt(x)))
            .collect()
    });
    write_rows(create(path)?, body).map_err(|e| Error::io(path, e))
}

/// `d × d` kernel on `grid`, or on the uniform grid of size `d`.
pub fn parse_operator<R: Read>(reader: R, grid: Option<Arc<Grid>>) -> Result<CovOperator> {
    let (_, values) = numeric_table(&records(reader)?, 0)?;
    let d = values.len();
    if values[0].len() != d {
        return Err(Error::InvalidArgument(format!(
            "operator matrix must be square, got {d} x {}",
            values[0].len()
        )));
    }
    let grid = match grid {
        Some(g) => g,
        None => Arc::new(Grid::uniform(d)?),
    };
    let flat: Vec<f64> = values.into_iter().flatten().collect();
    CovOperator::from_kernel(grid, DMatrix::from_row_slice(d, d, &flat))
}

pub fn read_operator(path: impl AsRef<Path>, grid: Option<Arc<Grid>>) -> Result<CovOperator> {
    let path = path.as_ref();
    parse_operator(open(path)?, grid).map_err(|e| with_path(path, e))
}

pub fn write_operator(path: impl AsRef<Path>, op: &CovOperator) -> Result<()> {
    let path = path.as_ref();
    let k = op.kernel();
    let rows = (0..k.nrows()).map(|i| (0..k.ncols()).map(|j| fmt(k[(i, j)])).collect());
    write_rows(create(path)?, rows).map_err(|e| Error::io(path, e))
}

/// Every `*.csv` in `dir`, sorted by file name, as one operator sample.
/// Ranks are unknown and recorded as the grid size.
pub fn read_operator_dir(dir: impl AsRef<Path>, grid: Option<Arc<Grid>>) -> Result<(Vec<PathBuf>, OperatorSample)> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no .csv files in {}", dir.display())));
    }
    let mut ops = Vec::with_capacity(paths.len());
    let mut grid = grid;
    for p in &paths {
        let op = read_operator(p, grid.clone())?;
        grid.get_or_insert_with(|| op.grid().clone());
        ops.push(op);
    }
    let ranks = vec![ops[0].dim(); ops.len()];
    Ok((paths, OperatorSample::new(ops, ranks)?))
}
