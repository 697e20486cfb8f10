//! On-disk formats: space JSON, sparse triplets, data vectors and the CSV
//! outputs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use fpspeed_core::linalg::CsrMatrix;
use fpspeed_core::space::MetricMeasureSpace;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `{points, weights, coords}`; `coords` holds one coordinate vector per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub points: usize,
    pub weights: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

impl SpaceFile {
    pub fn from_space(space: &MetricMeasureSpace) -> Self {
        let n = space.len();
        SpaceFile {
            points: n,
            weights: space.weights().to_vec(),
            coords: (0..n).map(|x| space.coords(x).to_vec()).collect(),
        }
    }

    pub fn to_space(&self, fiber_dim: usize) -> Result<MetricMeasureSpace, CliError> {
        if self.weights.len() != self.points || self.coords.len() != self.points {
            return Err(CliError::config(format!(
                "space file: {} points but {} weights and {} coordinate rows",
                self.points,
                self.weights.len(),
                self.coords.len()
            )));
        }
        let dim = self.coords.first().map_or(0, Vec::len);
        if dim == 0 || self.coords.iter().any(|c| c.len() != dim) {
            return Err(CliError::config("space file: coordinate rows must share a positive length"));
        }
        let flat: Vec<f64> = self.coords.iter().flatten().copied().collect();
        Ok(MetricMeasureSpace::euclidean(dim, flat, self.weights.clone(), fiber_dim)?)
    }
}

pub fn read_space(path: &Path) -> Result<SpaceFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn write_space(path: &Path, space: &MetricMeasureSpace) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(&SpaceFile::from_space(space))?)?;
    Ok(())
}

/// One `row col re im` line per stored entry, after a `# rows cols` header.
pub fn write_triplets(path: &Path, m: &CsrMatrix) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    for (r, c, v) in m.triplets() {
        writeln!(out, "{r} {c} {} {}", v.re, v.im)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads triplets; without a header the shape is `n x n`.
pub fn read_triplets(path: &Path, n: usize) -> Result<CsrMatrix, CliError> {
    let bad = |line: usize, msg: &str| CliError::config(format!("{}:{line}: {msg}", path.display()));
    let file = fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let (mut rows, mut cols) = (n, n);
    let mut trip = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('#') {
            let dims: Vec<usize> = head.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            if let [r, c] = dims[..] {
                (rows, cols) = (r, c);
            }
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad(i + 1, "expected `row col re im`"));
        }
        let r: usize = f[0].parse().map_err(|_| bad(i + 1, "bad row index"))?;
        let c: usize = f[1].parse().map_err(|_| bad(i + 1, "bad column index"))?;
        let re: f64 = f[2].parse().map_err(|_| bad(i + 1, "bad real part"))?;
        let im: f64 = f[3].parse().map_err(|_| bad(i + 1, "bad imaginary part"))?;
        trip.push((r, c, Complex64::new(re, im)));
    }
    if rows != n || cols != n {
        return Err(CliError::config(format!("{}: matrix is {rows} x {cols}, expected {n} x {n}", path.display())));
    }
    if let Some(&(r, c, _)) = trip.iter().find(|(r, c, _)| *r >= n || *c >= n) {
        return Err(CliError::config(format!("{}: entry ({r}, {c}) outside {n} x {n}", path.display())));
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip))
}

/// One `re im` pair per line.
pub fn read_vector(path: &Path) -> Result<Vec<Complex64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| {
            CliError::config(format!("{}:{}: expected `re im`", path.display(), i + 1))
        })?;
        match f[..] {
            [re] => out.push(Complex64::new(re, 0.0)),
            [re, im] => out.push(Complex64::new(re, im)),
            _ => return Err(CliError::config(format!("{}:{}: expected `re im`", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,radius,cone_bound`.
pub fn write_propagation(path: &Path, times: &[f64], radii: &[f64], cone: &[f64]) -> Result<(), CliError> {
    let rows = (0..times.len()).map(|i| vec![times[i], radii[i], cone[i]]);
    write_csv(path, &["t", "radius", "cone_bound"], rows)
}

/// `t,norm,bound,ratio`.
pub fn write_group_bound(path: &Path, times: &[f64], norms: &[f64], bounds: &[f64]) -> Result<(), CliError> {
    let rows = (0..times.len()).map(|i| vec![times[i], norms[i], bounds[i], norms[i] / bounds[i]]);
    write_csv(path, &["t", "norm", "bound", "ratio"], rows)
}

/// `t,x,ReF,ImF` with `x` the point index (coordinates are in `space.json`).
pub fn write_solution(path: &Path, times: &[f64], f: &[Vec<Complex64>]) -> Result<(), CliError> {
    let rows = times
        .iter()
        .zip(f)
        .flat_map(|(&t, v)| v.iter().enumerate().map(move |(x, z)| vec![t, x as f64, z.re, z.im]));
    write_csv(path, &["t", "x", "ReF", "ImF"], rows)
}
