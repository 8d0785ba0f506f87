//! Matrix file formats shared by every tool in the workspace.
//!
//! Text: a header line `# rows cols` followed by `rows` lines of `cols`
//! comma-separated values in row-major order. Values are written with the
//! shortest representation that parses back to the same `f64`.
//!
//! Binary: the magic bytes `OTMT`, a `u32` format version, `u64` rows and
//! `u64` cols, then `rows * cols` little-endian `f64` values in row-major
//! order.
//!
//! Vectors are stored as single-column matrices.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OTMT";
pub const VERSION: u32 = 1;

/// On-disk encoding of a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.bin` and `.otmt` select the binary format, anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("otmt") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn write_csv<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&m[(i, j)].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R, origin: &str) -> Result<DMatrix<f64>> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let (rows, cols) = loop {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing `# rows cols` header"))?;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rest = trimmed
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(origin, idx + 1, "expected `# rows cols` header"))?;
        let dims: Vec<&str> = rest.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(Error::parse(origin, idx + 1, "header must contain two integers"));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(origin, idx + 1, format!("invalid dimension `{s}`")))
        };
        break (parse_dim(dims[0])?, parse_dim(dims[1])?);
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if seen_rows == rows {
            return Err(Error::parse(origin, idx + 1, format!("more than {rows} data rows")));
        }
        let before = data.len();
        for field in line.split(',') {
            let field = field.trim();
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::parse(origin, idx + 1, format!("invalid number `{field}`")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                origin,
                idx + 1,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::parse(
            origin,
            seen_rows + 1,
            format!("expected {rows} data rows, found {seen_rows}"),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_binary<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R, origin: &str) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 24];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::parse(origin, 0, "truncated binary header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::parse(origin, 0, "bad magic bytes, expected OTMT"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::parse(origin, 0, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(origin, 0, "dimensions overflow"))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != len * 8 {
        return Err(Error::parse(
            origin,
            0,
            format!("payload has {} bytes, expected {}", payload.len(), len * 8),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Writes `m` using the format implied by the file extension.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = fs::File::create(path)?;
    let out = std::io::BufWriter::new(file);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => write_csv(out, m),
        MatrixFormat::Binary => write_binary(out, m),
    }
}

/// Reads a matrix, detecting the binary format from its magic bytes.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let origin = path.display().to_string();
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice(), &origin)
    } else {
        read_csv(bytes.as_slice(), &origin)
    }
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::Shape(format!(
            "{}: expected a single column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}
