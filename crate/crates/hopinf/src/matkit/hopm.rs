use super::{DenseMatrix, MatError};
use std::fs;
use std::path::Path;

/// Write a matrix in the HOPM1 text format:
///
/// ```text
/// HOPM1 <rows> <cols>
/// # optional comment/header lines
/// v11 v12 ... v1c
/// ...
/// ```
///
/// Values are written with 17 significant digits so that reading the file
/// back reproduces every f64 bit-exactly.
pub fn write_hopm(path: &Path, m: &DenseMatrix) -> Result<(), MatError> {
    write_hopm_with_header(path, m, &[])
}

/// Like `write_hopm` with `# `-prefixed header lines placed after line 1.
/// Header strings must not contain newlines.
pub fn write_hopm_with_header(
    path: &Path,
    m: &DenseMatrix,
    header: &[String],
) -> Result<(), MatError> {
    let mut out = String::new();
    out.push_str(&format!("HOPM1 {} {}\n", m.rows(), m.cols()));
    for h in header {
        debug_assert!(!h.contains('\n'));
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut line = String::with_capacity(row.len() * 25);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a HOPM1 matrix, ignoring `#` comment lines.
pub fn read_hopm(path: &Path) -> Result<DenseMatrix, MatError> {
    read_hopm_with_header(path).map(|(m, _)| m)
}

/// Read a HOPM1 matrix along with any `#` comment lines (prefix stripped).
pub fn read_hopm_with_header(path: &Path) -> Result<(DenseMatrix, Vec<String>), MatError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (first_no, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some("HOPM1") {
        return Err(parse_err(path, first_no + 1, "expected HOPM1 magic"));
    }
    let rows: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, first_no + 1, "bad row count"))?;
    let cols: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, first_no + 1, "bad column count"))?;
    if parts.next().is_some() {
        return Err(parse_err(path, first_no + 1, "trailing tokens after header"));
    }

    let mut header = Vec::new();
    let mut values = Vec::with_capacity(rows * cols);
    let mut data_rows = 0usize;
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            header.push(rest.trim_start().to_string());
            continue;
        }
        let mut count = 0usize;
        for tok in trimmed.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, no + 1, &format!("bad number {tok:?}")))?;
            values.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(path, no + 1, &format!("expected {cols} values, got {count}")));
        }
        data_rows += 1;
    }
    if data_rows != rows {
        return Err(parse_err(path, 0, &format!("expected {rows} data rows, got {data_rows}")));
    }
    Ok((DenseMatrix::new(rows, cols, values)?, header))
}

fn io_err(path: &Path, e: std::io::Error) -> MatError {
    MatError::Io { path: path.display().to_string(), msg: e.to_string() }
}

fn parse_err(path: &Path, line: usize, msg: &str) -> MatError {
    MatError::Parse { path: path.display().to_string(), line, msg: msg.to_string() }
}
