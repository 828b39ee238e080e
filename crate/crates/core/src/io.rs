//! Matrix Market and plain-text vector I/O.
//!
//! Values are serialized with the shortest decimal representation that
//! round-trips to the same binary64, so export/import cycles are lossless
//! and re-serialization is byte-stable.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::vector::DenseVector;

/// Shortest round-trip decimal form of `x` (scientific notation).
pub fn fmt_shortest(x: f64) -> String {
    format!("{x:e}")
}

/// Writes `a` in Matrix Market coordinate/real/general format (1-based).
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, w: &mut W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(w, "{} {} {}", r + 1, c + 1, fmt_shortest(v))?;
    }
    Ok(())
}

/// Reads a Matrix Market coordinate/real matrix; `general` and `symmetric`
/// storage are accepted (symmetric entries are mirrored).
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
    let mut lines = r.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(Error::from)?,
        None => return Err(parse_err(1, "empty file")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5
        || !fields[0].eq_ignore_ascii_case("%%MatrixMarket")
        || !fields[1].eq_ignore_ascii_case("matrix")
        || !fields[2].eq_ignore_ascii_case("coordinate")
        || !fields[3].eq_ignore_ascii_case("real")
    {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix coordinate real <symmetry>'"));
    }
    let symmetric = match fields[4].to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, &format!("unsupported symmetry {other:?}"))),
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut parsed = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(Error::from)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        if dims.is_none() {
            let rows = parse_field::<usize>(&mut parts, line_no, "rows")?;
            let cols = parse_field::<usize>(&mut parts, line_no, "cols")?;
            let nnz = parse_field::<usize>(&mut parts, line_no, "nnz")?;
            dims = Some((rows, cols, nnz));
            triplets.reserve(nnz);
            continue;
        }
        let r = parse_field::<usize>(&mut parts, line_no, "row index")?;
        let c = parse_field::<usize>(&mut parts, line_no, "col index")?;
        let v = parse_field::<f64>(&mut parts, line_no, "value")?;
        if r == 0 || c == 0 {
            return Err(parse_err(line_no, "indices are 1-based"));
        }
        parsed += 1;
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
    }

    let (rows, cols, nnz) = dims.ok_or_else(|| parse_err(0, "missing size line"))?;
    if parsed != nnz {
        return Err(parse_err(
            0,
            &format!("size line promised {nnz} entries, found {parsed}"),
        ));
    }
    CsrMatrix::from_triplets(rows, cols, triplets)
}

/// Writes one value per line.
pub fn write_vector_text<W: Write>(v: &DenseVector, w: &mut W) -> Result<()> {
    for &x in v.iter() {
        writeln!(w, "{}", fmt_shortest(x))?;
    }
    Ok(())
}

/// Reads one value per line; blank lines and `#` comments are skipped.
pub fn read_vector_text<R: BufRead>(r: R) -> Result<DenseVector> {
    let mut values = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(Error::from)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let v: f64 = trimmed
            .parse()
            .map_err(|e| parse_err(idx + 1, &format!("bad value {trimmed:?}: {e}")))?;
        values.push(v);
    }
    Ok(DenseVector::from_vec(values))
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(
    parts: &mut std::str::SplitWhitespace<'_>,
    line: usize,
    what: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = parts
        .next()
        .ok_or_else(|| parse_err(line, &format!("missing {what}")))?;
    raw.parse()
        .map_err(|e| parse_err(line, &format!("bad {what} {raw:?}: {e}")))
}
