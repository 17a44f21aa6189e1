//! MatrixMarket coordinate files (`real general`, 1-indexed, terms × documents).
//!
//! Writing emits entries in document-major order and formats values with
//! Rust's shortest round-trip representation, so `write ∘ parse` reproduces
//! any file this module wrote byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::TermDocMatrix;

pub const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn check_header(path: &str, line: &str) -> Result<()> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    let ok = words.len() == 5
        && words[0] == "%%matrixmarket"
        && words[1] == "matrix"
        && words[2] == "coordinate"
        && (words[3] == "real" || words[3] == "integer")
        && words[4] == "general";
    if ok {
        Ok(())
    } else {
        Err(parse_err(path, 1, format!("malformed header, expected `{HEADER}`")))
    }
}

fn parse_index(path: &str, line: usize, tok: &str, what: &str, bound: usize) -> Result<usize> {
    let i: usize = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} index `{tok}`")))?;
    if i == 0 || i > bound {
        return Err(parse_err(
            path,
            line,
            format!("{what} index {i} out of range 1..={bound}"),
        ));
    }
    Ok(i - 1)
}

/// Parses MatrixMarket text. `path` only labels error messages.
pub fn parse_matrix_market(text: &str, path: &str) -> Result<TermDocMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    check_header(path, header)?;

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, size_line, "size line must be `rows cols entries`"))?;
    let [n_terms, n_docs, nnz] = dims[..] else {
        return Err(parse_err(path, size_line, "size line must be `rows cols entries`"));
    };
    if n_terms == 0 || n_docs == 0 {
        return Err(parse_err(path, size_line, "matrix dimensions must be >= 1"));
    }

    let mut seen = std::collections::HashSet::with_capacity(nnz);
    let mut triplets = Vec::with_capacity(nnz);
    let mut count = 0usize;
    for (line, l) in body {
        count += 1;
        if count > nnz {
            return Err(parse_err(path, line, format!("more than the declared {nnz} entries")));
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, line, "entry must be `row col value`"));
        }
        let v = parse_index(path, line, toks[0], "row", n_terms)?;
        let d = parse_index(path, line, toks[1], "column", n_docs)?;
        let value: f64 = toks[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid value `{}`", toks[2])))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value at line {line}")));
        }
        if value < 0.0 {
            return Err(parse_err(path, line, format!("negative count at line {line}")));
        }
        if !seen.insert((v, d)) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate entry ({}, {}) at line {line}", v + 1, d + 1),
            ));
        }
        triplets.push((v, d, value));
    }
    if count != nnz {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("declared {nnz} entries, found {count}"),
        ));
    }
    TermDocMatrix::from_triplets(n_terms, n_docs, triplets)
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<TermDocMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Serializes `x`, nonzeros only, document-major.
pub fn write_matrix_market(x: &TermDocMatrix) -> String {
    let mut out = String::with_capacity(64 + 24 * x.nnz());
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {} {}", x.n_terms(), x.n_docs(), x.nnz());
    for (v, d, value) in x.entries() {
        let _ = writeln!(out, "{} {} {}", v + 1, d + 1, value);
    }
    out
}

pub fn save_matrix_market(path: impl AsRef<Path>, x: &TermDocMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_matrix_market(x)).map_err(|e| Error::io(path, e))
}
