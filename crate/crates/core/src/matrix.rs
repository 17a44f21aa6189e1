//! Sparse term-document counts and the dense-factor helpers shared by every
//! solver.
//!
//! `X` is stored column-compressed by document. All solvers only ever need
//! `(WH)_vd` at the nonzeros of `X` plus the column totals `Σ_v (WH)_vd`, and
//! the latter has a closed form (`Σ_k h_kd` when `W` is column-normalized), so
//! the full `V×D` product is never formed.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::par::map_indices;

/// Non-negative `V×D` count matrix, compressed by document.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocMatrix {
    n_terms: usize,
    n_docs: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
    col_sums: Vec<f64>,
}

impl TermDocMatrix {
    /// Builds the matrix from `(term, doc, count)` triplets in any order.
    ///
    /// Zero counts are dropped after duplicate detection, so a file listing
    /// `(v, d, 0)` twice is still rejected.
    pub fn from_triplets(
        n_terms: usize,
        n_docs: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n_terms == 0 || n_docs == 0 {
            return Err(Error::DimensionMismatch(format!(
                "term-document matrix must be non-empty, got {n_terms}x{n_docs}"
            )));
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (v, d, x) in triplets {
            if v >= n_terms {
                return Err(Error::IndexOutOfRange {
                    what: "term",
                    index: v,
                    bound: n_terms,
                });
            }
            if d >= n_docs {
                return Err(Error::IndexOutOfRange {
                    what: "doc",
                    index: d,
                    bound: n_docs,
                });
            }
            if !x.is_finite() {
                return Err(Error::NonFinite { row: v, col: d });
            }
            if x < 0.0 {
                return Err(Error::NegativeCount { v, d, value: x });
            }
            entries.push((v, d, x));
        }
        entries.sort_by_key(|&(v, d, _)| (d, v));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateEntry {
                    v: pair[0].0,
                    d: pair[0].1,
                });
            }
        }
        entries.retain(|&(_, _, x)| x > 0.0);

        let mut col_ptr = vec![0usize; n_docs + 1];
        for &(_, d, _) in &entries {
            col_ptr[d + 1] += 1;
        }
        for d in 0..n_docs {
            col_ptr[d + 1] += col_ptr[d];
        }
        let rows: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let values: Vec<f64> = entries.iter().map(|e| e.2).collect();
        let mut m = TermDocMatrix {
            n_terms,
            n_docs,
            col_ptr,
            rows,
            values,
            col_sums: Vec::new(),
        };
        m.col_sums = m.recompute_col_sums();
        Ok(m)
    }

    /// Builds the matrix from a dense `V×D` array.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let (v, d) = dense.dim();
        Self::from_triplets(
            v,
            d,
            dense.indexed_iter().map(|((i, j), &x)| (i, j, x)),
        )
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Number of stored (strictly positive) counts.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Term indices and counts of document `d`, terms ascending.
    pub fn doc(&self, d: usize) -> (&[usize], &[f64]) {
        let span = self.col_ptr[d]..self.col_ptr[d + 1];
        (&self.rows[span.clone()], &self.values[span])
    }

    pub(crate) fn doc_span(&self, d: usize) -> std::ops::Range<usize> {
        self.col_ptr[d]..self.col_ptr[d + 1]
    }

    pub(crate) fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    /// All stored entries as `(term, doc, count)`, document-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_docs).flat_map(move |d| {
            let span = self.doc_span(d);
            self.rows[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(move |(&v, &x)| (v, d, x))
        })
    }

    /// Cached per-document totals `λ_d = Σ_v x_vd`.
    pub fn col_sums(&self) -> &[f64] {
        &self.col_sums
    }

    /// Per-term totals `Σ_d x_vd`.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_terms];
        for (v, _, x) in self.entries() {
            sums[v] += x;
        }
        sums
    }

    /// `Σ_{v,d} x_vd`.
    pub fn total(&self) -> f64 {
        self.col_sums.iter().sum()
    }

    pub fn get(&self, v: usize, d: usize) -> f64 {
        let (rows, vals) = self.doc(d);
        match rows.binary_search(&v) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_terms, self.n_docs));
        for (v, d, x) in self.entries() {
            out[[v, d]] = x;
        }
        out
    }

    /// Documents whose counts are all zero.
    pub fn empty_docs(&self) -> Vec<usize> {
        (0..self.n_docs)
            .filter(|&d| self.col_ptr[d] == self.col_ptr[d + 1])
            .collect()
    }

    fn recompute_col_sums(&self) -> Vec<f64> {
        (0..self.n_docs)
            .map(|d| self.values[self.doc_span(d)].iter().sum())
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn col_sums_consistent(&self) -> bool {
        self.recompute_col_sums() == self.col_sums
    }
}

/// `(WH)_vd = Σ_k w_vk h_kd` for a single cell.
pub fn reconstruct_at(w: &Array2<f64>, h: &Array2<f64>, v: usize, d: usize) -> Result<f64> {
    check_inner(w, h)?;
    if v >= w.nrows() {
        return Err(Error::IndexOutOfRange {
            what: "term",
            index: v,
            bound: w.nrows(),
        });
    }
    if d >= h.ncols() {
        return Err(Error::IndexOutOfRange {
            what: "doc",
            index: d,
            bound: h.ncols(),
        });
    }
    Ok(dot_seq(w.row(v), h.column(d)))
}

/// Inner product summed strictly left to right over `k`.
pub(crate) fn dot_seq(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Exact per-column sums, accumulated in row order.
pub fn column_sums(m: &Array2<f64>) -> Vec<f64> {
    let mut sums = vec![0.0; m.ncols()];
    for row in m.rows() {
        for (s, &x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    sums
}

/// Per-row sums, accumulated in column order.
pub fn row_sums(m: &Array2<f64>) -> Vec<f64> {
    m.rows().into_iter().map(|r| r.iter().sum()).collect()
}

/// Scales every column to sum to one; returns the normalized matrix and the
/// original column sums, so that `normalized · diag(scales) = m`.
pub fn normalize_columns(m: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let scales = column_sums(m);
    if let Some(k) = scales.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateColumn(k));
    }
    let mut out = m.clone();
    for (mut col, &s) in out.columns_mut().into_iter().zip(&scales) {
        col.mapv_inplace(|x| x / s);
    }
    Ok((out, scales))
}

pub(crate) fn check_inner(w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    if w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns but H has {} rows",
            w.ncols(),
            h.nrows()
        )));
    }
    Ok(())
}

pub(crate) fn check_factor_shapes(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    check_inner(w, h)?;
    if w.nrows() != x.n_terms() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} rows but X has {} terms",
            w.nrows(),
            x.n_terms()
        )));
    }
    if h.ncols() != x.n_docs() {
        return Err(Error::DimensionMismatch(format!(
            "H has {} columns but X has {} documents",
            h.ncols(),
            x.n_docs()
        )));
    }
    Ok(())
}

/// `(WH)_vd` at every stored entry of `X`, aligned with its internal order.
///
/// One call is one full reconstruction evaluation in the solvers' accounting.
pub fn reconstruct_nonzeros(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<Vec<f64>> {
    check_factor_shapes(x, w, h)?;
    let per_doc = map_indices(x.n_docs(), |d| {
        let hd = h.column(d);
        x.doc(d)
            .0
            .iter()
            .map(|&v| dot_seq(w.row(v), hd))
            .collect::<Vec<f64>>()
    });
    Ok(per_doc.concat())
}

/// `Σ_{v,d} (WH)_vd` without forming the product: `Σ_k (Σ_v w_vk)(Σ_d h_kd)`.
pub fn reconstruction_total(w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let wk = column_sums(w);
    let hk = row_sums(h);
    wk.iter().zip(&hk).map(|(a, b)| a * b).sum()
}

/// `Σ_v (WH)_vd` for every document, again without forming the product.
pub fn reconstruction_col_sums(w: &Array2<f64>, h: &Array2<f64>) -> Vec<f64> {
    let wk = column_sums(w);
    (0..h.ncols())
        .map(|d| h.column(d).iter().zip(&wk).map(|(a, b)| a * b).sum())
        .collect()
}
