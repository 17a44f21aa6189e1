//! Kernels shared by the multiplicative and variational steppers.
//!
//! Reduction order is fixed: topic numerators accumulate documents in
//! ascending order (terms ascending within a document), document numerators
//! accumulate terms in ascending order. Parallelism is only across the
//! independent output index (topic or document).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::TermDocMatrix;
use crate::par::map_indices;

/// `x_vd / (WH)_vd` at every nonzero.
pub(crate) fn ratios(x: &TermDocMatrix, recon: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(recon.len());
    for d in 0..x.n_docs() {
        for i in x.doc_span(d) {
            let r = recon[i];
            if !(r > 0.0) {
                return Err(Error::InfiniteDivergence { v: x.rows()[i], d });
            }
            out.push(x.values()[i] / r);
        }
    }
    Ok(out)
}

/// `S[v,k] = Σ_d ratio_vd · h_kd` (V×K).
pub(crate) fn topic_numerators(x: &TermDocMatrix, ratio: &[f64], h: &Array2<f64>) -> Array2<f64> {
    let n_terms = x.n_terms();
    let k = h.nrows();
    let cols = map_indices(k, |t| {
        let mut col = vec![0.0; n_terms];
        for d in 0..x.n_docs() {
            let htd = h[[t, d]];
            for i in x.doc_span(d) {
                col[x.rows()[i]] += ratio[i] * htd;
            }
        }
        col
    });
    Array2::from_shape_fn((n_terms, k), |(v, t)| cols[t][v])
}

/// `S[k,d] = Σ_v ratio_vd · w_vk` (K×D).
pub(crate) fn doc_numerators(x: &TermDocMatrix, ratio: &[f64], w: &Array2<f64>) -> Array2<f64> {
    let k = w.ncols();
    let cols = map_indices(x.n_docs(), |d| {
        let mut col = vec![0.0; k];
        for i in x.doc_span(d) {
            let r = ratio[i];
            for (c, &wv) in col.iter_mut().zip(w.row(x.rows()[i])) {
                *c += r * wv;
            }
        }
        col
    });
    Array2::from_shape_fn((k, x.n_docs()), |(t, d)| cols[d][t])
}

/// Raises every entry to at least `eps · (column max)`, then rescales the
/// column back to its original sum. A column that needed no lifting is left
/// untouched bit for bit.
pub(crate) fn floor_columns(m: &mut Array2<f64>, eps: f64) {
    if eps <= 0.0 {
        return;
    }
    for mut col in m.columns_mut() {
        let max = col.iter().copied().fold(0.0, f64::max);
        let lo = eps * max;
        if !col.iter().any(|&x| x < lo) {
            continue;
        }
        let before: f64 = col.sum();
        col.mapv_inplace(|x| x.max(lo));
        let after: f64 = col.sum();
        col.mapv_inplace(|x| x * (before / after));
    }
}

/// Normalizes columns in place; a zero column is a dead topic.
pub(crate) fn normalize_topics(w: &mut Array2<f64>) -> Result<()> {
    for (k, mut col) in w.columns_mut().into_iter().enumerate() {
        let s: f64 = col.sum();
        if !(s > 0.0) {
            return Err(Error::DeadTopic(k));
        }
        col.mapv_inplace(|x| x / s);
    }
    Ok(())
}

/// Normalizes columns in place; a zero column is an empty document.
pub(crate) fn normalize_docs(h: &mut Array2<f64>) -> Result<()> {
    for (d, mut col) in h.columns_mut().into_iter().enumerate() {
        let s: f64 = col.sum();
        if !(s > 0.0) {
            return Err(Error::EmptyDocument(d));
        }
        col.mapv_inplace(|x| x / s);
    }
    Ok(())
}

/// Largest absolute entrywise difference.
pub(crate) fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
