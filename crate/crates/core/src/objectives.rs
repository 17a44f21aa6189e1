//! Objective functions, likelihoods and variational bounds.
//!
//! Conventions:
//! * `0 · log 0 = 0`.
//! * Likelihood-style values drop terms that depend on `X` only (`Σ log x!`
//!   and the bag-of-words constant). `kl_divergence` is the full generalized
//!   KL and therefore includes `Σ x log x − x`.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::matrix::{check_factor_shapes, reconstruct_nonzeros, reconstruction_total, TermDocMatrix};
use crate::model::{check_simplex_columns, Priors, VariationalState};
use crate::specfun::{digamma_unchecked, log_gamma_unchecked};
use crate::vi::{expected_log_h_dirichlet, expected_log_h_gamma};

/// Generalized KL divergence `Σ x log(x / (WH)) − x + (WH)`.
pub fn kl_divergence(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    let recon = reconstruct_nonzeros(x, w, h)?;
    kl_from_recon(x, &recon, reconstruction_total(w, h))
}

/// KL given `(WH)` at the nonzeros of `X` and the grand total `Σ (WH)`.
pub(crate) fn kl_from_recon(x: &TermDocMatrix, recon: &[f64], total: f64) -> Result<f64> {
    let mut acc = 0.0;
    for d in 0..x.n_docs() {
        let span = x.doc_span(d);
        for i in span {
            let (v, xv, r) = (x.rows()[i], x.values()[i], recon[i]);
            if !(r > 0.0) {
                return Err(Error::InfiniteDivergence { v, d });
            }
            acc += xv * (xv / r).ln() - xv;
        }
    }
    Ok(acc + total)
}

/// `Σ x_vd log (WH)_vd` (the PLSA log-likelihood without its data constant).
pub fn plsa_log_likelihood(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    let recon = reconstruct_nonzeros(x, w, h)?;
    sum_x_log_recon(x, &recon, |v, d| Error::InfiniteDivergence { v, d })
}

fn sum_x_log_recon(
    x: &TermDocMatrix,
    recon: &[f64],
    on_zero: impl Fn(usize, usize) -> Error,
) -> Result<f64> {
    let mut acc = 0.0;
    for d in 0..x.n_docs() {
        for i in x.doc_span(d) {
            let r = recon[i];
            if !(r > 0.0) {
                return Err(on_zero(x.rows()[i], d));
            }
            acc += x.values()[i] * r.ln();
        }
    }
    Ok(acc)
}

/// `Σ x log x − Σ x`, the part of the KL divergence that depends on `X` only.
pub fn kl_constant(x: &TermDocMatrix) -> f64 {
    x.entries().map(|(_, _, xv)| xv * xv.ln() - xv).sum()
}

pub fn l1_norm(h: &Array2<f64>) -> f64 {
    h.iter().map(|x| x.abs()).sum()
}

/// `D_KL(X ‖ WH) + λ ‖H‖₁`.
pub fn sparse_objective(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>, lambda: f64) -> Result<f64> {
    Ok(kl_divergence(x, w, h)? + lambda * l1_norm(h))
}

fn check_priors(priors: &Priors, state: &VariationalState, w: &Array2<f64>) -> Result<()> {
    let k = priors.n_topics();
    if state.n_topics() != k || w.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "priors have K={k}, beta has {} rows, W has {} columns",
            state.n_topics(),
            w.ncols()
        )));
    }
    Ok(())
}

/// Variational lower bound of LDA / the Dirichlet–Poisson model.
///
/// `φ` is not an argument: it is always taken at its optimum given
/// `(W, β)`, `φ_vkd ∝ w_vk h̃_kd`, under which
/// `Σ_k φ log(w h̃ / φ) = log (W H̃)_vd`.
pub fn lda_elbo(x: &TermDocMatrix, w: &Array2<f64>, priors: &Priors, state: &VariationalState) -> Result<f64> {
    check_priors(priors, state, w)?;
    check_simplex_columns("W", w)?;
    let htilde = expected_log_h_dirichlet(state.beta())?;
    let recon = reconstruct_nonzeros(x, w, &htilde)?;
    lda_elbo_from_recon(x, &recon, priors, state.beta())
}

pub(crate) fn lda_elbo_from_recon(
    x: &TermDocMatrix,
    recon: &[f64],
    priors: &Priors,
    beta: &Array2<f64>,
) -> Result<f64> {
    let data = sum_x_log_recon(x, recon, |v, d| Error::UnrepresentableTerm { v, d })?;
    let alpha = priors.alpha();
    let lg_alpha_sum = log_gamma_unchecked(priors.alpha_sum());
    let lg_alpha: f64 = alpha.iter().map(|&a| log_gamma_unchecked(a)).sum();
    let mut prior = 0.0;
    for col in beta.columns() {
        let beta_sum: f64 = col.sum();
        let psi_sum = digamma_unchecked(beta_sum);
        let mut doc = lg_alpha_sum - log_gamma_unchecked(beta_sum) - lg_alpha;
        for (&b, &a) in col.iter().zip(alpha) {
            doc += log_gamma_unchecked(b) + (a - b) * (digamma_unchecked(b) - psi_sum);
        }
        prior += doc;
    }
    Ok(data + prior)
}

/// Variational lower bound of the Gamma–Poisson model.
pub fn gap_elbo(x: &TermDocMatrix, w: &Array2<f64>, priors: &Priors, state: &VariationalState) -> Result<f64> {
    check_priors(priors, state, w)?;
    check_simplex_columns("W", w)?;
    let b = state
        .b_rate()
        .ok_or_else(|| Error::InvalidParameter("Gamma–Poisson state requires b_rate".into()))?;
    let htilde = expected_log_h_gamma(state.beta(), b)?;
    let recon = reconstruct_nonzeros(x, w, &htilde)?;
    gap_elbo_from_recon(x, &recon, priors, state.beta(), b)
}

pub(crate) fn gap_elbo_from_recon(
    x: &TermDocMatrix,
    recon: &[f64],
    priors: &Priors,
    beta: &Array2<f64>,
    b_rate: &Array2<f64>,
) -> Result<f64> {
    let data = sum_x_log_recon(x, recon, |v, d| Error::UnrepresentableTerm { v, d })?;
    let (alpha, rate) = (priors.alpha(), priors.rate_a());
    let mut prior = 0.0;
    for ((k, d), &bt) in beta.indexed_iter() {
        let (al, a, b) = (alpha[k], rate[k], b_rate[[k, d]]);
        let e_h = bt / b;
        let e_log_h = digamma_unchecked(bt) - b.ln();
        prior += -e_h + al * a.ln() - bt * b.ln() + log_gamma_unchecked(bt) - log_gamma_unchecked(al)
            + (al - bt) * e_log_h
            + (b - a) * e_h;
    }
    Ok(data + prior)
}

/// Joint majorizer of the KL divergence anchored at `(W', H')`:
///
/// `G = Σ (x log x − x) − Σ x φ' log(w h / φ') + Σ (WH)`, with
/// `φ'_vkd = w'_vk h'_kd / (W'H')_vd`.
///
/// The `X`-only term is included so that `G(A, A) = D_KL(X ‖ A)`.
pub fn joint_aux(
    x: &TermDocMatrix,
    candidate: (&Array2<f64>, &Array2<f64>),
    anchor: (&Array2<f64>, &Array2<f64>),
) -> Result<f64> {
    let (w, h) = candidate;
    let (wa, ha) = anchor;
    check_factor_shapes(x, w, h)?;
    check_factor_shapes(x, wa, ha)?;
    if w.ncols() != wa.ncols() {
        return Err(Error::DimensionMismatch("candidate and anchor differ in K".into()));
    }
    let k = w.ncols();
    let mut acc = 0.0;
    for (v, d, xv) in x.entries() {
        let anchor_recon = wa.row(v).dot(&ha.column(d));
        if !(anchor_recon > 0.0) {
            return Err(Error::InfiniteDivergence { v, d });
        }
        let mut bound = 0.0;
        for t in 0..k {
            let phi = wa[[v, t]] * ha[[t, d]] / anchor_recon;
            if phi == 0.0 {
                continue;
            }
            let wh = w[[v, t]] * h[[t, d]];
            if wh == 0.0 {
                return Ok(f64::INFINITY);
            }
            bound += phi * (wh / phi).ln();
        }
        acc += xv * xv.ln() - xv - xv * bound;
    }
    Ok(acc + reconstruction_total(w, h))
}

fn check_marginal_shapes(x: &[f64], w: &Array2<f64>, h: &[f64]) -> Result<Array1<f64>> {
    if x.len() != w.nrows() || h.len() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} entries, W is {}x{}, h has {} entries",
            x.len(),
            w.nrows(),
            w.ncols(),
            h.len()
        )));
    }
    for (v, &xv) in x.iter().enumerate() {
        if !(xv >= 0.0) {
            return Err(Error::NegativeCount { v, d: 0, value: xv });
        }
    }
    Ok(w.dot(&ArrayView1::from(h)))
}

/// `log p(x | W, h)` under `x_v ~ Poisson((Wh)_v)` (or, equivalently, the
/// latent per-topic Poisson model), including the `1/x_v!` terms.
pub fn poisson_marginal_loglik(x: &[f64], w: &Array2<f64>, h: &[f64]) -> Result<f64> {
    let rate = check_marginal_shapes(x, w, h)?;
    let mut acc = -rate.sum();
    for (v, (&xv, &r)) in x.iter().zip(rate.iter()).enumerate() {
        if xv > 0.0 {
            if !(r > 0.0) {
                return Err(Error::InfiniteDivergence { v, d: 0 });
            }
            acc += xv * r.ln();
        }
        acc -= log_gamma_unchecked(xv + 1.0);
    }
    Ok(acc)
}

/// `log p(x | W, h, N)` under `x ~ Multinomial(N, p ∝ Wh)`.
pub fn multinomial_marginal_loglik(x: &[f64], w: &Array2<f64>, h: &[f64], n: f64) -> Result<f64> {
    let rate = check_marginal_shapes(x, w, h)?;
    let found: f64 = x.iter().sum();
    if (found - n).abs() > 1e-9 * n.abs().max(1.0) {
        return Err(Error::CountMismatch { expected: n, found });
    }
    let mass = rate.sum();
    let mut acc = log_gamma_unchecked(n + 1.0);
    for (v, (&xv, &r)) in x.iter().zip(rate.iter()).enumerate() {
        if xv > 0.0 {
            if !(r > 0.0) {
                return Err(Error::InfiniteDivergence { v, d: 0 });
            }
            acc += xv * (r / mass).ln();
        }
        acc -= log_gamma_unchecked(xv + 1.0);
    }
    Ok(acc)
}
