//! Seeded initialization.
//!
//! Draw order from one ChaCha8 stream seeded with the `u64` seed: `W`
//! row-major, then `H` (or the `β` perturbation) row-major. `W` columns are
//! normalized standard exponentials, i.e. Dirichlet(1). `H` entries are
//! Gamma(1, 1) (= Exp(1)) draws rescaled per document.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::matrix::TermDocMatrix;
use crate::model::{ConstraintMode, Factorization, Priors};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn exp_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        // Exp(1) has no mass at 0, but guard the f64 edge anyway.
        let e: f64 = rng.sample(Exp1);
        *v = e.max(f64::MIN_POSITIVE);
    }
    m
}

fn normalize_in_place(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let s: f64 = col.sum();
        col.mapv_inplace(|x| x / s);
    }
}

/// `V×K` matrix with Dirichlet(1) columns.
pub fn random_simplex_w(rng: &mut impl Rng, n_terms: usize, k: usize) -> Array2<f64> {
    let mut w = exp_matrix(rng, n_terms, k);
    normalize_in_place(&mut w);
    w
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("n_topics must be >= 1".into()));
    }
    Ok(())
}

/// Random factorization for `mode`.
///
/// `H` columns sum to `λ_d` for `Unconstrained` and `WSimplex`, and to 1 for
/// `BothSimplex` or an empty document.
pub fn init_factorization(x: &TermDocMatrix, k: usize, mode: ConstraintMode, seed: u64) -> Result<Factorization> {
    check_k(k)?;
    let mut rng = rng_from_seed(seed);
    let w = random_simplex_w(&mut rng, x.n_terms(), k);
    let mut h = exp_matrix(&mut rng, k, x.n_docs());
    normalize_in_place(&mut h);
    if mode != ConstraintMode::BothSimplex {
        for (mut col, &len) in h.columns_mut().into_iter().zip(x.col_sums()) {
            if len > 0.0 {
                col.mapv_inplace(|v| v * len);
            }
        }
    }
    Factorization::new(w, h, mode)
}

/// `β⁰_kd = α_k + λ_d / K`.
pub fn default_beta(x: &TermDocMatrix, priors: &Priors) -> Array2<f64> {
    let k = priors.n_topics();
    let alpha = priors.alpha();
    let lens = x.col_sums();
    Array2::from_shape_fn((k, x.n_docs()), |(t, d)| alpha[t] + lens[d] / k as f64)
}

/// `β⁰_kd = α_k + λ_d u_kd` with `u_·d ~ Dirichlet(1)`.
pub fn perturbed_beta(rng: &mut impl Rng, x: &TermDocMatrix, priors: &Priors) -> Array2<f64> {
    let mut u = exp_matrix(rng, priors.n_topics(), x.n_docs());
    normalize_in_place(&mut u);
    let alpha = priors.alpha();
    let lens = x.col_sums();
    for ((t, d), v) in u.indexed_iter_mut() {
        *v = alpha[t] + lens[d] * *v;
    }
    u
}

/// Initial `(W, β)` for the variational methods. `β` is the deterministic
/// default unless `perturb` is set.
pub fn init_variational(
    x: &TermDocMatrix,
    priors: &Priors,
    seed: u64,
    perturb: bool,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_k(priors.n_topics())?;
    let mut rng = rng_from_seed(seed);
    let w = random_simplex_w(&mut rng, x.n_terms(), priors.n_topics());
    let beta = if perturb {
        perturbed_beta(&mut rng, x, priors)
    } else {
        default_beta(x, priors)
    };
    Ok((w, beta))
}
