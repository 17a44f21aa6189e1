//! Seeded synthetic count matrices for tests, benches and the CLI.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::error::{Error, Result};
use crate::init::{random_simplex_w, rng_from_seed};
use crate::matrix::TermDocMatrix;

/// `x_vd ~ Poisson((W H)_vd)` with Dirichlet(1) topics `W` (V×K) and
/// `h_kd ~ mean_doc_len / K · Exp(1)`.
///
/// A document that comes out empty receives a single count at term
/// `d mod V`, so every column has positive mass.
pub fn poisson_matrix(n_terms: usize, n_docs: usize, k: usize, mean_doc_len: f64, seed: u64) -> Result<TermDocMatrix> {
    if n_terms == 0 || n_docs == 0 || k == 0 {
        return Err(Error::InvalidParameter("synthetic dimensions must be >= 1".into()));
    }
    if !(mean_doc_len > 0.0 && mean_doc_len.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mean document length must be positive, got {mean_doc_len}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let w = random_simplex_w(&mut rng, n_terms, k);
    let scale = mean_doc_len / k as f64;
    let h = Array2::from_shape_simple_fn((k, n_docs), || scale * rng.sample::<f64, _>(Exp1));
    let rate = w.dot(&h);
    let mut triplets = Vec::new();
    for d in 0..n_docs {
        let mut any = false;
        for v in 0..n_terms {
            let lam = rate[[v, d]];
            if lam <= 0.0 {
                continue;
            }
            let c: f64 = Poisson::new(lam).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng);
            if c > 0.0 {
                triplets.push((v, d, c));
                any = true;
            }
        }
        if !any {
            triplets.push((d % n_terms, d, 1.0));
        }
    }
    TermDocMatrix::from_triplets(n_terms, n_docs, triplets)
}

/// The desk-scale instance used throughout: V=30, D=20, K=5, mean length 100.
pub fn desk_matrix(seed: u64) -> TermDocMatrix {
    poisson_matrix(30, 20, 5, 100.0, seed).expect("valid synthetic parameters")
}
