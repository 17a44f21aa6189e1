//! Literal responsibility-based transcripts of PLSA EM and LDA variational
//! inference.
//!
//! These materialize `φ_vkd` for every nonzero and accumulate the expected
//! counts directly, sharing no code with the multiplicative steppers. They
//! exist to be compared against [`crate::mu`] and [`crate::vi`]; they apply
//! the same entry floor so the comparison is exact in intent.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::TermDocMatrix;
use crate::model::Priors;
use crate::specfun::digamma;
use crate::updates::floor_columns;

/// `φ_vkd ∝ w_vk h_kd` for every nonzero, in document-major entry order.
fn responsibilities(x: &TermDocMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<Vec<(usize, usize, f64, Vec<f64>)>> {
    let k = w.ncols();
    x.entries()
        .map(|(v, d, xv)| {
            let mut phi: Vec<f64> = (0..k).map(|t| w[[v, t]] * h[[t, d]]).collect();
            let z: f64 = phi.iter().sum();
            if !(z > 0.0) {
                return Err(Error::InfiniteDivergence { v, d });
            }
            phi.iter_mut().for_each(|p| *p /= z);
            Ok((v, d, xv, phi))
        })
        .collect()
}

fn expected_counts(
    x: &TermDocMatrix,
    k: usize,
    phis: &[(usize, usize, f64, Vec<f64>)],
) -> (Array2<f64>, Array2<f64>) {
    let mut nw = Array2::zeros((x.n_terms(), k));
    let mut nh = Array2::zeros((k, x.n_docs()));
    for (v, d, xv, phi) in phis {
        for (t, p) in phi.iter().enumerate() {
            nw[[*v, t]] += xv * p;
            nh[[t, *d]] += xv * p;
        }
    }
    (nw, nh)
}

fn normalize(m: &mut Array2<f64>, err: impl Fn(usize) -> Error) -> Result<()> {
    for (i, mut col) in m.columns_mut().into_iter().enumerate() {
        let s: f64 = col.sum();
        if !(s > 0.0) {
            return Err(err(i));
        }
        col.mapv_inplace(|v| v / s);
    }
    Ok(())
}

/// One PLSA EM iteration:
/// E-step `φ_vkd = w_vk h_kd / Σ_k' w_vk' h_k'd`,
/// M-step `w_vk ∝ Σ_d x_vd φ_vkd`, `h_kd ∝ Σ_v x_vd φ_vkd`.
pub fn plsa_em_step(
    x: &TermDocMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    floor: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let k = w.ncols();
    let phis = responsibilities(x, w, h)?;
    let (mut nw, mut nh) = expected_counts(x, k, &phis);
    floor_columns(&mut nw, floor);
    normalize(&mut nw, Error::DeadTopic)?;
    floor_columns(&mut nh, floor);
    normalize(&mut nh, Error::EmptyDocument)?;
    Ok((nw, nh))
}

/// One LDA variational iteration:
/// `h̃_kd = exp(ψ(β_kd) − ψ(Σ_k β_kd))`, `φ_vkd ∝ w_vk h̃_kd`,
/// `w_vk ∝ Σ_d x_vd φ_vkd`, `β_kd = α_k + Σ_v x_vd φ_vkd`.
pub fn lda_vi_step(
    x: &TermDocMatrix,
    w: &Array2<f64>,
    beta: &Array2<f64>,
    priors: &Priors,
    floor: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let k = w.ncols();
    let mut htilde = Array2::zeros(beta.dim());
    for d in 0..beta.ncols() {
        let psi_sum = digamma(beta.column(d).sum())?;
        for t in 0..k {
            htilde[[t, d]] = (digamma(beta[[t, d]])? - psi_sum).exp();
        }
    }
    let phis = responsibilities(x, w, &htilde)?;
    let (mut nw, nh) = expected_counts(x, k, &phis);
    floor_columns(&mut nw, floor);
    normalize(&mut nw, Error::DeadTopic)?;
    let alpha = priors.alpha();
    let beta_next = Array2::from_shape_fn(nh.dim(), |(t, d)| alpha[t] + nh[[t, d]]);
    Ok((nw, beta_next))
}
