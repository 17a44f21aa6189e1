//! Variational steppers for the Dirichlet–Poisson (LDA) and Gamma–Poisson
//! models, and their fit driver.
//!
//! Responsibilities `φ` are never materialized. Both models only need
//! `H̃ = exp(E_q[log H])` and the single reconstruction `W H̃` at the
//! nonzeros of `X`, which a [`ViState`] caches between steps (up to a
//! per-document scale that the updates are invariant to).

use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::{check_factor_shapes, reconstruct_nonzeros, TermDocMatrix};
use crate::model::{check_simplex_columns, FitConfig, FitTrace, Method, Priors, VariationalState};
use crate::mu::{relative_change, MONOTONE_SLACK};
use crate::objectives::{gap_elbo_from_recon, lda_elbo_from_recon};
use crate::specfun::digamma_unchecked;
use crate::par::map_indices;
use crate::updates::{doc_numerators, floor_columns, normalize_topics, ratios, topic_numerators};

fn check_positive_matrix(name: &str, m: &Array2<f64>) -> Result<()> {
    for ((r, c), &v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: r, col: c });
        }
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, found {v} at ({r}, {c})"
            )));
        }
    }
    Ok(())
}

/// `h̃_kd = exp(ψ(β_kd) − ψ(Σ_k' β_k'd))`.
pub fn expected_log_h_dirichlet(beta: &Array2<f64>) -> Result<Array2<f64>> {
    check_positive_matrix("beta", beta)?;
    Ok(dirichlet_unchecked(beta))
}

fn dirichlet_unchecked(beta: &Array2<f64>) -> Array2<f64> {
    let mut out = beta.mapv(digamma_unchecked);
    for (mut col, b) in out.columns_mut().into_iter().zip(beta.columns()) {
        let psi_sum = digamma_unchecked(b.sum());
        col.mapv_inplace(|p| (p - psi_sum).exp());
    }
    out
}

/// `h̃_kd = exp(ψ(β_kd)) / b_kd`.
pub fn expected_log_h_gamma(beta: &Array2<f64>, b_rate: &Array2<f64>) -> Result<Array2<f64>> {
    check_positive_matrix("beta", beta)?;
    check_positive_matrix("b_rate", b_rate)?;
    if beta.dim() != b_rate.dim() {
        return Err(Error::DimensionMismatch(format!(
            "beta is {:?} but b_rate is {:?}",
            beta.dim(),
            b_rate.dim()
        )));
    }
    Ok(gamma_unchecked(beta, b_rate))
}

fn gamma_unchecked(beta: &Array2<f64>, b_rate: &Array2<f64>) -> Array2<f64> {
    let mut out = beta.mapv(|b| digamma_unchecked(b).exp());
    out /= b_rate;
    out
}

/// Which variational family the state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViModel {
    Dirichlet,
    Gamma,
}

/// `H̃` split per document as `raw_kd · exp(log_scale_d)`.
///
/// Every step is invariant to a per-document rescaling of `H̃`, so steps only
/// ever see `raw`. For the Dirichlet model and for Gamma columns whose rate
/// is shared by all topics, `raw = exp(ψ(β) − ψ(Σ_k β))`, so the two models'
/// iterates coincide in floating point. Columns with topic-specific rates
/// use `raw = exp(ψ(β) − log b − m)` with `m` the column maximum.
fn split_htilde(model: ViModel, beta: &Array2<f64>, b_rate: Option<&Array2<f64>>) -> (Array2<f64>, Vec<f64>) {
    let k = beta.nrows();
    let cols = map_indices(beta.ncols(), |d| {
        let col = beta.column(d);
        let psi: Vec<f64> = col.iter().map(|&b| digamma_unchecked(b)).collect();
        let psi_sum = digamma_unchecked(col.sum());
        let dirichlet = |psi: &[f64]| psi.iter().map(|&p| (p - psi_sum).exp()).collect::<Vec<f64>>();
        match (model, b_rate) {
            (ViModel::Gamma, Some(b)) => {
                let bc = b.column(d);
                if bc.iter().all(|&v| v == bc[0]) {
                    (dirichlet(&psi), psi_sum - bc[0].ln())
                } else {
                    let t: Vec<f64> = psi.iter().zip(bc).map(|(&p, &bv)| p - bv.ln()).collect();
                    let m = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (t.iter().map(|&ti| (ti - m).exp()).collect(), m)
                }
            }
            _ => (dirichlet(&psi), 0.0),
        }
    });
    let raw = Array2::from_shape_fn((k, beta.ncols()), |(t, d)| cols[d].0[t]);
    let log_scale = cols.into_iter().map(|(_, s)| s).collect();
    (raw, log_scale)
}

/// `(W, β[, b])` with `H̃` (in split form) and `W H̃_raw` at the nonzeros of `X`.
#[derive(Debug, Clone)]
pub struct ViState {
    model: ViModel,
    w: Array2<f64>,
    state: VariationalState,
    raw: Array2<f64>,
    log_scale: Vec<f64>,
    recon: Vec<f64>,
}

impl ViState {
    /// Validates the inputs and evaluates `H̃` and `W H̃` once.
    ///
    /// A Gamma state without `b_rate` gets the stationary rates `1 + a_k`.
    pub fn new(
        x: &TermDocMatrix,
        model: ViModel,
        w: Array2<f64>,
        priors: &Priors,
        state: VariationalState,
    ) -> Result<Self> {
        let k = priors.n_topics();
        if w.ncols() != k || state.n_topics() != k {
            return Err(Error::DimensionMismatch(format!(
                "priors have K={k}, W has {} columns, beta has {} rows",
                w.ncols(),
                state.n_topics()
            )));
        }
        check_simplex_columns("W", &w)?;
        check_factor_shapes(x, &w, state.beta())?;
        let state = match model {
            ViModel::Dirichlet => state,
            ViModel::Gamma => {
                let (beta, b) = state.into_parts();
                let b = b.unwrap_or_else(|| priors.stationary_rates(beta.ncols()));
                VariationalState::new(beta, Some(b))?
            }
        };
        Ok(Self::assemble(x, model, w, state))
    }

    fn assemble(x: &TermDocMatrix, model: ViModel, w: Array2<f64>, state: VariationalState) -> Self {
        let (raw, log_scale) = split_htilde(model, state.beta(), state.b_rate());
        let recon = reconstruct_nonzeros(x, &w, &raw).expect("shapes checked");
        ViState {
            model,
            w,
            state,
            raw,
            log_scale,
            recon,
        }
    }

    pub fn model(&self) -> ViModel {
        self.model
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn variational(&self) -> &VariationalState {
        &self.state
    }

    /// `H̃ = exp(E_q[log H])`.
    pub fn htilde(&self) -> Array2<f64> {
        let mut h = self.raw.clone();
        for (mut col, &s) in h.columns_mut().into_iter().zip(&self.log_scale) {
            let f = s.exp();
            col.mapv_inplace(|v| v * f);
        }
        h
    }

    pub fn into_parts(self) -> (Array2<f64>, VariationalState) {
        (self.w, self.state)
    }

    /// ELBO of this state from the cached reconstruction.
    pub fn elbo(&self, x: &TermDocMatrix, priors: &Priors) -> Result<f64> {
        let base = match self.model {
            ViModel::Dirichlet => lda_elbo_from_recon(x, &self.recon, priors, self.state.beta())?,
            ViModel::Gamma => {
                let b = self.state.b_rate().expect("gamma state carries b_rate");
                gap_elbo_from_recon(x, &self.recon, priors, self.state.beta(), b)?
            }
        };
        // Σ x log(W H̃) = Σ x log(W H̃_raw) + Σ_d λ_d log_scale_d
        let offset: f64 = x.col_sums().iter().zip(&self.log_scale).map(|(l, s)| l * s).sum();
        Ok(base + offset)
    }
}

#[derive(Debug, Clone)]
pub struct ViOutcome {
    pub state: ViState,
    /// ELBO after the step.
    pub elbo: f64,
    /// Full reconstruction evaluations performed by the step (always 1).
    pub recon_evals: usize,
}

fn vi_step(x: &TermDocMatrix, s: &ViState, priors: &Priors, floor: f64) -> Result<ViOutcome> {
    let r = ratios(x, &s.recon)?;

    let mut w_next = topic_numerators(x, &r, &s.raw);
    w_next *= &s.w;
    floor_columns(&mut w_next, floor);
    normalize_topics(&mut w_next)?;

    let mut beta = doc_numerators(x, &r, &s.w);
    beta *= &s.raw;
    let alpha = priors.alpha();
    for ((k, _), b) in beta.indexed_iter_mut() {
        *b += alpha[k];
    }
    let b_rate = match s.model {
        ViModel::Dirichlet => None,
        ViModel::Gamma => Some(priors.stationary_rates(beta.ncols())),
    };
    let state = ViState::assemble(x, s.model, w_next, VariationalState::from_parts_unchecked(beta, b_rate));
    let elbo = state.elbo(x, priors)?;
    Ok(ViOutcome {
        state,
        elbo,
        recon_evals: 1,
    })
}

fn require_model(s: &ViState, priors: &Priors, model: ViModel) -> Result<()> {
    if s.model != model {
        return Err(Error::InvalidParameter(format!(
            "stepper expects a {model:?} state, got {:?}",
            s.model
        )));
    }
    if priors.n_topics() != s.w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "priors have K={}, state has K={}",
            priors.n_topics(),
            s.w.ncols()
        )));
    }
    Ok(())
}

/// One Dirichlet–Poisson (LDA) variational step.
pub fn dp_vi_step(x: &TermDocMatrix, s: &ViState, priors: &Priors, floor: f64) -> Result<ViOutcome> {
    require_model(s, priors, ViModel::Dirichlet)?;
    vi_step(x, s, priors, floor)
}

/// One Gamma–Poisson variational step. The output rates are `1 + a_k`.
pub fn gap_vi_step(x: &TermDocMatrix, s: &ViState, priors: &Priors, floor: f64) -> Result<ViOutcome> {
    require_model(s, priors, ViModel::Gamma)?;
    vi_step(x, s, priors, floor)
}

fn model_for(method: Method) -> Result<ViModel> {
    match method {
        Method::Lda => Ok(ViModel::Dirichlet),
        Method::Gap => Ok(ViModel::Gamma),
        other => Err(Error::InvalidParameter(format!(
            "{other} is not a variational method; use mu::fit"
        ))),
    }
}

/// Runs `lda` or `gap` until the relative ELBO change drops below
/// `config.rel_tolerance` or `max_iters` is reached.
pub fn fit_vi(
    x: &TermDocMatrix,
    config: &FitConfig,
    priors: &Priors,
    init_w: Array2<f64>,
    init_beta: Array2<f64>,
) -> Result<(Array2<f64>, VariationalState, FitTrace)> {
    config.validate()?;
    let model = model_for(config.method)?;
    if priors.n_topics() != config.n_topics {
        return Err(Error::DimensionMismatch(format!(
            "priors have K={}, config asks for K={}",
            priors.n_topics(),
            config.n_topics
        )));
    }
    let mut state = ViState::new(x, model, init_w, priors, VariationalState::new(init_beta, None)?)?;
    let mut prev = state.elbo(x, priors)?;
    let mut trace = FitTrace::default();
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let out = vi_step(x, &state, priors, config.epsilon_floor)?;
        trace.push(out.elbo, out.recon_evals, start.elapsed());
        if out.elbo < prev - MONOTONE_SLACK * prev.abs().max(1.0) {
            return Err(Error::NoProgress {
                iter,
                before: prev,
                after: out.elbo,
            });
        }
        let change = relative_change(prev, out.elbo);
        prev = out.elbo;
        state = out.state;
        if change < config.rel_tolerance {
            break;
        }
    }
    let (w, vs) = state.into_parts();
    Ok((w, vs, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dirichlet_expectations() {
        let h = expected_log_h_dirichlet(&array![[3.0, 0.2]]).unwrap();
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let h = expected_log_h_dirichlet(&array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        // exp(-1) and exp(ψ(2) − ψ(4)), mpmath oracle.
        assert!((h[[0, 0]] - 0.367_879_441_171_442_321_6).abs() < 1e-14);
        assert!((h[[1, 1]] - 0.434_598_208_507_078_223_16).abs() < 1e-14);
        assert!(expected_log_h_dirichlet(&array![[0.0]]).is_err());
    }

    #[test]
    fn gamma_expectations() {
        let h = expected_log_h_gamma(&array![[1.0, 2.0]], &array![[1.0, 2.0]]).unwrap();
        assert!((h[[0, 0]] - 0.561_459_483_566_885_169_82).abs() < 1e-14, "{h}");
        assert!((h[[0, 1]] - 0.763_102_555_797_931_940_24).abs() < 1e-14);
        let a = expected_log_h_gamma(&array![[1.7]], &array![[0.3]]).unwrap();
        let b = expected_log_h_gamma(&array![[1.7]], &array![[1.2]]).unwrap();
        assert!((a[[0, 0]] / 4.0 - b[[0, 0]]).abs() < 1e-15);
        assert!(expected_log_h_gamma(&array![[1.0]], &array![[-1.0]]).is_err());
    }

    #[test]
    fn single_topic_beta_is_alpha_plus_doc_length() {
        let x = TermDocMatrix::from_dense(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let priors = Priors::symmetric(1, 0.5, 1.0).unwrap();
        let vs = VariationalState::new(array![[1.0, 1.0]], None).unwrap();
        let s = ViState::new(&x, ViModel::Dirichlet, array![[0.3], [0.7]], &priors, vs).unwrap();
        let out = dp_vi_step(&x, &s, &priors, 0.0).unwrap();
        assert_eq!(out.recon_evals, 1);
        assert_eq!(out.state.variational().beta(), &array![[4.5, 6.5]]);
    }

    #[test]
    fn empty_data_kills_topics() {
        let x = TermDocMatrix::from_triplets(2, 2, Vec::new()).unwrap();
        let priors = Priors::symmetric(1, 0.5, 1.0).unwrap();
        let vs = VariationalState::new(array![[1.0, 1.0]], None).unwrap();
        let s = ViState::new(&x, ViModel::Dirichlet, array![[0.5], [0.5]], &priors, vs).unwrap();
        assert!(matches!(dp_vi_step(&x, &s, &priors, 1e-12), Err(Error::DeadTopic(0))));
    }

    #[test]
    fn gamma_state_defaults_to_stationary_rates() {
        let x = TermDocMatrix::from_dense(&array![[1.0], [2.0]]).unwrap();
        let priors = Priors::symmetric(2, 0.5, 0.25).unwrap();
        let vs = VariationalState::new(array![[1.0], [2.0]], None).unwrap();
        let w = array![[0.5, 0.1], [0.5, 0.9]];
        let s = ViState::new(&x, ViModel::Gamma, w, &priors, vs).unwrap();
        assert_eq!(s.variational().b_rate().unwrap(), &array![[1.25], [1.25]]);
    }
}
