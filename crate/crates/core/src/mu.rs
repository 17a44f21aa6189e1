//! Multiplicative-update steppers and the fit driver.
//!
//! A [`MuState`] carries the factorization together with `(WH)` evaluated at
//! the nonzeros of `X`. That cached reconstruction is both the anchor of the
//! next step and what the post-step objective is computed from, so the joint
//! steppers need exactly one full reconstruction per iteration and the
//! alternating stepper two (it must re-evaluate `W^{n+1} H^n` before
//! updating `H`).

use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::{check_factor_shapes, reconstruct_nonzeros, reconstruction_total, row_sums, column_sums, TermDocMatrix};
use crate::model::{ConstraintMode, Factorization, FitConfig, FitTrace, Method};
use crate::objectives::{kl_from_recon, l1_norm};
use crate::updates::{doc_numerators, floor_columns, normalize_docs, normalize_topics, ratios, topic_numerators};

/// Relative slack allowed before an objective increase is reported.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// A factorization paired with its reconstruction at the nonzeros of `X`.
#[derive(Debug, Clone)]
pub struct MuState {
    factors: Factorization,
    recon: Vec<f64>,
}

impl MuState {
    /// Evaluates the reconstruction of `factors` (one full evaluation).
    pub fn new(x: &TermDocMatrix, factors: Factorization) -> Result<Self> {
        let recon = reconstruct_nonzeros(x, factors.w(), factors.h())?;
        Ok(MuState { factors, recon })
    }

    pub fn factors(&self) -> &Factorization {
        &self.factors
    }

    pub fn into_factors(self) -> Factorization {
        self.factors
    }

    /// `D_KL(X ‖ WH)` from the cached reconstruction.
    pub fn kl(&self, x: &TermDocMatrix) -> Result<f64> {
        kl_from_recon(x, &self.recon, self.total())
    }

    fn total(&self) -> f64 {
        let (w, h) = (self.factors.w(), self.factors.h());
        if self.factors.mode() >= ConstraintMode::WSimplex {
            // Σ_v w_vk = 1, so Σ_{v,d} (WH)_vd = Σ_{k,d} h_kd.
            h.sum()
        } else {
            reconstruction_total(w, h)
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: MuState,
    /// KL after the step, or `KL + λ‖H‖₁` for [`mu_step_sparse`].
    pub objective: f64,
    /// Full reconstruction evaluations performed by the step.
    pub recon_evals: usize,
}

fn require_mode(f: &Factorization, mode: ConstraintMode) -> Result<()> {
    if f.mode() != mode {
        return Err(Error::ConstraintViolation(format!(
            "stepper expects a {mode} factorization, got {}",
            f.mode()
        )));
    }
    Ok(())
}

/// Alternating updates: `W` from `W^n H^n`, then `H` from `W^{n+1} H^n`.
pub fn mu_step_alternating(x: &TermDocMatrix, state: &MuState, floor: f64) -> Result<StepOutcome> {
    let f = &state.factors;
    require_mode(f, ConstraintMode::Unconstrained)?;
    let (w, h) = (f.w(), f.h());
    check_factor_shapes(x, w, h)?;

    let h_mass = row_sums(h);
    if let Some(k) = h_mass.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DeadTopic(k));
    }
    let r = ratios(x, &state.recon)?;
    let mut w_next = topic_numerators(x, &r, h);
    for ((_, k), val) in w_next.indexed_iter_mut() {
        *val /= h_mass[k];
    }
    w_next *= w;
    floor_columns(&mut w_next, floor);

    let w_mass = column_sums(&w_next);
    if let Some(k) = w_mass.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DeadTopic(k));
    }
    let mid = reconstruct_nonzeros(x, &w_next, h)?;
    let r = ratios(x, &mid)?;
    let mut h_next = doc_numerators(x, &r, &w_next);
    for ((k, _), val) in h_next.indexed_iter_mut() {
        *val /= w_mass[k];
    }
    h_next *= h;
    floor_columns(&mut h_next, floor);

    let factors = Factorization::from_parts_unchecked(w_next, h_next, ConstraintMode::Unconstrained);
    let next = MuState::new(x, factors)?;
    let objective = next.kl(x)?;
    Ok(StepOutcome {
        state: next,
        objective,
        recon_evals: 2,
    })
}

#[derive(Clone, Copy)]
enum JointH {
    Plain,
    Normalized,
    Shrunk(f64),
}

fn joint_step(x: &TermDocMatrix, state: &MuState, floor: f64, h_rule: JointH) -> Result<(Factorization, MuState)> {
    let f = &state.factors;
    let (w, h) = (f.w(), f.h());
    check_factor_shapes(x, w, h)?;
    let r = ratios(x, &state.recon)?;

    // Both numerators use the same anchor (W^n, H^n).
    let mut w_next = topic_numerators(x, &r, h);
    w_next *= w;
    let mut h_next = doc_numerators(x, &r, w);
    h_next *= h;

    floor_columns(&mut w_next, floor);
    normalize_topics(&mut w_next)?;

    floor_columns(&mut h_next, floor);
    let mode = match h_rule {
        JointH::Plain => ConstraintMode::WSimplex,
        JointH::Normalized => {
            normalize_docs(&mut h_next)?;
            ConstraintMode::BothSimplex
        }
        JointH::Shrunk(lambda) => {
            h_next.mapv_inplace(|v| v / (1.0 + lambda));
            ConstraintMode::WSimplex
        }
    };
    let factors = Factorization::from_parts_unchecked(w_next, h_next, mode);
    let next = MuState::new(x, factors.clone())?;
    Ok((factors, next))
}

/// Joint updates for simplex-constrained `W`.
pub fn mu_step_joint_wnorm(x: &TermDocMatrix, state: &MuState, floor: f64) -> Result<StepOutcome> {
    require_mode(&state.factors, ConstraintMode::WSimplex)?;
    let (_, next) = joint_step(x, state, floor, JointH::Plain)?;
    let objective = next.kl(x)?;
    Ok(StepOutcome {
        state: next,
        objective,
        recon_evals: 1,
    })
}

/// Joint updates with both `W` and `H` on the simplex; this is PLSA EM.
pub fn mu_step_joint_bothnorm(x: &TermDocMatrix, state: &MuState, floor: f64) -> Result<StepOutcome> {
    require_mode(&state.factors, ConstraintMode::BothSimplex)?;
    let (_, next) = joint_step(x, state, floor, JointH::Normalized)?;
    let objective = next.kl(x)?;
    Ok(StepOutcome {
        state: next,
        objective,
        recon_evals: 1,
    })
}

/// `ℓ1`-penalized joint updates: as [`mu_step_joint_wnorm`] with `H`
/// shrunk by `1/(1+λ)`. The objective is `KL + λ‖H‖₁`.
pub fn mu_step_sparse(x: &TermDocMatrix, state: &MuState, lambda: f64, floor: f64) -> Result<StepOutcome> {
    require_mode(&state.factors, ConstraintMode::WSimplex)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let (factors, next) = joint_step(x, state, floor, JointH::Shrunk(lambda))?;
    let objective = next.kl(x)? + lambda * l1_norm(factors.h());
    Ok(StepOutcome {
        state: next,
        objective,
        recon_evals: 1,
    })
}

/// One step of the MU method `method` (errors for VI methods).
pub fn mu_step(x: &TermDocMatrix, state: &MuState, method: Method, lambda: f64, floor: f64) -> Result<StepOutcome> {
    match method {
        Method::Mu => mu_step_alternating(x, state, floor),
        Method::MuJoint => mu_step_joint_wnorm(x, state, floor),
        Method::Plsa => mu_step_joint_bothnorm(x, state, floor),
        Method::Sparse => mu_step_sparse(x, state, lambda, floor),
        Method::Lda | Method::Gap => Err(Error::InvalidParameter(format!(
            "{method} is a variational method"
        ))),
    }
}

/// Objective of `method` at `state`, on the same scale as [`StepOutcome::objective`].
pub fn mu_objective(x: &TermDocMatrix, state: &MuState, method: Method, lambda: f64) -> Result<f64> {
    let kl = state.kl(x)?;
    Ok(match method {
        Method::Sparse => kl + lambda * l1_norm(state.factors.h()),
        _ => kl,
    })
}

/// Relative change used by both fit drivers' stopping rule.
pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / prev.abs().max(1.0)
}

/// Runs the MU method in `config.method` from `init` until the relative
/// objective change drops below `config.rel_tolerance` or `max_iters` is hit.
pub fn fit(x: &TermDocMatrix, config: &FitConfig, init: Factorization) -> Result<(Factorization, FitTrace)> {
    config.validate()?;
    let method = config.method;
    if method.is_variational() {
        return Err(Error::InvalidParameter(format!(
            "{method} is a variational method; use vi::fit_vi"
        )));
    }
    if init.mode() != method.constraint_mode() {
        return Err(Error::ConstraintViolation(format!(
            "{method} needs a {} initialization, got {}",
            method.constraint_mode(),
            init.mode()
        )));
    }
    if init.n_topics() != config.n_topics {
        return Err(Error::DimensionMismatch(format!(
            "init has K={}, config asks for K={}",
            init.n_topics(),
            config.n_topics
        )));
    }
    let lambda = config.lambda_sparsity;
    let mut state = MuState::new(x, init)?;
    let mut prev = mu_objective(x, &state, method, lambda)?;
    let mut trace = FitTrace::default();
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let out = mu_step(x, &state, method, lambda, config.epsilon_floor)?;
        trace.push(out.objective, out.recon_evals, start.elapsed());
        if out.objective > prev + MONOTONE_SLACK * prev.abs().max(1.0) {
            return Err(Error::NoProgress {
                iter,
                before: prev,
                after: out.objective,
            });
        }
        let change = relative_change(prev, out.objective);
        prev = out.objective;
        state = out.state;
        if change < config.rel_tolerance {
            break;
        }
    }
    Ok((state.into_factors(), trace))
}

/// Convenience: `W` and `H` as owned arrays.
pub fn split(f: Factorization) -> (Array2<f64>, Array2<f64>) {
    f.into_parts()
}
