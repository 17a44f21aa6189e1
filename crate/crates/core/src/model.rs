//! Model state, priors and solver configuration.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_inner, column_sums};

/// Tolerance for simplex column sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Which columns of the factorization are required to lie on a simplex.
///
/// Ordered so that `mode >= ConstraintMode::WSimplex` reads naturally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    Unconstrained,
    WSimplex,
    BothSimplex,
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintMode::Unconstrained => "unconstrained",
            ConstraintMode::WSimplex => "w-simplex",
            ConstraintMode::BothSimplex => "both-simplex",
        })
    }
}

/// A `(W, H)` pair with `W: V×K`, `H: K×D`, both non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    w: Array2<f64>,
    h: Array2<f64>,
    mode: ConstraintMode,
}

impl Factorization {
    pub fn new(w: Array2<f64>, h: Array2<f64>, mode: ConstraintMode) -> Result<Self> {
        check_inner(&w, &h)?;
        if w.ncols() == 0 {
            return Err(Error::DimensionMismatch("K must be at least 1".into()));
        }
        check_nonnegative("W", &w)?;
        check_nonnegative("H", &h)?;
        if mode >= ConstraintMode::WSimplex {
            check_simplex_columns("W", &w)?;
        }
        if mode == ConstraintMode::BothSimplex {
            check_simplex_columns("H", &h)?;
        }
        Ok(Factorization { w, h, mode })
    }

    /// Skips validation; solvers use this after a step that enforces the
    /// constraints by construction.
    pub(crate) fn from_parts_unchecked(w: Array2<f64>, h: Array2<f64>, mode: ConstraintMode) -> Self {
        Factorization { w, h, mode }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn n_topics(&self) -> usize {
        self.w.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.w, self.h)
    }

    /// Same matrices, different declared mode (validated).
    pub fn with_mode(self, mode: ConstraintMode) -> Result<Self> {
        Factorization::new(self.w, self.h, mode)
    }
}

pub(crate) fn check_nonnegative(name: &str, m: &Array2<f64>) -> Result<()> {
    for ((i, j), &x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        if x < 0.0 {
            return Err(Error::ConstraintViolation(format!(
                "{name}[{i},{j}] = {x} is negative"
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_simplex_columns(name: &str, m: &Array2<f64>) -> Result<()> {
    for (k, s) in column_sums(m).into_iter().enumerate() {
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ConstraintViolation(format!(
                "column {k} of {name} sums to {s}, not 1"
            )));
        }
    }
    Ok(())
}

fn check_positive(name: &str, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for (i, x) in xs.into_iter().enumerate() {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name}[{i}] = {x} must be strictly positive"
            )));
        }
    }
    Ok(())
}

/// Dirichlet concentration `α` and Gamma rates `a` (the latter only used by
/// the Gamma–Poisson model).
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    alpha: Vec<f64>,
    rate_a: Vec<f64>,
}

impl Priors {
    pub fn new(alpha: Vec<f64>, rate_a: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != rate_a.len() {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} entries, rate_a has {}",
                alpha.len(),
                rate_a.len()
            )));
        }
        check_positive("alpha", alpha.iter().copied())?;
        check_positive("rate_a", rate_a.iter().copied())?;
        Ok(Priors { alpha, rate_a })
    }

    pub fn symmetric(k: usize, alpha: f64, rate_a: f64) -> Result<Self> {
        Priors::new(vec![alpha; k], vec![rate_a; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn rate_a(&self) -> &[f64] {
        &self.rate_a
    }

    pub fn n_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn has_uniform_rate(&self) -> bool {
        self.rate_a.iter().all(|&a| a == self.rate_a[0])
    }

    /// `b_kd = 1 + a_k` for every document.
    pub fn stationary_rates(&self, n_docs: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.alpha.len(), n_docs), |(k, _)| 1.0 + self.rate_a[k])
    }
}

/// Per-document variational parameters: Dirichlet (or Gamma shape) `β` and,
/// for the Gamma–Poisson model, Gamma rates `b`.
///
/// The multinomial responsibilities `φ` are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    beta: Array2<f64>,
    b_rate: Option<Array2<f64>>,
}

impl VariationalState {
    pub fn new(beta: Array2<f64>, b_rate: Option<Array2<f64>>) -> Result<Self> {
        check_positive("beta", beta.iter().copied())?;
        if let Some(b) = &b_rate {
            if b.dim() != beta.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "b_rate is {:?} but beta is {:?}",
                    b.dim(),
                    beta.dim()
                )));
            }
            check_positive("b_rate", b.iter().copied())?;
        }
        Ok(VariationalState { beta, b_rate })
    }

    pub(crate) fn from_parts_unchecked(beta: Array2<f64>, b_rate: Option<Array2<f64>>) -> Self {
        VariationalState { beta, b_rate }
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn b_rate(&self) -> Option<&Array2<f64>> {
        self.b_rate.as_ref()
    }

    pub fn n_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_docs(&self) -> usize {
        self.beta.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Array2<f64>>) {
        (self.beta, self.b_rate)
    }
}

/// Solver selector. The string forms are the CLI/model-file tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Alternating multiplicative updates, no constraints.
    Mu,
    /// Joint updates with simplex-constrained `W`.
    MuJoint,
    /// Joint updates with both `W` and `H` on the simplex (PLSA EM).
    Plsa,
    /// Dirichlet–Poisson / LDA variational inference.
    Lda,
    /// Gamma–Poisson variational inference.
    Gap,
    /// `ℓ1`-penalized joint updates with simplex-constrained `W`.
    Sparse,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mu,
        Method::MuJoint,
        Method::Plsa,
        Method::Lda,
        Method::Gap,
        Method::Sparse,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Mu => "mu",
            Method::MuJoint => "mu-joint",
            Method::Plsa => "plsa",
            Method::Lda => "lda",
            Method::Gap => "gap",
            Method::Sparse => "sparse",
        }
    }

    pub fn constraint_mode(self) -> ConstraintMode {
        match self {
            Method::Mu => ConstraintMode::Unconstrained,
            Method::Plsa => ConstraintMode::BothSimplex,
            Method::MuJoint | Method::Lda | Method::Gap | Method::Sparse => ConstraintMode::WSimplex,
        }
    }

    pub fn is_variational(self) -> bool {
        matches!(self, Method::Lda | Method::Gap)
    }

    /// Whether the traced objective should go up (ELBO) rather than down.
    pub fn maximizes(self) -> bool {
        self.is_variational()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n_topics: usize,
    pub max_iters: usize,
    /// Stop when `|f_n − f_{n−1}| / max(1, |f_{n−1}|)` drops below this.
    pub rel_tolerance: f64,
    pub seed: u64,
    pub lambda_sparsity: f64,
    /// Entries are floored at `epsilon_floor · (column max)` after each
    /// multiplicative update.
    pub epsilon_floor: f64,
    pub method: Method,
}

impl FitConfig {
    pub const DEFAULT_MAX_ITERS: usize = 1000;
    pub const DEFAULT_REL_TOLERANCE: f64 = 1e-8;
    pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-12;

    pub fn new(method: Method, n_topics: usize) -> Self {
        FitConfig {
            n_topics,
            max_iters: Self::DEFAULT_MAX_ITERS,
            rel_tolerance: Self::DEFAULT_REL_TOLERANCE,
            seed: 0,
            lambda_sparsity: 0.0,
            epsilon_floor: Self::DEFAULT_EPSILON_FLOOR,
            method,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_topics == 0 {
            return Err(Error::InvalidParameter("n_topics must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::InvalidParameter("rel_tolerance must be > 0".into()));
        }
        if !(self.lambda_sparsity >= 0.0 && self.lambda_sparsity.is_finite()) {
            return Err(Error::InvalidParameter("lambda_sparsity must be >= 0".into()));
        }
        if !(self.epsilon_floor >= 0.0 && self.epsilon_floor < 1.0) {
            return Err(Error::InvalidParameter("epsilon_floor must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    /// KL (or KL + λ‖H‖₁ for the sparse method) for MU methods; ELBO for VI.
    pub objective: Vec<f64>,
    /// Full reconstruction evaluations consumed by each iteration.
    pub recon_evals: Vec<usize>,
    pub elapsed: Vec<Duration>,
}

impl FitTrace {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }

    pub(crate) fn push(&mut self, objective: f64, recon_evals: usize, elapsed: Duration) {
        self.objective.push(objective);
        self.recon_evals.push(recon_evals);
        self.elapsed.push(elapsed);
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective.last().copied()
    }
}
