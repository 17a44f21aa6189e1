//! Maps between solutions and iterates of the equivalent problems, penalty
//! absorption into normalized factors, and a fixed-point residual.
//!
//! Statements about global optima cannot be checked directly. What is
//! checkable, and what these maps are tested for, is that they preserve the
//! product `WH` or shift the objective by a known constant, and that fixed
//! points of one solver map to fixed points of the other.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::matrix::{normalize_columns, TermDocMatrix};
use crate::model::{check_simplex_columns, ConstraintMode, Factorization, Method, Priors, VariationalState};
use crate::mu::{mu_step, MuState};
use crate::objectives::kl_divergence;
use crate::updates::max_abs_diff;
use crate::vi::{dp_vi_step, gap_vi_step, ViModel, ViState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn scale_rows(h: &Array2<f64>, scales: &[f64]) -> Array2<f64> {
    let mut out = h.clone();
    for (mut row, &s) in out.axis_iter_mut(Axis(0)).zip(scales) {
        row.mapv_inplace(|x| x * s);
    }
    out
}

fn scale_cols(h: &Array2<f64>, f: impl Fn(usize) -> f64) -> Array2<f64> {
    let mut out = h.clone();
    for (d, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let s = f(d);
        col.mapv_inplace(|x| x * s);
    }
    out
}

/// `w̃_k = w_k / ‖w_k‖₁`, `h̃_k = ‖w_k‖₁ h_k`; the product is unchanged.
pub fn absorb_scaling(w: &Array2<f64>, h: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns but H has {} rows",
            w.ncols(),
            h.nrows()
        )));
    }
    let (wn, scales) = normalize_columns(w)?;
    Ok((wn, scale_rows(h, &scales)))
}

fn doc_lengths(x: &TermDocMatrix, h: &Array2<f64>) -> Result<Vec<f64>> {
    if h.ncols() != x.n_docs() {
        return Err(Error::DimensionMismatch(format!(
            "H has {} columns but X has {} documents",
            h.ncols(),
            x.n_docs()
        )));
    }
    let lens = x.col_sums().to_vec();
    if let Some(d) = lens.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::EmptyDocument(d));
    }
    Ok(lens)
}

/// `h_d ← h_d / λ_d`, turning a simplex-`W` model into a PLSA model.
///
/// The result lies on the simplex only when `Σ_k h_kd = λ_d`, which holds for
/// every iterate of the joint stepper after the first and hence at its fixed
/// points. Otherwise a `ConstraintViolation` is returned.
pub fn map_c1_to_c2(x: &TermDocMatrix, f: &Factorization) -> Result<Factorization> {
    check_simplex_columns("W", f.w())?;
    let lens = doc_lengths(x, f.h())?;
    let h = scale_cols(f.h(), |d| 1.0 / lens[d]);
    Factorization::new(f.w().clone(), h, ConstraintMode::BothSimplex)
}

/// `h_d ← λ_d h_d`, the inverse of [`map_c1_to_c2`].
pub fn map_c2_to_c1(x: &TermDocMatrix, f: &Factorization) -> Result<Factorization> {
    check_simplex_columns("W", f.w())?;
    let lens = doc_lengths(x, f.h())?;
    let h = scale_cols(f.h(), |d| lens[d]);
    Factorization::new(f.w().clone(), h, ConstraintMode::WSimplex)
}

/// `H ← H / (1 + λ)` (forward: plain to penalized) or `H ← (1 + λ) H`.
pub fn map_sparse_solution(f: &Factorization, lambda: f64, direction: Direction) -> Result<Factorization> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let c = match direction {
        Direction::Forward => 1.0 / (1.0 + lambda),
        Direction::Inverse => 1.0 + lambda,
    };
    Ok(Factorization::from_parts_unchecked(f.w().clone(), f.h() * c, f.mode()))
}

/// Forward attaches the stationary Gamma rates `b = 1 + a`, inverse drops them.
/// `β` is never touched.
///
/// With `require_uniform`, a non-uniform `a` is rejected because the
/// iterate identity between the two models then no longer holds.
pub fn map_gap_lda_state(
    state: &VariationalState,
    priors: &Priors,
    direction: Direction,
    require_uniform: bool,
) -> Result<VariationalState> {
    if priors.n_topics() != state.n_topics() {
        return Err(Error::DimensionMismatch(format!(
            "priors have K={}, beta has {} rows",
            priors.n_topics(),
            state.n_topics()
        )));
    }
    if require_uniform && !priors.has_uniform_rate() {
        return Err(Error::NonUniformRate);
    }
    let beta = state.beta().clone();
    match direction {
        Direction::Forward => {
            let b = priors.stationary_rates(state.n_docs());
            Ok(VariationalState::from_parts_unchecked(beta, Some(b)))
        }
        Direction::Inverse => Ok(VariationalState::from_parts_unchecked(beta, None)),
    }
}

/// `D_p(W) = diag(‖w_1‖_p, …, ‖w_K‖_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationMatrix {
    p: f64,
    scales: Vec<f64>,
}

impl NormalizationMatrix {
    pub fn of(w: &Array2<f64>, p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, inf), got {p}")));
        }
        let scales: Vec<f64> = w
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p))
            .collect();
        if let Some(k) = scales.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateColumn(k));
        }
        Ok(NormalizationMatrix { p, scales })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `D H`.
    pub fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        scale_rows(h, &self.scales)
    }

    /// `W D⁻¹`.
    pub fn normalize(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = w.clone();
        for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(&self.scales) {
            col.mapv_inplace(|x| x / s);
        }
        out
    }
}

/// A penalty `R` on the `K×D` coefficient matrix.
pub trait Penalty {
    fn value(&self, h: &Array2<f64>) -> f64;
}

impl<F: Fn(&Array2<f64>) -> f64> Penalty for F {
    fn value(&self, h: &Array2<f64>) -> f64 {
        self(h)
    }
}

/// `λ ‖H‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1 {
    pub lambda: f64,
}

impl Penalty for L1 {
    fn value(&self, h: &Array2<f64>) -> f64 {
        self.lambda * h.iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// `λ Σ_k ‖h_k‖_q^q` over rows `h_k`.
#[derive(Debug, Clone, Copy)]
pub struct PowerNorm {
    pub lambda: f64,
    pub q: f64,
}

impl Penalty for PowerNorm {
    fn value(&self, h: &Array2<f64>) -> f64 {
        self.lambda * h.iter().map(|x| x.abs().powf(self.q)).sum::<f64>()
    }
}

/// Result of [`absorb_penalty_general`].
#[derive(Debug, Clone)]
pub struct Absorbed {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub normalization: NormalizationMatrix,
    /// `D(X ‖ WH) + R(D_p(W) H)` at the input pair.
    pub general: f64,
    /// `D(X ‖ W̃H̃) + R(H̃)` at the mapped pair, where `‖w̃_k‖_p = 1`.
    pub reformulated: f64,
}

impl Absorbed {
    pub fn objective_gap(&self) -> f64 {
        (self.general - self.reformulated).abs()
    }
}

/// Moves the column scales of `W` into `H`: `(W D_p⁻¹, D_p H)`, and
/// evaluates both forms of the penalized KL objective.
pub fn absorb_penalty_general(
    x: &TermDocMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    p: f64,
    penalty: &impl Penalty,
) -> Result<Absorbed> {
    let normalization = NormalizationMatrix::of(w, p)?;
    let dh = normalization.apply(h);
    let general = kl_divergence(x, w, h)? + penalty.value(&dh);
    let wn = normalization.normalize(w);
    let reformulated = kl_divergence(x, &wn, &dh)? + penalty.value(&dh);
    Ok(Absorbed {
        w: wn,
        h: dh,
        normalization,
        general,
        reformulated,
    })
}

/// A model whose one-step change is measured by [`fixed_point_residual`].
#[derive(Debug, Clone, Copy)]
pub enum FixedPointModel<'a> {
    Nmf {
        factors: &'a Factorization,
        /// Only used by the sparse stepper.
        lambda: f64,
    },
    Variational {
        w: &'a Array2<f64>,
        state: &'a VariationalState,
        priors: &'a Priors,
    },
}

/// `max(‖W' − W‖_max, ‖H' − H‖_max)` (or `β` for VI) after one step of
/// `method`, using entry floor `floor`.
pub fn fixed_point_residual(x: &TermDocMatrix, model: FixedPointModel<'_>, method: Method, floor: f64) -> Result<f64> {
    match model {
        FixedPointModel::Nmf { factors, lambda } => {
            let state = MuState::new(x, factors.clone())?;
            let out = mu_step(x, &state, method, lambda, floor)?;
            let next = out.state.factors();
            Ok(max_abs_diff(next.w(), factors.w()).max(max_abs_diff(next.h(), factors.h())))
        }
        FixedPointModel::Variational { w, state, priors } => {
            let (model, step): (ViModel, fn(&TermDocMatrix, &ViState, &Priors, f64) -> Result<_>) = match method {
                Method::Lda => (ViModel::Dirichlet, dp_vi_step),
                Method::Gap => (ViModel::Gamma, gap_vi_step),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "{other} is not a variational method"
                    )))
                }
            };
            let s = ViState::new(x, model, w.clone(), priors, state.clone())?;
            let out = step(x, &s, priors, floor)?;
            let next = &out.state;
            let d_beta = max_abs_diff(next.variational().beta(), state.beta());
            Ok(max_abs_diff(next.w(), w).max(d_beta))
        }
    }
}

/// `Σ_k ‖w_k‖_p^q ‖h_k‖_q^q`, the absorbed form of `Σ_k ‖(D_p W H)_k‖_q^q`.
pub fn separable_penalty(w: &Array2<f64>, h: &Array2<f64>, p: f64, q: f64) -> Result<f64> {
    let d = NormalizationMatrix::of(w, p)?;
    let row_q: Array1<f64> = h.map_axis(Axis(1), |r| r.iter().map(|x| x.abs().powf(q)).sum());
    Ok(d.scales().iter().zip(row_q.iter()).map(|(s, r)| s.powf(q) * r).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn absorb_scaling_examples() {
        let (w, h) = absorb_scaling(&array![[2.0], [2.0]], &array![[1.0, 1.0]]).unwrap();
        assert_eq!(w, array![[0.5], [0.5]]);
        assert_eq!(h, array![[4.0, 4.0]]);
        let w0 = array![[0.25, 1.0], [0.75, 0.0]];
        let h0 = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(absorb_scaling(&w0, &h0).unwrap(), (w0, h0));
        assert!(matches!(
            absorb_scaling(&array![[0.0], [0.0]], &array![[1.0]]),
            Err(Error::DegenerateColumn(0))
        ));
    }

    #[test]
    fn c1_c2_maps() {
        let x = TermDocMatrix::from_dense(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let f = Factorization::new(array![[0.3], [0.7]], array![[4.0, 6.0]], ConstraintMode::WSimplex).unwrap();
        let g = map_c1_to_c2(&x, &f).unwrap();
        assert_eq!(g.h(), &array![[1.0, 1.0]]);
        assert_eq!(map_c2_to_c1(&x, &g).unwrap(), f);
        let empty = TermDocMatrix::from_dense(&array![[1.0, 0.0], [3.0, 0.0]]).unwrap();
        assert!(matches!(map_c1_to_c2(&empty, &f), Err(Error::EmptyDocument(1))));
    }

    #[test]
    fn sparse_map() {
        let f = Factorization::new(array![[0.3], [0.7]], array![[4.0, 6.0]], ConstraintMode::WSimplex).unwrap();
        let g = map_sparse_solution(&f, 1.0, Direction::Forward).unwrap();
        assert_eq!(g.h(), &array![[2.0, 3.0]]);
        assert_eq!(map_sparse_solution(&g, 1.0, Direction::Inverse).unwrap(), f);
    }

    #[test]
    fn gap_lda_state_map() {
        let p = Priors::symmetric(2, 0.5, 0.5).unwrap();
        let s = VariationalState::new(array![[1.0, 2.0], [3.0, 4.0]], None).unwrap();
        let g = map_gap_lda_state(&s, &p, Direction::Forward, true).unwrap();
        assert!(g.b_rate().unwrap().iter().all(|&b| b == 1.5));
        let back = map_gap_lda_state(&g, &p, Direction::Inverse, true).unwrap();
        assert_eq!(back, s);
        let q = Priors::new(vec![0.5, 0.5], vec![0.5, 1.0]).unwrap();
        assert!(matches!(
            map_gap_lda_state(&s, &q, Direction::Forward, true),
            Err(Error::NonUniformRate)
        ));
        assert!(map_gap_lda_state(&s, &q, Direction::Forward, false).is_ok());
    }

    #[test]
    fn penalty_absorption_p2_q1() {
        let x = TermDocMatrix::from_dense(&array![[1.0, 0.0], [2.0, 5.0], [0.0, 1.0]]).unwrap();
        let w = array![[1.0, 0.5], [2.0, 0.1], [0.3, 3.0]];
        let h = array![[0.5, 1.5], [0.2, 0.7]];
        let r = absorb_penalty_general(&x, &w, &h, 2.0, &L1 { lambda: 0.3 }).unwrap();
        assert!(r.objective_gap() < 1e-12);
        let direct = 0.3 * separable_penalty(&w, &h, 2.0, 1.0).unwrap();
        assert!((L1 { lambda: 0.3 }.value(&r.h) - direct).abs() < 1e-14);
        let unit = NormalizationMatrix::of(&r.w, 2.0).unwrap();
        assert!(unit.scales().iter().all(|s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn residual_is_zero_at_exact_fit() {
        let w = array![[0.5, 0.0], [0.5, 1.0]];
        let h = array![[2.0, 4.0], [6.0, 2.0]];
        let x = TermDocMatrix::from_dense(&w.dot(&h)).unwrap();
        let f = Factorization::new(w, h, ConstraintMode::WSimplex).unwrap();
        let r = fixed_point_residual(&x, FixedPointModel::Nmf { factors: &f, lambda: 0.0 }, Method::MuJoint, 0.0).unwrap();
        assert!(r <= 1e-14, "{r}");
    }
}
