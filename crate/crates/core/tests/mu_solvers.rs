use klnmf::init::init_factorization;
use klnmf::mu::{self, MuState};
use klnmf::objectives::kl_divergence;
use klnmf::synth::poisson_matrix;
use klnmf::{ConstraintMode, Error, Factorization, FitConfig, Method, TermDocMatrix};
use ndarray::{array, Array2};
use proptest::prelude::*;

const FLOOR: f64 = 1e-12;

fn state(x: &TermDocMatrix, w: Array2<f64>, h: Array2<f64>, mode: ConstraintMode) -> MuState {
    MuState::new(x, Factorization::new(w, h, mode).unwrap()).unwrap()
}

fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

fn two_by_two() -> TermDocMatrix {
    TermDocMatrix::from_dense(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap()
}

#[test]
fn alternating_scalar_trace() {
    // w ← 1·(3/1)/1 = 3, then h ← 1·3·(3/3)/3 = 1.
    let x = TermDocMatrix::from_dense(&array![[3.0]]).unwrap();
    let s = state(&x, array![[1.0]], array![[1.0]], ConstraintMode::Unconstrained);
    let out = mu::mu_step_alternating(&x, &s, FLOOR).unwrap();
    assert_eq!(out.state.factors().w(), &array![[3.0]]);
    assert_eq!(out.state.factors().h(), &array![[1.0]]);
    assert_eq!(out.recon_evals, 2);
    assert_eq!(out.objective, 0.0);
}

#[test]
fn exact_reconstruction_is_a_fixed_point() {
    let w = array![[1.0, 2.0], [3.0, 1.0], [2.0, 2.0]];
    let h = array![[1.0, 2.0, 4.0], [2.0, 1.0, 1.0]];
    let x = TermDocMatrix::from_dense(&w.dot(&h)).unwrap();
    let out = mu::mu_step_alternating(&x, &state(&x, w.clone(), h.clone(), ConstraintMode::Unconstrained), FLOOR).unwrap();
    assert!(close(out.state.factors().w(), &w, 1e-14));
    assert!(close(out.state.factors().h(), &h, 1e-14));

    let wn = array![[0.25, 0.5], [0.75, 0.5]];
    let hn = array![[4.0, 1.0], [2.0, 6.0]];
    let x = TermDocMatrix::from_dense(&wn.dot(&hn)).unwrap();
    let out = mu::mu_step_joint_wnorm(&x, &state(&x, wn.clone(), hn.clone(), ConstraintMode::WSimplex), FLOOR).unwrap();
    assert!(close(out.state.factors().w(), &wn, 1e-14));
    assert!(close(out.state.factors().h(), &hn, 1e-14));
}

#[test]
fn joint_single_topic_example() {
    let x = two_by_two();
    let s = state(&x, array![[0.5], [0.5]], array![[1.0, 1.0]], ConstraintMode::WSimplex);
    let out = mu::mu_step_joint_wnorm(&x, &s, FLOOR).unwrap();
    assert!(close(out.state.factors().w(), &array![[0.3], [0.7]], 1e-15));
    assert!(close(out.state.factors().h(), &array![[4.0, 6.0]], 1e-14));
    assert_eq!(out.recon_evals, 1);
}

#[test]
fn sparse_single_topic_example() {
    let x = two_by_two();
    let s = state(&x, array![[0.5], [0.5]], array![[1.0, 1.0]], ConstraintMode::WSimplex);
    let out = mu::mu_step_sparse(&x, &s, 1.0, FLOOR).unwrap();
    assert!(close(out.state.factors().h(), &array![[2.0, 3.0]], 1e-14));

    let plain = mu::mu_step_joint_wnorm(&x, &s, FLOOR).unwrap();
    let off = mu::mu_step_sparse(&x, &s, 0.0, FLOOR).unwrap();
    assert_eq!(plain.state.factors(), off.state.factors());
    assert_eq!(plain.objective, off.objective);
}

#[test]
fn both_normalized_single_topic_example() {
    let x = two_by_two();
    let s = state(&x, array![[0.5], [0.5]], array![[1.0, 1.0]], ConstraintMode::BothSimplex);
    let out = mu::mu_step_joint_bothnorm(&x, &s, FLOOR).unwrap();
    assert!(close(out.state.factors().w(), &array![[0.3], [0.7]], 1e-15));
    assert!(close(out.state.factors().h(), &array![[1.0, 1.0]], 1e-15));
}

#[test]
fn steppers_require_their_constraint_mode() {
    let x = two_by_two();
    let free = state(&x, array![[0.5], [0.5]], array![[1.0, 1.0]], ConstraintMode::Unconstrained);
    assert!(mu::mu_step_joint_wnorm(&x, &free, FLOOR).is_err());
    assert!(mu::mu_step_joint_bothnorm(&x, &free, FLOOR).is_err());
    assert!(mu::mu_step_sparse(&x, &free, 0.5, FLOOR).is_err());
}

#[test]
fn joint_steps_preserve_document_lengths() {
    let x = poisson_matrix(12, 8, 3, 40.0, 3).unwrap();
    let f = init_factorization(&x, 3, ConstraintMode::WSimplex, 5).unwrap();
    let mut s = MuState::new(&x, f).unwrap();
    for _ in 0..10 {
        s = mu::mu_step_joint_wnorm(&x, &s, FLOOR).unwrap().state;
        for (col, l) in s.factors().h().columns().into_iter().zip(x.col_sums()) {
            assert!((col.sum() - l).abs() <= 1e-12 * l);
        }
    }
}

#[test]
fn fit_with_one_iteration_calls_the_stepper_once() {
    let x = poisson_matrix(10, 6, 2, 30.0, 1).unwrap();
    for method in [Method::Mu, Method::MuJoint, Method::Plsa, Method::Sparse] {
        let mut cfg = FitConfig::new(method, 2);
        cfg.max_iters = 1;
        cfg.lambda_sparsity = 0.3;
        let init = init_factorization(&x, 2, method.constraint_mode(), 9).unwrap();
        let (_, trace) = mu::fit(&x, &cfg, init).unwrap();
        assert_eq!(trace.len(), 1);
        let expected = if method == Method::Mu { 2 } else { 1 };
        assert_eq!(trace.recon_evals, vec![expected]);
    }
}

#[test]
fn rank_one_data_is_fit_exactly() {
    let w = array![[0.2], [0.3], [0.5]];
    let h = array![[10.0, 20.0, 5.0, 7.0]];
    let x = TermDocMatrix::from_dense(&w.dot(&h)).unwrap();
    for method in [Method::Mu, Method::MuJoint] {
        let mut cfg = FitConfig::new(method, 1);
        cfg.max_iters = 200;
        let init = init_factorization(&x, 1, method.constraint_mode(), 42).unwrap();
        let (f, trace) = mu::fit(&x, &cfg, init).unwrap();
        assert!(trace.len() <= 200);
        let kl = kl_divergence(&x, f.w(), f.h()).unwrap();
        assert!(kl <= 1e-8, "{method}: KL {kl}");
    }
}

#[test]
fn fit_rejects_mismatched_inits() {
    let x = poisson_matrix(10, 6, 2, 30.0, 1).unwrap();
    let cfg = FitConfig::new(Method::Plsa, 2);
    let init = init_factorization(&x, 2, ConstraintMode::WSimplex, 9).unwrap();
    assert!(matches!(mu::fit(&x, &cfg, init), Err(Error::ConstraintViolation(_))));
    let init = init_factorization(&x, 3, ConstraintMode::BothSimplex, 9).unwrap();
    assert!(matches!(mu::fit(&x, &cfg, init), Err(Error::DimensionMismatch(_))));
    let init = init_factorization(&x, 2, ConstraintMode::BothSimplex, 9).unwrap();
    assert!(mu::fit(&x, &FitConfig::new(Method::Lda, 2), init).is_err());
}

#[test]
fn fits_are_deterministic() {
    let x = poisson_matrix(15, 10, 3, 50.0, 8).unwrap();
    let run = || {
        let init = init_factorization(&x, 3, ConstraintMode::WSimplex, 77).unwrap();
        mu::fit(&x, &FitConfig::new(Method::MuJoint, 3), init).unwrap()
    };
    let ((a, ta), (b, tb)) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(ta.objective, tb.objective);
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_iterates() {
    let x = poisson_matrix(30, 20, 5, 100.0, 4).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let init = init_factorization(&x, 5, ConstraintMode::Unconstrained, 3).unwrap();
            let mut cfg = FitConfig::new(Method::Mu, 5);
            cfg.max_iters = 50;
            mu::fit(&x, &cfg, init).unwrap()
        })
    };
    let (a, ta) = run(1);
    for threads in [2, 3, 8] {
        let (b, tb) = run(threads);
        assert_eq!(a, b);
        assert_eq!(ta.objective, tb.objective);
    }
}

fn col_sums(m: &Array2<f64>) -> Vec<f64> {
    m.columns().into_iter().map(|c| c.sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn descent_and_constraints_hold(
        v in 2usize..8, d in 2usize..8, k in 1usize..4,
        data_seed in 0u64..1000, init_seed in 0u64..1000, lambda in 0.0f64..2.0,
    ) {
        let x = poisson_matrix(v, d, k, 20.0, data_seed).unwrap();
        for method in [Method::Mu, Method::MuJoint, Method::Plsa, Method::Sparse] {
            let f = init_factorization(&x, k, method.constraint_mode(), init_seed).unwrap();
            let mut s = MuState::new(&x, f).unwrap();
            let mut prev = mu::mu_objective(&x, &s, method, lambda).unwrap();
            for _ in 0..20 {
                let out = mu::mu_step(&x, &s, method, lambda, FLOOR).unwrap();
                prop_assert!(out.objective.is_finite());
                prop_assert!(out.objective <= prev + 1e-9 * prev.abs().max(1.0), "{method}: {prev} -> {}", out.objective);
                prev = out.objective;
                s = out.state;
                let f = s.factors();
                prop_assert!(f.w().iter().chain(f.h().iter()).all(|&e| e >= 0.0));
                if method != Method::Mu {
                    prop_assert!(col_sums(f.w()).iter().all(|c| (c - 1.0).abs() <= 1e-12));
                }
                if method == Method::Plsa {
                    prop_assert!(col_sums(f.h()).iter().all(|c| (c - 1.0).abs() <= 1e-12));
                }
            }
        }
    }
}
