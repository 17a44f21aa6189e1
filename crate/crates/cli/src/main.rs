//! `klnmf`: ingest corpora, fit models, inspect topics, evaluate objectives
//! and run the matched-initialization equivalence checks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (including `compare` runs that miss their tolerance).

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use klnmf::equivalence::{map_gap_lda_state, Direction};
use klnmf::init::{init_factorization, init_variational};
use klnmf::io::{
    ingest_corpus, load_matrix_market, load_model, load_vocabulary, save_matrix_market, save_model, save_trace,
    save_vocabulary, ModelFile,
};
use klnmf::mu::{self, MuState};
use klnmf::objectives::{gap_elbo, kl_divergence, lda_elbo, plsa_log_likelihood, sparse_objective};
use klnmf::reference::plsa_em_step;
use klnmf::vi::{self, ViModel, ViState};
use klnmf::{ConstraintMode, ErrorClass, Factorization, FitConfig, Method, Priors, TermDocMatrix, VariationalState};
use ndarray::Array2;

#[derive(Parser)]
#[command(name = "klnmf", version, about = "KL-divergence NMF and topic models")]
struct Cli {
    /// Worker threads for the solvers (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a term-document matrix and vocabulary from a directory of text files.
    Ingest(IngestArgs),
    /// Fit a model to a MatrixMarket matrix.
    Fit(FitArgs),
    /// Print the top terms of every topic.
    Topics(TopicsArgs),
    /// Evaluate the objectives of a saved model on a matrix.
    Eval(EvalArgs),
    /// Run two solvers from a shared initialization and report their deviation.
    Compare(CompareArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    min_count: usize,
    #[arg(long)]
    out_matrix: PathBuf,
    #[arg(long)]
    out_vocab: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    topics: u64,
    /// Dirichlet/Gamma shape: one value or a comma-separated list of K (default 1/K).
    #[arg(long)]
    alpha: Option<String>,
    /// Gamma rate for `gap`: one value or a list of K (default 1).
    #[arg(long)]
    rate_a: Option<String>,
    /// Sparsity weight, required by `sparse`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = FitConfig::DEFAULT_MAX_ITERS)]
    max_iter: usize,
    #[arg(long, default_value_t = FitConfig::DEFAULT_REL_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pair {
    /// Joint MU with simplex W vs simplex W and H: equal W, H scaled by doc length.
    #[value(name = "alg4-alg5")]
    JointScaling,
    /// ℓ1-penalized vs plain joint MU: equal W, H shrunk by 1/(1+λ).
    SparsePlain,
    /// Gamma–Poisson vs Dirichlet–Poisson VI with a shared rate: equal (W, β).
    GapLda,
    /// Joint MU on both simplices vs an explicit-responsibility PLSA EM.
    PlsaRef,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    pair: Pair,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    tol: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    topics: u64,
    /// Sparsity weight for `sparse-plain`.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|_| {
        let tags: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
        format!("expected one of {}", tags.join(", "))
    })
}

enum Failure {
    Usage(String),
    Lib(klnmf::Error),
    Tolerance,
}

impl From<klnmf::Error> for Failure {
    fn from(e: klnmf::Error) -> Self {
        Failure::Lib(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Tolerance => write!(f, "tolerance not met"),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Lib(e) => match e.class() {
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
            Failure::Tolerance => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// A scalar broadcast to `k` entries, or an explicit comma-separated list.
fn per_topic(flag: &str, raw: Option<&str>, k: usize, default: f64) -> CliResult<Vec<f64>> {
    let Some(raw) = raw else {
        return Ok(vec![default; k]);
    };
    let vals = raw
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("--{flag}: {e}")))?;
    match vals.len() {
        1 => Ok(vec![vals[0]; k]),
        n if n == k => Ok(vals),
        n => Err(usage(format!("--{flag} has {n} values, expected 1 or K={k}"))),
    }
}

fn load_input(path: &PathBuf) -> CliResult<TermDocMatrix> {
    let x = load_matrix_market(path)?;
    if let Some(&d) = x.empty_docs().first() {
        return Err(klnmf::Error::EmptyDocument(d).into());
    }
    Ok(x)
}

fn ingest(a: IngestArgs) -> CliResult {
    let (x, vocab) = ingest_corpus(&a.corpus, a.min_count)?;
    save_matrix_market(&a.out_matrix, &x)?;
    save_vocabulary(&a.out_vocab, &vocab)?;
    println!("V={} D={} nnz={}", x.n_terms(), x.n_docs(), x.nnz());
    Ok(())
}

fn fit(a: FitArgs) -> CliResult {
    let method = a.method;
    let k = a.topics as usize;
    match (method, a.lambda) {
        (Method::Sparse, None) => return Err(usage("--method sparse requires --lambda")),
        (Method::Sparse, Some(l)) if !(l >= 0.0 && l.is_finite()) => {
            return Err(usage(format!("--lambda must be a non-negative number, got {l}")))
        }
        (Method::Sparse, _) => {}
        (_, Some(_)) => return Err(usage("--lambda only applies to --method sparse")),
        _ => {}
    }
    if a.alpha.is_some() && !method.is_variational() {
        return Err(usage("--alpha only applies to --method lda or gap"));
    }
    if a.rate_a.is_some() && method != Method::Gap {
        return Err(usage("--rate-a only applies to --method gap"));
    }
    let mut cfg = FitConfig::new(method, k);
    cfg.max_iters = a.max_iter;
    cfg.rel_tolerance = a.tol;
    cfg.seed = a.seed;
    cfg.lambda_sparsity = a.lambda.unwrap_or(0.0);
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let x = load_input(&a.input)?;
    let (model, trace) = if method.is_variational() {
        let alpha = per_topic("alpha", a.alpha.as_deref(), k, 1.0 / k as f64)?;
        let rate = per_topic("rate-a", a.rate_a.as_deref(), k, 1.0)?;
        let priors = Priors::new(alpha, rate).map_err(|e| usage(e.to_string()))?;
        let (w0, beta0) = init_variational(&x, &priors, cfg.seed, false)?;
        let (w, state, trace) = vi::fit_vi(&x, &cfg, &priors, w0, beta0)?;
        let last = trace.final_objective().expect("at least one iteration");
        (ModelFile::from_variational(method, &w, &state, &priors, last, Some(&trace)), trace)
    } else {
        let init = init_factorization(&x, k, method.constraint_mode(), cfg.seed)?;
        let (f, trace) = mu::fit(&x, &cfg, init)?;
        let last = trace.final_objective().expect("at least one iteration");
        (ModelFile::from_factorization(method, &f, cfg.lambda_sparsity, last, Some(&trace)), trace)
    };
    save_model(&a.output, &model)?;
    if let Some(path) = &a.trace {
        save_trace(path, &trace)?;
    }
    let kind = if method.maximizes() { "elbo" } else { "objective" };
    println!("method={method} K={k} iterations={} {kind}={}", trace.len(), model.final_objective);
    Ok(())
}

fn topics(a: TopicsArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let vocab = load_vocabulary(&a.vocab)?;
    if vocab.len() != model.n_terms {
        return Err(klnmf::Error::DimensionMismatch(format!(
            "vocabulary has {} terms, model has V={}",
            vocab.len(),
            model.n_terms
        ))
        .into());
    }
    let w = model.w()?;
    let top = (a.top as usize).min(w.nrows());
    for (k, col) in w.columns().into_iter().enumerate() {
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by(|&i, &j| col[j].total_cmp(&col[i]).then(i.cmp(&j)));
        let terms: Vec<&str> = order[..top].iter().map(|&v| vocab.term(v).expect("checked length")).collect();
        println!("topic {k}: {}", terms.join(" "));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let x = load_input(&a.input)?;
    if (x.n_terms(), x.n_docs()) != (model.n_terms, model.n_docs) {
        return Err(klnmf::Error::DimensionMismatch(format!(
            "matrix is {}x{}, model has V={} D={}",
            x.n_terms(),
            x.n_docs(),
            model.n_terms,
            model.n_docs
        ))
        .into());
    }
    match model.method {
        Method::Lda | Method::Gap => {
            let (w, state, priors) = model.variational()?;
            let elbo = if model.method == Method::Lda {
                lda_elbo(&x, &w, &priors, &state)?
            } else {
                gap_elbo(&x, &w, &priors, &state)?
            };
            println!("elbo {elbo}");
        }
        method => {
            let f = model.factorization()?;
            println!("kl {}", kl_divergence(&x, f.w(), f.h())?);
            match method {
                Method::Plsa => println!("plsa_loglik {}", plsa_log_likelihood(&x, f.w(), f.h())?),
                Method::Sparse => println!("kl_l1 {}", sparse_objective(&x, f.w(), f.h(), model.lambda)?),
                _ => {}
            }
        }
    }
    Ok(())
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn scale_cols(h: &Array2<f64>, s: &[f64]) -> Array2<f64> {
    let mut out = h.clone();
    for (mut c, &f) in out.columns_mut().into_iter().zip(s) {
        c.mapv_inplace(|v| v * f);
    }
    out
}

const FLOOR: f64 = FitConfig::DEFAULT_EPSILON_FLOOR;

/// Named maximum deviations over all iterations.
fn compare_pair(x: &TermDocMatrix, a: &CompareArgs) -> CliResult<Vec<(&'static str, f64)>> {
    let k = a.topics as usize;
    let (mut dw, mut dh) = (0.0f64, 0.0f64);
    let devs = match a.pair {
        Pair::JointScaling => {
            let f5 = init_factorization(x, k, ConstraintMode::BothSimplex, a.seed)?;
            let (w, h) = f5.clone().into_parts();
            let mut s4 = MuState::new(x, Factorization::new(w, h, ConstraintMode::WSimplex)?)?;
            let mut s5 = MuState::new(x, f5)?;
            for _ in 0..a.iters {
                s4 = mu::mu_step_joint_wnorm(x, &s4, FLOOR)?.state;
                s5 = mu::mu_step_joint_bothnorm(x, &s5, FLOOR)?.state;
                let (p, q) = (s4.factors(), s5.factors());
                dw = dw.max(max_abs(p.w(), q.w()));
                dh = dh.max(max_abs(p.h(), &scale_cols(q.h(), x.col_sums())));
            }
            vec![("W", dw), ("H - diag(doc length) H", dh)]
        }
        Pair::SparsePlain => {
            if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
                return Err(usage(format!("--lambda must be a non-negative number, got {}", a.lambda)));
            }
            let f = init_factorization(x, k, ConstraintMode::WSimplex, a.seed)?;
            let mut plain = MuState::new(x, f.clone())?;
            let mut sparse = MuState::new(x, f)?;
            for _ in 0..a.iters {
                plain = mu::mu_step_joint_wnorm(x, &plain, FLOOR)?.state;
                sparse = mu::mu_step_sparse(x, &sparse, a.lambda, FLOOR)?.state;
                let (p, q) = (plain.factors(), sparse.factors());
                dw = dw.max(max_abs(p.w(), q.w()));
                dh = dh.max(max_abs(&(p.h() / (1.0 + a.lambda)), q.h()));
            }
            vec![("W", dw), ("H/(1+lambda) - H_sparse", dh)]
        }
        Pair::GapLda => {
            let priors = Priors::symmetric(k, 1.0 / k as f64, 1.0)?;
            let (w, beta) = init_variational(x, &priors, a.seed, true)?;
            let state = VariationalState::new(beta, None)?;
            let gstate = map_gap_lda_state(&state, &priors, Direction::Forward, true)?;
            let mut lda = ViState::new(x, ViModel::Dirichlet, w.clone(), &priors, state)?;
            let mut gap = ViState::new(x, ViModel::Gamma, w, &priors, gstate)?;
            let stationary = 1.0 + priors.rate_a()[0];
            let mut db = 0.0f64;
            for _ in 0..a.iters {
                lda = vi::dp_vi_step(x, &lda, &priors, FLOOR)?.state;
                gap = vi::gap_vi_step(x, &gap, &priors, FLOOR)?.state;
                dw = dw.max(max_abs(lda.w(), gap.w()));
                db = db.max(max_abs(lda.variational().beta(), gap.variational().beta()));
                let b = gap.variational().b_rate().expect("gamma state carries rates");
                dh = dh.max(b.iter().map(|&v| (v - stationary).abs()).fold(0.0, f64::max));
            }
            vec![("W", dw), ("beta", db), ("b_rate - (1 + a)", dh)]
        }
        Pair::PlsaRef => {
            let f = init_factorization(x, k, ConstraintMode::BothSimplex, a.seed)?;
            let (mut rw, mut rh) = (f.w().clone(), f.h().clone());
            let mut s = MuState::new(x, f)?;
            for _ in 0..a.iters {
                s = mu::mu_step_joint_bothnorm(x, &s, FLOOR)?.state;
                (rw, rh) = plsa_em_step(x, &rw, &rh, FLOOR)?;
                dw = dw.max(max_abs(s.factors().w(), &rw));
                dh = dh.max(max_abs(s.factors().h(), &rh));
            }
            vec![("W", dw), ("H", dh)]
        }
    };
    Ok(devs)
}

fn compare(a: CompareArgs) -> CliResult {
    if a.tol.is_nan() || a.tol < 0.0 {
        return Err(usage(format!("--tol must be non-negative, got {}", a.tol)));
    }
    let x = load_input(&a.input)?;
    let devs = compare_pair(&x, &a)?;
    let mut ok = true;
    for (name, d) in &devs {
        let pass = *d <= a.tol;
        ok &= pass;
        println!("max |{name}| = {d:e} ({})", if pass { "ok" } else { "over tolerance" });
    }
    println!("{} after {} iterations (tol {:e})", if ok { "PASS" } else { "FAIL" }, a.iters, a.tol);
    if ok {
        Ok(())
    } else {
        Err(Failure::Tolerance)
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: Option<u64>) -> CliResult {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: Option<u64>) -> CliResult {
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    set_threads(cli.threads)?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Fit(a) => fit(a),
        Command::Topics(a) => topics(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !matches!(f, Failure::Tolerance) {
                eprintln!("error: {f}");
            }
            ExitCode::from(f.code())
        }
    }
}
