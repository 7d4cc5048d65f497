//! Problem model `dx = f(x,t) dt + S(t) x dw` and the determining-equation
//! oracle for candidate symmetries `φ ∂_x + R w ∂_w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr, Var};

/// Seed of the residual sample set unless overridden.
pub const DEFAULT_SEED: u64 = 0x5EED_2024;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Sample box for numeric residual checks.
pub const X_RANGE: (f64, f64) = (0.1, 10.0);
pub const T_RANGE: (f64, f64) = (0.0, 2.0);
pub const W_RANGE: (f64, f64) = (-2.0, 2.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("drift must not depend on w")]
    DriftDependsOnW,
    #[error("noise factor S must depend on t only")]
    NoiseNotTimeOnly,
    #[error("noise factor S is identically zero")]
    ZeroNoise,
    #[error("symmetry coefficient phi is identically zero")]
    ZeroPhi,
    #[error("invalid verify arguments: {0}")]
    InvalidArgument(String),
    #[error("residual {which} could not be evaluated at (x={x}, t={t}, w={w}): {source}")]
    Domain { which: u8, x: f64, t: f64, w: f64, source: EvalError },
}

#[derive(Debug, Clone)]
pub struct SdeProblem {
    pub f: Expr,
    pub s: Expr,
    pub bindings: Bindings,
}

impl SdeProblem {
    pub fn new(f: Expr, s: Expr, bindings: Bindings) -> Result<Self, SdeError> {
        let f = f.simplify();
        let s = s.simplify();
        if f.depends_on(Var::W) || f.depends_on(Var::Y) {
            return Err(SdeError::DriftDependsOnW);
        }
        if s.depends_on_any(&[Var::X, Var::W, Var::Y]) {
            return Err(SdeError::NoiseNotTimeOnly);
        }
        if s.is_zero() || s.bind(&bindings).is_zero() {
            return Err(SdeError::ZeroNoise);
        }
        Ok(SdeProblem { f, s, bindings })
    }

    /// Diffusion coefficient `σ = S(t) x`.
    pub fn sigma(&self) -> Expr {
        Expr::product(vec![self.s.clone(), Expr::x()]).simplify()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCandidate {
    pub r: f64,
    pub phi: Expr,
}

impl SymmetryCandidate {
    pub fn new(r: f64, phi: Expr) -> Result<Self, SdeError> {
        let phi = phi.simplify();
        if phi.is_zero() {
            return Err(SdeError::ZeroPhi);
        }
        Ok(SymmetryCandidate { r, phi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroStatus {
    Zero,
    Nonzero,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub res1: String,
    pub res2: String,
    pub symbolic_zero1: ZeroStatus,
    pub symbolic_zero2: ZeroStatus,
    pub numeric_max1: f64,
    pub numeric_max2: f64,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub verdict: Verdict,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// `Δψ = ψ_ww + 2 σ ψ_xw + σ² ψ_xx` with `σ = S x`.
pub fn ito_laplacian(psi: &Expr, problem: &SdeProblem) -> Expr {
    let sigma = problem.sigma();
    let psi_x = psi.diff(Var::X);
    Expr::sum(vec![
        psi.diff(Var::W).diff(Var::W),
        Expr::product(vec![Expr::int(2), sigma.clone(), psi_x.diff(Var::W)]),
        Expr::product(vec![sigma.pow(Expr::int(2)), psi_x.diff(Var::X)]),
    ])
    .simplify()
}

/// `φ_t + f φ_x − φ f_x + ½ Δφ`.
pub fn residual_deq1(problem: &SdeProblem, cand: &SymmetryCandidate) -> Expr {
    let phi = &cand.phi;
    let f = &problem.f;
    Expr::sum(vec![
        phi.diff(Var::T),
        Expr::product(vec![f.clone(), phi.diff(Var::X)]),
        -Expr::product(vec![phi.clone(), f.diff(Var::X)]),
        Expr::product(vec![Expr::rational(1, 2), ito_laplacian(phi, problem)]),
    ])
    .simplify()
}

/// `φ_w + S x φ_x − φ S − R S x`.
pub fn residual_deq2(problem: &SdeProblem, cand: &SymmetryCandidate) -> Expr {
    let phi = &cand.phi;
    let s = &problem.s;
    Expr::sum(vec![
        phi.diff(Var::W),
        Expr::product(vec![s.clone(), Expr::x(), phi.diff(Var::X)]),
        -Expr::product(vec![phi.clone(), s.clone()]),
        -Expr::product(vec![Expr::float(cand.r), s.clone(), Expr::x()]),
    ])
    .simplify()
}

/// Symbolic zero test: literal zero before or after binding parameters,
/// a nonzero constant once bound, otherwise undecided.
pub fn symbolic_zero(e: &Expr, b: &Bindings) -> ZeroStatus {
    if e.is_zero() {
        return ZeroStatus::Zero;
    }
    let bound = e.bind(b);
    if bound.is_zero() {
        return ZeroStatus::Zero;
    }
    match bound.as_number() {
        Some(_) => ZeroStatus::Nonzero,
        None => ZeroStatus::Undecided,
    }
}

/// Uniform sample points `(x, t, w)` in the residual box.
pub fn sample_points(seed: u64, samples: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            (
                rng.random_range(X_RANGE.0..=X_RANGE.1),
                rng.random_range(T_RANGE.0..=T_RANGE.1),
                rng.random_range(W_RANGE.0..=W_RANGE.1),
            )
        })
        .collect()
}

fn numeric_max(e: &Expr, which: u8, pts: &[(f64, f64, f64)], b: &Bindings) -> Result<f64, SdeError> {
    let bound = e.bind(b);
    let mut max: f64 = 0.0;
    for &(x, t, w) in pts {
        let v = bound
            .eval_xtw(x, t, w, b)
            .map_err(|source| SdeError::Domain { which, x, t, w, source })?;
        max = max.max(v.abs());
    }
    Ok(max)
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: DEFAULT_SAMPLES, tol: DEFAULT_TOL, seed: DEFAULT_SEED }
    }
}

/// Checks both determining equations symbolically and at `samples` random
/// points of the sample box with absolute tolerance `tol`.
pub fn verify(
    problem: &SdeProblem,
    cand: &SymmetryCandidate,
    samples: usize,
    tol: f64,
) -> Result<ResidualReport, SdeError> {
    verify_with(problem, cand, VerifyOptions { samples, tol, ..Default::default() })
}

pub fn verify_with(
    problem: &SdeProblem,
    cand: &SymmetryCandidate,
    opts: VerifyOptions,
) -> Result<ResidualReport, SdeError> {
    if opts.samples == 0 {
        return Err(SdeError::InvalidArgument("samples must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(SdeError::InvalidArgument("tol must be positive".into()));
    }
    if cand.phi.is_zero() {
        return Err(SdeError::ZeroPhi);
    }
    let res1 = residual_deq1(problem, cand);
    let res2 = residual_deq2(problem, cand);
    let b = &problem.bindings;
    let z1 = symbolic_zero(&res1, b);
    let z2 = symbolic_zero(&res2, b);
    let pts = sample_points(opts.seed, opts.samples);
    let m1 = numeric_max(&res1, 1, &pts, b)?;
    let m2 = numeric_max(&res2, 2, &pts, b)?;
    let ok = |z: ZeroStatus, m: f64| z == ZeroStatus::Zero || (z != ZeroStatus::Nonzero && m <= opts.tol);
    let verdict = if ok(z1, m1) && ok(z2, m2) { Verdict::Pass } else { Verdict::Fail };
    Ok(ResidualReport {
        res1: res1.to_string(),
        res2: res2.to_string(),
        symbolic_zero1: z1,
        symbolic_zero2: z2,
        numeric_max1: m1,
        numeric_max2: m2,
        seed: opts.seed,
        samples: opts.samples,
        tol: opts.tol,
        verdict,
    })
}
