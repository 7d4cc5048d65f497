//! Integration by the symmetry-adapted variable `y = ∫ dx/φ`.
//!
//! [`integrate_inverse_phi`] builds the transform, [`reduce`] applies the Ito
//! formula and checks that the new coefficients do not depend on the state,
//! and [`solve_pathwise`] integrates `dy = a dt + b dw` along a Wiener path.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::classifier::split_term;
use crate::expr::{integrate_t, Bindings, EvalError, Expr, Node, Point, Var};
use crate::quad::adaptive_simpson;
use crate::sde::{SdeProblem, SymmetryCandidate, X_RANGE};

/// Relative tolerance for the state-independence check.
pub const Y_INDEPENDENCE_TOL: f64 = 1e-8;

const CHECK_T: [f64; 3] = [0.3, 1.1, 1.9];
const CHECK_W: [f64; 3] = [-1.1, 0.2, 1.3];
const CHECK_POINTS: usize = 10;
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KozlovError {
    #[error("no closed-form or numeric transform for phi = {phi}: {reason}")]
    UnsupportedPhiShape { phi: String, reason: String },
    #[error("reduced coefficients depend on the state ({detail})")]
    ReductionFailed { detail: String, evaluations: Vec<Evaluation> },
    #[error("evaluation failed at x={x}, t={t}, w={w}: {source}")]
    Domain { x: f64, t: f64, w: f64, source: EvalError },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One sample of the reduced coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub x: f64,
    pub t: f64,
    pub w: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `c x`
    Linear,
    /// `x (ρ log x + θ)`
    LogLinear,
    /// `C x^(1+β)`
    Power,
    /// `A x + C x^(1+β)`, including `K x + C x²` and `K x + C`.
    LinearPlusPower,
    /// Anything else: `y` by numerical quadrature in `x`.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub phi: Expr,
    pub shape: Shape,
    /// `y` in `(x, t, w)`; `None` for quadrature transforms.
    pub y_of: Option<Expr>,
    /// Inverse branches in `(y, t, w)`.
    pub x_of: Vec<Expr>,
    pub valid_domain: String,
    pub bindings: Bindings,
    /// Lower limit of the quadrature transform.
    pub x_ref: f64,
    jet: PhiJetExprs,
}

impl Transform {
    pub fn y(&self, x: f64, t: f64, w: f64) -> Result<f64, KozlovError> {
        match &self.y_of {
            Some(e) => eval(e, Point::new(x, t, w), &self.bindings),
            None => self.quad(x, t, w, |phi, _| 1.0 / phi.value),
        }
    }

    pub fn phi_at(&self, x: f64, t: f64, w: f64) -> Result<f64, KozlovError> {
        eval(&self.phi, Point::new(x, t, w), &self.bindings)
    }

    /// The inverse on `branch`, or by Newton iteration from `guess` for
    /// quadrature transforms.
    pub fn x(&self, y: f64, t: f64, w: f64, branch: usize, guess: f64) -> Result<f64, KozlovError> {
        if let Some(e) = self.x_of.get(branch) {
            return eval(e, Point::new(0.0, t, w).with_y(y), &self.bindings);
        }
        if !self.x_of.is_empty() {
            return Err(KozlovError::InvalidArgument(format!("no inverse branch {branch}")));
        }
        let mut x = guess;
        for _ in 0..60 {
            let r = self.y(x, t, w)? - y;
            let phi = self.phi_at(x, t, w)?;
            let mut next = x - r * phi;
            if !next.is_finite() {
                break;
            }
            if next <= 0.0 {
                next = 0.5 * x;
            }
            let done = (next - x).abs() <= 1e-14 * x.abs();
            x = next;
            if done {
                return Ok(x);
            }
        }
        let r = self.y(x, t, w)? - y;
        if r.abs() <= 1e-10 * y.abs().max(1.0) {
            Ok(x)
        } else {
            Err(KozlovError::Domain {
                x,
                t,
                w,
                source: EvalError::Domain(format!("inverse transform did not converge (residual {r:e})")),
            })
        }
    }

    /// The branch whose inverse reproduces `x0` at `t = w = 0`.
    pub fn branch_for(&self, x0: f64) -> Result<usize, KozlovError> {
        if self.x_of.is_empty() {
            return Ok(0);
        }
        let y0 = self.y(x0, 0.0, 0.0)?;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.x_of.len() {
            if let Ok(x) = self.x(y0, 0.0, 0.0, i, x0) {
                let d = (x - x0).abs();
                if d.is_finite() && best.is_none_or(|(_, b)| d < b) {
                    best = Some((i, d));
                }
            }
        }
        match best {
            Some((i, d)) if d <= 1e-8 * x0.abs().max(1.0) => Ok(i),
            _ => Err(KozlovError::InvalidArgument(format!("no inverse branch reproduces x0 = {x0}"))),
        }
    }

    /// `∫_{x_ref}^x g(φ-derivatives) dξ` for quadrature transforms.
    fn quad(&self, x: f64, t: f64, w: f64, g: impl Fn(PhiJet, f64) -> f64) -> Result<f64, KozlovError> {
        adaptive_simpson(
            |xi| self.jet.eval(xi, t, w, &self.bindings).map(|j| g(j, xi)),
            self.x_ref,
            x,
            QUAD_TOL,
        )
    }
}

/// φ and the derivatives the Ito formula needs, at one point.
#[derive(Debug, Clone, Copy)]
struct PhiJet {
    value: f64,
    dx: f64,
    dt: f64,
    dw: f64,
    dww: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PhiJetExprs {
    value: Expr,
    dx: Expr,
    dt: Expr,
    dw: Expr,
    dww: Expr,
}

impl PhiJetExprs {
    fn new(phi: &Expr) -> Self {
        let dw = phi.diff(Var::W);
        PhiJetExprs { value: phi.clone(), dx: phi.diff(Var::X), dt: phi.diff(Var::T), dww: dw.diff(Var::W), dw }
    }

    fn eval(&self, x: f64, t: f64, w: f64, b: &Bindings) -> Result<PhiJet, KozlovError> {
        let p = Point::new(x, t, w);
        Ok(PhiJet {
            value: eval(&self.value, p, b)?,
            dx: eval(&self.dx, p, b)?,
            dt: eval(&self.dt, p, b)?,
            dw: eval(&self.dw, p, b)?,
            dww: eval(&self.dww, p, b)?,
        })
    }
}

fn eval(e: &Expr, p: Point, b: &Bindings) -> Result<f64, KozlovError> {
    let v = e.eval(&p, b).map_err(|source| KozlovError::Domain { x: p.x, t: p.t, w: p.w, source })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(KozlovError::Domain { x: p.x, t: p.t, w: p.w, source: EvalError::Domain(format!("non-finite value of {e}")) })
    }
}

/// Groups the expanded terms of φ by `(x-power, log count)`.
fn phi_groups(phi: &Expr) -> Option<Vec<(Expr, u32, Expr)>> {
    let mut groups: Vec<(Expr, u32, Vec<Expr>)> = Vec::new();
    for term in phi.terms() {
        let (p, l, c) = split_term(&term)?;
        match groups.iter_mut().find(|g| g.0 == p && g.1 == l) {
            Some(g) => g.2.push(c),
            None => groups.push((p, l, vec![c])),
        }
    }
    Some(groups.into_iter().map(|(p, l, c)| (p, l, Expr::sum(c).simplify())).collect())
}

/// `y = ∫ dx/φ` with the integration constant set to zero.
pub fn integrate_inverse_phi(cand: &SymmetryCandidate, bindings: &Bindings) -> Result<Transform, KozlovError> {
    let phi = cand.phi.simplify();
    let one = Expr::one();
    let x = Expr::x();
    let y = Expr::y();
    let groups = phi_groups(&phi).unwrap_or_default();
    let find = |p: &Expr, l: u32| groups.iter().find(|g| &g.0 == p && g.1 == l).map(|g| g.2.clone());
    let plain: Vec<&(Expr, u32, Expr)> = groups.iter().filter(|g| g.1 == 0).collect();

    let closed = |shape, y_of: Expr, x_of: Vec<Expr>| Transform {
        phi: phi.clone(),
        shape,
        y_of: Some(y_of.simplify()),
        x_of: x_of.into_iter().map(|e| e.simplify()).collect(),
        valid_domain: String::new(),
        bindings: bindings.clone(),
        x_ref: 1.0,
        jet: PhiJetExprs::new(&phi),
    };

    let mut tr = if groups.len() == 1 && plain.len() == 1 && plain[0].0 == one {
        // c x: y = log(x)/c
        let c = plain[0].2.clone();
        closed(
            Shape::Linear,
            Expr::product(vec![x.ln(), c.recip()]),
            vec![Expr::product(vec![c, y]).exp()],
        )
    } else if groups.len() == 1 && plain.len() == 1 {
        // C x^(1+β): y = -x^(-β)/(β C)
        let (p, _, c) = plain[0];
        let beta = Expr::sum(vec![p.clone(), -one.clone()]).simplify();
        let y_of = -Expr::product(vec![x.pow(-beta.clone()), beta.recip(), c.recip()]);
        let x_of = Expr::product(vec![-beta.clone(), c.clone(), y]).pow(-beta.recip());
        closed(Shape::Power, y_of, vec![x_of])
    } else if let Some(rho) = find(&one, 1).filter(|_| {
        groups.iter().all(|g| (g.0 == one && g.1 <= 1) && groups.len() <= 2)
    }) {
        // x (ρ log x + θ): y = log|ρ log x + θ|/ρ
        let theta = find(&one, 0).unwrap_or_else(Expr::zero);
        let u = Expr::sum(vec![Expr::product(vec![rho.clone(), x.ln()]), theta.clone()]);
        let y_of = Expr::product(vec![u.ln(), rho.recip()]);
        let branch = |s: i64| {
            let e = Expr::product(vec![Expr::int(s), Expr::product(vec![rho.clone(), y.clone()]).exp()]);
            Expr::product(vec![Expr::sum(vec![e, -theta.clone()]), rho.recip()]).exp()
        };
        closed(Shape::LogLinear, y_of, vec![branch(1), branch(-1)])
    } else if groups.len() == 2 && plain.len() == 2 && find(&one, 0).is_some() {
        // A x + C x^(1+β): y = log|x^β/(A + C x^β)|/(A β)
        let a = find(&one, 0).unwrap();
        let (p, _, c) = plain.iter().find(|g| g.0 != one).map(|g| (*g).clone()).unwrap();
        let beta = Expr::sum(vec![p, -one.clone()]).simplify();
        let xb = x.pow(beta.clone());
        let ratio = Expr::product(vec![
            xb.clone(),
            Expr::sum(vec![a.clone(), Expr::product(vec![c.clone(), xb])]).recip(),
        ]);
        let y_of = Expr::product(vec![ratio.ln(), a.recip(), beta.recip()]);
        let e = Expr::product(vec![a.clone(), beta.clone(), y]).exp();
        let branch = |s: i64| {
            let num = Expr::product(vec![Expr::int(s), a.clone(), e.clone()]);
            let den = Expr::sum(vec![one.clone(), -Expr::product(vec![Expr::int(s), c.clone(), e.clone()])]);
            Expr::product(vec![num, den.recip()]).pow(beta.recip())
        };
        closed(Shape::LinearPlusPower, y_of, vec![branch(1), branch(-1)])
    } else {
        let x_ref = reference_point(&phi, bindings).ok_or_else(|| KozlovError::UnsupportedPhiShape {
            phi: phi.to_string(),
            reason: "phi has no zero-free interval in the state range".into(),
        })?;
        Transform {
            phi: phi.clone(),
            shape: Shape::Quadrature,
            y_of: None,
            x_of: Vec::new(),
            valid_domain: String::new(),
            bindings: bindings.clone(),
            x_ref,
            jet: PhiJetExprs::new(&phi),
        }
    };
    tr.valid_domain = describe_domain(&tr);
    Ok(tr)
}

/// A point inside the largest zero-free interval of φ at `t = w = 0`.
fn reference_point(phi: &Expr, b: &Bindings) -> Option<f64> {
    if phi.eval_xtw(1.0, 0.0, 0.0, b).is_ok_and(|v| v.is_finite() && v != 0.0) {
        return Some(1.0);
    }
    let (lo, hi) = zero_free_interval(&|x| eval(phi, Point::new(x, 0.0, 0.0), b))?;
    Some((lo * hi).sqrt())
}

fn describe_domain(tr: &Transform) -> String {
    let probe = |x: f64| -> Result<f64, KozlovError> {
        let v = tr.phi_at(x, 0.0, 0.0)?;
        if let Some(y) = &tr.y_of {
            eval(y, Point::new(x, 0.0, 0.0), &tr.bindings)?;
        }
        Ok(v)
    };
    match zero_free_interval(&probe) {
        Some((lo, hi)) if lo <= X_RANGE.0 && hi >= X_RANGE.1 => "x > 0 (phi has no zeros on the sampled range)".into(),
        Some((lo, hi)) => format!("x in [{lo:.6}, {hi:.6}] at t = w = 0 (largest sampled interval where phi != 0)"),
        None => "empty on the sampled range".into(),
    }
}

/// Largest run of log-spaced samples in the state range on which `g` is
/// finite and of constant nonzero sign.
fn zero_free_interval(g: &dyn Fn(f64) -> Result<f64, KozlovError>) -> Option<(f64, f64)> {
    const N: usize = 241;
    let (a, b) = (X_RANGE.0.ln(), X_RANGE.1.ln());
    let xs: Vec<f64> = (0..N).map(|i| (a + (b - a) * i as f64 / (N - 1) as f64).exp()).collect();
    let signs: Vec<i8> = xs
        .iter()
        .map(|&x| match g(x) {
            Ok(v) if v.is_finite() && v != 0.0 => v.signum() as i8,
            _ => 0,
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < N {
        if signs[i] == 0 {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < N && signs[j + 1] == signs[i] {
            j += 1;
        }
        if best.is_none_or(|(p, q)| j - i > q - p) {
            best = Some((i, j));
        }
        i = j + 1;
    }
    // Keep a sample of margin on each side when the run ends at a sign change.
    best.filter(|(p, q)| q > p).map(|(p, q)| {
        let lo = if p == 0 { xs[0] } else { xs[p + 1].min(xs[q]) };
        let hi = if q == N - 1 { xs[N - 1] } else { xs[q - 1].max(lo) };
        (lo, hi)
    })
}

/// The reduced equation `dy = a dt + b dw`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedEquation {
    /// Reduced drift; `None` when the transform is numerical.
    pub a: Option<Expr>,
    pub b: Option<Expr>,
    /// Whether `a` and `b` were simplified to expressions free of `x`.
    pub x_eliminated: bool,
    pub y_dependent: bool,
    /// Largest relative spread of `a` or `b` across the state grid.
    pub max_relative_spread: f64,
    #[serde(skip)]
    pub(crate) ito: ItoPieces,
}

/// Symbolic pieces of the Ito formula, kept for evaluation off the
/// simplified form.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct ItoPieces {
    f: Option<Expr>,
    s: Option<Expr>,
    // y_t, y_x, y_w, y_xx, y_xw, y_ww for closed-form transforms.
    derivs: Option<[Expr; 6]>,
}

impl std::fmt::Display for ReducedEquation {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.a, &self.b) {
            (Some(a), Some(b)) => write!(fm, "dy = ({a}) dt + ({b}) dw"),
            _ => write!(fm, "dy = a dt + b dw (coefficients by quadrature)"),
        }
    }
}

impl ReducedEquation {
    /// `(a, b)` at state `x` (which does not matter when the reduction holds).
    pub fn coefficients(&self, tr: &Transform, x: f64, t: f64, w: f64) -> Result<(f64, f64), KozlovError> {
        if let (true, Some(a), Some(b)) = (self.x_eliminated, &self.a, &self.b) {
            let p = Point::new(x, t, w);
            return Ok((eval(a, p, &tr.bindings)?, eval(b, p, &tr.bindings)?));
        }
        self.pieces(tr, x, t, w).map(|(a, b, _)| (a, b))
    }

    /// `(a, b, scale)` with `scale` the sum of magnitudes of the summands.
    fn pieces(&self, tr: &Transform, x: f64, t: f64, w: f64) -> Result<(f64, f64, f64), KozlovError> {
        let bind = &tr.bindings;
        let p = Point::new(x, t, w);
        let f = eval(self.ito.f.as_ref().expect("reduced equation without drift"), p, bind)?;
        let sigma = eval(self.ito.s.as_ref().expect("reduced equation without noise"), p, bind)? * x;
        let [yt, yx, yw, yxx, yxw, yww] = match &self.ito.derivs {
            Some(d) => {
                let mut v = [0.0; 6];
                for (slot, e) in v.iter_mut().zip(d) {
                    *slot = eval(e, p, bind)?;
                }
                v
            }
            None => {
                let jet = tr.jet.eval(x, t, w, bind)?;
                let phi2 = jet.value * jet.value;
                [
                    -tr.quad(x, t, w, |j, _| j.dt / (j.value * j.value))?,
                    1.0 / jet.value,
                    -tr.quad(x, t, w, |j, _| j.dw / (j.value * j.value))?,
                    -jet.dx / phi2,
                    -jet.dw / phi2,
                    tr.quad(x, t, w, |j, _| 2.0 * j.dw * j.dw / (j.value * phi2_of(j)) - j.dww / phi2_of(j))?,
                ]
            }
        };
        let drift = [yt, f * yx, 0.5 * yww, sigma * yxw, 0.5 * sigma * sigma * yxx];
        let noise = [sigma * yx, yw];
        let a: f64 = drift.iter().sum();
        let b: f64 = noise.iter().sum();
        let scale = drift.iter().chain(noise.iter()).map(|v| v.abs()).sum();
        Ok((a, b, scale))
    }
}

fn phi2_of(j: PhiJet) -> f64 {
    j.value * j.value
}

/// Applies the Ito formula to `y` and checks that the result is free of `x`.
pub fn reduce(problem: &SdeProblem, cand: &SymmetryCandidate, tr: &Transform) -> Result<ReducedEquation, KozlovError> {
    let sigma = problem.sigma();
    let (a, b, derivs) = match &tr.y_of {
        Some(y) => {
            let yx = y.diff(Var::X).simplify();
            let d = [
                y.diff(Var::T).simplify(),
                yx.clone(),
                y.diff(Var::W).simplify(),
                yx.diff(Var::X).simplify(),
                yx.diff(Var::W).simplify(),
                y.diff(Var::W).diff(Var::W).simplify(),
            ];
            let [yt, yx, yw, yxx, yxw, yww] = d.clone();
            let half = Expr::rational(1, 2);
            let a = Expr::sum(vec![
                yt,
                Expr::product(vec![problem.f.clone(), yx.clone()]),
                Expr::product(vec![half.clone(), yww]),
                Expr::product(vec![sigma.clone(), yxw]),
                Expr::product(vec![half, sigma.pow(Expr::int(2)), yxx]),
            ])
            .simplify();
            let b = Expr::sum(vec![Expr::product(vec![sigma.clone(), yx]), yw]).simplify();
            (Some(a), Some(b), Some(d))
        }
        None => (None, None, None),
    };
    let x_eliminated = matches!((&a, &b), (Some(a), Some(b)) if !a.depends_on(Var::X) && !b.depends_on(Var::X));
    let mut red = ReducedEquation {
        a,
        b,
        x_eliminated,
        y_dependent: false,
        max_relative_spread: 0.0,
        ito: ItoPieces { f: Some(problem.f.clone()), s: Some(problem.s.clone()), derivs },
    };
    let (spread, evaluations) = state_spread(&red, tr)?;
    red.max_relative_spread = spread;
    red.y_dependent = spread > Y_INDEPENDENCE_TOL;
    if red.y_dependent {
        let mut detail = format!("relative spread {spread:.3e} across the state grid exceeds {Y_INDEPENDENCE_TOL:e}");
        if cand.r != 0.0 {
            // From the second determining equation, b_x = -R σ / φ².
            detail.push_str(&format!("; the symmetry rescales w (R = {}), so b_x = -R*sigma/phi^2 cannot vanish", cand.r));
        }
        return Err(KozlovError::ReductionFailed { detail, evaluations });
    }
    Ok(red)
}

/// Evaluates the reduced coefficients at 10 states for each `(t, w)` on a
/// small grid. Returns the largest relative spread and, when it is too
/// large, the offending evaluations.
fn state_spread(red: &ReducedEquation, tr: &Transform) -> Result<(f64, Vec<Evaluation>), KozlovError> {
    let mut worst = 0.0f64;
    let mut worst_evals = Vec::new();
    let mut checked = 0;
    for &t in &CHECK_T {
        for &w in &CHECK_W {
            let probe = |x: f64| -> Result<f64, KozlovError> {
                let v = tr.phi_at(x, t, w)?;
                if tr.y_of.is_some() {
                    tr.y(x, t, w)?;
                }
                Ok(v)
            };
            let Some((lo, hi)) = zero_free_interval(&probe) else { continue };
            let (la, lb) = (lo.ln(), hi.ln());
            let mut evals = Vec::with_capacity(CHECK_POINTS);
            let mut scale = 0.0f64;
            for i in 0..CHECK_POINTS {
                let x = (la + (lb - la) * i as f64 / (CHECK_POINTS - 1) as f64).exp();
                let (a, b, s) = red.pieces(tr, x, t, w)?;
                scale = scale.max(s);
                evals.push(Evaluation { x, t, w, a, b });
            }
            let spread = |g: fn(&Evaluation) -> f64| {
                let lo = evals.iter().map(g).fold(f64::INFINITY, f64::min);
                let hi = evals.iter().map(g).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            };
            let rel = spread(|e| e.a).max(spread(|e| e.b)) / scale.max(f64::MIN_POSITIVE);
            checked += 1;
            if rel > worst {
                worst = rel;
                worst_evals = evals;
            }
        }
    }
    if checked == 0 {
        return Err(KozlovError::InvalidArgument("phi vanishes or is undefined on the whole check grid".into()));
    }
    if worst <= Y_INDEPENDENCE_TOL {
        worst_evals.clear();
    }
    Ok((worst, worst_evals))
}

/// A solution path on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSolution {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// Grid index at which the path left the domain, if it did.
    pub exited_at: Option<usize>,
}

/// `dt` integrals in closed form when `a` depends on `t` only.
enum DriftIntegral {
    Closed(Expr),
    Quadrature(Expr),
}

/// Integrates `dy = a dt + b dw` along `(grid, wpath)` from `y(x0)` and maps
/// back through the inverse transform.
pub fn solve_pathwise(
    red: &ReducedEquation,
    tr: &Transform,
    x0: f64,
    grid: &[f64],
    wpath: &[f64],
) -> Result<PathSolution, KozlovError> {
    if grid.len() != wpath.len() || grid.is_empty() {
        return Err(KozlovError::InvalidArgument("grid and Wiener path differ in length".into()));
    }
    if grid[0] != 0.0 || wpath[0] != 0.0 || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(KozlovError::InvalidArgument("grid must increase strictly from t = 0 with w(0) = 0".into()));
    }
    if !(x0 > 0.0) {
        return Err(KozlovError::InvalidArgument(format!("x0 = {x0} is not positive")));
    }
    let branch = tr.branch_for(x0)?;
    let y0 = tr.y(x0, 0.0, 0.0)?;
    let bind = &tr.bindings;

    let t_only = |e: &Option<Expr>| match e {
        Some(e) if red.x_eliminated && !e.depends_on_any(&[Var::X, Var::W, Var::Y]) => Some(e.clone()),
        _ => None,
    };
    let drift = t_only(&red.a).map(|a| {
        let integral = integrate_t(&a);
        if has_integral(&integral) {
            DriftIntegral::Quadrature(a)
        } else {
            DriftIntegral::Closed(integral)
        }
    });
    let const_b = t_only(&red.b).filter(|b| !b.depends_on(Var::T));

    let n = grid.len();
    let mut sol = PathSolution {
        t: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        exited_at: None,
    };
    sol.t.push(0.0);
    sol.w.push(0.0);
    sol.y.push(y0);
    sol.x.push(x0);
    let b_const = match &const_b {
        Some(b) => Some(eval(b, Point::new(x0, 0.0, 0.0), bind)?),
        None => None,
    };
    let a_at_zero = match &drift {
        Some(DriftIntegral::Closed(i)) => eval(i, Point::new(x0, 0.0, 0.0), bind)?,
        _ => 0.0,
    };
    let mut dt_part = 0.0;
    let mut dw_part = 0.0;
    let mut x_prev = x0;
    for k in 0..n - 1 {
        let (t0, t1) = (grid[k], grid[k + 1]);
        let (w0, w1) = (wpath[k], wpath[k + 1]);
        let step = (|| -> Result<f64, KozlovError> {
            let (a_left, b_left) = if drift.is_none() || b_const.is_none() {
                red.coefficients(tr, x_prev, t0, w0)?
            } else {
                (0.0, 0.0)
            };
            dt_part = match &drift {
                Some(DriftIntegral::Closed(i)) => eval(i, Point::new(x0, t1, 0.0), bind)? - a_at_zero,
                Some(DriftIntegral::Quadrature(a)) => {
                    dt_part + adaptive_simpson(|s| eval(a, Point::new(x0, s, 0.0), bind), t0, t1, 1e-10)?
                }
                None => dt_part + a_left * (t1 - t0),
            };
            dw_part = match b_const {
                Some(b) => b * w1,
                None => dw_part + b_left * (w1 - w0),
            };
            let y = y0 + dt_part + dw_part;
            let x = tr.x(y, t1, w1, branch, x_prev)?;
            if !(x.is_finite() && x > 0.0) {
                return Err(KozlovError::Domain {
                    x,
                    t: t1,
                    w: w1,
                    source: EvalError::Domain("state left x > 0".into()),
                });
            }
            sol.y.push(y);
            Ok(x)
        })();
        match step {
            Ok(x) => {
                sol.t.push(t1);
                sol.w.push(w1);
                sol.x.push(x);
                x_prev = x;
            }
            Err(KozlovError::Domain { .. }) => {
                sol.y.truncate(sol.x.len());
                sol.exited_at = Some(k + 1);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(sol)
}

fn has_integral(e: &Expr) -> bool {
    match e.node() {
        Node::Integral { .. } => true,
        Node::Sum(v) | Node::Product(v) => v.iter().any(has_integral),
        Node::Power(a, b) => has_integral(a) || has_integral(b),
        Node::Exp(a) | Node::Log(a) => has_integral(a),
        _ => false,
    }
}

/// Long-format CSV: `path,t,w,y,x`.
pub fn write_csv(paths: &[PathSolution], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "path,t,w,y,x")?;
    for (i, p) in paths.iter().enumerate() {
        for k in 0..p.x.len() {
            writeln!(out, "{i},{:.17e},{:.17e},{:.17e},{:.17e}", p.t[k], p.w[k], p.y[k], p.x[k])?;
        }
    }
    Ok(())
}
