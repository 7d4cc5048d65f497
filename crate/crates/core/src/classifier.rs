//! Drift decomposition, case matching against the eight symmetric families,
//! and construction of verified symmetry coefficients.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::expr::{integrate_t, Bindings, Expr, Node, Number, Var};
use crate::sde::{self, ResidualReport, SdeError, SdeProblem, SymmetryCandidate, VerifyOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("drift is outside the admissible family; offending part: {remainder}")]
    UnclassifiableDrift { remainder: String },
    #[error("drift depends on w")]
    DriftDependsOnW,
    #[error("no variant of case ({case}) verified")]
    VerificationFailed { case: Case, attempts: Vec<(String, ResidualReport)> },
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BasisTerm {
    One,
    X,
    X2,
    LogX,
    XLogX,
    X2LogX,
    /// `x^(1+β)` for the detected exponent `β`.
    XPow,
}

impl BasisTerm {
    pub fn name(self) -> &'static str {
        match self {
            BasisTerm::One => "1",
            BasisTerm::X => "x",
            BasisTerm::X2 => "x^2",
            BasisTerm::LogX => "log(x)",
            BasisTerm::XLogX => "x*log(x)",
            BasisTerm::X2LogX => "x^2*log(x)",
            BasisTerm::XPow => "x^(1+beta)",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriftDecomposition {
    pub coeffs: BTreeMap<BasisTerm, Expr>,
    /// Exponent offset of the `x^(1+β)` term, if any.
    pub beta: Option<Expr>,
    /// `β S` when it is a constant, i.e. `β = k/S`.
    pub k: Option<Expr>,
    pub remainder: Expr,
}

impl DriftDecomposition {
    pub fn coeff(&self, term: BasisTerm) -> Expr {
        self.coeffs.get(&term).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn basis_expr(&self, term: BasisTerm) -> Expr {
        let x = Expr::x();
        match term {
            BasisTerm::One => Expr::one(),
            BasisTerm::X => x,
            BasisTerm::X2 => x.pow(Expr::int(2)),
            BasisTerm::LogX => x.ln(),
            BasisTerm::XLogX => Expr::product(vec![x.clone(), x.ln()]),
            BasisTerm::X2LogX => Expr::product(vec![x.pow(Expr::int(2)), x.ln()]),
            BasisTerm::XPow => {
                let beta = self.beta.clone().unwrap_or_else(Expr::zero);
                x.pow(Expr::sum(vec![Expr::one(), beta]))
            }
        }
    }

    pub fn reconstruct(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .coeffs
            .iter()
            .map(|(term, c)| Expr::product(vec![c.clone(), self.basis_expr(*term)]))
            .collect();
        terms.push(self.remainder.clone());
        Expr::sum(terms).simplify()
    }

    fn is_classifiable(&self) -> bool {
        self.remainder.is_zero()
    }
}

/// Splits `f` over the basis `{1, x, x², log x, x log x, x² log x, x^(1+β)}`.
/// Fails when anything is left over.
pub fn decompose(f: &Expr, s: &Expr) -> Result<DriftDecomposition, ClassifyError> {
    let d = decompose_partial(f, s)?;
    if d.is_classifiable() {
        Ok(d)
    } else {
        Err(ClassifyError::UnclassifiableDrift { remainder: d.remainder.to_string() })
    }
}

/// Like [`decompose`] but returns the remainder instead of failing.
pub fn decompose_partial(f: &Expr, s: &Expr) -> Result<DriftDecomposition, ClassifyError> {
    let f = f.simplify();
    if f.depends_on(Var::W) {
        return Err(ClassifyError::DriftDependsOnW);
    }
    let mut coeffs: BTreeMap<BasisTerm, Vec<Expr>> = BTreeMap::new();
    let mut beta: Option<Expr> = None;
    let mut rest = Vec::new();
    for term in f.terms() {
        match split_term(&term) {
            Some((power, logs, coeff)) => {
                let key = match (power.as_number().and_then(Number::as_integer), logs) {
                    (Some(0), 0) => Some(BasisTerm::One),
                    (Some(1), 0) => Some(BasisTerm::X),
                    (Some(2), 0) => Some(BasisTerm::X2),
                    (Some(0), 1) => Some(BasisTerm::LogX),
                    (Some(1), 1) => Some(BasisTerm::XLogX),
                    (Some(2), 1) => Some(BasisTerm::X2LogX),
                    (_, 0) => {
                        let b = Expr::sum(vec![power.clone(), Expr::int(-1)]).simplify();
                        match &beta {
                            None => {
                                beta = Some(b);
                                Some(BasisTerm::XPow)
                            }
                            Some(prev) if *prev == b => Some(BasisTerm::XPow),
                            Some(_) => None,
                        }
                    }
                    _ => None,
                };
                match key {
                    Some(k) => coeffs.entry(k).or_default().push(coeff),
                    None => rest.push(term.clone()),
                }
            }
            None => rest.push(term.clone()),
        }
    }
    let coeffs: BTreeMap<BasisTerm, Expr> = coeffs
        .into_iter()
        .map(|(k, v)| (k, Expr::sum(v).simplify()))
        .filter(|(_, c)| !c.is_zero())
        .collect();
    if !coeffs.contains_key(&BasisTerm::XPow) {
        beta = None;
    }
    let k = beta.as_ref().and_then(|b| {
        let k = Expr::product(vec![b.clone(), s.clone()]).simplify();
        (!k.depends_on(Var::T)).then_some(k)
    });
    Ok(DriftDecomposition { coeffs, beta, k, remainder: Expr::sum(rest).simplify() })
}

/// `term = coeff(t) · x^power · log(x)^logs`, or `None` if some factor is
/// not of that form.
pub(crate) fn split_term(term: &Expr) -> Option<(Expr, u32, Expr)> {
    let mut power = Vec::new();
    let mut logs = 0u32;
    let mut coeff = Vec::new();
    for f in term.factors() {
        if !f.depends_on(Var::X) {
            coeff.push(f);
            continue;
        }
        match f.node() {
            Node::Var(Var::X) => power.push(Expr::one()),
            Node::Power(b, e) if b.is_var(Var::X) && !e.depends_on(Var::X) => power.push(e.clone()),
            Node::Log(a) if a.is_var(Var::X) => logs += 1,
            Node::Power(b, e) if matches!(b.node(), Node::Log(a) if a.is_var(Var::X)) => {
                logs += u32::try_from(e.as_number()?.as_integer()?).ok()?;
            }
            _ => return None,
        }
    }
    Some((Expr::sum(power).simplify(), logs, Expr::product(coeff).simplify()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl Case {
    pub const ALL: [Case; 8] = [Case::A, Case::B, Case::C, Case::D, Case::E, Case::F, Case::G, Case::H];

    /// Most specific first.
    pub const PRIORITY: [Case; 8] = [Case::H, Case::F, Case::G, Case::A, Case::B, Case::E, Case::C, Case::D];

    pub fn tag(self) -> &'static str {
        match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::D => "d",
            Case::E => "e",
            Case::F => "f",
            Case::G => "g",
            Case::H => "h",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Case> {
        Case::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One form of φ to try for a matched case.
#[derive(Debug, Clone)]
pub struct PhiVariant {
    pub label: String,
    pub phi: Expr,
    /// Recorded when this variant fails and a later one is used.
    pub failure_note: String,
}

/// A case whose drift constraints hold, before φ is verified.
#[derive(Debug, Clone)]
pub struct CaseMatch {
    pub case: Case,
    pub r: f64,
    pub extracted: BTreeMap<String, Expr>,
    pub notes: Vec<String>,
    pub variants: Vec<PhiVariant>,
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub case: Case,
    pub r: f64,
    pub extracted: BTreeMap<String, Expr>,
    pub notes: Vec<String>,
    /// Label of the φ form that verified.
    pub variant: String,
    pub candidate: SymmetryCandidate,
    pub report: ResidualReport,
}

impl Classification {
    pub fn phi(&self) -> &Expr {
        &self.candidate.phi
    }

    pub fn to_json(&self) -> Value {
        let extracted: serde_json::Map<String, Value> =
            self.extracted.iter().map(|(k, v)| (k.clone(), Value::String(v.to_string()))).collect();
        json!({
            "case": self.case.tag(),
            "R": self.r,
            "phi": self.candidate.phi.to_string(),
            "variant": self.variant,
            "extracted": extracted,
            "notes": self.notes,
            "verified": self.report.passed(),
            "residual_report": serde_json::to_value(&self.report).expect("report serializes"),
        })
    }
}

const T_PROBES: usize = 20;

fn t_probes() -> impl Iterator<Item = f64> {
    (0..T_PROBES).map(|i| 2.0 * (i as f64 + 0.5) / T_PROBES as f64)
}

/// Numeric value of a function of `t` that is constant, either symbolically
/// or to a relative spread below 1e-10 over `t ∈ [0, 2]`.
pub fn constant_value(e: &Expr, b: &Bindings) -> Option<f64> {
    let e = e.bind(b);
    if e.depends_on_any(&[Var::X, Var::W, Var::Y]) {
        return None;
    }
    let vals: Option<Vec<f64>> = t_probes().map(|t| e.eval_xtw(1.0, t, 0.0, b).ok()).collect();
    let vals = vals?;
    if !e.depends_on(Var::T) {
        return Some(vals[0]);
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs());
    (hi - lo <= 1e-10 * scale.max(f64::MIN_POSITIVE)).then_some(0.5 * (lo + hi))
}

/// Equality of two functions of `t`: symbolic, or numeric at the probes.
pub fn same_function(a: &Expr, c: &Expr, b: &Bindings) -> bool {
    let d = Expr::sum(vec![a.clone(), -c.clone()]).simplify();
    if d.is_zero() || d.bind(b).is_zero() {
        return true;
    }
    t_probes().all(|t| {
        match (d.eval_xtw(1.0, t, 0.0, b), a.eval_xtw(1.0, t, 0.0, b), c.eval_xtw(1.0, t, 0.0, b)) {
            (Ok(dv), Ok(av), Ok(cv)) => dv.abs() <= 1e-9 * (1.0 + av.abs() + cv.abs()),
            _ => false,
        }
    })
}

fn is_zero_fn(e: &Expr, b: &Bindings) -> bool {
    same_function(e, &Expr::zero(), b)
}

fn half() -> Expr {
    Expr::rational(1, 2)
}

fn s_squared(s: &Expr) -> Expr {
    s.pow(Expr::int(2))
}

/// `exp(∫_0^t g)`.
fn exp_integral(g: &Expr) -> Expr {
    integrate_t(g).exp().simplify()
}

/// `χ = Σ − k (c1 − S²/2) / S`, the log-derivative of Q given the x
/// coefficient `c1 = Γ₊`.
fn chi_from_gamma_plus(sigma: &Expr, k: &Expr, c1: &Expr, s: &Expr) -> Expr {
    Expr::sum(vec![
        sigma.clone(),
        -Expr::product(vec![
            k.clone(),
            Expr::sum(vec![c1.clone(), -Expr::product(vec![half(), s_squared(s)])]),
            s.recip(),
        ]),
    ])
    .simplify()
}

/// A free `k` for the rows where the drift does not fix it: 1, unless the
/// noise is the constant ±1 (which would make `1 + k/S` integral).
fn default_k(s: &Expr, b: &Bindings) -> Expr {
    match constant_value(s, b) {
        Some(v) if (v.abs() - 1.0).abs() < 1e-6 => Expr::rational(1, 2),
        _ => Expr::one(),
    }
}

fn variant(label: &str, phi: Expr, failure_note: &str) -> PhiVariant {
    PhiVariant { label: label.into(), phi: phi.simplify(), failure_note: failure_note.into() }
}

/// Lists the cases whose drift constraints hold, most specific first.
pub fn match_cases(problem: &SdeProblem, d: &DriftDecomposition) -> Vec<CaseMatch> {
    let b = &problem.bindings;
    let s = &problem.s;
    let x = Expr::x();
    let w = Expr::w();
    let ds = s.diff(Var::T);
    let sigma = Expr::product(vec![ds.clone(), s.recip()]).simplify();
    let s_const = ds.is_zero() || is_zero_fn(&ds, b);
    let present: Vec<BasisTerm> = d.coeffs.keys().copied().collect();
    let only = |allowed: &[BasisTerm]| present.iter().all(|t| allowed.contains(t));
    let c1 = d.coeff(BasisTerm::X);
    let xlogx = d.coeff(BasisTerm::XLogX);
    let log_is_sigma = same_function(&xlogx, &sigma, b);
    let mut out = Vec::new();

    let base = |case: Case, r: f64| CaseMatch {
        case,
        r,
        extracted: BTreeMap::from([("Sigma".to_string(), sigma.clone())]),
        notes: Vec::new(),
        variants: Vec::new(),
    };

    if s_const {
        let s0 = s.clone();
        let s0sq_half = Expr::product(vec![half(), s_squared(&s0)]).simplify();
        let chi = Expr::sum(vec![s0sq_half.clone(), -c1.clone()]).simplify();
        let q = exp_integral(&chi);

        // (h): linear drift only.
        if only(&[BasisTerm::X]) {
            let mut m = base(Case::H, 1.0);
            let theta = integrate_t(&-Expr::sum(vec![c1.clone(), s0sq_half.clone()])).simplify();
            let j_minus = exp_integral(&Expr::sum(vec![s0sq_half.clone(), -c1.clone()]));
            let j_plus = exp_integral(&Expr::sum(vec![c1.clone(), -s0sq_half.clone()]));
            let log_part = Expr::sum(vec![
                Expr::product(vec![theta.clone(), x.clone()]),
                Expr::product(vec![x.clone(), x.ln()]),
            ]);
            let e_pos = Expr::product(vec![s0.clone(), w.clone()]).exp();
            let e_neg = (-Expr::product(vec![s0.clone(), w.clone()])).exp();
            m.variants.push(variant(
                "table",
                Expr::sum(vec![
                    log_part.clone(),
                    Expr::product(vec![q.clone(), e_pos.clone(), x.pow(Expr::int(2))]),
                ]),
                "table form J*exp(s0*w)*x^2 fails the second determining equation (residual 2*R*s0*J*exp(s0*w)*x^2)",
            ));
            m.variants.push(variant(
                "exp(-s0*w)*x^2",
                Expr::sum(vec![
                    log_part.clone(),
                    Expr::product(vec![j_minus.clone(), e_neg, x.pow(Expr::int(2))]),
                ]),
                "form J*exp(-s0*w)*x^2 failed",
            ));
            m.variants.push(variant(
                "exp(+s0*w)",
                Expr::sum(vec![log_part, Expr::product(vec![j_plus.clone(), e_pos])]),
                "form J*exp(s0*w) failed",
            ));
            m.extracted.insert("chi".into(), chi.clone());
            m.extracted.insert("Q".into(), q.clone());
            m.extracted.insert("theta".into(), theta);
            m.extracted.insert("J".into(), j_minus);
            m.extracted.insert("R".into(), Expr::one());
            out.push(m);
        }

        // (f): x and x^2.
        if only(&[BasisTerm::X, BasisTerm::X2]) {
            let mut m = base(Case::F, 0.0);
            let f3 = d.coeff(BasisTerm::X2);
            let k_const = if is_zero_fn(&f3, b) { Expr::one() } else { Expr::zero() };
            if k_const.is_zero() {
                m.notes.push("K set to 0: the K*s0*x term is not a symmetry when F is nonzero".into());
            }
            m.variants.push(variant(
                "table",
                Expr::sum(vec![
                    Expr::product(vec![k_const.clone(), s0.clone(), x.clone()]),
                    Expr::product(vec![
                        q.clone(),
                        (-Expr::product(vec![s0.clone(), w.clone()])).exp(),
                        x.pow(Expr::int(2)),
                    ]),
                ]),
                "table form failed",
            ));
            m.extracted.insert("F".into(), f3);
            m.extracted.insert("chi".into(), chi.clone());
            m.extracted.insert("Q".into(), q.clone());
            m.extracted.insert("K".into(), k_const);
            out.push(m);
        }

        // (g): 1 and x.
        if only(&[BasisTerm::One, BasisTerm::X]) {
            let mut m = base(Case::G, 0.0);
            let f1 = d.coeff(BasisTerm::One);
            let k_const = if is_zero_fn(&f1, b) { Expr::one() } else { Expr::zero() };
            if k_const.is_zero() {
                m.notes.push("K set to 0: the K*x term is not a symmetry when F is nonzero".into());
            }
            let chi_rep = Expr::sum(vec![c1.clone(), -s0sq_half.clone()]).simplify();
            let q_rep = exp_integral(&chi_rep);
            let e_pos = Expr::product(vec![s0.clone(), w.clone()]).exp();
            let kx = Expr::product(vec![k_const.clone(), x.clone()]);
            m.variants.push(variant(
                "table",
                Expr::sum(vec![kx.clone(), Expr::product(vec![q.clone(), e_pos.clone()])]),
                "table form with chi = s0^2/2 - c1 fails; the drift needs c1 = s0^2/2 + chi",
            ));
            m.variants.push(variant(
                "chi sign repaired",
                Expr::sum(vec![kx, Expr::product(vec![q_rep.clone(), e_pos])]),
                "repaired chi sign failed",
            ));
            m.extracted.insert("F".into(), f1);
            m.extracted.insert("chi".into(), chi_rep);
            m.extracted.insert("Q".into(), q_rep);
            m.extracted.insert("K".into(), k_const);
            out.push(m);
        }
    }

    // (a): power term with k/S exponent.
    if let (Some(beta), Some(k)) = (&d.beta, &d.k) {
        let k_ok = constant_value(k, b).is_some_and(|v| v != 0.0);
        if k_ok && only(&[BasisTerm::X, BasisTerm::XLogX, BasisTerm::XPow]) && log_is_sigma {
            let mut m = base(Case::A, 0.0);
            let chi = chi_from_gamma_plus(&sigma, k, &c1, s);
            let q = exp_integral(&chi);
            m.variants.push(variant(
                "table",
                Expr::product(vec![
                    q.clone(),
                    (-Expr::product(vec![k.clone(), w.clone()])).exp(),
                    x.pow(Expr::sum(vec![Expr::one(), beta.clone()])),
                ]),
                "table form failed",
            ));
            m.extracted.insert("k".into(), k.clone());
            m.extracted.insert("chi".into(), chi);
            m.extracted.insert("Q".into(), q);
            m.extracted.insert("G".into(), d.coeff(BasisTerm::XPow));
            out.push(m);
        }
    }

    let linear_log = only(&[BasisTerm::X, BasisTerm::XLogX]);
    if linear_log && log_is_sigma {
        let k = default_k(s, b);
        let pow = x.pow(Expr::sum(vec![Expr::one(), Expr::product(vec![k.clone(), s.recip()])]));
        let ekw = (-Expr::product(vec![k.clone(), w.clone()])).exp();

        // (b)
        let mut m = base(Case::B, 0.0);
        let chi = chi_from_gamma_plus(&sigma, &k, &c1, s);
        let q = exp_integral(&chi);
        let qpow = Expr::product(vec![q.clone(), ekw.clone(), pow.clone()]);
        m.variants.push(variant(
            "table",
            Expr::sum(vec![s.clone(), qpow.clone()]),
            "table form K*S + Q*exp(-k*w)*x^(1+k/S) fails for K != 0 (residual of the first equation is -K*S*c1 + ...)",
        ));
        m.variants.push(variant(
            "K*S*x",
            Expr::sum(vec![Expr::product(vec![s.clone(), x.clone()]), qpow]),
            "variant K*S*x failed",
        ));
        m.extracted.insert("k".into(), k.clone());
        m.extracted.insert("K".into(), Expr::one());
        m.extracted.insert("chi".into(), chi.clone());
        m.extracted.insert("Q".into(), q.clone());
        m.extracted.insert(
            "GammaPlus".into(),
            Expr::sum(vec![
                Expr::product(vec![half(), s_squared(s)]),
                Expr::product(vec![s.clone(), k.recip(), Expr::sum(vec![sigma.clone(), -chi.clone()])]),
            ])
            .simplify(),
        );
        out.push(m);

        // (e)
        let mut m = base(Case::E, 1.0);
        let chi_e = Expr::sum(vec![
            sigma.clone(),
            -Expr::product(vec![
                k.clone(),
                Expr::sum(vec![c1.clone(), Expr::product(vec![half(), s_squared(s)])]),
                s.recip(),
            ]),
        ])
        .simplify();
        let q_e = exp_integral(&chi_e);
        // θ' − Σθ = −(c1 + S²/2), θ(0) = 0.
        let theta = Expr::product(vec![
            s.clone(),
            integrate_t(&-Expr::product(vec![
                Expr::sum(vec![c1.clone(), Expr::product(vec![half(), s_squared(s)])]),
                s.recip(),
            ])),
        ])
        .simplify();
        let f_e = exp_integral(&Expr::sum(vec![Expr::product(vec![k.clone(), s.clone()]), chi_e.clone()]));
        let xlog = Expr::product(vec![x.clone(), x.ln()]);
        m.variants.push(variant(
            "table",
            xlog.clone(),
            "table form with theta = 0 and F = 0 fails unless c1 = -S^2/2; theta must solve theta' - Sigma*theta = -(c1 + S^2/2)",
        ));
        m.variants.push(variant(
            "x*(log(x) + theta)",
            Expr::product(vec![x.clone(), Expr::sum(vec![x.ln(), theta.clone()])]),
            "form x*(log(x) + theta) failed",
        ));
        m.variants.push(variant(
            "table with F = Q*exp(k*integral(S))",
            Expr::sum(vec![
                Expr::product(vec![f_e.clone(), ekw, pow]),
                Expr::product(vec![theta.clone(), x.clone()]),
                xlog,
            ]),
            "table form with determined F and theta failed",
        ));
        m.extracted.insert("k".into(), k);
        m.extracted.insert("chi".into(), chi_e.clone());
        m.extracted.insert("Q".into(), q_e);
        m.extracted.insert("theta".into(), theta);
        m.extracted.insert("F".into(), f_e);
        m.extracted.insert("R".into(), Expr::one());
        m.extracted.insert(
            "GammaMinus".into(),
            Expr::product(vec![Expr::int(-1), c1.clone()]).simplify(),
        );
        out.push(m);

        // (c)
        let mut m = base(Case::C, 0.0);
        m.variants.push(variant("table", Expr::product(vec![s.clone(), x.clone()]), "table form failed"));
        m.extracted.insert("F".into(), c1.clone());
        m.extracted.insert("K".into(), Expr::one());
        out.push(m);
    }

    // (d): any x*log(x) coefficient.
    if linear_log {
        let mut m = base(Case::D, 0.0);
        let h = xlogx.clone();
        let theta = exp_integral(&h);
        if !is_zero_fn(&h, b) {
            m.variants.push(variant(
                "table",
                Expr::product(vec![h.clone(), x.clone()]),
                "table form phi = theta*x with theta the x*log(x) coefficient fails; theta must satisfy theta'/theta = coefficient",
            ));
        }
        m.variants.push(variant(
            "theta = exp(integral(h))",
            Expr::product(vec![theta.clone(), x.clone()]),
            "repaired form failed",
        ));
        m.extracted.insert("F".into(), c1.clone());
        m.extracted.insert("h".into(), h);
        m.extracted.insert("theta".into(), theta);
        out.push(m);
    }

    out.sort_by_key(|m| Case::PRIORITY.iter().position(|c| *c == m.case));
    out
}

/// Tries the variants of a matched case in order and returns the first one
/// that verifies, with notes on any that failed.
pub fn build_phi(
    m: &CaseMatch,
    problem: &SdeProblem,
    opts: VerifyOptions,
) -> Result<Classification, ClassifyError> {
    let mut attempts = Vec::new();
    let mut notes = m.notes.clone();
    for v in &m.variants {
        let Ok(cand) = SymmetryCandidate::new(m.r, v.phi.clone()) else {
            notes.push(format!("variant `{}` has phi = 0", v.label));
            continue;
        };
        match sde::verify_with(problem, &cand, opts) {
            Ok(report) if report.passed() => {
                return Ok(Classification {
                    case: m.case,
                    r: m.r,
                    extracted: m.extracted.clone(),
                    notes,
                    variant: v.label.clone(),
                    candidate: cand,
                    report,
                });
            }
            Ok(report) => {
                notes.push(v.failure_note.clone());
                attempts.push((v.label.clone(), report));
            }
            Err(e) => {
                notes.push(format!("variant `{}` could not be evaluated: {e}", v.label));
            }
        }
    }
    Err(ClassifyError::VerificationFailed { case: m.case, attempts })
}

/// All verified classifications, most specific first. An empty list means
/// no symmetry was found.
pub fn classify(problem: &SdeProblem) -> Result<Vec<Classification>, ClassifyError> {
    classify_with(problem, VerifyOptions::default())
}

pub fn classify_with(problem: &SdeProblem, opts: VerifyOptions) -> Result<Vec<Classification>, ClassifyError> {
    let d = decompose(&problem.f, &problem.s)?;
    Ok(match_cases(problem, &d)
        .iter()
        .filter_map(|m| build_phi(m, problem, opts).ok())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap().simplify()
    }

    fn problem(f: &str, s: &str, b: Bindings) -> SdeProblem {
        SdeProblem::new(p(f), p(s), b).unwrap()
    }

    fn logistic() -> SdeProblem {
        problem("A*x - B*x^2", "mu", Bindings::new().with("A", 1.0).with("B", 0.5).with("mu", 0.3))
    }

    #[test]
    fn logistic_decomposition() {
        let d = decompose(&p("A*x - B*x^2"), &p("mu")).unwrap();
        assert_eq!(d.coeff(BasisTerm::X), p("A"));
        assert_eq!(d.coeff(BasisTerm::X2), p("-B"));
        assert!(d.remainder.is_zero());
        assert_eq!(d.reconstruct(), p("A*x - B*x^2"));
    }

    #[test]
    fn fractional_power_term() {
        let d = decompose(&p("3*x^(3/2)"), &p("1")).unwrap();
        assert_eq!(d.coeff(BasisTerm::XPow), p("3"));
        assert_eq!(d.beta, Some(p("1/2")));
        assert_eq!(d.k, Some(p("1/2")));
    }

    #[test]
    fn exponential_of_state_is_unclassifiable() {
        assert!(matches!(
            decompose(&p("x + exp(x)"), &p("1")),
            Err(ClassifyError::UnclassifiableDrift { .. })
        ));
    }

    #[test]
    fn logistic_is_case_f_with_known_phi() {
        let cs = classify(&logistic()).unwrap();
        let f = cs.iter().find(|c| c.case == Case::F).expect("case f");
        assert_eq!(*f.phi(), p("exp((mu^2/2 - A)*t - mu*w)*x^2"));
        assert_eq!(f.report.symbolic_zero1, sde::ZeroStatus::Zero);
        assert_eq!(f.report.symbolic_zero2, sde::ZeroStatus::Zero);
        assert_eq!(f.extracted["F"], p("-B"));
        assert!(same_function(&f.extracted["chi"], &p("mu^2/2 - A"), &logistic().bindings));
    }

    #[test]
    fn gbm_matches_in_priority_order() {
        let b = Bindings::new().with("a", 0.05).with("s0", 0.2);
        let cs = classify(&problem("a*x", "s0", b)).unwrap();
        let tags: Vec<&str> = cs.iter().map(|c| c.case.tag()).collect();
        assert_eq!(tags, ["h", "f", "g", "b", "e", "c", "d"]);
        let c = cs.iter().find(|c| c.case == Case::C).unwrap();
        assert_eq!(*c.phi(), p("s0*x"));
        let d = cs.iter().find(|c| c.case == Case::D).unwrap();
        assert_eq!(*d.phi(), p("x"));
        let h = &cs[0];
        assert_eq!(h.variant, "exp(-s0*w)*x^2");
        assert!(h.notes.iter().any(|n| n.contains("table form")));
    }

    #[test]
    fn x2_log_x_has_no_symmetry() {
        let cs = classify(&problem("x^2*log(x)", "1", Bindings::new())).unwrap();
        assert!(cs.is_empty());
    }

    #[test]
    fn case_e_instance_uses_log_form() {
        // S = 2 + t, theta = t: f = -x (S^3 - 2(log x + t) S' + 2 S) / (2 S)
        let f = "-x*((2 + t)^3 - 2*(log(x) + t) + 2*(2 + t))/(2*(2 + t))";
        let cs = classify(&problem(f, "2 + t", Bindings::new())).unwrap();
        let e = cs.iter().find(|c| c.case == Case::E).expect("case e");
        assert_eq!(e.variant, "x*(log(x) + theta)");
        let theta = &e.extracted["theta"];
        assert!(same_function(theta, &p("t"), &Bindings::new()), "theta = {theta}");
    }
}
