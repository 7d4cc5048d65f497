//! Minimal symbolic expression engine.
//!
//! Expressions are immutable trees over the state variable `x`, time `t`,
//! the Wiener variable `w`, the transformed variable `y` and named
//! parameters. Every other module of the crate computes on this type.
//!
//! `log(u)` denotes the natural logarithm of `|u|`. The state variable is
//! restricted to `x > 0`, so the simplifier may use identities such as
//! `exp(c*log(x)) = x^c` and `log(x^c) = c*log(x)`.

mod diff;
mod eval;
mod integrate;
mod number;
mod parse;
mod print;
mod simplify;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

pub use eval::{EvalError, Point};
pub use integrate::integrate_t;
pub use number::Number;
pub use parse::{parse, ParseError};

/// Reserved variables. `y` only appears in inverse transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    T,
    W,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::T => "t",
            Var::W => "w",
            Var::Y => "y",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "x" => Some(Var::X),
            "t" => Some(Var::T),
            "w" => Some(Var::W),
            "y" => Some(Var::Y),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Const(Number),
    Var(Var),
    Param(Arc<str>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Expr, Expr),
    Exp(Expr),
    Log(Expr),
    Neg(Expr),
    /// `∫_0^upper g(s) ds` where `g` is written in terms of `t` as the dummy
    /// integration variable.
    Integral { integrand: Expr, upper: Expr },
}

/// Shared, immutable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// Parameter values used during evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, f64>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a non-finite value.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        assert!(value.is_finite(), "binding {name} must be finite");
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut b = Bindings::new();
        for (k, v) in iter {
            b.insert(&k, v);
        }
        b
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn constant(n: Number) -> Self {
        Expr::new(Node::Const(n))
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(Number::int(n))
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Expr::constant(Number::ratio(num as i128, den as i128))
    }

    pub fn float(v: f64) -> Self {
        Expr::constant(Number::Float(v))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn var(v: Var) -> Self {
        Expr::new(Node::Var(v))
    }

    pub fn x() -> Self {
        Expr::var(Var::X)
    }

    pub fn t() -> Self {
        Expr::var(Var::T)
    }

    pub fn w() -> Self {
        Expr::var(Var::W)
    }

    pub fn y() -> Self {
        Expr::var(Var::Y)
    }

    pub fn param(name: &str) -> Self {
        Expr::new(Node::Param(Arc::from(name)))
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        Expr::new(Node::Sum(terms))
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        Expr::new(Node::Product(factors))
    }

    pub fn pow(&self, exponent: impl Into<Expr>) -> Self {
        Expr::new(Node::Power(self.clone(), exponent.into()))
    }

    pub fn recip(&self) -> Self {
        self.pow(Expr::int(-1))
    }

    pub fn exp(&self) -> Self {
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn ln(&self) -> Self {
        Expr::new(Node::Log(self.clone()))
    }

    /// `∫_0^t self(s) ds`.
    pub fn integral(&self) -> Self {
        Expr::new(Node::Integral { integrand: self.clone(), upper: Expr::t() })
    }

    pub fn as_number(&self) -> Option<Number> {
        match self.node() {
            Node::Const(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_number().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_number().is_some_and(Number::is_one)
    }

    pub fn is_var(&self, v: Var) -> bool {
        matches!(self.node(), Node::Var(u) if *u == v)
    }

    /// True if the value of `self` depends on `v`. The dummy variable of an
    /// integral does not count; its upper limit does.
    pub fn depends_on(&self, v: Var) -> bool {
        match self.node() {
            Node::Const(_) | Node::Param(_) => false,
            Node::Var(u) => *u == v,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().any(|e| e.depends_on(v)),
            Node::Power(b, e) => b.depends_on(v) || e.depends_on(v),
            Node::Exp(a) | Node::Log(a) | Node::Neg(a) => a.depends_on(v),
            Node::Integral { integrand, upper } => {
                upper.depends_on(v) || (v != Var::T && integrand.depends_on(v))
            }
        }
    }

    pub fn depends_on_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.depends_on(*v))
    }

    /// True if no variable occurs (parameters allowed).
    pub fn is_constant_expr(&self) -> bool {
        !self.depends_on_any(&[Var::X, Var::T, Var::W, Var::Y])
    }

    /// Names of all parameters appearing in the expression.
    pub fn parameters(&self) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_params(&mut out);
        out.into_iter().collect()
    }

    fn collect_params(&self, out: &mut std::collections::BTreeSet<String>) {
        match self.node() {
            Node::Param(p) => {
                out.insert(p.to_string());
            }
            Node::Const(_) | Node::Var(_) => {}
            Node::Sum(xs) | Node::Product(xs) => xs.iter().for_each(|e| e.collect_params(out)),
            Node::Power(b, e) => {
                b.collect_params(out);
                e.collect_params(out);
            }
            Node::Exp(a) | Node::Log(a) | Node::Neg(a) => a.collect_params(out),
            Node::Integral { integrand, upper } => {
                integrand.collect_params(out);
                upper.collect_params(out);
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Param(_) => 0,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().map(Expr::size).sum(),
            Node::Power(b, e) => b.size() + e.size(),
            Node::Exp(a) | Node::Log(a) | Node::Neg(a) => a.size(),
            Node::Integral { integrand, upper } => integrand.size() + upper.size(),
        }
    }

    /// Top-level summands of a canonical expression.
    pub fn terms(&self) -> Vec<Expr> {
        match self.node() {
            Node::Sum(ts) => ts.clone(),
            _ if self.is_zero() => Vec::new(),
            _ => vec![self.clone()],
        }
    }

    /// Top-level factors of a canonical expression.
    pub fn factors(&self) -> Vec<Expr> {
        match self.node() {
            Node::Product(fs) => fs.clone(),
            _ => vec![self.clone()],
        }
    }

    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    pub fn diff(&self, v: Var) -> Expr {
        diff::differentiate(self, v)
    }

    /// Replaces every free occurrence of `v` by `replacement`, then
    /// simplifies.
    pub fn subs_var(&self, v: Var, replacement: &Expr) -> Expr {
        self.replace(&|e: &Expr| e.is_var(v).then(|| replacement.clone()), Some(v)).simplify()
    }

    /// Replaces every occurrence of parameter `name`, then simplifies.
    pub fn subs_param(&self, name: &str, replacement: &Expr) -> Expr {
        self.replace(
            &|e: &Expr| match e.node() {
                Node::Param(p) if &**p == name => Some(replacement.clone()),
                _ => None,
            },
            None,
        )
        .simplify()
    }

    /// Substitutes every bound parameter by its numeric value.
    pub fn bind(&self, b: &Bindings) -> Expr {
        self.replace(
            &|e: &Expr| match e.node() {
                Node::Param(p) => b.get(p).map(|v| Expr::constant(float_or_exact(v))),
                _ => None,
            },
            None,
        )
        .simplify()
    }

    fn replace(&self, f: &dyn Fn(&Expr) -> Option<Expr>, bound_t: Option<Var>) -> Expr {
        if let Some(r) = f(self) {
            return r;
        }
        let rec = |e: &Expr| e.replace(f, bound_t);
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Param(_) => self.clone(),
            Node::Sum(xs) => Expr::sum(xs.iter().map(rec).collect()),
            Node::Product(xs) => Expr::product(xs.iter().map(rec).collect()),
            Node::Power(b, e) => Expr::new(Node::Power(rec(b), rec(e))),
            Node::Exp(a) => rec(a).exp(),
            Node::Log(a) => rec(a).ln(),
            Node::Neg(a) => Expr::new(Node::Neg(rec(a))),
            Node::Integral { integrand, upper } => {
                // `t` inside the integrand is the dummy variable.
                let integrand =
                    if bound_t == Some(Var::T) { integrand.clone() } else { rec(integrand) };
                Expr::new(Node::Integral { integrand, upper: rec(upper) })
            }
        }
    }

    pub fn eval(&self, pt: &Point, b: &Bindings) -> Result<f64, EvalError> {
        eval::evaluate(self, pt, b)
    }

    /// Convenience evaluation at `(x, t, w)`.
    pub fn eval_xtw(&self, x: f64, t: f64, w: f64, b: &Bindings) -> Result<f64, EvalError> {
        eval::evaluate(self, &Point::new(x, t, w), b)
    }

    fn kind_rank(&self) -> u8 {
        match self.node() {
            Node::Const(_) => 0,
            Node::Param(_) => 1,
            Node::Var(_) => 2,
            Node::Power(..) => 3,
            Node::Exp(_) => 4,
            Node::Log(_) => 5,
            Node::Integral { .. } => 6,
            Node::Product(_) => 7,
            Node::Sum(_) => 8,
            Node::Neg(_) => 9,
        }
    }
}

/// Doubles with an exact short decimal form become rationals so that
/// bound constants still cancel exactly.
pub(crate) fn float_or_exact(v: f64) -> Number {
    for den in [1i64, 2, 4, 5, 8, 10, 20, 25, 50, 100, 1000, 10000] {
        let num = v * den as f64;
        if num.fract() == 0.0 && num.abs() < 1e15 {
            return Number::ratio(num as i128, den as i128);
        }
    }
    Number::Float(v)
}

fn cmp_slices(a: &[Expr], b: &[Expr]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.ptr_eq(other) {
            return Ordering::Equal;
        }
        let rank = self.kind_rank().cmp(&other.kind_rank());
        if rank != Ordering::Equal {
            return rank;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.total_cmp(b),
            (Node::Var(a), Node::Var(b)) => a.cmp(b),
            (Node::Param(a), Node::Param(b)) => a.cmp(b),
            (Node::Sum(a), Node::Sum(b)) | (Node::Product(a), Node::Product(b)) => {
                cmp_slices(a, b)
            }
            (Node::Power(a, b), Node::Power(c, d)) => a.cmp(c).then_with(|| b.cmp(d)),
            (Node::Exp(a), Node::Exp(b))
            | (Node::Log(a), Node::Log(b))
            | (Node::Neg(a), Node::Neg(b)) => a.cmp(b),
            (
                Node::Integral { integrand: a, upper: b },
                Node::Integral { integrand: c, upper: d },
            ) => a.cmp(c).then_with(|| b.cmp(d)),
            _ => unreachable!("kind ranks differ"),
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Expr {}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::float(v)
    }
}

impl From<&Expr> for Expr {
    fn from(e: &Expr) -> Self {
        e.clone()
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $build:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self, rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self, rhs.clone())
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self.clone(), rhs)
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self.clone(), rhs.clone())
            }
        }
        impl $trait<i64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: i64) -> Expr {
                $build(self, Expr::int(rhs))
            }
        }
        impl $trait<i64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: i64) -> Expr {
                $build(self.clone(), Expr::int(rhs))
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum(vec![a, b]));
binop!(Sub, sub, |a, b: Expr| Expr::sum(vec![a, Expr::new(Node::Neg(b))]));
binop!(Mul, mul, |a, b| Expr::product(vec![a, b]));
binop!(Div, div, |a, b: Expr| Expr::product(vec![a, b.recip()]));

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self))
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self.clone()))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_expr(f, self)
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
