use std::cell::RefCell;
use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use thiserror::Error;

use super::{Bindings, Expr, Node, Var};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Evaluation point. `y` is only read by inverse transforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub t: f64,
    pub w: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, t: f64, w: f64) -> Self {
        Point { x, t, w, y: 0.0 }
    }

    pub fn with_y(mut self, y: f64) -> Self {
        self.y = y;
        self
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::X => self.x,
            Var::T => self.t,
            Var::W => self.w,
            Var::Y => self.y,
        }
    }
}

const INTEGRAL_TOL: f64 = 1e-13;

const INTEGRAL_CACHE_LIMIT: usize = 1 << 14;

type IntegralKey = (Expr, [u64; 5]);

thread_local! {
    // Integral values keyed by integrand, upper limit, the free variables the
    // integrand reads, and the bindings.
    static INTEGRALS: RefCell<BTreeMap<IntegralKey, f64>> = const { RefCell::new(BTreeMap::new()) };
}

struct Ctx<'a> {
    bindings: &'a Bindings,
    fingerprint: u64,
}

fn fingerprint(b: &Bindings) -> u64 {
    let mut h = DefaultHasher::new();
    for (k, v) in b.iter() {
        k.hash(&mut h);
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

pub(super) fn evaluate(e: &Expr, pt: &Point, b: &Bindings) -> Result<f64, EvalError> {
    let ctx = Ctx { bindings: b, fingerprint: fingerprint(b) };
    let v = eval(e, pt, &ctx)?;
    check(v, e)
}

fn check(v: f64, e: &Expr) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("non-finite value of {e}")))
    }
}

fn eval(e: &Expr, pt: &Point, ctx: &Ctx) -> Result<f64, EvalError> {
    Ok(match e.node() {
        Node::Const(n) => n.to_f64(),
        Node::Var(v) => pt.get(*v),
        Node::Param(p) => ctx
            .bindings
            .get(p)
            .ok_or_else(|| EvalError::UnboundParameter(p.to_string()))?,
        Node::Sum(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval(t, pt, ctx)?;
            }
            acc
        }
        Node::Product(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= eval(f, pt, ctx)?;
            }
            acc
        }
        Node::Neg(a) => -eval(a, pt, ctx)?,
        Node::Power(b, x) => {
            let base = eval(b, pt, ctx)?;
            let exp = eval(x, pt, ctx)?;
            if base == 0.0 && exp < 0.0 {
                return Err(EvalError::Domain(format!("0 raised to negative power in {e}")));
            }
            if base < 0.0 && exp.fract() != 0.0 {
                return Err(EvalError::Domain(format!("negative base with fractional power in {e}")));
            }
            let v = if exp.fract() == 0.0 && exp.abs() <= 64.0 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            };
            check(v, e)?
        }
        Node::Exp(a) => check(eval(a, pt, ctx)?.exp(), e)?,
        Node::Log(a) => {
            let v = eval(a, pt, ctx)?;
            if v == 0.0 {
                return Err(EvalError::Domain(format!("log of zero in {e}")));
            }
            if v < 0.0 && a.is_var(Var::X) {
                return Err(EvalError::Domain(format!("log of non-positive state in {e}")));
            }
            v.abs().ln()
        }
        Node::Integral { integrand, upper } => {
            let hi = eval(upper, pt, ctx)?;
            let free = |v: Var, value: f64| if integrand.depends_on(v) { value.to_bits() } else { 0 };
            let key = (
                integrand.clone(),
                [hi.to_bits(), free(Var::X, pt.x), free(Var::W, pt.w), free(Var::Y, pt.y), ctx.fingerprint],
            );
            if let Some(v) = INTEGRALS.with(|c| c.borrow().get(&key).copied()) {
                return Ok(v);
            }
            let f = |s: f64| eval(integrand, &Point { t: s, ..*pt }, ctx);
            let v = quad::adaptive_simpson(f, 0.0, hi, INTEGRAL_TOL)?;
            INTEGRALS.with(|c| {
                let mut c = c.borrow_mut();
                if c.len() >= INTEGRAL_CACHE_LIMIT {
                    c.clear();
                }
                c.insert(key, v);
            });
            v
        }
    })
}
