//! Canonical simplification.
//!
//! Canonical form: sums and products are flat and sorted by the total order
//! on `Expr`; numeric constants are folded into a single leading coefficient;
//! equal bases in a product are merged by adding exponents; all `exp`
//! factors in a product are merged into one; products are distributed over
//! sums (including positive integer powers of sums); like terms are
//! collected. A positive integer power of a sum is only left unexpanded at
//! the top level.

use std::collections::BTreeMap;

use super::{Expr, Node, Number};

/// Largest integer power of a sum that is expanded inside products.
const MAX_EXPAND: i64 = 12;

pub(super) fn simplify(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(_) | Node::Var(_) | Node::Param(_) => e.clone(),
        Node::Neg(a) => simplify_product(vec![Expr::int(-1), simplify(a)]),
        Node::Sum(ts) => simplify_sum(ts.iter().map(simplify).collect()),
        Node::Product(fs) => simplify_product(fs.iter().map(simplify).collect()),
        Node::Power(b, x) => simplify_power(simplify(b), simplify(x)),
        Node::Exp(a) => simplify_exp(simplify(a)),
        Node::Log(a) => simplify_log(simplify(a)),
        Node::Integral { integrand, upper } => simplify_integral(simplify(integrand), simplify(upper)),
    }
}

/// True if the expression is known to be strictly positive on the domain
/// (`x > 0`).
pub(super) fn is_positive(e: &Expr) -> bool {
    match e.node() {
        Node::Const(n) => n.is_positive(),
        Node::Var(super::Var::X) => true,
        Node::Exp(_) => true,
        Node::Power(b, _) => is_positive(b),
        Node::Product(fs) => fs.iter().all(is_positive),
        _ => false,
    }
}

fn split_coeff(t: &Expr) -> (Number, Expr) {
    match t.node() {
        Node::Const(c) => (*c, Expr::one()),
        Node::Product(fs) => match fs[0].node() {
            Node::Const(c) => {
                let rest = &fs[1..];
                let m = if rest.len() == 1 { rest[0].clone() } else { Expr::product(rest.to_vec()) };
                (*c, m)
            }
            _ => (Number::ONE, t.clone()),
        },
        _ => (Number::ONE, t.clone()),
    }
}

fn with_coeff(c: Number, m: Expr) -> Expr {
    if m.is_one() {
        return Expr::constant(c);
    }
    if c.is_one() {
        return m;
    }
    let mut fs = vec![Expr::constant(c)];
    match m.node() {
        Node::Product(rest) => fs.extend(rest.iter().cloned()),
        _ => fs.push(m),
    }
    Expr::product(fs)
}

fn positive_int_power_of_sum(e: &Expr) -> Option<(Expr, i64)> {
    if let Node::Power(b, x) = e.node() {
        if let (Node::Sum(_), Some(n)) = (b.node(), x.as_number().and_then(Number::as_integer)) {
            if (2..=MAX_EXPAND).contains(&n) {
                return Some((b.clone(), n));
            }
        }
    }
    None
}

/// Arguments must already be canonical.
pub(super) fn simplify_sum(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t.node() {
            Node::Sum(ts) => flat.extend(ts.iter().cloned()),
            _ => {
                if let Some((base, n)) = positive_int_power_of_sum(&t) {
                    match expand_power(&base, n).node() {
                        Node::Sum(ts) => flat.extend(ts.iter().cloned()),
                        _ => flat.push(expand_power(&base, n)),
                    }
                } else {
                    flat.push(t)
                }
            }
        }
    }
    let mut constant = Number::ZERO;
    let mut acc: BTreeMap<Expr, Number> = BTreeMap::new();
    for t in flat {
        let (c, m) = split_coeff(&t);
        if m.is_one() {
            constant = constant.add(c);
        } else {
            let slot = acc.entry(m).or_insert(Number::ZERO);
            *slot = slot.add(c);
        }
    }
    let mut out = Vec::with_capacity(acc.len() + 1);
    if !constant.is_zero() {
        out.push(Expr::constant(constant));
    }
    for (m, c) in acc {
        if !c.is_zero() {
            out.push(with_coeff(c, m));
        }
    }
    out.sort();
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::sum(out),
    }
}

fn expand_power(base: &Expr, n: i64) -> Expr {
    let factors = vec![base.clone(); n as usize];
    distribute(Number::ONE, Vec::new(), factors)
}

/// Multiplies `coeff * Π others` by every sum in `sums`, term by term.
fn distribute(coeff: Number, others: Vec<Expr>, sums: Vec<Expr>) -> Expr {
    let mut partial: Vec<Expr> = vec![{
        let mut fs = vec![Expr::constant(coeff)];
        fs.extend(others);
        simplify_product(fs)
    }];
    for s in sums {
        let terms = s.terms();
        let mut next = Vec::with_capacity(partial.len() * terms.len());
        for p in &partial {
            for t in &terms {
                next.push(simplify_product(vec![p.clone(), t.clone()]));
            }
        }
        // Collecting after each multiplication keeps intermediate sizes small.
        partial = simplify_sum(next).terms();
    }
    simplify_sum(partial)
}

/// Arguments must already be canonical.
pub(super) fn simplify_product(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(factors.len());
    for f in factors {
        match f.node() {
            Node::Product(fs) => flat.extend(fs.iter().cloned()),
            _ => flat.push(f),
        }
    }

    let mut coeff = Number::ONE;
    let mut bases: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    let mut exp_args: Vec<Expr> = Vec::new();
    for f in flat {
        match f.node() {
            Node::Const(c) => coeff = coeff.mul(*c),
            Node::Power(b, e) => bases.entry(b.clone()).or_default().push(e.clone()),
            Node::Exp(a) => exp_args.push(a.clone()),
            _ => bases.entry(f.clone()).or_default().push(Expr::one()),
        }
    }
    if coeff.is_zero() {
        return Expr::zero();
    }

    let mut rest: Vec<Expr> = Vec::new();
    if !exp_args.is_empty() {
        let merged = simplify_exp(simplify_sum(exp_args));
        match merged.node() {
            Node::Const(c) => coeff = coeff.mul(*c),
            Node::Exp(_) => rest.push(merged),
            _ => {
                // Logarithmic terms were pulled out as powers; merge them with
                // the remaining factors.
                let mut fs = vec![Expr::constant(coeff), merged];
                for (b, es) in bases {
                    fs.push(simplify_power(b, simplify_sum(es)));
                }
                return simplify_product(fs);
            }
        }
    }

    let mut needs_refold = false;
    for (b, es) in bases {
        let p = simplify_power(b, simplify_sum(es));
        if is_undefined(&p) {
            return p;
        }
        match p.node() {
            Node::Const(c) => coeff = coeff.mul(*c),
            Node::Product(_) | Node::Exp(_) => {
                needs_refold = true;
                rest.push(p);
            }
            _ => rest.push(p),
        }
    }
    if coeff.is_zero() {
        return Expr::zero();
    }
    if needs_refold {
        let mut fs = vec![Expr::constant(coeff)];
        fs.extend(rest);
        return simplify_product(fs);
    }

    let mut sums = Vec::new();
    let mut others = Vec::new();
    for f in rest {
        if matches!(f.node(), Node::Sum(_)) {
            sums.push(f);
        } else if let Some((base, n)) = positive_int_power_of_sum(&f) {
            sums.extend(std::iter::repeat_n(base, n as usize));
        } else {
            others.push(f);
        }
    }
    if !sums.is_empty() {
        return distribute(coeff, others, sums);
    }

    others.sort();
    if others.is_empty() {
        return Expr::constant(coeff);
    }
    if coeff.is_one() && others.len() == 1 {
        return others.pop().unwrap();
    }
    let mut fs = Vec::with_capacity(others.len() + 1);
    if !coeff.is_one() {
        fs.push(Expr::constant(coeff));
    }
    fs.extend(others);
    Expr::product(fs)
}

fn const_power(b: Number, e: Number) -> Option<Number> {
    if let Some(n) = e.as_integer() {
        if b.is_zero() && n < 0 {
            return None;
        }
        if matches!(e, Number::Rational(..)) || matches!(b, Number::Float(_)) {
            return b.powi(n);
        }
    }
    match (b, e) {
        (Number::Rational(..), Number::Rational(p, q)) => {
            if b.is_negative() {
                return None;
            }
            // Exact only when the base is a perfect power; otherwise stay symbolic.
            let Number::Rational(n, d) = b else { unreachable!() };
            let rn = (n as f64).powf(1.0 / q as f64).round() as i64;
            let rd = (d as f64).powf(1.0 / q as f64).round() as i64;
            if rd <= 0 {
                return None;
            }
            let exact = Number::ratio(rn as i128, rd as i128);
            if exact.powi(q) == Some(b) {
                return exact.powi(p);
            }
            None
        }
        _ => {
            let (bf, ef) = (b.to_f64(), e.to_f64());
            if bf < 0.0 && ef.fract() != 0.0 {
                return None;
            }
            if bf == 0.0 && ef < 0.0 {
                return None;
            }
            Some(Number::Float(bf.powf(ef)))
        }
    }
}

/// Canonical form of a division by zero.
fn undefined() -> Expr {
    Expr::new(Node::Power(Expr::zero(), Expr::int(-1)))
}

fn is_undefined(e: &Expr) -> bool {
    matches!(e.node(), Node::Power(b, x) if b.is_zero() && x.as_number().is_some_and(Number::is_negative))
}

/// Arguments must already be canonical.
pub(super) fn simplify_power(b: Expr, e: Expr) -> Expr {
    if e.is_zero() || b.is_one() {
        return Expr::one();
    }
    if e.is_one() {
        return b;
    }
    if let (Some(bn), Some(en)) = (b.as_number(), e.as_number()) {
        if bn.is_zero() && en.is_positive() {
            return Expr::zero();
        }
        if let Some(v) = const_power(bn, en) {
            return Expr::constant(v);
        }
        if bn.is_zero() && en.is_negative() {
            return undefined();
        }
        return Expr::new(Node::Power(b, e));
    }
    let int_exp = e.as_number().and_then(Number::as_integer);
    match b.node() {
        Node::Power(c, d) if int_exp.is_some() || is_positive(c) => {
            let exp = simplify_product(vec![d.clone(), e.clone()]);
            return simplify_power(c.clone(), exp);
        }
        Node::Exp(a) => {
            return simplify_exp(simplify_product(vec![a.clone(), e]));
        }
        Node::Product(fs) if int_exp.is_some() || fs.iter().all(is_positive) => {
            let parts = fs.iter().map(|f| simplify_power(f.clone(), e.clone())).collect();
            return simplify_product(parts);
        }
        _ => {}
    }
    Expr::new(Node::Power(b, e))
}

/// Splits `c * log(u)` with `u > 0` into `(c, u)`.
fn as_coeff_log(term: &Expr) -> Option<(Expr, Expr)> {
    match term.node() {
        Node::Log(u) if is_positive(u) => Some((Expr::one(), u.clone())),
        Node::Product(fs) => {
            let logs: Vec<usize> =
                fs.iter().enumerate().filter(|(_, f)| matches!(f.node(), Node::Log(_))).map(|(i, _)| i).collect();
            if logs.len() != 1 {
                return None;
            }
            let i = logs[0];
            let Node::Log(u) = fs[i].node() else { unreachable!() };
            if !is_positive(u) {
                return None;
            }
            let rest: Vec<Expr> = fs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, f)| f.clone()).collect();
            let c = if rest.len() == 1 { rest[0].clone() } else { Expr::product(rest) };
            Some((c, u.clone()))
        }
        _ => None,
    }
}

/// Argument must already be canonical.
pub(super) fn simplify_exp(a: Expr) -> Expr {
    if a.is_zero() {
        return Expr::one();
    }
    if let Some(Number::Float(v)) = a.as_number() {
        return Expr::float(v.exp());
    }
    let mut pulled = Vec::new();
    let mut rest = Vec::new();
    for term in a.terms() {
        match as_coeff_log(&term) {
            Some((c, u)) => pulled.push(simplify_power(u, c)),
            None => rest.push(term),
        }
    }
    if pulled.is_empty() {
        return Expr::new(Node::Exp(a));
    }
    if !rest.is_empty() {
        let r = simplify_sum(rest);
        pulled.push(if r.is_zero() { Expr::one() } else { Expr::new(Node::Exp(r)) });
    }
    simplify_product(pulled)
}

/// Argument must already be canonical.
pub(super) fn simplify_log(a: Expr) -> Expr {
    match a.node() {
        Node::Const(c) => {
            if c.abs().is_one() {
                return Expr::zero();
            }
            match c {
                Number::Float(v) if *v != 0.0 => Expr::float(v.abs().ln()),
                _ if c.is_negative() => Expr::new(Node::Log(Expr::constant(c.abs()))),
                _ => Expr::new(Node::Log(a.clone())),
            }
        }
        Node::Exp(u) => u.clone(),
        Node::Power(b, c) => simplify_product(vec![c.clone(), simplify_log(b.clone())]),
        Node::Product(fs) => simplify_sum(fs.iter().map(|f| simplify_log(f.clone())).collect()),
        _ => Expr::new(Node::Log(a)),
    }
}

fn simplify_integral(integrand: Expr, upper: Expr) -> Expr {
    if integrand.is_zero() || upper.is_zero() {
        return Expr::zero();
    }
    if !integrand.depends_on_any(&[super::Var::T]) {
        return simplify_product(vec![integrand, upper]);
    }
    Expr::new(Node::Integral { integrand, upper })
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Expr};

    fn s(src: &str) -> Expr {
        parse(src).unwrap().simplify()
    }

    #[test]
    fn removes_zero_summands() {
        assert_eq!(s("x + 0"), Expr::x());
    }

    #[test]
    fn merges_powers() {
        assert_eq!(s("x^a * x^b"), s("x^(a+b)"));
        assert_eq!(s("x * x^(k/S0)"), s("x^(1 + k/S0)"));
    }

    #[test]
    fn exp_of_log_is_power() {
        assert_eq!(s("exp(log(x)*c)"), s("x^c"));
        assert_eq!(s("exp(2*log(x) - w)"), s("x^2*exp(-w)"));
    }

    #[test]
    fn cancels_like_terms() {
        assert!(s("(a+b)*c - a*c - b*c").is_zero());
        assert!(s("(x+1)^2 - x^2 - 2*x - 1").is_zero());
        assert!(s("exp(a)*exp(-a) - 1").is_zero());
    }

    #[test]
    fn merges_sum_bases_before_expanding() {
        assert_eq!(s("(2+t)*(2+t)^(-1)*x"), Expr::x());
        assert_eq!(s("(2+t)^2/(2+t)"), s("2+t"));
    }

    #[test]
    fn folds_constants() {
        assert_eq!(s("2*3 + 1/2"), Expr::rational(13, 2));
        assert_eq!(s("4^(1/2)"), Expr::int(2));
        assert_eq!(s("log(1)"), Expr::zero());
    }

    #[test]
    fn logs_of_products_and_powers() {
        assert_eq!(s("log(x^2*exp(t))"), s("2*log(x) + t"));
    }

    #[test]
    fn division_by_zero_has_one_form() {
        assert_eq!(s("1/(x*log(1 + 0^2))"), s("1/0"));
        assert_eq!(s("0^(-2)*t"), s("1/0"));
        assert_eq!(s("1/(0*x)").to_string(), "0^(-1)");
    }

    #[test]
    fn idempotent_on_examples() {
        for src in [
            "A*x - B*x^2",
            "exp(-(k*w)) * x^(1 + k/S0)",
            "(1+t)^2*x + log(x)*x/(2+t)",
            "exp((mu^2/2 - A)*t - mu*w)*x^2",
        ] {
            let once = s(src);
            assert_eq!(once.simplify(), once, "{src}");
        }
    }
}
