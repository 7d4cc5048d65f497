//! Infix printing. The output re-parses to an expression whose canonical form
//! equals the canonical form of the printed expression.

use std::fmt;

use super::{Expr, Node, Number, Var};

const SUM: u8 = 1;
const PROD: u8 = 2;
const POW: u8 = 3;
const ATOM: u8 = 4;

pub(super) fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    f.write_str(&render(e).0)
}

fn wrap(e: &Expr, min: u8) -> String {
    let (s, p) = render(e);
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

fn render_number(n: Number) -> (String, u8) {
    let s = n.to_string();
    let prec = match n {
        _ if n.is_negative() => PROD,
        Number::Rational(_, d) if d != 1 => PROD,
        _ => ATOM,
    };
    (s, prec)
}

fn is_negative_term(t: &Expr) -> bool {
    match t.node() {
        Node::Const(c) => c.is_negative(),
        Node::Product(fs) => fs.first().and_then(Expr::as_number).is_some_and(Number::is_negative),
        Node::Neg(_) => true,
        _ => false,
    }
}

fn negate_term(t: &Expr) -> Expr {
    match t.node() {
        Node::Const(c) => Expr::constant(c.neg()),
        Node::Product(fs) => {
            let c = fs[0].as_number().unwrap().neg();
            let mut rest: Vec<Expr> = fs[1..].to_vec();
            if !c.is_one() {
                rest.insert(0, Expr::constant(c));
            }
            if rest.len() == 1 {
                rest.pop().unwrap()
            } else {
                Expr::product(rest)
            }
        }
        Node::Neg(a) => a.clone(),
        _ => unreachable!(),
    }
}

fn render(e: &Expr) -> (String, u8) {
    match e.node() {
        Node::Const(n) => render_number(*n),
        Node::Var(v) => (v.name().to_string(), ATOM),
        Node::Param(p) => (p.to_string(), ATOM),
        Node::Sum(ts) => {
            // Lead with a positive term when there is one.
            let mut ts: Vec<&Expr> = ts.iter().collect();
            if let Some(k) = ts.iter().position(|t| !is_negative_term(t)) {
                let lead = ts.remove(k);
                ts.insert(0, lead);
            }
            let mut out = String::new();
            for (i, t) in ts.into_iter().enumerate() {
                if i == 0 {
                    out.push_str(&wrap(t, SUM));
                } else if is_negative_term(t) {
                    out.push_str(" - ");
                    out.push_str(&wrap(&negate_term(t), PROD));
                } else {
                    out.push_str(" + ");
                    out.push_str(&wrap(t, PROD));
                }
            }
            (out, SUM)
        }
        Node::Neg(a) => (format!("-{}", wrap(a, POW)), PROD),
        Node::Product(fs) => render_product(fs),
        Node::Power(b, x) => {
            let exp = match x.node() {
                Node::Const(n) if !n.is_negative() && matches!(n, Number::Rational(_, 1)) => n.to_string(),
                _ => wrap(x, ATOM),
            };
            (format!("{}^{}", wrap(b, ATOM), exp), POW)
        }
        Node::Exp(a) => (format!("exp({})", render(a).0), ATOM),
        Node::Log(a) => (format!("log({})", render(a).0), ATOM),
        Node::Integral { integrand, upper } => {
            if upper.is_var(Var::T) {
                (format!("integral({})", render(integrand).0), ATOM)
            } else {
                (format!("integral({}, {})", render(integrand).0, render(upper).0), ATOM)
            }
        }
    }
}

fn render_product(fs: &[Expr]) -> (String, u8) {
    let mut negative = false;
    let mut num: Vec<String> = Vec::new();
    let mut den: Vec<String> = Vec::new();
    let mut den_count = 0usize;
    // Sums in a grouped denominator would be distributed on re-parse.
    let mut den_has_sum = false;
    for (i, f) in fs.iter().enumerate() {
        match f.node() {
            Node::Const(c) if i == 0 => {
                let mut c = *c;
                if c.is_negative() {
                    negative = true;
                    c = c.neg();
                }
                match c {
                    Number::Rational(p, q) => {
                        if p != 1 {
                            num.push(p.to_string());
                        }
                        if q != 1 {
                            den.push(q.to_string());
                            den_count += 1;
                        }
                    }
                    Number::Float(_) if !c.is_one() => num.push(c.to_string()),
                    Number::Float(_) => {}
                }
            }
            Node::Power(b, x) if x.as_number().is_some_and(Number::is_negative) => {
                let pos = x.as_number().unwrap().neg();
                let item = if pos.is_one() {
                    b.clone()
                } else {
                    Expr::new(Node::Power(b.clone(), Expr::constant(pos)))
                };
                den_has_sum |= matches!(b.node(), Node::Sum(_));
                den.push(wrap(&item, POW));
                den_count += 1;
            }
            _ => num.push(wrap(f, POW)),
        }
    }
    let mut s = if num.is_empty() { "1".to_string() } else { num.join("*") };
    if den_count == 1 {
        s.push('/');
        s.push_str(&den[0]);
    } else if den_has_sum {
        for d in &den {
            s.push('/');
            s.push_str(d);
        }
    } else if den_count > 1 {
        s.push_str("/(");
        s.push_str(&den.join("*"));
        s.push(')');
    }
    if negative {
        s.insert(0, '-');
    }
    (s, PROD)
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;

    fn p(src: &str) -> String {
        parse(src).unwrap().simplify().to_string()
    }

    #[test]
    fn readable_output() {
        assert_eq!(p("A*x - B*x^2"), "A*x - B*x^2");
        assert_eq!(p("x/2"), "x/2");
        assert_eq!(p("-(k*w)"), "-k*w");
        assert_eq!(p("exp(log(x))"), "x");
    }

    #[test]
    fn denominators_with_sums_print_factor_by_factor() {
        let e = crate::expr::Expr::product(vec![
            crate::expr::Expr::rational(1, 10),
            crate::expr::Expr::x(),
            parse("t/10 - 7/5").unwrap().simplify().recip(),
        ])
        .simplify();
        assert_eq!(e.to_string(), "x/10/(t/10 - 7/5)");
        assert_eq!(parse(&e.to_string()).unwrap().simplify(), e);
    }

    #[test]
    fn floats_print_in_scientific_notation() {
        assert_eq!(p("2.5e0*x"), "2.5e0*x");
    }

    #[test]
    fn round_trips_canonical_forms() {
        for src in [
            "A*x - B*x^2",
            "exp(-(k*w)) * x^(1 + k/S0)",
            "(mu^2/2 - A)*t - mu*w",
            "-3/(2*x*(1+t))",
            "x^(-1/2) + (1/2)^t - 2.5e-3*w",
            "integral(1/(1+t^2)) * exp(integral(t, 2*t))",
            "(a+b)^3",
            "x*t/(10*(t/10 - 7/5))",
            "x/(t*(1 + t))",
        ] {
            let e = parse(src).unwrap().simplify();
            let back = parse(&e.to_string()).unwrap().simplify();
            assert_eq!(back, e, "{src} printed as {e}");
        }
    }
}
