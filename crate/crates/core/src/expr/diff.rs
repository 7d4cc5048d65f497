use super::{Expr, Node, Var};

/// Simplified partial derivative. Parameters are constants.
pub(super) fn differentiate(e: &Expr, v: Var) -> Expr {
    raw(e, v).simplify()
}

fn raw(e: &Expr, v: Var) -> Expr {
    if !e.depends_on(v) {
        return Expr::zero();
    }
    match e.node() {
        Node::Const(_) | Node::Param(_) => Expr::zero(),
        Node::Var(u) => {
            if *u == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Sum(ts) => Expr::sum(ts.iter().map(|t| raw(t, v)).collect()),
        Node::Product(fs) => {
            let mut terms = Vec::new();
            for (i, f) in fs.iter().enumerate() {
                if !f.depends_on(v) {
                    continue;
                }
                let mut parts: Vec<Expr> = fs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, g)| g.clone())
                    .collect();
                parts.push(raw(f, v));
                terms.push(Expr::product(parts));
            }
            Expr::sum(terms)
        }
        Node::Power(b, x) => {
            if !x.depends_on(v) {
                // x * b^(x-1) * b'
                Expr::product(vec![x.clone(), b.pow(x - 1), raw(b, v)])
            } else {
                // b^x * (x' log b + x b'/b)
                let inner = Expr::sum(vec![
                    Expr::product(vec![raw(x, v), b.ln()]),
                    Expr::product(vec![x.clone(), raw(b, v), b.recip()]),
                ]);
                Expr::product(vec![e.clone(), inner])
            }
        }
        Node::Exp(a) => Expr::product(vec![e.clone(), raw(a, v)]),
        Node::Log(a) => Expr::product(vec![raw(a, v), a.recip()]),
        Node::Neg(a) => -raw(a, v),
        Node::Integral { integrand, upper } => {
            let mut terms = Vec::new();
            if upper.depends_on(v) {
                terms.push(Expr::product(vec![
                    integrand.subs_var(Var::T, upper),
                    raw(upper, v),
                ]));
            }
            if v != Var::T && integrand.depends_on(v) {
                terms.push(Expr::new(Node::Integral {
                    integrand: raw(integrand, v),
                    upper: upper.clone(),
                }));
            }
            Expr::sum(terms)
        }
    }
}
