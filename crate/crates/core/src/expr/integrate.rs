//! Definite time integrals `∫_0^t g(s) ds` in closed form where easy,
//! otherwise as an `Integral` node.

use std::collections::BTreeMap;

use super::{Bindings, Expr, Node, Number, Var};

/// `∫_0^t g(s) ds`, simplified. Terms that are polynomial in `t` times
/// `exp(a t + b)`, or constant multiples of a logarithmic derivative, are
/// integrated exactly; the rest are gathered into a single integral node.
pub fn integrate_t(g: &Expr) -> Expr {
    let g = g.simplify();
    let mut done = Vec::new();
    let mut left = Vec::new();
    let mut groups: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    for term in g.terms() {
        if let Some(v) = term_integral(&term) {
            done.push(v);
        } else if let Some((b, rest)) = reciprocal_factor(&term) {
            groups.entry(b).or_default().push(rest);
        } else {
            left.push(term);
        }
    }
    // Terms over a common denominator B may add up to c1 B' + c0 B.
    for (b, rests) in groups {
        let num = Expr::sum(rests).simplify();
        match log_fit(&b, &num) {
            Some(v) => done.push(v),
            None => left.push(Expr::product(vec![num, b.recip()])),
        }
    }
    if !left.is_empty() {
        done.push(Expr::sum(left).simplify().integral());
    }
    Expr::sum(done).simplify()
}

fn term_integral(term: &Expr) -> Option<Expr> {
    let t = Expr::t();
    if !term.depends_on(Var::T) {
        return Some(Expr::product(vec![term.clone(), t]));
    }
    poly_exp(term).or_else(|| log_derivative(term))
}

/// `c t^n exp(a t + b)` with `n` a non-negative integer.
fn poly_exp(term: &Expr) -> Option<Expr> {
    let mut coeff = Vec::new();
    let mut n: i64 = 0;
    let mut expo: Option<Expr> = None;
    for f in term.factors() {
        if !f.depends_on(Var::T) {
            coeff.push(f);
            continue;
        }
        match f.node() {
            Node::Var(Var::T) => n += 1,
            Node::Power(b, e) if b.is_var(Var::T) => {
                let k = e.as_number()?.as_integer()?;
                if k < 0 {
                    return None;
                }
                n += k;
            }
            Node::Exp(u) if expo.is_none() => expo = Some(u.clone()),
            _ => return None,
        }
    }
    let c = Expr::product(coeff);
    let t = Expr::t();
    let Some(u) = expo else {
        // c t^(n+1) / (n+1)
        return Some(Expr::product(vec![
            c,
            t.pow(Expr::int(n + 1)),
            Expr::rational(1, n + 1),
        ]));
    };
    let a = u.diff(Var::T);
    if a.depends_on(Var::T) || a.is_zero() || u.depends_on_any(&[Var::X, Var::W, Var::Y]) {
        return None;
    }
    // Antiderivative e^u * sum_k (-1)^k n!/(n-k)! s^(n-k) / a^(k+1).
    let antiderivative = |s: &Expr| -> Expr {
        let mut terms = Vec::new();
        let mut falling: i64 = 1;
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1 } else { -1 };
            terms.push(Expr::product(vec![
                Expr::int(sign * falling),
                s.pow(Expr::int(n - k)),
                a.pow(Expr::int(-(k + 1))),
            ]));
            falling *= n - k;
        }
        Expr::product(vec![u.subs_var(Var::T, s).exp(), Expr::sum(terms)])
    };
    let upper = antiderivative(&t);
    let lower = antiderivative(&Expr::zero());
    Some(Expr::product(vec![c, Expr::sum(vec![upper, -lower])]))
}

/// `r * B'/B` with `r` free of `t`: `r (log B(t) - log B(0))`.
fn log_derivative(term: &Expr) -> Option<Expr> {
    let factors = term.factors();
    for (i, f) in factors.iter().enumerate() {
        let Node::Power(b, e) = f.node() else { continue };
        if e.as_number() != Some(Number::int(-1)) || !b.depends_on(Var::T) {
            continue;
        }
        if b.depends_on_any(&[Var::X, Var::W, Var::Y]) {
            continue;
        }
        let db = b.diff(Var::T);
        if db.is_zero() {
            continue;
        }
        let rest: Vec<Expr> = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.clone())
            .collect();
        let ratio = Expr::product(vec![Expr::product(rest), db.recip()]).simplify();
        if ratio.depends_on(Var::T) {
            continue;
        }
        let b0 = b.subs_var(Var::T, &Expr::zero());
        return Some(Expr::product(vec![ratio, Expr::sum(vec![b.ln(), -b0.ln()])]));
    }
    None
}

/// Splits `rest · B^(-1)` with `B` a function of `t` alone.
fn reciprocal_factor(term: &Expr) -> Option<(Expr, Expr)> {
    let factors = term.factors();
    let i = factors.iter().position(|f| match f.node() {
        Node::Power(b, e) => {
            e.as_number() == Some(Number::int(-1))
                && b.depends_on(Var::T)
                && !b.depends_on_any(&[Var::X, Var::W, Var::Y])
        }
        _ => false,
    })?;
    let Node::Power(b, _) = factors[i].node() else { unreachable!() };
    let rest: Vec<Expr> = factors.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, f)| f.clone()).collect();
    Some((b.clone(), Expr::product(rest).simplify()))
}

/// `∫ num/B` when `num = c1 B' + c0 B` for constants fitted at probe times.
fn log_fit(b: &Expr, num: &Expr) -> Option<Expr> {
    if num.depends_on_any(&[Var::X, Var::W, Var::Y]) {
        return None;
    }
    let db = b.diff(Var::T);
    let none = Bindings::new();
    let probes: Vec<f64> = (0..12).map(|j| 0.05 + 0.17 * j as f64).collect();
    let mut rows = Vec::with_capacity(probes.len());
    for &t in &probes {
        let n = num.eval_xtw(1.0, t, 0.0, &none).ok()?;
        let d = db.eval_xtw(1.0, t, 0.0, &none).ok()?;
        let v = b.eval_xtw(1.0, t, 0.0, &none).ok()?;
        rows.push((d, v, n));
    }
    // Normal equations for n ≈ c1 d + c0 v.
    let (mut sdd, mut sdv, mut svv, mut sdn, mut svn) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(d, v, n) in &rows {
        sdd += d * d;
        sdv += d * v;
        svv += v * v;
        sdn += d * n;
        svn += v * n;
    }
    let det = sdd * svv - sdv * sdv;
    if det.abs() <= 1e-12 * sdd * svv {
        return None;
    }
    let c1 = (sdn * svv - svn * sdv) / det;
    let c0 = (svn * sdd - sdn * sdv) / det;
    let scale = rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max).max(1e-300);
    if rows.iter().any(|&(d, v, n)| (n - c1 * d - c0 * v).abs() > 1e-12 * scale) {
        return None;
    }
    let c1 = Expr::constant(snap(c1));
    let c0 = Expr::constant(snap(c0));
    let b0 = b.subs_var(Var::T, &Expr::zero());
    Some(Expr::sum(vec![
        Expr::product(vec![c1, Expr::sum(vec![b.ln(), -b0.ln()])]),
        Expr::product(vec![c0, Expr::t()]),
    ]))
}

/// Fitted coefficients are rounded to a nearby small-denominator rational.
fn snap(c: f64) -> Number {
    if c.abs() < 1e-12 {
        return Number::ZERO;
    }
    for den in 1..=400i64 {
        let n = (c * den as f64).round();
        if (c - n / den as f64).abs() <= 1e-11 * c.abs().max(1.0) {
            return Number::ratio(n as i128, den as i128);
        }
    }
    Number::Float(c)
}
