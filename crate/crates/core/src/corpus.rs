//! Randomized problem corpus: instances of each symmetric family, the
//! published drift families that map onto them, and drifts outside the
//! admissible class.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::Case;
use crate::expr::{Bindings, Expr, Var};
use crate::sde::SdeProblem;

/// Draws a rational in `[lo, hi]` with denominator 20, away from zero by
/// at least `min_abs`.
fn twentieths(rng: &mut ChaCha8Rng, lo: f64, hi: f64, min_abs: f64) -> Expr {
    let a = (lo * 20.0).round() as i64;
    let b = (hi * 20.0).round() as i64;
    loop {
        let n = rng.random_range(a..=b);
        if (n as f64 / 20.0).abs() >= min_abs {
            return Expr::rational(n, 20);
        }
    }
}

fn value(e: &Expr) -> f64 {
    e.as_number().expect("numeric").to_f64()
}

fn grid_values(e: &Expr) -> Option<Vec<f64>> {
    let b = Bindings::new();
    (0..=80).map(|i| e.eval_xtw(1.0, 2.0 * i as f64 / 80.0, 0.0, &b).ok()).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct TimeFn {
    /// Reject draws whose magnitude drops below this on `[0, 2]`.
    pub min_abs: Option<f64>,
    /// Reject draws whose magnitude exceeds this on `[0, 2]`.
    pub max_abs: f64,
    pub positive: bool,
    pub allow_exp: bool,
}

impl Default for TimeFn {
    fn default() -> Self {
        TimeFn { min_abs: None, max_abs: 4.0, positive: false, allow_exp: true }
    }
}

impl TimeFn {
    pub fn nonvanishing() -> Self {
        TimeFn { min_abs: Some(0.3), ..Default::default() }
    }

    pub fn positive() -> Self {
        TimeFn { min_abs: Some(0.3), positive: true, ..Default::default() }
    }

    /// A polynomial of degree at most 2 in `t` with coefficients in `[-2, 2]`,
    /// optionally times `exp(c t)` with `c ∈ [-1, 1]`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Expr {
        loop {
            let deg = rng.random_range(0..=2);
            let mut terms = Vec::new();
            for p in 0..=deg {
                let c = twentieths(rng, -2.0, 2.0, if p == deg { 0.1 } else { 0.0 });
                terms.push(Expr::product(vec![c, Expr::t().pow(Expr::int(p))]));
            }
            let mut e = Expr::sum(terms);
            if self.allow_exp && rng.random_bool(0.5) {
                let c = twentieths(rng, -1.0, 1.0, 0.05);
                e = Expr::product(vec![e, Expr::product(vec![c, Expr::t()]).exp()]);
            }
            let e = e.simplify();
            let Some(vals) = grid_values(&e) else { continue };
            let min = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max > self.max_abs || self.min_abs.is_some_and(|lo| min < lo) {
                continue;
            }
            if self.positive && vals[0] < 0.0 {
                return Expr::product(vec![Expr::int(-1), e]).simplify();
            }
            return e;
        }
    }
}

/// A drawn instance of one of the eight families.
#[derive(Debug, Clone)]
pub struct RowInstance {
    pub case: Case,
    pub problem: SdeProblem,
    /// Free functions and constants used, printed.
    pub description: String,
}

fn ratio(num: Expr, den: &Expr) -> Expr {
    Expr::product(vec![num, den.recip()]).simplify()
}

fn log_derivative(e: &Expr) -> Expr {
    ratio(e.diff(Var::T), e)
}

fn half_sq(s: &Expr) -> Expr {
    Expr::product(vec![Expr::rational(1, 2), s.pow(Expr::int(2))])
}

fn min_abs_on_grid(e: &Expr) -> f64 {
    grid_values(e).expect("evaluable").iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// A nonzero constant `k` with `|k| <= 0.8 min|S|`.
fn draw_k(rng: &mut ChaCha8Rng, s: &Expr) -> Expr {
    let bound = (0.8 * min_abs_on_grid(s)).max(0.1);
    twentieths(rng, -bound, bound, 0.1)
}

fn gamma(s: &Expr, k: &Expr, sigma: &Expr, chi: &Expr, sign: i64) -> Expr {
    Expr::sum(vec![
        half_sq(s),
        Expr::product(vec![
            Expr::int(sign),
            s.clone(),
            k.recip(),
            Expr::sum(vec![sigma.clone(), -chi.clone()]),
        ]),
    ])
    .simplify()
}

fn x_log_x() -> Expr {
    Expr::product(vec![Expr::x(), Expr::x().ln()])
}

fn problem(f: Expr, s: &Expr) -> SdeProblem {
    SdeProblem::new(f, s.clone(), Bindings::new()).expect("corpus problem is well formed")
}

fn draw_s0(rng: &mut ChaCha8Rng) -> Expr {
    loop {
        let s0 = twentieths(rng, -1.2, 1.2, 0.3);
        if (value(&s0).abs() - 1.0).abs() > 1e-9 {
            return s0;
        }
    }
}

/// One random instance of the given family.
pub fn row_instance(case: Case, rng: &mut ChaCha8Rng) -> RowInstance {
    let x = Expr::x();
    let (f, s, desc) = match case {
        Case::A | Case::B | Case::E => {
            let s = TimeFn::nonvanishing().draw(rng);
            let q = TimeFn::positive().draw(rng);
            let k = draw_k(rng, &s);
            let sigma = log_derivative(&s);
            let chi = log_derivative(&q);
            let mut terms = vec![Expr::product(vec![sigma.clone(), x_log_x()])];
            let mut desc = format!("S = {s}, Q = {q}, k = {k}");
            if case == Case::E {
                terms.push(Expr::product(vec![Expr::int(-1), gamma(&s, &k, &sigma, &chi, -1), x.clone()]));
            } else {
                terms.push(Expr::product(vec![gamma(&s, &k, &sigma, &chi, 1), x.clone()]));
            }
            if case == Case::A {
                let g = TimeFn::nonvanishing().draw(rng);
                desc.push_str(&format!(", G = {g}"));
                let pow = x.pow(Expr::sum(vec![Expr::one(), ratio(k.clone(), &s)]));
                terms.push(Expr::product(vec![g, pow]));
            }
            (Expr::sum(terms), s, desc)
        }
        Case::C => {
            let s = TimeFn::nonvanishing().draw(rng);
            let f1 = TimeFn::default().draw(rng);
            let desc = format!("S = {s}, F = {f1}");
            (Expr::sum(vec![Expr::product(vec![f1, x.clone()]), Expr::product(vec![log_derivative(&s), x_log_x()])]), s, desc)
        }
        Case::D => {
            let s = TimeFn::nonvanishing().draw(rng);
            let f1 = TimeFn::default().draw(rng);
            let theta = TimeFn::positive().draw(rng);
            let desc = format!("S = {s}, F = {f1}, theta = {theta}");
            (
                Expr::sum(vec![Expr::product(vec![f1, x.clone()]), Expr::product(vec![log_derivative(&theta), x_log_x()])]),
                s,
                desc,
            )
        }
        Case::F | Case::G | Case::H => {
            let s0 = draw_s0(rng);
            let q = loop {
                let q = TimeFn::positive().draw(rng);
                if q.depends_on(Var::T) {
                    break q;
                }
            };
            let chi = log_derivative(&q);
            let lin = Expr::product(vec![Expr::sum(vec![half_sq(&s0), -chi]), x.clone()]);
            let free = if case == Case::H || rng.random_bool(0.25) {
                Expr::zero()
            } else {
                TimeFn::default().draw(rng)
            };
            let desc = format!("s0 = {s0}, Q = {q}, F = {free}");
            let f = match case {
                Case::F => Expr::sum(vec![Expr::product(vec![free, x.pow(Expr::int(2))]), lin]),
                Case::G => Expr::sum(vec![free, lin]),
                _ => lin,
            };
            (f, s0, desc)
        }
    };
    RowInstance { case, problem: problem(f, &s), description: desc }
}

/// A published drift family with the case it belongs to.
#[derive(Debug, Clone)]
pub struct Family {
    pub name: &'static str,
    pub case: Case,
    pub problem: SdeProblem,
}

/// The nineteen published drift families, instantiated with random free
/// functions.
pub fn published_families(rng: &mut ChaCha8Rng) -> Vec<Family> {
    let x = Expr::x();
    let lx = x.ln();
    let mut out = Vec::new();
    let mut push = |name, case, f: Expr, s: &Expr| out.push(Family { name, case, problem: problem(f, s) });

    // family-01: x [S²/2 + S'/k + log(x) S'/S − S Q'/(k Q)] + G x^(1 + k/S)
    {
        let s = TimeFn::nonvanishing().draw(rng);
        let q = TimeFn::positive().draw(rng);
        let k = draw_k(rng, &s);
        let g = TimeFn::nonvanishing().draw(rng);
        let coeff = Expr::sum(vec![
            half_sq(&s),
            ratio(s.diff(Var::T), &k),
            Expr::product(vec![lx.clone(), log_derivative(&s)]),
            -Expr::product(vec![s.clone(), k.recip(), log_derivative(&q)]),
        ]);
        let pow = x.pow(Expr::sum(vec![Expr::one(), ratio(k.clone(), &s)]));
        push("family-01", Case::A, Expr::sum(vec![Expr::product(vec![x.clone(), coeff]), Expr::product(vec![g, pow])]), &s);
    }

    // family-02, family-03, family-04, family-05: −x [S³ − 2 (log x + θ) S' + 2 S θ'] / (2 S)
    for name in ["family-02", "family-03", "family-04", "family-05"] {
        let s = TimeFn::nonvanishing().draw(rng);
        let theta = TimeFn::default().draw(rng);
        let bracket = Expr::sum(vec![
            s.pow(Expr::int(3)),
            -Expr::product(vec![Expr::int(2), Expr::sum(vec![lx.clone(), theta.clone()]), s.diff(Var::T)]),
            Expr::product(vec![Expr::int(2), s.clone(), theta.diff(Var::T)]),
        ]);
        let f = Expr::product(vec![Expr::rational(-1, 2), x.clone(), bracket, s.recip()]);
        push(name, Case::E, f, &s);
    }

    // family-06: x log(x) S'/S + x [θ S'/S − θ' − S²/2]
    {
        let s = TimeFn::nonvanishing().draw(rng);
        let theta = TimeFn::default().draw(rng);
        let sigma = log_derivative(&s);
        let f = Expr::sum(vec![
            Expr::product(vec![x.clone(), lx.clone(), sigma.clone()]),
            Expr::product(vec![
                x.clone(),
                Expr::sum(vec![Expr::product(vec![theta.clone(), sigma]), -theta.diff(Var::T), -half_sq(&s)]),
            ]),
        ]);
        push("family-06", Case::E, f, &s);
    }

    // family-07: x F2 + x [log(x) − 1] S'/S
    {
        let s = TimeFn::nonvanishing().draw(rng);
        let f2 = TimeFn::default().draw(rng);
        let f = Expr::sum(vec![
            Expr::product(vec![x.clone(), f2]),
            Expr::product(vec![x.clone(), Expr::sum(vec![lx.clone(), Expr::int(-1)]), log_derivative(&s)]),
        ]);
        push("family-07", Case::C, f, &s);
    }

    // family-08 and family-09: [S² + (2/k)(S' − S Q'/Q) + 2 (S'/S) log x] x/2
    for name in ["family-08", "family-09"] {
        let s = TimeFn::nonvanishing().draw(rng);
        let q = TimeFn::positive().draw(rng);
        let k = draw_k(rng, &s);
        let bracket = Expr::sum(vec![
            s.pow(Expr::int(2)),
            Expr::product(vec![
                Expr::int(2),
                k.recip(),
                Expr::sum(vec![s.diff(Var::T), -Expr::product(vec![s.clone(), log_derivative(&q)])]),
            ]),
            Expr::product(vec![Expr::int(2), log_derivative(&s), lx.clone()]),
        ]);
        push(name, Case::B, Expr::product(vec![bracket, x.clone(), Expr::rational(1, 2)]), &s);
    }

    // family-10: [F2 − S'/S] x + (S'/S) x log x
    // family-11, family-12: (F2 + S'/S) x + (S'/S) x log x
    for (name, sign) in [("family-10", -1), ("family-11", 1), ("family-12", 1)] {
        let s = TimeFn::nonvanishing().draw(rng);
        let f2 = TimeFn::default().draw(rng);
        let sigma = log_derivative(&s);
        let f = Expr::sum(vec![
            Expr::product(vec![Expr::sum(vec![f2, Expr::product(vec![Expr::int(sign), sigma.clone()])]), x.clone()]),
            Expr::product(vec![sigma, x.clone(), lx.clone()]),
        ]);
        push(name, Case::C, f, &s);
    }

    // family-13: −(s0²/2 + θ') x;  family-14: [s0²/2 − (s0² + θ')] x
    for name in ["family-13", "family-14"] {
        let s0 = draw_s0(rng);
        let theta = TimeFn::default().draw(rng);
        let coeff = if name == "family-13" {
            -Expr::sum(vec![half_sq(&s0), theta.diff(Var::T)])
        } else {
            Expr::sum(vec![half_sq(&s0), -Expr::sum(vec![s0.pow(Expr::int(2)), theta.diff(Var::T)])])
        };
        push(name, Case::H, Expr::product(vec![coeff, x.clone()]), &s0);
    }

    // family-15: (s0²/2 − Q'/Q) x;  family-16: (s0²/2 − Q'/Q) x + F3 x²
    for name in ["family-15", "family-16"] {
        let s0 = draw_s0(rng);
        let q = TimeFn::positive().draw(rng);
        let mut terms = vec![Expr::product(vec![Expr::sum(vec![half_sq(&s0), -log_derivative(&q)]), x.clone()])];
        if name == "family-16" {
            let f3 = TimeFn::nonvanishing().draw(rng);
            terms.push(Expr::product(vec![f3, x.pow(Expr::int(2))]));
        }
        push(name, Case::F, Expr::sum(terms), &s0);
    }

    // family-17: F1 + (s0²/2 + Q'/Q) x;  family-18: (s0²/2 + Q'/Q) x
    for name in ["family-17", "family-18"] {
        let s0 = draw_s0(rng);
        let q = TimeFn::positive().draw(rng);
        let mut terms = vec![Expr::product(vec![Expr::sum(vec![half_sq(&s0), log_derivative(&q)]), x.clone()])];
        if name == "family-17" {
            terms.push(TimeFn::nonvanishing().draw(rng));
        }
        push(name, Case::G, Expr::sum(terms), &s0);
    }

    // family-19: (F2 + [log(x) − 1] θ'/θ) x
    {
        let s = TimeFn::nonvanishing().draw(rng);
        let f2 = TimeFn::default().draw(rng);
        let theta = TimeFn::positive().draw(rng);
        let f = Expr::product(vec![
            Expr::sum(vec![
                f2,
                Expr::product(vec![Expr::sum(vec![lx.clone(), Expr::int(-1)]), log_derivative(&theta)]),
            ]),
            x.clone(),
        ]);
        push("family-19", Case::D, f, &s);
    }
    out
}

/// A drift outside the admissible class: a linear part plus one term that
/// no family allows.
pub fn negative_drift(rng: &mut ChaCha8Rng) -> SdeProblem {
    let x = Expr::x();
    let s = TimeFn::nonvanishing().draw(rng);
    let lin = Expr::product(vec![TimeFn::default().draw(rng), x.clone()]);
    let c = TimeFn::nonvanishing().draw(rng);
    let bad = match rng.random_range(0..6) {
        0 => x.exp(),
        1 => Expr::product(vec![x.clone(), x.ln().pow(Expr::int(2))]),
        2 => Expr::sum(vec![Expr::one(), x.clone()]).recip(),
        3 => Expr::product(vec![x.pow(Expr::int(2)), x.ln()]),
        4 => Expr::sum(vec![Expr::one(), x.clone()]).ln(),
        _ => Expr::product(vec![x.clone(), (-x.clone()).exp()]),
    };
    problem(Expr::sum(vec![lin, Expr::product(vec![c, bad])]), &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn nonvanishing_draws_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let e = TimeFn::positive().draw(&mut rng);
            let v = grid_values(&e).unwrap();
            assert!(v.iter().all(|v| *v >= 0.3 && *v <= 4.0), "{e}");
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let a = row_instance(Case::A, &mut ChaCha8Rng::seed_from_u64(9));
        let b = row_instance(Case::A, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.problem.f, b.problem.f);
    }

    #[test]
    fn nineteen_families() {
        let fams = published_families(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(fams.len(), 19);
    }
}
