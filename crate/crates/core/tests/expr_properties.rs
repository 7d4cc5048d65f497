use proptest::prelude::*;
use stochsym::expr::{parse, Bindings, Expr, Point};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::x()),
        Just(Expr::t()),
        Just(Expr::w()),
        Just(Expr::param("a")),
        (-9i64..=9, 1i64..=5).prop_map(|(p, q)| Expr::rational(p, q)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 40, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::product),
            (inner.clone(), -3i64..=3).prop_map(|(b, n)| b.pow(Expr::int(n))),
            inner.clone().prop_map(|a| a.recip()),
            inner.clone().prop_map(|a| Expr::product(vec![Expr::rational(1, 3), a]).exp()),
            inner.prop_map(|a| Expr::sum(vec![Expr::one(), a.pow(Expr::int(2))]).ln()),
        ]
    })
}

fn value(e: &Expr, x: f64, t: f64, w: f64) -> Option<f64> {
    let b = Bindings::new().with("a", 0.6);
    e.eval(&Point::new(x, t, w), &b).ok().filter(|v| v.is_finite() && v.abs() < 1e6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn printing_round_trips(e in expr()) {
        let canon = e.simplify();
        let back = parse(&canon.to_string()).unwrap().simplify();
        prop_assert_eq!(&back, &canon, "printed as {}", canon);
    }

    #[test]
    fn simplify_is_idempotent(e in expr()) {
        let s = e.simplify();
        prop_assert_eq!(s.simplify(), s);
    }

    #[test]
    fn simplify_preserves_values(e in expr(), x in 0.5..2.0f64, t in 0.0..1.0f64, w in -1.0..1.0f64) {
        if let Some(u) = value(&e, x, t, w) {
            let v = value(&e.simplify(), x, t, w);
            prop_assert!(v.is_some_and(|v| (u - v).abs() <= 1e-9 * u.abs().max(1.0)), "{} -> {}: {} vs {:?}", e, e.simplify(), u, v);
        }
    }
}
