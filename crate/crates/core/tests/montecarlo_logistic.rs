use stochsym::expr::{parse, Bindings};
use stochsym::kozlov::{integrate_inverse_phi, reduce, ReducedEquation, Transform};
use stochsym::montecarlo::{
    convergence_study, euler_maruyama, generate, kozlov_paths, problem, strong_error, subsample, PathGrid, SimPath,
};
use stochsym::sde::{SdeProblem, SymmetryCandidate};

fn logistic() -> (SdeProblem, Transform, ReducedEquation) {
    let b = Bindings::new().with("A", 1.0).with("B", 0.5).with("mu", 0.3);
    let p = problem("A*x - B*x^2", "mu", b.clone()).unwrap();
    let c = SymmetryCandidate::new(0.0, parse("exp((mu^2/2 - A)*t - mu*w)*x^2").unwrap()).unwrap();
    let tr = integrate_inverse_phi(&c, &b).unwrap();
    let red = reduce(&p, &c, &tr).unwrap();
    (p, tr, red)
}

#[test]
fn logistic_em_converges_to_the_reduced_solution_at_order_one_half() {
    let (p, tr, red) = logistic();
    let grid = PathGrid::new(1.0, 256).unwrap();
    let stats = convergence_study(&p, 0.2, 17, 200, grid, 0..=3, &|ens| {
        Ok(kozlov_paths(&red, &tr, 0.2, ens)?.into_iter().map(SimPath::from).collect())
    })
    .unwrap();
    assert!((0.35..=0.65).contains(&stats.order_estimate), "{stats:?}");
    for l in &stats.levels {
        assert_eq!(l.n_excluded, 0);
    }
    // Consecutive error ratios near sqrt(2).
    for o in &stats.pairwise_orders {
        let ratio = 2f64.powf(*o);
        assert!((1.2..=1.7).contains(&ratio), "{stats:?}");
    }
}

#[test]
fn em_levels_couple_monotonically() {
    let (p, _, _) = logistic();
    let mut ens = generate(5, 200, PathGrid::new(1.0, 32).unwrap()).unwrap();
    let mut prev = euler_maruyama(&p, 0.2, &ens).unwrap();
    let mut errs = Vec::new();
    for _ in 0..3 {
        ens = ens.refine();
        let fine = euler_maruyama(&p, 0.2, &ens).unwrap();
        let coarse_view: Vec<SimPath> = fine.iter().map(|s| subsample(s, 2)).collect();
        errs.push(strong_error(&prev, &coarse_view).unwrap().value);
        prev = fine;
    }
    assert!(errs.windows(2).all(|e| e[1] < e[0]), "{errs:?}");
}

#[test]
fn logistic_paths_stay_positive_and_bounded() {
    let (p, _, _) = logistic();
    let ens = generate(6, 500, PathGrid::new(2.0, 200).unwrap()).unwrap();
    let em = euler_maruyama(&p, 0.2, &ens).unwrap();
    let finals: Vec<f64> = em.iter().map(|s| *s.x.last().unwrap()).collect();
    assert!(em.iter().all(|s| s.exited_at.is_none()));
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    assert!(mean.is_finite() && mean > 0.0 && mean < 10.0, "{mean}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (p, _, _) = logistic();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let ens = generate(99, 64, PathGrid::new(1.0, 16).unwrap().at_level(2)).unwrap();
            euler_maruyama(&p, 0.2, &ens).unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}
