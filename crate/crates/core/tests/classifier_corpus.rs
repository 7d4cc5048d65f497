use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochsym::classifier::{classify, Case};
use stochsym::corpus::{negative_drift, row_instance, published_families};
use stochsym::sde::{verify, SymmetryCandidate};
use stochsym::expr::Expr;

#[test]
fn every_row_instance_classifies_into_its_row() {
    let mut failures = Vec::new();
    for case in Case::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case as u64);
        for i in 0..20 {
            let inst = row_instance(case, &mut rng);
            let cs = classify(&inst.problem).expect("classifiable");
            if !cs.iter().any(|c| c.case == case) {
                failures.push(format!("({case}) #{i}: {} -> {:?}", inst.description, cs.iter().map(|c| c.case).collect::<Vec<_>>()));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn published_families_route_to_their_rows() {
    let mut failures = Vec::new();
    for seed in 0..3 {
        for fam in published_families(&mut ChaCha8Rng::seed_from_u64(seed)) {
            let cs = classify(&fam.problem).expect("classifiable");
            if !cs.iter().any(|c| c.case == fam.case) {
                failures.push(format!("{} (f = {}) -> {:?}", fam.name, fam.problem.f, cs.iter().map(|c| c.case).collect::<Vec<_>>()));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn drifts_outside_the_family_have_no_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let p = negative_drift(&mut rng);
        if let Ok(cs) = classify(&p) {
            assert!(cs.is_empty(), "{}", p.f);
        }
        let r = verify(&p, &SymmetryCandidate::new(0.0, Expr::x()).unwrap(), 100, 1e-9).unwrap();
        assert!(!r.passed(), "{}", p.f);
    }
}
