//! Seeded Wiener ensembles, Euler–Maruyama simulation and strong errors.
//!
//! Each path draws from its own ChaCha8 stream, keyed by the master seed and
//! the refinement level, so results do not depend on the number of worker
//! threads. Refinement inserts Brownian-bridge midpoints and never touches
//! existing grid values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Bindings, Expr, Point};
use crate::kozlov::{solve_pathwise, KozlovError, PathSolution, ReducedEquation, Transform};
use crate::sde::SdeProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Kozlov(#[from] KozlovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathGrid {
    pub t_end: f64,
    pub steps: usize,
    pub refinement_level: u32,
}

impl PathGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self, McError> {
        if !(t_end > 0.0 && t_end.is_finite()) || steps == 0 {
            return Err(McError::InvalidArgument(format!("need t_end > 0 and steps >= 1, got {t_end}, {steps}")));
        }
        Ok(PathGrid { t_end, steps, refinement_level: 0 })
    }

    pub fn at_level(self, level: u32) -> Self {
        PathGrid { refinement_level: level, ..self }
    }

    pub fn intervals(&self) -> usize {
        self.steps << self.refinement_level
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.intervals() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.intervals();
        (0..=n).map(|k| if k == n { self.t_end } else { k as f64 * self.dt() }).collect()
    }
}

/// Wiener paths sampled on a grid. Values rather than increments are stored
/// so that refinement keeps coarse values bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerEnsemble {
    pub seed: u64,
    pub n_paths: usize,
    pub grid: PathGrid,
    pub paths: Vec<Vec<f64>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `path` at refinement `level`.
fn path_rng(seed: u64, level: u32, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(level as u64)));
    rng.set_stream(path as u64);
    rng
}

/// Deterministic in `(seed, n_paths, grid)`.
pub fn generate(seed: u64, n_paths: usize, grid: PathGrid) -> Result<WienerEnsemble, McError> {
    if n_paths == 0 {
        return Err(McError::InvalidArgument("n_paths must be at least 1".into()));
    }
    let base = grid.at_level(0);
    let sd = base.dt().sqrt();
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, 0, i);
            let mut w = Vec::with_capacity(base.intervals() + 1);
            w.push(0.0);
            let mut acc = 0.0;
            for _ in 0..base.intervals() {
                let z: f64 = rng.sample(StandardNormal);
                acc += sd * z;
                w.push(acc);
            }
            w
        })
        .collect();
    let mut ens = WienerEnsemble { seed, n_paths, grid: base, paths };
    for _ in 0..grid.refinement_level {
        ens = ens.refine();
    }
    Ok(ens)
}

impl WienerEnsemble {
    /// Halves every interval with Brownian-bridge midpoints.
    pub fn refine(&self) -> WienerEnsemble {
        let grid = self.grid.at_level(self.grid.refinement_level + 1);
        let half_sd = 0.5 * self.grid.dt().sqrt();
        let paths = self
            .paths
            .par_iter()
            .enumerate()
            .map(|(i, coarse)| {
                let mut rng = path_rng(self.seed, grid.refinement_level, i);
                let mut fine = Vec::with_capacity(2 * coarse.len() - 1);
                fine.push(coarse[0]);
                for pair in coarse.windows(2) {
                    let z: f64 = rng.sample(StandardNormal);
                    fine.push(0.5 * (pair[0] + pair[1]) + half_sd * z);
                    fine.push(pair[1]);
                }
                fine
            })
            .collect();
        WienerEnsemble { seed: self.seed, n_paths: self.n_paths, grid, paths }
    }

    pub fn increments(&self, path: usize) -> Vec<f64> {
        self.paths[path].windows(2).map(|p| p[1] - p[0]).collect()
    }
}

/// A simulated state path, truncated where it left `x > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimPath {
    pub x: Vec<f64>,
    pub exited_at: Option<usize>,
}

impl From<PathSolution> for SimPath {
    fn from(p: PathSolution) -> Self {
        SimPath { x: p.x, exited_at: p.exited_at }
    }
}

/// `x_{n+1} = x_n + f(x_n, t_n) Δt + S(t_n) x_n Δw_n` on every path.
pub fn euler_maruyama(problem: &SdeProblem, x0: f64, ens: &WienerEnsemble) -> Result<Vec<SimPath>, McError> {
    if !(x0 > 0.0) {
        return Err(McError::InvalidArgument(format!("x0 = {x0} is not positive")));
    }
    let f = problem.f.bind(&problem.bindings);
    let s = problem.s.bind(&problem.bindings);
    let none = Bindings::new();
    let times = ens.grid.times();
    // S depends on t only; evaluate it once per grid time.
    let s_vals: Vec<f64> = times
        .iter()
        .map(|&t| s.eval(&Point::new(1.0, t, 0.0), &none))
        .collect::<Result<_, _>>()
        .map_err(|e| McError::InvalidArgument(format!("noise coefficient: {e}")))?;
    Ok(ens
        .paths
        .par_iter()
        .map(|w| {
            let mut x = Vec::with_capacity(w.len());
            x.push(x0);
            let mut exited_at = None;
            for k in 0..w.len() - 1 {
                let xn = x[k];
                let dt = times[k + 1] - times[k];
                let next = f
                    .eval(&Point::new(xn, times[k], 0.0), &none)
                    .map(|fv| xn + fv * dt + s_vals[k] * xn * (w[k + 1] - w[k]));
                match next {
                    Ok(v) if v.is_finite() && v > 0.0 => x.push(v),
                    _ => {
                        exited_at = Some(k + 1);
                        break;
                    }
                }
            }
            SimPath { x, exited_at }
        })
        .collect())
}

/// Pathwise solutions of a reduced equation on every path of the ensemble.
pub fn kozlov_paths(
    red: &ReducedEquation,
    tr: &Transform,
    x0: f64,
    ens: &WienerEnsemble,
) -> Result<Vec<PathSolution>, McError> {
    let times = ens.grid.times();
    ens.paths
        .par_iter()
        .map(|w| solve_pathwise(red, tr, x0, &times, w).map_err(McError::from))
        .collect()
}

/// Keeps every `factor`-th value, mapping a fine path onto a coarser grid.
pub fn subsample(path: &SimPath, factor: usize) -> SimPath {
    let x: Vec<f64> = path.x.iter().step_by(factor).copied().collect();
    let exited_at = path.exited_at.map(|k| k.div_ceil(factor));
    SimPath { x, exited_at }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongError {
    /// Mean over paths of the largest deviation on the grid.
    pub value: f64,
    pub n_used: usize,
    /// Paths left out because either side left the domain.
    pub n_excluded: usize,
}

pub fn strong_error(reference: &[SimPath], approx: &[SimPath]) -> Result<StrongError, McError> {
    if reference.len() != approx.len() {
        return Err(McError::GridMismatch(format!("{} reference paths vs {} approximations", reference.len(), approx.len())));
    }
    let mut total = 0.0;
    let mut used = 0;
    for (r, a) in reference.iter().zip(approx) {
        if r.exited_at.is_some() || a.exited_at.is_some() {
            continue;
        }
        if r.x.len() != a.x.len() {
            return Err(McError::GridMismatch(format!("path lengths {} and {}", r.x.len(), a.x.len())));
        }
        total += r.x.iter().zip(&a.x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        used += 1;
    }
    let value = if used > 0 { total / used as f64 } else { f64::NAN };
    Ok(StrongError { value, n_used: used, n_excluded: reference.len() - used })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelError {
    pub h: f64,
    pub strong_error: f64,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStats {
    pub n_paths: usize,
    pub levels: Vec<LevelError>,
    /// Least-squares slope of log2(error) against log2(h).
    pub order_estimate: f64,
    /// `log2(err(h)/err(h/2))` for consecutive levels.
    pub pairwise_orders: Vec<f64>,
}

impl ConvergenceStats {
    pub fn from_levels(n_paths: usize, levels: Vec<LevelError>) -> Self {
        let pts: Vec<(f64, f64)> = levels
            .iter()
            .filter(|l| l.strong_error > 0.0 && l.strong_error.is_finite())
            .map(|l| (l.h.log2(), l.strong_error.log2()))
            .collect();
        let n = pts.len() as f64;
        let order_estimate = if pts.len() >= 2 {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            sxy / sxx
        } else {
            f64::NAN
        };
        let pairwise_orders = levels.windows(2).map(|p| (p[0].strong_error / p[1].strong_error).log2()).collect();
        ConvergenceStats { n_paths, levels, order_estimate, pairwise_orders }
    }
}

/// Strong error of Euler–Maruyama against `reference` at each refinement
/// level in `levels`, all on one ensemble family.
pub fn convergence_study(
    problem: &SdeProblem,
    x0: f64,
    seed: u64,
    n_paths: usize,
    base: PathGrid,
    levels: std::ops::RangeInclusive<u32>,
    reference: &(dyn Fn(&WienerEnsemble) -> Result<Vec<SimPath>, McError> + Sync),
) -> Result<ConvergenceStats, McError> {
    let mut ens = generate(seed, n_paths, base.at_level(*levels.start()))?;
    let mut rows = Vec::new();
    for level in levels.clone() {
        if level > *levels.start() {
            ens = ens.refine();
        }
        let em = euler_maruyama(problem, x0, &ens)?;
        let r = reference(&ens)?;
        let e = strong_error(&r, &em)?;
        rows.push(LevelError { h: ens.grid.dt(), strong_error: e.value, n_excluded: e.n_excluded });
    }
    Ok(ConvergenceStats::from_levels(n_paths, rows))
}

/// Strong error of Euler–Maruyama at levels `0..max_level` against
/// Euler–Maruyama at `max_level` on the same paths, for equations without a
/// reduction.
pub fn em_self_convergence(
    problem: &SdeProblem,
    x0: f64,
    seed: u64,
    n_paths: usize,
    base: PathGrid,
    max_level: u32,
) -> Result<ConvergenceStats, McError> {
    if max_level == 0 {
        return Err(McError::InvalidArgument("self-convergence needs at least one refinement level".into()));
    }
    let mut ensembles = vec![generate(seed, n_paths, base.at_level(0))?];
    for _ in 0..max_level {
        let next = ensembles.last().unwrap().refine();
        ensembles.push(next);
    }
    let finest = euler_maruyama(problem, x0, ensembles.last().unwrap())?;
    let mut rows = Vec::new();
    for (level, ens) in ensembles[..max_level as usize].iter().enumerate() {
        let factor = 1usize << (max_level as usize - level);
        let reference: Vec<SimPath> = finest.iter().map(|p| subsample(p, factor)).collect();
        let e = strong_error(&reference, &euler_maruyama(problem, x0, ens)?)?;
        rows.push(LevelError { h: ens.grid.dt(), strong_error: e.value, n_excluded: e.n_excluded });
    }
    Ok(ConvergenceStats::from_levels(n_paths, rows))
}

/// `x0 exp((a - s²/2) t + s w)` for constant `a`, `s`.
pub fn gbm_exact(a: f64, s: f64, x0: f64, ens: &WienerEnsemble) -> Vec<SimPath> {
    let times = ens.grid.times();
    ens.paths
        .iter()
        .map(|w| SimPath {
            x: times.iter().zip(w).map(|(t, w)| x0 * ((a - 0.5 * s * s) * t + s * w).exp()).collect(),
            exited_at: None,
        })
        .collect()
}

/// Expression helper for problems built in code.
pub fn problem(f: &str, s: &str, bindings: Bindings) -> Result<SdeProblem, String> {
    let parse = |src: &str| crate::expr::parse(src).map_err(|e| e.to_string());
    let (f, s): (Expr, Expr) = (parse(f)?, parse(s)?);
    SdeProblem::new(f, s, bindings).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_end: f64, steps: usize) -> PathGrid {
        PathGrid::new(t_end, steps).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_ensembles() {
        let a = generate(11, 16, grid(1.0, 8).at_level(2)).unwrap();
        let b = generate(11, 16, grid(1.0, 8).at_level(2)).unwrap();
        assert_eq!(a, b);
        let c = generate(12, 16, grid(1.0, 8).at_level(2)).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn refinement_keeps_coarse_values_exactly() {
        let coarse = generate(3, 10, grid(2.0, 5)).unwrap();
        let fine = generate(3, 10, grid(2.0, 5).at_level(1)).unwrap();
        assert_eq!(fine, coarse.refine());
        for (c, f) in coarse.paths.iter().zip(&fine.paths) {
            assert_eq!(f.len(), 2 * c.len() - 1);
            for (k, v) in c.iter().enumerate() {
                assert_eq!(v.to_bits(), f[2 * k].to_bits());
            }
        }
    }

    #[test]
    fn terminal_mean_is_zero_within_clt_bound() {
        let t_end = 1.5;
        let ens = generate(5, 100_000, grid(t_end, 2)).unwrap();
        let mean = ens.paths.iter().map(|w| w[2]).sum::<f64>() / 1e5;
        assert!(mean.abs() < 4.0 * (t_end / 1e5).sqrt(), "{mean}");
    }

    #[test]
    fn midpoint_variance_matches_bridge() {
        // Var(w(h/2) - (w(0) + w(h))/2) = h/4.
        let ens = generate(8, 40_000, grid(1.0, 1).at_level(1)).unwrap();
        let v = ens.paths.iter().map(|w| (w[1] - 0.5 * w[2]).powi(2)).sum::<f64>() / 40_000.0;
        assert!((v - 0.25).abs() < 4.0 * 0.25 * (2.0f64 / 40_000.0).sqrt(), "{v}");
    }

    #[test]
    fn zero_drift_is_a_product_of_increments() {
        let p = problem("0", "s", Bindings::new().with("s", 0.3)).unwrap();
        let ens = generate(1, 4, grid(1.0, 10)).unwrap();
        let em = euler_maruyama(&p, 2.0, &ens).unwrap();
        for (path, sim) in em.iter().enumerate() {
            let prod = ens.increments(path).iter().fold(2.0, |acc, dw| acc * (1.0 + 0.3 * dw));
            // x + s x dw and x (1 + s dw) may differ in the last bit.
            assert!((sim.x.last().unwrap() - prod).abs() <= 1e-14 * prod);
        }
    }

    #[test]
    fn gbm_mean() {
        let p = problem("a*x", "s", Bindings::new().with("a", 0.05).with("s", 0.2)).unwrap();
        let ens = generate(21, 100_000, grid(1.0, 50)).unwrap();
        let em = euler_maruyama(&p, 1.0, &ens).unwrap();
        let xs: Vec<f64> = em.iter().map(|s| *s.x.last().unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.05f64.exp()).abs() < 3.0 * (var / n).sqrt(), "{mean}");
    }

    #[test]
    fn gbm_log_moments() {
        let (a, s) = (0.05, 0.2);
        let ens = generate(22, 100_000, grid(1.0, 4)).unwrap();
        let logs: Vec<f64> = gbm_exact(a, s, 1.0, &ens).iter().map(|p| p.x.last().unwrap().ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m = a - s * s / 2.0;
        assert!((mean - m).abs() < 4.0 * (s * s / n).sqrt(), "{mean}");
        // Var of the sample variance is 2σ⁴/(n-1) for normal data.
        assert!((var - s * s).abs() < 4.0 * (2.0 * s.powi(4) / (n - 1.0)).sqrt(), "{var}");
    }

    #[test]
    fn gbm_em_has_strong_order_one_half() {
        let (a, s) = (0.05, 0.8);
        let p = problem("a*x", "s", Bindings::new().with("a", a).with("s", s)).unwrap();
        let stats = convergence_study(&p, 1.0, 9, 400, grid(1.0, 16), 0..=3, &|ens| Ok(gbm_exact(a, s, 1.0, ens))).unwrap();
        assert!((0.35..=0.65).contains(&stats.order_estimate), "{stats:?}");
    }

    #[test]
    fn self_convergence_of_gbm_has_order_one_half() {
        let p = problem("a*x", "s", Bindings::new().with("a", 0.05).with("s", 0.8)).unwrap();
        let stats = em_self_convergence(&p, 1.0, 4, 400, grid(1.0, 16), 4).unwrap();
        assert_eq!(stats.levels.len(), 4);
        assert!((0.3..=0.7).contains(&stats.order_estimate), "{stats:?}");
    }

    #[test]
    fn identical_inputs_have_zero_error() {
        let p = vec![SimPath { x: vec![1.0, 2.0], exited_at: None }];
        assert_eq!(strong_error(&p, &p).unwrap().value, 0.0);
        let q = vec![SimPath { x: vec![1.0], exited_at: None }];
        assert!(matches!(strong_error(&p, &q), Err(McError::GridMismatch(_))));
    }

    #[test]
    fn paths_leaving_the_domain_are_flagged() {
        let p = problem("-5*x", "s", Bindings::new().with("s", 1.0)).unwrap();
        let ens = generate(2, 50, grid(1.0, 2)).unwrap();
        let em = euler_maruyama(&p, 1.0, &ens).unwrap();
        for sim in &em {
            if let Some(k) = sim.exited_at {
                assert_eq!(sim.x.len(), k);
            }
        }
        assert!(em.iter().any(|s| s.exited_at.is_some()));
    }
}
