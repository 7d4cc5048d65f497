//! TOML problem files.
//!
//! ```toml
//! [problem]
//! drift = "A*x - B*x^2"
//! noise_S = "mu"
//!
//! [params]
//! A = 1.0
//! B = 0.5
//! mu = 0.3
//!
//! [simulate]            # optional
//! x0 = 0.2
//! t_end = 1.0
//! steps = 256
//! n_paths = 200
//! seed = 2024
//! refinement_levels = 3
//!
//! [tolerances]          # optional
//! tol = 1e-9
//! samples = 100
//! seed = 1
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stochsym::expr::{parse, Bindings, Expr, Var};
use stochsym::sde::SdeProblem;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    problem: RawProblem,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    simulate: Option<Simulate>,
    tolerances: Option<Tolerances>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    drift: String,
    #[serde(rename = "noise_S")]
    noise_s: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulate {
    pub x0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_levels")]
    pub refinement_levels: u32,
    /// Paths written to CSV (the first ones of the ensemble).
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
}

fn default_levels() -> u32 {
    3
}

fn default_csv_paths() -> usize {
    10
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub drift: String,
    pub noise_s: String,
    pub params: BTreeMap<String, f64>,
    pub problem: SdeProblem,
    pub simulate: Option<Simulate>,
    pub tolerances: Tolerances,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text)?;
        let f = parse(&raw.problem.drift).context("drift")?;
        let s = parse(&raw.problem.noise_s).context("noise_S")?;
        if s.depends_on_any(&[Var::X, Var::W, Var::Y]) {
            bail!("noise_S must be a function of t and parameters only");
        }
        let mut bindings = Bindings::new();
        for (k, v) in &raw.params {
            bindings.insert(k, *v);
        }
        let missing: Vec<String> = f
            .parameters()
            .into_iter()
            .chain(s.parameters())
            .filter(|p| bindings.get(p).is_none())
            .collect();
        if !missing.is_empty() {
            bail!("parameters without values: {}", missing.join(", "));
        }
        if let Some(sim) = &raw.simulate {
            check_simulate(sim)?;
        }
        let t_end = raw.simulate.as_ref().map_or(2.0, |s| s.t_end);
        check_noise(&s, &bindings, t_end)?;
        let problem = SdeProblem::new(f, s, bindings)?;
        Ok(ProblemFile {
            drift: raw.problem.drift,
            noise_s: raw.problem.noise_s,
            params: raw.params,
            problem,
            simulate: raw.simulate,
            tolerances: raw.tolerances.unwrap_or_default(),
        })
    }
}

fn check_simulate(sim: &Simulate) -> Result<()> {
    if !(sim.x0 > 0.0) {
        bail!("simulate.x0 must be positive");
    }
    if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
        bail!("simulate.t_end must be positive");
    }
    if sim.steps == 0 || sim.n_paths == 0 {
        bail!("simulate.steps and simulate.n_paths must be at least 1");
    }
    if sim.refinement_levels > 12 {
        bail!("simulate.refinement_levels above 12 is not supported");
    }
    Ok(())
}

/// Rejects `S` that vanishes at every sampled time in `[0, t_end]`.
fn check_noise(s: &Expr, b: &Bindings, t_end: f64) -> Result<()> {
    let mut any_nonzero = false;
    for i in 0..=64 {
        let t = t_end * i as f64 / 64.0;
        let v = s.eval_xtw(1.0, t, 0.0, b).with_context(|| format!("evaluating noise_S at t = {t}"))?;
        any_nonzero |= v != 0.0;
    }
    if !any_nonzero {
        bail!("noise_S is identically zero on [0, {t_end}]");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOGISTIC: &str = r#"
[problem]
drift = "A*x - B*x^2"
noise_S = "mu"

[params]
A = 1.0
B = 0.5
mu = 0.3
"#;

    #[test]
    fn reads_a_minimal_file() {
        let pf = ProblemFile::from_toml(LOGISTIC).unwrap();
        assert_eq!(pf.params.len(), 3);
        assert!(pf.simulate.is_none());
    }

    #[test]
    fn rejects_missing_parameters_and_zero_noise() {
        let err = ProblemFile::from_toml(&LOGISTIC.replace("B = 0.5\n", "")).unwrap_err();
        assert!(format!("{err:#}").contains("B"));
        let err = ProblemFile::from_toml(&LOGISTIC.replace("mu = 0.3", "mu = 0.0")).unwrap_err();
        assert!(format!("{err:#}").contains("zero"));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ProblemFile::from_toml(&format!("{LOGISTIC}\n[extra]\nk = 1\n")).is_err());
    }
}
