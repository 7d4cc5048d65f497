//! `stochsym`: classify, verify, integrate and simulate scalar Ito equations
//! `dx = f(x,t) dt + S(t) x dw` described by a TOML problem file.

mod problem_file;
mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use stochsym::classifier::{classify_with, constant_value, Classification, ClassifyError};
use stochsym::expr::{parse, Expr};
use stochsym::kozlov::{self, integrate_inverse_phi, reduce, KozlovError, ReducedEquation, Transform};
use stochsym::montecarlo::{
    convergence_study, em_self_convergence, euler_maruyama, generate, gbm_exact, kozlov_paths, strong_error,
    ConvergenceStats, PathGrid, SimPath,
};
use stochsym::sde::{verify_with, SdeError, SymmetryCandidate, VerifyOptions};

use problem_file::{ProblemFile, Simulate};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NONE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

#[derive(Parser)]
#[command(name = "stochsym", version, about = "Symmetries and symmetry-based integration of scalar Ito equations")]
struct Cli {
    /// Seed for verification sampling and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute tolerance for numeric residual checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of random points for numeric residual checks.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List every verified symmetry case of the equation.
    Classify { file: PathBuf },
    /// Check a candidate symmetry coefficient against the determining equations.
    Verify {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        #[arg(long = "R", allow_hyphen_values = true, default_value_t = 0.0)]
        r: f64,
    },
    /// Reduce the equation with its first reducible symmetry; with a
    /// [simulate] block, also write pathwise solutions as CSV.
    Integrate {
        file: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Euler–Maruyama against the reduced solution across refinement levels.
    Simulate {
        file: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Classify { file } => cmd_classify(cli, &ProblemFile::load(file)?),
        Command::Verify { file, phi, r } => cmd_verify(cli, &ProblemFile::load(file)?, phi, *r),
        Command::Integrate { file, out_dir } => cmd_integrate(cli, &ProblemFile::load(file)?, out_dir),
        Command::Simulate { file, out_dir } => cmd_simulate(cli, &ProblemFile::load(file)?, out_dir),
    }
}

fn verify_options(cli: &Cli, pf: &ProblemFile) -> VerifyOptions {
    let d = VerifyOptions::default();
    VerifyOptions {
        samples: cli.samples.or(pf.tolerances.samples).unwrap_or(d.samples),
        tol: cli.tol.or(pf.tolerances.tol).unwrap_or(d.tol),
        seed: cli.seed.or(pf.tolerances.seed).unwrap_or(d.seed),
    }
}

fn problem_json(pf: &ProblemFile) -> Value {
    json!({ "drift": pf.drift, "noise_S": pf.noise_s, "params": pf.params })
}

enum Classified {
    Found(Vec<Classification>),
    None { reason: &'static str, detail: String },
}

fn run_classifier(cli: &Cli, pf: &ProblemFile) -> Result<Classified> {
    match classify_with(&pf.problem, verify_options(cli, pf)) {
        Ok(cs) if cs.is_empty() => Ok(Classified::None {
            reason: "NoVerifiedCase",
            detail: "the drift fits the admissible family but no case verified".into(),
        }),
        Ok(cs) => Ok(Classified::Found(cs)),
        Err(e @ ClassifyError::UnclassifiableDrift { .. }) => {
            Ok(Classified::None { reason: "UnclassifiableDrift", detail: e.to_string() })
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_classify(cli: &Cli, pf: &ProblemFile) -> Result<u8> {
    let (out, code) = match run_classifier(cli, pf)? {
        Classified::Found(cs) => (
            json!({
                "problem": problem_json(pf),
                "classifications": cs.iter().map(Classification::to_json).collect::<Vec<_>>(),
            }),
            EXIT_OK,
        ),
        Classified::None { reason, detail } => (
            json!({ "problem": problem_json(pf), "classifications": [], "reason": reason, "detail": detail }),
            EXIT_NONE,
        ),
    };
    report::print(&out);
    Ok(code)
}

fn cmd_verify(cli: &Cli, pf: &ProblemFile, phi: &str, r: f64) -> Result<u8> {
    let phi = parse(phi).context("--phi")?;
    let cand = SymmetryCandidate::new(r, phi)?;
    let rep = match verify_with(&pf.problem, &cand, verify_options(cli, pf)) {
        Ok(rep) => rep,
        Err(e @ SdeError::Domain { .. }) => bail!("{e}"),
        Err(e) => return Err(e.into()),
    };
    let mut out = serde_json::to_value(&rep)?;
    out["phi"] = Value::String(cand.phi.to_string());
    out["R"] = json!(r);
    report::print(&out);
    Ok(if rep.passed() { EXIT_OK } else { EXIT_NONE })
}

struct Reduction<'a> {
    class: &'a Classification,
    transform: Transform,
    reduced: ReducedEquation,
}

/// The first classification, in priority order, whose symmetry reduces the
/// equation, plus diagnostics for the ones that did not.
fn first_reduction<'a>(pf: &ProblemFile, cs: &'a [Classification]) -> (Option<Reduction<'a>>, Vec<Value>) {
    let mut attempts = Vec::new();
    for c in cs {
        let outcome = integrate_inverse_phi(&c.candidate, &pf.problem.bindings)
            .and_then(|tr| reduce(&pf.problem, &c.candidate, &tr).map(|red| (tr, red)));
        match outcome {
            Ok((transform, reduced)) => return (Some(Reduction { class: c, transform, reduced }), attempts),
            Err(e) => attempts.push(attempt_json(c, &e)),
        }
    }
    (None, attempts)
}

fn attempt_json(c: &Classification, e: &KozlovError) -> Value {
    let mut v = json!({ "case": c.case.tag(), "phi": c.phi().to_string(), "error": e.to_string() });
    if let KozlovError::ReductionFailed { evaluations, .. } = e {
        v["evaluations"] = serde_json::to_value(evaluations).expect("evaluations serialize");
    }
    v
}

fn transform_json(tr: &Transform) -> Value {
    json!({
        "shape": serde_json::to_value(tr.shape).expect("shape serializes"),
        "phi": tr.phi.to_string(),
        "y_of": tr.y_of.as_ref().map_or_else(
            || format!("integral of 1/phi from x = {} (numeric)", tr.x_ref),
            Expr::to_string,
        ),
        "x_of": tr.x_of.iter().map(Expr::to_string).collect::<Vec<_>>(),
        "valid_domain": tr.valid_domain,
    })
}

fn reduced_json(red: &ReducedEquation) -> Value {
    json!({
        "a": red.a.as_ref().map_or_else(|| "numeric".to_string(), Expr::to_string),
        "b": red.b.as_ref().map_or_else(|| "numeric".to_string(), Expr::to_string),
        "equation": red.to_string(),
        "x_eliminated": red.x_eliminated,
        "y_dependent": red.y_dependent,
        "max_relative_spread": red.max_relative_spread,
    })
}

fn simulate_seed(cli: &Cli, sim: &Simulate) -> u64 {
    cli.seed.or(sim.seed).unwrap_or(stochsym::sde::DEFAULT_SEED)
}

fn cmd_integrate(cli: &Cli, pf: &ProblemFile, out_dir: &Path) -> Result<u8> {
    let cs = match run_classifier(cli, pf)? {
        Classified::Found(cs) => cs,
        Classified::None { reason, detail } => {
            report::print(&json!({ "problem": problem_json(pf), "reason": reason, "detail": detail }));
            return Ok(EXIT_NONE);
        }
    };
    let (found, attempts) = first_reduction(pf, &cs);
    let Some(red) = found else {
        report::print(&json!({
            "problem": problem_json(pf),
            "reason": "ReductionFailed",
            "attempts": attempts,
        }));
        return Ok(EXIT_NONE);
    };
    let mut out = json!({
        "problem": problem_json(pf),
        "case": red.class.case.tag(),
        "R": red.class.r,
        "transform": transform_json(&red.transform),
        "reduced": reduced_json(&red.reduced),
        "skipped": attempts,
    });
    if let Some(sim) = &pf.simulate {
        let grid = PathGrid::new(sim.t_end, sim.steps)?;
        let n = sim.csv_paths.min(sim.n_paths).max(1);
        let ens = generate(simulate_seed(cli, sim), n, grid)?;
        let paths = kozlov_paths(&red.reduced, &red.transform, sim.x0, &ens)?;
        let csv = out_dir.join("kozlov_paths.csv");
        write_file(&csv, |w| kozlov::write_csv(&paths, w))?;
        out["csv"] = json!({
            "kozlov_paths": csv.display().to_string(),
            "n_paths": n,
            "exited": paths.iter().filter(|p| p.exited_at.is_some()).count(),
        });
    }
    report::print(&out);
    Ok(EXIT_OK)
}

fn cmd_simulate(cli: &Cli, pf: &ProblemFile, out_dir: &Path) -> Result<u8> {
    let Some(sim) = &pf.simulate else {
        bail!("simulate needs a [simulate] block in the problem file");
    };
    let seed = simulate_seed(cli, sim);
    let base = PathGrid::new(sim.t_end, sim.steps)?;
    let levels = 0..=sim.refinement_levels;
    let cs = match run_classifier(cli, pf)? {
        Classified::Found(cs) => cs,
        Classified::None { .. } => Vec::new(),
    };
    let (found, _) = first_reduction(pf, &cs);

    let (stats, reference): (ConvergenceStats, &str) = match &found {
        Some(r) => (
            convergence_study(&pf.problem, sim.x0, seed, sim.n_paths, base, levels, &|ens| {
                Ok(kozlov_paths(&r.reduced, &r.transform, sim.x0, ens)?.into_iter().map(SimPath::from).collect())
            })?,
            "kozlov",
        ),
        None => {
            if sim.refinement_levels == 0 {
                bail!("without a reduction the reference is the finest Euler–Maruyama level; set refinement_levels >= 1");
            }
            (
                em_self_convergence(&pf.problem, sim.x0, seed, sim.n_paths, base, sim.refinement_levels)?,
                "euler_maruyama_finest_level",
            )
        }
    };

    // Finest level once more for CSV output and domain-exit accounting.
    let finest = generate(seed, sim.n_paths, base.at_level(sim.refinement_levels))?;
    let em = euler_maruyama(&pf.problem, sim.x0, &finest)?;
    let exited = em.iter().filter(|p| p.exited_at.is_some()).count();
    let exit_fraction = exited as f64 / sim.n_paths as f64;
    let n_csv = sim.csv_paths.min(sim.n_paths);
    let em_csv = out_dir.join("em_paths.csv");
    let times = finest.grid.times();
    write_file(&em_csv, |w| write_em_csv(&em[..n_csv], &times, &finest.paths, w))?;

    let mut out = json!({
        "problem": problem_json(pf),
        "seed": seed,
        "n_paths": stats.n_paths,
        "levels": serde_json::to_value(&stats.levels)?,
        "order_estimate": stats.order_estimate,
        "pairwise_orders": stats.pairwise_orders,
        "reference": reference,
        "domain_exit_fraction": exit_fraction,
        "csv": { "em_paths": em_csv.display().to_string() },
    });
    if let Some(r) = &found {
        out["case"] = json!(r.class.case.tag());
        out["reduced"] = reduced_json(&r.reduced);
        let kp = kozlov_paths(&r.reduced, &r.transform, sim.x0, &finest)?;
        let k_csv = out_dir.join("kozlov_paths.csv");
        write_file(&k_csv, |w| kozlov::write_csv(&kp[..n_csv], w))?;
        out["csv"]["kozlov_paths"] = json!(k_csv.display().to_string());
        if let Some((a, s)) = gbm_parameters(pf) {
            let exact = gbm_exact(a, s, sim.x0, &finest);
            let kozlov: Vec<SimPath> = kp.into_iter().map(SimPath::from).collect();
            let worst = kozlov
                .iter()
                .zip(&exact)
                .flat_map(|(k, e)| k.x.iter().zip(&e.x).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max);
            out["gbm_exact_max_error"] = json!(worst);
            out["gbm_exact_strong_error"] = json!(strong_error(&exact, &kozlov)?.value);
        }
    }
    let code = if exit_fraction > 0.5 {
        out["warning"] = json!(format!("{exited} of {} paths left x > 0", sim.n_paths));
        EXIT_DOMAIN
    } else {
        EXIT_OK
    };
    report::print(&out);
    Ok(code)
}

/// `(a, s)` when the equation is `dx = a x dt + s x dw` with constants.
fn gbm_parameters(pf: &ProblemFile) -> Option<(f64, f64)> {
    let p = &pf.problem;
    let ratio = Expr::product(vec![p.f.clone(), Expr::x().recip()]).simplify();
    let a = constant_value(&ratio, &p.bindings)?;
    let s = constant_value(&p.s, &p.bindings)?;
    Some((a, s))
}

fn write_em_csv(paths: &[SimPath], times: &[f64], w: &[Vec<f64>], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "path,t,w,x")?;
    for (i, p) in paths.iter().enumerate() {
        for (k, x) in p.x.iter().enumerate() {
            writeln!(out, "{i},{:.17e},{:.17e},{x:.17e}", times[k], w[i][k])?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}
