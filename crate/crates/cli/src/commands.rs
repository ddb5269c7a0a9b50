use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use bangbang::analysis::{analyze, default_eps_range, fit_measure_condition, FLAT_ADJOINT_TOL};
use bangbang::objective::{eval_j, EvaluatedControl};
use bangbang::optimizer::solve;
use bangbang::stability::{default_directions, fit_holder, run_sweep, HolderSummary, SweepPlan, Verdict};
use bangbang::{Error, GridFunction, Norm, PdeSolver, Perturbation};
use serde::Serialize;

use crate::config::{DirectionSet, RunConfig};
use crate::{CliError, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Analyze,
    Perturb,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub const SOLUTION: &str = "solution.csv";
pub const STATE: &str = "state.csv";
pub const ADJOINT: &str = "adjoint.csv";
pub const TRACE: &str = "trace.csv";
pub const ANALYSIS: &str = "analysis.json";
pub const MEASURE_FIT: &str = "measure_fit.csv";
pub const HOLDER_FIT: &str = "holder_fit.json";

struct Context {
    config: RunConfig,
    out: PathBuf,
    pde: PdeSolver<f64>,
}

fn context(inv: &Invocation) -> Result<Context, CliError> {
    let mut config = RunConfig::load(&inv.config)?;
    if let Some(seed) = inv.seed {
        config.run.seed = seed;
    }
    let out = inv.out.clone().unwrap_or_else(|| PathBuf::from(&config.run.output));
    let pde = PdeSolver::new(config.problem()?);
    Ok(Context { config, out, pde })
}

pub fn run(inv: &Invocation) -> Result<Outcome, CliError> {
    let ctx = context(inv)?;
    match inv.command {
        Command::Solve => cmd_solve(&ctx),
        Command::Analyze => cmd_analyze(&ctx),
        Command::Perturb => cmd_perturb(&ctx),
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report is serializable");
    write_file(dir, name, |w| writeln!(w, "{text}"))
}

fn cmd_solve(ctx: &Context) -> Result<Outcome, CliError> {
    let opts = ctx.config.solve_options()?;
    let start = ctx.pde.spec().bounds.midpoint();
    let trace = solve(&ctx.pde, &opts, &start)?;
    fs::create_dir_all(&ctx.out)?;
    let p = &trace.final_point;
    write_file(&ctx.out, SOLUTION, |w| p.control.write_csv(w))?;
    write_file(&ctx.out, STATE, |w| p.state.write_csv(w))?;
    write_file(&ctx.out, ADJOINT, |w| p.adjoint.write_csv(w))?;
    write_file(&ctx.out, TRACE, |w| trace.write_csv(w))?;
    Ok(if trace.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

/// Reads `solution.csv` and re-evaluates state and adjoint.
fn load_solution(ctx: &Context) -> Result<EvaluatedControl<f64>, CliError> {
    let path = ctx.out.join(SOLUTION);
    let artifact = |detail: String| CliError::Artifact {
        path: path.display().to_string(),
        detail,
    };
    let file = File::open(&path).map_err(|e| artifact(e.to_string()))?;
    let u = GridFunction::read_csv(ctx.pde.grid(), BufReader::new(file)).map_err(|e| artifact(e.to_string()))?;
    if !ctx.pde.spec().bounds.contains(&u) {
        return Err(artifact("control violates the configured bounds".into()));
    }
    Ok(eval_j(&ctx.pde, &u)?)
}

fn cmd_analyze(ctx: &Context) -> Result<Outcome, CliError> {
    let ec = load_solution(ctx)?;
    let analysis = analyze(&ctx.pde, &ec, &ctx.config.analysis_settings())?;
    write_json(&ctx.out, ANALYSIS, &analysis.report())?;
    write_file(&ctx.out, MEASURE_FIT, |w| analysis.fit.write_csv(w))?;
    Ok(if analysis.passed() {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    index: usize,
    converged_scales: usize,
    flagged_scales: usize,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    fit: Option<HolderSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct HolderReport {
    ae_expected: HolderNumber,
    sweeps: Vec<SweepEntry>,
}

/// æ from the level-set fit, `+∞` for a vanishing adjoint.
#[derive(Debug, Clone, Copy)]
struct HolderNumber(f64);

impl Serialize for HolderNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0.is_nan() {
            s.serialize_str("nan")
        } else {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        }
    }
}

fn expected_exponent(ctx: &Context, ec: &EvaluatedControl<f64>) -> Result<f64, CliError> {
    let phi = &ec.adjoint;
    if phi.lp_norm(Norm::Inf) <= FLAT_ADJOINT_TOL {
        return Ok(f64::INFINITY);
    }
    let a = &ctx.config.analysis;
    let (lo, hi) = match (a.eps_min, a.eps_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) => {
            let (dlo, dhi) = default_eps_range(phi)?;
            (lo.unwrap_or(dlo), hi.unwrap_or(dhi))
        }
    };
    Ok(fit_measure_condition(phi, lo, hi, a.fit_points)?.exponent)
}

fn cmd_perturb(ctx: &Context) -> Result<Outcome, CliError> {
    let ec = load_solution(ctx)?;
    let ae = expected_exponent(ctx, &ec)?;
    let opts = ctx.config.solve_options()?;
    let seed = ctx.config.run.seed;
    let s = &ctx.config.sweep;
    let directions = match s.directions {
        DirectionSet::Default => default_directions(ctx.pde.grid(), seed),
        DirectionSet::Zero => vec![Perturbation::zero(ctx.pde.grid())],
    };
    let mut entries = Vec::new();
    let mut all_pass = true;
    for (k, d) in directions.into_iter().enumerate() {
        let plan = SweepPlan::geometric(d, s.t0, s.ratio, s.rungs, opts.clone(), seed)
            .map_err(|e| CliError::Config(format!("[sweep]: {e}")))?;
        let mut entry = SweepEntry {
            index: k,
            converged_scales: 0,
            flagged_scales: 0,
            fit: None,
            error: None,
        };
        match run_sweep(&ctx.pde, &ec, &plan) {
            Ok(result) => {
                write_file(&ctx.out, &format!("sweep_{k}.csv"), |w| result.write_csv(w))?;
                entry.converged_scales = result.records.iter().filter(|r| r.converged).count();
                entry.flagged_scales = result.flagged().count() + result.failed.len();
                match fit_holder(&result, ae) {
                    Ok(fit) => {
                        all_pass &= fit.verdict != Verdict::Inconsistent;
                        entry.fit = Some(fit.summary());
                    }
                    Err(e @ Error::InsufficientData(_)) => {
                        all_pass = false;
                        entry.error = Some(e.to_string());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Err(e @ Error::SweepFailure(_)) => {
                all_pass = false;
                entry.error = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
        entries.push(entry);
    }
    write_json(
        &ctx.out,
        HOLDER_FIT,
        &HolderReport {
            ae_expected: HolderNumber(ae),
            sweeps: entries,
        },
    )?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}
