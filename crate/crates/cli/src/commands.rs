//! Subcommands and their exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use stochsym::ansatz::{
    bound_params, effective_mode, solve_symmetries, AnsatzError, Mode, SolverOptions, SymmetryBasis,
};
use stochsym::determining::{classical_system, deterministic_ode_system, stochastic_system, Sde, VectorField};
use stochsym::expr::{snap_number, Number};
use stochsym::grid::Window;
use stochsym::lie::{match_basis, structure_constants, MatchOptions, MatchOutcome, StructureConstants};
use stochsym::numeric::{residual_check, verify_map, verify_symmetry, McSettings, NumericError, ResidualOptions};
use stochsym::transform::{find_map, FindMapError, FindMapOptions, MapOptions, TransformMap};
use thiserror::Error;

use crate::problem::{load_generator, load_map, Problem, ProblemError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_NO_MATCH: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

const CONVENTION: &str = "\
Generators are printed as [tau∂t + phi∂x]^D + [phi_s∂x]^S. The basis is put
in reduced echelon form over the dictionary (time entries first), then each
generator that is purely deterministic or purely stochastic is rescaled to
clear rational denominators, so X = 2*t∂t + x∂x rather than t∂t + 1/2*x∂x.

Exit codes: 0 success, 2 parse error, 3 solver failure, 4 algebras do not
match, 5 verification failed.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Output {
    #[default]
    Text,
    Kv,
}

#[derive(Debug, Parser)]
#[command(name = "stochsym", version, about = "Lie symmetries of scalar Itô SDEs", after_help = CONVENTION)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for sample points and path simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Residual tolerance for verification.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Sample points for solving and residual checks.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Monte-Carlo paths per ensemble.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Sampling window t0,t1,x0,x1.
    #[arg(long, global = true, value_parser = parse_window)]
    pub window: Option<Window>,
    /// Determining system: classical, stochastic or det-ode.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    pub output: Output,
}

fn parse_window(s: &str) -> Result<Window, String> {
    Window::parse(s).ok_or_else(|| format!("invalid window '{s}' (expected t0,t1,x0,x1 with t0 < t1, x0 < x1)"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the symmetry algebra of a problem's equation.
    #[command(after_help = CONVENTION)]
    Symmetries { problem: PathBuf },
    /// Commutator table of the deterministic generators.
    Brackets { problem: PathBuf },
    /// Change of basis between two problems' algebras.
    Match { source: PathBuf, target: PathBuf },
    /// Search for a map taking the source equation to the target equation.
    FindMap { source: PathBuf, target: PathBuf },
    /// Check a candidate generator against a problem's equation.
    VerifySymmetry {
        problem: PathBuf,
        generator: PathBuf,
        /// Flow parameter for the Monte-Carlo check.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Check a map from the problem's [sde] to its [target.sde].
    VerifyMap { problem: PathBuf, map: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Problem(_) | CliError::Parse(_) => EXIT_PARSE,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<AnsatzError> for CliError {
    fn from(e: AnsatzError) -> Self {
        match e {
            AnsatzError::UnboundParameter(_) | AnsatzError::Dictionary { .. } | AnsatzError::Determining(_) => {
                CliError::Parse(e.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::Ansatz(a) => a.into(),
            other => CliError::Solver(other.to_string()),
        }
    }
}

/// What a command printed and how the process should exit.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

/// Settings after merging problem files with command-line flags.
struct Settings {
    solver: SolverOptions,
    residual: ResidualOptions,
    mc: McSettings,
    eps: f64,
    restarts: usize,
    mode: Mode,
    output: Output,
}

impl Settings {
    fn resolve(cli: &Cli, p: &Problem) -> Settings {
        let n = &p.numeric;
        let window = cli.window.or(n.window).unwrap_or_default();
        let seed = cli.seed.or(n.seed).unwrap_or(0);
        let tol = cli.tol.or(n.tol);
        let points = cli.points.or(n.points);
        let mut solver = SolverOptions { window, seed, ..SolverOptions::default() };
        if let Some(t) = tol {
            solver.verify_tol = t;
        }
        if let Some(k) = points {
            solver.points = k;
        }
        if let Some(k) = n.verify_points {
            solver.verify_points = k;
        }
        let mut residual = ResidualOptions { window, seed, ..ResidualOptions::default() };
        if let Some(t) = tol {
            residual.tol = t;
        }
        if let Some(k) = points {
            residual.n_points = k;
        }
        let d = McSettings::default();
        let mc = McSettings {
            x0: n.x0.unwrap_or(d.x0),
            n_paths: cli.paths.or(n.paths).unwrap_or(d.n_paths),
            h: n.h.unwrap_or(d.h),
            steps: n.steps.unwrap_or(d.steps),
            seed,
        };
        Settings {
            solver,
            residual,
            mc,
            eps: n.eps.unwrap_or(0.1),
            restarts: n.restarts.unwrap_or(64),
            mode: cli.mode.or(n.mode).unwrap_or(Mode::Stochastic),
            output: cli.output,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Symmetries { problem } => symmetries(cli, problem),
        Command::Brackets { problem } => brackets(cli, problem),
        Command::Match { source, target } => matching(cli, source, target),
        Command::FindMap { source, target } => find(cli, source, target),
        Command::VerifySymmetry { problem, generator, eps } => verify_generator(cli, problem, generator, *eps),
        Command::VerifyMap { problem, map } => verify_transform(cli, problem, map),
    }
}

fn solve(p: &Problem, s: &Settings) -> Result<SymmetryBasis, CliError> {
    let ansatz = p.symmetry_ansatz()?;
    Ok(solve_symmetries(&p.sde, &ansatz, s.mode, &s.solver)?)
}

fn shown(basis: &SymmetryBasis) -> Vec<VectorField> {
    basis.generators.iter().map(|g| g.display_field()).collect()
}

fn symmetries(cli: &Cli, path: &Path) -> Result<Outcome, CliError> {
    let p = Problem::load(path)?;
    let s = Settings::resolve(cli, &p);
    let basis = solve(&p, &s)?;
    let mut out = String::new();
    match s.output {
        Output::Text => {
            let _ = writeln!(out, "mode: {}", basis.mode);
            let _ = writeln!(out, "dimension: {}", basis.dim());
            for (i, v) in shown(&basis).iter().enumerate() {
                let _ = writeln!(out, "X{} = {v}", i + 1);
            }
            for n in &basis.notes {
                let _ = writeln!(out, "note: {n}");
            }
        }
        Output::Kv => {
            let _ = writeln!(out, "mode = {}", basis.mode);
            let _ = writeln!(out, "dim = {}", basis.dim());
            for (i, (v, g)) in shown(&basis).iter().zip(&basis.generators).enumerate() {
                let i = i + 1;
                let _ = writeln!(out, "generator.{i} = {v}");
                let _ = writeln!(out, "generator.{i}.tau = {}", v.tau);
                let _ = writeln!(out, "generator.{i}.phi = {}", v.phi);
                let _ = writeln!(out, "generator.{i}.phi_s = {}", v.phi_s);
                let _ = writeln!(out, "generator.{i}.residual = {:.3e}", g.residual);
            }
            for (i, n) in basis.notes.iter().enumerate() {
                let _ = writeln!(out, "note.{} = {n}", i + 1);
            }
        }
    }
    Ok(Outcome { stdout: out, code: EXIT_OK })
}

/// Deterministic generators of a problem with their structure constants.
fn algebra(p: &Problem, s: &Settings) -> Result<(Vec<VectorField>, StructureConstants), CliError> {
    let basis = solve(p, s)?;
    let fields: Vec<VectorField> = shown(&basis).into_iter().filter(|v| v.is_deterministic()).collect();
    let c = structure_constants(&fields, &basis.params, s.solver.window, s.solver.seed)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    Ok((fields, c))
}

fn write_algebra(out: &mut String, label: &str, fields: &[VectorField], c: &StructureConstants, format: Output) {
    match format {
        Output::Text => {
            let _ = writeln!(out, "{label} generators:");
            for (i, v) in fields.iter().enumerate() {
                let _ = writeln!(out, "  X{} = {v}", i + 1);
            }
            let _ = writeln!(out, "{label} brackets:");
            for line in c.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
        Output::Kv => {
            let _ = writeln!(out, "{label}.dim = {}", fields.len());
            for (i, v) in fields.iter().enumerate() {
                let _ = writeln!(out, "{label}.generator.{} = {v}", i + 1);
            }
            for (k, i, j, v) in c.nonzero(1e-12) {
                if i < j {
                    let _ = writeln!(out, "{label}.c.{}.{}.{} = {}", i + 1, j + 1, k + 1, exact(v));
                }
            }
        }
    }
}

/// Small rationals print exactly, anything else in full precision.
fn exact(v: f64) -> String {
    match snap_number(v, 1e-9) {
        Number::Rational(r) => r.to_string(),
        Number::Float(f) => f.to_string(),
    }
}

/// Round-off level residuals print as a bound so text output is stable.
fn small(r: f64) -> String {
    if r < 1e-12 {
        "< 1e-12".to_string()
    } else {
        format!("{r:.1e}")
    }
}

fn brackets(cli: &Cli, path: &Path) -> Result<Outcome, CliError> {
    let p = Problem::load(path)?;
    let s = Settings::resolve(cli, &p);
    let (fields, c) = algebra(&p, &s)?;
    let mut out = String::new();
    write_algebra(&mut out, "source", &fields, &c, s.output);
    Ok(Outcome { stdout: out, code: EXIT_OK })
}

fn param_values(a: &Sde, b: &Sde) -> Result<Vec<f64>, CliError> {
    let mut v: Vec<f64> = bound_params(a)?.into_values().chain(bound_params(b)?.into_values()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

fn matching(cli: &Cli, source: &Path, target: &Path) -> Result<Outcome, CliError> {
    let (ps, pt) = (Problem::load(source)?, Problem::load(target)?);
    let s = Settings::resolve(cli, &ps);
    let st = Settings::resolve(cli, &pt);
    let (fs, cs) = algebra(&ps, &s)?;
    let (ft, ct) = algebra(&pt, &st)?;
    let mut out = String::new();
    write_algebra(&mut out, "source", &fs, &cs, s.output);
    write_algebra(&mut out, "target", &ft, &ct, s.output);
    let opts =
        MatchOptions { restarts: s.restarts, seed: s.solver.seed, params: param_values(&ps.sde, &pt.sde)?, tol: 1e-8 };
    match match_basis(&cs, &ct, &opts) {
        MatchOutcome::NoMatch { best_residual, reason } => {
            write_no_match(&mut out, &reason, best_residual, s.output);
            Ok(Outcome { stdout: out, code: EXIT_NO_MATCH })
        }
        MatchOutcome::Matched { best, alternatives } => {
            match s.output {
                Output::Text => {
                    let _ = writeln!(out, "change of basis (residual {}):", small(best.residual));
                    for line in best.to_string().lines() {
                        let _ = writeln!(out, "  {line}");
                    }
                    if !alternatives.is_empty() {
                        let _ = writeln!(out, "alternatives: {}", alternatives.len());
                    }
                }
                Output::Kv => {
                    let _ = writeln!(out, "match = true");
                    let _ = writeln!(out, "match.residual = {:e}", best.residual);
                    for i in 0..best.a.nrows() {
                        for j in 0..best.a.ncols() {
                            let _ = writeln!(out, "match.a.{}.{} = {}", i + 1, j + 1, exact(best.a[(i, j)]));
                        }
                    }
                    let _ = writeln!(out, "match.alternatives = {}", alternatives.len());
                }
            }
            Ok(Outcome { stdout: out, code: EXIT_OK })
        }
    }
}

fn write_no_match(out: &mut String, reason: &str, best: f64, format: Output) {
    match format {
        Output::Text => {
            let _ = writeln!(out, "no match: {reason}");
            if best.is_finite() {
                let _ = writeln!(out, "best residual: {best:.3e}");
            }
        }
        Output::Kv => {
            let _ = writeln!(out, "match = false");
            let _ = writeln!(out, "match.reason = {reason}");
            let _ = writeln!(out, "match.best_residual = {best:e}");
        }
    }
}

fn find(cli: &Cli, source: &Path, target: &Path) -> Result<Outcome, CliError> {
    let (ps, pt) = (Problem::load(source)?, Problem::load(target)?);
    let map_ansatz = ps.map_ansatz()?;
    let s = Settings::resolve(cli, &ps);
    let st = Settings::resolve(cli, &pt);
    let (fs, _) = algebra(&ps, &s)?;
    let (ft, _) = algebra(&pt, &st)?;
    let opts = FindMapOptions {
        map: MapOptions {
            points: s.solver.points,
            window: s.solver.window,
            seed: s.solver.seed,
            verify_tol: s.solver.verify_tol,
            ..MapOptions::default()
        },
        restarts: s.restarts,
        ..FindMapOptions::default()
    };
    let mut out = String::new();
    let r = match find_map(&ps.sde, &fs, &pt.sde, &ft, &map_ansatz, &opts) {
        Ok(r) => r,
        Err(FindMapError::NoMatch { best_residual, reason }) => {
            write_no_match(&mut out, &reason, best_residual, s.output);
            return Ok(Outcome { stdout: out, code: EXIT_NO_MATCH });
        }
        Err(e) => return Err(CliError::Solver(e.to_string())),
    };
    write_algebra(&mut out, "source", &fs, &r.source_constants, s.output);
    write_algebra(&mut out, "target", &ft, &r.target_constants, s.output);
    let report = verify_map(&ps.sde, &pt.sde, &r.solution.map, &s.mc)?;
    match s.output {
        Output::Text => {
            let _ = writeln!(out, "change of basis:");
            for line in r.matching.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
            let _ = writeln!(out, "map:");
            for line in r.solution.map.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
            let _ = writeln!(out, "pair residual: {}", small(r.solution.residual));
            let _ = writeln!(out, "transport residual: {}", small(r.transport));
            if r.solution.gauge_dim > 0 {
                let _ = writeln!(out, "free gauge directions: {} (minimum-norm choice shown)", r.solution.gauge_dim);
            }
            out.push_str(&report.to_string());
        }
        Output::Kv => {
            let _ = writeln!(out, "mu1 = {}", r.solution.map.mu1);
            let _ = writeln!(out, "mu2 = {}", r.solution.map.mu2);
            let _ = writeln!(out, "pair_residual = {:e}", r.solution.residual);
            let _ = writeln!(out, "transport_residual = {:e}", r.transport);
            let _ = writeln!(out, "gauge_dim = {}", r.solution.gauge_dim);
            out.push_str(&report.to_kv());
        }
    }
    let code = if r.transport < 1e-8 && report.pass { EXIT_OK } else { EXIT_VERIFY };
    Ok(Outcome { stdout: out, code })
}

fn verify_generator(cli: &Cli, path: &Path, generator: &Path, eps: Option<f64>) -> Result<Outcome, CliError> {
    let p = Problem::load(path)?;
    let s = Settings::resolve(cli, &p);
    let v = load_generator(generator, &p.symbols())?;
    let params = bound_params(&p.sde)?;
    let mode = effective_mode(&p.sde, s.mode)?;
    let ds = match mode {
        Mode::Classical => classical_system(&p.sde, &v),
        Mode::Stochastic => stochastic_system(&p.sde, &v),
        Mode::DeterministicOde => deterministic_ode_system(&p.sde, &v),
    }
    .map_err(|e| CliError::Parse(e.to_string()))?;
    let residual = residual_check(&ds, &params, &s.residual)?;
    let flowable = v.is_deterministic() && !v.tau.depends_on("x");
    let mc = if flowable { Some(verify_symmetry(&p.sde, &v, eps.unwrap_or(s.eps), &s.mc)?) } else { None };
    let mut out = String::new();
    match s.output {
        Output::Text => {
            let _ = writeln!(out, "generator: {v}");
            let _ = writeln!(out, "{residual}");
            match &mc {
                Some(r) => out.push_str(&r.to_string()),
                None => {
                    let _ = writeln!(out, "flow check skipped: generator has a stochastic part");
                }
            }
        }
        Output::Kv => {
            let _ = writeln!(out, "generator = {v}");
            out.push_str(&residual.to_kv());
            if let Some(r) = &mc {
                out.push_str(&r.to_kv());
            }
        }
    }
    let pass = residual.pass && mc.as_ref().is_none_or(|r| r.pass);
    Ok(Outcome { stdout: out, code: if pass { EXIT_OK } else { EXIT_VERIFY } })
}

fn verify_transform(cli: &Cli, path: &Path, map: &Path) -> Result<Outcome, CliError> {
    let p = Problem::load(path)?;
    let s = Settings::resolve(cli, &p);
    let mu: TransformMap = load_map(map, &p.symbols())?;
    let target = p.target()?;
    let mut out = String::new();
    let report = match verify_map(&p.sde, target, &mu, &s.mc) {
        Ok(r) => r,
        Err(e @ (NumericError::NotMonotone { .. } | NumericError::UnsupportedField(_))) => {
            let _ = writeln!(out, "{mu}\nmap rejected: {e}");
            return Ok(Outcome { stdout: out, code: EXIT_VERIFY });
        }
        Err(e) => return Err(e.into()),
    };
    match s.output {
        Output::Text => {
            let _ = writeln!(out, "{mu}");
            out.push_str(&report.to_string());
        }
        Output::Kv => {
            let _ = writeln!(out, "mu1 = {}", mu.mu1);
            let _ = writeln!(out, "mu2 = {}", mu.mu2);
            out.push_str(&report.to_kv());
        }
    }
    Ok(Outcome { stdout: out, code: if report.pass { EXIT_OK } else { EXIT_VERIFY } })
}
