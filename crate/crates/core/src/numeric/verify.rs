//! Residual and Monte-Carlo certificates for symmetries and maps.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use super::{euler_maruyama, euler_maruyama_on_grid, ks_two_sample, FlowMap, KsResult, NumericError, PathEnsemble};
use crate::ansatz::{bound_params, sample_linear_system};
use crate::determining::{DeterminingSystem, Sde, VectorField};
use crate::grid::{PointSampler, Window};
use crate::transform::TransformMap;

/// Number of marginal comparisons per run.
pub const CHECKPOINTS: usize = 4;
/// Per-checkpoint KS p-value threshold.
pub const P_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
pub struct ResidualOptions {
    pub n_points: usize,
    pub window: Window,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { n_points: 200, window: Window::default(), tol: 1e-8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub max_abs: f64,
    /// Row of the system where `max_abs` was attained.
    pub worst_row: usize,
    /// Max |residual| of each row.
    pub row_max: Vec<f64>,
    pub n_points: usize,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "check = residual\npass = {}\nmax_abs = {:e}\nworst_row = {}\nn_points = {}\ntol = {:e}\n",
            self.pass,
            self.max_abs,
            self.worst_row + 1,
            self.n_points,
            self.tol
        );
        for (i, m) in self.row_max.iter().enumerate() {
            let _ = writeln!(out, "row.{}.max_abs = {m:e}", i + 1);
        }
        out
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "residual check {}: max |residual| = {:.3e} (row {}) over {} points, tol {:e}",
            if self.pass { "passed" } else { "FAILED" },
            self.max_abs,
            self.worst_row + 1,
            self.n_points,
            self.tol
        )
    }
}

/// Evaluate a concrete determining system at quasi-random points.
///
/// Points where a residual is undefined are rejected and redrawn.
pub fn residual_check(
    ds: &DeterminingSystem,
    params: &HashMap<String, f64>,
    opts: &ResidualOptions,
) -> Result<ResidualReport, NumericError> {
    let ds = ds.clone().with_unknowns(Vec::new());
    let rows = ds.residuals.len().max(1);
    let sys = sample_linear_system(&ds, params, PointSampler::new(opts.window, opts.seed), opts.n_points)?;
    let mut row_max = vec![0.0f64; ds.residuals.len()];
    for (i, v) in sys.rhs.iter().enumerate() {
        row_max[i % rows] = row_max[i % rows].max(v.abs());
    }
    let (worst_row, max_abs) =
        row_max.iter().copied().enumerate().fold((0, 0.0), |best, (i, m)| if m > best.1 { (i, m) } else { best });
    Ok(ResidualReport { max_abs, worst_row, row_max, n_points: opts.n_points, tol: opts.tol, pass: max_abs < opts.tol })
}

/// Simulation settings shared by both Monte-Carlo checks.
#[derive(Clone, Copy, Debug)]
pub struct McSettings {
    pub x0: f64,
    pub n_paths: usize,
    pub h: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { x0: 0.0, n_paths: 2000, h: 1e-3, steps: 1000, seed: 0 }
    }
}

impl McSettings {
    fn checkpoints(&self) -> Result<Vec<usize>, NumericError> {
        if self.steps < CHECKPOINTS {
            return Err(NumericError::Settings(format!("need at least {CHECKPOINTS} steps, got {}", self.steps)));
        }
        Ok((1..=CHECKPOINTS).map(|j| j * self.steps / CHECKPOINTS).collect())
    }

    /// Seed of the comparison ensemble; never equal to the source seed.
    pub fn fresh_seed(&self) -> u64 {
        let z = self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        let z = z ^ (z >> 31);
        if z == self.seed {
            z ^ 1
        } else {
            z
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub index: usize,
    /// Source time `t_k`.
    pub time: f64,
    /// Time of the comparison marginal on the image grid.
    pub image_time: f64,
    pub ks: KsResult,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    /// `"symmetry"` or `"map"`.
    pub kind: &'static str,
    pub n_paths: usize,
    pub steps: usize,
    pub h: f64,
    pub seed: u64,
    pub fresh_seed: u64,
    pub aborted_source: usize,
    pub aborted_fresh: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub pass: bool,
}

impl VerifyReport {
    fn new(
        kind: &'static str,
        s: &McSettings,
        src: &PathEnsemble,
        fresh: &PathEnsemble,
        checkpoints: Vec<Checkpoint>,
    ) -> Self {
        VerifyReport {
            kind,
            n_paths: s.n_paths,
            steps: s.steps,
            h: s.h,
            seed: s.seed,
            fresh_seed: fresh.seed,
            aborted_source: src.aborted_count(),
            aborted_fresh: fresh.aborted_count(),
            pass: checkpoints.iter().all(|c| c.pass),
            checkpoints,
        }
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "check = {}", self.kind);
        let _ = writeln!(out, "pass = {}", self.pass);
        let _ = writeln!(out, "n_paths = {}", self.n_paths);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "h = {:e}", self.h);
        let _ = writeln!(out, "seed.source = {}", self.seed);
        let _ = writeln!(out, "seed.fresh = {}", self.fresh_seed);
        let _ = writeln!(out, "aborted.source = {}", self.aborted_source);
        let _ = writeln!(out, "aborted.fresh = {}", self.aborted_fresh);
        let _ = writeln!(out, "p_threshold = {P_THRESHOLD}");
        for (j, c) in self.checkpoints.iter().enumerate() {
            let j = j + 1;
            let _ = writeln!(out, "checkpoint.{j}.index = {}", c.index);
            let _ = writeln!(out, "checkpoint.{j}.time = {}", c.time);
            let _ = writeln!(out, "checkpoint.{j}.image_time = {}", c.image_time);
            let _ = writeln!(out, "checkpoint.{j}.n1 = {}", c.ks.n1);
            let _ = writeln!(out, "checkpoint.{j}.n2 = {}", c.ks.n2);
            let _ = writeln!(out, "checkpoint.{j}.ks = {:.6}", c.ks.statistic);
            let _ = writeln!(out, "checkpoint.{j}.p = {:.6}", c.ks.p_value);
            let _ = writeln!(out, "checkpoint.{j}.pass = {}", c.pass);
        }
        out
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} check {} ({} paths, {} steps of {}, seeds {}/{})",
            self.kind,
            if self.pass { "passed" } else { "FAILED" },
            self.n_paths,
            self.steps,
            self.h,
            self.seed,
            self.fresh_seed
        )?;
        if self.aborted_source + self.aborted_fresh > 0 {
            writeln!(f, "  aborted paths: {} source, {} fresh", self.aborted_source, self.aborted_fresh)?;
        }
        for c in &self.checkpoints {
            writeln!(
                f,
                "  t = {:<8} -> {:<10.6} KS = {:.4}  p = {:.4}  {}",
                c.time,
                c.image_time,
                c.ks.statistic,
                c.ks.p_value,
                if c.pass { "ok" } else { "reject" }
            )?;
        }
        Ok(())
    }
}

fn compare(index: usize, time: f64, image_time: f64, a: &[f64], b: &[f64]) -> Checkpoint {
    let a: Vec<f64> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let ks = ks_two_sample(&a, b);
    Checkpoint { index, time, image_time, ks, pass: ks.p_value > P_THRESHOLD }
}

/// Push simulated paths through the flow of `v` and compare with fresh
/// paths of the same equation started from `F_ε(0, x₀)` on the image grid.
///
/// Only deterministic generators with `τ = τ(t)` are supported.
pub fn verify_symmetry(sde: &Sde, v: &VectorField, eps: f64, s: &McSettings) -> Result<VerifyReport, NumericError> {
    let params = bound_params(sde)?;
    let nodes = s.checkpoints()?;
    let flow = FlowMap::new(v, eps, &params)?;
    let src = euler_maruyama(sde, s.x0, s.h, s.steps, s.n_paths, s.seed)?;
    let (image_nodes, rows) = flow.transform_nodes(&src, &nodes)?;
    let image = src.times.iter().map(|t| flow.beta(*t)).collect::<Result<Vec<_>, _>>()?;
    let (_, x0) = flow.apply_checked(src.times[0], s.x0)?;
    let fresh = euler_maruyama_on_grid(sde, x0, image, s.n_paths, s.fresh_seed())?;
    let checkpoints = nodes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            compare(k, src.times[k], image_nodes[j], &col, &fresh.marginal(k))
        })
        .collect();
    Ok(VerifyReport::new("symmetry", s, &src, &fresh, checkpoints))
}

/// Map simulated source paths by `μ` and compare with target paths
/// simulated from `μ₂(0, x₀)` on the grid `s_k = μ₁(t_k)`.
///
/// Parameters of `μ` are looked up in both equations.
pub fn verify_map(src: &Sde, tgt: &Sde, mu: &TransformMap, s: &McSettings) -> Result<VerifyReport, NumericError> {
    let mut params = bound_params(src)?;
    for (k, v) in bound_params(tgt)? {
        match params.get(&k) {
            Some(w) if *w != v => {
                return Err(NumericError::Settings(format!("parameter {k} is {w} in the source and {v} in the target")))
            }
            _ => {
                params.insert(k, v);
            }
        }
    }
    let nodes = s.checkpoints()?;
    if mu.mu1.simplify().depends_on("x") {
        return Err(NumericError::UnsupportedField(format!("mu1 = {} depends on x", mu.mu1)));
    }
    let mu1 = mu.mu1.compile_with_params(&params)?;
    let dmu1 = mu.mu1.diff("t").simplify().compile_with_params(&params)?;
    let mu2 = mu.mu2.compile_with_params(&params)?;
    let times: Vec<f64> = (0..=s.steps).map(|k| k as f64 * s.h).collect();
    let mut image = Vec::with_capacity(times.len());
    for &t in &times {
        let d = dmu1.eval(&[t, 0.0])?;
        if !(d > 0.0) {
            return Err(NumericError::NotMonotone { t, value: d });
        }
        image.push(mu1.eval(&[t, 0.0])?);
    }
    let ens = euler_maruyama(src, s.x0, s.h, s.steps, s.n_paths, s.seed)?;
    let y0 = mu2.eval(&[times[0], s.x0])?;
    let fresh = euler_maruyama_on_grid(tgt, y0, image.clone(), s.n_paths, s.fresh_seed())?;
    let mut checkpoints = Vec::with_capacity(nodes.len());
    for &k in &nodes {
        let mapped: Vec<f64> = ens.marginal(k).iter().map(|x| mu2.eval(&[times[k], *x]).unwrap_or(f64::NAN)).collect();
        checkpoints.push(compare(k, times[k], image[k], &mapped, &fresh.marginal(k)));
    }
    Ok(VerifyReport::new("map", s, &ens, &fresh, checkpoints))
}
