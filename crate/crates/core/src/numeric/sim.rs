//! Euler–Maruyama path ensembles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::NumericError;
use crate::ansatz::bound_params;
use crate::determining::Sde;
use crate::expr::CompiledExpr;

/// `n_paths` sample paths on a shared time grid.
///
/// Paths that hit a singularity or leave the reals are flagged as aborted;
/// their states from that step on are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub seed: u64,
    n_paths: usize,
    states: Vec<f64>,
    increments: Vec<f64>,
    aborted: Vec<bool>,
}

impl PathEnsemble {
    pub(crate) fn from_parts(
        times: Vec<f64>,
        seed: u64,
        states: Vec<f64>,
        increments: Vec<f64>,
        aborted: Vec<bool>,
    ) -> Self {
        let n_paths = aborted.len();
        debug_assert_eq!(states.len(), n_paths * times.len());
        debug_assert_eq!(increments.len(), n_paths * times.len().saturating_sub(1));
        PathEnsemble { times, seed, n_paths, states, increments, aborted }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of steps `K`; each path holds `K + 1` states.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.times.len();
        &self.states[i * n..(i + 1) * n]
    }

    /// Wiener increments `ΔW_k` that drove path `i`.
    pub fn increments(&self, i: usize) -> &[f64] {
        let k = self.steps();
        &self.increments[i * k..(i + 1) * k]
    }

    pub fn is_aborted(&self, i: usize) -> bool {
        self.aborted[i]
    }

    pub fn aborted_count(&self) -> usize {
        self.aborted.iter().filter(|a| **a).count()
    }

    /// States at grid index `k` over the paths that were not aborted.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).filter(|&i| !self.aborted[i]).map(|i| self.path(i)[k]).collect()
    }
}

struct Coefficients {
    drift: CompiledExpr,
    diffusion: CompiledExpr,
}

impl Coefficients {
    fn new(sde: &Sde, params: &HashMap<String, f64>) -> Result<Self, NumericError> {
        Ok(Coefficients {
            drift: sde.drift.simplify().compile_with_params(params)?,
            diffusion: sde.diffusion.simplify().compile_with_params(params)?,
        })
    }
}

/// Simulate on the uniform grid `t_k = k h`, `k = 0..=K`.
pub fn euler_maruyama(
    sde: &Sde,
    x0: f64,
    h: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, NumericError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(NumericError::Settings(format!("step h = {h} must be positive")));
    }
    let times = (0..=steps).map(|k| k as f64 * h).collect();
    euler_maruyama_on_grid(sde, x0, times, n_paths, seed)
}

/// Simulate on an arbitrary strictly increasing grid, starting from `x0`
/// at `times[0]`.
///
/// Increments for path `i` come from ChaCha8 stream `i` of `seed`, drawn in
/// step order, so the ensemble does not depend on thread scheduling.
pub fn euler_maruyama_on_grid(
    sde: &Sde,
    x0: f64,
    times: Vec<f64>,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, NumericError> {
    if times.is_empty() || n_paths == 0 {
        return Err(NumericError::Settings("need at least one grid point and one path".into()));
    }
    if !x0.is_finite() {
        return Err(NumericError::Settings(format!("initial state {x0} is not finite")));
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(NumericError::GridNotIncreasing(k + 1));
    }
    let params = bound_params(sde)?;
    let coef = Coefficients::new(sde, &params)?;
    let steps = times.len() - 1;
    let idx: Vec<usize> = (0..n_paths).collect();
    let runs = crate::par_map(&idx, |&i| simulate_path(&coef, x0, &times, seed, i as u64));

    let mut states = Vec::with_capacity(n_paths * (steps + 1));
    let mut increments = Vec::with_capacity(n_paths * steps);
    let mut aborted = Vec::with_capacity(n_paths);
    for (xs, dw, ok) in runs {
        states.extend(xs);
        increments.extend(dw);
        aborted.push(!ok);
    }
    if aborted.iter().all(|a| *a) {
        return Err(NumericError::AllPathsAborted(n_paths));
    }
    Ok(PathEnsemble::from_parts(times, seed, states, increments, aborted))
}

fn simulate_path(coef: &Coefficients, x0: f64, times: &[f64], seed: u64, stream: u64) -> (Vec<f64>, Vec<f64>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = times.len();
    let mut xs = Vec::with_capacity(n);
    let mut dws = Vec::with_capacity(n - 1);
    let mut stack = Vec::new();
    let mut x = x0;
    xs.push(x);
    let mut alive = true;
    for k in 0..n - 1 {
        let dt = times[k + 1] - times[k];
        let z: f64 = rng.sample(StandardNormal);
        let dw = z * dt.sqrt();
        dws.push(dw);
        if alive {
            let args = [times[k], x];
            let step = coef
                .drift
                .eval_in(&args, &mut stack)
                .and_then(|f| coef.diffusion.eval_in(&args, &mut stack).map(|g| (f, g)));
            match step {
                Ok((f, g)) => {
                    x += f * dt + g * dw;
                    if !x.is_finite() {
                        alive = false;
                    }
                }
                Err(_) => alive = false,
            }
        }
        xs.push(if alive { x } else { f64::NAN });
    }
    (xs, dws, alive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_integrator_is_exact() {
        let sde = Sde::parse("1", "0", &[]).unwrap();
        let ens = euler_maruyama(&sde, 0.0, 0.25, 8, 3, 1).unwrap();
        for i in 0..3 {
            for (k, x) in ens.path(i).iter().enumerate() {
                assert!((x - ens.times[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let sde = Sde::parse("-x", "1", &[]).unwrap();
        let a = euler_maruyama(&sde, 0.5, 0.01, 50, 16, 9).unwrap();
        let b = euler_maruyama(&sde, 0.5, 0.01, 50, 16, 9).unwrap();
        let c = euler_maruyama(&sde, 0.5, 0.01, 50, 16, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path(0), c.path(0));
        // Each increment really drove its step.
        let (p, dw) = (a.path(3), a.increments(3));
        for k in 0..50 {
            let expected = p[k] - p[k] * 0.01 + dw[k];
            assert!((p[k + 1] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_paths_are_flagged() {
        // log(x) is undefined once a path crosses zero.
        let sde = Sde::parse("0", "1 + log(x)/1000", &[]).unwrap();
        let ens = euler_maruyama(&sde, 0.05, 0.01, 200, 64, 2).unwrap();
        assert!(ens.aborted_count() > 0);
        assert_eq!(ens.marginal(200).len(), 64 - ens.aborted_count());
        let sde = Sde::parse("1/x", "0", &[]).unwrap();
        assert_eq!(euler_maruyama(&sde, 0.0, 0.1, 3, 4, 0), Err(NumericError::AllPathsAborted(4)));
    }

    #[test]
    fn rejects_bad_settings() {
        let sde = Sde::parse("0", "1", &[]).unwrap();
        assert!(matches!(euler_maruyama(&sde, 0.0, 0.0, 3, 4, 0), Err(NumericError::Settings(_))));
        assert_eq!(
            euler_maruyama_on_grid(&sde, 0.0, vec![0.0, 0.5, 0.5], 4, 0),
            Err(NumericError::GridNotIncreasing(2))
        );
    }
}
